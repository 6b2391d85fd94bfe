//! Plug-in entropy and mutual information over discrete distributions, and
//! the per-node minimal privacy risk of a split.
//!
//! Risk model: draw a patch `U` uniformly from the whole patch set. For an
//! honest node `i`, its private view is `S_i(U)` = the patch's coordinate on
//! the chosen axis when node `i` owns `U`, and a blank symbol otherwise. The
//! colluding remaining nodes see `V(U)` = (coordinate, decrypted estimate)
//! when they own `U`, and the blank otherwise. The minimal risk of node `i`
//! is `I(S_i; V)` in bits, computed exactly from counts.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};
use crate::grid::PatchSet;
use crate::labelcrypt::CoordMatrix;
use crate::splitting::{Partition, SplitStrategy};

const SUM_TOLERANCE: f64 = 1e-9;

/// Shannon entropy in bits of nonnegative weights, normalised by their sum.
/// Zero weights contribute nothing. Weights are summed in sorted order so the
/// result does not depend on iteration order.
pub fn entropy_of_weights(weights: &[f64]) -> f64 {
    let mut w: Vec<f64> = weights.iter().copied().filter(|&x| x > 0.0).collect();
    w.sort_by(f64::total_cmp);
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h: f64 = w
        .iter()
        .map(|&x| {
            let p = x / total;
            -p * p.log2()
        })
        .sum();
    h + 0.0
}

/// Entropy in bits of integer counts; exact rationals until the logarithm.
pub fn entropy_of_counts(counts: &[u64]) -> f64 {
    let mut c: Vec<u64> = counts.iter().copied().filter(|&x| x > 0).collect();
    c.sort_unstable();
    let total: u64 = c.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    let h: f64 = c
        .iter()
        .map(|&x| {
            let p = x as f64 / t;
            -p * p.log2()
        })
        .sum();
    // a single outcome gives -0.0
    h + 0.0
}

fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Invalid("probabilities must be finite and nonnegative".into()));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::Invalid(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// Entropy of a raw probability vector; errors unless it sums to one.
pub fn entropy_of_probs(probs: &[f64]) -> Result<f64> {
    check_probs(probs)?;
    Ok(entropy_of_weights(probs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist<T> {
    support: Vec<T>,
    probs: Vec<f64>,
}

impl<T: Eq + Hash + Clone> DiscreteDist<T> {
    pub fn new(support: Vec<T>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(Error::Invalid("support and probabilities differ in length".into()));
        }
        let mut seen = HashMap::with_capacity(support.len());
        for s in &support {
            if seen.insert(s.clone(), ()).is_some() {
                return Err(Error::Invalid("support entries must be unique".into()));
            }
        }
        check_probs(&probs)?;
        Ok(DiscreteDist { support, probs })
    }

    /// Empirical distribution of a sample, in first-seen order.
    pub fn from_samples(samples: impl IntoIterator<Item = T>) -> Result<Self> {
        let mut index: HashMap<T, usize> = HashMap::new();
        let mut support = Vec::new();
        let mut counts: Vec<u64> = Vec::new();
        for s in samples {
            match index.get(&s) {
                Some(&i) => counts[i] += 1,
                None => {
                    index.insert(s.clone(), support.len());
                    support.push(s);
                    counts.push(1);
                }
            }
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Invalid("empty sample".into()));
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(DiscreteDist { support, probs })
    }

    pub fn support(&self) -> &[T] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

pub fn entropy<T>(d: &DiscreteDist<T>) -> f64 {
    entropy_of_weights(&d.probs)
}

/// Joint distribution of a pair `(S, Z)` stored as nonnegative weights. Built
/// from samples the weights are integer counts, so marginals stay exact.
#[derive(Debug, Clone)]
pub struct JointDist<S, Z> {
    cells: HashMap<(S, Z), f64>,
}

impl<S: Eq + Hash + Clone, Z: Eq + Hash + Clone> JointDist<S, Z> {
    pub fn new(table: impl IntoIterator<Item = ((S, Z), f64)>) -> Result<Self> {
        let mut cells = HashMap::new();
        for (k, p) in table {
            *cells.entry(k).or_insert(0.0) += p;
        }
        let probs: Vec<f64> = cells.values().copied().collect();
        check_probs(&probs)?;
        Ok(JointDist { cells })
    }

    pub fn from_samples(samples: impl IntoIterator<Item = (S, Z)>) -> Result<Self> {
        let mut cells = HashMap::new();
        for k in samples {
            *cells.entry(k).or_insert(0.0) += 1.0;
        }
        if cells.is_empty() {
            return Err(Error::Invalid("empty sample".into()));
        }
        Ok(JointDist { cells })
    }

    fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let mut s: HashMap<&S, f64> = HashMap::new();
        let mut z: HashMap<&Z, f64> = HashMap::new();
        for ((a, b), &w) in &self.cells {
            *s.entry(a).or_insert(0.0) += w;
            *z.entry(b).or_insert(0.0) += w;
        }
        (s.into_values().collect(), z.into_values().collect())
    }

    pub fn entropy_s(&self) -> f64 {
        entropy_of_weights(&self.marginals().0)
    }

    pub fn entropy_z(&self) -> f64 {
        entropy_of_weights(&self.marginals().1)
    }

    pub fn entropy_joint(&self) -> f64 {
        let w: Vec<f64> = self.cells.values().copied().collect();
        entropy_of_weights(&w)
    }
}

/// `I(S;Z) = H(S) + H(Z) - H(S,Z)`, clamped into `[0, min(H(S), H(Z))]`.
pub fn mutual_information<S, Z>(j: &JointDist<S, Z>) -> f64
where
    S: Eq + Hash + Clone,
    Z: Eq + Hash + Clone,
{
    let (ms, mz) = j.marginals();
    let hs = entropy_of_weights(&ms);
    let hz = entropy_of_weights(&mz);
    let w: Vec<f64> = j.cells.values().copied().collect();
    let hsz = entropy_of_weights(&w);
    clamp_mi(hs, hz, hsz)
}

pub(crate) fn clamp_mi(hs: f64, hz: f64, hsz: f64) -> f64 {
    (hs + hz - hsz).max(0.0).min(hs.min(hz)) + 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

fn f64_key(v: f64) -> u64 {
    // collapse -0.0 onto 0.0
    (v + 0.0).to_bits()
}

/// Per-node minimal privacy risk on one axis, in bits.
///
/// `decrypted[c]` holds the reconstructed coordinates of class `c`, rows in
/// the order of `part.classes()[c]`.
pub fn min_privacy_risk(
    part: &Partition,
    ps: &PatchSet,
    decrypted: &[CoordMatrix],
    axis: Axis,
) -> Result<Vec<f64>> {
    check_alignment(part, ps, decrypted)?;
    let n_classes = part.n_classes();
    if n_classes == 1 {
        return Ok(vec![0.0]);
    }
    let total = part.n_items() as u64;
    let a = axis.index();

    // per class: counts of own coordinate values and of (coordinate, estimate) pairs
    let mut own: Vec<HashMap<u64, u64>> = vec![HashMap::new(); n_classes];
    let mut pairs: Vec<HashMap<(u64, u64), u64>> = vec![HashMap::new(); n_classes];
    let mut all_pairs: HashMap<(u64, u64), u64> = HashMap::new();
    for (c, class) in part.classes().iter().enumerate() {
        let est = &decrypted[c];
        for (row, &v) in class.iter().enumerate() {
            let rec = ps.records()[v];
            let coord = if a == 0 { rec.x } else { rec.y };
            let key = (coord, f64_key(est.row(row)[a]));
            *own[c].entry(coord).or_insert(0) += 1;
            *pairs[c].entry(key).or_insert(0) += 1;
            *all_pairs.entry(key).or_insert(0) += 1;
        }
    }

    let risks = crate::par::map_range(n_classes, |i| {
        let n_i = part.classes()[i].len() as u64;
        let own_counts: Vec<u64> = own[i].values().copied().collect();
        let outside: Vec<u64> = all_pairs
            .iter()
            .map(|(k, &cnt)| cnt - pairs[i].get(k).copied().unwrap_or(0))
            .filter(|&c| c > 0)
            .collect();

        let mut s_counts = own_counts.clone();
        s_counts.push(total - n_i);
        let mut v_counts = outside.clone();
        v_counts.push(n_i);
        let mut joint = own_counts;
        joint.extend_from_slice(&outside);

        clamp_mi(
            entropy_of_counts(&s_counts),
            entropy_of_counts(&v_counts),
            entropy_of_counts(&joint),
        )
    });
    Ok(risks)
}

fn check_alignment(part: &Partition, ps: &PatchSet, decrypted: &[CoordMatrix]) -> Result<()> {
    if part.n_items() != ps.len() {
        return Err(Error::Invalid(format!(
            "partition covers {} patches, patch set has {}",
            part.n_items(),
            ps.len()
        )));
    }
    if decrypted.len() != part.n_classes() {
        return Err(Error::Invalid(format!(
            "{} decrypted classes for {} partition classes",
            decrypted.len(),
            part.n_classes()
        )));
    }
    for (c, (class, est)) in part.classes().iter().zip(decrypted).enumerate() {
        if class.len() != est.rows() {
            return Err(Error::Invalid(format!(
                "class {c}: {} patches but {} decrypted rows",
                class.len(),
                est.rows()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeRisk {
    pub node: usize,
    pub x: f64,
    pub y: f64,
}

/// Per-strategy summary: one row of the risk table.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub strategy: SplitStrategy,
    pub n: usize,
    pub per_node: Vec<NodeRisk>,
    pub mean_x: f64,
    pub std_x: f64,
    pub mean_y: f64,
    pub std_y: f64,
}

impl RiskReport {
    /// `mean_x + mean_y`, the per-strategy privacy objective.
    pub fn sum(&self) -> f64 {
        self.mean_x + self.mean_y
    }

    /// `strategy,N,rho_x_mean,rho_x_std,rho_y_mean,rho_y_std,rho_sum`
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.strategy.kind.name(),
            self.n,
            self.mean_x,
            self.std_x,
            self.mean_y,
            self.std_y,
            self.sum()
        )
    }
}

pub const RISK_HEADER: &str = "strategy,N,rho_x_mean,rho_x_std,rho_y_mean,rho_y_std,rho_sum";

fn mean_and_sample_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Arithmetic means and sample standard deviations across nodes.
pub fn average_min_risk(strategy: SplitStrategy, rho_x: &[f64], rho_y: &[f64]) -> Result<RiskReport> {
    if rho_x.is_empty() || rho_x.len() != rho_y.len() {
        return Err(Error::Invalid("need equal, nonempty per-node risk lists".into()));
    }
    let (mean_x, std_x) = mean_and_sample_std(rho_x);
    let (mean_y, std_y) = mean_and_sample_std(rho_y);
    let per_node = rho_x
        .iter()
        .zip(rho_y)
        .enumerate()
        .map(|(node, (&x, &y))| NodeRisk { node, x, y })
        .collect();
    Ok(RiskReport {
        strategy,
        n: rho_x.len(),
        per_node,
        mean_x,
        std_x,
        mean_y,
        std_y,
    })
}

/// Risk on both axes plus the summary row.
pub fn risk_report(part: &Partition, ps: &PatchSet, decrypted: &[CoordMatrix]) -> Result<RiskReport> {
    let x = min_privacy_risk(part, ps, decrypted, Axis::X)?;
    let y = min_privacy_risk(part, ps, decrypted, Axis::Y)?;
    average_min_risk(part.strategy(), &x, &y)
}
