//! Budget-constrained (cost, makespan) assignment per split and the
//! three-objective Pareto front across splits.
//!
//! Each sub-dataset goes to its own instance. For a fixed split the complete
//! (cost, makespan) frontier is found by the ε-constraint method: makespan can
//! only take the value of some pair's completion time, so sweeping ε over
//! those values and solving a minimum-cost perfect matching restricted to
//! pairs finishing within ε visits every nondominated point.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::grid::{build_graph, PatchSet};
use crate::hybridcloud::{cost_of, makespan_of, Assignment, InstanceSpec, TimeTable, Workload};
use crate::labelcrypt::{decrypt_aligned, encrypt_subset, output_utility, BasisFile, CoordMatrix, EncryptedLabelSet, SubDataset};
use crate::privrisk::{risk_report, RiskReport};
use crate::seed::derive_seed;
use crate::splitting::{split, Family, Partition, SplitStrategy};

/// Absolute tolerance on the privacy objective when comparing candidates.
pub const F1_TOLERANCE: f64 = 1e-9;

/// Minimum-cost assignment of every row to a distinct column by successive
/// shortest augmenting paths with vertex potentials. `cost` returns `None` for
/// forbidden pairs. Returns `None` when no perfect matching of the rows exists.
pub fn min_cost_matching<F>(rows: usize, cols: usize, cost: F) -> Option<Vec<usize>>
where
    F: Fn(usize, usize) -> Option<f64>,
{
    if rows == 0 {
        return Some(Vec::new());
    }
    if rows > cols {
        return None;
    }
    let inf = f64::INFINITY;
    // 1-based; column 0 is the virtual root of each augmenting search
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                if let Some(c) = cost(i0 - 1, j - 1) {
                    let cur = c - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if !delta.is_finite() {
                return None;
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![usize::MAX; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    Some(assign)
}

/// One nondominated (cost, makespan) assignment of a split.
#[derive(Debug, Clone, PartialEq)]
pub struct BiPoint {
    pub cost: f64,
    pub makespan: f64,
    pub assignment: Assignment,
}

fn matching_within(table: &TimeTable, eps: f64, fixed: &[usize]) -> Option<Vec<usize>> {
    let n = table.n_datasets();
    let m = table.n_instances();
    let start = fixed.len();
    let free_cols: Vec<usize> = (0..m).filter(|k| !fixed.contains(k)).collect();
    let rest = min_cost_matching(n - start, free_cols.len(), |r, c| {
        let (d, k) = (start + r, free_cols[c]);
        (table.total(d, k) <= eps).then(|| table.cost(d, k))
    })?;
    let mut full = fixed.to_vec();
    full.extend(rest.into_iter().map(|c| free_cols[c]));
    Some(full)
}

/// Lowers the assignment lexicographically without raising its cost or
/// exceeding `makespan`.
fn canonicalize(table: &TimeTable, makespan: f64, start: Vec<usize>) -> Vec<usize> {
    let m = table.n_instances();
    let score = |a: &[usize]| {
        let a = Assignment::new(a.to_vec(), m).expect("matching is injective");
        (cost_of(&a, table), makespan_of(&a, table))
    };
    let mut best = start;
    let (mut best_cost, _) = score(&best);
    for d in 0..best.len() {
        let prefix = &best[..d];
        let mut improved = None;
        for k in 0..best[d] {
            if prefix.contains(&k) || table.total(d, k) > makespan {
                continue;
            }
            let mut fixed = prefix.to_vec();
            fixed.push(k);
            if let Some(cand) = matching_within(table, makespan, &fixed) {
                let (c, ms) = score(&cand);
                if c <= best_cost && ms <= makespan {
                    improved = Some((cand, c));
                    break;
                }
            }
        }
        if let Some((cand, c)) = improved {
            best = cand;
            best_cost = c;
        }
    }
    best
}

/// Exact (cost, makespan) frontier of a time table under `budget`, sorted by
/// increasing cost. Equal points collapse to the lexicographically smallest
/// assignment.
pub fn solve_table(table: &TimeTable, budget: f64) -> Result<Vec<BiPoint>> {
    let n = table.n_datasets();
    let m = table.n_instances();
    if n > m {
        return Err(Error::Infeasible {
            datasets: n,
            instances: m,
        });
    }
    if budget.is_nan() || budget < 0.0 {
        return Err(Error::Invalid(format!("budget must be nonnegative, got {budget}")));
    }
    let mut eps: Vec<f64> = (0..n).flat_map(|d| (0..m).map(move |k| (d, k))).map(|(d, k)| table.total(d, k)).collect();
    eps.sort_by(f64::total_cmp);
    eps.dedup();

    let mut raw: Vec<BiPoint> = Vec::new();
    for &e in &eps {
        if let Some(mapping) = matching_within(table, e, &[]) {
            let a = Assignment::new(mapping, m).expect("matching is injective");
            let cost = cost_of(&a, table);
            if cost <= budget {
                let makespan = makespan_of(&a, table);
                raw.push(BiPoint {
                    cost,
                    makespan,
                    assignment: a,
                });
            }
        }
    }

    raw.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then(a.makespan.total_cmp(&b.makespan))
    });
    let mut front: Vec<BiPoint> = Vec::new();
    for p in raw {
        if front.last().is_none_or(|last| p.makespan < last.makespan) {
            front.push(p);
        }
    }

    Ok(front
        .into_iter()
        .map(|p| {
            let mapping = canonicalize(table, p.makespan, p.assignment.mapping().to_vec());
            let a = Assignment::new(mapping, m).expect("matching is injective");
            BiPoint {
                cost: cost_of(&a, table),
                makespan: makespan_of(&a, table),
                assignment: a,
            }
        })
        .collect())
}

/// Frontier for one split on the given catalog.
pub fn biobjective_solve(
    part: &Partition,
    catalog: &[InstanceSpec],
    workload: &Workload,
    budget: f64,
) -> Result<Vec<BiPoint>> {
    let table = TimeTable::build(&part.class_sizes(), catalog, workload);
    solve_table(&table, budget)
}

/// `a` dominates `b`: no worse everywhere and strictly better somewhere.
/// The privacy objective is compared with [`F1_TOLERANCE`].
pub fn dominates(a: [f64; 3], b: [f64; 3]) -> bool {
    let no_worse = a[0] <= b[0] + F1_TOLERANCE && a[1] <= b[1] && a[2] <= b[2];
    let better = a[0] < b[0] - F1_TOLERANCE || a[1] < b[1] || a[2] < b[2];
    no_worse && better
}

fn lex_cmp(a: &[f64; 3], b: &[f64; 3]) -> Ordering {
    a[0].total_cmp(&b[0])
        .then(a[1].total_cmp(&b[1]))
        .then(a[2].total_cmp(&b[2]))
}

/// Flags the nondominated points. Points are visited in lexicographic order
/// against a running archive, so dominators are usually seen first and the
/// archive stays small. Identical points are all kept.
pub fn pareto_mask(points: &[[f64; 3]]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| lex_cmp(&points[i], &points[j]).then(i.cmp(&j)));
    let mut archive: Vec<usize> = Vec::new();
    for i in order {
        let p = points[i];
        if archive.iter().any(|&a| dominates(points[a], p)) {
            continue;
        }
        archive.retain(|&a| !dominates(p, points[a]));
        archive.push(i);
    }
    let mut mask = vec![false; points.len()];
    for a in archive {
        mask[a] = true;
    }
    mask
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSolution {
    pub strategy: SplitStrategy,
    pub n: usize,
    /// Average minimal privacy risk, bits (x + y).
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub assignment: Assignment,
}

impl CandidateSolution {
    pub fn objectives(&self) -> [f64; 3] {
        [self.f1, self.f2, self.f3]
    }

    pub fn family(&self) -> Family {
        self.strategy.family()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParetoSet {
    pub solutions: Vec<CandidateSolution>,
}

/// Nondominated subset, in input order.
pub fn pareto_filter_3d(candidates: &[CandidateSolution]) -> ParetoSet {
    let pts: Vec<[f64; 3]> = candidates.iter().map(CandidateSolution::objectives).collect();
    let mask = pareto_mask(&pts);
    ParetoSet {
        solutions: candidates
            .iter()
            .zip(mask)
            .filter(|(_, keep)| *keep)
            .map(|(c, _)| c.clone())
            .collect(),
    }
}

/// Everything produced for one split strategy.
#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub strategy: SplitStrategy,
    pub partition: Partition,
    /// Per class: encrypted labels and the key to invert them.
    pub encrypted: Vec<(EncryptedLabelSet, BasisFile)>,
    /// Per class, rows in ascending patch id.
    pub decrypted: Vec<CoordMatrix>,
    /// Per class `I(Y; Ŷ)` on (x, y).
    pub utility: Vec<[f64; 2]>,
    pub risk: RiskReport,
    pub points: Vec<BiPoint>,
}

impl StrategyOutcome {
    pub fn candidates(&self) -> Vec<CandidateSolution> {
        self.points
            .iter()
            .map(|p| CandidateSolution {
                strategy: self.strategy,
                n: self.partition.n_classes(),
                f1: self.risk.sum(),
                f2: p.cost,
                f3: p.makespan,
                assignment: p.assignment.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub outcomes: Vec<StrategyOutcome>,
    /// All feasible candidates across strategies.
    pub pool: Vec<CandidateSolution>,
    pub front: ParetoSet,
}

impl PlanResult {
    /// Pareto flag per pool entry.
    pub fn pareto_flags(&self) -> Vec<bool> {
        let pts: Vec<[f64; 3]> = self.pool.iter().map(CandidateSolution::objectives).collect();
        pareto_mask(&pts)
    }

    pub fn pool_of(&self, family: Family) -> Vec<CandidateSolution> {
        self.pool.iter().filter(|c| c.family() == family).cloned().collect()
    }
}

#[derive(Debug, Clone)]
pub struct PlanConfig<'a> {
    pub catalog: &'a [InstanceSpec],
    pub workload: &'a Workload,
    pub budget: f64,
    /// Retained eigen components, 1 or 2.
    pub k: usize,
    pub seed: u64,
}

/// A split with its encrypted, decrypted and scored classes.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub partition: Partition,
    pub encrypted: Vec<(EncryptedLabelSet, BasisFile)>,
    pub decrypted: Vec<CoordMatrix>,
    pub utility: Vec<[f64; 2]>,
    pub risk: RiskReport,
}

/// Split, encrypt and score one strategy, without scheduling.
pub fn prepare_strategy(
    ps: &PatchSet,
    graph: &crate::grid::AdjacencyGraph,
    strategy: SplitStrategy,
    k: usize,
    seed: u64,
) -> Result<Prepared> {
    let label = strategy.label();
    let partition = split(ps, graph, strategy, derive_seed(seed, "split", &label))?;
    let classes = partition.classes();
    let per_class = crate::par::map_range(classes.len(), |c| -> Result<_> {
        let ids = &classes[c];
        let sub = SubDataset::from_patches(ps, ids);
        let class_seed = derive_seed(seed, "encrypt", &format!("{label}/{c}"));
        let (enc, key) = encrypt_subset(&sub, k, class_seed)?;
        let dec = decrypt_aligned(&enc, &key.basis, &key.stats, ids)?;
        let util = output_utility(&sub.coords, &dec)?;
        Ok(((enc, key), dec, util))
    });
    let mut encrypted = Vec::with_capacity(classes.len());
    let mut decrypted = Vec::with_capacity(classes.len());
    let mut utility = Vec::with_capacity(classes.len());
    for r in per_class {
        let (e, d, u) = r?;
        encrypted.push(e);
        decrypted.push(d);
        utility.push(u);
    }
    let risk = risk_report(&partition, ps, &decrypted)?;
    Ok(Prepared {
        partition,
        encrypted,
        decrypted,
        utility,
        risk,
    })
}

/// Runs every strategy end to end and extracts the cross-strategy front.
pub fn plan(strategies: &[SplitStrategy], ps: &PatchSet, cfg: &PlanConfig<'_>) -> Result<PlanResult> {
    if strategies.is_empty() {
        return Err(Error::Invalid("no split strategies given".into()));
    }
    cfg.workload.validate()?;
    let graph = build_graph(ps);
    let outcomes = crate::par::map(strategies, |&strategy| -> Result<StrategyOutcome> {
        let Prepared {
            partition,
            encrypted,
            decrypted,
            utility,
            risk,
        } = prepare_strategy(ps, &graph, strategy, cfg.k, cfg.seed)?;
        let points = biobjective_solve(&partition, cfg.catalog, cfg.workload, cfg.budget)?;
        Ok(StrategyOutcome {
            strategy,
            partition,
            encrypted,
            decrypted,
            utility,
            risk,
            points,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut pool = Vec::new();
    for o in &outcomes {
        if o.points.is_empty() {
            warn!(
                "strategy {} (N = {}) has no assignment within budget {}",
                o.strategy.label(),
                o.partition.n_classes(),
                cfg.budget
            );
        }
        pool.extend(o.candidates());
    }
    let front = pareto_filter_3d(&pool);
    Ok(PlanResult { outcomes, pool, front })
}

pub const CANDIDATES_HEADER: &str = "strategy,N,f1_bits,f2_cost,f3_seconds,is_pareto,assignment";

/// One line of a candidates file, kept textual so files can be merged
/// without the catalog they were planned against.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRow {
    pub strategy: String,
    pub n: usize,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub is_pareto: bool,
    pub assignment: String,
}

impl CandidateRow {
    pub fn from_candidate(c: &CandidateSolution, is_pareto: bool, catalog: &[InstanceSpec]) -> Self {
        CandidateRow {
            strategy: c.strategy.kind.name().to_string(),
            n: c.n,
            f1: c.f1,
            f2: c.f2,
            f3: c.f3,
            is_pareto,
            assignment: c.assignment.to_text(catalog),
        }
    }

    pub fn objectives(&self) -> [f64; 3] {
        [self.f1, self.f2, self.f3]
    }

    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.strategy,
            self.n,
            self.f1,
            self.f2,
            self.f3,
            u8::from(self.is_pareto),
            self.assignment
        )
    }
}

/// Header plus one line per row.
pub fn candidates_to_text(rows: &[CandidateRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CANDIDATES_HEADER}");
    for r in rows {
        let _ = writeln!(s, "{}", r.to_line());
    }
    s
}

pub fn parse_candidates(text: &str, path: &Path) -> Result<Vec<CandidateRow>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line == CANDIDATES_HEADER {
            continue;
        }
        let f: Vec<&str> = line.splitn(7, ',').collect();
        let bad = |what: &str| Error::parse(path, i + 1, format!("bad {what}"));
        if f.len() != 7 {
            return Err(bad("field count"));
        }
        let num = |s: &str, what: &str| s.trim().parse::<f64>().map_err(|_| bad(what));
        rows.push(CandidateRow {
            strategy: f[0].trim().to_string(),
            n: f[1].trim().parse().map_err(|_| bad("N"))?,
            f1: num(f[2], "f1")?,
            f2: num(f[3], "f2")?,
            f3: num(f[4], "f3")?,
            is_pareto: match f[5].trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                _ => return Err(bad("is_pareto")),
            },
            assignment: f[6].trim().to_string(),
        });
    }
    Ok(rows)
}

/// Recomputes the Pareto flags over `rows`.
pub fn reflag(rows: &mut [CandidateRow]) {
    let pts: Vec<[f64; 3]> = rows.iter().map(CandidateRow::objectives).collect();
    for (r, keep) in rows.iter_mut().zip(pareto_mask(&pts)) {
        r.is_pareto = keep;
    }
}
