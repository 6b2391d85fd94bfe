//! Brute-force oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::HashMap;

use price_core::grid::PatchSet;
use price_core::hybridcloud::{InstanceSpec, Provider, TimeTable};
use price_core::labelcrypt::CoordMatrix;
use price_core::splitting::Partition;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `I(S_i; V)` for every node by enumerating the joint distribution over a
/// uniformly drawn patch and summing `p log p / (p_s p_v)` cell by cell.
pub fn risk_oracle(part: &Partition, ps: &PatchSet, decrypted: &[CoordMatrix], axis: usize) -> Vec<f64> {
    let n = ps.len();
    let mut estimate = vec![0.0f64; n];
    for (c, class) in part.classes().iter().enumerate() {
        for (row, &v) in class.iter().enumerate() {
            estimate[v] = decrypted[c].row(row)[axis];
        }
    }
    let coord = |v: usize| {
        let r = ps.records()[v];
        if axis == 0 {
            r.x
        } else {
            r.y
        }
    };
    (0..part.n_classes())
        .map(|i| {
            if part.n_classes() == 1 {
                return 0.0;
            }
            type Sym = (Option<u64>, Option<(u64, u64)>);
            let mut joint: HashMap<Sym, f64> = HashMap::new();
            for (u, est) in estimate.iter().enumerate() {
                let mine = part.class_of(u) == i;
                let s = mine.then(|| coord(u));
                let z = (!mine).then(|| (coord(u), (est + 0.0).to_bits()));
                *joint.entry((s, z)).or_insert(0.0) += 1.0 / n as f64;
            }
            let mut ps_m: HashMap<Option<u64>, f64> = HashMap::new();
            let mut pz_m: HashMap<Option<(u64, u64)>, f64> = HashMap::new();
            for (&(s, z), &p) in &joint {
                *ps_m.entry(s).or_insert(0.0) += p;
                *pz_m.entry(z).or_insert(0.0) += p;
            }
            joint
                .iter()
                .map(|(&(s, z), &p)| p * (p / (ps_m[&s] * pz_m[&z])).log2())
                .sum::<f64>()
                .max(0.0)
        })
        .collect()
}

/// Every injective assignment of `n` datasets to `m` instances.
pub fn all_assignments(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for k in 0..m {
            if !cur.contains(&k) {
                cur.push(k);
                rec(n, m, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(n, m, &mut Vec::new(), &mut out);
    out
}

/// Cost and makespan recomputed from the table entries; pair costs are
/// summed smallest first.
pub fn objectives(table: &TimeTable, a: &[usize]) -> (f64, f64) {
    let mut terms = Vec::with_capacity(a.len());
    let mut makespan = 0.0f64;
    for (d, &k) in a.iter().enumerate() {
        let t = table.estimate(d, k).t_comm + table.estimate(d, k).t_compt;
        terms.push(t / 3600.0 * table.price(k));
        makespan = makespan.max(t);
    }
    terms.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut cost = 0.0;
    for t in terms {
        cost += t;
    }
    (cost, makespan)
}

/// Exhaustive (cost, makespan) frontier under `budget`, with the
/// lexicographically first assignment for each point, sorted by cost.
pub fn frontier_oracle(table: &TimeTable, budget: f64) -> Vec<(f64, f64, Vec<usize>)> {
    let all: Vec<(f64, f64, Vec<usize>)> = all_assignments(table.n_datasets(), table.n_instances())
        .into_iter()
        .map(|a| {
            let (c, m) = objectives(table, &a);
            (c, m, a)
        })
        .filter(|(c, _, _)| *c <= budget)
        .collect();
    let mut front: Vec<(f64, f64, Vec<usize>)> = Vec::new();
    for p in &all {
        let dominated = all
            .iter()
            .any(|q| q.0 <= p.0 && q.1 <= p.1 && (q.0 < p.0 || q.1 < p.1));
        if dominated {
            continue;
        }
        match front.iter_mut().find(|f| f.0 == p.0 && f.1 == p.1) {
            Some(f) => {
                if p.2 < f.2 {
                    f.2 = p.2.clone();
                }
            }
            None => front.push(p.clone()),
        }
    }
    front.sort_by(|a, b| a.0.total_cmp(&b.0));
    front
}

/// Pairwise nondominance with a tolerance on the first objective.
pub fn pareto_oracle(points: &[[f64; 3]], f1_tol: f64) -> Vec<bool> {
    let dom = |a: &[f64; 3], b: &[f64; 3]| {
        let le = a[0] <= b[0] + f1_tol && a[1] <= b[1] && a[2] <= b[2];
        let lt = a[0] < b[0] - f1_tol || a[1] < b[1] || a[2] < b[2];
        le && lt
    };
    points
        .iter()
        .map(|p| !points.iter().any(|q| dom(q, p)))
        .collect()
}

/// Random catalog with coarse values so ties are common.
pub fn random_catalog(m: usize, rng: &mut ChaCha8Rng) -> Vec<InstanceSpec> {
    (0..m)
        .map(|i| {
            let private = rng.random_bool(0.25);
            InstanceSpec {
                id: format!("i{i}"),
                provider: if private { Provider::Private } else { Provider::Commercial },
                region: "r".into(),
                perf_factor: [0.5, 1.0, 2.0, 4.0][rng.random_range(0..4)],
                price_per_hour: if private { 0.0 } else { [0.5, 1.0, 2.0, 3.5][rng.random_range(0..4)] },
                bandwidth_mbps: [100.0, 1000.0][rng.random_range(0..2)],
            }
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random 3D points on a coarse lattice so duplicates and ties occur.
pub fn random_points(len: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    (0..len)
        .map(|_| {
            [
                rng.random_range(0..6) as f64 * 0.25,
                rng.random_range(0..6) as f64,
                rng.random_range(0..6) as f64 * 10.0,
            ]
        })
        .collect()
}
