mod support;

use std::path::PathBuf;

use price_core::grid::generate_grid;
use price_core::hybridcloud::{cost_of, load_catalog, makespan_of, TimeTable, Workload};
use price_core::planner::{
    pareto_filter_3d, pareto_mask, plan, solve_table, CandidateSolution, PlanConfig, F1_TOLERANCE,
};
use price_core::splitting::{Family, SplitStrategy, StrategyKind};
use price_core::Assignment;
use proptest::prelude::*;
use rand::Rng;

fn demo(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../demo").join(file)
}

fn random_table(seed: u64) -> TimeTable {
    let mut rng = support::rng(seed);
    let m = rng.random_range(1..=6);
    let n = rng.random_range(1..=4usize.min(m));
    let catalog = support::random_catalog(m, &mut rng);
    let sizes: Vec<usize> = (0..n).map(|_| [50, 100, 150][rng.random_range(0..3)]).collect();
    let w = Workload {
        model_bytes: 5e7,
        per_patch_ref_seconds: 2.0,
        patch_bytes: 1.5e5,
        ..Workload::default()
    };
    TimeTable::build(&sizes, &catalog, &w)
}

#[test]
fn frontier_equals_exhaustive_enumeration() {
    for seed in 0..300 {
        let table = random_table(seed);
        for budget in [0.0, 0.05, 0.2, 1e9] {
            let got = solve_table(&table, budget).unwrap();
            let want = support::frontier_oracle(&table, budget);
            let got_pts: Vec<(f64, f64, Vec<usize>)> = got
                .iter()
                .map(|p| (p.cost, p.makespan, p.assignment.mapping().to_vec()))
                .collect();
            assert_eq!(got_pts, want, "seed {seed}, budget {budget}");
        }
    }
}

#[test]
fn returned_points_are_consistent() {
    for seed in 200..260 {
        let table = random_table(seed);
        let pts = solve_table(&table, 1e9).unwrap();
        for p in &pts {
            let (c, m) = support::objectives(&table, p.assignment.mapping());
            assert_eq!((c, m), (p.cost, p.makespan));
            assert_eq!(cost_of(&p.assignment, &table), p.cost);
            assert_eq!(makespan_of(&p.assignment, &table), p.makespan);
            let mut seen = p.assignment.mapping().to_vec();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), table.n_datasets());
        }
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                let comparable = (a.cost <= b.cost && a.makespan <= b.makespan)
                    || (b.cost <= a.cost && b.makespan <= a.makespan);
                assert!(!comparable, "seed {seed}: comparable points");
            }
        }
    }
}

#[test]
fn budget_monotonicity() {
    for seed in 300..360 {
        let table = random_table(seed);
        let budgets = [0.0, 0.01, 0.05, 0.1, 0.5, 1e9];
        for w in budgets.windows(2) {
            // every assignment feasible under the smaller budget stays feasible
            let small = support::all_assignments(table.n_datasets(), table.n_instances())
                .into_iter()
                .filter(|a| support::objectives(&table, a).0 <= w[0])
                .count();
            let large = support::all_assignments(table.n_datasets(), table.n_instances())
                .into_iter()
                .filter(|a| support::objectives(&table, a).0 <= w[1])
                .count();
            assert!(small <= large);
            // and the tighter front is dominated-or-equal by the looser one
            let tight = solve_table(&table, w[0]).unwrap();
            let loose = solve_table(&table, w[1]).unwrap();
            for p in &tight {
                assert!(loose.iter().any(|q| q.cost <= p.cost && q.makespan <= p.makespan));
            }
        }
    }
}

#[test]
fn pareto_mask_equals_pairwise_oracle() {
    let mut rng = support::rng(42);
    for _ in 0..1000 {
        let len = rng.random_range(0..=50);
        let pts = support::random_points(len, &mut rng);
        assert_eq!(pareto_mask(&pts), support::pareto_oracle(&pts, F1_TOLERANCE));
    }
}

fn candidate(f: [f64; 3], kind: StrategyKind) -> CandidateSolution {
    CandidateSolution {
        strategy: SplitStrategy { kind, requested_n: None },
        n: 1,
        f1: f[0],
        f2: f[1],
        f3: f[2],
        assignment: Assignment::new(vec![0], 1).unwrap(),
    }
}

proptest! {
    #[test]
    fn filter_is_idempotent_and_order_independent(seed in any::<u64>(), len in 0usize..40) {
        let mut rng = support::rng(seed);
        let pts = support::random_points(len, &mut rng);
        let cands: Vec<CandidateSolution> = pts.iter().map(|&p| candidate(p, StrategyKind::SaturationLargestFirst)).collect();
        let once = pareto_filter_3d(&cands);
        let twice = pareto_filter_3d(&once.solutions);
        prop_assert_eq!(&once, &twice);

        let mut rev = cands.clone();
        rev.reverse();
        let mut a: Vec<[f64; 3]> = once.solutions.iter().map(|c| c.objectives()).collect();
        let mut b: Vec<[f64; 3]> = pareto_filter_3d(&rev).solutions.iter().map(|c| c.objectives()).collect();
        let key = |p: &[f64; 3], q: &[f64; 3]| p.partial_cmp(q).unwrap();
        a.sort_by(key);
        b.sort_by(key);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn dominating_strategy_takes_the_whole_front() {
    let pool = vec![
        candidate([1.0, 1.0, 1.0], StrategyKind::LargestFirst),
        candidate([2.0, 2.0, 2.0], StrategyKind::AvgShuffled),
    ];
    let front = pareto_filter_3d(&pool);
    assert_eq!(front.solutions, vec![pool[0].clone()]);
}

#[test]
fn demo_budgets_nest() {
    let catalog = load_catalog(&demo("catalog.csv")).unwrap();
    let workload = Workload::load(&demo("workload.conf")).unwrap();
    let ps = generate_grid(50, 50, 224, None).unwrap();
    let strategies: Vec<SplitStrategy> = StrategyKind::GRAPH
        .into_iter()
        .map(SplitStrategy::graph)
        .chain([SplitStrategy::average(true, 4), SplitStrategy::average(false, 4)])
        .collect();
    let run = |budget| {
        let cfg = PlanConfig { catalog: &catalog, workload: &workload, budget, k: 2, seed: 3 };
        plan(&strategies, &ps, &cfg).unwrap()
    };
    let tight = run(100.0);
    let loose = run(120.0);
    assert!(!tight.front.solutions.is_empty());
    for c in &tight.front.solutions {
        assert!(c.f2 <= 100.0);
        assert!(loose.pool.contains(c));
    }
    for c in &loose.front.solutions {
        let fam = loose.pool_of(c.family());
        assert!(fam.contains(c));
    }
    assert!(loose.pool.iter().any(|c| c.family() == Family::Graph));
    assert!(loose.pool.iter().any(|c| c.family() == Family::Average));
}

#[test]
fn single_strategy_single_point() {
    let catalog = support::random_catalog(1, &mut support::rng(1));
    let workload = Workload { model_bytes: 1.0, per_patch_ref_seconds: 1.0, patch_bytes: 1.0, ..Workload::default() };
    let ps = generate_grid(2, 2, 224, None).unwrap();
    let cfg = PlanConfig { catalog: &catalog, workload: &workload, budget: 1e9, k: 2, seed: 0 };
    let r = plan(&[SplitStrategy::average(false, 1)], &ps, &cfg).unwrap();
    assert_eq!(r.pool.len(), 1);
    assert_eq!(r.front.solutions.len(), 1);
}
