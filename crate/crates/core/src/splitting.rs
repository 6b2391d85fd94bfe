//! Sub-dataset construction: greedy graph colorings of the patch graph and
//! the average-split baselines.
//!
//! Every greedy strategy fixes a vertex order and then gives each vertex the
//! smallest color not already used by a colored neighbour. Ties in any order
//! break towards the lowest vertex id, so only `random_sequential` depends on
//! the seed.

use std::cmp::Reverse;
use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{AdjacencyGraph, PatchSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    LargestFirst,
    RandomSequential,
    SmallestLast,
    IndependentSet,
    ConnectedSequential,
    SaturationLargestFirst,
    AvgShuffled,
    AvgUnshuffled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Graph,
    Average,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Graph => "graph",
            Family::Average => "avg",
        }
    }
}

impl StrategyKind {
    pub const GRAPH: [StrategyKind; 6] = [
        StrategyKind::LargestFirst,
        StrategyKind::RandomSequential,
        StrategyKind::SmallestLast,
        StrategyKind::IndependentSet,
        StrategyKind::ConnectedSequential,
        StrategyKind::SaturationLargestFirst,
    ];

    pub const ALL: [StrategyKind; 8] = [
        StrategyKind::LargestFirst,
        StrategyKind::RandomSequential,
        StrategyKind::SmallestLast,
        StrategyKind::IndependentSet,
        StrategyKind::ConnectedSequential,
        StrategyKind::SaturationLargestFirst,
        StrategyKind::AvgShuffled,
        StrategyKind::AvgUnshuffled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::LargestFirst => "largest_first",
            StrategyKind::RandomSequential => "random_sequential",
            StrategyKind::SmallestLast => "smallest_last",
            StrategyKind::IndependentSet => "independent_set",
            StrategyKind::ConnectedSequential => "connected_sequential",
            StrategyKind::SaturationLargestFirst => "saturation_largest_first",
            StrategyKind::AvgShuffled => "avg_shuffled",
            StrategyKind::AvgUnshuffled => "avg_unshuffled",
        }
    }

    pub fn family(self) -> Family {
        match self {
            StrategyKind::AvgShuffled | StrategyKind::AvgUnshuffled => Family::Average,
            _ => Family::Graph,
        }
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown split strategy `{s}`")))
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A split strategy. Average splits need `requested_n`; graph kinds ignore it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SplitStrategy {
    pub kind: StrategyKind,
    pub requested_n: Option<usize>,
}

impl SplitStrategy {
    pub fn graph(kind: StrategyKind) -> Self {
        SplitStrategy {
            kind,
            requested_n: None,
        }
    }

    pub fn average(shuffled: bool, n: usize) -> Self {
        let kind = if shuffled {
            StrategyKind::AvgShuffled
        } else {
            StrategyKind::AvgUnshuffled
        };
        SplitStrategy {
            kind,
            requested_n: Some(n),
        }
    }

    pub fn family(&self) -> Family {
        self.kind.family()
    }

    /// File-safe label, unique per (kind, N) for average splits.
    pub fn label(&self) -> String {
        match (self.family(), self.requested_n) {
            (Family::Average, Some(n)) => format!("{}_n{n}", self.kind.name()),
            _ => self.kind.name().to_string(),
        }
    }
}

/// Parses `name` or `name:N`.
impl FromStr for SplitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, n) = match s.split_once(':') {
            Some((name, n)) => {
                let n: usize = n
                    .trim()
                    .parse()
                    .map_err(|_| Error::Invalid(format!("bad N in strategy `{s}`")))?;
                (name.trim(), Some(n))
            }
            None => (s.trim(), None),
        };
        if n == Some(0) {
            return Err(Error::Invalid(format!("strategy `{s}` needs N >= 1")));
        }
        let kind: StrategyKind = name.parse()?;
        Ok(SplitStrategy {
            kind,
            requested_n: n,
        })
    }
}

impl fmt::Display for SplitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.requested_n {
            Some(n) => write!(f, "{}:{n}", self.kind.name()),
            None => f.write_str(self.kind.name()),
        }
    }
}

/// Disjoint, covering, nonempty classes of patch ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    strategy: SplitStrategy,
    classes: Vec<Vec<usize>>,
    class_of: Vec<usize>,
}

impl Partition {
    /// `class_of[v]` is the class of patch `v`; class ids must be dense.
    pub fn from_labels(strategy: SplitStrategy, class_of: Vec<usize>) -> Result<Self> {
        let n_classes = class_of.iter().copied().max().map_or(0, |m| m + 1);
        let mut classes = vec![Vec::new(); n_classes];
        for (v, &c) in class_of.iter().enumerate() {
            classes[c].push(v);
        }
        if let Some(empty) = classes.iter().position(Vec::is_empty) {
            return Err(Error::Invalid(format!("class {empty} is empty")));
        }
        Ok(Partition {
            strategy,
            classes,
            class_of,
        })
    }

    pub fn strategy(&self) -> SplitStrategy {
        self.strategy
    }

    /// Number of classes, N.
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn n_items(&self) -> usize {
        self.class_of.len()
    }

    /// Classes with ids in ascending order.
    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn class_of(&self, v: usize) -> usize {
        self.class_of[v]
    }

    pub fn labels(&self) -> &[usize] {
        &self.class_of
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.classes.iter().map(Vec::len).collect()
    }

    /// Partition file: one `patch_id,class_id` line per patch.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.class_of.len() * 8);
        for (v, c) in self.class_of.iter().enumerate() {
            s.push_str(&format!("{v},{c}\n"));
        }
        s
    }

    pub fn parse(text: &str, strategy: SplitStrategy, path: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed = line
                .split_once(',')
                .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)));
            match parsed {
                Some(p) => pairs.push(p),
                None => return Err(Error::parse(path, i + 1, "expected `patch_id,class_id`")),
            }
        }
        let n = pairs.len();
        let mut class_of = vec![usize::MAX; n];
        for &(v, c) in &pairs {
            if v >= n || class_of[v] != usize::MAX {
                return Err(Error::parse(path, 0, format!("patch ids must be 0..{n} exactly once")));
            }
            class_of[v] = c;
        }
        Partition::from_labels(strategy, class_of)
            .map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn load(path: &Path, strategy: SplitStrategy) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Partition::parse(&text, strategy, path)
    }
}

/// Splits according to `strategy`, dispatching to [`greedy_color`] or
/// [`average_split`].
pub fn split(ps: &PatchSet, g: &AdjacencyGraph, strategy: SplitStrategy, seed: u64) -> Result<Partition> {
    match strategy.kind {
        StrategyKind::AvgShuffled | StrategyKind::AvgUnshuffled => {
            let n = strategy
                .requested_n
                .ok_or_else(|| Error::Invalid(format!("{} requires N", strategy.kind)))?;
            average_split(ps, n, strategy.kind == StrategyKind::AvgShuffled, seed)
        }
        _ => greedy_color(g, strategy, seed),
    }
}

pub fn greedy_color(g: &AdjacencyGraph, strategy: SplitStrategy, seed: u64) -> Result<Partition> {
    if g.n_vertices() == 0 {
        return Err(Error::Invalid("cannot color an empty graph".into()));
    }
    let strategy = SplitStrategy::graph(strategy.kind);
    let colors = match strategy.kind {
        StrategyKind::LargestFirst => first_fit(g, &largest_first_order(g)),
        StrategyKind::RandomSequential => first_fit(g, &random_order(g.n_vertices(), seed)),
        StrategyKind::SmallestLast => first_fit(g, &smallest_last_order(g)),
        StrategyKind::IndependentSet => independent_set_coloring(g),
        StrategyKind::ConnectedSequential => first_fit(g, &bfs_order(g)),
        StrategyKind::SaturationLargestFirst => dsatur(g),
        StrategyKind::AvgShuffled | StrategyKind::AvgUnshuffled => {
            return Err(Error::Invalid(format!(
                "{} is not a graph-coloring strategy",
                strategy.kind
            )))
        }
    };
    Partition::from_labels(strategy, colors)
}

fn first_fit(g: &AdjacencyGraph, order: &[usize]) -> Vec<usize> {
    let n = g.n_vertices();
    let mut color = vec![usize::MAX; n];
    // stamp[c] == v + 1 marks color c as taken around v
    let mut stamp: Vec<usize> = Vec::new();
    for &v in order {
        let nb = g.neighbors(v);
        if stamp.len() < nb.len() + 1 {
            stamp.resize(nb.len() + 1, 0);
        }
        for &u in nb {
            let c = color[u];
            if c < stamp.len() {
                stamp[c] = v + 1;
            }
        }
        color[v] = (0..stamp.len()).find(|&c| stamp[c] != v + 1).unwrap();
    }
    color
}

fn largest_first_order(g: &AdjacencyGraph) -> Vec<usize> {
    let mut order: Vec<usize> = (0..g.n_vertices()).collect();
    order.sort_by_key(|&v| (Reverse(g.degree(v)), v));
    order
}

fn random_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Matula-Beck: repeatedly delete a minimum-degree vertex, then reverse.
fn smallest_last_order(g: &AdjacencyGraph) -> Vec<usize> {
    let n = g.n_vertices();
    let mut deg: Vec<usize> = (0..n).map(|v| g.degree(v)).collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (deg[v], v)).collect();
    let mut alive = vec![true; n];
    let mut removed = Vec::with_capacity(n);
    while let Some((_, v)) = queue.pop_first() {
        alive[v] = false;
        removed.push(v);
        for &u in g.neighbors(v) {
            if alive[u] {
                queue.remove(&(deg[u], u));
                deg[u] -= 1;
                queue.insert((deg[u], u));
            }
        }
    }
    removed.reverse();
    removed
}

/// Peels maximal independent sets off the remaining graph; set `i` gets
/// color `i`. Each set is grown by taking a minimum-degree vertex of the
/// working subgraph and deleting it together with its neighbours.
fn independent_set_coloring(g: &AdjacencyGraph) -> Vec<usize> {
    let n = g.n_vertices();
    let mut color = vec![usize::MAX; n];
    let mut remaining = vec![true; n];
    let mut left = n;
    let mut c = 0;
    while left > 0 {
        let mut in_work = remaining.clone();
        let mut deg: Vec<usize> = (0..n)
            .map(|v| {
                if in_work[v] {
                    g.neighbors(v).iter().filter(|&&u| in_work[u]).count()
                } else {
                    0
                }
            })
            .collect();
        let mut queue: BTreeSet<(usize, usize)> = (0..n).filter(|&v| in_work[v]).map(|v| (deg[v], v)).collect();
        while let Some((_, v)) = queue.pop_first() {
            color[v] = c;
            remaining[v] = false;
            left -= 1;
            in_work[v] = false;
            let dropped: Vec<usize> = g.neighbors(v).iter().copied().filter(|&u| in_work[u]).collect();
            for &u in &dropped {
                in_work[u] = false;
                queue.remove(&(deg[u], u));
            }
            for &u in &dropped {
                for &w in g.neighbors(u) {
                    if in_work[w] {
                        queue.remove(&(deg[w], w));
                        deg[w] -= 1;
                        queue.insert((deg[w], w));
                    }
                }
            }
        }
        c += 1;
    }
    color
}

/// Breadth-first from the lowest-id vertex of each component.
fn bfs_order(g: &AdjacencyGraph) -> Vec<usize> {
    let n = g.n_vertices();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &u in g.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    order
}

/// DSATUR: highest saturation first, then highest degree, then lowest id.
fn dsatur(g: &AdjacencyGraph) -> Vec<usize> {
    let n = g.n_vertices();
    let mut color = vec![usize::MAX; n];
    let mut nb_colors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let key = |sat: usize, v: usize| (Reverse(sat), Reverse(g.degree(v)), v);
    let mut queue: BTreeSet<_> = (0..n).map(|v| key(0, v)).collect();
    while let Some((_, _, v)) = queue.pop_first() {
        let taken = &nb_colors[v];
        let c = (0..).find(|c| !taken.contains(c)).unwrap();
        color[v] = c;
        for &u in g.neighbors(v) {
            if color[u] == usize::MAX && !nb_colors[u].contains(&c) {
                queue.remove(&key(nb_colors[u].len(), u));
                nb_colors[u].push(c);
                queue.insert(key(nb_colors[u].len(), u));
            }
        }
    }
    color
}

/// Chunks the canonical (or seeded shuffled) order into `n` classes whose
/// sizes differ by at most one; the first `len % n` classes get the extra.
pub fn average_split(ps: &PatchSet, n: usize, shuffled: bool, seed: u64) -> Result<Partition> {
    let total = ps.len();
    if n == 0 || n > total {
        return Err(Error::Invalid(format!(
            "average split needs 1 <= N <= {total}, got {n}"
        )));
    }
    let order = if shuffled {
        random_order(total, seed)
    } else {
        (0..total).collect()
    };
    let base = total / n;
    let extra = total % n;
    let mut class_of = vec![0; total];
    let mut pos = 0;
    for c in 0..n {
        let size = base + usize::from(c < extra);
        for &v in &order[pos..pos + size] {
            class_of[v] = c;
        }
        pos += size;
    }
    Partition::from_labels(SplitStrategy::average(shuffled, n), class_of)
}

/// Edges whose endpoints share a class; empty means the split is proper.
pub fn validate_partition(g: &AdjacencyGraph, part: &Partition) -> Vec<(usize, usize)> {
    g.edges()
        .iter()
        .copied()
        .filter(|&(a, b)| part.class_of(a) == part.class_of(b))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_graph, generate_grid};

    fn k4() -> AdjacencyGraph {
        build_graph(&generate_grid(2, 2, 224, None).unwrap())
    }

    #[test]
    fn k4_needs_four_colors_for_every_strategy() {
        let g = k4();
        for kind in StrategyKind::GRAPH {
            let part = greedy_color(&g, SplitStrategy::graph(kind), 3).unwrap();
            assert_eq!(part.n_classes(), 4, "{kind}");
            assert!(part.classes().iter().all(|c| c.len() == 1));
        }
    }

    #[test]
    fn path_largest_first() {
        let g = AdjacencyGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let part = greedy_color(&g, SplitStrategy::graph(StrategyKind::LargestFirst), 0).unwrap();
        assert_eq!(part.classes(), &[vec![1], vec![0, 2]]);
        assert_eq!(part.n_classes(), 2);
    }

    #[test]
    fn edgeless_graph_is_one_class() {
        let g = AdjacencyGraph::from_edges(5, []).unwrap();
        let part = greedy_color(&g, SplitStrategy::graph(StrategyKind::LargestFirst), 0).unwrap();
        assert_eq!(part.n_classes(), 1);
        assert_eq!(part.classes()[0], vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn empty_graph_is_an_error() {
        let g = AdjacencyGraph::from_edges(0, []).unwrap();
        assert!(greedy_color(&g, SplitStrategy::graph(StrategyKind::SmallestLast), 0).is_err());
    }

    #[test]
    fn average_split_sizes() {
        let ps = generate_grid(3, 4, 224, None).unwrap();
        let part = average_split(&ps, 4, false, 0).unwrap();
        assert_eq!(part.class_sizes(), vec![3, 3, 3, 3]);
        assert_eq!(part.classes()[0], vec![0, 1, 2]);

        let ps = generate_grid(2, 5, 224, None).unwrap();
        let part = average_split(&ps, 4, false, 0).unwrap();
        assert_eq!(part.class_sizes(), vec![3, 3, 2, 2]);
    }

    #[test]
    fn shuffled_average_split_is_seeded() {
        let ps = generate_grid(2, 5, 224, None).unwrap();
        let a = average_split(&ps, 4, true, 11).unwrap();
        let b = average_split(&ps, 4, true, 11).unwrap();
        let plain = average_split(&ps, 4, false, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_sizes(), vec![3, 3, 2, 2]);
        assert_ne!(a.labels(), plain.labels());
    }

    #[test]
    fn average_split_rejects_too_many_classes() {
        let ps = generate_grid(1, 3, 224, None).unwrap();
        assert!(average_split(&ps, 4, false, 0).is_err());
        assert!(average_split(&ps, 0, false, 0).is_err());
    }

    #[test]
    fn k4_split_in_two_pairs_has_two_violations() {
        let g = k4();
        let part = Partition::from_labels(SplitStrategy::average(false, 2), vec![0, 0, 1, 1]).unwrap();
        assert_eq!(validate_partition(&g, &part), vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn edgeless_graph_never_violates() {
        let g = AdjacencyGraph::from_edges(4, []).unwrap();
        let part = Partition::from_labels(SplitStrategy::average(false, 1), vec![0; 4]).unwrap();
        assert!(validate_partition(&g, &part).is_empty());
    }

    #[test]
    fn strategy_tokens() {
        let s: SplitStrategy = "avg_shuffled:5".parse().unwrap();
        assert_eq!(s, SplitStrategy::average(true, 5));
        assert_eq!(s.label(), "avg_shuffled_n5");
        assert_eq!(s.to_string(), "avg_shuffled:5");
        let s: SplitStrategy = "smallest_last".parse().unwrap();
        assert_eq!(s.label(), "smallest_last");
        assert!("avg_shuffled:0".parse::<SplitStrategy>().is_err());
        assert!("greedy".parse::<SplitStrategy>().is_err());
    }

    #[test]
    fn partition_file_roundtrip() {
        let ps = generate_grid(3, 3, 224, None).unwrap();
        let part = greedy_color(&build_graph(&ps), SplitStrategy::graph(StrategyKind::SmallestLast), 0).unwrap();
        let back = Partition::parse(&part.to_text(), part.strategy(), Path::new("p")).unwrap();
        assert_eq!(back, part);
        assert!(Partition::parse("0,0\n0,1\n", part.strategy(), Path::new("p")).is_err());
        assert!(Partition::parse("0,0\n1,2\n", part.strategy(), Path::new("p")).is_err());
    }

    #[test]
    fn smallest_last_order_on_a_star() {
        // removal: leaf 1, leaf 2, then centre (degree 1, lower id than 3), then 3
        let g = AdjacencyGraph::from_edges(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_eq!(smallest_last_order(&g), vec![3, 0, 2, 1]);
    }

    #[test]
    fn dsatur_colors_even_cycle_with_two() {
        let g = AdjacencyGraph::from_edges(6, (0..6).map(|i| (i, (i + 1) % 6))).unwrap();
        let part = greedy_color(&g, SplitStrategy::graph(StrategyKind::SaturationLargestFirst), 0).unwrap();
        assert_eq!(part.n_classes(), 2);
    }
}
