//! Patch grids as coordinate records and their king-style adjacency graph.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchRecord {
    pub id: usize,
    pub x: u64,
    pub y: u64,
}

/// The tiled image: records in canonical order with dense ids `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchSet {
    patch_size: u64,
    records: Vec<PatchRecord>,
    aligned: bool,
}

impl PatchSet {
    /// Builds a set from coordinates in canonical order. With `aligned` every
    /// coordinate must be a multiple of `patch_size`.
    pub fn from_coords(patch_size: u64, coords: &[(u64, u64)], aligned: bool) -> Result<Self> {
        if patch_size == 0 {
            return Err(Error::Invalid("patch size must be positive".into()));
        }
        if coords.is_empty() {
            return Err(Error::EmptyPatchSet);
        }
        let mut seen = HashMap::with_capacity(coords.len());
        let mut records = Vec::with_capacity(coords.len());
        for (id, &(x, y)) in coords.iter().enumerate() {
            if aligned && (x % patch_size != 0 || y % patch_size != 0) {
                return Err(Error::Invalid(format!(
                    "coordinate ({x},{y}) is not a multiple of patch size {patch_size}"
                )));
            }
            if let Some(prev) = seen.insert((x, y), id) {
                return Err(Error::Invalid(format!(
                    "duplicate coordinate ({x},{y}) for patches {prev} and {id}"
                )));
            }
            records.push(PatchRecord { id, x, y });
        }
        Ok(PatchSet {
            patch_size,
            records,
            aligned,
        })
    }

    pub fn patch_size(&self) -> u64 {
        self.patch_size
    }

    /// Whether all coordinates sit on the `patch_size` lattice.
    pub fn is_aligned(&self) -> bool {
        self.aligned
    }

    pub fn records(&self) -> &[PatchRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&PatchRecord> {
        self.records.get(id)
    }

    /// Writes the patch-list format: one `x,y` line per record.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.records.len() * 12);
        for r in &self.records {
            s.push_str(&format!("{},{}\n", r.x, r.y));
        }
        s
    }
}

/// Boolean tissue mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    cells: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != rows * cols {
            return Err(Error::Invalid(format!(
                "mask has {} cells, expected {rows}x{cols}",
                cells.len()
            )));
        }
        Ok(Mask { rows, cols, cells })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.cols + col]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Each cell kept independently with probability `keep`.
    pub fn random(rows: usize, cols: usize, keep: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = (0..rows * cols).map(|_| rng.random_bool(keep)).collect();
        Mask { rows, cols, cells }
    }

    /// Parses a mask file: one line per row, `1`/`0` per cell, blank lines
    /// and `#` comments skipped.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cells = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut n = 0;
            for ch in line.chars().filter(|c| !c.is_whitespace()) {
                match ch {
                    '1' => cells.push(true),
                    '0' => cells.push(false),
                    other => {
                        return Err(Error::parse(path, i + 1, format!("unexpected mask cell {other:?}")))
                    }
                }
                n += 1;
            }
            match cols {
                None => cols = Some(n),
                Some(c) if c != n => {
                    return Err(Error::parse(path, i + 1, format!("row has {n} cells, expected {c}")))
                }
                _ => {}
            }
            rows += 1;
        }
        Mask::new(rows, cols.unwrap_or(0), cells)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Mask::parse(&text, path)
    }
}

/// One record per kept cell at `(col * p, row * p)`, ids in row-major order.
pub fn generate_grid(rows: usize, cols: usize, p: u64, mask: Option<&Mask>) -> Result<PatchSet> {
    if rows == 0 || cols == 0 {
        return Err(Error::Invalid("grid needs at least one row and one column".into()));
    }
    if let Some(m) = mask {
        if m.rows() != rows || m.cols() != cols {
            return Err(Error::Invalid(format!(
                "mask shape {}x{} does not match grid {rows}x{cols}",
                m.rows(),
                m.cols()
            )));
        }
    }
    let mut coords = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            if mask.is_none_or(|m| m.get(r, c)) {
                coords.push((c as u64 * p, r as u64 * p));
            }
        }
    }
    PatchSet::from_coords(p, &coords, true)
}

/// Parses the patch-list format; ids follow file order. Errors name the line.
pub fn parse_patches(text: &str, p: u64, path: &Path, aligned: bool) -> Result<PatchSet> {
    if p == 0 {
        return Err(Error::Invalid("patch size must be positive".into()));
    }
    let mut coords = Vec::new();
    let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = i + 1;
        let (xs, ys) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, lineno, "expected `x,y`"))?;
        let x: u64 = xs
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad x coordinate {:?}", xs.trim())))?;
        let y: u64 = ys
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad y coordinate {:?}", ys.trim())))?;
        if aligned && (!x.is_multiple_of(p) || !y.is_multiple_of(p)) {
            return Err(Error::parse(
                path,
                lineno,
                format!("coordinate ({x},{y}) is not a multiple of patch size {p}"),
            ));
        }
        if let Some(first) = seen.insert((x, y), lineno) {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate coordinate ({x},{y}), first seen on line {first}"),
            ));
        }
        coords.push((x, y));
    }
    PatchSet::from_coords(p, &coords, aligned)
}

pub fn load_patches(path: &Path, p: u64) -> Result<PatchSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_patches(&text, p, path, true)
}

/// Undirected simple graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    /// Normalizes each edge to `(low, high)` and drops duplicates. Self-loops
    /// and out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut list = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Invalid(format!("self-loop on vertex {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::Invalid(format!("edge ({a},{b}) out of range for {n} vertices")));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        list.dedup();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &list {
            adj[a].push(b);
            adj[b].push(a);
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        Ok(AdjacencyGraph { n, edges: list, adj })
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    /// Sorted `(low, high)` pairs.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }
}

/// True when two patches are grid neighbours: horizontal, vertical or diagonal
/// at exactly one patch step.
pub fn is_adjacent(a: &PatchRecord, b: &PatchRecord, p: u64) -> bool {
    let dx = a.x.abs_diff(b.x);
    let dy = a.y.abs_diff(b.y);
    (dx == p && dy == 0) || (dy == p && dx == 0) || (dx == p && dy == p)
}

/// Builds the neighbourhood graph through a coordinate index in O(n).
pub fn build_graph(ps: &PatchSet) -> AdjacencyGraph {
    let p = ps.patch_size();
    let index: HashMap<(u64, u64), usize> = ps.records().iter().map(|r| ((r.x, r.y), r.id)).collect();
    let mut edges = Vec::with_capacity(ps.len() * 4);
    let steps: [(i8, i8); 4] = [(1, 0), (0, 1), (1, 1), (-1, 1)];
    for r in ps.records() {
        for &(sx, sy) in &steps {
            let nx = match sx {
                1 => r.x.checked_add(p),
                -1 => r.x.checked_sub(p),
                _ => Some(r.x),
            };
            let ny = if sy == 1 { r.y.checked_add(p) } else { Some(r.y) };
            if let (Some(nx), Some(ny)) = (nx, ny) {
                if let Some(&other) = index.get(&(nx, ny)) {
                    edges.push((r.id, other));
                }
            }
        }
    }
    AdjacencyGraph::from_edges(ps.len(), edges).expect("grid edges are well formed")
}
