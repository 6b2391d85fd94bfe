//! Coordinate-label perturbation for one sub-dataset.
//!
//! The labels of a sub-dataset form an `rows x 2` matrix (one row per patch,
//! columns x and y). They are standardised column-wise, projected onto the
//! top-`k` eigenvectors of their 2x2 covariance and written out under random
//! tokens. Holding the basis and the normalisation statistics inverts the
//! transform; reconstructed coordinates are snapped back onto the patch grid.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::PatchSet;
use crate::privrisk::{clamp_mi, entropy_of_counts};
use crate::seed::stable_hash;

/// Row-major `rows x 2` matrix of coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordMatrix {
    rows: Vec<[f64; 2]>,
}

impl CoordMatrix {
    pub fn new(rows: Vec<[f64; 2]>) -> Self {
        CoordMatrix { rows }
    }

    /// Coordinates of the given patches, in the order given.
    pub fn from_patches(ps: &PatchSet, ids: &[usize]) -> Self {
        let rows = ids
            .iter()
            .map(|&i| {
                let r = ps.records()[i];
                [r.x as f64, r.y as f64]
            })
            .collect();
        CoordMatrix { rows }
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> [f64; 2] {
        self.rows[i]
    }

    pub fn as_rows(&self) -> &[[f64; 2]] {
        &self.rows
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[c])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: [f64; 2],
    /// Sample standard deviation; a constant column records 1.
    pub std: [f64; 2],
}

impl NormStats {
    pub fn apply(&self, a: &CoordMatrix) -> CoordMatrix {
        CoordMatrix::new(
            a.rows
                .iter()
                .map(|r| {
                    [
                        (r[0] - self.mean[0]) / self.std[0],
                        (r[1] - self.mean[1]) / self.std[1],
                    ]
                })
                .collect(),
        )
    }
}

/// Standardises each column to mean 0 and sample standard deviation 1.
pub fn normalize(a: &CoordMatrix) -> Result<(CoordMatrix, NormStats)> {
    let n = a.rows();
    if n < 2 {
        return Err(Error::DegenerateSubset { rows: n });
    }
    if a.rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut mean = [0.0; 2];
    let mut std = [1.0; 2];
    for c in 0..2 {
        mean[c] = a.column(c).sum::<f64>() / n as f64;
        let ss: f64 = a.column(c).map(|v| (v - mean[c]).powi(2)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        if sd > 0.0 {
            std[c] = sd;
        }
    }
    let stats = NormStats { mean, std };
    Ok((stats.apply(a), stats))
}

/// Eigenpairs of the 2x2 covariance, sorted by nonincreasing eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenBasis {
    pub eigenvalues: [f64; 2],
    /// `vectors[j]` is the unit eigenvector for `eigenvalues[j]`.
    pub vectors: [[f64; 2]; 2],
    pub k: usize,
}

impl EigenBasis {
    /// Projects one standardised row onto the retained components.
    pub fn project(&self, row: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (j, o) in out.iter_mut().enumerate().take(self.k) {
            *o = row[0] * self.vectors[j][0] + row[1] * self.vectors[j][1];
        }
        out
    }

    /// Maps retained components back to standardised coordinates.
    pub fn reconstruct(&self, comps: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (j, &c) in comps.iter().enumerate().take(self.k) {
            out[0] += c * self.vectors[j][0];
            out[1] += c * self.vectors[j][1];
        }
        out
    }
}

/// Sample covariance `AᵀA / (rows - 1)` of a centred matrix.
pub fn covariance(centered: &CoordMatrix) -> [[f64; 2]; 2] {
    let d = (centered.rows() - 1) as f64;
    let mut c = [[0.0; 2]; 2];
    for r in &centered.rows {
        c[0][0] += r[0] * r[0];
        c[0][1] += r[0] * r[1];
        c[1][1] += r[1] * r[1];
    }
    c[0][0] /= d;
    c[0][1] /= d;
    c[1][1] /= d;
    c[1][0] = c[0][1];
    c
}

/// Closed-form eigendecomposition of a symmetric 2x2 matrix via one Jacobi
/// rotation. Returns unsorted `(values, vectors)`.
fn symmetric_eigen_2x2(m: [[f64; 2]; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let (a, b, c) = (m[0][0], m[0][1], m[1][1]);
    if b == 0.0 {
        return ([a, c], [[1.0, 0.0], [0.0, 1.0]]);
    }
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let (s, co) = theta.sin_cos();
    let l1 = a * co * co + 2.0 * b * s * co + c * s * s;
    let l2 = a * s * s - 2.0 * b * s * co + c * co * co;
    ([l1, l2], [[co, s], [-s, co]])
}

pub fn eigen_basis(centered: &CoordMatrix, k: usize) -> Result<EigenBasis> {
    if !(1..=2).contains(&k) {
        return Err(Error::Invalid(format!("k must be 1 or 2, got {k}")));
    }
    if centered.rows() < 2 {
        return Err(Error::DegenerateSubset {
            rows: centered.rows(),
        });
    }
    if centered.rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (vals, vecs) = symmetric_eigen_2x2(covariance(centered));
    let (eigenvalues, vectors) = if vals[1] > vals[0] {
        ([vals[1], vals[0]], [vecs[1], vecs[0]])
    } else {
        (vals, vecs)
    };
    Ok(EigenBasis {
        eigenvalues,
        vectors,
        k,
    })
}

/// Identifies the (basis, stats, grid step) triple a label set was made with.
pub fn basis_id(basis: &EigenBasis, stats: &NormStats, grid_step: u64) -> u64 {
    let mut bytes = Vec::with_capacity(96);
    let floats = [
        stats.mean[0],
        stats.mean[1],
        stats.std[0],
        stats.std[1],
        basis.eigenvalues[0],
        basis.eigenvalues[1],
        basis.vectors[0][0],
        basis.vectors[0][1],
        basis.vectors[1][0],
        basis.vectors[1][1],
    ];
    for f in floats {
        bytes.extend_from_slice(&f.to_bits().to_le_bytes());
    }
    bytes.extend_from_slice(&(basis.k as u64).to_le_bytes());
    bytes.extend_from_slice(&grid_step.to_le_bytes());
    stable_hash(&[b"basis", &bytes])
}

/// A sub-dataset: patch ids and their coordinates, row-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct SubDataset {
    pub patch_ids: Vec<usize>,
    pub coords: CoordMatrix,
    /// Lattice step reconstructed coordinates are snapped to.
    pub grid_step: u64,
}

impl SubDataset {
    pub fn from_patches(ps: &PatchSet, ids: &[usize]) -> Self {
        SubDataset {
            patch_ids: ids.to_vec(),
            coords: CoordMatrix::from_patches(ps, ids),
            grid_step: if ps.is_aligned() { ps.patch_size() } else { 1 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncryptedRecord {
    pub token: u64,
    /// Transformed components; entries past `k` are random padding.
    pub comps: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncryptedLabelSet {
    pub basis_id: u64,
    pub k: usize,
    pub grid_step: u64,
    /// Records in shuffled order.
    pub records: Vec<EncryptedRecord>,
    /// Private: `patch_ids[j]` is the patch behind `records[j]`.
    pub patch_ids: Vec<usize>,
}

impl EncryptedLabelSet {
    /// `r_hex,e1,e2` lines, reals at 12 significant digits.
    pub fn labels_text(&self) -> String {
        let mut s = String::with_capacity(self.records.len() * 48);
        for r in &self.records {
            let _ = writeln!(s, "{:016x},{:.11e},{:.11e}", r.token, r.comps[0], r.comps[1]);
        }
        s
    }

    /// Private mapping file: one patch id per line, in record order.
    pub fn mapping_text(&self) -> String {
        let mut s = String::with_capacity(self.patch_ids.len() * 6);
        for id in &self.patch_ids {
            let _ = writeln!(s, "{id}");
        }
        s
    }

    pub fn parse(labels: &str, mapping: &str, key: &BasisFile, path: &Path) -> Result<Self> {
        let mut records = Vec::new();
        let mut tokens = HashSet::new();
        for (i, raw) in labels.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::parse(path, i + 1, "expected `r_hex,e1,e2`");
            let mut it = line.split(',');
            let token = u64::from_str_radix(it.next().ok_or_else(bad)?.trim(), 16).map_err(|_| bad())?;
            let e1: f64 = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            let e2: f64 = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            if it.next().is_some() {
                return Err(bad());
            }
            if !tokens.insert(token) {
                return Err(Error::parse(path, i + 1, "duplicate token"));
            }
            records.push(EncryptedRecord { token, comps: [e1, e2] });
        }
        let patch_ids: Vec<usize> = mapping
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, 0, "bad mapping file"))?;
        if patch_ids.len() != records.len() {
            return Err(Error::parse(path, 0, "mapping and label counts differ"));
        }
        Ok(EncryptedLabelSet {
            basis_id: key.basis_id,
            k: key.basis.k,
            grid_step: key.grid_step,
            records,
            patch_ids,
        })
    }
}

/// Perturbs the labels of one sub-dataset. `basis` and `stats` must come from
/// the same sub-dataset.
pub fn encrypt_labels(sub: &SubDataset, basis: &EigenBasis, stats: &NormStats, seed: u64) -> EncryptedLabelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centered = stats.apply(&sub.coords);
    let projected: Vec<[f64; 2]> = centered.rows.iter().map(|&r| basis.project(r)).collect();

    let mut order: Vec<usize> = (0..projected.len()).collect();
    order.shuffle(&mut rng);

    let (lo, hi) = projected
        .iter()
        .map(|p| p[0])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));

    let mut tokens = HashSet::with_capacity(projected.len());
    let mut records = Vec::with_capacity(projected.len());
    for &j in &order {
        let token = loop {
            let t: u64 = rng.random();
            if tokens.insert(t) {
                break t;
            }
        };
        let mut comps = projected[j];
        for c in comps.iter_mut().skip(basis.k) {
            *c = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        }
        records.push(EncryptedRecord { token, comps });
    }
    EncryptedLabelSet {
        basis_id: basis_id(basis, stats, sub.grid_step),
        k: basis.k,
        grid_step: sub.grid_step,
        records,
        patch_ids: order.iter().map(|&j| sub.patch_ids[j]).collect(),
    }
}

/// Inverts the transform and snaps onto the grid. Rows follow record order.
pub fn decrypt_labels(enc: &EncryptedLabelSet, basis: &EigenBasis, stats: &NormStats) -> Result<CoordMatrix> {
    let actual = basis_id(basis, stats, enc.grid_step);
    if actual != enc.basis_id || basis.k != enc.k {
        return Err(Error::BasisMismatch {
            expected: enc.basis_id,
            actual,
        });
    }
    let step = enc.grid_step.max(1) as f64;
    let rows = enc
        .records
        .iter()
        .map(|r| {
            let mut kept = [0.0; 2];
            kept[..basis.k].copy_from_slice(&r.comps[..basis.k]);
            let z = basis.reconstruct(kept);
            let mut out = [0.0; 2];
            for c in 0..2 {
                let v = z[c] * stats.std[c] + stats.mean[c];
                out[c] = (v / step).round() * step + 0.0;
            }
            out
        })
        .collect();
    Ok(CoordMatrix::new(rows))
}

/// Decrypts and reorders rows to follow `ids` (typically ascending patch id).
pub fn decrypt_aligned(
    enc: &EncryptedLabelSet,
    basis: &EigenBasis,
    stats: &NormStats,
    ids: &[usize],
) -> Result<CoordMatrix> {
    let m = decrypt_labels(enc, basis, stats)?;
    let pos: std::collections::HashMap<usize, usize> =
        enc.patch_ids.iter().enumerate().map(|(j, &id)| (id, j)).collect();
    let rows = ids
        .iter()
        .map(|id| {
            pos.get(id)
                .map(|&j| m.row(j))
                .ok_or_else(|| Error::Invalid(format!("patch {id} missing from encrypted set")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoordMatrix::new(rows))
}

/// Everything needed to invert one encrypted sub-dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisFile {
    pub basis_id: u64,
    pub grid_step: u64,
    pub stats: NormStats,
    pub basis: EigenBasis,
}

impl BasisFile {
    pub fn new(basis: EigenBasis, stats: NormStats, grid_step: u64) -> Self {
        BasisFile {
            basis_id: basis_id(&basis, &stats, grid_step),
            grid_step,
            stats,
            basis,
        }
    }

    /// Key-value sidecar; reals use shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let b = &self.basis;
        let s = &self.stats;
        format!(
            "basis_id={:016x}\nk={}\ngrid_step={}\nmean={},{}\nstd={},{}\neigenvalues={},{}\neigenvectors={},{},{},{}\n",
            self.basis_id,
            b.k,
            self.grid_step,
            s.mean[0],
            s.mean[1],
            s.std[0],
            s.std[1],
            b.eigenvalues[0],
            b.eigenvalues[1],
            b.vectors[0][0],
            b.vectors[0][1],
            b.vectors[1][0],
            b.vectors[1][1],
        )
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut kv = std::collections::HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, "expected key=value"))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            kv.get(k)
                .ok_or_else(|| Error::parse(path, 0, format!("missing key `{k}`")))
        };
        let floats = |k: &str, n: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = get(k)?
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(path, 0, format!("bad reals in `{k}`")))?;
            if v.len() != n {
                return Err(Error::parse(path, 0, format!("`{k}` needs {n} values")));
            }
            Ok(v)
        };
        let basis_id = u64::from_str_radix(get("basis_id")?, 16)
            .map_err(|_| Error::parse(path, 0, "bad basis_id"))?;
        let k: usize = get("k")?.parse().map_err(|_| Error::parse(path, 0, "bad k"))?;
        let grid_step: u64 = get("grid_step")?
            .parse()
            .map_err(|_| Error::parse(path, 0, "bad grid_step"))?;
        let mean = floats("mean", 2)?;
        let std = floats("std", 2)?;
        let ev = floats("eigenvalues", 2)?;
        let vs = floats("eigenvectors", 4)?;
        Ok(BasisFile {
            basis_id,
            grid_step,
            stats: NormStats {
                mean: [mean[0], mean[1]],
                std: [std[0], std[1]],
            },
            basis: EigenBasis {
                eigenvalues: [ev[0], ev[1]],
                vectors: [[vs[0], vs[1]], [vs[2], vs[3]]],
                k,
            },
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        BasisFile::parse(&text, path)
    }
}

/// Normalise, fit the basis and encrypt in one step. A single-patch subset
/// has no covariance; it is centred on itself with an identity basis, so its
/// components are all zero.
pub fn encrypt_subset(sub: &SubDataset, k: usize, seed: u64) -> Result<(EncryptedLabelSet, BasisFile)> {
    let (stats, basis) = if sub.coords.rows() == 1 {
        if !(1..=2).contains(&k) {
            return Err(Error::Invalid(format!("k must be 1 or 2, got {k}")));
        }
        let row = sub.coords.row(0);
        if !row.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let stats = NormStats { mean: row, std: [1.0; 2] };
        let basis = EigenBasis {
            eigenvalues: [0.0; 2],
            vectors: [[1.0, 0.0], [0.0, 1.0]],
            k,
        };
        (stats, basis)
    } else {
        let (centered, stats) = normalize(&sub.coords)?;
        (stats, eigen_basis(&centered, k)?)
    };
    let enc = encrypt_labels(sub, &basis, &stats, seed);
    Ok((enc, BasisFile::new(basis, stats, sub.grid_step)))
}

fn axis_utility(original: &CoordMatrix, estimated: &CoordMatrix, c: usize) -> f64 {
    use std::collections::HashMap;
    let mut y: HashMap<u64, u64> = HashMap::new();
    let mut yhat: HashMap<u64, u64> = HashMap::new();
    let mut joint: HashMap<(u64, u64), u64> = HashMap::new();
    for (a, b) in original.column(c).zip(estimated.column(c)) {
        let (ka, kb) = ((a + 0.0).to_bits(), (b + 0.0).to_bits());
        *y.entry(ka).or_insert(0) += 1;
        *yhat.entry(kb).or_insert(0) += 1;
        *joint.entry((ka, kb)).or_insert(0) += 1;
    }
    let h = |m: Vec<u64>| entropy_of_counts(&m);
    clamp_mi(
        h(y.into_values().collect()),
        h(yhat.into_values().collect()),
        h(joint.into_values().collect()),
    )
}

/// Plug-in `I(Y; Ŷ)` per axis, in bits. Rows must be aligned.
pub fn output_utility(original: &CoordMatrix, estimated: &CoordMatrix) -> Result<[f64; 2]> {
    if original.rows() != estimated.rows() {
        return Err(Error::Invalid(format!(
            "{} original rows vs {} estimated",
            original.rows(),
            estimated.rows()
        )));
    }
    Ok([
        axis_utility(original, estimated, 0),
        axis_utility(original, estimated, 1),
    ])
}

/// Plug-in entropy of one column, in bits.
pub fn column_entropy(m: &CoordMatrix, c: usize) -> f64 {
    let mut counts: std::collections::HashMap<u64, u64> = std::collections::HashMap::new();
    for v in m.column(c) {
        *counts.entry((v + 0.0).to_bits()).or_insert(0) += 1;
    }
    entropy_of_counts(&counts.into_values().collect::<Vec<_>>())
}
