//! One function per pipeline stage. Each reads the previous stage's files
//! from the run directory and writes its own, so a full run and a sequence
//! of stage invocations produce the same bytes.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::warn;

use price_core::grid::{build_graph, generate_grid, load_patches, parse_patches, Mask, PatchSet};
use price_core::hybridcloud::{catalog_to_text, load_catalog, InstanceSpec, Workload};
use price_core::labelcrypt::{decrypt_aligned, encrypt_subset, BasisFile, CoordMatrix, EncryptedLabelSet, SubDataset};
use price_core::par;
use price_core::planner::{biobjective_solve, candidates_to_text, reflag, CandidateRow, CandidateSolution};
use price_core::privrisk::{risk_report, RiskReport, RISK_HEADER};
use price_core::seed::{derive_seed, stable_hash};
use price_core::splitting::{split, Family, Partition, SplitStrategy, StrategyKind};

use crate::layout::{read_input, write_file, Manifest, RunDir};

/// Where the patches come from.
#[derive(Debug, Clone)]
pub enum PatchSource {
    Grid {
        rows: usize,
        cols: usize,
        mask: Option<PathBuf>,
    },
    File(PathBuf),
}

pub fn load_patch_source(src: &PatchSource, patch_size: u64) -> Result<PatchSet> {
    let ps = match src {
        PatchSource::Grid { rows, cols, mask } => {
            let mask = mask.as_deref().map(Mask::load).transpose()?;
            if let Some(m) = &mask {
                if (m.rows(), m.cols()) != (*rows, *cols) {
                    bail!(
                        "mask is {}x{} but the grid is {rows}x{cols}",
                        m.rows(),
                        m.cols()
                    );
                }
            }
            generate_grid(*rows, *cols, patch_size, mask.as_ref())?
        }
        PatchSource::File(path) => load_patches(path, patch_size)?,
    };
    Ok(ps)
}

fn describe_source(src: &PatchSource) -> String {
    match src {
        PatchSource::Grid { rows, cols, mask: None } => format!("grid {rows}x{cols}"),
        PatchSource::Grid {
            rows,
            cols,
            mask: Some(m),
        } => format!("grid {rows}x{cols} mask {}", m.display()),
        PatchSource::File(p) => format!("file {}", p.display()),
    }
}

/// Parses a comma-separated strategy list. `all` expands to every strategy.
pub fn parse_strategy_list(list: &str) -> Result<Vec<SplitStrategy>> {
    let mut out = Vec::new();
    for tok in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if tok == "all" {
            out.extend(StrategyKind::ALL.iter().map(|&kind| SplitStrategy {
                kind,
                requested_n: None,
            }));
            continue;
        }
        let s: SplitStrategy = tok.parse()?;
        if s.family() == Family::Graph && s.requested_n.is_some() {
            bail!("graph strategy `{tok}` takes no N");
        }
        out.push(s);
    }
    if out.is_empty() {
        bail!("strategy list is empty");
    }
    Ok(out)
}

fn dedup(list: Vec<SplitStrategy>) -> Vec<SplitStrategy> {
    let mut seen = Vec::new();
    for s in list {
        if !seen.contains(&s) {
            seen.push(s);
        }
    }
    seen
}

fn strategies_from_manifest(m: &Manifest) -> Result<Vec<SplitStrategy>> {
    m.require("strategies")?
        .split(',')
        .map(|t| t.parse::<SplitStrategy>().map_err(Into::into))
        .collect()
}

fn seed_from_manifest(m: &Manifest) -> Result<u64> {
    m.require("seed")?.parse().context("manifest seed")
}

fn load_run_patches(run: &RunDir, m: &Manifest) -> Result<PatchSet> {
    let p: u64 = m.require("patch_size")?.parse().context("manifest patch_size")?;
    let path = run.patches();
    let text = read_input(&path, "split")?;
    Ok(parse_patches(&text, p, &path, true)?)
}

fn load_partition(run: &RunDir, s: SplitStrategy) -> Result<Partition> {
    let path = run.partition(&s.label());
    let text = read_input(&path, "split")?;
    Ok(Partition::parse(&text, s, &path)?)
}

fn hex_digest(text: &str) -> String {
    format!("{:016x}", stable_hash(&[text.as_bytes()]))
}

/// Splits the patch set with every strategy. Average splits without an
/// explicit N take the smallest N among the graph strategies in the list.
pub fn split_stage(
    run: &RunDir,
    src: &PatchSource,
    patch_size: u64,
    strategies: &[SplitStrategy],
    seed: u64,
) -> Result<Vec<Partition>> {
    let ps = load_patch_source(src, patch_size)?;
    let graph = build_graph(&ps);
    let split_one = |s: &SplitStrategy| -> Result<Partition> {
        split(&ps, &graph, *s, derive_seed(seed, "split", &s.label()))
            .with_context(|| format!("split `{}`", s.label()))
    };

    let graph_kinds: Vec<SplitStrategy> = dedup(
        strategies
            .iter()
            .copied()
            .filter(|s| s.family() == Family::Graph)
            .collect(),
    );
    let graph_parts = par::map(&graph_kinds, split_one)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let default_n = graph_parts.iter().map(Partition::n_classes).min();

    let mut resolved = Vec::with_capacity(strategies.len());
    for s in strategies {
        let mut s = *s;
        if s.family() == Family::Average && s.requested_n.is_none() {
            match default_n {
                Some(n) => s.requested_n = Some(n),
                None => bail!("`{}` needs an explicit N (e.g. {}:4) when no graph strategy is given", s.kind, s.kind),
            }
        }
        resolved.push(s);
    }
    let resolved = dedup(resolved);
    let parts = par::map(&resolved, |s| match graph_kinds.iter().position(|g| g == s) {
        Some(i) => Ok(graph_parts[i].clone()),
        None => split_one(s),
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    write_file(&run.patches(), &ps.to_text())?;
    for part in &parts {
        write_file(&run.partition(&part.strategy().label()), &part.to_text())?;
    }
    let mut m = Manifest::default();
    m.set("version", env!("CARGO_PKG_VERSION"));
    if let Ok(t) = std::env::var("SOURCE_DATE_EPOCH") {
        m.set("created", t);
    }
    m.set("seed", seed);
    m.set("patch_source", describe_source(src));
    m.set("patch_size", patch_size);
    m.set("n_patches", ps.len());
    m.set(
        "strategies",
        resolved.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
    );
    m.save(run)?;
    Ok(parts)
}

/// Encrypts every class of every partition with `k` retained components.
pub fn encrypt_stage(run: &RunDir, k: usize) -> Result<()> {
    let mut m = Manifest::load(run)?;
    let seed = seed_from_manifest(&m)?;
    let ps = load_run_patches(run, &m)?;
    let strategies = strategies_from_manifest(&m)?;
    let results = par::map(&strategies, |&s| -> Result<()> {
        let label = s.label();
        let part = load_partition(run, s)?;
        let dir = run.encrypted_dir(&label);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
        let classes = part.classes();
        let written = par::map_range(classes.len(), |c| -> Result<()> {
            let sub = SubDataset::from_patches(&ps, &classes[c]);
            let class_seed = derive_seed(seed, "encrypt", &format!("{label}/{c}"));
            let (enc, key) = encrypt_subset(&sub, k, class_seed)
                .with_context(|| format!("encrypt `{label}` class {c}"))?;
            let [labels, basis, map] = run.class_files(&label, c);
            write_file(&labels, &enc.labels_text())?;
            write_file(&basis, &key.to_text())?;
            write_file(&map, &enc.mapping_text())?;
            Ok(())
        });
        written.into_iter().collect()
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;
    m.set("k", k);
    m.save(run)
}

/// Decrypts one class from its files, rows in ascending patch id.
fn decrypt_class(run: &RunDir, label: &str, c: usize, ids: &[usize]) -> Result<CoordMatrix> {
    let [labels, basis, map] = run.class_files(label, c);
    let key_text = read_input(&basis, "encrypt")?;
    let key = BasisFile::parse(&key_text, &basis)?;
    let enc = EncryptedLabelSet::parse(
        &read_input(&labels, "encrypt")?,
        &read_input(&map, "encrypt")?,
        &key,
        &labels,
    )?;
    Ok(decrypt_aligned(&enc, &key.basis, &key.stats, ids)?)
}

/// Scores every strategy from its decrypted labels. Strategies without
/// encrypted files are encrypted in memory with the manifest's `k` (default 2).
pub fn risk_stage(run: &RunDir) -> Result<Vec<RiskReport>> {
    let m = Manifest::load(run)?;
    let seed = seed_from_manifest(&m)?;
    let k: usize = m.get("k").map_or(Ok(2), str::parse).context("manifest k")?;
    let ps = load_run_patches(run, &m)?;
    let strategies = strategies_from_manifest(&m)?;
    let reports = par::map(&strategies, |&s| -> Result<RiskReport> {
        let label = s.label();
        let part = load_partition(run, s)?;
        let classes = part.classes();
        let decrypted = if run.encrypted_dir(&label).exists() {
            par::map_range(classes.len(), |c| decrypt_class(run, &label, c, &classes[c]))
        } else {
            // nothing encrypted yet: encrypt in memory exactly as `encrypt` would
            par::map_range(classes.len(), |c| {
                let sub = SubDataset::from_patches(&ps, &classes[c]);
                let (enc, key) = encrypt_subset(&sub, k, derive_seed(seed, "encrypt", &format!("{label}/{c}")))?;
                Ok(decrypt_aligned(&enc, &key.basis, &key.stats, &classes[c])?)
            })
        }
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        risk_report(&part, &ps, &decrypted).with_context(|| format!("risk `{label}`"))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut text = format!("{RISK_HEADER}\n");
    for r in &reports {
        text.push_str(&r.to_line());
        text.push('\n');
    }
    write_file(&run.risk(), &text)?;
    Ok(reports)
}

/// `(kind, N) -> rho_sum` from the risk file.
fn load_risk(run: &RunDir) -> Result<Vec<(String, usize, f64)>> {
    let path = run.risk();
    let text = read_input(&path, "risk")?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            bail!("{}:{}: expected 7 fields", path.display(), i + 1);
        }
        let n: usize = f[1].parse().with_context(|| format!("{}:{}", path.display(), i + 1))?;
        let sum: f64 = f[6].parse().with_context(|| format!("{}:{}", path.display(), i + 1))?;
        rows.push((f[0].to_string(), n, sum));
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct PlanSummary {
    pub candidates: usize,
    pub pareto: usize,
}

/// Solves the cost/makespan frontier per strategy and flags the 3D front.
pub fn plan_stage(run: &RunDir, catalog_path: &Path, workload_path: &Path, budget: f64) -> Result<PlanSummary> {
    if !(budget >= 0.0 && budget.is_finite()) {
        bail!("budget must be a nonnegative number, got {budget}");
    }
    let mut m = Manifest::load(run)?;
    let strategies = strategies_from_manifest(&m)?;
    let catalog: Vec<InstanceSpec> = load_catalog(catalog_path)?;
    let workload = Workload::load(workload_path)?;
    let risk = load_risk(run)?;

    let per_strategy = par::map(&strategies, |&s| -> Result<Vec<CandidateSolution>> {
        let part = load_partition(run, s)?;
        let n = part.n_classes();
        let f1 = risk
            .iter()
            .find(|(kind, rn, _)| kind == s.kind.name() && *rn == n)
            .map(|r| r.2)
            .with_context(|| format!("{} has no row for `{}` with N = {n}", run.risk().display(), s.label()))?;
        let points = biobjective_solve(&part, &catalog, &workload, budget)?;
        Ok(points
            .into_iter()
            .map(|p| CandidateSolution {
                strategy: s,
                n,
                f1,
                f2: p.cost,
                f3: p.makespan,
                assignment: p.assignment,
            })
            .collect())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (s, cands) in strategies.iter().zip(&per_strategy) {
        if cands.is_empty() {
            warn!("strategy {} has no assignment within budget {budget}", s.label());
        }
        rows.extend(cands.iter().map(|c| CandidateRow::from_candidate(c, false, &catalog)));
    }
    reflag(&mut rows);
    write_file(&run.candidates(), &candidates_to_text(&rows))?;

    m.set("catalog", catalog_path.display());
    m.set("catalog_digest", hex_digest(&catalog_to_text(&catalog)));
    m.set("workload", workload_path.display());
    m.set("workload_digest", hex_digest(&read_input(workload_path, "plan")?));
    m.set("budget", budget);
    m.save(run)?;

    Ok(PlanSummary {
        candidates: rows.len(),
        pareto: rows.iter().filter(|r| r.is_pareto).count(),
    })
}
