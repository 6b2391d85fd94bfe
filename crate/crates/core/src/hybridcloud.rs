//! Hybrid-cloud catalog, inference workload and the time/cost model.
//!
//! Time on an instance is an upload of the model plus the encrypted
//! sub-dataset over the instance's bandwidth, followed by inference at a
//! throughput scaled linearly by the instance's performance factor. Cost is
//! continuous-hour billing at the instance's price; private instances are free.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provider {
    Private,
    Commercial,
}

impl FromStr for Provider {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "private" => Ok(Provider::Private),
            "commercial" | "public" => Ok(Provider::Commercial),
            other => Err(Error::Invalid(format!("unknown provider `{other}`"))),
        }
    }
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provider::Private => "private",
            Provider::Commercial => "commercial",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub id: String,
    pub provider: Provider,
    pub region: String,
    /// Throughput relative to the reference GPU.
    pub perf_factor: f64,
    pub price_per_hour: f64,
    pub bandwidth_mbps: f64,
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| {
            Err(Error::Catalog {
                id: self.id.clone(),
                msg: msg.to_string(),
            })
        };
        if !(self.perf_factor.is_finite() && self.perf_factor > 0.0) {
            return bad("perf_factor must be finite and positive");
        }
        if !(self.bandwidth_mbps.is_finite() && self.bandwidth_mbps > 0.0) {
            return bad("bandwidth must be finite and positive");
        }
        if !(self.price_per_hour.is_finite() && self.price_per_hour >= 0.0) {
            return bad("price must be finite and nonnegative");
        }
        if self.provider == Provider::Private && self.price_per_hour != 0.0 {
            return bad("private instances must have price 0");
        }
        Ok(())
    }
}

/// Parses `id,provider,region,perf_factor,price_per_hour,bandwidth_mbps` lines.
pub fn parse_catalog(text: &str, path: &Path) -> Result<Vec<InstanceSpec>> {
    let mut out: Vec<InstanceSpec> = Vec::new();
    let mut ids = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(Error::parse(path, i + 1, format!("expected 6 fields, found {}", f.len())));
        }
        let num = |s: &str, what: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::parse(path, i + 1, format!("bad {what} {s:?}")))
        };
        let spec = InstanceSpec {
            id: f[0].to_string(),
            provider: f[1]
                .parse()
                .map_err(|e: Error| Error::parse(path, i + 1, e.to_string()))?,
            region: f[2].to_string(),
            perf_factor: num(f[3], "perf_factor")?,
            price_per_hour: num(f[4], "price")?,
            bandwidth_mbps: num(f[5], "bandwidth")?,
        };
        if spec.id.is_empty() {
            return Err(Error::parse(path, i + 1, "empty instance id"));
        }
        spec.validate()?;
        if !ids.insert(spec.id.clone()) {
            return Err(Error::Catalog {
                id: spec.id,
                msg: "duplicate instance id".into(),
            });
        }
        out.push(spec);
    }
    Ok(out)
}

pub fn load_catalog(path: &Path) -> Result<Vec<InstanceSpec>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_catalog(&text, path)
}

pub fn catalog_to_text(catalog: &[InstanceSpec]) -> String {
    let mut s = String::from("# id,provider,region,perf_factor,price_per_hour,bandwidth_mbps\n");
    for c in catalog {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.id, c.provider, c.region, c.perf_factor, c.price_per_hour, c.bandwidth_mbps
        ));
    }
    s
}

/// The inference job run on every sub-dataset. Only the first three fields
/// enter the time model; the rest describe the model for reports.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Workload {
    pub model_bytes: f64,
    pub per_patch_ref_seconds: f64,
    pub patch_bytes: f64,
    pub name: Option<String>,
    pub total_parameters: Option<u64>,
    pub flops: Option<f64>,
    pub batch_size: Option<u32>,
    pub memory_bytes: Option<u64>,
}

impl Workload {
    pub fn validate(&self) -> Result<()> {
        if !(self.per_patch_ref_seconds.is_finite() && self.per_patch_ref_seconds > 0.0) {
            return Err(Error::Invalid("per_patch_ref_seconds must be positive".into()));
        }
        if !(self.model_bytes.is_finite() && self.model_bytes >= 0.0) {
            return Err(Error::Invalid("model_bytes must be nonnegative".into()));
        }
        if !(self.patch_bytes.is_finite() && self.patch_bytes >= 0.0) {
            return Err(Error::Invalid("patch_bytes must be nonnegative".into()));
        }
        Ok(())
    }

    /// `key = value` lines with `#` comments.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut kv: HashMap<String, (usize, String)> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, "expected key = value"))?;
            kv.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        fn field<T: FromStr>(kv: &HashMap<String, (usize, String)>, key: &str, path: &Path) -> Result<Option<T>> {
            match kv.get(key) {
                None => Ok(None),
                Some((line, v)) => v
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::parse(path, *line, format!("bad value for `{key}`"))),
            }
        }
        let required = |key: &str| -> Result<f64> {
            field(&kv, key, path)?.ok_or_else(|| Error::parse(path, 0, format!("missing `{key}`")))
        };
        let known = [
            "name",
            "model_bytes",
            "per_patch_ref_seconds",
            "patch_bytes",
            "total_parameters",
            "flops",
            "batch_size",
            "memory_bytes",
        ];
        if let Some((k, (line, _))) = kv.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            return Err(Error::parse(path, *line, format!("unknown key `{k}`")));
        }
        let w = Workload {
            model_bytes: required("model_bytes")?,
            per_patch_ref_seconds: required("per_patch_ref_seconds")?,
            patch_bytes: required("patch_bytes")?,
            name: kv.get("name").map(|(_, v)| v.clone()),
            total_parameters: field(&kv, "total_parameters", path)?,
            flops: field(&kv, "flops", path)?,
            batch_size: field(&kv, "batch_size", path)?,
            memory_bytes: field(&kv, "memory_bytes", path)?,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Workload::parse(&text, path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeEstimate {
    pub t_comm: f64,
    pub t_compt: f64,
}

impl TimeEstimate {
    pub fn total(&self) -> f64 {
        self.t_comm + self.t_compt
    }
}

pub fn estimate_times(n_patches: usize, inst: &InstanceSpec, w: &Workload) -> TimeEstimate {
    let n = n_patches as f64;
    let bits = 8.0 * (w.model_bytes + n * w.patch_bytes);
    TimeEstimate {
        t_comm: bits / (inst.bandwidth_mbps * 1e6),
        t_compt: n * w.per_patch_ref_seconds / inst.perf_factor,
    }
}

/// Times and costs for every (sub-dataset, instance) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTable {
    times: Vec<Vec<TimeEstimate>>,
    prices: Vec<f64>,
}

impl TimeTable {
    pub fn build(sizes: &[usize], catalog: &[InstanceSpec], w: &Workload) -> Self {
        let times = sizes
            .iter()
            .map(|&n| catalog.iter().map(|inst| estimate_times(n, inst, w)).collect())
            .collect();
        TimeTable {
            times,
            prices: catalog.iter().map(|c| c.price_per_hour).collect(),
        }
    }

    /// From explicit totals (seconds) and hourly prices.
    pub fn from_totals(totals: Vec<Vec<f64>>, prices: Vec<f64>) -> Self {
        let times = totals
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|t| TimeEstimate {
                        t_comm: 0.0,
                        t_compt: t,
                    })
                    .collect()
            })
            .collect();
        TimeTable { times, prices }
    }

    pub fn n_datasets(&self) -> usize {
        self.times.len()
    }

    pub fn n_instances(&self) -> usize {
        self.prices.len()
    }

    pub fn estimate(&self, d: usize, k: usize) -> TimeEstimate {
        self.times[d][k]
    }

    pub fn total(&self, d: usize, k: usize) -> f64 {
        self.times[d][k].total()
    }

    pub fn cost(&self, d: usize, k: usize) -> f64 {
        self.total(d, k) / 3600.0 * self.prices[k]
    }

    pub fn price(&self, k: usize) -> f64 {
        self.prices[k]
    }
}

/// Injective map from sub-dataset index to instance index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment {
    mapping: Vec<usize>,
}

impl Assignment {
    pub fn new(mapping: Vec<usize>, n_instances: usize) -> Result<Self> {
        let mut used = vec![false; n_instances];
        for &k in &mapping {
            if k >= n_instances {
                return Err(Error::Invalid(format!("instance {k} out of range")));
            }
            if std::mem::replace(&mut used[k], true) {
                return Err(Error::Invalid(format!("instance {k} assigned twice")));
            }
        }
        Ok(Assignment { mapping })
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn instance_of(&self, d: usize) -> usize {
        self.mapping[d]
    }

    /// `x_k` per instance.
    pub fn used(&self, n_instances: usize) -> Vec<bool> {
        let mut x = vec![false; n_instances];
        for &k in &self.mapping {
            x[k] = true;
        }
        x
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.mapping.iter().copied().enumerate()
    }

    /// `d0:id;d1:id;...`
    pub fn to_text(&self, catalog: &[InstanceSpec]) -> String {
        self.mapping
            .iter()
            .enumerate()
            .map(|(d, &k)| format!("d{d}:{}", catalog[k].id))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Sum over pairs of hours times price. Terms are added in ascending order,
/// so assignments with the same multiset of pair costs get identical totals.
pub fn cost_of_pairs(pairs: impl IntoIterator<Item = (usize, usize)>, table: &TimeTable) -> f64 {
    let mut terms: Vec<f64> = pairs.into_iter().map(|(d, k)| table.cost(d, k)).collect();
    terms.sort_by(f64::total_cmp);
    terms.into_iter().fold(0.0, |acc, t| acc + t)
}

/// Largest pair total; zero for no pairs.
pub fn makespan_of_pairs(pairs: impl IntoIterator<Item = (usize, usize)>, table: &TimeTable) -> f64 {
    pairs.into_iter().map(|(d, k)| table.total(d, k)).fold(0.0, f64::max)
}

pub fn cost_of(a: &Assignment, table: &TimeTable) -> f64 {
    cost_of_pairs(a.pairs(), table)
}

pub fn makespan_of(a: &Assignment, table: &TimeTable) -> f64 {
    makespan_of_pairs(a.pairs(), table)
}
