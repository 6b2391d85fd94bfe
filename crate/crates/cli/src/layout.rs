//! Run directory layout, the manifest, and file helpers.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub const MANIFEST: &str = "manifest.txt";
pub const PATCHES: &str = "patches.csv";
pub const PARTITIONS: &str = "partitions";
pub const ENCRYPTED: &str = "encrypted";
pub const RISK: &str = "risk.csv";
pub const CANDIDATES: &str = "candidates.csv";

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST)
    }

    pub fn patches(&self) -> PathBuf {
        self.root.join(PATCHES)
    }

    pub fn partition(&self, label: &str) -> PathBuf {
        self.root.join(PARTITIONS).join(format!("{label}.csv"))
    }

    pub fn encrypted_dir(&self, label: &str) -> PathBuf {
        self.root.join(ENCRYPTED).join(label)
    }

    /// Labels, key and private mapping of one class.
    pub fn class_files(&self, label: &str, class: usize) -> [PathBuf; 3] {
        let d = self.encrypted_dir(label);
        [
            d.join(format!("class_{class}.csv")),
            d.join(format!("class_{class}.basis")),
            d.join(format!("class_{class}.map")),
        ]
    }

    pub fn risk(&self) -> PathBuf {
        self.root.join(RISK)
    }

    pub fn candidates(&self) -> PathBuf {
        self.root.join(CANDIDATES)
    }
}

/// Reads a file another stage should have produced.
pub fn read_input(path: &Path, producer: &str) -> Result<String> {
    if !path.exists() {
        bail!("missing stage input {} (produced by `price {producer}`)", path.display());
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".part");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Ordered `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .with_context(|| format!("manifest has no `{key}` entry"))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# price run manifest\n");
        for (k, v) in &self.entries {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut m = Manifest::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("{}:{}: expected key = value", path.display(), i + 1);
            };
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }

    pub fn load(run: &RunDir) -> Result<Self> {
        let path = run.manifest();
        Manifest::parse(&read_input(&path, "split")?, &path)
    }

    pub fn save(&self, run: &RunDir) -> Result<()> {
        write_file(&run.manifest(), &self.to_text())
    }
}
