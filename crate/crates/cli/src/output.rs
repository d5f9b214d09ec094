use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use graphdiff::GraphBatch;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// A file the run read or wrote, identified by content hash.
#[derive(Serialize)]
pub struct FileRef {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileRef {
    pub fn of(path: &Path) -> anyhow::Result<Self> {
        Ok(FileRef { path: path.to_path_buf(), sha256: sha256_file(path)? })
    }
}

/// Node count -> number of graphs with that many nodes.
pub fn node_distribution(counts: &[usize]) -> BTreeMap<usize, usize> {
    let mut dist = BTreeMap::new();
    for &n in counts {
        *dist.entry(n).or_insert(0) += 1;
    }
    dist
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Writes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

/// `data/x.gl` -> `data/x.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

pub fn read_batch(path: &Path) -> anyhow::Result<GraphBatch> {
    let batch = graphdiff::graph::read_graphs(path).with_context(|| format!("reading graphs from {}", path.display()))?;
    anyhow::ensure!(!batch.is_empty(), "{} holds no graphs", path.display());
    Ok(batch)
}

pub fn write_batch(path: &Path, batch: &GraphBatch) -> anyhow::Result<()> {
    write_file(path, graphdiff::graph::format_edge_list(batch))
}

pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
