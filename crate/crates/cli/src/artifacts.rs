//! In-memory artifact staging and the run manifest.
//!
//! Nothing touches the output directory until a pipeline has finished, so a
//! failed run leaves no partial output behind.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use critdrift::fieldio;
use critdrift::{ScalarField, VectorField};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    pub fn add_bytes(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, path: impl Into<PathBuf>, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add_bytes(path, bytes);
        Ok(())
    }

    pub fn add_text(&mut self, path: impl Into<PathBuf>, text: String) {
        self.add_bytes(path, text.into_bytes());
    }

    pub fn add_scalar(&mut self, path: impl Into<PathBuf>, f: &ScalarField) {
        self.add_bytes(path, fieldio::encode_binary(f.grid(), &[f.values()]));
    }

    pub fn add_vector(&mut self, path: impl Into<PathBuf>, b: &VectorField) {
        let comps: Vec<&[f64]> = b.components().iter().map(|c| c.values()).collect();
        self.add_bytes(path, fieldio::encode_binary(b.grid(), &comps));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub parallel: bool,
    pub started_at: String,
    pub finished_at: String,
    pub passed: bool,
    pub artifacts: Vec<ArtifactEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Files in `dir` relative to it, sorted.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                out.push(path.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    if dir.exists() {
        walk(dir, dir, &mut out)?;
    }
    out.sort();
    Ok(out)
}

fn previous_manifest(dir: &Path) -> Result<Option<RunManifest>> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Some(
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
    ))
}

/// Fails unless `dir` is absent, empty, or holds only files listed by an
/// earlier manifest.
pub fn check_output_dir(dir: &Path) -> Result<()> {
    if dir.exists() && !dir.is_dir() {
        bail!("output path {} is not a directory", dir.display());
    }
    let existing = list_files(dir)?;
    if existing.is_empty() {
        return Ok(());
    }
    let Some(manifest) = previous_manifest(dir)? else {
        bail!(
            "output directory {} is not empty and has no {MANIFEST}; refusing to mix runs",
            dir.display()
        );
    };
    let owned: Vec<PathBuf> = manifest.artifacts.iter().map(|a| PathBuf::from(&a.path)).collect();
    if let Some(stray) = existing.iter().find(|p| p.as_path() != Path::new(MANIFEST) && !owned.contains(p)) {
        bail!(
            "output directory {} contains {} which no earlier run produced",
            dir.display(),
            stray.display()
        );
    }
    Ok(())
}

pub struct RunMeta {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub parallel: bool,
    pub started: DateTime<Utc>,
    pub passed: bool,
}

/// Replaces the previous run's files with `artifacts` and writes the manifest.
pub fn commit(dir: &Path, artifacts: Artifacts, meta: RunMeta) -> Result<RunManifest> {
    check_output_dir(dir)?;
    if let Some(old) = previous_manifest(dir)? {
        for a in &old.artifacts {
            let path = dir.join(&a.path);
            if path.exists() {
                fs::remove_file(&path).with_context(|| format!("removing {}", path.display()))?;
            }
        }
    }
    let mut entries = Vec::new();
    for (rel, bytes) in &artifacts.files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        entries.push(ArtifactEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = RunManifest {
        tool: "critdrift".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: meta.command,
        config_sha256: meta.config_sha256,
        seed: meta.seed,
        parallel: meta.parallel,
        started_at: timestamp(meta.started),
        finished_at: timestamp(Utc::now()),
        passed: meta.passed,
        artifacts: entries,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(MANIFEST), bytes).with_context(|| format!("writing {MANIFEST}"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> RunMeta {
        RunMeta {
            command: "test".into(),
            config_sha256: String::new(),
            seed: 1,
            parallel: false,
            started: Utc::now(),
            passed: true,
        }
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn manifest_lists_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::default();
        a.add_text("reports/a.txt", "x".into());
        a.add_text("b.txt", "y".into());
        let m = commit(dir.path(), a, meta()).unwrap();
        let files = list_files(dir.path()).unwrap();
        let mut listed: Vec<PathBuf> = m.artifacts.iter().map(|e| PathBuf::from(&e.path)).collect();
        listed.push(PathBuf::from(MANIFEST));
        listed.sort();
        assert_eq!(files, listed);
        for e in &m.artifacts {
            assert_eq!(e.sha256, sha256_hex(&fs::read(dir.path().join(&e.path)).unwrap()));
        }
    }

    #[test]
    fn rerun_replaces_own_files_and_refuses_foreign_ones() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::default();
        a.add_text("old.txt", "1".into());
        commit(dir.path(), a, meta()).unwrap();
        let mut b = Artifacts::default();
        b.add_text("new.txt", "2".into());
        commit(dir.path(), b, meta()).unwrap();
        assert!(!dir.path().join("old.txt").exists());
        fs::write(dir.path().join("foreign.txt"), "z").unwrap();
        assert!(check_output_dir(dir.path()).is_err());
    }
}
