//! Replicate run manifests and the artifact hash manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tdamc_core::simulate::ReplicateKind;

use crate::error::{Error, Result};

pub const ARTIFACTS: &str = "artifacts.json";
/// Subdirectories left out of the artifact manifest (wall-clock timings).
pub const UNHASHED_DIRS: &[&str] = &["solve_reports"];
/// Top-level files left out of the artifact manifest.
pub const UNHASHED_FILES: &[&str] = &[ARTIFACTS, "validation.json"];

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_bytes(
        &fs::read(path).map_err(|e| Error::io(path, e))?,
    ))
}

/// Hash of the compact JSON form of `value`. Struct fields serialize in
/// declaration order and maps are ordered, so the form is canonical.
pub fn params_hash<T: Serialize>(value: &T) -> String {
    sha256_bytes(&serde_json::to_vec(value).expect("parameters serialize"))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub file: String,
    pub sha256: String,
}

impl FileHash {
    pub fn of(dir: &Path, rel: &str) -> Result<Self> {
        Ok(Self {
            file: rel.to_string(),
            sha256: sha256_file(&dir.join(rel))?,
        })
    }

    fn verify(&self, dir: &Path) -> Result<()> {
        let path = dir.join(&self.file);
        if !path.exists() {
            return Err(Error::Integrity(format!("`{}` is missing", self.file)));
        }
        if sha256_file(&path)? != self.sha256 {
            return Err(Error::Integrity(format!(
                "`{}` does not match its recorded hash",
                self.file
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateEntry {
    pub index: usize,
    /// Block-level histogram.
    pub histogram: FileHash,
    /// Solved counts of the units above the blocks.
    pub units: FileHash,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: ReplicateKind,
    pub m_or_s: usize,
    pub master_seed: u64,
    pub params_hash: String,
    /// Input histogram for AMC runs. MC input is confidential and not listed.
    pub input: Option<FileHash>,
    pub replicates: Vec<ReplicateEntry>,
}

impl RunManifest {
    pub fn file_name(kind: ReplicateKind) -> String {
        format!("manifest_{}.json", kind.as_str())
    }

    /// Checks that every listed file exists with its recorded hash.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        if self.replicates.len() != self.m_or_s {
            return Err(Error::Integrity(format!(
                "{} manifest lists {} replicates, expected {}",
                self.kind.as_str(),
                self.replicates.len(),
                self.m_or_s
            )));
        }
        if let Some(input) = &self.input {
            input.verify(dir)?;
        }
        for r in &self.replicates {
            r.histogram.verify(dir)?;
            r.units.verify(dir)?;
        }
        Ok(())
    }
}

/// Reads and verifies the manifest of `kind` in `dir`.
pub fn load_verified(dir: &Path, kind: ReplicateKind) -> Result<RunManifest> {
    let path = dir.join(RunManifest::file_name(kind));
    if !path.exists() {
        return Err(Error::Integrity(format!("`{}` is missing", path.display())));
    }
    let m: RunManifest = crate::io::read_json(&path)?;
    m.verify(dir)?;
    Ok(m)
}

/// SHA-256 of every artifact, keyed by `/`-separated relative path.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub files: BTreeMap<String, String>,
}

impl ArtifactManifest {
    pub fn build(dir: &Path) -> Result<Self> {
        let mut files = BTreeMap::new();
        walk(dir, "", &mut files)?;
        Ok(Self { files })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        crate::io::write_json(&dir.join(ARTIFACTS), self)
    }

    /// Differences between the recorded hashes and the files on disk.
    pub fn diff(&self, dir: &Path) -> Result<Vec<String>> {
        let now = Self::build(dir)?;
        let mut out = Vec::new();
        for (f, h) in &self.files {
            match now.files.get(f) {
                None => out.push(format!("`{f}` is missing")),
                Some(g) if g != h => out.push(format!("`{f}` changed")),
                Some(_) => {}
            }
        }
        for f in now.files.keys() {
            if !self.files.contains_key(f) {
                out.push(format!("`{f}` is not recorded"));
            }
        }
        Ok(out)
    }
}

fn walk(dir: &Path, prefix: &str, out: &mut BTreeMap<String, String>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let path = entry.path();
        let rel = format!("{prefix}{name}");
        if path.is_dir() {
            if !(prefix.is_empty() && UNHASHED_DIRS.contains(&name.as_str())) {
                walk(&path, &format!("{rel}/"), out)?;
            }
        } else if !(prefix.is_empty() && UNHASHED_FILES.contains(&name.as_str())) {
            out.insert(rel, sha256_file(&path)?);
        }
    }
    Ok(())
}
