//! On-disk cache of per-node forward evaluations.
//!
//! Entries are JSON files named by the sha256 of (parameters, model, setup
//! hash). Writes go to a temporary file in the target directory and are renamed
//! into place, so concurrent writers never expose a partial entry.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::kernel::KernelParams;
use crate::kinetic::SolveDiagnostics;
use crate::measurement::{Evaluation, GMatrix, Model};

#[derive(Serialize)]
struct Key<'a> {
    params: &'a KernelParams,
    model: &'a Model,
    setup_hash: &'a str,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    g: GMatrix,
    diagnostics: SolveDiagnostics,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    dir: PathBuf,
}

impl ForwardCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(params: &KernelParams, model: &Model, setup_hash: &str) -> Result<String> {
        let bytes = serde_json::to_vec(&Key {
            params,
            model,
            setup_hash,
        })?;
        Ok(hex::encode(Sha256::digest(bytes)))
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    /// Cached evaluation, if present and readable. Corrupt entries are ignored.
    pub fn get(&self, key: &str) -> Option<Evaluation> {
        let bytes = std::fs::read(self.path(key)).ok()?;
        let e: Entry = serde_json::from_slice(&bytes).ok()?;
        Some(Evaluation {
            g: e.g,
            diagnostics: e.diagnostics,
        })
    }

    pub fn put(&self, key: &str, eval: &Evaluation) -> Result<()> {
        let path = self.path(key);
        let parent = path.parent().expect("cache entries live in a subdirectory");
        std::fs::create_dir_all(parent)?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
        serde_json::to_writer(
            &mut tmp,
            &Entry {
                g: eval.g.clone(),
                diagnostics: eval.diagnostics,
            },
        )?;
        tmp.flush()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }
}
