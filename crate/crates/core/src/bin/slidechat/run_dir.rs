use std::path::{Path, PathBuf};

use serde::Serialize;
use slidechat::{Error, Result};
use sha2::{Digest, Sha256};

#[derive(Serialize)]
struct Entry {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    files: Vec<Entry>,
}

/// Output directory of one command. Files written through it are listed
/// with their hashes in `run-<command>.json`.
pub struct RunDir {
    root: PathBuf,
    command: &'static str,
    seed: u64,
    files: Vec<PathBuf>,
}

impl RunDir {
    pub fn create(root: PathBuf, command: &'static str, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(RunDir { root, command, seed, files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Records a file some library call already wrote.
    pub fn track(&mut self, path: PathBuf) {
        if !self.files.contains(&path) {
            self.files.push(path);
        }
    }

    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        self.track(p.clone());
        Ok(p)
    }

    pub fn finish(self) -> Result<()> {
        let mut files = Vec::with_capacity(self.files.len());
        for p in &self.files {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            let rel = p.strip_prefix(&self.root).unwrap_or(p);
            files.push(Entry { path: rel.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) });
        }
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let m = Manifest { command: self.command, seed: self.seed, files };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n";
        let p = self.root.join(format!("run-{}.json", self.command));
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }
}
