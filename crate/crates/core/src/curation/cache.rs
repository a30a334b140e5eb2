use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub template: String,
    pub input: String,
    pub model: String,
}

impl CacheKey {
    pub fn new(template_hash: &str, input: &str, model: &str) -> Self {
        CacheKey { template: template_hash.into(), input: sha256_hex(input), model: model.into() }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    #[serde(flatten)]
    key: CacheKey,
    reply: String,
}

struct Inner {
    entries: HashMap<CacheKey, String>,
    file: Option<File>,
}

/// Reply cache keyed by (template hash, input hash, model), optionally
/// backed by an append-only JSONL file. All writes go through one lock.
pub struct PromptCache {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl PromptCache {
    pub fn in_memory() -> Self {
        PromptCache { path: None, inner: Mutex::new(Inner { entries: HashMap::new(), file: None }) }
    }

    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let l: CacheLine =
                    serde_json::from_str(line).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
                entries.insert(l.key, l.reply);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
        Ok(PromptCache { path: Some(path.to_path_buf()), inner: Mutex::new(Inner { entries, file: Some(file) }) })
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        self.inner.lock().expect("cache lock").entries.get(key).cloned()
    }

    pub fn put(&self, key: CacheKey, reply: &str) -> Result<()> {
        let mut inner = self.inner.lock().expect("cache lock");
        if let Some(f) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&CacheLine { key: key.clone(), reply: reply.into() }).expect("cache line");
            line.push('\n');
            let path = self.path.as_deref().unwrap_or(Path::new("<cache>"));
            f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        inner.entries.insert(key, reply.into());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cache.jsonl");
        let k = CacheKey::new("t", "input", "m");
        {
            let c = PromptCache::open(&p).unwrap();
            assert!(c.get(&k).is_none());
            c.put(k.clone(), "reply\nwith newline").unwrap();
        }
        let c = PromptCache::open(&p).unwrap();
        assert_eq!(c.get(&k).as_deref(), Some("reply\nwith newline"));
        assert!(c.get(&CacheKey::new("t", "input", "other")).is_none());
    }
}
