//! On-disk translation cache: one JSON file per key under a directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// SHA-256 over the length-prefixed `(template_version, target_language, text)`,
/// as 64 lowercase hex characters.
pub fn cache_key(target_language: &str, text: &str, template_version: &str) -> String {
    let mut hasher = Sha256::new();
    for part in [template_version, target_language, text] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub result: String,
    pub target_language: String,
    pub template_version: String,
    pub attempts: u32,
}

#[derive(Debug, Clone)]
pub struct TranslationCache {
    dir: PathBuf,
}

impl TranslationCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .map_err(|e| Error::io(format!("creating cache dir {}", dir.display()), e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> Result<PathBuf> {
        if key.is_empty() || !key.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::Cache(format!("malformed key `{key}`")));
        }
        Ok(self.dir.join(format!("{key}.json")))
    }

    /// Unreadable or corrupt entries are reported as errors; a missing file is `None`.
    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>> {
        let path = self.path_for(key)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(format!("reading {}", path.display()), e)),
        };
        let entry: CacheEntry = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Cache(format!("{}: {e}", path.display())))?;
        if entry.key != key || entry.result.is_empty() {
            return Err(Error::Cache(format!("{}: inconsistent entry", path.display())));
        }
        Ok(Some(entry))
    }

    /// Writes to a temporary file in the cache directory, then renames over the target.
    pub fn put(&self, entry: &CacheEntry) -> Result<()> {
        let path = self.path_for(&entry.key)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)
            .map_err(|e| Error::io("creating cache temp file", e))?;
        serde_json::to_writer(&mut tmp, entry)?;
        tmp.flush().map_err(|e| Error::io("flushing cache entry", e))?;
        tmp.persist(&path)
            .map_err(|e| Error::io(format!("renaming into {}", path.display()), e.error))?;
        Ok(())
    }

    pub fn len(&self) -> Result<usize> {
        let rd = fs::read_dir(&self.dir)
            .map_err(|e| Error::io(format!("listing {}", self.dir.display()), e))?;
        let mut n = 0;
        for entry in rd {
            let entry = entry.map_err(|e| Error::io("listing cache", e))?;
            if entry.path().extension().is_some_and(|x| x == "json") {
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.len()? == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn keys_are_stable_and_discriminating() {
        let a = cache_key("Chinese", "hello", "v1");
        assert_eq!(a, cache_key("Chinese", "hello", "v1"));
        assert_eq!(a.len(), 64);
        assert_ne!(a, cache_key("Japanese", "hello", "v1"));
        assert_ne!(a, cache_key("Chinese", "hello", "v2"));
        // Length prefixes keep field boundaries unambiguous.
        assert_ne!(cache_key("ab", "c", "v"), cache_key("a", "bc", "v"));
    }

    #[test]
    fn no_collisions_over_ten_thousand_inputs() {
        let keys: HashSet<_> = (0..10_000)
            .map(|i| cache_key(["Chinese", "French"][i % 2], &format!("text {i}"), "v1"))
            .collect();
        assert_eq!(keys.len(), 10_000);
    }

    #[test]
    fn put_get_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TranslationCache::open(dir.path().join("c")).unwrap();
        let key = cache_key("Chinese", "hi", "v1");
        assert_eq!(cache.get(&key).unwrap(), None);
        let entry = CacheEntry {
            key: key.clone(),
            result: "你好".into(),
            target_language: "Chinese".into(),
            template_version: "v1".into(),
            attempts: 1,
        };
        cache.put(&entry).unwrap();
        assert_eq!(cache.get(&key).unwrap(), Some(entry));
        assert_eq!(cache.len().unwrap(), 1);
    }

    #[test]
    fn corrupt_entry_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TranslationCache::open(dir.path()).unwrap();
        let key = cache_key("x", "y", "z");
        fs::write(dir.path().join(format!("{key}.json")), b"{not json").unwrap();
        assert!(matches!(cache.get(&key), Err(Error::Cache(_))));
        assert!(cache.get("../etc/passwd").is_err());
    }
}
