//! Content-addressed response cache.
//!
//! Layout: `<dir>/<first two hex digits>/<key>.json`. Entries are written to
//! a temp file in the same directory and renamed into place, and never
//! rewritten afterwards.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub request_digest_inputs_summary: Value,
    pub response: String,
    pub response_sha256: String,
    pub created_at: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> ResponseCache {
        ResponseCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("xx");
        self.dir.join(shard).join(format!("{key}.json"))
    }

    fn corrupt(path: &Path, reason: impl Into<String>) -> GatewayError {
        GatewayError::CacheCorrupt {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    /// Reads and verifies one entry file.
    pub fn read_entry(path: &Path) -> Result<CacheEntry, GatewayError> {
        let bytes = fs::read(path).map_err(|e| Self::corrupt(path, e.to_string()))?;
        let entry: CacheEntry = serde_json::from_slice(&bytes).map_err(|e| Self::corrupt(path, e.to_string()))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        if entry.key != stem {
            return Err(Self::corrupt(path, format!("entry key {} does not match file name", entry.key)));
        }
        if sha256_hex(entry.response.as_bytes()) != entry.response_sha256 {
            return Err(Self::corrupt(path, "response digest mismatch"));
        }
        Ok(entry)
    }

    pub fn get(&self, key: &str) -> Result<Option<String>, GatewayError> {
        let path = self.entry_path(key);
        if !path.exists() {
            return Ok(None);
        }
        Self::read_entry(&path).map(|e| Some(e.response))
    }

    /// Persists an entry unless one already exists for `key`.
    pub fn put(&self, key: &str, summary: Value, response: &str) -> Result<(), GatewayError> {
        let path = self.entry_path(key);
        if path.exists() {
            return Ok(());
        }
        let parent = path.parent().expect("entry path has a shard directory");
        fs::create_dir_all(parent).map_err(|e| GatewayError::Io(format!("{}: {e}", parent.display())))?;
        let entry = CacheEntry {
            key: key.to_string(),
            request_digest_inputs_summary: summary,
            response: response.to_string(),
            response_sha256: sha256_hex(response.as_bytes()),
            created_at: chrono::Utc::now().to_rfc3339(),
        };
        let body = serde_json::to_string_pretty(&entry).expect("cache entry serializes");
        let mut tmp = tempfile::Builder::new()
            .prefix(".tmp-")
            .suffix(".json")
            .tempfile_in(parent)
            .map_err(|e| GatewayError::Io(e.to_string()))?;
        tmp.write_all(body.as_bytes())
            .and_then(|_| tmp.flush())
            .map_err(|e| GatewayError::Io(e.to_string()))?;
        tmp.persist(&path).map_err(|e| GatewayError::Io(e.to_string()))?;
        Ok(())
    }

    /// Every entry file, sorted by path.
    pub fn entry_paths(&self) -> Vec<PathBuf> {
        let mut paths = Vec::new();
        let Ok(shards) = fs::read_dir(&self.dir) else {
            return paths;
        };
        for shard in shards.flatten() {
            if !shard.path().is_dir() {
                continue;
            }
            if let Ok(files) = fs::read_dir(shard.path()) {
                for f in files.flatten() {
                    let p = f.path();
                    let name = f.file_name();
                    let name = name.to_string_lossy();
                    if p.extension().is_some_and(|x| x == "json") && !name.starts_with(".tmp-") {
                        paths.push(p);
                    }
                }
            }
        }
        paths.sort();
        paths
    }

    pub fn inspect(&self) -> CacheStats {
        let mut stats = CacheStats::default();
        for path in self.entry_paths() {
            match Self::read_entry(&path) {
                Ok(entry) => {
                    stats.entries += 1;
                    stats.response_bytes += entry.response.len() as u64;
                }
                Err(_) => stats.corrupt.push(path),
            }
        }
        stats
    }

    /// Removes corrupt entries, leftover temp files and, when `older_than`
    /// is given, entries created before that instant. Returns removed paths.
    pub fn prune(&self, older_than: Option<chrono::DateTime<chrono::Utc>>) -> Vec<PathBuf> {
        let mut removed = Vec::new();
        for path in self.entry_paths() {
            let drop = match Self::read_entry(&path) {
                Err(_) => true,
                Ok(entry) => older_than.is_some_and(|cutoff| {
                    chrono::DateTime::parse_from_rfc3339(&entry.created_at)
                        .map(|t| t < cutoff)
                        .unwrap_or(true)
                }),
            };
            if drop && fs::remove_file(&path).is_ok() {
                removed.push(path);
            }
        }
        if let Ok(shards) = fs::read_dir(&self.dir) {
            for shard in shards.flatten() {
                if let Ok(files) = fs::read_dir(shard.path()) {
                    for f in files.flatten() {
                        if f.file_name().to_string_lossy().starts_with(".tmp-") && fs::remove_file(f.path()).is_ok() {
                            removed.push(f.path());
                        }
                    }
                }
            }
        }
        removed
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    pub response_bytes: u64,
    pub corrupt: Vec<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    const KEY: &str = "ab12cd";

    #[test]
    fn put_then_get() {
        let tmp = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(tmp.path());
        assert_eq!(cache.get(KEY).unwrap(), None);
        cache.put(KEY, json!({"tag": "t"}), "hello").unwrap();
        assert_eq!(cache.get(KEY).unwrap().as_deref(), Some("hello"));
        assert!(tmp.path().join("ab").join("ab12cd.json").is_file());
        // immutable once written
        cache.put(KEY, json!({}), "other").unwrap();
        assert_eq!(cache.get(KEY).unwrap().as_deref(), Some("hello"));
    }

    #[test]
    fn truncated_entry_is_corrupt() {
        let tmp = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(tmp.path());
        cache.put(KEY, json!({}), "hello").unwrap();
        let path = cache.entry_path(KEY);
        let body = fs::read(&path).unwrap();
        fs::write(&path, &body[..body.len() / 2]).unwrap();
        assert!(matches!(cache.get(KEY), Err(GatewayError::CacheCorrupt { .. })));
        assert_eq!(cache.inspect().corrupt.len(), 1);
        assert_eq!(cache.prune(None), vec![path]);
        assert_eq!(cache.get(KEY).unwrap(), None);
    }

    #[test]
    fn tampered_response_is_corrupt() {
        let tmp = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(tmp.path());
        cache.put(KEY, json!({}), "hello").unwrap();
        let path = cache.entry_path(KEY);
        let text = fs::read_to_string(&path).unwrap().replace("\"hello\"", "\"HELLO\"");
        fs::write(&path, text).unwrap();
        assert!(matches!(cache.get(KEY), Err(GatewayError::CacheCorrupt { .. })));
    }

    #[test]
    fn prune_by_age() {
        let tmp = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(tmp.path());
        cache.put(KEY, json!({}), "hello").unwrap();
        assert!(cache.prune(Some(chrono::Utc::now() - chrono::Duration::days(1))).is_empty());
        assert_eq!(cache.prune(Some(chrono::Utc::now() + chrono::Duration::days(1))).len(), 1);
        assert_eq!(cache.inspect().entries, 0);
    }
}
