//! Content-addressed response cache.
//!
//! Entries are single JSON files named by request digest, sharded by the
//! first two hex characters. Writes go through a temp file and an atomic
//! rename, so concurrent writers of identical content are last-writer-wins
//! and a crash never leaves a torn entry.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{
    cache_key, BackendError, ChatMessage, Generate, Generation, GenerationParams, TokenUsage,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<TokenUsage>,
    pub created_at: u64,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub entries: u64,
    pub bytes: u64,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<ResponseCache> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        let shard = &key[..2.min(key.len())];
        self.dir.join(shard).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        let path = self.entry_path(key);
        let text = fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn put(&self, key: &str, response: &str, usage: Option<TokenUsage>) -> std::io::Result<()> {
        let entry = CacheEntry {
            key: key.to_string(),
            response: response.to_string(),
            usage,
            created_at: now_unix(),
        };
        let path = self.entry_path(key);
        let parent = path.parent().expect("entry path has parent");
        fs::create_dir_all(parent)?;
        let tmp = parent.join(format!(".{key}.{}.tmp", std::process::id()));
        fs::write(&tmp, serde_json::to_vec(&entry).expect("entry serializes"))?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn stats(&self) -> std::io::Result<CacheStats> {
        let mut stats = CacheStats::default();
        if !self.dir.exists() {
            return Ok(stats);
        }
        for shard in fs::read_dir(&self.dir)? {
            let shard = shard?;
            if !shard.file_type()?.is_dir() {
                continue;
            }
            for entry in fs::read_dir(shard.path())? {
                let entry = entry?;
                let name = entry.file_name();
                if name.to_string_lossy().ends_with(".json") {
                    stats.entries += 1;
                    stats.bytes += entry.metadata()?.len();
                }
            }
        }
        Ok(stats)
    }

    pub fn clear(&self) -> std::io::Result<u64> {
        let before = self.stats()?.entries;
        if self.dir.exists() {
            fs::remove_dir_all(&self.dir)?;
            fs::create_dir_all(&self.dir)?;
        }
        Ok(before)
    }
}

/// Wraps a backend with the persistent cache. With greedy parameters,
/// identical requests always hit after the first write.
pub struct CachedBackend<B> {
    inner: B,
    cache: ResponseCache,
}

impl<B: Generate> CachedBackend<B> {
    pub fn new(inner: B, cache: ResponseCache) -> Self {
        CachedBackend { inner, cache }
    }
}

impl<B: Generate> Generate for CachedBackend<B> {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }

    fn generate(
        &self,
        messages: &[ChatMessage],
        params: &GenerationParams,
        sample_index: u32,
    ) -> Result<Generation, BackendError> {
        let key = cache_key(self.backend_id(), messages, params, sample_index);
        if let Some(entry) = self.cache.get(&key) {
            return Ok(Generation {
                text: entry.response,
                usage: entry.usage,
                cache_hit: true,
            });
        }
        let generation = self.inner.generate(messages, params, sample_index)?;
        self.cache
            .put(&key, &generation.text, generation.usage)
            .map_err(|e| BackendError::Config(format!("cache write failed: {e}")))?;
        Ok(generation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock::MockJudge;
    use crate::backend::{CountingBackend, Role};
    use std::sync::Arc;

    fn msgs(text: &str) -> Vec<ChatMessage> {
        vec![
            ChatMessage::new(Role::System, "s"),
            ChatMessage::new(Role::User, text.to_string()),
        ]
    }

    #[test]
    fn second_identical_request_hits() {
        let dir = tempfile::tempdir().unwrap();
        let counting = Arc::new(CountingBackend::new(MockJudge::always_first()));
        let cached = CachedBackend::new(
            Arc::clone(&counting),
            ResponseCache::open(dir.path()).unwrap(),
        );
        let params = GenerationParams::greedy();
        let request = msgs("prompt body");

        let cold = cached.generate(&request, &params, 0).unwrap();
        assert!(!cold.cache_hit);
        let warm = cached.generate(&request, &params, 0).unwrap();
        assert!(warm.cache_hit);
        assert_eq!(cold.text, warm.text);
        assert_eq!(counting.calls(), 1);

        // Reopening the cache still hits: keys are stable across processes.
        let reopened = CachedBackend::new(
            Arc::clone(&counting),
            ResponseCache::open(dir.path()).unwrap(),
        );
        assert!(reopened.generate(&request, &params, 0).unwrap().cache_hit);
        assert_eq!(counting.calls(), 1);
    }

    #[test]
    fn stats_and_clear() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        cache.put("aa11", "r1", None).unwrap();
        cache.put("bb22", "r2", None).unwrap();
        let stats = cache.stats().unwrap();
        assert_eq!(stats.entries, 2);
        assert!(stats.bytes > 0);
        assert_eq!(cache.clear().unwrap(), 2);
        assert_eq!(cache.stats().unwrap().entries, 0);
    }
}
