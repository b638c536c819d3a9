//! Content-addressed response cache.
//!
//! Keys digest every input that can change a completion; bodies are the raw
//! response text. Entries live in memory and, when a cache directory is
//! configured, as files named by hex digest so replays survive restarts.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;

use sha2::{Digest, Sha256};

/// Digest over (model_id, system_prompt, user_prompt, temperature, sample
/// index). Fields are length-framed so no two input tuples share a digest
/// preimage.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub digest: String,
}

impl CacheKey {
    pub fn new(
        model_id: &str,
        system_prompt: &str,
        user_prompt: &str,
        temperature: f64,
        sample_index: u32,
    ) -> Self {
        let mut hasher = Sha256::new();
        for field in [model_id, system_prompt, user_prompt] {
            hasher.update((field.len() as u64).to_be_bytes());
            hasher.update(field.as_bytes());
        }
        hasher.update(temperature.to_bits().to_be_bytes());
        hasher.update(sample_index.to_be_bytes());
        Self {
            digest: hex::encode(hasher.finalize()),
        }
    }
}

/// Thread-safe cache shared by all pipeline workers. Reads and writes are
/// atomic at entry granularity.
#[derive(Debug)]
pub struct ResponseCache {
    memory: Mutex<HashMap<String, String>>,
    dir: Option<PathBuf>,
}

impl ResponseCache {
    /// Memory-only cache.
    pub fn in_memory() -> Self {
        Self {
            memory: Mutex::new(HashMap::new()),
            dir: None,
        }
    }

    /// Cache backed by `dir`; the directory is created if absent.
    pub fn with_dir(dir: PathBuf) -> std::io::Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            memory: Mutex::new(HashMap::new()),
            dir: Some(dir),
        })
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        if let Some(text) = self.memory.lock().unwrap().get(&key.digest).cloned() {
            return Some(text);
        }
        let dir = self.dir.as_ref()?;
        let text = std::fs::read_to_string(dir.join(&key.digest)).ok()?;
        self.memory
            .lock()
            .unwrap()
            .insert(key.digest.clone(), text.clone());
        Some(text)
    }

    pub fn put(&self, key: &CacheKey, text: &str) {
        self.memory
            .lock()
            .unwrap()
            .insert(key.digest.clone(), text.to_string());
        if let Some(dir) = &self.dir {
            // Write-then-rename keeps concurrent readers off half-written files.
            let tmp = dir.join(format!(".{}.tmp", key.digest));
            if std::fs::write(&tmp, text).is_ok() {
                let _ = std::fs::rename(&tmp, dir.join(&key.digest));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_inputs_equal_digest() {
        let a = CacheKey::new("m", "s", "u", 0.0, 0);
        let b = CacheKey::new("m", "s", "u", 0.0, 0);
        assert_eq!(a, b);
    }

    #[test]
    fn any_field_change_changes_digest() {
        let base = CacheKey::new("m", "s", "u", 0.0, 0);
        assert_ne!(base, CacheKey::new("m2", "s", "u", 0.0, 0));
        assert_ne!(base, CacheKey::new("m", "s2", "u", 0.0, 0));
        assert_ne!(base, CacheKey::new("m", "s", "u2", 0.0, 0));
        assert_ne!(base, CacheKey::new("m", "s", "u", 0.5, 0));
        assert_ne!(base, CacheKey::new("m", "s", "u", 0.0, 1));
    }

    #[test]
    fn field_framing_prevents_boundary_collisions() {
        // ("ab", "c") and ("a", "bc") must not collide.
        let a = CacheKey::new("ab", "c", "", 0.0, 0);
        let b = CacheKey::new("a", "bc", "", 0.0, 0);
        assert_ne!(a, b);
    }

    #[test]
    fn disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let key = CacheKey::new("m", "s", "u", 0.0, 0);
        {
            let cache = ResponseCache::with_dir(dir.path().to_path_buf()).unwrap();
            cache.put(&key, "stored text");
        }
        let cache = ResponseCache::with_dir(dir.path().to_path_buf()).unwrap();
        assert_eq!(cache.get(&key).as_deref(), Some("stored text"));
    }
}
