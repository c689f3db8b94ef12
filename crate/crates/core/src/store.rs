//! Content-addressed blob store.
//!
//! Blobs are keyed by the lowercase hex SHA-256 of their bytes. Writes are
//! idempotent; the on-disk form writes to a temp name and renames so
//! concurrent writers of the same digest cannot tear a blob.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("blob store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("no blob with digest {0}")]
    Missing(String),
    #[error("blob {key} is corrupt: content hashes to {actual}")]
    Corrupt { key: String, actual: String },
}

pub fn digest_of(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex_lower(&h.finalize())
}

fn hex_lower(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub trait BlobStore: Send + Sync {
    /// Stores the bytes and returns their digest. Re-storing existing content
    /// is a no-op that returns the same key.
    fn put(&self, bytes: &[u8]) -> Result<String, StoreError>;
    fn get(&self, digest: &str) -> Result<Vec<u8>, StoreError>;
}

/// Directory-backed store: one file per blob at `<root>/<digest>.png`.
pub struct DirStore {
    root: PathBuf,
}

impl DirStore {
    pub fn create(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        std::fs::create_dir_all(root.as_ref())?;
        Ok(DirStore { root: root.as_ref().to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn blob_path(&self, digest: &str) -> PathBuf {
        self.root.join(format!("{digest}.png"))
    }
}

impl BlobStore for DirStore {
    fn put(&self, bytes: &[u8]) -> Result<String, StoreError> {
        let key = digest_of(bytes);
        let path = self.blob_path(&key);
        if path.exists() {
            return Ok(key);
        }
        let tmp = self.root.join(format!(".tmp-{key}-{}", std::process::id()));
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, &path)?;
        Ok(key)
    }

    fn get(&self, digest: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.blob_path(digest);
        let bytes = std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => StoreError::Missing(digest.to_string()),
            _ => StoreError::Io(e),
        })?;
        let actual = digest_of(&bytes);
        if actual != digest {
            return Err(StoreError::Corrupt { key: digest.to_string(), actual });
        }
        Ok(bytes)
    }
}

/// In-memory store for tests and transient runs.
#[derive(Default)]
pub struct MemoryStore {
    blobs: Mutex<HashMap<String, Vec<u8>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.blobs.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl BlobStore for MemoryStore {
    fn put(&self, bytes: &[u8]) -> Result<String, StoreError> {
        let key = digest_of(bytes);
        self.blobs.lock().unwrap().entry(key.clone()).or_insert_with(|| bytes.to_vec());
        Ok(key)
    }

    fn get(&self, digest: &str) -> Result<Vec<u8>, StoreError> {
        self.blobs
            .lock()
            .unwrap()
            .get(digest)
            .cloned()
            .ok_or_else(|| StoreError::Missing(digest.to_string()))
    }
}
