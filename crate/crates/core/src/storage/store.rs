use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::StorageError;
use crate::marketplace::FileId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredFile {
    pub uri: String,
    pub file_id: FileId,
    pub owner: String,
    pub payload: Vec<u8>,
    pub encrypted: bool,
}

/// Payload persistence. `put` never overwrites.
pub trait BlobStore: Send + Sync {
    fn put(&self, file: StoredFile) -> Result<(), StorageError>;
    fn get(&self, uri: &str) -> Result<Option<StoredFile>, StorageError>;
    fn contains(&self, uri: &str) -> bool;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Default)]
pub struct MemStore {
    files: RwLock<HashMap<String, StoredFile>>,
}

impl MemStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl BlobStore for MemStore {
    fn put(&self, file: StoredFile) -> Result<(), StorageError> {
        let mut files = self.files.write();
        if files.contains_key(&file.uri) {
            return Err(StorageError::UriTaken(file.uri));
        }
        files.insert(file.uri.clone(), file);
        Ok(())
    }

    fn get(&self, uri: &str) -> Result<Option<StoredFile>, StorageError> {
        Ok(self.files.read().get(uri).cloned())
    }

    fn contains(&self, uri: &str) -> bool {
        self.files.read().contains_key(uri)
    }

    fn len(&self) -> usize {
        self.files.read().len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    uri: String,
    file_id: FileId,
    owner: String,
    encrypted: bool,
    blob: String,
}

/// One file per payload under `blobs/`, plus an append-only `index.jsonl`
/// mapping URIs to blobs. The index is reloaded on open.
pub struct DirStore {
    root: PathBuf,
    index: Mutex<(BTreeMap<String, IndexEntry>, File)>,
}

impl DirStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StorageError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("blobs"))?;
        let index_path = root.join("index.jsonl");
        let mut entries = BTreeMap::new();
        if index_path.exists() {
            for line in BufReader::new(File::open(&index_path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: IndexEntry = serde_json::from_str(&line)
                    .map_err(|e| StorageError::Corrupt(format!("index line: {e}")))?;
                entries.insert(e.uri.clone(), e);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&index_path)?;
        Ok(DirStore {
            root,
            index: Mutex::new((entries, file)),
        })
    }
}

impl BlobStore for DirStore {
    fn put(&self, file: StoredFile) -> Result<(), StorageError> {
        let mut guard = self.index.lock();
        let (entries, index) = &mut *guard;
        if entries.contains_key(&file.uri) {
            return Err(StorageError::UriTaken(file.uri));
        }
        let blob = format!("{:08}.bin", entries.len());
        fs::write(self.root.join("blobs").join(&blob), &file.payload)?;
        let entry = IndexEntry {
            uri: file.uri,
            file_id: file.file_id,
            owner: file.owner,
            encrypted: file.encrypted,
            blob,
        };
        let mut line = serde_json::to_vec(&entry).expect("index entry serializes");
        line.push(b'\n');
        index.write_all(&line)?;
        index.sync_data()?;
        entries.insert(entry.uri.clone(), entry);
        Ok(())
    }

    fn get(&self, uri: &str) -> Result<Option<StoredFile>, StorageError> {
        let Some(e) = self.index.lock().0.get(uri).cloned() else {
            return Ok(None);
        };
        let payload = fs::read(self.root.join("blobs").join(&e.blob))?;
        Ok(Some(StoredFile {
            uri: e.uri,
            file_id: e.file_id,
            owner: e.owner,
            payload,
            encrypted: e.encrypted,
        }))
    }

    fn contains(&self, uri: &str) -> bool {
        self.index.lock().0.contains_key(uri)
    }

    fn len(&self) -> usize {
        self.index.lock().0.len()
    }
}
