//! Append-only JSON-lines response cache keyed by request digest.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use super::CompletionRecord;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cache {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Outcome of re-deriving every record's key from its request.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct VerifyReport {
    pub records: usize,
    pub unique_keys: usize,
    /// Line numbers whose stored key does not match the request digest.
    pub mismatched_lines: Vec<usize>,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.mismatched_lines.is_empty()
    }
}

/// Reads every record of a cache file in write order, with line numbers.
///
/// A malformed final line is treated as an interrupted append and dropped;
/// a malformed line anywhere else is an error.
pub fn read_records(path: &Path) -> Result<Vec<(usize, CompletionRecord)>, CacheError> {
    let io = |source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io)?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out = Vec::with_capacity(lines.len());
    for (n, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CompletionRecord>(line) {
            Ok(rec) => out.push((n + 1, rec)),
            Err(e) if Some(n) == last => {
                log::warn!("{}:{}: dropping truncated record: {e}", path.display(), n + 1);
            }
            Err(e) => {
                return Err(CacheError::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Persistent response cache backed by one append-only file.
///
/// Records loaded at open time form an immutable base index; records written
/// since then go to a small locked delta. Duplicate keys resolve to the last
/// record written.
#[derive(Debug)]
pub struct ResponseCache {
    path: PathBuf,
    base: HashMap<String, CompletionRecord>,
    delta: RwLock<HashMap<String, CompletionRecord>>,
    writer: Mutex<Option<File>>,
}

impl ResponseCache {
    /// Opens (or lazily creates) the cache file at `path`.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let path = path.into();
        let mut base = HashMap::new();
        if path.exists() {
            for (_, rec) in read_records(&path)? {
                base.insert(rec.cache_key.clone(), rec);
            }
        }
        Ok(Self {
            path,
            base,
            delta: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, key: &str) -> Option<CompletionRecord> {
        if let Some(rec) = self.delta.read().expect("cache lock").get(key) {
            return Some(rec.clone());
        }
        self.base.get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.delta.read().expect("cache lock").contains_key(key) || self.base.contains_key(key)
    }

    pub fn len(&self) -> usize {
        let delta = self.delta.read().expect("cache lock");
        self.base.len() + delta.keys().filter(|k| !self.base.contains_key(*k)).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends one record and makes it visible to readers.
    pub fn append(&self, record: &CompletionRecord) -> Result<(), CacheError> {
        let io = |source| CacheError::Io {
            path: self.path.clone(),
            source,
        };
        let mut line = serde_json::to_string(record).expect("records serialize");
        line.push('\n');
        {
            let mut writer = self.writer.lock().expect("cache writer lock");
            if writer.is_none() {
                if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(io)?;
                }
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&self.path)
                    .map_err(io)?;
                *writer = Some(file);
            }
            let file = writer.as_mut().expect("writer opened above");
            file.write_all(line.as_bytes()).map_err(io)?;
            file.flush().map_err(io)?;
        }
        self.delta
            .write()
            .expect("cache lock")
            .insert(record.cache_key.clone(), record.clone());
        Ok(())
    }

    /// Checks every record on disk against its request digest.
    pub fn verify(path: &Path) -> Result<VerifyReport, CacheError> {
        let records = read_records(path)?;
        let mut keys = std::collections::HashSet::new();
        let mut mismatched_lines = Vec::new();
        for (line, rec) in &records {
            keys.insert(rec.cache_key.clone());
            if rec.request.cache_key() != rec.cache_key {
                mismatched_lines.push(*line);
            }
        }
        Ok(VerifyReport {
            records: records.len(),
            unique_keys: keys.len(),
            mismatched_lines,
        })
    }
}
