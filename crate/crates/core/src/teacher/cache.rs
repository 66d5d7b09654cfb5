use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{Result, TeacherError, TeacherRecord};

pub const CACHE_FILE: &str = "teacher_cache.jsonl";

type Key = (String, String);

/// Append-only JSONL store keyed by `(teacher_name, prompt_hash)`. Later
/// lines win on load; writes are serialized through a mutex.
pub struct TeacherCache {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

struct Inner {
    records: HashMap<Key, TeacherRecord>,
    file: Option<File>,
}

impl TeacherCache {
    /// Cache that lives only for the lifetime of the process.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(Inner {
                records: HashMap::new(),
                file: None,
            }),
        }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut records = HashMap::new();
        if path.is_file() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: TeacherRecord =
                    serde_json::from_str(&line).map_err(|e| TeacherError::CorruptCache {
                        path: path.clone(),
                        line: i + 1,
                        msg: e.to_string(),
                    })?;
                records.insert((rec.teacher_name.clone(), rec.prompt_hash.clone()), rec);
            }
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path: Some(path),
            inner: Mutex::new(Inner {
                records,
                file: Some(file),
            }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, teacher_name: &str, prompt_hash: &str) -> Option<TeacherRecord> {
        let inner = self.inner.lock().expect("cache lock");
        inner
            .records
            .get(&(teacher_name.to_owned(), prompt_hash.to_owned()))
            .cloned()
    }

    pub fn insert(&self, record: TeacherRecord) -> Result<()> {
        let mut inner = self.inner.lock().expect("cache lock");
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        inner.records.insert(
            (record.teacher_name.clone(), record.prompt_hash.clone()),
            record,
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(hash: &str, answer: usize) -> TeacherRecord {
        TeacherRecord {
            node_id: 3,
            prompt_hash: hash.into(),
            answer,
            confidences: vec![0.5, 0.5],
            rationale_text: "r".into(),
            rationale_embedding: None,
            teacher_name: "t".into(),
            timestamp: 0,
        }
    }

    #[test]
    fn round_trip_last_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join(CACHE_FILE);
        {
            let c = TeacherCache::open(&path).unwrap();
            c.insert(rec("h", 0)).unwrap();
            c.insert(rec("h", 1)).unwrap();
            c.insert(rec("g", 0)).unwrap();
        }
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text
            .lines()
            .next()
            .unwrap()
            .contains("\"rationale_embedding\":null"));
        let c = TeacherCache::open(&path).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get("t", "h").unwrap().answer, 1);
        assert!(c.get("other", "h").is_none());
    }

    #[test]
    fn corrupt_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CACHE_FILE);
        fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(
            TeacherCache::open(&path),
            Err(TeacherError::CorruptCache { line: 1, .. })
        ));
    }
}
