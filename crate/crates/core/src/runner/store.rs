use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::RunRecord;
use crate::error::Result;

pub const RECORDS_FILE: &str = "records.jsonl";

/// `records.jsonl` of one output directory.
///
/// Finished records are appended as they arrive, so an interrupted run keeps
/// its progress; [`ResultStore::finalize`] rewrites the file in job order.
pub struct ResultStore {
    path: PathBuf,
    existing: HashMap<String, RunRecord>,
    file: Mutex<File>,
}

/// Reads records, skipping lines that do not parse.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if let Ok(r) = serde_json::from_str::<RunRecord>(&line) {
            out.push(r);
        }
    }
    Ok(out)
}

impl ResultStore {
    /// Opens the store in `dir`. With `reuse`, successful records already on
    /// disk are served again by [`ResultStore::get`].
    pub fn open(dir: &Path, reuse: bool) -> Result<Self> {
        let path = dir.join(RECORDS_FILE);
        let existing: HashMap<String, RunRecord> = if reuse && path.exists() {
            read_records(&path)?
                .into_iter()
                .filter(|r| !r.is_failed())
                .map(|r| (r.key.clone(), r))
                .collect()
        } else {
            HashMap::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(reuse)
            .write(true)
            .truncate(!reuse)
            .open(&path)?;
        Ok(Self {
            path,
            existing,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, key: &str) -> Option<&RunRecord> {
        self.existing.get(key)
    }

    pub fn append(&self, record: &RunRecord) -> Result<()> {
        let line = serde_json::to_string(record)? + "\n";
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(line.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    /// Replaces the file with exactly `records`, in the given order.
    pub fn finalize(&self, records: &[RunRecord]) -> Result<()> {
        let tmp = self.path.with_extension("jsonl.tmp");
        {
            let mut f = File::create(&tmp)?;
            for r in records {
                f.write_all((serde_json::to_string(r)? + "\n").as_bytes())?;
            }
            f.sync_all()?;
        }
        let _guard = self.file.lock().unwrap_or_else(|e| e.into_inner());
        std::fs::rename(&tmp, &self.path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::{RecordBody, RunMeasure};

    fn record(key: &str, failed: bool) -> RunRecord {
        RunRecord {
            key: key.into(),
            dataset: "d".into(),
            sample_id: key.into(),
            measure: RunMeasure::Metrics,
            repeat: 0,
            seed: 0,
            result: if failed {
                RecordBody::Failed { error: "boom".into() }
            } else {
                RecordBody::Benchmark(crate::runner::BenchRecord {
                    metrics: vec![],
                    transcript: vec![],
                })
            },
        }
    }

    #[test]
    fn reuse_skips_failures_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        {
            let s = ResultStore::open(dir.path(), true).unwrap();
            s.append(&record("a", false)).unwrap();
            s.append(&record("b", true)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(dir.path().join(RECORDS_FILE)).unwrap();
        writeln!(f, "{{not json").unwrap();
        let s = ResultStore::open(dir.path(), true).unwrap();
        assert!(s.get("a").is_some());
        assert!(s.get("b").is_none());
        let fresh = ResultStore::open(dir.path(), false).unwrap();
        assert!(fresh.get("a").is_none());
    }

    #[test]
    fn finalize_rewrites_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let s = ResultStore::open(dir.path(), true).unwrap();
        s.append(&record("b", false)).unwrap();
        s.append(&record("a", false)).unwrap();
        s.finalize(&[record("a", false), record("b", false)]).unwrap();
        let keys: Vec<String> = read_records(s.path()).unwrap().into_iter().map(|r| r.key).collect();
        assert_eq!(keys, ["a", "b"]);
    }
}
