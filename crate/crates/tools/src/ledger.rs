//! Append-only rating ledger (JSON lines). Each rating is flushed and synced
//! before it is acknowledged; corrections are new entries marked `amends`.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use lesion_core::agreement::RatingRecord;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    #[serde(flatten)]
    pub record: RatingRecord,
    #[serde(default)]
    pub amends: bool,
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerEntry>> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(Error::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        out.push(entry);
    }
    Ok(out)
}

/// One record per `(rater, case)`: the first rating, replaced by the latest
/// amendment if any. Order follows first appearance.
pub fn effective_records(entries: &[LedgerEntry]) -> Vec<RatingRecord> {
    let mut index: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut out: Vec<RatingRecord> = Vec::new();
    for e in entries {
        let key = (e.record.rater_id.as_str(), e.record.case_id.as_str());
        match index.get(&key) {
            Some(&k) if e.amends => out[k] = e.record.clone(),
            Some(_) => {}
            None => {
                index.insert(key, out.len());
                out.push(e.record.clone());
            }
        }
    }
    out
}

#[derive(Debug)]
pub struct LedgerWriter {
    path: PathBuf,
    file: File,
}

impl LedgerWriter {
    pub fn open(path: &Path) -> Result<LedgerWriter> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(Error::io(dir))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(Error::io(path))?;
        Ok(LedgerWriter {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one entry and syncs it to disk.
    pub fn append(&mut self, entry: &LedgerEntry) -> Result<()> {
        let mut line = serde_json::to_vec(entry).map_err(Error::json(&self.path))?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(Error::io(&self.path))?;
        self.file.flush().map_err(Error::io(&self.path))?;
        self.file.sync_data().map_err(Error::io(&self.path))
    }
}
