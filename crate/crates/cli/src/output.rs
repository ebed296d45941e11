//! Run directory: CSV tables, JSON-lines records and the manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use sburgers_core::stats::EstimateReport;

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Seventeen significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySeed {
    pub index: u64,
    pub seed: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub command: String,
    pub version: String,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub seed: u64,
    pub trajectories: Vec<TrajectorySeed>,
    pub blow_ups: usize,
    pub files: Vec<String>,
}

/// Single writer for one run directory.
#[derive(Debug)]
pub struct RunOutput {
    dir: PathBuf,
    hash: String,
    started: DateTime<Utc>,
    files: Vec<String>,
    pub trajectories: Vec<TrajectorySeed>,
    pub blow_ups: usize,
}

impl RunOutput {
    pub fn create(dir: &Path, hash: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
            started: Utc::now(),
            files: Vec::new(),
            trajectories: Vec::new(),
            blow_ups: 0,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Records streams `0..n` of `seed` as used.
    pub fn use_streams(&mut self, seed: u64, n: usize) {
        for i in self.trajectories.len() as u64..n as u64 {
            self.trajectories.push(TrajectorySeed { index: i, seed, stream: i });
        }
    }

    fn register(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.join(name)
    }

    /// Writes a CSV table whose first column is the config hash.
    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.register(name);
        let mut w = csv::Writer::from_path(path)?;
        let mut head = vec!["config_hash"];
        head.extend_from_slice(header);
        w.write_record(&head)?;
        for row in rows {
            let mut record = Vec::with_capacity(row.len() + 1);
            record.push(self.hash.clone());
            record.extend(row);
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes one JSON object per line, each tagged with the config hash.
    pub fn jsonl<I>(&mut self, name: &str, records: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Value>,
    {
        let path = self.register(name);
        let mut w = BufWriter::new(File::create(path)?);
        for mut r in records {
            match r.as_object_mut() {
                Some(obj) => {
                    obj.insert("config_hash".into(), Value::String(self.hash.clone()));
                }
                None => r = json!({ "config_hash": self.hash, "value": r }),
            }
            serde_json::to_writer(&mut w, &r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn finish(self, command: &str, seed: u64) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            config_hash: self.hash,
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started: self.started,
            finished: Utc::now(),
            seed,
            trajectories: self.trajectories,
            blow_ups: self.blow_ups,
            files: self.files,
        };
        let file = File::create(self.dir.join(MANIFEST))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
        Ok(manifest)
    }
}

/// JSON record for an estimate; non-finite numbers become `null`.
pub fn estimate_record(r: &EstimateReport) -> Value {
    serde_json::to_value(r).expect("estimate serialises")
}
