//! Content-addressed blobs plus an append-only record log.
//!
//! Layout under the storage root:
//! `blobs/<sha256>.zip`, `reports/<id>.json`, `records.log` (one JSON event
//! per line). Every file other than the log is written to a temporary name
//! and renamed into place; a report is durable before its `done` event is
//! logged.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use fibench_core::harness::{MetricsReport, SubmissionMeta, ValidationWarning};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum State {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub schema_version: u32,
    pub id: String,
    pub method: String,
    pub ensembling: bool,
    pub state: State,
    /// Milliseconds since the Unix epoch.
    pub received_ms: u64,
    /// Arrival order; breaks ties between equal timestamps.
    pub sequence: u64,
    pub blob: String,
    pub warnings: Vec<ValidationWarning>,
    pub report: Option<MetricsReport>,
    pub diagnostics: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
enum Event {
    Queued {
        id: String,
        method: String,
        ensembling: bool,
        received_ms: u64,
        blob: String,
        warnings: Vec<ValidationWarning>,
    },
    Running {
        id: String,
    },
    Done {
        id: String,
    },
    Failed {
        id: String,
        diagnostics: String,
    },
}

pub struct Store {
    root: PathBuf,
    log: Mutex<File>,
    records: RwLock<BTreeMap<String, SubmissionRecord>>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Some(dir) = path.parent() {
        // Persist the rename itself; not every platform allows this.
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

impl Store {
    /// Opens or creates a store and replays its log. Returns the ids of
    /// submissions that were queued or running when the log ended.
    pub fn open(root: &Path) -> std::io::Result<(Self, Vec<String>)> {
        fs::create_dir_all(root.join("blobs"))?;
        fs::create_dir_all(root.join("reports"))?;
        let log_path = root.join("records.log");
        let mut records: BTreeMap<String, SubmissionRecord> = BTreeMap::new();
        let mut order = 0u64;
        if log_path.exists() {
            let reader = BufReader::new(File::open(&log_path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: Event = match serde_json::from_str(&line) {
                    Ok(e) => e,
                    Err(e) => {
                        // A crash can leave a torn final line.
                        log::warn!("records.log line {}: {e}; ignored", n + 1);
                        continue;
                    }
                };
                match event {
                    Event::Queued {
                        id,
                        method,
                        ensembling,
                        received_ms,
                        blob,
                        warnings,
                    } => {
                        records.entry(id.clone()).or_insert_with(|| {
                            order += 1;
                            SubmissionRecord {
                                schema_version: RECORD_SCHEMA_VERSION,
                                id,
                                method,
                                ensembling,
                                state: State::Queued,
                                received_ms,
                                sequence: order,
                                blob,
                                warnings,
                                report: None,
                                diagnostics: None,
                            }
                        });
                    }
                    Event::Running { id } => {
                        if let Some(r) = records.get_mut(&id) {
                            r.state = State::Running;
                        }
                    }
                    Event::Done { id } => {
                        if let Some(r) = records.get_mut(&id) {
                            r.state = State::Done;
                        }
                    }
                    Event::Failed { id, diagnostics } => {
                        if let Some(r) = records.get_mut(&id) {
                            r.state = State::Failed;
                            r.diagnostics = Some(diagnostics);
                        }
                    }
                }
            }
        }
        let mut pending = Vec::new();
        for r in records.values_mut() {
            if r.state == State::Done {
                let path = root.join("reports").join(format!("{}.json", r.id));
                match fs::read(&path).map(|b| serde_json::from_slice::<MetricsReport>(&b)) {
                    Ok(Ok(report)) => r.report = Some(report),
                    _ => {
                        log::warn!("report for {} unreadable; re-queued", r.id);
                        r.state = State::Queued;
                    }
                }
            }
            if matches!(r.state, State::Queued | State::Running) {
                r.state = State::Queued;
                pending.push((r.sequence, r.id.clone()));
            }
        }
        pending.sort();
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        Ok((
            Self {
                root: root.to_path_buf(),
                log: Mutex::new(log),
                records: RwLock::new(records),
            },
            pending.into_iter().map(|(_, id)| id).collect(),
        ))
    }

    fn append(&self, log: &mut File, event: &Event) -> std::io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(std::io::Error::other)?;
        line.push(b'\n');
        log.write_all(&line)?;
        log.sync_data()
    }

    /// Stores an archive under its SHA-256 and returns the hash.
    pub fn put_blob(&self, bytes: &[u8]) -> std::io::Result<String> {
        let hash = hex::encode(Sha256::digest(bytes));
        let path = self.root.join("blobs").join(format!("{hash}.zip"));
        if !path.exists() {
            write_atomic(&path, bytes)?;
        }
        Ok(hash)
    }

    pub fn blob(&self, hash: &str) -> std::io::Result<Vec<u8>> {
        fs::read(self.root.join("blobs").join(format!("{hash}.zip")))
    }

    pub fn get(&self, id: &str) -> Option<SubmissionRecord> {
        self.records.read().expect("records lock").get(id).cloned()
    }

    pub fn all(&self) -> Vec<SubmissionRecord> {
        self.records.read().expect("records lock").values().cloned().collect()
    }

    /// Inserts a queued record unless the id is known. Returns the stored
    /// record and whether it was newly created.
    pub fn insert_queued(
        &self,
        id: &str,
        meta: &SubmissionMeta,
        blob: &str,
        warnings: Vec<ValidationWarning>,
    ) -> std::io::Result<(SubmissionRecord, bool)> {
        let mut log = self.log.lock().expect("log lock");
        if let Some(existing) = self.get(id) {
            return Ok((existing, false));
        }
        let received_ms = now_ms();
        let ensembling = meta.ensembling.unwrap_or(false);
        self.append(
            &mut log,
            &Event::Queued {
                id: id.to_string(),
                method: meta.method.clone(),
                ensembling,
                received_ms,
                blob: blob.to_string(),
                warnings: warnings.clone(),
            },
        )?;
        let mut records = self.records.write().expect("records lock");
        let sequence = records.values().map(|r| r.sequence).max().unwrap_or(0) + 1;
        let record = SubmissionRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            id: id.to_string(),
            method: meta.method.clone(),
            ensembling,
            state: State::Queued,
            received_ms,
            sequence,
            blob: blob.to_string(),
            warnings,
            report: None,
            diagnostics: None,
        };
        records.insert(id.to_string(), record.clone());
        Ok((record, true))
    }

    /// Stored report of a finished submission, exactly as written to disk.
    pub fn report_bytes(&self, id: &str) -> std::io::Result<Vec<u8>> {
        fs::read(self.root.join("reports").join(format!("{id}.json")))
    }

    pub fn set_running(&self, id: &str) -> std::io::Result<()> {
        let mut log = self.log.lock().expect("log lock");
        self.append(&mut log, &Event::Running { id: id.to_string() })?;
        if let Some(r) = self.records.write().expect("records lock").get_mut(id) {
            r.state = State::Running;
        }
        Ok(())
    }

    pub fn set_done(&self, id: &str, report: MetricsReport) -> std::io::Result<()> {
        let path = self.root.join("reports").join(format!("{id}.json"));
        write_atomic(&path, report.to_json().as_bytes())?;
        let mut log = self.log.lock().expect("log lock");
        self.append(&mut log, &Event::Done { id: id.to_string() })?;
        if let Some(r) = self.records.write().expect("records lock").get_mut(id) {
            r.state = State::Done;
            r.report = Some(report);
        }
        Ok(())
    }

    pub fn set_failed(&self, id: &str, diagnostics: String) -> std::io::Result<()> {
        let mut log = self.log.lock().expect("log lock");
        self.append(
            &mut log,
            &Event::Failed {
                id: id.to_string(),
                diagnostics: diagnostics.clone(),
            },
        )?;
        if let Some(r) = self.records.write().expect("records lock").get_mut(id) {
            r.state = State::Failed;
            r.diagnostics = Some(diagnostics);
        }
        Ok(())
    }
}
