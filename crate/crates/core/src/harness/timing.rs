//! Wall-clock timing of an external interpolation worker.
//!
//! The worker is a long-lived child process. It prints `READY` once loaded,
//! then reads one JSON job per line on stdin and answers each with
//! `DONE <id>` after its outputs are written, or `ERROR <message>`. Only the
//! time between sending a job and reading its `DONE` line is measured, one
//! job in flight at a time.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::Tier;

const STDERR_KEEP: usize = 16 * 1024;

#[derive(Debug, Clone)]
pub struct WorkerSpec {
    /// Shell command line, run through `sh -c`.
    pub command: String,
    pub job_timeout: Duration,
}

impl WorkerSpec {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            job_timeout: Duration::from_secs(600),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: usize,
    pub inputs: [PathBuf; 2],
    pub timesteps: Vec<f64>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingOptions {
    pub reps: usize,
    pub warmup: usize,
    pub tier: Option<Tier>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingResult {
    pub tier: Option<Tier>,
    pub frames: usize,
    pub warmup: usize,
    pub reps: usize,
    pub jobs_dispatched: usize,
    /// Measured runs only, in dispatch order.
    pub seconds: Vec<f64>,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

struct Worker {
    child: Child,
    lines: mpsc::Receiver<String>,
    stderr: Arc<Mutex<String>>,
}

impl Worker {
    fn spawn(spec: &WorkerSpec) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&spec.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| HarnessError::Worker(format!("cannot start {:?}: {e}", spec.command)))?;
        let stdout = child.stdout.take().expect("piped");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        let mut pipe = child.stderr.take().expect("piped");
        thread::spawn(move || {
            let mut buf = [0u8; 4096];
            while let Ok(n) = pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut s = sink.lock().expect("stderr buffer");
                s.push_str(&String::from_utf8_lossy(&buf[..n]));
                if s.len() > STDERR_KEEP {
                    let cut = s.len() - STDERR_KEEP;
                    let cut = (cut..s.len()).find(|&i| s.is_char_boundary(i)).unwrap_or(s.len());
                    s.drain(..cut);
                }
            }
        });
        Ok(Self {
            child,
            lines,
            stderr,
        })
    }

    fn diagnostics(&mut self) -> String {
        // Give the stderr reader a moment to drain after an exit.
        thread::sleep(Duration::from_millis(50));
        let status = match self.child.try_wait() {
            Ok(Some(s)) => s.to_string(),
            _ => "still running".to_string(),
        };
        let stderr = self.stderr.lock().expect("stderr buffer").trim().to_string();
        if stderr.is_empty() {
            status
        } else {
            format!("{status}; stderr: {stderr}")
        }
    }

    fn shutdown(mut self) {
        drop(self.child.stdin.take());
        let deadline = Instant::now() + Duration::from_secs(5);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(20));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn fail(mut self, err: impl FnOnce(String) -> HarnessError) -> HarnessError {
        let _ = self.child.kill();
        let diag = self.diagnostics();
        let _ = self.child.wait();
        err(diag)
    }
}

enum Reply {
    Done,
    Failed(String),
    Exited,
    TimedOut,
}

fn await_line(worker: &Worker, deadline: Instant, mut accept: impl FnMut(&str) -> Option<Reply>) -> Reply {
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        match worker.lines.recv_timeout(left) {
            Ok(line) => {
                if let Some(r) = accept(line.trim()) {
                    return r;
                }
                log::debug!("worker: {line}");
            }
            Err(RecvTimeoutError::Timeout) => return Reply::TimedOut,
            Err(RecvTimeoutError::Disconnected) => return Reply::Exited,
        }
    }
}

/// Runs `warmup` unmeasured and then `reps` measured jobs, cycling through
/// `jobs`. Jobs are numbered from 1 in dispatch order.
pub fn time_command(spec: &WorkerSpec, jobs: &[Job], options: TimingOptions) -> Result<TimingResult> {
    if options.reps < 3 {
        return Err(HarnessError::Config("at least three measured repetitions are required".into()));
    }
    if jobs.is_empty() {
        return Err(HarnessError::Config("no jobs to run".into()));
    }
    let frames = jobs[0].timesteps.len();
    let mut worker = Worker::spawn(spec)?;

    let ready = await_line(&worker, Instant::now() + spec.job_timeout, |l| {
        (l == "READY").then_some(Reply::Done)
    });
    match ready {
        Reply::Done => {}
        Reply::TimedOut => {
            return Err(worker.fail(|d| {
                HarnessError::Worker(format!("no READY line within {:?} ({d})", spec.job_timeout))
            }))
        }
        _ => {
            return Err(worker.fail(|d| HarnessError::Worker(format!("worker exited before READY ({d})"))))
        }
    }

    let total = options.warmup + options.reps;
    let mut seconds = Vec::with_capacity(options.reps);
    for k in 1..=total {
        let mut job = jobs[(k - 1) % jobs.len()].clone();
        job.id = k;
        let mut line = serde_json::to_string(&job)?;
        line.push('\n');
        let stdin = worker.child.stdin.as_mut().expect("piped");
        let start = Instant::now();
        if stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()).is_err() {
            return Err(worker.fail(|d| {
                HarnessError::Worker(format!("worker exited before job {k} could be sent ({d})"))
            }));
        }
        let id = k.to_string();
        let reply = await_line(&worker, start + spec.job_timeout, |l| {
            if let Some(rest) = l.strip_prefix("DONE") {
                let rest = rest.trim();
                if rest.is_empty() || rest == id {
                    return Some(Reply::Done);
                }
                return Some(Reply::Failed(format!("acknowledged job {rest} while {id} was running")));
            }
            l.strip_prefix("ERROR").map(|m| Reply::Failed(m.trim().to_string()))
        });
        let elapsed = start.elapsed().as_secs_f64();
        match reply {
            Reply::Done => {
                if k > options.warmup {
                    seconds.push(elapsed);
                }
            }
            Reply::Failed(msg) => {
                return Err(worker.fail(|d| HarnessError::Worker(format!("job {k} failed: {msg} ({d})"))))
            }
            Reply::Exited => {
                return Err(worker.fail(|d| HarnessError::Worker(format!("worker exited during job {k} ({d})"))))
            }
            Reply::TimedOut => {
                let seconds = spec.job_timeout.as_secs_f64();
                return Err(worker.fail(|d| {
                    log::error!("worker timed out on job {k}: {d}");
                    HarnessError::WorkerTimeout { job: k, seconds }
                }));
            }
        }
    }
    worker.shutdown();

    let min = seconds.iter().copied().fold(f64::INFINITY, f64::min);
    let max = seconds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(TimingResult {
        tier: options.tier,
        frames,
        warmup: options.warmup,
        reps: options.reps,
        jobs_dispatched: total,
        median: median(&seconds),
        min,
        max,
        seconds,
    })
}
