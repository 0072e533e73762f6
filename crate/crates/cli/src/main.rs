use std::fs;
use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use fibench_core::harness::{
    baseline_interpolate, evaluate_submission, load_dataset, render_report, time_command,
    validate_submission, write_baseline_submission, BaselineMode, DatasetIndex, EvaluationPlan,
    HarnessError, Job, Payload, ReportFormat, TimingOptions, WorkerSpec,
};
use fibench_core::imaging::{read_image, write_image};
use fibench_core::synthgen::{export_public, generate_dataset, DatasetConfig, GenerationError};
use fibench_core::Tier;
use fibench_server::{serve, ServerConfig};

const EXIT_FAILURE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_DATASET: u8 = 3;
const EXIT_WORKER: u8 = 4;

#[derive(Parser)]
#[command(name = "fibench", version, about = "Frame interpolation benchmark toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 10 sequences at 512x256.
    Desk,
    /// 666 sequences at 4096x2048.
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum Frames {
    #[value(name = "1")]
    One,
    #[value(name = "7")]
    Seven,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with full ground truth.
    Generate {
        /// TOML dataset configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, conflicts_with = "config")]
        preset: Option<Preset>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sequences: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Copy the participant-facing inputs of a dataset.
    ExportPublic {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate and score a submission directory or zip archive.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        submission: PathBuf,
        /// 1k, 2k, 4k or all.
        #[arg(long, default_value = "all")]
        tier: String,
        /// Output file; the extension picks txt, csv, tex or json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 2 << 30)]
        max_bytes: u64,
    },
    /// Write a submission produced by a reference interpolator.
    Baseline {
        #[arg(long)]
        mode: BaselineMode,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "all")]
        tier: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure the runtime of an external worker process.
    Time {
        /// Shell command starting the worker.
        #[arg(long)]
        worker: String,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "1k")]
        tier: Tier,
        #[arg(long, value_enum, default_value = "1")]
        frames: Frames,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 2)]
        warmup: usize,
        /// Seconds allowed per job.
        #[arg(long, default_value_t = 600.0)]
        timeout: f64,
        /// Where the worker writes its frames; a temporary directory by default.
        #[arg(long)]
        scratch: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Line-protocol worker backed by a baseline interpolator.
    Worker {
        #[arg(long, default_value = "blend")]
        mode: BaselineMode,
    },
    /// Run the submission service.
    Serve {
        #[arg(long, env = "FIBENCH_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, env = "FIBENCH_DATASET")]
        dataset: PathBuf,
        #[arg(long, env = "FIBENCH_STORAGE")]
        storage: PathBuf,
        #[arg(long, env = "FIBENCH_MAX_BYTES", default_value_t = 2 << 30)]
        max_bytes: u64,
        #[arg(long, env = "FIBENCH_LEADERBOARD_TIER", default_value = "1k")]
        leaderboard_tier: Tier,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = match &e {
            HarnessError::Validation { .. } => EXIT_VALIDATION,
            HarnessError::Dataset(_) | HarnessError::Config(_) => EXIT_DATASET,
            HarnessError::Worker(_) | HarnessError::WorkerTimeout { .. } => EXIT_WORKER,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<GenerationError> for Failure {
    fn from(e: GenerationError) -> Self {
        Failure {
            code: EXIT_DATASET,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: EXIT_FAILURE,
            message: e.to_string(),
        }
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn tiers_for(arg: &str, index: &DatasetIndex) -> Result<Vec<Tier>, Failure> {
    if arg.eq_ignore_ascii_case("all") {
        return Ok(index.tiers.clone());
    }
    let tier: Tier = arg.parse().map_err(|e: String| fail(EXIT_VALIDATION, e))?;
    index.require_tier(tier)?;
    Ok(vec![tier])
}

fn generate(
    config: Option<PathBuf>,
    preset: Option<Preset>,
    seed: Option<u64>,
    sequences: Option<usize>,
    out: &Path,
) -> Result<(), Failure> {
    let mut cfg = match (config, preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(&path)?;
            toml::from_str::<DatasetConfig>(&text)
                .map_err(|e| fail(EXIT_DATASET, format!("{}: {e}", path.display())))?
        }
        (None, Some(Preset::Full)) => DatasetConfig::default(),
        (None, _) => DatasetConfig::desk(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = sequences {
        cfg.sequences = n;
    }
    let bundles = generate_dataset(&cfg, out)?;
    println!("generated {} sequences in {}", bundles.len(), out.display());
    Ok(())
}

fn evaluate(
    dataset: &Path,
    submission: &Path,
    tier: &str,
    out: Option<PathBuf>,
    max_bytes: u64,
) -> Result<(), Failure> {
    let index = load_dataset(dataset)?;
    let plan = EvaluationPlan::default_for(&tiers_for(tier, &index)?);
    let payload = Payload::from_path(submission, max_bytes)?;
    let sub = validate_submission(payload, &index, &plan)?;
    for w in &sub.warnings {
        eprintln!("warning: {}: {}", w.code, w.message);
    }
    let report = evaluate_submission(&sub, &index)?;
    match out {
        Some(path) => {
            let is_json = path.extension().is_some_and(|e| e == "json");
            let body = if is_json {
                report.to_json()
            } else {
                let format = ReportFormat::from_extension(&path).unwrap_or(ReportFormat::Plain);
                render_report(&[report], format)
            };
            fs::write(&path, body)?;
        }
        None => print!("{}", render_report(&[report], ReportFormat::Plain)),
    }
    Ok(())
}

fn time(
    worker: String,
    dataset: &Path,
    tier: Tier,
    frames: Frames,
    options: (usize, usize, f64),
    scratch: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let (reps, warmup, timeout) = options;
    let index = load_dataset(dataset)?;
    index.require_tier(tier)?;
    let tmp;
    let scratch = match scratch {
        Some(s) => s,
        None => {
            tmp = std::env::temp_dir().join(format!("fibench-time-{}", std::process::id()));
            tmp.clone()
        }
    };
    let timesteps: Vec<f64> = match frames {
        Frames::One => vec![0.5],
        Frames::Seven => (1..=7).map(|i| i as f64 / 8.0).collect(),
    };
    let jobs: Vec<Job> = index
        .sequences
        .iter()
        .map(|entry| {
            let dir = index.tier_dir(entry, tier);
            Job {
                id: 0,
                inputs: [dir.join("frame_0.png"), dir.join("frame_8.png")],
                timesteps: timesteps.clone(),
                output: scratch.join(&entry.name),
            }
        })
        .collect();
    let mut spec = WorkerSpec::new(worker);
    spec.job_timeout = Duration::from_secs_f64(timeout);
    let result = time_command(
        &spec,
        &jobs,
        TimingOptions {
            reps,
            warmup,
            tier: Some(tier),
        },
    )?;
    let json = serde_json::to_string_pretty(&result).expect("plain data");
    match out {
        Some(path) => fs::write(path, json + "\n")?,
        None => println!(
            "tier {tier}, {} frame(s): median {:.4} s (min {:.4}, max {:.4}) over {} runs after {} warmup",
            result.frames, result.median, result.min, result.max, result.reps, result.warmup
        ),
    }
    Ok(())
}

/// Serves jobs on stdin until it closes.
fn worker(mode: BaselineMode) -> Result<(), Failure> {
    if mode == BaselineMode::Oracle {
        return Err(fail(EXIT_VALIDATION, "the oracle needs ground truth and cannot run as a worker"));
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "READY")?;
    out.flush()?;
    for line in io::stdin().lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = (|| -> Result<usize, String> {
            let job: Job = serde_json::from_str(&line).map_err(|e| e.to_string())?;
            let load = |p: &Path| -> Result<_, String> {
                let bytes = fs::read(p).map_err(|e| format!("{}: {e}", p.display()))?;
                Ok(read_image(&bytes).map_err(|e| e.to_string())?.to_working())
            };
            let (a, b) = (load(&job.inputs[0])?, load(&job.inputs[1])?);
            fs::create_dir_all(&job.output).map_err(|e| e.to_string())?;
            for &t in &job.timesteps {
                let pred = baseline_interpolate(mode, &a, &b, t, None).map_err(|e| e.to_string())?;
                let bytes = write_image(&pred.to_coded()).map_err(|e| e.to_string())?;
                let path = job.output.join(format!("pred_t{}.png", (t * 8.0).round() as usize));
                let mut f = fs::File::create(&path).map_err(|e| e.to_string())?;
                f.write_all(&bytes).and_then(|_| f.sync_all()).map_err(|e| e.to_string())?;
            }
            Ok(job.id)
        })();
        match reply {
            Ok(id) => writeln!(out, "DONE {id}")?,
            Err(msg) => writeln!(out, "ERROR {msg}")?,
        }
        out.flush()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate {
            config,
            preset,
            seed,
            sequences,
            out,
        } => generate(config, preset, seed, sequences, &out),
        Command::ExportPublic { dataset, out } => {
            let n = export_public(&dataset, &out)?;
            println!("exported {n} sequences to {}", out.display());
            Ok(())
        }
        Command::Evaluate {
            dataset,
            submission,
            tier,
            out,
            max_bytes,
        } => evaluate(&dataset, &submission, &tier, out, max_bytes),
        Command::Baseline {
            mode,
            dataset,
            tier,
            out,
        } => {
            let index = load_dataset(&dataset)?;
            let plan = EvaluationPlan::default_for(&tiers_for(&tier, &index)?);
            write_baseline_submission(&index, mode, &plan, &out)?;
            println!("wrote {mode} predictions to {}", out.display());
            Ok(())
        }
        Command::Time {
            worker,
            dataset,
            tier,
            frames,
            reps,
            warmup,
            timeout,
            scratch,
            out,
        } => time(worker, &dataset, tier, frames, (reps, warmup, timeout), scratch, out),
        Command::Worker { mode } => worker(mode),
        Command::Serve {
            listen,
            dataset,
            storage,
            max_bytes,
            leaderboard_tier,
        } => {
            let mut config = ServerConfig::new(dataset, storage);
            config.listen = listen;
            config.max_archive_bytes = max_bytes;
            config.leaderboard_tier = leaderboard_tier;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve(config)).map_err(|e| match e {
                fibench_server::ServerError::Harness(h) => Failure::from(h),
                other => fail(EXIT_FAILURE, other.to_string()),
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
