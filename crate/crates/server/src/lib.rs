//! HTTP submission service: validates uploaded result archives, evaluates
//! them one at a time in the background, and serves records, a leaderboard
//! and LaTeX exports.
//!
//! | Method | Path | Result |
//! |---|---|---|
//! | POST | `/api/v1/submissions` | 201 new record, 200 existing record, 4xx rejection |
//! | GET | `/api/v1/submissions/{id}` | 200 record, 404 |
//! | GET | `/api/v1/submissions/{id}/latex` | 200 text, 404, 409 until done |
//! | GET | `/api/v1/submissions/{id}/report` | 200 report JSON, 404, 409 until done |
//! | GET | `/api/v1/leaderboard?tier=&sort=` | 200 leaderboard |
//! | GET | `/api/v1/leaderboard/latex?tier=&sort=` | 200 text |

mod api;
mod leaderboard;
mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use fibench_core::harness::{load_dataset, DatasetIndex, EvaluationPlan, HarnessError};
use fibench_core::Tier;
use thiserror::Error;
use tokio::sync::mpsc;

pub use api::router;
pub use leaderboard::{build_leaderboard, Leaderboard, LeaderboardEntry, Section, SortKey};
pub use store::{State, Store, SubmissionRecord, RECORD_SCHEMA_VERSION};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub dataset: PathBuf,
    pub storage: PathBuf,
    /// Largest accepted archive, compressed or inflated.
    pub max_archive_bytes: u64,
    pub leaderboard_tier: Tier,
}

impl ServerConfig {
    pub fn new(dataset: PathBuf, storage: PathBuf) -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            dataset,
            storage,
            max_archive_bytes: 2 << 30,
            leaderboard_tier: Tier::Quarter,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub struct AppState {
    pub config: ServerConfig,
    pub index: DatasetIndex,
    pub plan: EvaluationPlan,
    pub store: Store,
    queue: mpsc::UnboundedSender<String>,
}

impl AppState {
    fn enqueue(&self, id: &str) {
        if self.queue.send(id.to_string()).is_err() {
            log::error!("evaluation queue closed; {id} stays queued until restart");
        }
    }
}

/// Evaluates queued submissions one by one.
async fn run_worker(state: Arc<AppState>, mut rx: mpsc::UnboundedReceiver<String>) {
    while let Some(id) = rx.recv().await {
        let st = Arc::clone(&state);
        let outcome = tokio::task::spawn_blocking(move || api::evaluate_record(&st, &id)).await;
        if let Err(e) = outcome {
            log::error!("evaluation task panicked: {e}");
        }
    }
}

/// Loads the dataset, replays the store and starts the evaluation worker.
pub fn build_state(config: ServerConfig) -> Result<Arc<AppState>, ServerError> {
    let index = load_dataset(&config.dataset)?;
    let plan = EvaluationPlan::default_for(&index.tiers);
    let (store, pending) = Store::open(&config.storage)?;
    let (tx, rx) = mpsc::unbounded_channel();
    let state = Arc::new(AppState {
        config,
        index,
        plan,
        store,
        queue: tx,
    });
    for id in pending {
        log::info!("re-queueing {id}");
        state.enqueue(&id);
    }
    tokio::spawn(run_worker(Arc::clone(&state), rx));
    Ok(state)
}

/// Binds, prints `listening on http://<addr>` to stdout and serves until
/// the process is stopped.
pub async fn serve(config: ServerConfig) -> Result<(), ServerError> {
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    let addr = listener.local_addr()?;
    let state = build_state(config)?;
    println!("listening on http://{addr}");
    use std::io::Write;
    let _ = std::io::stdout().flush();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
