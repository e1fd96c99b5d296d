//! Benchmark harness and shared plumbing for the `mclip` command-line tool.

pub mod bench;
pub mod method;

pub use bench::{
    read_records, read_summary, run_benchmark, write_records, write_summary, BenchOutcome, BenchRecord, Reference,
    RecordStatus, ScaleSpec, Suite, SummaryRow,
};
pub use method::{solve_with, Method, NeuralModel, SolveOutput};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] mclip_core::Error),

    #[error(transparent)]
    Neural(#[from] mclip_neural::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Stable 64-bit digest of a configuration string, printed as hex.
pub fn digest(text: &str) -> String {
    use std::hash::Hasher;
    let mut h = fnv::FnvHasher::default();
    h.write(text.as_bytes());
    format!("{:016x}", h.finish())
}
