use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: unknown key '{key}'{}", nearest.as_ref().map(|n| format!(" (did you mean '{}'?)", n)).unwrap_or_default())]
    UnknownKey { key: String, nearest: Option<String> },
    #[error("config: key '{key}': {message}")]
    BadValue { key: String, message: String },
    #[error("config: line {line}: expected 'key = value', got '{text}'")]
    BadLine { line: usize, text: String },
    #[error("encoder: image side {side} does not reduce to 1x1 through the six stride-2 layers (got {final_side})")]
    IncompatibleImage { side: usize, final_side: usize },
    #[error("loss: batch is empty")]
    EmptyBatch,
    #[error("loss: snippet has {got} transitions, horizon {horizon} needs {need}")]
    SnippetTooShort { horizon: usize, need: usize, got: usize },
    #[error("loss: non-finite {phase} loss at step {step} ({detail})")]
    NonFiniteLoss { phase: &'static str, step: usize, detail: String },
    #[error("replay: {pool} pool is empty")]
    PoolEmpty { pool: &'static str },
    #[error("replay: no episode in {pool} pool is long enough for horizon {horizon} (need {need} transitions)")]
    NoSampleableEpisode { pool: &'static str, horizon: usize, need: usize },
    #[error("replay: stale handle (pool {pool}, item {item} of {len})")]
    StaleHandle { pool: &'static str, item: usize, len: usize },
    #[error("planner: non-finite return for candidate {candidate}")]
    NonFinitePlan { candidate: usize },
    #[error("oracle: produced only {got}/{need} successful episodes in {attempts} attempts")]
    OracleFailed { need: usize, got: usize, attempts: usize },
    #[error("unknown task '{0}' (available: {1})")]
    UnknownTask(String, String),
    #[error("unknown demo oracle '{0}' (available: {1})")]
    UnknownOracle(String, String),
    #[error("demo file: {0}")]
    DemoFormat(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint: tensor '{name}' expected shape {expected:?}, found {found:?}")]
    CheckpointShape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Autodiff(#[from] autodiff::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
