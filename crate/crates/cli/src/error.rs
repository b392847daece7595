use vista_core::store::StoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage '{stage}' needs {artifact}")]
    Prerequisite { stage: &'static str, artifact: String },
    #[error("stage '{0}' already completed; pass --force to run it again")]
    AlreadyCompleted(String),
    #[error("drafts are awaiting human review: run `vista serve`, approve the tasks, then `vista evaluate` (or pass --ablate skip_human_refinement)")]
    AwaitingReview,
    #[error("stage '{stage}' failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("io error at {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Stage { .. } | CliError::Io { .. } => 1,
            CliError::Store(StoreError::Locked(_)) => 6,
            CliError::Store(_) => 1,
            CliError::Prerequisite { .. } => 3,
            CliError::Config(_) => 4,
            CliError::AwaitingReview => 5,
            CliError::AlreadyCompleted(_) => 7,
        }
    }

    pub fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Stage { stage, message: e.to_string() }
    }
}

pub fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}
