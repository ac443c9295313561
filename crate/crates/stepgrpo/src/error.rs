//! Harness-level error type with the CLI exit-code mapping.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    /// 1 for config errors, 2 for anything touching files.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}

macro_rules! internal_from {
    ($($t:ty),+) => {
        $(impl From<$t> for HarnessError {
            fn from(e: $t) -> Self {
                HarnessError::Internal(e.to_string())
            }
        })+
    };
}

internal_from!(
    stepgrpo_core::toylang::ToylangError,
    stepgrpo_core::policy::PolicyError,
    stepgrpo_core::rollout::RolloutError,
    stepgrpo_core::reward::RewardError,
    stepgrpo_core::grpo::GrpoError
);

pub type Result<T> = std::result::Result<T, HarnessError>;
