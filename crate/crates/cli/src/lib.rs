//! Experiment runner behind the `stablelab` binary.
//!
//! Each verb takes a resolved [`RunConfig`], writes its artifacts under
//! `output_dir` and returns an [`Outcome`]; [`RunError::exit_code`] and
//! [`Outcome::exit_code`] give the process status.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{cmd_bounds, cmd_gof, cmd_simulate, cmd_tower, Outcome};
pub use config::RunConfig;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_CONSTRUCTION: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error ({origin}, key `{key}`): {message}")]
    Config {
        origin: String,
        key: String,
        message: String,
    },
    #[error("budget refusal: estimated {total} draws exceed budget_draws={budget} ({detail})")]
    Budget { total: u128, budget: u128, detail: String },
    #[error(transparent)]
    Library(#[from] stablelab::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("input error: {0}")]
    Input(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Budget { .. } | RunError::Library(stablelab::Error::Budget { .. }) => EXIT_BUDGET,
            _ => EXIT_CONSTRUCTION,
        }
    }

    pub(crate) fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> RunError {
        let context = context.into();
        move |source| RunError::Io { context, source }
    }
}
