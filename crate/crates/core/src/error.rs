use alloc::boxed::Box;
use alloc::string::String;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("label error at row {row}: unknown class `{value}`")]
    Label { row: usize, value: String },
    #[error("fit error: {0}")]
    Fit(String),
    #[error("shape error: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("SMOTE cannot interpolate {rows} row(s); use the GMM synthesizer or enable duplication fallback")]
    SmoteTooFewRows { rows: usize },
    #[error("class `{class}` has {count} sample(s), fewer than the {folds} folds requested")]
    Fold {
        class: String,
        count: usize,
        folds: usize,
    },
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("privacy accountant has no steps recorded")]
    EmptyAccountant,
    #[error("noise multiplier is zero: epsilon is infinite")]
    InfiniteEpsilon,
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification of an [`Error`], used by front ends to pick an
/// exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input data or configuration.
    Data,
    /// Numeric failure, divergence or violated numeric contract.
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::Label { .. }
            | Error::Fit(_)
            | Error::SmoteTooFewRows { .. }
            | Error::Fold { .. }
            | Error::Config(_) => ErrorKind::Data,
            Error::Shape { .. }
            | Error::Numeric(_)
            | Error::Contract(_)
            | Error::Diverged { .. }
            | Error::EmptyAccountant
            | Error::InfiniteEpsilon => ErrorKind::Numeric,
            Error::Stage { source, .. } => source.kind(),
        }
    }

    /// Tag an error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
