use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown model `{0}` (expected one of fhn, bicubic, gene_expr, dde)")]
    UnknownModel(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite state at step {step}; the parameters or step size likely cause blow-up")]
    NonFinite { step: usize },

    #[error("history query at t = {t} precedes retained window starting at {start}")]
    HistoryQuery { t: f64, start: f64 },

    #[error("degenerate column `{0}`: max equals min")]
    DegenerateColumn(String),

    #[error("unknown combination `{0}` (expected f_u, f_v, g_u or g_v)")]
    UnknownCombination(String),

    #[error("period not detectable: {0}")]
    NoPeriod(String),

    #[error("training diverged at epoch {epoch}: non-finite loss (try a lower learning rate)")]
    Diverged { epoch: usize },

    #[error("rank-deficient design matrix: term `{term}` is colinear with {others:?}")]
    RankDeficient { term: String, others: Vec<String> },

    #[error("outside the ground-truth domain: {0}")]
    Domain(String),

    #[error("curves do not overlap: {0}")]
    NoOverlap(String),

    #[error("curves coincide; intersections form a continuum")]
    Degenerate,

    #[error("{0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad user input rather than a failing computation.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::UnknownModel(_)
                | Error::InvalidParam { .. }
                | Error::Config(_)
                | Error::UnknownCombination(_)
                | Error::Precondition(_)
        )
    }
}
