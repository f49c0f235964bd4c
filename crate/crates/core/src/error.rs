use std::fmt;

/// Coarse error classes, used by the command-line driver to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Solver,
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("tile {tile:?} contains no cells of continuum {continuum}")]
    EmptyIntersection { tile: (usize, usize), continuum: usize },

    #[error("constraint rows are rank deficient: {0}")]
    RankDeficient(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("constraint residual {residual:.3e} exceeds {tolerance:.1e} ({context})")]
    ConstraintResidual {
        residual: f64,
        tolerance: f64,
        context: String,
    },

    #[error("missing cell columns: {0}")]
    MissingColumns(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage labels attached to errors propagated out of `run_case`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Medium,
    FineReference,
    CellProblems,
    Upscaling,
    CoarseSolve,
    ErrorMetric,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Medium => "medium construction",
            Stage::FineReference => "fine reference solve",
            Stage::CellProblems => "cell problems",
            Stage::Upscaling => "effective coefficients",
            Stage::CoarseSolve => "coarse solve",
            Stage::ErrorMetric => "error metric",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Geometry(_) | Error::Parse(_) | Error::EmptyIntersection { .. } => {
                ErrorCategory::Config
            }
            Error::Io(_) | Error::Json(_) => ErrorCategory::Io,
            Error::Stage { source, .. } => source.category(),
            _ => ErrorCategory::Solver,
        }
    }

    /// Attach the pipeline stage, keeping an existing label.
    pub fn at(self, stage: Stage) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}

pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
