use std::fmt;

use thiserror::Error;

use crate::lp::LpError;

/// The modelling assumptions a problem must satisfy before it can be solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// The uncertainty set is nonempty and bounded.
    BoundedUncertaintySet,
    /// The static problem is feasible and its LP relaxation is nonempty and
    /// bounded.
    FeasibleStaticProblem,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assumption::BoundedUncertaintySet => {
                f.write_str("uncertainty set must be nonempty and bounded")
            }
            Assumption::FeasibleStaticProblem => f.write_str(
                "static problem must be feasible with a nonempty, bounded LP relaxation",
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum AroError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("assumption violated: {assumption} ({detail})")]
    Assumption {
        assumption: Assumption,
        detail: String,
    },
    #[error("degenerate split of cell {cell}: {detail}")]
    DegenerateSplit { cell: usize, detail: String },
    #[error("cell {0} is not a leaf of the partition")]
    NotALeaf(usize),
    #[error("unknown cell {0}")]
    UnknownCell(usize),
    #[error("scenario lies outside the uncertainty set")]
    OutsideUncertaintySet,
    #[error("scenarios coincide within {0:e}; no separating plane exists")]
    CoincidentScenarios(f64),
    #[error("ex-post correction requires uncertainty in the objective only")]
    ExPostPrecondition,
    #[error("internal error: {0}")]
    Internal(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = AroError> = std::result::Result<T, E>;
