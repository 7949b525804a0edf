//! Piecewise constant decision rules for two-stage mixed-integer adjustable
//! robust optimization.
//!
//! The uncertainty set is partitioned into cells, each cell receiving its own
//! second-stage decision. Cells are refined by separating critical scenarios,
//! which are read off the dual solutions of the branch-and-bound nodes used to
//! solve the static problem over the current partition.

pub mod bnb;
pub mod counterpart;
pub mod error;
pub mod fixtures;
pub mod lp;
pub mod model;
pub mod routeplan;
pub mod splitter;
pub mod tolerance;
pub mod verify;

pub use error::{AroError, Result};
pub use tolerance::Tolerances;
