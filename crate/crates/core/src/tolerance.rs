use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by every stage of the solver.
///
/// The defaults are the values every acceptance run uses; all of them can be
/// overridden from a run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Primal feasibility of LP rows and scenario membership in cells.
    pub feas: f64,
    /// Allowed gap between primal and dual objectives, and between objective
    /// values compared across rounds.
    pub gap: f64,
    /// Smallest magnitude accepted as a simplex pivot element.
    pub pivot: f64,
    /// Distance to the nearest integer below which a value counts as integral.
    pub integrality: f64,
    /// A multiplier `λ` above this value yields a scenario `u / λ`.
    pub lambda_threshold: f64,
    /// Relative slack under which a cell's epigraph row counts as active.
    pub active: f64,
    /// L∞ distance under which two scenarios are merged.
    pub dedup: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feas: 1e-7,
            gap: 1e-7,
            pivot: 1e-7,
            integrality: 1e-6,
            lambda_threshold: 1e-8,
            active: 1e-6,
            dedup: 1e-7,
        }
    }
}
