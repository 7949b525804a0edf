//! JSON problem files.
//!
//! ```json
//! {
//!   "L": 1, "d1": 0, "d2": 1, "m1": 0, "m2": 0,
//!   "cost_x": { "nominal": [] },
//!   "cost_y": { "nominal": [0.0], "perturbation": [[1.0]] },
//!   "constraints": [
//!     { "a": { "nominal": [] }, "w": { "nominal": [1.0] }, "b": 1.0 }
//!   ],
//!   "base_set": { "P": [[1.0], [-1.0]], "p": [1.0, 0.0] }
//! }
//! ```
//!
//! `perturbation` is a dense `len × L` matrix and may be omitted when zero.
//! Numbers are written in shortest round-trip form, so a saved problem
//! reloads bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AroError, Result};
use crate::model::polyhedron::Polyhedron;
use crate::model::problem::{AffineVector, AroProblem, UncertainConstraint};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineFile {
    nominal: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    perturbation: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintFile {
    a: AffineFile,
    w: AffineFile,
    b: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaseSetFile {
    #[serde(rename = "P")]
    rows: Vec<Vec<f64>>,
    #[serde(rename = "p")]
    rhs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    #[serde(rename = "L")]
    uncertainty_dim: usize,
    d1: usize,
    d2: usize,
    m1: usize,
    m2: usize,
    cost_x: AffineFile,
    cost_y: AffineFile,
    #[serde(default)]
    constraints: Vec<ConstraintFile>,
    base_set: BaseSetFile,
}

fn affine_from_file(f: AffineFile, l: usize) -> Result<AffineVector> {
    match f.perturbation {
        Some(m) => AffineVector::from_dense(f.nominal, &m, l),
        None => Ok(AffineVector::constant(f.nominal, l)),
    }
}

fn affine_to_file(v: &AffineVector) -> AffineFile {
    AffineFile {
        nominal: v.nominal().to_vec(),
        perturbation: (!v.is_certain()).then(|| v.dense_perturbation()),
    }
}

impl AroProblem {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let f: ProblemFile =
            serde_json::from_str(text).map_err(|e| AroError::Parse(e.to_string()))?;
        let l = f.uncertainty_dim;
        let constraints = f
            .constraints
            .into_iter()
            .map(|c| {
                Ok(UncertainConstraint {
                    a: affine_from_file(c.a, l)?,
                    w: affine_from_file(c.w, l)?,
                    b: c.b,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let problem = AroProblem {
            uncertainty_dim: l,
            d1: f.d1,
            d2: f.d2,
            m1: f.m1,
            m2: f.m2,
            cost_x: affine_from_file(f.cost_x, l)?,
            cost_y: affine_from_file(f.cost_y, l)?,
            constraints,
            base_set: Polyhedron::new(l, f.base_set.rows, f.base_set.rhs)?,
        };
        problem.check_dimensions()?;
        Ok(problem)
    }

    pub fn to_json_string(&self) -> String {
        let f = ProblemFile {
            uncertainty_dim: self.uncertainty_dim,
            d1: self.d1,
            d2: self.d2,
            m1: self.m1,
            m2: self.m2,
            cost_x: affine_to_file(&self.cost_x),
            cost_y: affine_to_file(&self.cost_y),
            constraints: self
                .constraints
                .iter()
                .map(|c| ConstraintFile {
                    a: affine_to_file(&c.a),
                    w: affine_to_file(&c.w),
                    b: c.b,
                })
                .collect(),
            base_set: BaseSetFile {
                rows: self.base_set.rows().to_vec(),
                rhs: self.base_set.rhs().to_vec(),
            },
        };
        serde_json::to_string_pretty(&f).expect("problem data serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string())?;
        Ok(())
    }
}
