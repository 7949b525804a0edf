use serde::{Deserialize, Serialize};

use crate::error::{AroError, Result};
use crate::lp::{solve_lp, LinearRow, LpOutcome, StandardFormLP};
use crate::tolerance::Tolerances;

/// A point of the uncertainty space.
pub type Scenario = Vec<f64>;

/// `{z : normal·z ≤ offset}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn flipped(&self) -> Halfspace {
        Halfspace {
            normal: self.normal.iter().map(|v| -v).collect(),
            offset: -self.offset,
        }
    }
}

/// A hyperplane `normal·z = offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Hyperplane {
    /// Signed distance of `z` from the plane, positive on the `normal` side.
    pub fn signed_distance(&self, z: &[f64]) -> f64 {
        let norm = self.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        (dot(&self.normal, z) - self.offset) / norm
    }

    /// The halfspace `normal·z ≤ offset`.
    pub fn below(&self) -> Halfspace {
        Halfspace {
            normal: self.normal.clone(),
            offset: self.offset,
        }
    }

    /// The halfspace `normal·z ≥ offset`.
    pub fn above(&self) -> Halfspace {
        self.below().flipped()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of maximizing a linear function over a polyhedron.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Finite { value: f64, point: Scenario },
    Unbounded,
    Empty,
}

/// `{z ∈ ℝ^L : P z ≤ p}` with dense rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyhedron {
    dim: usize,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl Polyhedron {
    pub fn new(dim: usize, rows: Vec<Vec<f64>>, rhs: Vec<f64>) -> Result<Self> {
        if rows.len() != rhs.len() {
            return Err(AroError::Dimension(format!(
                "polyhedron has {} rows but {} offsets",
                rows.len(),
                rhs.len()
            )));
        }
        if let Some(k) = rows.iter().position(|r| r.len() != dim) {
            return Err(AroError::Dimension(format!(
                "polyhedron row {k} has length {} but the dimension is {dim}",
                rows[k].len()
            )));
        }
        Ok(Self { dim, rows, rhs })
    }

    /// `{z : lower ≤ z ≤ upper}`.
    pub fn bounding_box(lower: &[f64], upper: &[f64]) -> Self {
        let dim = lower.len();
        let mut rows = Vec::with_capacity(2 * dim);
        let mut rhs = Vec::with_capacity(2 * dim);
        for k in 0..dim {
            let mut up = vec![0.0; dim];
            up[k] = 1.0;
            rows.push(up);
            rhs.push(upper[k]);
            let mut lo = vec![0.0; dim];
            lo[k] = -1.0;
            rows.push(lo);
            rhs.push(-lower[k]);
        }
        Self { dim, rows, rhs }
    }

    /// `{z ∈ [0,1]^dim : Σ z ≤ budget}`.
    pub fn budget(dim: usize, budget: f64) -> Self {
        let mut p = Self::bounding_box(&vec![0.0; dim], &vec![1.0; dim]);
        p.rows.push(vec![1.0; dim]);
        p.rhs.push(budget);
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn with_halfspace(&self, h: &Halfspace) -> Polyhedron {
        let mut out = self.clone();
        out.rows.push(h.normal.clone());
        out.rhs.push(h.offset);
        out
    }

    /// Membership with the tolerance `P z ≤ p + feas·(1 + |p|)`.
    pub fn contains(&self, z: &[f64], tol: &Tolerances) -> bool {
        z.len() == self.dim
            && self
                .rows
                .iter()
                .zip(&self.rhs)
                .all(|(row, p)| dot(row, z) <= p + tol.feas * (1.0 + p.abs()))
    }

    /// Maximizes `direction·z` over the polyhedron.
    pub fn support(&self, direction: &[f64], tol: &Tolerances) -> Result<Support> {
        if direction.len() != self.dim {
            return Err(AroError::Dimension(format!(
                "direction has length {} but the dimension is {}",
                direction.len(),
                self.dim
            )));
        }
        let mut lp = StandardFormLP::new(
            direction.iter().map(|v| -v).collect(),
            vec![false; self.dim],
        );
        for (row, p) in self.rows.iter().zip(&self.rhs) {
            let neg: Vec<f64> = row.iter().map(|v| -v).collect();
            lp.ineq_rows.push(LinearRow::dense(&neg, -p));
        }
        Ok(match solve_lp(&lp, tol)? {
            LpOutcome::Optimal(s) => Support::Finite {
                value: -s.objective,
                point: s.primal,
            },
            LpOutcome::Unbounded { .. } => Support::Unbounded,
            LpOutcome::Infeasible(_) => Support::Empty,
        })
    }

    /// Some point of the polyhedron, or `None` when it is empty.
    pub fn feasible_point(&self, tol: &Tolerances) -> Result<Option<Scenario>> {
        let mut lp = StandardFormLP::new(vec![0.0; self.dim], vec![false; self.dim]);
        for (row, p) in self.rows.iter().zip(&self.rhs) {
            let neg: Vec<f64> = row.iter().map(|v| -v).collect();
            lp.ineq_rows.push(LinearRow::dense(&neg, -p));
        }
        Ok(match solve_lp(&lp, tol)? {
            LpOutcome::Optimal(s) => Some(s.primal),
            _ => None,
        })
    }

    pub fn is_empty(&self, tol: &Tolerances) -> Result<bool> {
        Ok(self.feasible_point(tol)?.is_none())
    }

    /// Checks nonemptiness and boundedness with `2·dim` support problems.
    pub fn check_bounded(&self, tol: &Tolerances) -> Result<()> {
        use crate::error::Assumption;
        for k in 0..self.dim {
            for sign in [1.0, -1.0] {
                let mut e = vec![0.0; self.dim];
                e[k] = sign;
                match self.support(&e, tol)? {
                    Support::Finite { .. } => {}
                    Support::Empty => {
                        return Err(AroError::Assumption {
                            assumption: Assumption::BoundedUncertaintySet,
                            detail: "the uncertainty set is empty".into(),
                        })
                    }
                    Support::Unbounded => {
                        return Err(AroError::Assumption {
                            assumption: Assumption::BoundedUncertaintySet,
                            detail: format!(
                                "unbounded along {}z[{k}]",
                                if sign > 0.0 { "+" } else { "-" }
                            ),
                        })
                    }
                }
            }
        }
        if self.dim == 0 && self.is_empty(tol)? {
            return Err(AroError::Assumption {
                assumption: Assumption::BoundedUncertaintySet,
                detail: "the uncertainty set is empty".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_box_support() {
        let t = Tolerances::default();
        let b = Polyhedron::bounding_box(&[0.0, 0.0], &[1.0, 1.0]);
        let Support::Finite { value, point } = b.support(&[1.0, 2.0], &t).unwrap() else {
            panic!()
        };
        assert!((value - 3.0).abs() < 1e-12);
        assert_eq!(point, vec![1.0, 1.0]);
        assert!(b.check_bounded(&t).is_ok());
    }

    #[test]
    fn orthant_is_unbounded() {
        let t = Tolerances::default();
        let p = Polyhedron::new(2, vec![vec![-1.0, 0.0], vec![0.0, -1.0]], vec![0.0, 0.0]).unwrap();
        let err = p.check_bounded(&t).unwrap_err();
        assert!(matches!(err, AroError::Assumption { .. }), "{err}");
    }

    #[test]
    fn empty_set_is_reported() {
        let t = Tolerances::default();
        let p = Polyhedron::new(1, vec![vec![1.0], vec![-1.0]], vec![0.0, -1.0]).unwrap();
        assert!(p.is_empty(&t).unwrap());
        assert!(p.check_bounded(&t).is_err());
    }

    #[test]
    fn membership_tolerance_scales_with_offset() {
        let t = Tolerances::default();
        let p = Polyhedron::new(1, vec![vec![1.0]], vec![1000.0]).unwrap();
        assert!(p.contains(&[1000.0 + 1e-5], &t));
        assert!(!p.contains(&[1000.0 + 1e-3], &t));
    }

    #[test]
    fn bisecting_plane_distances() {
        let h = Hyperplane {
            normal: vec![1.0, 1.0],
            offset: 1.0,
        };
        assert!((h.signed_distance(&[1.0, 1.0]) - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((h.signed_distance(&[0.0, 0.0]) + 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }
}
