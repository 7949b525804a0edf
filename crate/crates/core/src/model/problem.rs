use crate::error::{AroError, Result};
use crate::model::polyhedron::{dot, Polyhedron, Scenario, Support};
use crate::tolerance::Tolerances;

/// A vector depending affinely on the uncertain parameter: `v(z) = nominal + M z`.
///
/// The perturbation matrix `M` (components × uncertainty dimension) is kept
/// as sorted `(component, parameter, value)` triplets; most models perturb
/// only a handful of entries.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineVector {
    nominal: Vec<f64>,
    entries: Vec<(usize, usize, f64)>,
    uncertainty_dim: usize,
}

impl AffineVector {
    pub fn constant(nominal: Vec<f64>, uncertainty_dim: usize) -> Self {
        Self {
            nominal,
            entries: Vec::new(),
            uncertainty_dim,
        }
    }

    pub fn new(
        nominal: Vec<f64>,
        mut entries: Vec<(usize, usize, f64)>,
        uncertainty_dim: usize,
    ) -> Result<Self> {
        for &(k, l, v) in &entries {
            if k >= nominal.len() || l >= uncertainty_dim {
                return Err(AroError::Dimension(format!(
                    "perturbation entry ({k}, {l}) outside {}×{uncertainty_dim}",
                    nominal.len()
                )));
            }
            if !v.is_finite() {
                return Err(AroError::Dimension(format!(
                    "non-finite perturbation entry at ({k}, {l})"
                )));
            }
        }
        entries.retain(|e| e.2 != 0.0);
        entries.sort_by_key(|e| (e.0, e.1));
        entries.dedup_by(|later, earlier| {
            if (later.0, later.1) == (earlier.0, earlier.1) {
                earlier.2 += later.2;
                true
            } else {
                false
            }
        });
        Ok(Self {
            nominal,
            entries,
            uncertainty_dim,
        })
    }

    /// Builds from a dense `components × uncertainty_dim` matrix.
    pub fn from_dense(
        nominal: Vec<f64>,
        matrix: &[Vec<f64>],
        uncertainty_dim: usize,
    ) -> Result<Self> {
        if matrix.len() != nominal.len() {
            return Err(AroError::Dimension(format!(
                "perturbation matrix has {} rows but the nominal vector has {} entries",
                matrix.len(),
                nominal.len()
            )));
        }
        let mut entries = Vec::new();
        for (k, row) in matrix.iter().enumerate() {
            if row.len() != uncertainty_dim {
                return Err(AroError::Dimension(format!(
                    "perturbation row {k} has {} columns, expected {uncertainty_dim}",
                    row.len()
                )));
            }
            for (l, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    entries.push((k, l, v));
                }
            }
        }
        Self::new(nominal, entries, uncertainty_dim)
    }

    pub fn len(&self) -> usize {
        self.nominal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nominal.is_empty()
    }

    pub fn nominal(&self) -> &[f64] {
        &self.nominal
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn uncertainty_dim(&self) -> usize {
        self.uncertainty_dim
    }

    pub fn is_certain(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dense_perturbation(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.uncertainty_dim]; self.nominal.len()];
        for &(k, l, v) in &self.entries {
            m[k][l] = v;
        }
        m
    }

    /// `nominal + M z`.
    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.nominal.clone();
        for &(k, l, v) in &self.entries {
            out[k] += v * z[l];
        }
        out
    }

    /// `Mᵀ x`, the sensitivity of `v(z)·x` to `z`.
    pub fn transpose_apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.uncertainty_dim];
        for &(k, l, v) in &self.entries {
            out[l] += v * x[k];
        }
        out
    }
}

/// One robust constraint `a(z)·x + w(z)·y ≥ b` for all `z` in the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainConstraint {
    pub a: AffineVector,
    pub w: AffineVector,
    pub b: f64,
}

impl UncertainConstraint {
    pub fn is_certain(&self) -> bool {
        self.a.is_certain() && self.w.is_certain()
    }
}

/// Two-stage mixed-integer adjustable robust problem
///
/// ```text
/// min t  s.t.  t − c(z)·x − q(z)·y(z) ≥ 0            ∀ z ∈ Z
///              a_i(z)·x + w_i(z)·y(z) ≥ b_i          ∀ z ∈ Z, i
///              x ∈ ℤ^{m1}_+ × ℝ^{d1−m1}_+,  y(z) ∈ ℤ^{m2}_+ × ℝ^{d2−m2}_+
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AroProblem {
    pub uncertainty_dim: usize,
    pub d1: usize,
    pub d2: usize,
    pub m1: usize,
    pub m2: usize,
    pub cost_x: AffineVector,
    pub cost_y: AffineVector,
    pub constraints: Vec<UncertainConstraint>,
    pub base_set: Polyhedron,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidationReport {
    pub bounded: bool,
    /// No constraint depends on `z`; required by the ex-post correction.
    pub objective_only: bool,
    pub uncertain_constraints: usize,
}

impl AroProblem {
    pub fn check_dimensions(&self) -> Result<()> {
        let l = self.uncertainty_dim;
        if self.m1 > self.d1 || self.m2 > self.d2 {
            return Err(AroError::Dimension(format!(
                "integer counts (m1={}, m2={}) exceed dimensions (d1={}, d2={})",
                self.m1, self.m2, self.d1, self.d2
            )));
        }
        if self.base_set.dim() != l {
            return Err(AroError::Dimension(format!(
                "uncertainty set has dimension {} but L = {l}",
                self.base_set.dim()
            )));
        }
        let check = |name: &str, v: &AffineVector, len: usize| -> Result<()> {
            if v.len() != len || v.uncertainty_dim() != l {
                return Err(AroError::Dimension(format!(
                    "{name} is {}×{} but should be {len}×{l}",
                    v.len(),
                    v.uncertainty_dim()
                )));
            }
            Ok(())
        };
        check("cost_x", &self.cost_x, self.d1)?;
        check("cost_y", &self.cost_y, self.d2)?;
        for (i, c) in self.constraints.iter().enumerate() {
            check(&format!("constraint {i} a"), &c.a, self.d1)?;
            check(&format!("constraint {i} w"), &c.w, self.d2)?;
            if !c.b.is_finite() {
                return Err(AroError::Dimension(format!(
                    "constraint {i} has a non-finite rhs"
                )));
            }
        }
        Ok(())
    }

    pub fn objective_is_certain(&self) -> bool {
        self.cost_x.is_certain() && self.cost_y.is_certain()
    }

    pub fn constraints_are_certain(&self) -> bool {
        self.constraints.iter().all(UncertainConstraint::is_certain)
    }

    /// Checks dimensions and that the uncertainty set is nonempty and bounded.
    pub fn validate(&self, tol: &Tolerances) -> Result<ValidationReport> {
        self.check_dimensions()?;
        self.base_set.check_bounded(tol)?;
        Ok(ValidationReport {
            bounded: true,
            objective_only: self.constraints_are_certain(),
            uncertain_constraints: self.constraints.iter().filter(|c| !c.is_certain()).count(),
        })
    }

    /// `c(z)·x + q(z)·y`.
    pub fn objective_at(&self, x: &[f64], y: &[f64], z: &[f64]) -> f64 {
        dot(&self.cost_x.eval(z), x) + dot(&self.cost_y.eval(z), y)
    }

    /// `max_{z ∈ cell} c(z)·x + q(z)·y` and a maximizer.
    pub fn worst_case_objective(
        &self,
        x: &[f64],
        y: &[f64],
        cell: &Polyhedron,
        tol: &Tolerances,
    ) -> Result<(f64, Scenario)> {
        let nominal = dot(self.cost_x.nominal(), x) + dot(self.cost_y.nominal(), y);
        let mut g = self.cost_x.transpose_apply(x);
        for (gl, hl) in g.iter_mut().zip(self.cost_y.transpose_apply(y)) {
            *gl += hl;
        }
        match cell.support(&g, tol)? {
            Support::Finite { value, point } => Ok((nominal + value, point)),
            Support::Empty => Err(AroError::Internal("worst case over an empty cell".into())),
            Support::Unbounded => Err(AroError::Assumption {
                assumption: crate::error::Assumption::BoundedUncertaintySet,
                detail: "unbounded worst case".into(),
            }),
        }
    }
}
