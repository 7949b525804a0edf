//! Finite robust counterpart of the static problem over a partition, and the
//! map from its LP multipliers back to scenario-shaped dual quantities.
//!
//! For every leaf `s` with region `{z : P z ≤ p}` the LP contains
//!
//! ```text
//! (a)  t − c̄·x − q̄·y^s − p·κ_0^s ≥ 0
//! (b)  ā_i·x + w̄_i·y^s − p·κ_i^s ≥ b_i                  for every i
//! (c)  d_j·x + Σ_s e_j^s·y^s ≥ δ_j                       branching rows
//! (d)  Cᵀx + Qᵀy^s − Pᵀκ_0^s = 0
//! (e)  A_iᵀx + W_iᵀy^s + Pᵀκ_i^s = 0                     for every i
//! ```
//!
//! with `x, y, κ ≥ 0` and `t` free. In the [`Layout::Reduced`] form (the
//! default) the κ block and the equality rows of a row without uncertainty
//! are dropped: for a bounded nonempty cell they are forced to zero anyway.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{AroError, Result};
use crate::lp::{FarkasCertificate, LinearRow, LpOutcome, OptimalSolution, StandardFormLP};
use crate::model::polyhedron::dot;
use crate::model::{AffineVector, AroProblem, CellId, Partition, Polyhedron};
use crate::tolerance::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Skip κ blocks and equality rows whose perturbation is zero.
    #[default]
    Reduced,
    /// Every row and block, whether or not it carries uncertainty.
    Full,
}

/// A row `d·x + Σ_s e^s·y^s ≥ δ` added by branching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingConstraint {
    pub x_coeffs: Vec<(usize, f64)>,
    pub y_coeffs: Vec<(CellId, usize, f64)>,
    pub delta: f64,
}

/// The integer variable a simple bound refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Var {
    X(usize),
    Y(CellId, usize),
}

impl BranchingConstraint {
    /// `var ≥ bound`.
    pub fn lower(var: Var, bound: f64) -> Self {
        Self::simple(var, 1.0, bound)
    }

    /// `var ≤ bound`, stored as `−var ≥ −bound`.
    pub fn upper(var: Var, bound: f64) -> Self {
        Self::simple(var, -1.0, -bound)
    }

    fn simple(var: Var, coeff: f64, delta: f64) -> Self {
        match var {
            Var::X(k) => Self {
                x_coeffs: vec![(k, coeff)],
                y_coeffs: Vec::new(),
                delta,
            },
            Var::Y(s, k) => Self {
                x_coeffs: Vec::new(),
                y_coeffs: vec![(s, k, coeff)],
                delta,
            },
        }
    }
}

/// Position of one leaf's variables and rows in the counterpart LP.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBlock {
    pub cell: CellId,
    pub region: Polyhedron,
    pub y: Range<usize>,
    /// Index 0 is the objective, index `i + 1` constraint `i`.
    pub kappa: Vec<Option<Range<usize>>>,
    /// Inequality row (a) at index 0, rows (b) after it.
    pub ineq_rows: Vec<usize>,
    /// Equality rows (d) at index 0, rows (e) after it.
    pub eq_rows: Vec<Option<Range<usize>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterpartIndex {
    pub t: usize,
    pub x: Range<usize>,
    pub cells: Vec<CellBlock>,
    pub num_vars: usize,
    /// Number of inequality rows before any branching row.
    pub base_ineq_rows: usize,
    pub layout: Layout,
}

impl CounterpartIndex {
    pub fn block(&self, cell: CellId) -> Option<&CellBlock> {
        self.cells.iter().find(|b| b.cell == cell)
    }

    fn var_index(&self, var: Var, d1: usize, d2: usize) -> Result<usize> {
        match var {
            Var::X(k) if k < d1 => Ok(self.x.start + k),
            Var::Y(s, k) if k < d2 => self
                .block(s)
                .map(|b| b.y.start + k)
                .ok_or(AroError::UnknownCell(s.0)),
            _ => Err(AroError::Dimension(format!(
                "variable {var:?} out of range"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Counterpart {
    pub lp: StandardFormLP,
    pub index: CounterpartIndex,
}

fn uses_kappa(layout: Layout, a: &AffineVector, w: &AffineVector) -> bool {
    layout == Layout::Full || !a.is_certain() || !w.is_certain()
}

/// Builds the counterpart LP for the leaves of `partition` with the given
/// branching rows appended after the base rows.
pub fn build_counterpart(
    problem: &AroProblem,
    partition: &Partition,
    branches: &[BranchingConstraint],
    layout: Layout,
) -> Result<Counterpart> {
    problem.check_dimensions()?;
    if partition.base().dim() != problem.uncertainty_dim {
        return Err(AroError::Dimension(format!(
            "partition has dimension {} but L = {}",
            partition.base().dim(),
            problem.uncertainty_dim
        )));
    }
    let (d1, d2, l) = (problem.d1, problem.d2, problem.uncertainty_dim);
    let n_cons = problem.constraints.len();

    // Variable layout.
    let t = 0;
    let x = 1..1 + d1;
    let mut next = x.end;
    let mut cells = Vec::new();
    for id in partition.leaves() {
        let region = partition.region(id)?;
        let rows = region.num_rows();
        let y = next..next + d2;
        next = y.end;
        let mut kappa = Vec::with_capacity(n_cons + 1);
        let mut flags = vec![uses_kappa(layout, &problem.cost_x, &problem.cost_y)];
        flags.extend(
            problem
                .constraints
                .iter()
                .map(|c| uses_kappa(layout, &c.a, &c.w)),
        );
        for used in flags {
            if used {
                kappa.push(Some(next..next + rows));
                next += rows;
            } else {
                kappa.push(None);
            }
        }
        cells.push(CellBlock {
            cell: id,
            region,
            y,
            kappa,
            ineq_rows: Vec::new(),
            eq_rows: Vec::new(),
        });
    }
    let num_vars = next;
    let mut nonneg = vec![true; num_vars];
    nonneg[t] = false;
    let mut objective = vec![0.0; num_vars];
    objective[t] = 1.0;
    let mut lp = StandardFormLP::new(objective, nonneg);

    for block in &mut cells {
        let p = block.region.rhs();
        let rows = block.region.rows();

        // (a)
        let mut coeffs = vec![(t, 1.0)];
        coeffs.extend(
            problem
                .cost_x
                .nominal()
                .iter()
                .enumerate()
                .map(|(k, v)| (x.start + k, -v)),
        );
        coeffs.extend(
            problem
                .cost_y
                .nominal()
                .iter()
                .enumerate()
                .map(|(k, v)| (block.y.start + k, -v)),
        );
        if let Some(kap) = &block.kappa[0] {
            coeffs.extend(kap.clone().zip(p).map(|(j, v)| (j, -v)));
        }
        block.ineq_rows.push(lp.ineq_rows.len());
        lp.ineq_rows.push(LinearRow::sparse(coeffs, 0.0));

        // (b)
        for (i, c) in problem.constraints.iter().enumerate() {
            let mut coeffs: Vec<(usize, f64)> =
                c.a.nominal()
                    .iter()
                    .enumerate()
                    .map(|(k, v)| (x.start + k, *v))
                    .collect();
            coeffs.extend(
                c.w.nominal()
                    .iter()
                    .enumerate()
                    .map(|(k, v)| (block.y.start + k, *v)),
            );
            if let Some(kap) = &block.kappa[i + 1] {
                coeffs.extend(kap.clone().zip(p).map(|(j, v)| (j, -v)));
            }
            block.ineq_rows.push(lp.ineq_rows.len());
            lp.ineq_rows.push(LinearRow::sparse(coeffs, c.b));
        }

        // (d) and (e): one row per uncertainty component.
        let eq_block = |lp: &mut StandardFormLP,
                        kap: &Option<Range<usize>>,
                        a: &AffineVector,
                        w: &AffineVector,
                        kappa_sign: f64|
         -> Option<Range<usize>> {
            let kap = kap.as_ref()?;
            let start = lp.eq_rows.len();
            let mut per_l: Vec<Vec<(usize, f64)>> = vec![Vec::new(); l];
            for &(k, zl, v) in a.entries() {
                per_l[zl].push((x.start + k, v));
            }
            for &(k, zl, v) in w.entries() {
                per_l[zl].push((block.y.start + k, v));
            }
            for (r, row) in rows.iter().enumerate() {
                for (zl, &v) in row.iter().enumerate() {
                    if v != 0.0 {
                        per_l[zl].push((kap.start + r, kappa_sign * v));
                    }
                }
            }
            for coeffs in per_l {
                lp.eq_rows.push(LinearRow::sparse(coeffs, 0.0));
            }
            Some(start..start + l)
        };
        let d = eq_block(
            &mut lp,
            &block.kappa[0],
            &problem.cost_x,
            &problem.cost_y,
            -1.0,
        );
        block.eq_rows.push(d);
        for (i, c) in problem.constraints.iter().enumerate() {
            let e = eq_block(&mut lp, &block.kappa[i + 1], &c.a, &c.w, 1.0);
            block.eq_rows.push(e);
        }
    }

    let index = CounterpartIndex {
        t,
        x,
        cells,
        num_vars,
        base_ineq_rows: lp.ineq_rows.len(),
        layout,
    };
    let mut cp = Counterpart { lp, index };
    for b in branches {
        let row = cp.branch_row(problem, b)?;
        cp.lp.ineq_rows.push(row);
    }
    Ok(cp)
}

impl Counterpart {
    /// The LP row of a branching constraint.
    pub fn branch_row(&self, problem: &AroProblem, b: &BranchingConstraint) -> Result<LinearRow> {
        let (d1, d2) = (problem.d1, problem.d2);
        let mut coeffs = Vec::with_capacity(b.x_coeffs.len() + b.y_coeffs.len());
        for &(k, v) in &b.x_coeffs {
            coeffs.push((self.index.var_index(Var::X(k), d1, d2)?, v));
        }
        for &(s, k, v) in &b.y_coeffs {
            coeffs.push((self.index.var_index(Var::Y(s, k), d1, d2)?, v));
        }
        Ok(LinearRow::sparse(coeffs, b.delta))
    }

    pub fn var_index(&self, problem: &AroProblem, var: Var) -> Result<usize> {
        self.index.var_index(var, problem.d1, problem.d2)
    }

    /// Reads `(t, x, y^s)` from an LP primal vector.
    pub fn static_solution(&self, primal: &[f64]) -> StaticSolution {
        StaticSolution {
            t: primal[self.index.t],
            x: primal[self.index.x.clone()].to_vec(),
            y: self
                .index
                .cells
                .iter()
                .map(|b| (b.cell, primal[b.y.clone()].to_vec()))
                .collect(),
        }
    }
}

/// The rows and columns of one leaf, with `t` as column 0. Without
/// first-stage variables the leaves share nothing but `t`, so the counterpart
/// optimum is the largest of the leaf optima.
#[derive(Debug, Clone)]
pub struct CellSubproblem {
    pub lp: StandardFormLP,
    /// First LP column of the leaf; leaf column `j ≥ 1` is `offset + j − 1`.
    pub offset: usize,
    pub ineq_rows: Vec<usize>,
    pub eq_rows: Vec<usize>,
}

impl CellSubproblem {
    pub fn full_column(&self, j: usize) -> usize {
        if j == 0 {
            0
        } else {
            self.offset + j - 1
        }
    }

    /// Restates a row of the full LP over the leaf columns.
    pub fn restrict(&self, row: &LinearRow) -> Result<LinearRow> {
        let end = self.offset + self.lp.num_vars - 1;
        let mut coeffs = Vec::with_capacity(row.coeffs().len());
        for &(j, v) in row.coeffs() {
            let k = if j == 0 {
                0
            } else if (self.offset..end).contains(&j) {
                j - self.offset + 1
            } else {
                return Err(AroError::Internal(format!(
                    "column {j} lies outside the leaf block"
                )));
            };
            coeffs.push((k, v));
        }
        Ok(LinearRow::sparse(coeffs, row.rhs))
    }
}

impl Counterpart {
    /// Splits the base rows by leaf. `None` when first-stage variables couple
    /// the leaves.
    pub fn cell_subproblems(&self) -> Option<Vec<CellSubproblem>> {
        if !self.index.x.is_empty() || self.index.t != 0 {
            return None;
        }
        let mut out = Vec::with_capacity(self.index.cells.len());
        for (k, block) in self.index.cells.iter().enumerate() {
            let offset = block.y.start;
            let end = self
                .index
                .cells
                .get(k + 1)
                .map_or(self.index.num_vars, |b| b.y.start);
            let n = end - offset + 1;
            let mut objective = vec![0.0; n];
            objective[0] = 1.0;
            let mut nonneg = vec![true; n];
            nonneg[0] = false;
            let mut sub = CellSubproblem {
                lp: StandardFormLP::new(objective, nonneg),
                offset,
                ineq_rows: block.ineq_rows.clone(),
                eq_rows: block
                    .eq_rows
                    .iter()
                    .flatten()
                    .flat_map(|r| r.clone())
                    .collect(),
            };
            let mut ineq = Vec::with_capacity(sub.ineq_rows.len());
            for &r in &sub.ineq_rows {
                ineq.push(sub.restrict(&self.lp.ineq_rows[r]).ok()?);
            }
            let mut eq = Vec::with_capacity(sub.eq_rows.len());
            for &r in &sub.eq_rows {
                eq.push(sub.restrict(&self.lp.eq_rows[r]).ok()?);
            }
            sub.lp.ineq_rows = ineq;
            sub.lp.eq_rows = eq;
            out.push(sub);
        }
        Some(out)
    }
}

/// First-stage decision and one second-stage decision per leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticSolution {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<(CellId, Vec<f64>)>,
}

impl StaticSolution {
    pub fn y_of(&self, cell: CellId) -> Option<&[f64]> {
        self.y
            .iter()
            .find(|(c, _)| *c == cell)
            .map(|(_, y)| y.as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualKind {
    /// Optimal multipliers of a feasible node.
    Optimal,
    /// A Farkas ray of an infeasible node, scaled so that its largest `λ` is 1.
    Ray,
}

/// Multipliers of one leaf: `λ_i ≥ 0` and, for rows that carry uncertainty,
/// `u_i` with `P u_i ≤ λ_i p`. Index 0 is the objective row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDuals {
    pub cell: CellId,
    pub lambda: Vec<f64>,
    pub u: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDuals {
    pub kind: DualKind,
    pub cells: Vec<CellDuals>,
    pub mu: Vec<f64>,
    /// LP objective, `+∞` for a ray.
    pub objective_value: f64,
}

impl NodeDuals {
    /// `Σ_s Σ_i λ_i^s b_i + Σ_j μ_j δ_j`.
    pub fn dual_objective(&self, problem: &AroProblem, branches: &[BranchingConstraint]) -> f64 {
        let mut total = 0.0;
        for c in &self.cells {
            for (i, con) in problem.constraints.iter().enumerate() {
                total += c.lambda[i + 1] * con.b;
            }
        }
        total
            + self
                .mu
                .iter()
                .zip(branches)
                .map(|(m, b)| m * b.delta)
                .sum::<f64>()
    }
}

/// Maps an optimal solution or a Farkas certificate of the counterpart back
/// to `(λ, u, μ)`. Inequality multipliers beyond the base rows are the
/// branching multipliers, in order.
pub fn unpack_duals(outcome: &LpOutcome, index: &CounterpartIndex) -> Result<NodeDuals> {
    match outcome {
        LpOutcome::Optimal(OptimalSolution {
            dual_ineq,
            dual_eq,
            objective,
            ..
        }) => Ok(unpack(
            dual_ineq,
            dual_eq,
            index,
            DualKind::Optimal,
            *objective,
            1.0,
        )),
        LpOutcome::Infeasible(FarkasCertificate { ineq, eq }) => {
            let scale = index
                .cells
                .iter()
                .flat_map(|b| b.ineq_rows.iter().map(|&r| ineq[r]))
                .fold(0.0_f64, f64::max);
            let scale = if scale > 0.0 { 1.0 / scale } else { 1.0 };
            Ok(unpack(ineq, eq, index, DualKind::Ray, f64::INFINITY, scale))
        }
        LpOutcome::Unbounded { .. } => Err(AroError::Internal(
            "counterpart LP is unbounded; the static problem violates its assumptions".into(),
        )),
    }
}

fn unpack(
    ineq: &[f64],
    eq: &[f64],
    index: &CounterpartIndex,
    kind: DualKind,
    objective_value: f64,
    scale: f64,
) -> NodeDuals {
    let cells = index
        .cells
        .iter()
        .map(|b| {
            let lambda = b.ineq_rows.iter().map(|&r| scale * ineq[r]).collect();
            let u = b
                .eq_rows
                .iter()
                .enumerate()
                .map(|(i, rows)| {
                    // Rows (d) enter with the opposite sign of rows (e).
                    let sign = if i == 0 { -scale } else { scale };
                    rows.as_ref()
                        .map(|rows| eq[rows.clone()].iter().map(|v| sign * v).collect())
                })
                .collect();
            CellDuals {
                cell: b.cell,
                lambda,
                u,
            }
        })
        .collect();
    NodeDuals {
        kind,
        cells,
        mu: ineq[index.base_ineq_rows..]
            .iter()
            .map(|v| scale * v)
            .collect(),
        objective_value,
    }
}

/// Checks `(λ, u, μ)` against the dual constraint system, assembled directly
/// from the problem data rather than from the LP. Returns a description of
/// the first violated condition.
pub fn check_dual_feasibility(
    problem: &AroProblem,
    partition: &Partition,
    branches: &[BranchingConstraint],
    duals: &NodeDuals,
    tol: &Tolerances,
) -> std::result::Result<(), String> {
    let eps = |scale: f64| 10.0 * tol.feas * (1.0 + scale);
    let leaves = partition.leaves();
    if duals.cells.len() != leaves.len() || duals.mu.len() != branches.len() {
        return Err("dual vector shape does not match the node".into());
    }
    let n_cons = problem.constraints.len();

    let lambda0: f64 = duals.cells.iter().map(|c| c.lambda[0]).sum();
    let expected = if duals.kind == DualKind::Optimal {
        1.0
    } else {
        0.0
    };
    if (lambda0 - expected).abs() > eps(1.0) {
        return Err(format!("Σ_s λ_0^s = {lambda0}, expected {expected}"));
    }
    if let Some(m) = duals.mu.iter().find(|m| **m < -eps(0.0)) {
        return Err(format!("negative branching multiplier {m}"));
    }

    let mut x_col = vec![0.0; problem.d1];
    for (c, &leaf) in duals.cells.iter().zip(&leaves) {
        if c.cell != leaf || c.lambda.len() != n_cons + 1 || c.u.len() != n_cons + 1 {
            return Err(format!("cell {} has malformed multipliers", c.cell));
        }
        if let Some(l) = c.lambda.iter().find(|l| **l < -eps(0.0)) {
            return Err(format!("negative multiplier {l} in cell {}", c.cell));
        }
        let region = partition.region(leaf).map_err(|e| e.to_string())?;
        for (i, u) in c.u.iter().enumerate() {
            if let Some(u) = u {
                for (row, p) in region.rows().iter().zip(region.rhs()) {
                    let lhs = dot(row, u);
                    if lhs > c.lambda[i] * p + eps(p.abs() * c.lambda[i].abs() + lhs.abs()) {
                        return Err(format!(
                            "cell {}, row {i}: P u ≤ λ p violated ({lhs} > {})",
                            c.cell,
                            c.lambda[i] * p
                        ));
                    }
                }
            }
        }
        let zero = vec![0.0; problem.uncertainty_dim];
        let u_of = |i: usize| c.u[i].as_deref().unwrap_or(&zero);

        // Reduced costs of x (accumulated over cells) and of y^s.
        let mut y_col: Vec<f64> = problem
            .cost_y
            .nominal()
            .iter()
            .map(|q| q * c.lambda[0])
            .collect();
        add_perturbation(&mut y_col, &problem.cost_y, u_of(0), 1.0);
        for (k, v) in problem.cost_x.nominal().iter().enumerate() {
            x_col[k] += v * c.lambda[0];
        }
        add_perturbation(&mut x_col, &problem.cost_x, u_of(0), 1.0);
        for (i, con) in problem.constraints.iter().enumerate() {
            let lam = c.lambda[i + 1];
            for (k, v) in con.w.nominal().iter().enumerate() {
                y_col[k] -= v * lam;
            }
            add_perturbation(&mut y_col, &con.w, u_of(i + 1), -1.0);
            for (k, v) in con.a.nominal().iter().enumerate() {
                x_col[k] -= v * lam;
            }
            add_perturbation(&mut x_col, &con.a, u_of(i + 1), -1.0);
        }
        for (mu, b) in duals.mu.iter().zip(branches) {
            for &(s, k, v) in &b.y_coeffs {
                if s == leaf {
                    y_col[k] -= mu * v;
                }
            }
        }
        if let Some((k, v)) = y_col.iter().enumerate().find(|(_, v)| **v < -eps(1.0)) {
            return Err(format!("cell {}: reduced cost of y[{k}] is {v}", c.cell));
        }
    }
    for (mu, b) in duals.mu.iter().zip(branches) {
        for &(k, v) in &b.x_coeffs {
            x_col[k] -= mu * v;
        }
    }
    if let Some((k, v)) = x_col.iter().enumerate().find(|(_, v)| **v < -eps(1.0)) {
        return Err(format!("reduced cost of x[{k}] is {v}"));
    }
    Ok(())
}

fn add_perturbation(out: &mut [f64], v: &AffineVector, u: &[f64], sign: f64) {
    for &(k, l, m) in v.entries() {
        out[k] += sign * m * u[l];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::solve_lp;
    use crate::model::{Hyperplane, UncertainConstraint};

    /// min t s.t. t ≥ z·y for all z ∈ [0,1], y ≥ 1.
    fn toy() -> AroProblem {
        AroProblem {
            uncertainty_dim: 1,
            d1: 0,
            d2: 1,
            m1: 0,
            m2: 0,
            cost_x: AffineVector::constant(vec![], 1),
            cost_y: AffineVector::new(vec![0.0], vec![(0, 0, 1.0)], 1).unwrap(),
            constraints: vec![UncertainConstraint {
                a: AffineVector::constant(vec![], 1),
                w: AffineVector::constant(vec![1.0], 1),
                b: 1.0,
            }],
            base_set: Polyhedron::new(1, vec![vec![1.0], vec![-1.0]], vec![1.0, 0.0]).unwrap(),
        }
    }

    #[test]
    fn toy_counterpart() {
        let t = Tolerances::default();
        let p = toy();
        let part = Partition::new(p.base_set.clone());
        let cp = build_counterpart(&p, &part, &[], Layout::Full).unwrap();
        let out = solve_lp(&cp.lp, &t).unwrap();
        let sol = out.as_optimal().unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
        let kap = cp.index.cells[0].kappa[0].clone().unwrap();
        assert!((sol.primal[kap.start] - 1.0).abs() < 1e-9);
        assert!(sol.primal[kap.start + 1].abs() < 1e-9);

        let duals = unpack_duals(&out, &cp.index).unwrap();
        assert!(duals.mu.is_empty());
        let c = &duals.cells[0];
        assert!((c.lambda[0] - 1.0).abs() < 1e-9);
        assert!((c.u[0].as_ref().unwrap()[0] - 1.0).abs() < 1e-9);
        assert!((duals.dual_objective(&p, &[]) - 1.0).abs() < 1e-9);
        check_dual_feasibility(&p, &part, &[], &duals, &t).unwrap();
    }

    #[test]
    fn reduced_layout_drops_certain_blocks() {
        let p = toy();
        let part = Partition::new(p.base_set.clone());
        let full = build_counterpart(&p, &part, &[], Layout::Full).unwrap();
        let red = build_counterpart(&p, &part, &[], Layout::Reduced).unwrap();
        assert_eq!(full.lp.eq_rows.len(), 2);
        assert_eq!(red.lp.eq_rows.len(), 1);
        assert!(red.index.cells[0].kappa[1].is_none());
        let t = Tolerances::default();
        let a = solve_lp(&full.lp, &t).unwrap().objective();
        let b = solve_lp(&red.lp, &t).unwrap().objective();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn two_cells_put_mass_on_the_upper_cell() {
        let t = Tolerances::default();
        let p = toy();
        let part = Partition::new(p.base_set.clone())
            .refine(
                CellId(0),
                &Hyperplane {
                    normal: vec![1.0],
                    offset: 0.5,
                },
                1,
                &t,
            )
            .unwrap();
        let cp = build_counterpart(&p, &part, &[], Layout::Reduced).unwrap();
        let out = solve_lp(&cp.lp, &t).unwrap();
        assert!((out.objective() - 1.0).abs() < 1e-9);
        let duals = unpack_duals(&out, &cp.index).unwrap();
        let sum: f64 = duals.cells.iter().map(|c| c.lambda[0]).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        let upper = duals.cells.iter().find(|c| c.cell == CellId(2)).unwrap();
        assert!((upper.lambda[0] - 1.0).abs() < 1e-9);
        check_dual_feasibility(&p, &part, &[], &duals, &t).unwrap();
    }

    #[test]
    fn branching_rows_and_rays() {
        let t = Tolerances::default();
        let p = toy();
        let part = Partition::new(p.base_set.clone());
        let branches = vec![BranchingConstraint::upper(Var::Y(CellId(0), 0), 0.0)];
        let cp = build_counterpart(&p, &part, &branches, Layout::Reduced).unwrap();
        assert_eq!(cp.lp.ineq_rows.len(), cp.index.base_ineq_rows + 1);
        let out = solve_lp(&cp.lp, &t).unwrap();
        assert!(matches!(out, LpOutcome::Infeasible(_)));
        let duals = unpack_duals(&out, &cp.index).unwrap();
        assert_eq!(duals.kind, DualKind::Ray);
        assert!(duals.objective_value.is_infinite());
        assert!(duals.dual_objective(&p, &branches) > 0.0);
        check_dual_feasibility(&p, &part, &branches, &duals, &t).unwrap();
    }

    #[test]
    fn corrupted_duals_fail_the_check() {
        let t = Tolerances::default();
        let p = toy();
        let part = Partition::new(p.base_set.clone());
        let cp = build_counterpart(&p, &part, &[], Layout::Full).unwrap();
        let mut duals = unpack_duals(&solve_lp(&cp.lp, &t).unwrap(), &cp.index).unwrap();
        duals.cells[0].u[0] = Some(vec![2.0]);
        assert!(check_dual_feasibility(&p, &part, &[], &duals, &t).is_err());
    }
}
