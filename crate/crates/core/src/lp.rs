//! Dense-tableau simplex over canonical-form linear programs.
//!
//! Problems are stated as
//!
//! ```text
//! min  cᵀx
//! s.t. a_k·x ≥ b_k   (inequality rows)
//!      e_k·x = f_k   (equality rows)
//!      x_j ≥ 0 for flagged variables, free otherwise
//! ```
//!
//! and every solve returns a certificate: an optimal primal/dual pair, a
//! Farkas ray proving infeasibility, or a primal ray proving unboundedness.
//! Pivoting is deterministic (Dantzig pricing with a Bland fallback once a
//! run of degenerate pivots is detected), so identical inputs give
//! bit-identical outcomes.

use log::debug;
use thiserror::Error;

use crate::tolerance::Tolerances;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numerical breakdown: {0}")]
    Numeric(String),
    #[error("warm start requires an optimal basis")]
    NotOptimal,
}

/// One linear row `coeffs·x (≥ | =) rhs` with sparse, sorted, merged coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn sparse(mut entries: Vec<(usize, f64)>, rhs: f64) -> Self {
        entries.sort_by_key(|&(j, _)| j);
        let mut coeffs: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (j, v) in entries {
            match coeffs.last_mut() {
                Some(last) if last.0 == j => last.1 += v,
                _ => coeffs.push((j, v)),
            }
        }
        coeffs.retain(|&(_, v)| v != 0.0);
        Self { coeffs, rhs }
    }

    pub fn dense(values: &[f64], rhs: f64) -> Self {
        let coeffs = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j, *v))
            .collect();
        Self { coeffs, rhs }
    }

    pub fn coeffs(&self) -> &[(usize, f64)] {
        &self.coeffs
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, v)| v * x[j]).sum()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.coeffs.last().map(|&(j, _)| j)
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(j, v) in &self.coeffs {
            out[j] = v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardFormLP {
    pub num_vars: usize,
    /// Minimized.
    pub objective: Vec<f64>,
    /// `row·x ≥ rhs`.
    pub ineq_rows: Vec<LinearRow>,
    /// `row·x = rhs`.
    pub eq_rows: Vec<LinearRow>,
    /// `true` means `x_j ≥ 0`, `false` means free.
    pub nonneg: Vec<bool>,
}

impl StandardFormLP {
    pub fn new(objective: Vec<f64>, nonneg: Vec<bool>) -> Self {
        Self {
            num_vars: objective.len(),
            objective,
            ineq_rows: Vec::new(),
            eq_rows: Vec::new(),
            nonneg,
        }
    }

    pub fn validate(&self) -> Result<(), LpError> {
        if self.objective.len() != self.num_vars {
            return Err(LpError::Dimension(format!(
                "objective has length {} but num_vars is {}",
                self.objective.len(),
                self.num_vars
            )));
        }
        if self.nonneg.len() != self.num_vars {
            return Err(LpError::Dimension(format!(
                "nonneg mask has length {} but num_vars is {}",
                self.nonneg.len(),
                self.num_vars
            )));
        }
        for (kind, rows) in [("inequality", &self.ineq_rows), ("equality", &self.eq_rows)] {
            for (k, row) in rows.iter().enumerate() {
                check_row(row, self.num_vars)
                    .map_err(|e| LpError::Dimension(format!("{kind} row {k}: {e}")))?;
            }
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self
                .ineq_rows
                .iter()
                .chain(&self.eq_rows)
                .all(|r| r.rhs.is_finite() && r.coeffs.iter().all(|(_, v)| v.is_finite()));
        if !finite {
            return Err(LpError::Dimension("non-finite coefficient".into()));
        }
        Ok(())
    }
}

fn check_row(row: &LinearRow, n: usize) -> Result<(), String> {
    match row.max_index() {
        Some(j) if j >= n => Err(format!(
            "coefficient index {j} out of range for {n} variables"
        )),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    pub primal: Vec<f64>,
    /// One nonnegative multiplier per inequality row (extra rows appended last).
    pub dual_ineq: Vec<f64>,
    pub dual_eq: Vec<f64>,
    pub objective: f64,
}

/// Weights proving infeasibility: `w ≥ 0` on inequality rows, free on
/// equality rows, with `Σ w_k row_k ≤ 0` on nonnegative variables, `= 0` on
/// free variables, and `Σ w_k rhs_k > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasCertificate {
    pub ineq: Vec<f64>,
    pub eq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(OptimalSolution),
    Infeasible(FarkasCertificate),
    Unbounded { ray: Vec<f64> },
}

impl LpOutcome {
    pub fn objective(&self) -> f64 {
        match self {
            LpOutcome::Optimal(s) => s.objective,
            LpOutcome::Infeasible(_) => f64::INFINITY,
            LpOutcome::Unbounded { .. } => f64::NEG_INFINITY,
        }
    }

    pub fn as_optimal(&self) -> Option<&OptimalSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

pub fn solve_lp(lp: &StandardFormLP, tol: &Tolerances) -> Result<LpOutcome, LpError> {
    let mut simplex = Simplex::new(lp, tol)?;
    simplex.solve()
}

/// Solves `lp` with `extra` appended to its inequality rows. The returned
/// inequality duals list the extra rows last.
pub fn solve_lp_with_extra_rows(
    lp: &StandardFormLP,
    extra: &[LinearRow],
    tol: &Tolerances,
) -> Result<LpOutcome, LpError> {
    for (k, row) in extra.iter().enumerate() {
        check_row(row, lp.num_vars)
            .map_err(|e| LpError::Dimension(format!("extra row {k}: {e}")))?;
    }
    let mut augmented = lp.clone();
    augmented.ineq_rows.extend(extra.iter().cloned());
    solve_lp(&augmented, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowRef {
    Ineq(usize),
    Eq(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Fresh,
    Optimal,
    Infeasible,
    Unbounded,
}

enum PrimalEnd {
    Optimal,
    Unbounded(usize),
}

enum DualEnd {
    Feasible,
    Infeasible(usize),
}

const NOT_BASIC: usize = usize::MAX;
const DEGENERATE_STREAK: usize = 50;
/// Reduced-cost threshold for pricing.
const OPT_TOL: f64 = 1e-9;

/// A simplex solver instance holding its final tableau, so that further
/// inequality rows can be added and re-optimized by dual simplex.
#[derive(Debug, Clone)]
pub struct Simplex {
    tol: Tolerances,
    lp: StandardFormLP,
    var_cols: Vec<(usize, Option<usize>)>,
    col_kind: Vec<ColKind>,
    /// Phase-2 cost of each internal column.
    col_cost: Vec<f64>,
    /// Columns of the sign-adjusted system, sparse by row.
    cols: Vec<Vec<(usize, f64)>>,
    row_ref: Vec<RowRef>,
    sigma: Vec<f64>,
    b_adj: Vec<f64>,
    init_col: Vec<usize>,
    width: usize,
    tab: Vec<f64>,
    obj: Vec<f64>,
    phase_cost: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<usize>,
    state: State,
    pivots: usize,
    pivots_since_refactor: usize,
    certificate: Option<FarkasCertificate>,
    /// Whether the right-hand side currently carries an anti-degeneracy shift.
    perturbed: bool,
    allow_perturbation: bool,
}

impl Simplex {
    pub fn new(lp: &StandardFormLP, tol: &Tolerances) -> Result<Self, LpError> {
        lp.validate()?;
        let n = lp.num_vars;
        let m_ineq = lp.ineq_rows.len();
        let m = m_ineq + lp.eq_rows.len();

        let mut col_kind = Vec::new();
        let mut col_cost = Vec::new();
        let mut var_cols = Vec::with_capacity(n);
        for j in 0..n {
            let pos = col_kind.len();
            col_kind.push(ColKind::Structural);
            col_cost.push(lp.objective[j]);
            let neg = if lp.nonneg[j] {
                None
            } else {
                col_kind.push(ColKind::Structural);
                col_cost.push(-lp.objective[j]);
                Some(pos + 1)
            };
            var_cols.push((pos, neg));
        }
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); col_kind.len()];
        let mut row_ref = Vec::with_capacity(m);
        let mut sigma = Vec::with_capacity(m);
        let mut b_adj = Vec::with_capacity(m);
        let mut init_col = Vec::with_capacity(m);

        let rows = lp
            .ineq_rows
            .iter()
            .enumerate()
            .map(|(k, r)| (RowRef::Ineq(k), r))
            .chain(
                lp.eq_rows
                    .iter()
                    .enumerate()
                    .map(|(k, r)| (RowRef::Eq(k), r)),
            );
        for (i, (rref, row)) in rows.enumerate() {
            let s = match rref {
                RowRef::Ineq(_) => {
                    if row.rhs <= 0.0 {
                        -1.0
                    } else {
                        1.0
                    }
                }
                RowRef::Eq(_) => {
                    if row.rhs >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            for &(j, v) in row.coeffs() {
                let (pos, neg) = var_cols[j];
                cols[pos].push((i, s * v));
                if let Some(neg) = neg {
                    cols[neg].push((i, -s * v));
                }
            }
            if let RowRef::Ineq(_) = rref {
                let slack = col_kind.len();
                col_kind.push(ColKind::Slack);
                col_cost.push(0.0);
                cols.push(vec![(i, -s)]);
                if s < 0.0 {
                    init_col.push(slack);
                }
            }
            if init_col.len() == i {
                let art = col_kind.len();
                col_kind.push(ColKind::Artificial);
                col_cost.push(0.0);
                cols.push(vec![(i, 1.0)]);
                init_col.push(art);
            }
            row_ref.push(rref);
            sigma.push(s);
            b_adj.push(s * row.rhs);
        }

        let ncols = col_kind.len();
        let width = ncols + 1;
        let mut tab = vec![0.0; m * width];
        for (j, col) in cols.iter().enumerate() {
            for &(i, v) in col {
                tab[i * width + j] += v;
            }
        }
        for i in 0..m {
            tab[i * width + ncols] = b_adj[i];
        }
        let mut in_basis = vec![NOT_BASIC; ncols];
        for (i, &c) in init_col.iter().enumerate() {
            in_basis[c] = i;
        }
        Ok(Self {
            tol: *tol,
            lp: lp.clone(),
            var_cols,
            col_kind,
            col_cost,
            cols,
            row_ref,
            sigma,
            b_adj,
            basis: init_col.clone(),
            init_col,
            width,
            tab,
            obj: vec![0.0; width],
            phase_cost: vec![0.0; ncols],
            in_basis,
            state: State::Fresh,
            pivots: 0,
            pivots_since_refactor: 0,
            certificate: None,
            perturbed: false,
            allow_perturbation: true,
        })
    }

    pub fn pivots(&self) -> usize {
        self.pivots
    }

    /// Number of stored tableau entries.
    pub fn tableau_len(&self) -> usize {
        self.tab.len()
    }

    pub fn num_ineq_rows(&self) -> usize {
        self.lp.ineq_rows.len()
    }

    fn m(&self) -> usize {
        self.basis.len()
    }

    fn ncols(&self) -> usize {
        self.width - 1
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.tab[i * self.width + self.width - 1]
    }

    fn scale(&self) -> f64 {
        1.0 + self.b_adj.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn solve(&mut self) -> Result<LpOutcome, LpError> {
        if self.state != State::Fresh {
            return self.outcome();
        }
        let has_artificial = self
            .basis
            .iter()
            .any(|&c| self.col_kind[c] == ColKind::Artificial);
        if has_artificial {
            let cost: Vec<f64> = self
                .col_kind
                .iter()
                .map(|k| if *k == ColKind::Artificial { 1.0 } else { 0.0 })
                .collect();
            self.set_phase_cost(cost);
            let _ = self.primal_unperturbed()?;
            let infeasibility = -self.obj[self.width - 1];
            if infeasibility > self.tol.feas * self.scale() {
                self.state = State::Infeasible;
                return self.outcome();
            }
            self.drive_out_artificials();
        }
        self.set_phase_cost(self.col_cost.clone());
        match self.primal_unperturbed()? {
            PrimalEnd::Optimal => {
                self.state = State::Optimal;
                self.polish()?;
                self.outcome()
            }
            PrimalEnd::Unbounded(q) => {
                self.state = State::Unbounded;
                Ok(LpOutcome::Unbounded { ray: self.ray(q) })
            }
        }
    }

    /// Appends `row·x ≥ rhs` and re-optimizes from the current optimal basis.
    pub fn add_ineq_row(&mut self, row: &LinearRow) -> Result<LpOutcome, LpError> {
        check_row(row, self.lp.num_vars).map_err(LpError::Dimension)?;
        if self.state != State::Optimal {
            return Err(LpError::NotOptimal);
        }
        let k = self.lp.ineq_rows.len();
        self.lp.ineq_rows.push(row.clone());
        let m_old = self.m();
        let i = m_old;
        let s = -1.0;

        // New slack column, appended after the existing ones.
        let slack = self.ncols();
        let old_w = self.width;
        let new_w = old_w + 1;
        let mut tab = Vec::with_capacity((m_old + 1) * new_w);
        tab.resize(m_old * new_w, 0.0);
        for r in 0..m_old {
            let src = &self.tab[r * old_w..(r + 1) * old_w];
            let dst = &mut tab[r * new_w..(r + 1) * new_w];
            dst[..slack].copy_from_slice(&src[..slack]);
            dst[new_w - 1] = src[old_w - 1];
        }
        let mut obj = vec![0.0; new_w];
        obj[..slack].copy_from_slice(&self.obj[..slack]);
        obj[new_w - 1] = self.obj[old_w - 1];

        self.col_kind.push(ColKind::Slack);
        self.col_cost.push(0.0);
        self.phase_cost.push(0.0);
        self.cols.push(vec![(i, -s)]);
        self.in_basis.push(i);
        for &(j, v) in row.coeffs() {
            let (pos, neg) = self.var_cols[j];
            self.cols[pos].push((i, s * v));
            if let Some(neg) = neg {
                self.cols[neg].push((i, -s * v));
            }
        }
        self.row_ref.push(RowRef::Ineq(k));
        self.sigma.push(s);
        self.b_adj.push(s * row.rhs);
        self.init_col.push(slack);
        self.basis.push(slack);

        // Express the new row in the current basis.
        let mut new_row = vec![0.0; new_w];
        for &(j, v) in row.coeffs() {
            let (pos, neg) = self.var_cols[j];
            new_row[pos] += s * v;
            if let Some(neg) = neg {
                new_row[neg] -= s * v;
            }
        }
        new_row[slack] = 1.0;
        new_row[new_w - 1] = s * row.rhs;
        for r in 0..m_old {
            let c = self.basis[r];
            let f = new_row[c];
            if f != 0.0 {
                let src = &tab[r * new_w..(r + 1) * new_w];
                for (dst, v) in new_row.iter_mut().zip(src) {
                    *dst -= f * v;
                }
                new_row[c] = 0.0;
            }
        }
        tab.extend_from_slice(&new_row);
        self.tab = tab;
        self.obj = obj;
        self.width = new_w;
        self.state = State::Fresh;

        match self.dual()? {
            DualEnd::Feasible => {}
            DualEnd::Infeasible(r) => {
                self.state = State::Infeasible;
                let cert = self.farkas_from_row(r);
                self.certificate = Some(cert.clone());
                return Ok(LpOutcome::Infeasible(cert));
            }
        }
        match self.primal_unperturbed()? {
            PrimalEnd::Optimal => {
                self.state = State::Optimal;
                self.polish()?;
                self.outcome()
            }
            PrimalEnd::Unbounded(q) => {
                self.state = State::Unbounded;
                Ok(LpOutcome::Unbounded { ray: self.ray(q) })
            }
        }
    }

    fn set_phase_cost(&mut self, cost: Vec<f64>) {
        self.phase_cost = cost;
        self.recompute_objective_row();
    }

    fn recompute_objective_row(&mut self) {
        let w = self.width;
        let mut obj = vec![0.0; w];
        obj[..w - 1].copy_from_slice(&self.phase_cost);
        for (i, &c) in self.basis.iter().enumerate() {
            let cb = self.phase_cost[c];
            if cb != 0.0 {
                let row = &self.tab[i * w..(i + 1) * w];
                for (o, v) in obj.iter_mut().zip(row) {
                    *o -= cb * v;
                }
            }
        }
        for &c in &self.basis {
            obj[c] = 0.0;
        }
        self.obj = obj;
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width;
        let p = self.tab[r * w + q];
        {
            let row = &mut self.tab[r * w..(r + 1) * w];
            let inv = 1.0 / p;
            for v in row.iter_mut() {
                *v *= inv;
            }
            row[q] = 1.0;
        }
        let nz: Vec<(usize, f64)> = self.tab[r * w..(r + 1) * w]
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j, *v))
            .collect();
        let m = self.m();
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = self.tab[i * w + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.tab[i * w..(i + 1) * w];
            for &(j, v) in &nz {
                row[j] -= f * v;
            }
            row[q] = 0.0;
        }
        let f = self.obj[q];
        if f != 0.0 {
            for &(j, v) in &nz {
                self.obj[j] -= f * v;
            }
            self.obj[q] = 0.0;
        }
        let leaving = self.basis[r];
        self.in_basis[leaving] = NOT_BASIC;
        self.basis[r] = q;
        self.in_basis[q] = r;
        self.pivots += 1;
        self.pivots_since_refactor += 1;
    }

    fn iteration_cap(&self) -> usize {
        100 * (self.m() + self.ncols()) + 1000
    }

    fn primal(&mut self) -> Result<PrimalEnd, LpError> {
        let w = self.width;
        let ncols = self.ncols();
        let mut streak = 0usize;
        let mut bland = false;
        let cap = self.iteration_cap();
        for _ in 0..cap {
            // pricing
            let mut entering = None;
            let mut best = -OPT_TOL;
            for j in 0..ncols {
                if self.in_basis[j] != NOT_BASIC || self.col_kind[j] == ColKind::Artificial {
                    continue;
                }
                let d = self.obj[j];
                if bland {
                    if d < -OPT_TOL {
                        entering = Some(j);
                        break;
                    }
                } else if d < best {
                    best = d;
                    entering = Some(j);
                }
            }
            let Some(q) = entering else {
                return Ok(PrimalEnd::Optimal);
            };
            // ratio test
            let m = self.m();
            let mut min_ratio = f64::INFINITY;
            for i in 0..m {
                let a = self.tab[i * w + q];
                if a > self.tol.pivot {
                    let ratio = self.rhs(i).max(0.0) / a;
                    if ratio < min_ratio {
                        min_ratio = ratio;
                    }
                }
            }
            if !min_ratio.is_finite() {
                return Ok(PrimalEnd::Unbounded(q));
            }
            let cutoff = min_ratio + 1e-12 * (1.0 + min_ratio);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.tab[i * w + q];
                if a > self.tol.pivot && self.rhs(i).max(0.0) / a <= cutoff {
                    leave = match leave {
                        None => Some((i, a)),
                        Some((li, la)) => {
                            let better = if bland {
                                self.basis[i] < self.basis[li]
                            } else {
                                a > la
                            };
                            if better {
                                Some((i, a))
                            } else {
                                Some((li, la))
                            }
                        }
                    };
                }
            }
            let (r, _) = leave.expect("ratio test found a row");
            if min_ratio <= 1e-12 {
                streak += 1;
                if streak > DEGENERATE_STREAK {
                    if !self.perturbed && self.allow_perturbation {
                        self.perturb_rhs();
                        streak = 0;
                        continue;
                    }
                    bland = true;
                }
            } else {
                streak = 0;
                bland = false;
            }
            self.pivot(r, q);
            if self.rhs(r) < 0.0 {
                self.tab[r * w + w - 1] = 0.0;
            }
        }
        Err(LpError::Numeric(format!(
            "primal simplex exceeded {cap} iterations"
        )))
    }

    /// Primal simplex; if it had to shift the right-hand side to escape a
    /// degenerate vertex, the shift is removed afterwards and feasibility and
    /// optimality are restored without further shifting.
    fn primal_unperturbed(&mut self) -> Result<PrimalEnd, LpError> {
        let end = self.primal()?;
        if !self.perturbed {
            return Ok(end);
        }
        self.perturbed = false;
        self.restore_rhs();
        if let PrimalEnd::Unbounded(q) = end {
            return Ok(PrimalEnd::Unbounded(q));
        }
        self.allow_perturbation = false;
        let result = match self.dual() {
            Ok(DualEnd::Feasible) => self.primal(),
            Ok(DualEnd::Infeasible(_)) => Err(LpError::Numeric(
                "removing the degeneracy shift made the basis infeasible".into(),
            )),
            Err(e) => Err(e),
        };
        self.allow_perturbation = true;
        result
    }

    /// Shifts every basic value up by a small pseudo-random amount.
    fn perturb_rhs(&mut self) {
        let w = self.width;
        let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
        for i in 0..self.m() {
            state = state
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(1_442_695_040_888_963_407);
            let u = (state >> 11) as f64 / (1u64 << 53) as f64;
            let v = &mut self.tab[i * w + w - 1];
            *v = v.max(0.0) + 1e-6 * (1.0 + u) * (1.0 + v.abs());
        }
        self.recompute_objective_row();
        self.perturbed = true;
    }

    /// Recomputes the basic values from the unshifted right-hand side.
    fn restore_rhs(&mut self) {
        let w = self.width;
        for i in 0..self.m() {
            let row = &self.tab[i * w..(i + 1) * w];
            let v: f64 = self
                .b_adj
                .iter()
                .zip(&self.init_col)
                .filter(|(b, _)| **b != 0.0)
                .map(|(b, &c)| row[c] * b)
                .sum();
            self.tab[i * w + w - 1] = v;
        }
        self.recompute_objective_row();
    }

    /// Dual simplex from a dual-feasible basis.
    fn dual(&mut self) -> Result<DualEnd, LpError> {
        let w = self.width;
        let ncols = self.ncols();
        let mut streak = 0usize;
        let mut bland = false;
        let cap = self.iteration_cap();
        let feas = self.tol.feas * self.scale();
        for _ in 0..cap {
            let m = self.m();
            let mut leaving = None;
            let mut worst = -feas;
            for i in 0..m {
                let b = self.rhs(i);
                if bland {
                    if b < -feas && leaving.is_none_or(|l: usize| self.basis[i] < self.basis[l]) {
                        leaving = Some(i);
                    }
                } else if b < worst {
                    worst = b;
                    leaving = Some(i);
                }
            }
            let Some(r) = leaving else {
                return Ok(DualEnd::Feasible);
            };
            let row = &self.tab[r * w..(r + 1) * w];
            let mut min_ratio = f64::INFINITY;
            for (j, &a) in row.iter().enumerate().take(ncols) {
                if self.in_basis[j] != NOT_BASIC || self.col_kind[j] == ColKind::Artificial {
                    continue;
                }
                if a < -self.tol.pivot {
                    let ratio = self.obj[j].max(0.0) / -a;
                    if ratio < min_ratio {
                        min_ratio = ratio;
                    }
                }
            }
            if !min_ratio.is_finite() {
                return Ok(DualEnd::Infeasible(r));
            }
            let cutoff = min_ratio + 1e-12 * (1.0 + min_ratio);
            let mut enter: Option<(usize, f64)> = None;
            for (j, &a) in row.iter().enumerate().take(ncols) {
                if self.in_basis[j] != NOT_BASIC || self.col_kind[j] == ColKind::Artificial {
                    continue;
                }
                if a < -self.tol.pivot && self.obj[j].max(0.0) / -a <= cutoff {
                    enter = match enter {
                        None => Some((j, a)),
                        Some((ej, ea)) => {
                            // Bland: keep lowest index (first found).
                            if !bland && a.abs() > ea.abs() {
                                Some((j, a))
                            } else {
                                Some((ej, ea))
                            }
                        }
                    };
                }
            }
            let (q, _) = enter.expect("ratio test found a column");
            if min_ratio <= 1e-12 {
                streak += 1;
                if streak > DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                streak = 0;
                bland = false;
            }
            self.pivot(r, q);
            if self.obj[self.width - 1].is_nan() {
                return Err(LpError::Numeric("NaN in objective row".into()));
            }
        }
        Err(LpError::Numeric(format!(
            "dual simplex exceeded {cap} iterations"
        )))
    }

    fn drive_out_artificials(&mut self) {
        let w = self.width;
        let ncols = self.ncols();
        for r in 0..self.m() {
            if self.col_kind[self.basis[r]] != ColKind::Artificial {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..ncols {
                if self.in_basis[j] != NOT_BASIC || self.col_kind[j] == ColKind::Artificial {
                    continue;
                }
                let a = self.tab[r * w + j].abs();
                if a > self.tol.pivot && best.is_none_or(|(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            if let Some((q, _)) = best {
                self.pivot(r, q);
                self.tab[r * w + w - 1] = self.rhs(r).max(0.0);
            }
        }
    }

    /// Multipliers of the sign-adjusted rows, read off the objective row.
    fn adjusted_duals(&self) -> Vec<f64> {
        self.init_col
            .iter()
            .map(|&c| self.phase_cost[c] - self.obj[c])
            .collect()
    }

    /// Multipliers in the orientation of the caller's rows.
    fn row_duals(&self) -> Vec<f64> {
        self.adjusted_duals()
            .iter()
            .zip(&self.sigma)
            .map(|(y, s)| y * s)
            .collect()
    }

    fn internal_primal(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.ncols()];
        for (i, &c) in self.basis.iter().enumerate() {
            x[c] = self.rhs(i).max(0.0);
        }
        x
    }

    fn to_original(&self, internal: &[f64]) -> Vec<f64> {
        self.var_cols
            .iter()
            .map(|&(pos, neg)| internal[pos] - neg.map_or(0.0, |n| internal[n]))
            .collect()
    }

    fn split_by_row(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut ineq = vec![0.0; self.lp.ineq_rows.len()];
        let mut eq = vec![0.0; self.lp.eq_rows.len()];
        for (i, r) in self.row_ref.iter().enumerate() {
            match *r {
                RowRef::Ineq(k) => ineq[k] = v[i],
                RowRef::Eq(k) => eq[k] = v[i],
            }
        }
        (ineq, eq)
    }

    fn outcome(&self) -> Result<LpOutcome, LpError> {
        match self.state {
            State::Optimal => {
                let primal = self.to_original(&self.internal_primal());
                let duals = self.row_duals();
                let (mut dual_ineq, dual_eq) = self.split_by_row(&duals);
                for d in &mut dual_ineq {
                    *d = d.max(0.0);
                }
                let objective = self
                    .lp
                    .objective
                    .iter()
                    .zip(&primal)
                    .map(|(c, x)| c * x)
                    .sum();
                Ok(LpOutcome::Optimal(OptimalSolution {
                    primal,
                    dual_ineq,
                    dual_eq,
                    objective,
                }))
            }
            State::Infeasible => {
                if let Some(cert) = &self.certificate {
                    return Ok(LpOutcome::Infeasible(cert.clone()));
                }
                // Phase-1 duals already have the certificate orientation.
                let duals = self.row_duals();
                let (mut ineq, eq) = self.split_by_row(&duals);
                for d in &mut ineq {
                    *d = d.max(0.0);
                }
                Ok(LpOutcome::Infeasible(FarkasCertificate { ineq, eq }))
            }
            State::Unbounded | State::Fresh => Err(LpError::NotOptimal),
        }
    }

    fn farkas_from_row(&self, r: usize) -> FarkasCertificate {
        let w = self.width;
        let y: Vec<f64> = self
            .init_col
            .iter()
            .zip(&self.sigma)
            .map(|(&c, s)| -self.tab[r * w + c] * s)
            .collect();
        let (mut ineq, eq) = self.split_by_row(&y);
        for d in &mut ineq {
            *d = d.max(0.0);
        }
        FarkasCertificate { ineq, eq }
    }

    fn ray(&self, q: usize) -> Vec<f64> {
        let w = self.width;
        let mut dir = vec![0.0; self.ncols()];
        dir[q] = 1.0;
        for (i, &c) in self.basis.iter().enumerate() {
            dir[c] = -self.tab[i * w + q];
        }
        self.to_original(&dir)
    }

    /// Checks the optimal pair against the original data and refactors the
    /// basis once if accumulated round-off exceeds the tolerances.
    fn polish(&mut self) -> Result<(), LpError> {
        if self.residual_ok() && self.pivots_since_refactor < 5000 {
            return Ok(());
        }
        debug!(
            "refactoring basis after {} pivots ({} rows)",
            self.pivots_since_refactor,
            self.m()
        );
        self.refactor()?;
        match self.dual()? {
            DualEnd::Feasible => {}
            DualEnd::Infeasible(_) => {
                return Err(LpError::Numeric(
                    "basis became primal infeasible after refactorization".into(),
                ))
            }
        }
        match self.primal_unperturbed()? {
            PrimalEnd::Optimal => {}
            PrimalEnd::Unbounded(_) => {
                return Err(LpError::Numeric(
                    "basis became unbounded after refactorization".into(),
                ))
            }
        }
        if !self.residual_ok() {
            return Err(LpError::Numeric(
                "residuals exceed tolerance after refactorization".into(),
            ));
        }
        Ok(())
    }

    fn residual_ok(&self) -> bool {
        let x = self.to_original(&self.internal_primal());
        let duals = self.row_duals();
        let (pi_ineq, pi_eq) = self.split_by_row(&duals);
        let scale = self.scale();
        let feas = self.tol.feas * scale;
        for (row, pi) in self.lp.ineq_rows.iter().zip(&pi_ineq) {
            if row.dot(&x) - row.rhs < -feas || *pi < -feas {
                return false;
            }
        }
        for row in &self.lp.eq_rows {
            if (row.dot(&x) - row.rhs).abs() > feas {
                return false;
            }
        }
        let mut reduced = self.lp.objective.clone();
        for (row, pi) in self.lp.ineq_rows.iter().zip(&pi_ineq) {
            for &(j, v) in row.coeffs() {
                reduced[j] -= pi * v;
            }
        }
        for (row, pi) in self.lp.eq_rows.iter().zip(&pi_eq) {
            for &(j, v) in row.coeffs() {
                reduced[j] -= pi * v;
            }
        }
        let cscale = 1.0
            + self
                .lp
                .objective
                .iter()
                .fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let dtol = self.tol.feas * cscale;
        for (j, d) in reduced.iter().enumerate() {
            if self.lp.nonneg[j] {
                if *d < -dtol {
                    return false;
                }
            } else if d.abs() > dtol {
                return false;
            }
        }
        let primal_obj: f64 = self.lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        let dual_obj: f64 = self
            .lp
            .ineq_rows
            .iter()
            .zip(&pi_ineq)
            .chain(self.lp.eq_rows.iter().zip(&pi_eq))
            .map(|(r, p)| r.rhs * p)
            .sum();
        (primal_obj - dual_obj).abs() <= self.tol.gap * (1.0 + primal_obj.abs()) * 0.1
    }

    /// Rebuilds the tableau from the basis columns of the original system.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m();
        let w = self.width;
        let ncols = self.ncols();
        // Dense basis matrix, column i = column of basis[i].
        let mut bmat = vec![0.0; m * m];
        for (i, &c) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[c] {
                bmat[r * m + i] = v;
            }
        }
        let inv = invert(&mut bmat, m)
            .ok_or_else(|| LpError::Numeric("singular basis during refactorization".into()))?;
        let mut tab = vec![0.0; m * w];
        for (j, col) in self.cols.iter().enumerate() {
            for &(r, v) in col {
                for i in 0..m {
                    let b = inv[i * m + r];
                    if b != 0.0 {
                        tab[i * w + j] += b * v;
                    }
                }
            }
        }
        for (r, &b) in self.b_adj.iter().enumerate() {
            if b != 0.0 {
                for i in 0..m {
                    tab[i * w + ncols] += inv[i * m + r] * b;
                }
            }
        }
        for i in 0..m {
            let c = self.basis[i];
            for k in 0..m {
                tab[k * w + c] = if k == i { 1.0 } else { 0.0 };
            }
        }
        self.tab = tab;
        self.recompute_objective_row();
        self.pivots_since_refactor = 0;
        Ok(())
    }
}

/// Gauss-Jordan inverse with partial pivoting; `a` is destroyed.
fn invert(a: &mut [f64], n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-12 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
                inv.swap(piv * n + k, col * n + k);
            }
        }
        let p = a[col * n + col];
        for k in 0..n {
            a[col * n + k] /= p;
            inv[col * n + k] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                a[r * n + k] -= f * a[col * n + k];
                inv[r * n + k] -= f * inv[col * n + k];
            }
        }
    }
    Some(inv)
}
