//! LP-based branch and bound for the static problem over a partition. Every
//! node keeps the multipliers of its relaxation, which is what the scenario
//! detection downstream works from.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::counterpart::{
    build_counterpart, unpack_duals, BranchingConstraint, CellSubproblem, Counterpart, Layout,
    NodeDuals, StaticSolution, Var,
};
use crate::error::{AroError, Assumption, Result};
use crate::lp::{FarkasCertificate, LpOutcome, OptimalSolution, Simplex};
use crate::model::{AroProblem, CellId, Partition};
use crate::tolerance::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Integral,
    Branched,
    Infeasible,
    PrunedByBound,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub branch: Option<BranchingConstraint>,
    pub status: NodeStatus,
    /// `+∞` for infeasible nodes.
    pub lp_objective: f64,
    pub duals: NodeDuals,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct BnbResult {
    pub incumbent_objective: f64,
    pub incumbent: StaticSolution,
    pub tree: Vec<NodeRecord>,
    pub counterpart: Counterpart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BnbOptions {
    pub layout: Layout,
    /// Give up (with an error) after creating this many nodes.
    pub max_nodes: usize,
    /// Total tableau entries kept alive in open nodes; beyond it open nodes
    /// are re-derived from the root when they are branched.
    pub tableau_budget: usize,
    /// Without first-stage variables, solve one LP per leaf instead of the
    /// joint counterpart. The tree and the reported multipliers are those of
    /// the joint LP either way.
    pub decompose: bool,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self {
            layout: Layout::Reduced,
            max_nodes: 200_000,
            tableau_budget: 20_000_000,
            decompose: true,
        }
    }
}

/// The relaxation of one node, kept for warm starts.
#[derive(Clone)]
#[allow(clippy::large_enum_variant)]
enum NodeLp {
    Joint(Simplex),
    Cells(CellLps),
}

/// One LP per leaf. Leaves untouched by a branch share their tableau with
/// the parent node.
#[derive(Clone)]
struct CellLps {
    subs: Rc<Vec<CellSubproblem>>,
    lps: Vec<Rc<Simplex>>,
    outcomes: Vec<Rc<LpOutcome>>,
    /// Per leaf, positions of its branching rows among the node's.
    branch_rows: Vec<Vec<usize>>,
    num_branches: usize,
}

impl NodeLp {
    fn root(cp: &Counterpart, tol: &Tolerances, decompose: bool) -> Result<(Self, LpOutcome)> {
        if decompose {
            if let Some(cells) = CellLps::root(cp, tol)? {
                let out = cells.assemble(cp);
                return Ok((NodeLp::Cells(cells), out));
            }
        }
        let mut lp = Simplex::new(&cp.lp, tol)?;
        let out = lp.solve()?;
        Ok((NodeLp::Joint(lp), out))
    }

    fn add_branch(
        &mut self,
        cp: &Counterpart,
        problem: &AroProblem,
        branch: &BranchingConstraint,
    ) -> Result<LpOutcome> {
        let row = cp.branch_row(problem, branch)?;
        match self {
            NodeLp::Joint(lp) => Ok(lp.add_ineq_row(&row)?),
            NodeLp::Cells(cells) => {
                let cell = match (branch.x_coeffs.as_slice(), branch.y_coeffs.first()) {
                    ([], Some(&(c, _, _))) if branch.y_coeffs.iter().all(|e| e.0 == c) => c,
                    _ => {
                        return Err(AroError::Internal(
                            "branching row spans several leaves".into(),
                        ))
                    }
                };
                let k = cp
                    .index
                    .cells
                    .iter()
                    .position(|b| b.cell == cell)
                    .ok_or(AroError::UnknownCell(cell.0))?;
                let row = cells.subs[k].restrict(&row)?;
                let out = Rc::make_mut(&mut cells.lps[k]).add_ineq_row(&row)?;
                cells.outcomes[k] = Rc::new(out);
                cells.branch_rows[k].push(cells.num_branches);
                cells.num_branches += 1;
                Ok(cells.assemble(cp))
            }
        }
    }

    fn size(&self) -> usize {
        match self {
            NodeLp::Joint(lp) => lp.tableau_len(),
            NodeLp::Cells(cells) => cells.lps.iter().map(|lp| lp.tableau_len()).sum(),
        }
    }
}

impl CellLps {
    /// `None` if the leaves are coupled or some leaf LP is unbounded.
    fn root(cp: &Counterpart, tol: &Tolerances) -> Result<Option<Self>> {
        let Some(subs) = cp.cell_subproblems() else {
            return Ok(None);
        };
        let mut lps = Vec::with_capacity(subs.len());
        let mut outcomes = Vec::with_capacity(subs.len());
        for sub in &subs {
            let mut lp = Simplex::new(&sub.lp, tol)?;
            let out = lp.solve()?;
            if let LpOutcome::Unbounded { .. } = out {
                return Ok(None);
            }
            lps.push(Rc::new(lp));
            outcomes.push(Rc::new(out));
        }
        let n = subs.len();
        Ok(Some(Self {
            subs: Rc::new(subs),
            lps,
            outcomes,
            branch_rows: vec![Vec::new(); n],
            num_branches: 0,
        }))
    }

    /// Full-LP row index of leaf `k`'s inequality row `i`.
    fn ineq_row(&self, cp: &Counterpart, k: usize, i: usize) -> usize {
        let base = &self.subs[k].ineq_rows;
        if i < base.len() {
            base[i]
        } else {
            cp.index.base_ineq_rows + self.branch_rows[k][i - base.len()]
        }
    }

    /// The joint LP outcome. An infeasible leaf makes the node infeasible
    /// (the rays of all infeasible leaves are added up); otherwise `t` is the
    /// largest leaf value and the multipliers are spread evenly over the
    /// leaves that attain it.
    fn assemble(&self, cp: &Counterpart) -> LpOutcome {
        let n_ineq = cp.index.base_ineq_rows + self.num_branches;
        let n_eq = cp.lp.eq_rows.len();
        let mut ineq = vec![0.0; n_ineq];
        let mut eq = vec![0.0; n_eq];
        let infeasible: Vec<(usize, &FarkasCertificate)> = self
            .outcomes
            .iter()
            .enumerate()
            .filter_map(|(k, o)| match o.as_ref() {
                LpOutcome::Infeasible(c) => Some((k, c)),
                _ => None,
            })
            .collect();
        if !infeasible.is_empty() {
            for (k, cert) in infeasible {
                for (i, v) in cert.ineq.iter().enumerate() {
                    ineq[self.ineq_row(cp, k, i)] += v;
                }
                for (i, v) in cert.eq.iter().enumerate() {
                    eq[self.subs[k].eq_rows[i]] += v;
                }
            }
            return LpOutcome::Infeasible(FarkasCertificate { ineq, eq });
        }
        let t = self
            .outcomes
            .iter()
            .map(|o| o.objective())
            .fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..self.outcomes.len())
            .filter(|&k| self.outcomes[k].objective() >= t - 1e-9 * t.abs().max(1.0))
            .collect();
        let weight = 1.0 / ties.len() as f64;
        let mut primal = vec![0.0; cp.index.num_vars];
        primal[0] = t;
        for (k, out) in self.outcomes.iter().enumerate() {
            let sol = out.as_optimal().expect("feasible leaves are optimal");
            for (j, v) in sol.primal.iter().enumerate().skip(1) {
                primal[self.subs[k].full_column(j)] = *v;
            }
        }
        for &k in &ties {
            let sol = self.outcomes[k]
                .as_optimal()
                .expect("feasible leaves are optimal");
            for (i, v) in sol.dual_ineq.iter().enumerate() {
                ineq[self.ineq_row(cp, k, i)] = weight * v;
            }
            for (i, v) in sol.dual_eq.iter().enumerate() {
                eq[self.subs[k].eq_rows[i]] = weight * v;
            }
        }
        LpOutcome::Optimal(OptimalSolution {
            primal,
            dual_ineq: ineq,
            dual_eq: eq,
            objective: t,
        })
    }
}

struct Open {
    bound: f64,
    depth: usize,
    id: usize,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // Max-heap: the smallest bound, then the deepest node, then the oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| self.depth.cmp(&other.depth))
            .then_with(|| other.id.cmp(&self.id))
    }
}

fn scaled(tol: f64, v: f64) -> f64 {
    tol * v.abs().max(1.0)
}

/// Integer-restricted LP columns in branching order: `x`, then each leaf's `y`.
fn integer_columns(problem: &AroProblem, cp: &Counterpart) -> Vec<(Var, usize)> {
    let mut out = Vec::new();
    for k in 0..problem.m1 {
        out.push((Var::X(k), cp.index.x.start + k));
    }
    for b in &cp.index.cells {
        for k in 0..problem.m2 {
            out.push((Var::Y(b.cell, k), b.y.start + k));
        }
    }
    out
}

/// Most fractional integer column, lowest index on ties.
fn branching_choice(cols: &[(Var, usize)], primal: &[f64], tol: &Tolerances) -> Option<(Var, f64)> {
    let mut best: Option<(Var, f64, f64)> = None;
    for &(var, j) in cols {
        let v = primal[j];
        let frac = (v - v.floor()).min(v.ceil() - v);
        if frac > tol.integrality && best.is_none_or(|(_, _, f)| frac > f) {
            best = Some((var, v, frac));
        }
    }
    best.map(|(var, v, _)| (var, v))
}

/// Leaves whose objective row is tight, i.e. those that set `t`.
fn binding_cells(cp: &Counterpart, primal: &[f64], tol: &Tolerances) -> Vec<CellId> {
    let t = primal[cp.index.t];
    cp.index
        .cells
        .iter()
        .filter(|b| cp.lp.ineq_rows[b.ineq_rows[0]].dot(primal) <= scaled(tol.feas, t))
        .map(|b| b.cell)
        .collect()
}

/// Most fractional column among `x` and the `y` of binding leaves, or among
/// all integer columns when those are integral. Fractional values in a leaf
/// that does not set the bound leave both children with the same bound, so
/// branching there first multiplies the tree by the leaf's own subtree.
fn branching_var(
    cp: &Counterpart,
    cols: &[(Var, usize)],
    primal: &[f64],
    tol: &Tolerances,
) -> Option<(Var, f64)> {
    let binding = binding_cells(cp, primal, tol);
    let first: Vec<(Var, usize)> = cols
        .iter()
        .copied()
        .filter(|(v, _)| match v {
            Var::X(_) => true,
            Var::Y(c, _) => binding.contains(c),
        })
        .collect();
    branching_choice(&first, primal, tol).or_else(|| branching_choice(cols, primal, tol))
}

/// Solves the static problem over the leaves of `partition` to optimality.
pub fn solve_bnb(
    problem: &AroProblem,
    partition: &Partition,
    tol: &Tolerances,
    options: &BnbOptions,
) -> Result<BnbResult> {
    let cp = build_counterpart(problem, partition, &[], options.layout)?;
    let int_cols = integer_columns(problem, &cp);
    let (root_lp, root_out) = NodeLp::root(&cp, tol, options.decompose)?;
    let root_sol = match &root_out {
        LpOutcome::Optimal(s) => s.clone(),
        LpOutcome::Infeasible(_) => {
            return Err(AroError::Assumption {
                assumption: Assumption::FeasibleStaticProblem,
                detail: "the root relaxation is infeasible".into(),
            })
        }
        LpOutcome::Unbounded { .. } => {
            return Err(AroError::Assumption {
                assumption: Assumption::FeasibleStaticProblem,
                detail: "the root relaxation is unbounded".into(),
            })
        }
    };

    let mut tree = vec![NodeRecord {
        id: 0,
        parent: None,
        depth: 0,
        branch: None,
        status: NodeStatus::Branched,
        lp_objective: root_sol.objective,
        duals: unpack_duals(&root_out, &cp.index)?,
        children: Vec::new(),
    }];
    // Per node: its branching rows from the root down, and its solved LP if kept.
    let mut rows_of: Vec<Vec<BranchingConstraint>> = vec![Vec::new()];
    let mut primal_of: Vec<Option<Vec<f64>>> = vec![Some(root_sol.primal.clone())];
    let mut stored: Vec<Option<NodeLp>> = vec![None];
    let tableau_size = |s: &NodeLp| s.size();
    let mut live = 0usize;

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut heap = BinaryHeap::new();
    if branching_choice(&int_cols, &root_sol.primal, tol).is_none() {
        tree[0].status = NodeStatus::Integral;
        incumbent = Some((root_sol.objective, root_sol.primal.clone()));
    } else {
        heap.push(Open {
            bound: root_sol.objective,
            depth: 0,
            id: 0,
        });
    }

    while let Some(Open { bound, id, .. }) = heap.pop() {
        if let Some((inc, _)) = &incumbent {
            if bound >= inc - scaled(tol.gap, *inc) {
                tree[id].status = NodeStatus::PrunedByBound;
                if let Some(s) = stored[id].take() {
                    live -= tableau_size(&s);
                }
                primal_of[id] = None;
                continue;
            }
        }
        let primal = primal_of[id].take().expect("open node keeps its primal");
        let (var, value) =
            branching_var(&cp, &int_cols, &primal, tol).expect("open node is fractional");
        let parent_lp = match stored[id].take() {
            Some(s) => {
                live -= tableau_size(&s);
                s
            }
            None if id == 0 => root_lp.clone(),
            None => {
                let mut s = root_lp.clone();
                for b in &rows_of[id] {
                    s.add_branch(&cp, problem, b)?;
                }
                s
            }
        };
        tree[id].status = NodeStatus::Branched;
        let mut parent_lp = Some(parent_lp);
        let children = [
            BranchingConstraint::upper(var, value.floor()),
            BranchingConstraint::lower(var, value.ceil()),
        ];
        for (k, branch) in children.into_iter().enumerate() {
            let child = tree.len();
            if child >= options.max_nodes {
                return Err(AroError::Internal(format!(
                    "branch and bound exceeded {} nodes",
                    options.max_nodes
                )));
            }
            let mut lp = if k == 0 {
                parent_lp
                    .clone()
                    .expect("parent LP is kept for the first child")
            } else {
                parent_lp
                    .take()
                    .expect("parent LP is kept for the second child")
            };
            let out = lp.add_branch(&cp, problem, &branch)?;
            let mut rows = rows_of[id].clone();
            rows.push(branch.clone());
            let duals = unpack_duals(&out, &cp.index)?;
            let (status, objective) = match &out {
                LpOutcome::Optimal(s) => {
                    if s.objective < tree[id].lp_objective - scaled(tol.gap, s.objective) {
                        debug!(
                            "child {child} bound {} below parent {}",
                            s.objective, tree[id].lp_objective
                        );
                    }
                    if branching_choice(&int_cols, &s.primal, tol).is_none() {
                        if incumbent.as_ref().is_none_or(|(inc, _)| s.objective < *inc) {
                            incumbent = Some((s.objective, s.primal.clone()));
                        }
                        (NodeStatus::Integral, s.objective)
                    } else {
                        heap.push(Open {
                            bound: s.objective,
                            depth: tree[id].depth + 1,
                            id: child,
                        });
                        (NodeStatus::Branched, s.objective)
                    }
                }
                LpOutcome::Infeasible(_) => (NodeStatus::Infeasible, f64::INFINITY),
                LpOutcome::Unbounded { .. } => {
                    return Err(AroError::Internal(format!(
                        "node {child} relaxation is unbounded"
                    )))
                }
            };
            let open = status == NodeStatus::Branched;
            primal_of.push(match (&out, open) {
                (LpOutcome::Optimal(s), true) => Some(s.primal.clone()),
                _ => None,
            });
            if open && live + tableau_size(&lp) <= options.tableau_budget {
                live += tableau_size(&lp);
                stored.push(Some(lp));
            } else {
                stored.push(None);
            }
            rows_of.push(rows);
            tree[id].children.push(child);
            tree.push(NodeRecord {
                id: child,
                parent: Some(id),
                depth: tree[id].depth + 1,
                branch: Some(branch),
                status,
                lp_objective: objective,
                duals,
                children: Vec::new(),
            });
        }
    }

    let Some((objective, primal)) = incumbent else {
        return Err(AroError::Assumption {
            assumption: Assumption::FeasibleStaticProblem,
            detail: "no integer feasible solution exists".into(),
        });
    };
    let mut solution = cp.static_solution(&primal);
    for k in 0..problem.m1 {
        solution.x[k] = solution.x[k].round();
    }
    for (_, y) in &mut solution.y {
        for v in y.iter_mut().take(problem.m2) {
            *v = v.round();
        }
    }
    debug!(
        "branch and bound: {} nodes, objective {objective}",
        tree.len()
    );
    Ok(BnbResult {
        incumbent_objective: objective,
        incumbent: solution,
        tree,
        counterpart: cp,
    })
}

impl BnbResult {
    /// Branching rows from the root down to `node`.
    pub fn branches_of(&self, node: usize) -> Vec<BranchingConstraint> {
        let mut out = Vec::new();
        let mut cur = node;
        while let Some(b) = &self.tree[cur].branch {
            out.push(b.clone());
            cur = self.tree[cur].parent.expect("a branched node has a parent");
        }
        out.reverse();
        out
    }

    /// One JSON object per node.
    pub fn tree_dump(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            id: usize,
            parent: Option<usize>,
            branch: &'a Option<BranchingConstraint>,
            status: NodeStatus,
            objective: Option<f64>,
        }
        let mut out = String::new();
        for n in &self.tree {
            let line = Line {
                id: n.id,
                parent: n.parent,
                branch: &n.branch,
                status: n.status,
                objective: n.lp_objective.is_finite().then_some(n.lp_objective),
            };
            out.push_str(&serde_json::to_string(&line).expect("node serializes"));
            out.push('\n');
        }
        out
    }
}

/// A minimum-cardinality set of nodes meeting every root-to-leaf path, drawn
/// from the eligible nodes (leaves always count as eligible). On ties a node
/// is preferred over its descendants. Returned in ascending order.
pub fn min_cutset(children: &[Vec<usize>], eligible: &[bool], root: usize) -> Vec<usize> {
    let n = children.len();
    let mut cost = vec![usize::MAX; n];
    let mut take = vec![false; n];
    // Post-order without recursion.
    let mut stack = vec![(root, false)];
    while let Some((v, expanded)) = stack.pop() {
        if !expanded {
            stack.push((v, true));
            for &c in &children[v] {
                stack.push((c, false));
            }
            continue;
        }
        if children[v].is_empty() {
            cost[v] = 1;
            take[v] = true;
            continue;
        }
        let below = children[v]
            .iter()
            .map(|&c| cost[c])
            .try_fold(0usize, |acc, c| acc.checked_add(c))
            .unwrap_or(usize::MAX);
        if eligible[v] && 1 <= below {
            cost[v] = 1;
            take[v] = true;
        } else {
            cost[v] = below;
        }
    }
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        if take[v] {
            out.push(v);
        } else {
            stack.extend(children[v].iter().copied());
        }
    }
    out.sort_unstable();
    out
}

/// Nodes whose bound is at least `t̄ − tol.gap` count as eligible.
pub fn min_critical_cutset(result: &BnbResult, tol: &Tolerances) -> Vec<usize> {
    let t = result.incumbent_objective;
    let eligible: Vec<bool> = result
        .tree
        .iter()
        .map(|n| n.lp_objective >= t - scaled(tol.gap, t))
        .collect();
    let children: Vec<Vec<usize>> = result.tree.iter().map(|n| n.children.clone()).collect();
    min_cutset(&children, &eligible, 0)
}
