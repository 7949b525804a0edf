//! The splitting loop: solve the static problem over the current partition,
//! collect critical scenarios, separate them with bisecant planes and repeat.

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::bnb::{min_critical_cutset, solve_bnb, BnbOptions, BnbResult};
use crate::counterpart::StaticSolution;
use crate::error::{AroError, Result};
use crate::lp::{solve_lp, LinearRow, LpOutcome, StandardFormLP};
use crate::model::polyhedron::dot;
use crate::model::{AroProblem, CellId, Hyperplane, Partition, Scenario};
use crate::tolerance::Tolerances;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalScenario {
    pub z: Scenario,
    /// Node the scenario was read from.
    pub node: usize,
    /// 0 for the objective row, `i + 1` for constraint `i`.
    pub row: usize,
}

/// Scenarios per leaf, in leaf order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CriticalScenarioSet {
    pub cells: Vec<(CellId, Vec<CriticalScenario>)>,
}

impl CriticalScenarioSet {
    pub fn of(&self, cell: CellId) -> &[CriticalScenario] {
        self.cells
            .iter()
            .find(|(c, _)| *c == cell)
            .map(|(_, s)| s.as_slice())
            .unwrap_or(&[])
    }

    pub fn counts(&self) -> Vec<(CellId, usize)> {
        self.cells.iter().map(|(c, s)| (*c, s.len())).collect()
    }

    /// Adds `z` to `cell` unless an L∞-close scenario is already there.
    pub fn insert(&mut self, cell: CellId, candidate: CriticalScenario, dedup: f64) -> bool {
        let list = match self.cells.iter().position(|(c, _)| *c == cell) {
            Some(k) => &mut self.cells[k].1,
            None => {
                self.cells.push((cell, Vec::new()));
                &mut self.cells.last_mut().expect("just pushed").1
            }
        };
        if list.iter().any(|s| linf(&s.z, &candidate.z) <= dedup) {
            return false;
        }
        list.push(candidate);
        true
    }
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Ratios `u_i / λ_i` with `λ_i` above the threshold, over the given nodes,
/// deduplicated per cell. Rows without uncertainty carry no scenario.
pub fn harvest_critical_scenarios(
    result: &BnbResult,
    nodes: &[usize],
    tol: &Tolerances,
) -> CriticalScenarioSet {
    let mut set = CriticalScenarioSet {
        cells: result
            .counterpart
            .index
            .cells
            .iter()
            .map(|b| (b.cell, Vec::new()))
            .collect(),
    };
    for &n in nodes {
        for c in &result.tree[n].duals.cells {
            for (row, (lam, u)) in c.lambda.iter().zip(&c.u).enumerate() {
                let Some(u) = u else { continue };
                if *lam <= tol.lambda_threshold {
                    continue;
                }
                let z: Scenario = u.iter().map(|v| v / lam).collect();
                set.insert(c.cell, CriticalScenario { z, node: n, row }, tol.dedup);
            }
        }
    }
    set
}

/// True when no cell holds two distinct critical scenarios; the current
/// objective is then optimal for the adjustable problem.
pub fn check_stop(scenarios: &CriticalScenarioSet) -> bool {
    scenarios.cells.iter().all(|(_, s)| s.len() <= 1)
}

/// The plane through `(z + z')/2` with normal `z − z'`.
pub fn bisecant_plane(z: &[f64], z2: &[f64], tol: &Tolerances) -> Result<Hyperplane> {
    if z.len() != z2.len() {
        return Err(AroError::Dimension("scenarios of different length".into()));
    }
    if euclid(z, z2) <= tol.dedup {
        return Err(AroError::CoincidentScenarios(tol.dedup));
    }
    let normal: Vec<f64> = z.iter().zip(z2).map(|(a, b)| a - b).collect();
    let mid: Vec<f64> = z.iter().zip(z2).map(|(a, b)| 0.5 * (a + b)).collect();
    let offset = dot(&normal, &mid);
    Ok(Hyperplane { normal, offset })
}

/// Leaves whose worst-case objective under the incumbent attains `t̄`.
pub fn active_cells(
    problem: &AroProblem,
    partition: &Partition,
    solution: &StaticSolution,
    t_bar: f64,
    tol: &Tolerances,
) -> Result<Vec<CellId>> {
    let mut out = Vec::new();
    for id in partition.leaves() {
        let y = solution.y_of(id).ok_or(AroError::UnknownCell(id.0))?;
        let region = partition.region(id)?;
        let (worst, _) = problem.worst_case_objective(&solution.x, y, &region, tol)?;
        if t_bar - worst <= tol.active * t_bar.abs().max(1.0) {
            out.push(id);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum SplitAction {
    Split {
        cell: CellId,
        children: (CellId, CellId),
        between: (Scenario, Scenario),
    },
    Inactive {
        cell: CellId,
    },
    TooFewScenarios {
        cell: CellId,
        count: usize,
    },
    /// Every candidate pair produced an empty child.
    Degenerate {
        cell: CellId,
    },
    CellLimit {
        cell: CellId,
    },
}

/// Splits every active cell holding at least two scenarios by the bisecant
/// of its farthest pair, falling back to nearer pairs when a split is
/// degenerate. The number of leaves never exceeds `max_cells`.
pub fn split_round(
    partition: &Partition,
    active: &[CellId],
    scenarios: &CriticalScenarioSet,
    generation: usize,
    max_cells: usize,
    tol: &Tolerances,
) -> Result<(Partition, Vec<SplitAction>)> {
    let mut out = partition.clone();
    let mut actions = Vec::new();
    for id in partition.leaves() {
        if !active.contains(&id) {
            actions.push(SplitAction::Inactive { cell: id });
            continue;
        }
        let mut points: Vec<&Scenario> = scenarios.of(id).iter().map(|s| &s.z).collect();
        if points.len() < 2 {
            actions.push(SplitAction::TooFewScenarios {
                cell: id,
                count: points.len(),
            });
            continue;
        }
        if out.num_leaves() >= max_cells {
            actions.push(SplitAction::CellLimit { cell: id });
            continue;
        }
        points.sort_by(|a, b| lex_cmp(a, b));
        let mut pairs = Vec::new();
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                pairs.push((euclid(points[i], points[j]), i, j));
            }
        }
        // Farthest first; the stable sort keeps lexicographic order on ties.
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut done = false;
        for (dist, i, j) in pairs {
            if dist <= tol.dedup {
                break;
            }
            let plane = bisecant_plane(points[i], points[j], tol)?;
            match out.refine(id, &plane, generation, tol) {
                Ok(next) => {
                    let children = next.cell(id)?.children.expect("refined cell has children");
                    actions.push(SplitAction::Split {
                        cell: id,
                        children,
                        between: (points[i].clone(), points[j].clone()),
                    });
                    out = next;
                    done = true;
                    break;
                }
                Err(AroError::DegenerateSplit { detail, .. }) => {
                    debug!("cell {id}: degenerate bisecant ({detail}), trying the next pair");
                }
                Err(e) => return Err(e),
            }
        }
        if !done {
            actions.push(SplitAction::Degenerate { cell: id });
        }
    }
    Ok((out, actions))
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => {}
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// `max_z min_s c(z)·x + q(z)·y^s` over the base set, with a maximizer.
/// Only sound when no constraint depends on `z`.
pub fn ex_post_correction(
    problem: &AroProblem,
    solution: &StaticSolution,
    tol: &Tolerances,
) -> Result<(f64, Scenario)> {
    if !problem.constraints_are_certain() {
        return Err(AroError::ExPostPrecondition);
    }
    let l = problem.uncertainty_dim;
    // Variables: τ, then z; both free. Minimize −τ.
    let mut objective = vec![0.0; 1 + l];
    objective[0] = -1.0;
    let mut lp = StandardFormLP::new(objective, vec![false; 1 + l]);
    for (_, y) in &solution.y {
        let nominal = dot(problem.cost_x.nominal(), &solution.x) + dot(problem.cost_y.nominal(), y);
        let mut g = problem.cost_x.transpose_apply(&solution.x);
        for (a, b) in g.iter_mut().zip(problem.cost_y.transpose_apply(y)) {
            *a += b;
        }
        // g·z − τ ≥ −nominal
        let mut coeffs = vec![(0, -1.0)];
        coeffs.extend(g.iter().enumerate().map(|(k, v)| (1 + k, *v)));
        lp.ineq_rows.push(LinearRow::sparse(coeffs, -nominal));
    }
    for (row, p) in problem.base_set.rows().iter().zip(problem.base_set.rhs()) {
        let coeffs = row.iter().enumerate().map(|(k, v)| (1 + k, -v)).collect();
        lp.ineq_rows.push(LinearRow::sparse(coeffs, -p));
    }
    match solve_lp(&lp, tol)? {
        LpOutcome::Optimal(s) => Ok((-s.objective, s.primal[1..].to_vec())),
        other => Err(AroError::Internal(format!(
            "ex-post correction LP did not solve: {}",
            match other {
                LpOutcome::Infeasible(_) => "infeasible",
                _ => "unbounded",
            }
        ))),
    }
}

/// What a round hands to a scenario detector.
pub struct RoundContext<'a> {
    pub problem: &'a AroProblem,
    pub partition: &'a Partition,
    pub result: &'a BnbResult,
    pub active: &'a [CellId],
    pub tol: &'a Tolerances,
}

pub struct Detection {
    pub scenarios: CriticalScenarioSet,
    /// Whether a stop on these scenarios proves optimality.
    pub certifies_stop: bool,
}

pub trait ScenarioDetector {
    fn name(&self) -> String;
    fn detect(&self, ctx: &RoundContext<'_>) -> Result<Detection>;
}

/// Scenarios from the duals of a minimum critical cutset of the tree.
#[derive(Debug, Clone, Copy, Default)]
pub struct BnbDetector;

impl ScenarioDetector for BnbDetector {
    fn name(&self) -> String {
        "bnb".into()
    }

    fn detect(&self, ctx: &RoundContext<'_>) -> Result<Detection> {
        let cutset = min_critical_cutset(ctx.result, ctx.tol);
        Ok(Detection {
            scenarios: harvest_critical_scenarios(ctx.result, &cutset, ctx.tol),
            certifies_stop: true,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub max_cells: usize,
    pub max_rounds: usize,
    pub bnb: BnbOptions,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            max_cells: 10,
            max_rounds: 50,
            bnb: BnbOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// No cell holds two distinct critical scenarios.
    Certified,
    MaxCells,
    MaxRounds,
    /// No active cell could be split.
    NoSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub r: usize,
    pub cells: usize,
    pub t_bar: f64,
    pub t_underbar: Option<f64>,
    pub leaves: Vec<CellId>,
    pub active: Vec<CellId>,
    pub scenario_counts: Vec<(CellId, usize)>,
    pub actions: Vec<SplitAction>,
    pub bnb_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub rounds: Vec<RoundRecord>,
    pub stop: StopReason,
    pub partition: Partition,
    pub solution: StaticSolution,
}

impl RoundTrace {
    pub fn final_t_bar(&self) -> f64 {
        self.rounds
            .last()
            .expect("a trace has at least one round")
            .t_bar
    }

    pub fn final_t_underbar(&self) -> Option<f64> {
        self.rounds.last().and_then(|r| r.t_underbar)
    }

    /// The last round with at most `cells` leaves.
    pub fn at_cells(&self, cells: usize) -> Option<&RoundRecord> {
        self.rounds.iter().rev().find(|r| r.cells <= cells)
    }

    /// One JSON object per round.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.rounds {
            out.push_str(&serde_json::to_string(r).expect("round serializes"));
            out.push('\n');
        }
        out
    }
}

/// Runs splitting rounds until the stop criterion holds, `max_cells` leaves
/// exist, `max_rounds` splitting rounds have run, or nothing can be split.
pub fn run(
    problem: &AroProblem,
    config: &SplitConfig,
    detector: &dyn ScenarioDetector,
    tol: &Tolerances,
) -> Result<RoundTrace> {
    run_with(problem, config, detector, tol, &|_| {})
}

/// As [`run`], passing every round's incumbent through `clean` before it is
/// evaluated. `clean` must keep the solution feasible without raising any
/// cell's worst-case objective.
pub fn run_with(
    problem: &AroProblem,
    config: &SplitConfig,
    detector: &dyn ScenarioDetector,
    tol: &Tolerances,
    clean: &dyn Fn(&mut StaticSolution),
) -> Result<RoundTrace> {
    let report = problem.validate(tol)?;
    let mut partition = Partition::new(problem.base_set.clone());
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut r = 0;
    loop {
        let mut result = solve_bnb(problem, &partition, tol, &config.bnb)?;
        clean(&mut result.incumbent);
        let t_bar = result.incumbent_objective;
        if let Some(prev) = rounds.last() {
            if t_bar > prev.t_bar + tol.gap * prev.t_bar.abs().max(1.0) {
                warn!("round {r}: objective rose from {} to {t_bar}", prev.t_bar);
            }
        }
        let t_underbar = if report.objective_only {
            Some(ex_post_correction(problem, &result.incumbent, tol)?.0)
        } else {
            None
        };
        let active = active_cells(problem, &partition, &result.incumbent, t_bar, tol)?;
        let ctx = RoundContext {
            problem,
            partition: &partition,
            result: &result,
            active: &active,
            tol,
        };
        let detection = detector.detect(&ctx)?;
        let mut record = RoundRecord {
            r,
            cells: partition.num_leaves(),
            t_bar,
            t_underbar,
            leaves: partition.leaves(),
            active: active.clone(),
            scenario_counts: detection.scenarios.counts(),
            actions: Vec::new(),
            bnb_nodes: result.tree.len(),
        };
        info!(
            "{} round {r}: {} cells, t̄ = {t_bar}, t̲ = {t_underbar:?}",
            detector.name(),
            record.cells
        );

        let stop = if detection.certifies_stop && check_stop(&detection.scenarios) {
            Some(StopReason::Certified)
        } else if partition.num_leaves() >= config.max_cells {
            Some(StopReason::MaxCells)
        } else if r >= config.max_rounds {
            Some(StopReason::MaxRounds)
        } else {
            None
        };
        if let Some(stop) = stop {
            rounds.push(record);
            return Ok(RoundTrace {
                rounds,
                stop,
                partition,
                solution: result.incumbent,
            });
        }

        let (next, actions) = split_round(
            &partition,
            &active,
            &detection.scenarios,
            r + 1,
            config.max_cells,
            tol,
        )?;
        let split = actions
            .iter()
            .any(|a| matches!(a, SplitAction::Split { .. }));
        record.actions = actions;
        rounds.push(record);
        if !split {
            return Ok(RoundTrace {
                rounds,
                stop: StopReason::NoSplit,
                partition,
                solution: result.incumbent,
            });
        }
        partition = next;
        r += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cs(z: Vec<f64>) -> CriticalScenario {
        CriticalScenario { z, node: 0, row: 0 }
    }

    #[test]
    fn bisecant_examples() {
        let t = Tolerances::default();
        let h = bisecant_plane(&[0.0, 0.0], &[2.0, 0.0], &t).unwrap();
        assert_eq!(h.normal, vec![-2.0, 0.0]);
        assert_eq!(h.offset, -2.0);
        let h = bisecant_plane(&[1.0, 1.0], &[0.0, 0.0], &t).unwrap();
        assert_eq!((h.normal, h.offset), (vec![1.0, 1.0], 1.0));
        assert!(matches!(
            bisecant_plane(&[1.0], &[1.0], &t),
            Err(AroError::CoincidentScenarios(_))
        ));
    }

    #[test]
    fn stop_rule() {
        let t = Tolerances::default();
        let mut set = CriticalScenarioSet::default();
        assert!(check_stop(&set));
        set.insert(CellId(0), cs(vec![0.5]), t.dedup);
        assert!(!set.insert(CellId(0), cs(vec![0.5 + 1e-9]), t.dedup));
        assert!(check_stop(&set));
        set.insert(CellId(0), cs(vec![0.7]), t.dedup);
        assert!(!check_stop(&set));
    }

    #[test]
    fn farthest_pair_is_split() {
        let t = Tolerances::default();
        let part = Partition::new(crate::model::Polyhedron::bounding_box(
            &[0.0, 0.0],
            &[3.0, 1.0],
        ));
        let mut set = CriticalScenarioSet::default();
        for z in [vec![1.0, 0.0], vec![0.0, 0.0], vec![3.0, 0.0]] {
            set.insert(CellId(0), cs(z), t.dedup);
        }
        let (next, actions) = split_round(&part, &[CellId(0)], &set, 1, 10, &t).unwrap();
        assert_eq!(next.num_leaves(), 2);
        let SplitAction::Split { between, .. } = &actions[0] else {
            panic!("{actions:?}")
        };
        assert_eq!(between, &(vec![0.0, 0.0], vec![3.0, 0.0]));
    }

    #[test]
    fn inactive_and_lonely_cells_are_kept() {
        let t = Tolerances::default();
        let part = Partition::new(crate::model::Polyhedron::bounding_box(&[0.0], &[1.0]));
        let mut set = CriticalScenarioSet::default();
        set.insert(CellId(0), cs(vec![0.0]), t.dedup);
        let (next, actions) = split_round(&part, &[CellId(0)], &set, 1, 10, &t).unwrap();
        assert_eq!(next, part);
        assert_eq!(
            actions,
            vec![SplitAction::TooFewScenarios {
                cell: CellId(0),
                count: 1
            }]
        );
        set.insert(CellId(0), cs(vec![1.0]), t.dedup);
        let (next, actions) = split_round(&part, &[], &set, 1, 10, &t).unwrap();
        assert_eq!(next, part);
        assert_eq!(actions, vec![SplitAction::Inactive { cell: CellId(0) }]);
        let (_, actions) = split_round(&part, &[CellId(0)], &set, 1, 1, &t).unwrap();
        assert_eq!(actions, vec![SplitAction::CellLimit { cell: CellId(0) }]);
    }

    #[test]
    fn diagonal_pair_gives_diagonal_plane() {
        let t = Tolerances::default();
        let part = Partition::new(crate::model::Polyhedron::bounding_box(
            &[0.0, 0.0],
            &[1.0, 1.0],
        ));
        let mut set = CriticalScenarioSet::default();
        set.insert(CellId(0), cs(vec![1.0, 0.0]), t.dedup);
        set.insert(CellId(0), cs(vec![0.0, 1.0]), t.dedup);
        let (next, _) = split_round(&part, &[CellId(0)], &set, 1, 10, &t).unwrap();
        let cut = next.cuts(CellId(1)).unwrap()[0].clone();
        assert_eq!(cut.offset, 0.0);
        assert_eq!(cut.normal[0], -cut.normal[1]);
    }
}
