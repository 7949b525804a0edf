//! Property batteries over the built-in fixtures, as run by `aro-split verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bnb::{min_critical_cutset, solve_bnb, BnbOptions, BnbResult};
use crate::counterpart::{check_dual_feasibility, DualKind};
use crate::error::{AroError, Result};
use crate::fixtures;
use crate::model::polyhedron::dot;
use crate::model::{AroProblem, Hyperplane, Partition, Polyhedron, Scenario, Support};
use crate::routeplan::{build_rpp, instance_seed, GraphInstance};
use crate::splitter::{
    active_cells, check_stop, ex_post_correction, harvest_critical_scenarios, split_round,
    CriticalScenarioSet,
};
use crate::tolerance::Tolerances;

/// Largest accepted `|primal − dual|` at a feasible node.
pub const DUALITY_GAP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Deliberate corruption used to confirm that the audits can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Scales every node multiplier by 1.01 before auditing.
    WrongDual,
}

/// Checks every node of `result`: the dual objective rebuilt from the
/// multipliers matches the LP objective at feasible nodes, and the
/// multipliers satisfy the dual constraint system.
pub fn duality_audit(
    problem: &AroProblem,
    partition: &Partition,
    result: &BnbResult,
    tol: &Tolerances,
    fault: Fault,
) -> std::result::Result<usize, String> {
    let mut audited = 0;
    for node in &result.tree {
        let mut duals = node.duals.clone();
        if fault == Fault::WrongDual {
            for c in &mut duals.cells {
                c.lambda.iter_mut().for_each(|l| *l *= 1.01);
                for u in c.u.iter_mut().flatten() {
                    u.iter_mut().for_each(|v| *v *= 1.01);
                }
            }
            duals.mu.iter_mut().for_each(|m| *m *= 1.01);
        }
        let branches = result.branches_of(node.id);
        if duals.kind == DualKind::Optimal {
            let dual = duals.dual_objective(problem, &branches);
            if (dual - node.lp_objective).abs() > DUALITY_GAP {
                return Err(format!(
                    "node {}: primal {} but dual {dual}",
                    node.id, node.lp_objective
                ));
            }
            audited += 1;
        }
        check_dual_feasibility(problem, partition, &branches, &duals, tol)
            .map_err(|e| format!("node {}: {e}", node.id))?;
    }
    Ok(audited)
}

/// Every harvested scenario lies in its own cell.
pub fn scenarios_in_cells(
    partition: &Partition,
    scenarios: &CriticalScenarioSet,
    tol: &Tolerances,
) -> Result<std::result::Result<(), String>> {
    for (cell, list) in &scenarios.cells {
        let region = partition.region(*cell)?;
        if let Some(s) = list.iter().find(|s| !region.contains(&s.z, tol)) {
            return Ok(Err(format!("scenario {:?} lies outside cell {cell}", s.z)));
        }
    }
    Ok(Ok(()))
}

/// A plane through `region` with all of `points` strictly on its lower side
/// and part of the region on either side.
pub fn plane_keeping(
    region: &Polyhedron,
    points: &[Scenario],
    tol: &Tolerances,
) -> Result<Option<Hyperplane>> {
    let dim = region.dim();
    let mut directions = Vec::with_capacity(2 * dim + 1);
    for k in 0..dim {
        for sign in [1.0, -1.0] {
            let mut d = vec![0.0; dim];
            d[k] = sign;
            directions.push(d);
        }
    }
    directions.push(vec![1.0; dim]);
    for d in directions {
        let Support::Finite { value: top, .. } = region.support(&d, tol)? else {
            continue;
        };
        let low = match points.iter().map(|z| dot(&d, z)).reduce(f64::max) {
            Some(v) => v,
            None => {
                let neg: Vec<f64> = d.iter().map(|v| -v).collect();
                match region.support(&neg, tol)? {
                    Support::Finite { value, .. } => -value,
                    _ => continue,
                }
            }
        };
        if top - low > 1e-3 * (1.0 + top.abs()) {
            return Ok(Some(Hyperplane {
                normal: d,
                offset: 0.5 * (low + top),
            }));
        }
    }
    Ok(None)
}

/// Refines every leaf it can while keeping each leaf's scenarios inside a
/// single child. `None` when no leaf admits such a plane.
pub fn refinement_keeping(
    partition: &Partition,
    scenarios: &CriticalScenarioSet,
    tol: &Tolerances,
) -> Result<Option<Partition>> {
    let mut out = partition.clone();
    let mut changed = false;
    let generation = partition
        .cells()
        .iter()
        .map(|c| c.generation)
        .max()
        .unwrap_or(0)
        + 1;
    for leaf in partition.leaves() {
        let points: Vec<Scenario> = scenarios.of(leaf).iter().map(|s| s.z.clone()).collect();
        let region = partition.region(leaf)?;
        if let Some(plane) = plane_keeping(&region, &points, tol)? {
            match out.refine(leaf, &plane, generation, tol) {
                Ok(next) => {
                    out = next;
                    changed = true;
                }
                Err(AroError::DegenerateSplit { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(changed.then_some(out))
}

/// Splits a random leaf by a random plane through its interior.
pub fn random_refinement(
    partition: &Partition,
    rng: &mut impl Rng,
    tol: &Tolerances,
) -> Result<Partition> {
    let leaves = partition.leaves();
    let generation = partition
        .cells()
        .iter()
        .map(|c| c.generation)
        .max()
        .unwrap_or(0)
        + 1;
    for _ in 0..100 {
        let leaf = leaves[rng.gen_range(0..leaves.len())];
        let region = partition.region(leaf)?;
        let d: Vec<f64> = (0..region.dim())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let neg: Vec<f64> = d.iter().map(|v| -v).collect();
        let (Support::Finite { value: hi, .. }, Support::Finite { value: lo, .. }) =
            (region.support(&d, tol)?, region.support(&neg, tol)?)
        else {
            continue;
        };
        let lo = -lo;
        let offset = lo + rng.gen_range(0.2..0.8) * (hi - lo);
        match partition.refine(leaf, &Hyperplane { normal: d, offset }, generation, tol) {
            Ok(next) => return Ok(next),
            Err(AroError::DegenerateSplit { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(AroError::Internal(
        "no admissible random plane found".into(),
    ))
}

/// Static robust shortest path value by enumeration: every simple `b → e`
/// path against every vertex of the budget set (integral budget).
pub fn rpp_brute_force(instance: &GraphInstance, budget: usize) -> f64 {
    let mut best = f64::INFINITY;
    for path in simple_paths(instance) {
        let mut worst = f64::NEG_INFINITY;
        for z in budget_vertices(instance.arcs.len(), budget) {
            let v: f64 = path
                .iter()
                .map(|&k| instance.d[k] * (1.0 + 0.5 * z[k]))
                .sum();
            worst = worst.max(v);
        }
        best = best.min(worst);
    }
    best
}

fn simple_paths(instance: &GraphInstance) -> Vec<Vec<usize>> {
    fn walk(
        inst: &GraphInstance,
        node: usize,
        seen: &mut Vec<bool>,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if node == inst.e {
            out.push(path.clone());
            return;
        }
        for (k, &(i, j)) in inst.arcs.iter().enumerate() {
            if i == node && !seen[j] {
                seen[j] = true;
                path.push(k);
                walk(inst, j, seen, path, out);
                path.pop();
                seen[j] = false;
            }
        }
    }
    let mut seen = vec![false; instance.n];
    seen[instance.b] = true;
    let mut out = Vec::new();
    walk(instance, instance.b, &mut seen, &mut Vec::new(), &mut out);
    out
}

fn budget_vertices(dim: usize, budget: usize) -> Vec<Vec<f64>> {
    (0u64..1 << dim)
        .filter(|m| m.count_ones() as usize <= budget)
        .map(|m| (0..dim).map(|k| ((m >> k) & 1) as f64).collect())
        .collect()
}

fn check(name: &'static str, outcome: std::result::Result<String, String>) -> Check {
    match outcome {
        Ok(detail) => Check {
            name,
            passed: true,
            detail,
        },
        Err(detail) => Check {
            name,
            passed: false,
            detail,
        },
    }
}

/// Runs every battery; the result lists one entry per property.
pub fn run_verify(tol: &Tolerances, fault: Fault) -> Result<Vec<Check>> {
    let opts = BnbOptions::default();
    let mut cases: Vec<(String, AroProblem)> = vec![
        ("toy".into(), fixtures::toy_1d()),
        ("constraint example".into(), fixtures::integer_pair()),
        ("objective example".into(), fixtures::two_route_graph().1),
    ];
    let mut graphs = Vec::new();
    for k in 0..10 {
        let inst = GraphInstance::generate(5, instance_seed(7, 5, k))?;
        cases.push((format!("rpp #{k}"), build_rpp(&inst, 2.0)?));
        graphs.push(inst);
    }

    let mut checks = Vec::new();

    // Duality audit and scenario feasibility, before and after one split.
    let mut audit: std::result::Result<usize, String> = Ok(0);
    let mut inside: std::result::Result<(), String> = Ok(());
    let mut no_gain: std::result::Result<usize, String> = Ok(0);
    let mut monotone: std::result::Result<usize, String> = Ok(0);
    let mut dominance: std::result::Result<usize, String> = Ok(0);
    for (name, problem) in &cases {
        let mut partition = Partition::new(problem.base_set.clone());
        for _ in 0..2 {
            let result = solve_bnb(problem, &partition, tol, &opts)?;
            let t = result.incumbent_objective;
            if let Ok(n) = &mut audit {
                match duality_audit(problem, &partition, &result, tol, fault) {
                    Ok(k) => *n += k,
                    Err(e) => audit = Err(format!("{name}: {e}")),
                }
            }
            let cutset = min_critical_cutset(&result, tol);
            let scenarios = harvest_critical_scenarios(&result, &cutset, tol);
            if inside.is_ok() {
                if let Err(e) = scenarios_in_cells(&partition, &scenarios, tol)? {
                    inside = Err(format!("{name}: {e}"));
                }
            }
            if problem.constraints_are_certain() {
                let (low, _) = ex_post_correction(problem, &result.incumbent, tol)?;
                if let Ok(n) = &mut dominance {
                    if low > t + tol.gap * t.abs().max(1.0) {
                        dominance = Err(format!("{name}: ex-post {low} above {t}"));
                    } else {
                        *n += 1;
                    }
                }
            }
            if let Some(refined) = refinement_keeping(&partition, &scenarios, tol)? {
                let t2 = solve_bnb(problem, &refined, tol, &opts)?.incumbent_objective;
                if let Ok(n) = &mut no_gain {
                    if (t2 - t).abs() > DUALITY_GAP {
                        no_gain = Err(format!("{name}: {t} became {t2}"));
                    } else {
                        *n += 1;
                    }
                }
            }
            let active = active_cells(problem, &partition, &result.incumbent, t, tol)?;
            let (next, _) = split_round(&partition, &active, &scenarios, 1, usize::MAX, tol)?;
            if next.num_leaves() == partition.num_leaves() {
                break;
            }
            let t2 = solve_bnb(problem, &next, tol, &opts)?.incumbent_objective;
            if let Ok(n) = &mut monotone {
                if t2 > t + tol.gap * t.abs().max(1.0) {
                    monotone = Err(format!("{name}: bisecant split raised {t} to {t2}"));
                } else {
                    *n += 1;
                }
            }
            partition = next;
        }
    }
    checks.push(check(
        "duality audit",
        audit.map(|n| format!("{n} feasible nodes within {DUALITY_GAP:e}")),
    ));
    checks.push(check(
        "scenarios lie in their cells",
        inside.map(|_| "all harvested scenarios".into()),
    ));
    checks.push(check(
        "scenario-preserving refinement keeps the objective",
        no_gain.map(|n| format!("{n} refinements")),
    ));
    checks.push(check(
        "bisecant split never raises the objective",
        monotone.map(|n| format!("{n} splits")),
    ));
    checks.push(check(
        "ex-post value at most the static value",
        dominance.map(|n| format!("{n} solutions")),
    ));

    // Objective example: the LP root sees one scenario, the cutset two.
    let (_, problem) = fixtures::two_route_graph();
    let partition = Partition::new(problem.base_set.clone());
    let result = solve_bnb(&problem, &partition, tol, &opts)?;
    let at_root = harvest_critical_scenarios(&result, &[0], tol);
    let cutset = min_critical_cutset(&result, tol);
    let full = harvest_critical_scenarios(&result, &cutset, tol);
    let (n_root, n_full) = (
        at_root.of(partition.leaves()[0]).len(),
        full.of(partition.leaves()[0]).len(),
    );
    let line = format!(
        "LP cutset: {n_root} scenario{}; full cutset: {n_full} scenarios",
        if n_root == 1 { "" } else { "s" }
    );
    let t = result.incumbent_objective;
    let active = active_cells(&problem, &partition, &result.incumbent, t, tol)?;
    let (next, _) = split_round(&partition, &active, &full, 1, usize::MAX, tol)?;
    let t2 = solve_bnb(&problem, &next, tol, &opts)?.incumbent_objective;
    checks.push(check(
        "objective example",
        if n_root == 1 && n_full >= 2 && t2 < t - DUALITY_GAP {
            Ok(format!("{line}; split lowers {t} to {t2}"))
        } else {
            Err(format!("{line}; split gives {t} -> {t2}"))
        },
    ));

    // Stop soundness on the toy: one scenario, so random splits cannot help.
    let toy = fixtures::toy_1d();
    let mut partition = Partition::new(toy.base_set.clone());
    let result = solve_bnb(&toy, &partition, tol, &opts)?;
    let t = result.incumbent_objective;
    let scenarios = harvest_critical_scenarios(&result, &min_critical_cutset(&result, tol), tol);
    let mut stop: std::result::Result<String, String> = if check_stop(&scenarios) {
        Ok("5 random refinements".into())
    } else {
        Err("stop rule did not fire on the toy".into())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        if stop.is_err() {
            break;
        }
        partition = random_refinement(&partition, &mut rng, tol)?;
        let t2 = solve_bnb(&toy, &partition, tol, &opts)?.incumbent_objective;
        if (t2 - t).abs() > DUALITY_GAP {
            stop = Err(format!("objective moved from {t} to {t2}"));
        }
    }
    checks.push(check("stop rule is sound", stop));

    // Static robust shortest path against enumeration.
    let mut oracle: std::result::Result<usize, String> = Ok(0);
    for (k, inst) in graphs.iter().enumerate() {
        let problem = build_rpp(inst, 2.0)?;
        let partition = Partition::new(problem.base_set.clone());
        let t = solve_bnb(&problem, &partition, tol, &opts)?.incumbent_objective;
        let brute = rpp_brute_force(inst, 2);
        if (t - brute).abs() > DUALITY_GAP {
            oracle = Err(format!("rpp #{k}: solver {t}, enumeration {brute}"));
            break;
        }
        if let Ok(n) = &mut oracle {
            *n += 1;
        }
    }
    checks.push(check(
        "shortest path matches enumeration",
        oracle.map(|n| format!("{n} instances")),
    ));
    Ok(checks)
}
