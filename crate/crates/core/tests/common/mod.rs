//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use aro_split::bnb::{solve_bnb, BnbOptions};
use aro_split::counterpart::{build_counterpart, BranchingConstraint, Layout, Var};
use aro_split::lp::{solve_lp, LinearRow, LpOutcome, StandardFormLP};
use aro_split::model::{AffineVector, AroProblem, Partition, Polyhedron, UncertainConstraint};
use aro_split::routeplan::GraphInstance;
use aro_split::Tolerances;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn tol() -> Tolerances {
    Tolerances::default()
}

// ---------------------------------------------------------------- LP oracle

pub const BOX: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    /// Optimal value; `boxed` when the value keeps dropping as the
    /// artificial box grows, i.e. the LP itself is unbounded below.
    Value {
        value: f64,
        boxed: bool,
    },
    Infeasible,
}

/// Minimizes by enumerating every basic solution of the LP intersected with
/// `|x_j| ≤ BOX`, then again with the box doubled.
pub fn lp_vertex_oracle(lp: &StandardFormLP) -> Oracle {
    match (boxed_minimum(lp, BOX), boxed_minimum(lp, 2.0 * BOX)) {
        (Some(v), Some(w)) => Oracle::Value {
            value: v,
            boxed: w < v - 1e-6 * (1.0 + v.abs()),
        },
        _ => Oracle::Infeasible,
    }
}

fn boxed_minimum(lp: &StandardFormLP, size: f64) -> Option<f64> {
    let n = lp.num_vars;
    // Every constraint as (row, rhs, is_equality), read as row·x ≥ rhs.
    let mut cons: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for r in &lp.eq_rows {
        let row = r.to_dense(n);
        if row.iter().all(|v| *v == 0.0) {
            if r.rhs != 0.0 {
                return None;
            }
            continue;
        }
        cons.push((row, r.rhs, true));
    }
    let n_eq = cons.len();
    for r in &lp.ineq_rows {
        cons.push((r.to_dense(n), r.rhs, false));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let lower = if lp.nonneg[j] { 0.0 } else { -size };
        cons.push((e.clone(), lower, false));
        cons.push((e.iter().map(|v| -v).collect(), -size, false));
    }
    let feasible = |x: &[f64]| {
        cons.iter().all(|(row, rhs, eq)| {
            let a: f64 = row.iter().zip(x).map(|(p, q)| p * q).sum();
            if *eq {
                (a - rhs).abs() <= 1e-7 * (1.0 + rhs.abs())
            } else {
                a >= rhs - 1e-7 * (1.0 + rhs.abs())
            }
        })
    };
    let mut best: Option<f64> = None;
    for subset in combinations(cons.len(), n) {
        // A vertex makes every equality tight (there is at most one).
        if !(0..n_eq).all(|k| subset.contains(&k)) {
            continue;
        }
        let a = DMatrix::from_fn(n, n, |i, j| cons[subset[i]].0[j]);
        let b = DVector::from_fn(n, |i, _| cons[subset[i]].1);
        let Some(x) = a.lu().solve(&b) else { continue };
        let x: Vec<f64> = x.iter().copied().collect();
        if x.iter().any(|v| !v.is_finite()) || !feasible(&x) {
            continue;
        }
        let value: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        best = Some(best.map_or(value, |b| b.min(value)));
    }
    best
}

pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Small LP with integer data in `[-3, 3]`: up to 4 variables (some free),
/// up to 4 inequality rows and at most one equality row.
pub fn random_lp(rng: &mut impl Rng) -> StandardFormLP {
    let n = rng.gen_range(1..=4);
    let objective = (0..n).map(|_| rng.gen_range(-3..=3) as f64).collect();
    let nonneg = (0..n).map(|_| rng.gen_bool(0.75)).collect();
    let mut lp = StandardFormLP::new(objective, nonneg);
    let row = |rng: &mut dyn rand::RngCore| {
        let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(-3..=3) as f64).collect();
        let rhs = rng.gen_range(-4..=4) as f64;
        LinearRow::dense(&coeffs, rhs)
    };
    for _ in 0..rng.gen_range(0..=4) {
        lp.ineq_rows.push(row(rng));
    }
    if rng.gen_bool(0.3) {
        lp.eq_rows.push(row(rng));
    }
    lp
}

/// `lp` with the oracle's box rows added, so every outcome is bounded.
pub fn boxed(lp: &StandardFormLP) -> StandardFormLP {
    let mut out = lp.clone();
    for j in 0..lp.num_vars {
        out.ineq_rows.push(LinearRow::sparse(vec![(j, -1.0)], -BOX));
        if !lp.nonneg[j] {
            out.ineq_rows.push(LinearRow::sparse(vec![(j, 1.0)], -BOX));
        }
    }
    out
}

/// KKT conditions of a claimed optimum: primal and dual feasibility,
/// complementary slackness and equal objectives.
pub fn check_optimality(lp: &StandardFormLP, out: &LpOutcome) -> Result<(), String> {
    let LpOutcome::Optimal(s) = out else {
        return Err(format!("expected an optimum, got {out:?}"));
    };
    let x = &s.primal;
    let eps = 1e-6;
    for (row, pi) in lp.ineq_rows.iter().zip(&s.dual_ineq) {
        let slack = row.dot(x) - row.rhs;
        if slack < -eps {
            return Err(format!("row violated by {slack}"));
        }
        if *pi < -eps {
            return Err(format!("negative multiplier {pi}"));
        }
        if (pi * slack).abs() > eps {
            return Err(format!(
                "complementary slackness: π = {pi}, slack = {slack}"
            ));
        }
    }
    for row in &lp.eq_rows {
        if (row.dot(x) - row.rhs).abs() > eps {
            return Err("equality violated".into());
        }
    }
    let mut reduced = lp.objective.clone();
    for (row, pi) in lp
        .ineq_rows
        .iter()
        .zip(&s.dual_ineq)
        .chain(lp.eq_rows.iter().zip(&s.dual_eq))
    {
        for &(j, v) in row.coeffs() {
            reduced[j] -= pi * v;
        }
    }
    for j in 0..lp.num_vars {
        if lp.nonneg[j] {
            if x[j] < -eps || reduced[j] < -eps || (reduced[j] * x[j]).abs() > eps {
                return Err(format!(
                    "column {j}: x = {}, reduced cost {}",
                    x[j], reduced[j]
                ));
            }
        } else if reduced[j].abs() > eps {
            return Err(format!("free column {j} has reduced cost {}", reduced[j]));
        }
    }
    let dual: f64 = lp
        .ineq_rows
        .iter()
        .zip(&s.dual_ineq)
        .chain(lp.eq_rows.iter().zip(&s.dual_eq))
        .map(|(r, p)| r.rhs * p)
        .sum();
    if (dual - s.objective).abs() > eps {
        return Err(format!("primal {} but dual {dual}", s.objective));
    }
    Ok(())
}

pub fn check_farkas(lp: &StandardFormLP, ineq: &[f64], eq: &[f64]) -> Result<(), String> {
    let eps = 1e-7;
    if ineq.iter().any(|w| *w < -eps) {
        return Err("negative weight on an inequality row".into());
    }
    let mut combo = vec![0.0; lp.num_vars];
    let mut rhs = 0.0;
    for (row, w) in lp
        .ineq_rows
        .iter()
        .zip(ineq)
        .chain(lp.eq_rows.iter().zip(eq))
    {
        for &(j, v) in row.coeffs() {
            combo[j] += w * v;
        }
        rhs += w * row.rhs;
    }
    for (j, (c, nonneg)) in combo.iter().zip(&lp.nonneg).enumerate() {
        let bad = if *nonneg { *c > eps } else { c.abs() > eps };
        if bad {
            return Err(format!("column {j}: combination {c}"));
        }
    }
    if rhs <= eps {
        return Err(format!("combined right-hand side {rhs} is not positive"));
    }
    Ok(())
}

pub fn check_ray(lp: &StandardFormLP, ray: &[f64]) -> Result<(), String> {
    let eps = 1e-7;
    let cost: f64 = lp.objective.iter().zip(ray).map(|(c, r)| c * r).sum();
    if cost >= -eps {
        return Err(format!("ray does not decrease the objective ({cost})"));
    }
    for row in &lp.ineq_rows {
        if row.dot(ray) < -eps {
            return Err("ray leaves an inequality".into());
        }
    }
    for row in &lp.eq_rows {
        if row.dot(ray).abs() > eps {
            return Err("ray leaves an equality".into());
        }
    }
    if (0..lp.num_vars).any(|j| lp.nonneg[j] && ray[j] < -eps) {
        return Err("ray leaves the orthant".into());
    }
    Ok(())
}

// --------------------------------------------------------- ARO generators

/// Random small instance: `L ≤ 4`, `d1 + d2 ≤ 6`, at most 3 constraints,
/// costs positive at `z = 0` and every constraint coefficient at least 0.5
/// over the box, with right-hand sides in `[1, 1.5]`. Any variable set to 3
/// satisfies every constraint alone, so integer optima stay in `{0,…,3}`.
pub fn random_aro(rng: &mut impl Rng, max_integer: usize) -> AroProblem {
    let l = rng.gen_range(1..=4);
    let d1 = rng.gen_range(0..=2);
    let d2 = rng.gen_range(1..=3);
    let n_int = max_integer.min(d1 + d2);
    let mut m1 = rng.gen_range(0..=d1.min(n_int));
    let mut m2 = rng.gen_range(0..=d2.min(n_int - m1));
    if m1 + m2 == 0 && n_int > 0 {
        if d2 > 0 {
            m2 = 1;
        } else {
            m1 = 1;
        }
    }
    let scale = 0.5 / l as f64;
    let affine = |rng: &mut dyn rand::RngCore, len: usize, lo: f64, hi: f64, p: f64| {
        let nominal: Vec<f64> = (0..len).map(|_| rng.gen_range(lo..hi)).collect();
        let mut entries = Vec::new();
        for k in 0..len {
            for zl in 0..l {
                if rng.gen_bool(p) {
                    entries.push((k, zl, rng.gen_range(-scale..scale)));
                }
            }
        }
        AffineVector::new(nominal, entries, l).expect("entries in range")
    };
    let cost_x = affine(rng, d1, 1.0, 3.0, 0.5);
    let cost_y = affine(rng, d2, 1.0, 3.0, 0.5);
    let n_cons = rng.gen_range(1..=3);
    let mut constraints = Vec::new();
    for _ in 0..n_cons {
        constraints.push(UncertainConstraint {
            a: affine(rng, d1, 1.0, 2.0, 0.4),
            w: affine(rng, d2, 1.0, 2.0, 0.4),
            b: rng.gen_range(1.0..1.5),
        });
    }
    let base_set = if rng.gen_bool(0.5) {
        Polyhedron::bounding_box(&vec![0.0; l], &vec![1.0; l])
    } else {
        Polyhedron::budget(l, rng.gen_range(1..=l) as f64)
    };
    AroProblem {
        uncertainty_dim: l,
        d1,
        d2,
        m1,
        m2,
        cost_x,
        cost_y,
        constraints,
        base_set,
    }
}

/// Static optimum over a single-cell partition by trying every integer
/// assignment in `{0,…,3}` and solving the remaining LP.
pub fn enumeration_oracle(problem: &AroProblem) -> Option<f64> {
    let partition = Partition::new(problem.base_set.clone());
    let leaf = partition.leaves()[0];
    let vars: Vec<Var> = (0..problem.m1)
        .map(Var::X)
        .chain((0..problem.m2).map(|k| Var::Y(leaf, k)))
        .collect();
    let mut best: Option<f64> = None;
    let count = 4usize.pow(vars.len() as u32);
    for code in 0..count {
        let mut branches = Vec::new();
        let mut c = code;
        for &v in &vars {
            let value = (c % 4) as f64;
            c /= 4;
            branches.push(BranchingConstraint::lower(v, value));
            branches.push(BranchingConstraint::upper(v, value));
        }
        let cp = build_counterpart(problem, &partition, &branches, Layout::Full).ok()?;
        if let LpOutcome::Optimal(s) = solve_lp(&cp.lp, &tol()).ok()? {
            best = Some(best.map_or(s.objective, |b: f64| b.min(s.objective)));
        }
    }
    best
}

pub fn bnb_value(problem: &AroProblem, partition: &Partition) -> f64 {
    solve_bnb(problem, partition, &tol(), &BnbOptions::default())
        .expect("branch and bound solves")
        .incumbent_objective
}

// ------------------------------------------------------ shortest paths

/// Every simple `b → e` path as a list of arc indices, by extending partial
/// node sequences depth-first.
pub fn simple_paths(inst: &GraphInstance) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut frontier: Vec<(Vec<usize>, Vec<usize>)> = vec![(vec![inst.b], Vec::new())];
    while let Some((nodes, arcs)) = frontier.pop() {
        let last = *nodes.last().unwrap();
        if last == inst.e {
            out.push(arcs);
            continue;
        }
        for (k, &(i, j)) in inst.arcs.iter().enumerate() {
            if i == last && !nodes.contains(&j) {
                let mut n2 = nodes.clone();
                n2.push(j);
                let mut a2 = arcs.clone();
                a2.push(k);
                frontier.push((n2, a2));
            }
        }
    }
    out
}

/// Vertices of `{z ∈ [0,1]^L : Σ z ≤ B}` for integral `B`: the 0/1 vectors
/// with at most `B` ones.
pub fn budget_vertices(l: usize, budget: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for k in 0..=budget.min(l) {
        for ones in combinations(l, k) {
            let mut z = vec![0.0; l];
            for i in ones {
                z[i] = 1.0;
            }
            out.push(z);
        }
    }
    out
}

pub fn route_cost(inst: &GraphInstance, arcs: &[usize], z: &[f64]) -> f64 {
    arcs.iter().map(|&k| inst.d[k] * (1.0 + 0.5 * z[k])).sum()
}

pub fn route_arcs(y: &[f64]) -> Vec<usize> {
    (0..y.len()).filter(|&k| y[k] > 0.5).collect()
}

/// `min over paths max over budget vertices`.
pub fn rpp_static_oracle(inst: &GraphInstance, budget: usize) -> f64 {
    let vertices = budget_vertices(inst.arcs.len(), budget);
    simple_paths(inst)
        .iter()
        .map(|p| {
            vertices
                .iter()
                .map(|z| route_cost(inst, p, z))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// `max_z min(f₁(z), f₂(z))` over the budget set for two routes, as
/// `min_α max_vertex α f₁ + (1 − α) f₂` (minimax of a bilinear form),
/// minimized over `α` by ternary search.
pub fn two_route_ex_post(inst: &GraphInstance, budget: usize, r1: &[usize], r2: &[usize]) -> f64 {
    let vertices = budget_vertices(inst.arcs.len(), budget);
    let g = |alpha: f64| {
        vertices
            .iter()
            .map(|z| alpha * route_cost(inst, r1, z) + (1.0 - alpha) * route_cost(inst, r2, z))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if g(a) <= g(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    g(0.5 * (lo + hi))
}
