//! Robust shortest path benchmark: random instances, the overlap heuristic
//! used as a baseline detector, and the experiment harness.
//!
//! Instance `k` of an experiment with base seed `s` and `N` nodes uses seed
//! `splitmix64(splitmix64(s ^ N) + k·0x9E3779B97F4A7C15)`. Coordinates are
//! drawn from a ChaCha8 stream seeded with that value (stream 0; stream `j`
//! for the `j`-th regeneration when no start-to-end path survives), as pairs
//! `(10·u, 10·v)` of the generator's standard `[0, 1)` doubles.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use log::info;
use petgraph::algo::astar;
use petgraph::graph::{DiGraph, NodeIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bnb::{solve_bnb, BnbOptions};
use crate::counterpart::StaticSolution;
use crate::error::{AroError, Result};
use crate::model::{
    AffineVector, AroProblem, Partition, Polyhedron, Scenario, UncertainConstraint,
};
use crate::splitter::{
    self, BnbDetector, CriticalScenario, CriticalScenarioSet, Detection, RoundContext, RoundTrace,
    ScenarioDetector, SplitConfig,
};
use crate::tolerance::Tolerances;

const MAX_REGENERATIONS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphInstance {
    pub n: usize,
    pub coords: Vec<(f64, f64)>,
    pub arcs: Vec<(usize, usize)>,
    pub d: Vec<f64>,
    pub b: usize,
    pub e: usize,
    pub seed: u64,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn instance_seed(base: u64, n: usize, index: usize) -> u64 {
    splitmix64(
        splitmix64(base ^ n as u64)
            .wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
    )
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Number of arcs of the complete digraph on `n` nodes that are removed.
pub fn removed_arcs(n: usize) -> usize {
    (7 * n * (n - 1)) / 10
}

impl GraphInstance {
    /// Random instance: uniform points in `[0,10]²`, start and end at the
    /// farthest pair, complete digraph minus its longest 70% of arcs.
    pub fn generate(n: usize, seed: u64) -> Result<Self> {
        if n < 4 {
            return Err(AroError::Dimension(format!(
                "need at least 4 nodes, got {n}"
            )));
        }
        for stream in 0..MAX_REGENERATIONS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let coords: Vec<(f64, f64)> = (0..n)
                .map(|_| (10.0 * rng.gen::<f64>(), 10.0 * rng.gen::<f64>()))
                .collect();
            if let Some(inst) = Self::from_coords(coords, seed) {
                return Ok(inst);
            }
        }
        Err(AroError::Internal(format!(
            "no instance with a start-to-end path after {MAX_REGENERATIONS} draws"
        )))
    }

    /// Builds the instance on fixed points; `None` when the end node is
    /// unreachable after arc removal.
    pub fn from_coords(coords: Vec<(f64, f64)>, seed: u64) -> Option<Self> {
        let n = coords.len();
        let (mut b, mut e, mut best) = (0, 1, -1.0);
        for i in 0..n {
            for j in i + 1..n {
                let v = dist(coords[i], coords[j]);
                if v > best {
                    (b, e, best) = (i, j, v);
                }
            }
        }
        let mut all: Vec<(usize, usize, f64)> = Vec::with_capacity(n * (n - 1));
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    all.push((i, j, dist(coords[i], coords[j])));
                }
            }
        }
        let mut order: Vec<usize> = (0..all.len()).collect();
        order.sort_by(|&a, &c| all[c].2.total_cmp(&all[a].2).then(a.cmp(&c)));
        let mut keep = vec![true; all.len()];
        for &k in order.iter().take(removed_arcs(n)) {
            keep[k] = false;
        }
        let (mut arcs, mut d) = (Vec::new(), Vec::new());
        for (k, &(i, j, v)) in all.iter().enumerate() {
            if keep[k] {
                arcs.push((i, j));
                d.push(v);
            }
        }
        let inst = GraphInstance {
            n,
            coords,
            arcs,
            d,
            b,
            e,
            seed,
        };
        inst.shortest_path(&inst.d, |_| true).map(|_| inst)
    }

    /// Shortest `b → e` path by the given arc weights over the arcs passing
    /// `allowed`, as arc indices in path order.
    pub fn shortest_path(
        &self,
        weights: &[f64],
        allowed: impl Fn(usize) -> bool,
    ) -> Option<Vec<usize>> {
        let mut g = DiGraph::<(), usize>::with_capacity(self.n, self.arcs.len());
        let nodes: Vec<NodeIndex> = (0..self.n).map(|_| g.add_node(())).collect();
        for (k, &(i, j)) in self.arcs.iter().enumerate() {
            if allowed(k) {
                g.add_edge(nodes[i], nodes[j], k);
            }
        }
        let index: HashMap<(usize, usize), usize> =
            self.arcs.iter().enumerate().map(|(k, a)| (*a, k)).collect();
        let (_, path) = astar(
            &g,
            nodes[self.b],
            |v| v == nodes[self.e],
            |edge| weights[*edge.weight()],
            |_| 0.0,
        )?;
        Some(
            path.windows(2)
                .map(|w| index[&(w[0].index(), w[1].index())])
                .collect(),
        )
    }

    /// Replaces a route by the shortest `b → e` path using only its arcs,
    /// dropping detached cycles and dead ends.
    pub fn clean_route(&self, y: &[f64]) -> Vec<f64> {
        match self.shortest_path(&self.d, |k| y[k] > 0.5) {
            Some(path) => {
                let mut out = vec![0.0; y.len()];
                for k in path {
                    out[k] = 1.0;
                }
                out
            }
            None => y.to_vec(),
        }
    }
}

/// The robust shortest path problem: binary `y` per arc, flow rows
/// `Σ_out y − Σ_in y ≥ 1[j=b] − 1[j=e]`, `y ≤ 1`, weights `d(1 + z/2)`,
/// `Z = {z ∈ [0,1]^|A| : Σ z ≤ budget}`.
pub fn build_rpp(instance: &GraphInstance, budget: f64) -> Result<AroProblem> {
    if budget <= 0.0 {
        return Err(AroError::Dimension(format!(
            "budget must be positive, got {budget}"
        )));
    }
    let m = instance.arcs.len();
    let cost_y = AffineVector::new(
        instance.d.clone(),
        instance
            .d
            .iter()
            .enumerate()
            .map(|(k, v)| (k, k, 0.5 * v))
            .collect(),
        m,
    )?;
    let mut constraints = Vec::with_capacity(instance.n + m);
    for j in 0..instance.n {
        let mut w = vec![0.0; m];
        for (k, &(from, to)) in instance.arcs.iter().enumerate() {
            if from == j {
                w[k] += 1.0;
            }
            if to == j {
                w[k] -= 1.0;
            }
        }
        let b = if j == instance.b {
            1.0
        } else if j == instance.e {
            -1.0
        } else {
            0.0
        };
        constraints.push(UncertainConstraint {
            a: AffineVector::constant(vec![], m),
            w: AffineVector::constant(w, m),
            b,
        });
    }
    for k in 0..m {
        let mut w = vec![0.0; m];
        w[k] = -1.0;
        constraints.push(UncertainConstraint {
            a: AffineVector::constant(vec![], m),
            w: AffineVector::constant(w, m),
            b: -1.0,
        });
    }
    Ok(AroProblem {
        uncertainty_dim: m,
        d1: 0,
        d2: m,
        m1: 0,
        m2: m,
        cost_x: AffineVector::constant(vec![], m),
        cost_y,
        constraints,
        base_set: Polyhedron::budget(m, budget),
    })
}

/// Worst-case scenario of the best route sharing at most `⌊θ·|path_lp|⌋`
/// arcs with `path_lp`, over `cell`. `None` when no such route exists.
pub fn heuristic_scenario(
    problem: &AroProblem,
    cell: &Polyhedron,
    theta: f64,
    path_lp: &[usize],
    tol: &Tolerances,
    options: &BnbOptions,
) -> Result<Option<Scenario>> {
    let mut restricted = problem.clone();
    restricted.base_set = cell.clone();
    let mut w = vec![0.0; problem.d2];
    for &k in path_lp {
        w[k] = -1.0;
    }
    restricted.constraints.push(UncertainConstraint {
        a: AffineVector::constant(vec![], problem.uncertainty_dim),
        w: AffineVector::constant(w, problem.uncertainty_dim),
        b: -(theta * path_lp.len() as f64).floor(),
    });
    let partition = Partition::new(cell.clone());
    let result = match solve_bnb(&restricted, &partition, tol, options) {
        Ok(r) => r,
        Err(AroError::Assumption { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let y = &result.incumbent.y[0].1;
    let (_, z) = problem.worst_case_objective(&[], y, cell, tol)?;
    Ok(Some(z))
}

/// Baseline detector: per active cell, the root relaxation's scenario and the
/// worst case of the best route that avoids most of its arcs.
#[derive(Debug, Clone)]
pub struct HeuristicDetector {
    pub instance: GraphInstance,
    pub theta: f64,
    pub bnb: BnbOptions,
}

impl ScenarioDetector for HeuristicDetector {
    fn name(&self) -> String {
        format!("heuristic(theta={})", self.theta)
    }

    fn detect(&self, ctx: &RoundContext<'_>) -> Result<Detection> {
        let mut set = CriticalScenarioSet::default();
        let root = &ctx.result.tree[0].duals;
        for &cell in ctx.active {
            let region = ctx.partition.region(cell)?;
            let from_root = root
                .cells
                .iter()
                .find(|c| c.cell == cell)
                .filter(|c| c.lambda[0] > ctx.tol.lambda_threshold)
                .and_then(|c| {
                    c.u[0]
                        .as_ref()
                        .map(|u| u.iter().map(|v| v / c.lambda[0]).collect())
                });
            let z_lp: Scenario = match from_root {
                Some(z) => z,
                None => {
                    let y = ctx
                        .result
                        .incumbent
                        .y_of(cell)
                        .ok_or(AroError::UnknownCell(cell.0))?;
                    ctx.problem
                        .worst_case_objective(&[], y, &region, ctx.tol)?
                        .1
                }
            };
            set.insert(
                cell,
                CriticalScenario {
                    z: z_lp.clone(),
                    node: 0,
                    row: 0,
                },
                ctx.tol.dedup,
            );
            let weights: Vec<f64> = self
                .instance
                .d
                .iter()
                .zip(&z_lp)
                .map(|(d, z)| d * (1.0 + 0.5 * z))
                .collect();
            let Some(path) = self.instance.shortest_path(&weights, |_| true) else {
                continue;
            };
            if let Some(z) =
                heuristic_scenario(ctx.problem, &region, self.theta, &path, ctx.tol, &self.bnb)?
            {
                set.insert(cell, CriticalScenario { z, node: 0, row: 0 }, ctx.tol.dedup);
            }
        }
        Ok(Detection {
            scenarios: set,
            certifies_stop: false,
        })
    }
}

/// Splitting run on an instance with routes cleaned after every round.
pub fn run_on_instance(
    instance: &GraphInstance,
    budget: f64,
    detector: &dyn ScenarioDetector,
    config: &SplitConfig,
    tol: &Tolerances,
) -> Result<RoundTrace> {
    let problem = build_rpp(instance, budget)?;
    let clean = |s: &mut StaticSolution| {
        for (_, y) in &mut s.y {
            *y = instance.clean_route(y);
        }
    };
    splitter::run_with(&problem, config, detector, tol, &clean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_values: Vec<usize>,
    pub budgets: Vec<f64>,
    pub thetas: Vec<f64>,
    pub instances: usize,
    pub seed: u64,
    pub target_cells: Vec<usize>,
    pub max_rounds: usize,
    pub parallel: bool,
    pub bnb: BnbOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_values: vec![10],
            budgets: vec![3.0],
            thetas: vec![0.0, 0.5, 0.9],
            instances: 100,
            seed: 2017,
            target_cells: vec![2, 10],
            max_rounds: 50,
            parallel: false,
            bnb: BnbOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    Bnb,
    Heuristic(f64),
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Bnb => "bnb",
            Method::Heuristic(_) => "heuristic",
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match self {
            Method::Bnb => None,
            Method::Heuristic(t) => Some(*t),
        }
    }
}

/// One instance under one method, at every cell count up to the largest target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRun {
    pub n: usize,
    pub budget: f64,
    pub method: Method,
    pub index: usize,
    pub instance_seed: u64,
    pub t0: f64,
    /// `(cells, t̄, t̲)` per round.
    pub curve: Vec<(usize, f64, Option<f64>)>,
}

impl InstanceRun {
    /// `(t̄, t̲)` of the last round with at most `cells` leaves.
    pub fn at(&self, cells: usize) -> (f64, Option<f64>) {
        self.curve
            .iter()
            .rev()
            .find(|c| c.0 <= cells)
            .map(|c| (c.1, c.2))
            .unwrap_or((self.t0, None))
    }

    pub fn improvement(&self, cells: usize) -> (f64, Option<f64>) {
        let (t, tu) = self.at(cells);
        let pct = |v: f64| 100.0 * (self.t0 - v) / self.t0;
        (pct(t), tu.map(pct))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub runs: Vec<InstanceRun>,
}

fn methods(config: &ExperimentConfig) -> Vec<Method> {
    let mut out = vec![Method::Bnb];
    out.extend(config.thetas.iter().map(|t| Method::Heuristic(*t)));
    out
}

pub fn run_experiment(config: &ExperimentConfig, tol: &Tolerances) -> Result<ExperimentResult> {
    if config.thetas.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(AroError::Dimension("theta must lie in [0, 1]".into()));
    }
    if config.budgets.iter().any(|b| *b <= 0.0) {
        return Err(AroError::Dimension("budgets must be positive".into()));
    }
    let max_cells = config.target_cells.iter().copied().max().unwrap_or(1);
    let mut jobs = Vec::new();
    for &n in &config.n_values {
        for &budget in &config.budgets {
            for index in 0..config.instances {
                for method in methods(config) {
                    jobs.push((n, budget, index, method));
                }
            }
        }
    }
    let split = SplitConfig {
        max_cells,
        max_rounds: config.max_rounds,
        bnb: config.bnb,
    };
    let job = |&(n, budget, index, method): &(usize, f64, usize, Method)| -> Result<InstanceRun> {
        let seed = instance_seed(config.seed, n, index);
        let instance = GraphInstance::generate(n, seed)?;
        let trace = match method {
            Method::Bnb => run_on_instance(&instance, budget, &BnbDetector, &split, tol)?,
            Method::Heuristic(theta) => {
                let det = HeuristicDetector {
                    instance: instance.clone(),
                    theta,
                    bnb: config.bnb,
                };
                run_on_instance(&instance, budget, &det, &split, tol)?
            }
        };
        info!(
            "N={n} B={budget} #{index} {}: {} rounds, t̄ {} → {}",
            method.label(),
            trace.rounds.len(),
            trace.rounds[0].t_bar,
            trace.final_t_bar()
        );
        Ok(InstanceRun {
            n,
            budget,
            method,
            index,
            instance_seed: seed,
            t0: trace.rounds[0].t_bar,
            curve: trace
                .rounds
                .iter()
                .map(|r| (r.cells, r.t_bar, r.t_underbar))
                .collect(),
        })
    };
    let runs: Vec<InstanceRun> = if config.parallel {
        jobs.par_iter().map(job).collect::<Result<_>>()?
    } else {
        jobs.iter().map(job).collect::<Result<_>>()?
    };
    Ok(ExperimentResult {
        config: config.clone(),
        runs,
    })
}

/// Paired two-sided t-test; the p-value of `mean(a − b) = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return f64::NAN;
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return if mean == 0.0 { 1.0 } else { 0.0 };
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("degrees of freedom are positive");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n: usize,
    pub budget: f64,
    pub method: Method,
    pub target_cells: usize,
    pub instances: usize,
    pub mean_impr_pct: f64,
    pub mean_impr_expost_pct: Option<f64>,
    /// Paired test against the branch-and-bound method; `None` for itself.
    pub p_value_impr: Option<f64>,
    pub p_value_expost: Option<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl ExperimentResult {
    fn group(&self, n: usize, budget: f64, method: Method) -> Vec<&InstanceRun> {
        let mut g: Vec<&InstanceRun> = self
            .runs
            .iter()
            .filter(|r| r.n == n && r.budget == budget && r.method == method)
            .collect();
        g.sort_by_key(|r| r.index);
        g
    }

    fn series(runs: &[&InstanceRun], cells: usize) -> (Vec<f64>, Option<Vec<f64>>) {
        let plain = runs.iter().map(|r| r.improvement(cells).0).collect();
        let expost = runs
            .iter()
            .map(|r| r.improvement(cells).1)
            .collect::<Option<Vec<f64>>>();
        (plain, expost)
    }

    fn summarize(&self, cell_counts: &[usize]) -> Vec<SummaryRow> {
        let mut out = Vec::new();
        for &n in &self.config.n_values {
            for &budget in &self.config.budgets {
                let base = self.group(n, budget, Method::Bnb);
                for method in methods(&self.config) {
                    let runs = self.group(n, budget, method);
                    for &cells in cell_counts {
                        let (plain, expost) = Self::series(&runs, cells);
                        let (bp, be) = Self::series(&base, cells);
                        let is_base = method == Method::Bnb;
                        out.push(SummaryRow {
                            n,
                            budget,
                            method,
                            target_cells: cells,
                            instances: runs.len(),
                            mean_impr_pct: mean(&plain),
                            mean_impr_expost_pct: expost.as_deref().map(mean),
                            p_value_impr: (!is_base).then(|| paired_t_test(&bp, &plain)),
                            p_value_expost: match (&be, &expost) {
                                (Some(b), Some(e)) if !is_base => Some(paired_t_test(b, e)),
                                _ => None,
                            },
                        });
                    }
                }
            }
        }
        out
    }

    /// Means and p-values at every target cell count.
    pub fn summary(&self) -> Vec<SummaryRow> {
        self.summarize(&self.config.target_cells)
    }

    /// Means at every cell count from 1 to the largest target.
    pub fn curves(&self) -> Vec<SummaryRow> {
        let max = self.config.target_cells.iter().copied().max().unwrap_or(1);
        self.summarize(&(1..=max).collect::<Vec<_>>())
    }

    pub fn write_runs_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "N",
            "B",
            "method",
            "theta",
            "target_cells",
            "instance_seed",
            "t0",
            "t_bar",
            "t_underbar",
            "impr_pct",
            "impr_expost_pct",
        ])
        .map_err(csv_err)?;
        for &cells in &self.config.target_cells {
            for r in &self.runs {
                let (t, tu) = r.at(cells);
                let (impr, impr_ex) = r.improvement(cells);
                w.write_record([
                    r.n.to_string(),
                    r.budget.to_string(),
                    r.method.label().to_string(),
                    opt(r.method.theta()),
                    cells.to_string(),
                    r.instance_seed.to_string(),
                    r.t0.to_string(),
                    t.to_string(),
                    opt(tu),
                    impr.to_string(),
                    opt(impr_ex),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    fn write_summary(rows: &[SummaryRow], out: impl Write, cells_header: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "N",
            "B",
            "method",
            "theta",
            cells_header,
            "instances",
            "mean_impr_pct",
            "mean_impr_expost_pct",
            "p_value_impr",
            "p_value_expost",
        ])
        .map_err(csv_err)?;
        for r in rows {
            w.write_record([
                r.n.to_string(),
                r.budget.to_string(),
                r.method.label().to_string(),
                opt(r.method.theta()),
                r.target_cells.to_string(),
                r.instances.to_string(),
                r.mean_impr_pct.to_string(),
                opt(r.mean_impr_expost_pct),
                opt(r.p_value_impr),
                opt(r.p_value_expost),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv(&self, out: impl Write) -> Result<()> {
        Self::write_summary(&self.summary(), out, "target_cells")
    }

    pub fn write_curves_csv(&self, out: impl Write) -> Result<()> {
        Self::write_summary(&self.curves(), out, "cells")
    }

    /// Writes `runs.csv`, `summary.csv` and `curves.csv` into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_runs_csv(std::fs::File::create(dir.join("runs.csv"))?)?;
        self.write_summary_csv(std::fs::File::create(dir.join("summary.csv"))?)?;
        self.write_curves_csv(std::fs::File::create(dir.join("curves.csv"))?)?;
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> AroError {
    AroError::Io(std::io::Error::other(e))
}
