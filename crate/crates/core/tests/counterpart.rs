mod common;

use aro_split::counterpart::{
    build_counterpart, check_dual_feasibility, unpack_duals, BranchingConstraint, Layout, Var,
};
use aro_split::fixtures;
use aro_split::lp::{solve_lp, LinearRow, LpOutcome, StandardFormLP};
use aro_split::model::{AffineVector, AroProblem, Hyperplane, Partition};
use aro_split::verify::random_refinement;
use common::{random_aro, tol};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn continuous(mut p: AroProblem) -> AroProblem {
    p.m1 = 0;
    p.m2 = 0;
    p
}

fn strip(a: &AffineVector) -> AffineVector {
    AffineVector::constant(a.nominal().to_vec(), a.uncertainty_dim())
}

/// The 0/1 points of the base set. Box and integral budget sets have no
/// other vertices.
fn cube_vertices(p: &AroProblem) -> Vec<Vec<f64>> {
    let l = p.uncertainty_dim;
    (0..1usize << l)
        .map(|mask| (0..l).map(|k| ((mask >> k) & 1) as f64).collect::<Vec<_>>())
        .filter(|z| p.base_set.contains(z, &tol()))
        .collect()
}

/// Single-cell robust LP written out scenario by scenario over the vertices:
/// `min t` with `t ≥ c(z)·x + q(z)·y` and `a(z)·x + w(z)·y ≥ b` at each vertex.
fn vertex_robust_lp(p: &AroProblem) -> f64 {
    let n = 1 + p.d1 + p.d2;
    let mut objective = vec![0.0; n];
    objective[0] = 1.0;
    let mut nonneg = vec![true; n];
    nonneg[0] = false;
    let mut lp = StandardFormLP::new(objective, nonneg);
    for z in cube_vertices(p) {
        let mut row = vec![0.0; n];
        row[0] = 1.0;
        for (k, v) in p.cost_x.eval(&z).iter().enumerate() {
            row[1 + k] = -v;
        }
        for (k, v) in p.cost_y.eval(&z).iter().enumerate() {
            row[1 + p.d1 + k] = -v;
        }
        lp.ineq_rows.push(LinearRow::dense(&row, 0.0));
        for con in &p.constraints {
            let mut row = vec![0.0; n];
            for (k, v) in con.a.eval(&z).iter().enumerate() {
                row[1 + k] = *v;
            }
            for (k, v) in con.w.eval(&z).iter().enumerate() {
                row[1 + p.d1 + k] = *v;
            }
            lp.ineq_rows.push(LinearRow::dense(&row, con.b));
        }
    }
    solve_lp(&lp, &tol()).unwrap().objective()
}

fn counterpart_value(p: &AroProblem, part: &Partition, layout: Layout) -> f64 {
    let cp = build_counterpart(p, part, &[], layout).unwrap();
    solve_lp(&cp.lp, &tol()).unwrap().objective()
}

#[test]
fn toy_counterpart_solution() {
    let p = fixtures::toy_1d();
    let part = Partition::new(p.base_set.clone());
    let cp = build_counterpart(&p, &part, &[], Layout::Full).unwrap();
    let out = solve_lp(&cp.lp, &tol()).unwrap();
    let LpOutcome::Optimal(s) = &out else {
        panic!("{out:?}")
    };
    assert!((s.objective - 1.0).abs() < 1e-9);
    let sol = cp.static_solution(&s.primal);
    assert!((sol.y[0].1[0] - 1.0).abs() < 1e-9);
    let duals = unpack_duals(&out, &cp.index).unwrap();
    let c = &duals.cells[0];
    assert!((c.lambda[0] - 1.0).abs() < 1e-9);
    let u0 = c.u[0].as_ref().expect("objective row is uncertain");
    assert!((u0[0] - 1.0).abs() < 1e-9, "u_0 = {u0:?}");
    check_dual_feasibility(&p, &part, &[], &duals, &tol()).unwrap();
}

#[test]
fn toy_split_puts_the_objective_weight_on_the_upper_cell() {
    let p = fixtures::toy_1d();
    let root = Partition::new(p.base_set.clone());
    let half = Hyperplane {
        normal: vec![1.0],
        offset: 0.5,
    };
    let part = root.refine(root.leaves()[0], &half, 1, &tol()).unwrap();
    let cp = build_counterpart(&p, &part, &[], Layout::Reduced).unwrap();
    let out = solve_lp(&cp.lp, &tol()).unwrap();
    assert!((out.objective() - 1.0).abs() < 1e-9);
    let duals = unpack_duals(&out, &cp.index).unwrap();
    let total: f64 = duals.cells.iter().map(|c| c.lambda[0]).sum();
    assert!((total - 1.0).abs() < 1e-9);
    let upper = part.locate(&[1.0], &tol()).unwrap();
    let on_upper: f64 = duals
        .cells
        .iter()
        .filter(|c| c.cell == upper)
        .map(|c| c.lambda[0])
        .sum();
    assert!((on_upper - 1.0).abs() < 1e-9, "{duals:?}");
}

#[test]
fn branching_rows_bound_integer_variables() {
    let p = fixtures::integer_pair();
    let part = Partition::new(p.base_set.clone());
    let leaf = part.leaves()[0];
    let branches = vec![
        BranchingConstraint::upper(Var::Y(leaf, 0), 1.0),
        BranchingConstraint::lower(Var::Y(leaf, 1), 2.0),
    ];
    let cp = build_counterpart(&p, &part, &branches, Layout::Reduced).unwrap();
    let out = solve_lp(&cp.lp, &tol()).unwrap();
    // At z = 1 the constraint reads y₁ ≥ 1.5.
    assert!(matches!(out, LpOutcome::Infeasible(_)), "{out:?}");
    let duals = unpack_duals(&out, &cp.index).unwrap();
    check_dual_feasibility(&p, &part, &branches, &duals, &tol()).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn single_cell_matches_vertex_formulation(seed in any::<u64>()) {
        let p = continuous(random_aro(&mut ChaCha8Rng::seed_from_u64(seed), 0));
        let part = Partition::new(p.base_set.clone());
        let oracle = vertex_robust_lp(&p);
        let value = counterpart_value(&p, &part, Layout::Reduced);
        prop_assert!((oracle - value).abs() <= 1e-6 * oracle.abs().max(1.0), "oracle {} counterpart {}", oracle, value);
    }

    #[test]
    fn certain_data_gives_the_nominal_lp(seed in any::<u64>()) {
        let mut p = continuous(random_aro(&mut ChaCha8Rng::seed_from_u64(seed), 0));
        p.cost_x = strip(&p.cost_x);
        p.cost_y = strip(&p.cost_y);
        for c in &mut p.constraints {
            c.a = strip(&c.a);
            c.w = strip(&c.w);
        }
        let n = p.d1 + p.d2;
        let cost: Vec<f64> = p.cost_x.nominal().iter().chain(p.cost_y.nominal()).copied().collect();
        let mut nominal = StandardFormLP::new(cost, vec![true; n]);
        for c in &p.constraints {
            let row: Vec<f64> = c.a.nominal().iter().chain(c.w.nominal()).copied().collect();
            nominal.ineq_rows.push(LinearRow::dense(&row, c.b));
        }
        let expected = solve_lp(&nominal, &tol()).unwrap().objective();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let part = random_refinement(&Partition::new(p.base_set.clone()), &mut rng, &tol()).unwrap();
        for layout in [Layout::Reduced, Layout::Full] {
            let value = counterpart_value(&p, &part, layout);
            prop_assert!((expected - value).abs() <= 1e-7, "nominal {} counterpart {}", expected, value);
        }
    }

    #[test]
    fn layouts_agree_and_duals_are_feasible(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = continuous(random_aro(&mut rng, 0));
        let mut part = Partition::new(p.base_set.clone());
        for _ in 0..2 {
            part = random_refinement(&part, &mut rng, &tol()).unwrap();
        }
        let reduced = counterpart_value(&p, &part, Layout::Reduced);
        let full = counterpart_value(&p, &part, Layout::Full);
        prop_assert!((reduced - full).abs() <= 1e-7 * reduced.abs().max(1.0), "reduced {} full {}", reduced, full);

        let cp = build_counterpart(&p, &part, &[], Layout::Reduced).unwrap();
        let out = solve_lp(&cp.lp, &tol()).unwrap();
        let duals = unpack_duals(&out, &cp.index).unwrap();
        prop_assert_eq!(check_dual_feasibility(&p, &part, &[], &duals, &tol()), Ok(()));
        let gap = (duals.dual_objective(&p, &[]) - out.objective()).abs();
        prop_assert!(gap <= 1e-6, "duality gap {}", gap);
    }

    /// More cells can only help: the value over a refinement is at most the
    /// value over its parent partition.
    #[test]
    fn refinement_never_raises_the_value(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = continuous(random_aro(&mut rng, 0));
        let coarse = random_refinement(&Partition::new(p.base_set.clone()), &mut rng, &tol()).unwrap();
        let fine = random_refinement(&coarse, &mut rng, &tol()).unwrap();
        let a = counterpart_value(&p, &coarse, Layout::Reduced);
        let b = counterpart_value(&p, &fine, Layout::Reduced);
        prop_assert!(b <= a + 1e-7, "coarse {} fine {}", a, b);
    }
}
