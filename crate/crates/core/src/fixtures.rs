//! Small built-in problems with hand-checkable answers.

use crate::model::{AffineVector, AroProblem, Polyhedron, UncertainConstraint};
use crate::routeplan::{build_rpp, GraphInstance};

/// `min t` s.t. `t ≥ z·y` for all `z ∈ [0, 1]`, `y ≥ 1`, `y` continuous.
/// Optimum `t = 1` at `y = 1`, worst case `z = 1`.
pub fn toy_1d() -> AroProblem {
    AroProblem {
        uncertainty_dim: 1,
        d1: 0,
        d2: 1,
        m1: 0,
        m2: 0,
        cost_x: AffineVector::constant(vec![], 1),
        cost_y: AffineVector::new(vec![0.0], vec![(0, 0, 1.0)], 1).expect("valid entries"),
        constraints: vec![UncertainConstraint {
            a: AffineVector::constant(vec![], 1),
            w: AffineVector::constant(vec![1.0], 1),
            b: 1.0,
        }],
        base_set: Polyhedron::bounding_box(&[0.0], &[1.0]),
    }
}

/// `min y₁ + y₂` s.t. `z·y₁ + (1 − z)·y₂ ≥ 1.5` for all `z ∈ [0, 1]`,
/// `y ∈ ℤ²₊`. Static optimum 4 at `y = (2, 2)`; splitting `[0, 1]` at
/// `z = 1/2` lowers it to 3.
pub fn integer_pair() -> AroProblem {
    AroProblem {
        uncertainty_dim: 1,
        d1: 0,
        d2: 2,
        m1: 0,
        m2: 2,
        cost_x: AffineVector::constant(vec![], 1),
        cost_y: AffineVector::constant(vec![1.0, 1.0], 1),
        constraints: vec![UncertainConstraint {
            a: AffineVector::constant(vec![], 1),
            w: AffineVector::new(vec![0.0, 1.0], vec![(0, 0, 1.0), (1, 0, -1.0)], 1)
                .expect("valid entries"),
            b: 1.5,
        }],
        base_set: Polyhedron::bounding_box(&[0.0], &[1.0]),
    }
}

/// Three nodes, arcs `0→2` (length 3), `0→1` (2) and `1→2` (1.4), one unit
/// of budget. The direct route has worst case 4.5, the two-arc route 4.4;
/// the LP relaxation mixes them and sees a single averaged scenario.
pub fn two_route_graph() -> (GraphInstance, AroProblem) {
    let instance = GraphInstance {
        n: 3,
        coords: vec![(0.0, 0.0), (2.0, 0.0), (3.0, 0.0)],
        arcs: vec![(0, 2), (0, 1), (1, 2)],
        d: vec![3.0, 2.0, 1.4],
        b: 0,
        e: 2,
        seed: 0,
    };
    let problem = build_rpp(&instance, 1.0).expect("positive budget");
    (instance, problem)
}
