//! Problem data, polyhedral uncertainty sets and their partitions.

mod io;
pub mod partition;
pub mod polyhedron;
pub mod problem;

pub use partition::{Cell, CellId, Partition};
pub use polyhedron::{Halfspace, Hyperplane, Polyhedron, Scenario, Support};
pub use problem::{AffineVector, AroProblem, UncertainConstraint, ValidationReport};
