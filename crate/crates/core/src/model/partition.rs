use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{AroError, Result};
use crate::model::polyhedron::{dot, Halfspace, Hyperplane, Polyhedron, Support};
use crate::tolerance::Tolerances;

/// Identifier of a cell in a [`Partition`]. Ids are assigned in creation
/// order, so a smaller id means an older cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId(pub usize);

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: CellId,
    pub parent: Option<CellId>,
    /// The halfspace added to the parent's region; `None` for the root.
    pub cut: Option<Halfspace>,
    /// Round in which the cell was created.
    pub generation: usize,
    pub children: Option<(CellId, CellId)>,
}

/// A binary tree of halfspace cuts over a base uncertainty set. The leaves
/// form the current partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    base: Polyhedron,
    cells: Vec<Cell>,
}

impl Partition {
    pub fn new(base: Polyhedron) -> Self {
        Self {
            base,
            cells: vec![Cell {
                id: CellId(0),
                parent: None,
                cut: None,
                generation: 0,
                children: None,
            }],
        }
    }

    pub fn base(&self) -> &Polyhedron {
        &self.base
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, id: CellId) -> Result<&Cell> {
        self.cells.get(id.0).ok_or(AroError::UnknownCell(id.0))
    }

    /// Leaf ids in ascending order.
    pub fn leaves(&self) -> Vec<CellId> {
        self.cells
            .iter()
            .filter(|c| c.children.is_none())
            .map(|c| c.id)
            .collect()
    }

    pub fn num_leaves(&self) -> usize {
        self.cells.iter().filter(|c| c.children.is_none()).count()
    }

    pub fn is_leaf(&self, id: CellId) -> bool {
        self.cells.get(id.0).is_some_and(|c| c.children.is_none())
    }

    /// Cuts from the root down to `id`.
    pub fn cuts(&self, id: CellId) -> Result<Vec<&Halfspace>> {
        let mut out = Vec::new();
        let mut cur = self.cell(id)?;
        while let Some(parent) = cur.parent {
            out.extend(cur.cut.as_ref());
            cur = self.cell(parent)?;
        }
        out.reverse();
        Ok(out)
    }

    /// The base rows followed by one row per ancestor cut, root first.
    pub fn region(&self, id: CellId) -> Result<Polyhedron> {
        let mut rows = self.base.rows().to_vec();
        let mut rhs = self.base.rhs().to_vec();
        for h in self.cuts(id)? {
            rows.push(h.normal.clone());
            rhs.push(h.offset);
        }
        Polyhedron::new(self.base.dim(), rows, rhs)
    }

    /// Splits leaf `id` along `plane`. The first child keeps
    /// `normal·z ≤ offset`, the second `normal·z ≥ offset`.
    ///
    /// Both sides must contain points strictly off the plane; otherwise the
    /// split is rejected as degenerate.
    pub fn refine(
        &self,
        id: CellId,
        plane: &Hyperplane,
        generation: usize,
        tol: &Tolerances,
    ) -> Result<Partition> {
        if !self.is_leaf(id) {
            return match self.cell(id) {
                Ok(_) => Err(AroError::NotALeaf(id.0)),
                Err(e) => Err(e),
            };
        }
        if plane.normal.len() != self.base.dim() {
            return Err(AroError::Dimension(format!(
                "plane normal has length {} but the uncertainty dimension is {}",
                plane.normal.len(),
                self.base.dim()
            )));
        }
        if plane.normal.iter().all(|v| *v == 0.0) {
            return Err(AroError::DegenerateSplit {
                cell: id.0,
                detail: "zero normal".into(),
            });
        }
        let region = self.region(id)?;
        let margin = tol.feas * (1.0 + plane.offset.abs());
        let hi = match region.support(&plane.normal, tol)? {
            Support::Finite { value, .. } => value,
            _ => {
                return Err(AroError::Internal(format!(
                    "cell {id} is empty or unbounded"
                )));
            }
        };
        let neg: Vec<f64> = plane.normal.iter().map(|v| -v).collect();
        let lo = match region.support(&neg, tol)? {
            Support::Finite { value, .. } => -value,
            _ => {
                return Err(AroError::Internal(format!(
                    "cell {id} is empty or unbounded"
                )));
            }
        };
        if lo >= plane.offset - margin {
            return Err(AroError::DegenerateSplit {
                cell: id.0,
                detail: format!(
                    "nothing below the plane (min {lo:.3e}, offset {:.3e})",
                    plane.offset
                ),
            });
        }
        if hi <= plane.offset + margin {
            return Err(AroError::DegenerateSplit {
                cell: id.0,
                detail: format!(
                    "nothing above the plane (max {hi:.3e}, offset {:.3e})",
                    plane.offset
                ),
            });
        }

        let mut out = self.clone();
        let below = CellId(out.cells.len());
        let above = CellId(out.cells.len() + 1);
        for (cid, cut) in [(below, plane.below()), (above, plane.above())] {
            out.cells.push(Cell {
                id: cid,
                parent: Some(id),
                cut: Some(cut),
                generation,
                children: None,
            });
        }
        out.cells[id.0].children = Some((below, above));
        Ok(out)
    }

    /// The smallest-id leaf whose region contains `z`.
    pub fn locate(&self, z: &[f64], tol: &Tolerances) -> Result<CellId> {
        if !self.base.contains(z, tol) {
            return Err(AroError::OutsideUncertaintySet);
        }
        self.leaves()
            .into_iter()
            .find(|&id| {
                self.cuts(id)
                    .map(|cuts| {
                        cuts.iter().all(|h| {
                            dot(&h.normal, z) <= h.offset + tol.feas * (1.0 + h.offset.abs())
                        })
                    })
                    .unwrap_or(false)
            })
            .ok_or_else(|| AroError::Internal("no leaf contains a point of the base set".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Partition {
        Partition::new(Polyhedron::bounding_box(&[0.0, 0.0], &[1.0, 1.0]))
    }

    fn vertical(offset: f64) -> Hyperplane {
        Hyperplane {
            normal: vec![1.0, 0.0],
            offset,
        }
    }

    #[test]
    fn square_split_in_half() {
        let t = Tolerances::default();
        let p = square().refine(CellId(0), &vertical(0.5), 1, &t).unwrap();
        assert_eq!(p.leaves(), vec![CellId(1), CellId(2)]);
        let left = p.region(CellId(1)).unwrap();
        assert_eq!(left.num_rows(), 5);
        assert!(left.contains(&[0.25, 0.9], &t));
        assert!(!left.contains(&[0.75, 0.9], &t));
        assert_eq!(p.locate(&[0.25, 0.9], &t).unwrap(), CellId(1));
        assert_eq!(p.locate(&[0.75, 0.1], &t).unwrap(), CellId(2));
    }

    #[test]
    fn boundary_point_goes_to_smallest_leaf() {
        let t = Tolerances::default();
        let p = square().refine(CellId(0), &vertical(0.5), 1, &t).unwrap();
        assert_eq!(p.locate(&[0.5, 0.3], &t).unwrap(), CellId(1));
    }

    #[test]
    fn plane_outside_cell_is_degenerate() {
        let t = Tolerances::default();
        let err = square()
            .refine(CellId(0), &vertical(2.0), 1, &t)
            .unwrap_err();
        assert!(matches!(err, AroError::DegenerateSplit { .. }));
        let err = square()
            .refine(CellId(0), &vertical(1.0), 1, &t)
            .unwrap_err();
        assert!(matches!(err, AroError::DegenerateSplit { .. }));
    }

    #[test]
    fn only_leaves_can_be_refined() {
        let t = Tolerances::default();
        let p = square().refine(CellId(0), &vertical(0.5), 1, &t).unwrap();
        assert!(matches!(
            p.refine(CellId(0), &vertical(0.25), 2, &t),
            Err(AroError::NotALeaf(0))
        ));
        assert!(matches!(
            p.refine(CellId(9), &vertical(0.25), 2, &t),
            Err(AroError::UnknownCell(9))
        ));
    }

    #[test]
    fn outside_point_is_rejected() {
        let t = Tolerances::default();
        assert!(matches!(
            square().locate(&[1.5, 0.0], &t),
            Err(AroError::OutsideUncertaintySet)
        ));
    }

    #[test]
    fn nested_regions_accumulate_cuts() {
        let t = Tolerances::default();
        let p = square()
            .refine(CellId(0), &vertical(0.5), 1, &t)
            .unwrap()
            .refine(
                CellId(2),
                &Hyperplane {
                    normal: vec![0.0, 1.0],
                    offset: 0.5,
                },
                2,
                &t,
            )
            .unwrap();
        assert_eq!(p.leaves(), vec![CellId(1), CellId(3), CellId(4)]);
        let cuts = p.cuts(CellId(4)).unwrap();
        assert_eq!(cuts.len(), 2);
        assert_eq!(cuts[0].normal, vec![-1.0, 0.0]);
        assert_eq!(cuts[1].normal, vec![-0.0, -1.0]);
        assert_eq!(p.locate(&[0.9, 0.9], &t).unwrap(), CellId(4));
    }
}
