use alloc::vec;
use alloc::vec::Vec;

use super::banded::BandedMatrix;
use super::element::ElementMatrix;
use super::grid::StructuredGrid;

/// Assembles per-element tangents of the active elements into the global
/// banded stiffness matrix. Elements are visited in ascending index order,
/// so identical inputs give bitwise-identical matrices.
pub fn assemble(grid: &StructuredGrid, active: &[bool], element_tangents: &[ElementMatrix]) -> BandedMatrix {
    assert_eq!(element_tangents.len(), grid.element_count());
    assemble_with(grid, active, |e, k| *k = element_tangents[e])
}

/// Same as [`assemble`], with element matrices produced on the fly by `tangent`.
pub fn assemble_with<F>(grid: &StructuredGrid, active: &[bool], mut tangent: F) -> BandedMatrix
where
    F: FnMut(usize, &mut ElementMatrix),
{
    assert_eq!(active.len(), grid.element_count());
    let mut k = BandedMatrix::zeros(grid.dof_count(), grid.half_bandwidth());
    let mut ke = [[0.0; 8]; 8];
    for e in (0..grid.element_count()).filter(|&e| active[e]) {
        tangent(e, &mut ke);
        let dofs = grid.element_dofs(e);
        for (a, &i) in dofs.iter().enumerate() {
            for (b, &j) in dofs.iter().enumerate() {
                if j <= i {
                    k.add(i, j, ke[a][b]);
                }
            }
        }
    }
    k
}

/// DOFs not touched by any active element.
pub fn orphan_dofs(grid: &StructuredGrid, active: &[bool]) -> Vec<bool> {
    let mut orphan = vec![true; grid.dof_count()];
    for e in (0..grid.element_count()).filter(|&e| active[e]) {
        for d in grid.element_dofs(e) {
            orphan[d] = false;
        }
    }
    orphan
}

/// Gathers the 8 element DOF values from a global vector.
pub fn gather(grid: &StructuredGrid, e: usize, u: &[f64]) -> [f64; 8] {
    grid.element_dofs(e).map(|d| u[d])
}
