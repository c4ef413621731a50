use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::grid::{BoundaryConditionSet, StructuredGrid};

/// Marks active elements that are connected, through shared element edges,
/// to an element touching a prescribed DOF. Active elements left unmarked
/// form floating islands with no load path.
pub fn detect_floating_regions(grid: &StructuredGrid, active: &[bool], bcs: &BoundaryConditionSet) -> Vec<bool> {
    assert_eq!(active.len(), grid.element_count());
    let fixed = bcs.fixed_mask(grid.dof_count());
    let mut connected = vec![false; grid.element_count()];
    let mut queue = VecDeque::new();
    for e in (0..grid.element_count()).filter(|&e| active[e]) {
        if grid.element_dofs(e).iter().any(|&d| fixed[d]) {
            connected[e] = true;
            queue.push_back(e);
        }
    }
    while let Some(e) = queue.pop_front() {
        for nb in grid.element_neighbors(e) {
            if active[nb] && !connected[nb] {
                connected[nb] = true;
                queue.push_back(nb);
            }
        }
    }
    connected
}
