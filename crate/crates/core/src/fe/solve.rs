use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;

use super::banded::BandedMatrix;
use super::grid::BoundaryConditionSet;
use crate::error::{Error, Result};

/// Displacements and residual diagnostics of a constrained linear solve.
#[derive(Debug, Clone)]
pub struct Solution {
    pub u: Vec<f64>,
    /// `‖b − A u‖ / ‖b‖` of the reduced system after refinement.
    pub relative_residual: f64,
}

/// Solves `K u = f` subject to prescribed DOFs in `bcs`.
///
/// Prescribed DOFs take their values exactly. DOFs flagged in `orphan_dofs`
/// that are not prescribed are pinned to zero. The remaining system must be
/// positive definite; otherwise [`Error::SingularSystem`] is returned, which
/// usually means a floating island of material survived.
pub fn constrain_and_solve(
    k: &BandedMatrix,
    f: &[f64],
    bcs: &BoundaryConditionSet,
    orphan_dofs: &[bool],
) -> Result<Vec<f64>> {
    constrain_and_solve_detailed(k, f, bcs, orphan_dofs).map(|s| s.u)
}

pub fn constrain_and_solve_detailed(
    k: &BandedMatrix,
    f: &[f64],
    bcs: &BoundaryConditionSet,
    orphan_dofs: &[bool],
) -> Result<Solution> {
    let n = k.dim();
    if f.len() != n || orphan_dofs.len() != n {
        return Err(Error::shape("constrain_and_solve", &[n], &[f.len()]));
    }
    bcs.validate(n)?;

    let mut prescribed: Vec<Option<f64>> = alloc::vec![None; n];
    for &(d, v) in &bcs.fixed_dofs {
        prescribed[d] = Some(v);
    }
    for d in 0..n {
        if orphan_dofs[d] && prescribed[d].is_none() {
            prescribed[d] = Some(0.0);
        }
    }

    let mut rhs = f.to_vec();
    let mut reduced = k.clone();
    for d in (0..n).filter(|&d| prescribed[d].is_some()) {
        let v = prescribed[d].unwrap_or(0.0);
        if v != 0.0 {
            for (i, kij) in k.column(d) {
                if prescribed[i].is_none() {
                    rhs[i] -= kij * v;
                }
            }
        }
    }
    for d in 0..n {
        if let Some(v) = prescribed[d] {
            reduced.isolate(d, 1.0);
            rhs[d] = v;
        }
    }

    let factor = reduced.clone().cholesky()?;
    let mut u = factor.solve(&rhs);

    // one step of iterative refinement
    let r: Vec<f64> = reduced.mul_vec(&u).iter().zip(&rhs).map(|(a, b)| b - a).collect();
    let du = factor.solve(&r);
    for (ui, di) in u.iter_mut().zip(&du) {
        *ui += di;
    }
    for d in 0..n {
        if let Some(v) = prescribed[d] {
            u[d] = v;
        }
    }

    let r = reduced.mul_vec(&u);
    let num = r.iter().zip(&rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let den = rhs.iter().map(|b| b * b).sum::<f64>().sqrt();
    let relative_residual = if den > 0.0 { num / den } else { num };
    Ok(Solution { u, relative_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::assembly::{assemble, orphan_dofs};
    use crate::fe::element::element_stiffness;
    use crate::fe::grid::{ElasticProperties, StructuredGrid};
    use alloc::vec;

    #[test]
    fn zero_load_homogeneous_bcs_gives_zero() {
        let g = StructuredGrid::new(3, 3, 1.0).unwrap();
        let ke = element_stiffness(&ElasticProperties { e: 1.0, nu: 0.3 }, 1.0);
        let active = vec![true; 9];
        let k = assemble(&g, &active, &vec![ke; 9]);
        let bcs = BoundaryConditionSet::clamp_bottom(&g);
        let u = constrain_and_solve(&k, &vec![0.0; g.dof_count()], &bcs, &orphan_dofs(&g, &active)).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_element_matches_dense_four_dof_solve() {
        let g = StructuredGrid::new(1, 1, 1.0).unwrap();
        let ke = element_stiffness(&ElasticProperties { e: 1.0, nu: 0.3 }, 1.0);
        let k = assemble(&g, &[true], &[ke]);
        let mut bcs = BoundaryConditionSet::clamp_bottom(&g);
        bcs.point_loads.push((2 * g.node(1, 1) + 1, 1.0));
        let u = constrain_and_solve(&k, &bcs.load_vector(8), &bcs, &[false; 8]).unwrap();

        // free dofs 4..8 (top nodes); solve the 4×4 block by Gaussian elimination
        let mut a = [[0.0; 5]; 4];
        for i in 0..4 {
            for j in 0..4 {
                a[i][j] = ke[4 + i][4 + j];
            }
        }
        a[1][4] = 1.0; // node 2 y-dof is local index 5 → free index 1
        for c in 0..4 {
            let p = (c..4).max_by(|&x, &y| a[x][c].abs().partial_cmp(&a[y][c].abs()).unwrap()).unwrap();
            a.swap(c, p);
            for r in 0..4 {
                if r != c {
                    let m = a[r][c] / a[c][c];
                    for q in c..5 {
                        a[r][q] -= m * a[c][q];
                    }
                }
            }
        }
        // local element dofs 4..8 belong to nodes 3 and 2 of the grid
        let global = [6, 7, 4, 5];
        for i in 0..4 {
            assert!((u[global[i]] - a[i][4] / a[i][i]).abs() < 1e-12);
        }
        assert!(u[..4].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prescribed_stretch_has_positive_reaction() {
        let g = StructuredGrid::new(4, 4, 1.0).unwrap();
        let ke = element_stiffness(&ElasticProperties { e: 10.0, nu: 0.3 }, 1.0);
        let active = vec![true; 16];
        let k = assemble(&g, &active, &vec![ke; 16]);
        let mut bcs = BoundaryConditionSet::clamp_bottom(&g);
        let d = 0.1;
        let top: Vec<usize> = g.top_nodes().collect();
        for &n in &top {
            bcs.fixed_dofs.push((2 * n, 0.0));
            bcs.fixed_dofs.push((2 * n + 1, d));
        }
        let sol = constrain_and_solve_detailed(&k, &vec![0.0; g.dof_count()], &bcs, &orphan_dofs(&g, &active)).unwrap();
        assert!(sol.relative_residual <= 1e-10);
        let reaction = k.mul_vec(&sol.u);
        let fy: f64 = top.iter().map(|&n| reaction[2 * n + 1]).sum();
        assert!(fy > 0.0);
        for &n in &top {
            assert_eq!(sol.u[2 * n + 1], d);
        }
    }

    #[test]
    fn floating_island_is_singular() {
        let g = StructuredGrid::new(3, 3, 1.0).unwrap();
        let ke = element_stiffness(&ElasticProperties { e: 1.0, nu: 0.3 }, 1.0);
        let mut active = vec![false; 9];
        active[4] = true;
        let k = assemble(&g, &active, &vec![ke; 9]);
        let bcs = BoundaryConditionSet::clamp_bottom(&g);
        let r = constrain_and_solve(&k, &vec![0.0; g.dof_count()], &bcs, &orphan_dofs(&g, &active));
        assert!(matches!(r, Err(Error::SingularSystem { .. })));
    }
}
