#[allow(unused_imports)]
use num_traits::Float as _;

use super::grid::ElasticProperties;

pub type ElementMatrix = [[f64; 8]; 8];

/// Strain-displacement matrix (3×8) at one integration point.
pub type StrainMatrix = [[f64; 8]; 3];

const NODE_SIGNS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

/// 2×2 Gauss points in natural coordinates, same ordering as the element nodes.
pub fn gauss_points() -> [(f64, f64); 4] {
    let g = 1.0 / 3.0_f64.sqrt();
    NODE_SIGNS.map(|(sx, sy)| (sx * g, sy * g))
}

/// Strain-displacement matrix of a square bilinear element of edge `h`
/// evaluated at natural coordinates `(xi, eta)`.
pub fn strain_matrix(h: f64, xi: f64, eta: f64) -> StrainMatrix {
    let mut b = [[0.0; 8]; 3];
    for (a, &(sx, sy)) in NODE_SIGNS.iter().enumerate() {
        let dndx = 0.25 * sx * (1.0 + sy * eta) * 2.0 / h;
        let dndy = 0.25 * sy * (1.0 + sx * xi) * 2.0 / h;
        b[0][2 * a] = dndx;
        b[1][2 * a + 1] = dndy;
        b[2][2 * a] = dndy;
        b[2][2 * a + 1] = dndx;
    }
    b
}

/// Strain-displacement matrices at the four Gauss points.
pub fn gauss_strain_matrices(h: f64) -> [StrainMatrix; 4] {
    gauss_points().map(|(xi, eta)| strain_matrix(h, xi, eta))
}

/// Jacobian determinant times the unit Gauss weight.
pub fn gauss_weight(h: f64) -> f64 {
    0.25 * h * h
}

/// Accumulates `w · Bᵀ D B` into `k`.
pub fn add_btdb(k: &mut ElementMatrix, b: &StrainMatrix, d: &[[f64; 3]; 3], w: f64) {
    let mut db = [[0.0; 8]; 3];
    for i in 0..3 {
        for j in 0..8 {
            db[i][j] = (0..3).map(|m| d[i][m] * b[m][j]).sum();
        }
    }
    for i in 0..8 {
        for j in 0..8 {
            let mut s = 0.0;
            for m in 0..3 {
                s += b[m][i] * db[m][j];
            }
            k[i][j] += w * s;
        }
    }
}

/// Plane-stress stiffness of one square bilinear element, unit thickness,
/// integrated with 2×2 Gauss quadrature.
pub fn element_stiffness(props: &ElasticProperties, h: f64) -> ElementMatrix {
    let d = props.plane_stress_matrix();
    let w = gauss_weight(h);
    let mut k = [[0.0; 8]; 8];
    for b in gauss_strain_matrices(h) {
        add_btdb(&mut k, &b, &d, w);
    }
    // Symmetrize away round-off so assembly stays exactly symmetric.
    for i in 0..8 {
        for j in 0..i {
            let s = 0.5 * (k[i][j] + k[j][i]);
            k[i][j] = s;
            k[j][i] = s;
        }
    }
    k
}

pub fn scale(k: &ElementMatrix, s: f64) -> ElementMatrix {
    k.map(|row| row.map(|v| v * s))
}

/// Strain `(ε11, ε22, γ12)` at an integration point.
pub fn strain_at(b: &StrainMatrix, ue: &[f64; 8]) -> [f64; 3] {
    core::array::from_fn(|i| (0..8).map(|j| b[i][j] * ue[j]).sum())
}

pub fn quadratic_form(k: &ElementMatrix, u: &[f64; 8]) -> f64 {
    let mut s = 0.0;
    for i in 0..8 {
        let mut row = 0.0;
        for j in 0..8 {
            row += k[i][j] * u[j];
        }
        s += u[i] * row;
    }
    s
}
