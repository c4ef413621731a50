#[allow(unused_imports)]
use num_traits::Float as _;

use super::{PlasticMaterial, PlasticState};
use crate::error::{Error, Result};
use crate::fe::ElasticProperties;

pub type Matrix3 = [[f64; 3]; 3];

const MAX_ITERATIONS: usize = 50;
const SQRT_3_2: f64 = 1.224_744_871_391_589;
const SQRT_2_3: f64 = 0.816_496_580_927_726;

/// Plane-stress elasticity matrix mapping `(ε11, ε22, γ12)` to `(σ11, σ22, σ12)`.
pub fn elastic_tangent(props: &ElasticProperties) -> Matrix3 {
    props.plane_stress_matrix()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnMapOutput {
    pub stress: [f64; 3],
    pub state: PlasticState,
    /// Algorithmic tangent `dσ/dε`.
    pub tangent: Matrix3,
    /// Plastic multiplier of this update; zero for elastic steps.
    pub delta_gamma: f64,
}

fn mat_vec(a: &Matrix3, x: &[f64; 3]) -> [f64; 3] {
    core::array::from_fn(|i| a[i][0] * x[0] + a[i][1] * x[1] + a[i][2] * x[2])
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `P σ`, the gradient of `½ σᵀPσ` in engineering-shear Voigt form.
fn project(s: &[f64; 3]) -> [f64; 3] {
    [(2.0 * s[0] - s[1]) / 3.0, (2.0 * s[1] - s[0]) / 3.0, 2.0 * s[2]]
}

/// Eigenvalues of `(D⁻¹ + ΔγP)⁻¹` on the shared eigenbasis
/// `(1,1,0)/√2`, `(−1,1,0)/√2`, `(0,0,1)`.
fn xi_eigenvalues(props: &ElasticProperties, dg: f64) -> [f64; 3] {
    let bulk = props.e / (1.0 - props.nu);
    let g = props.shear_modulus();
    [bulk / (1.0 + bulk * dg / 3.0), 2.0 * g / (1.0 + 2.0 * g * dg), g / (1.0 + 2.0 * g * dg)]
}

fn xi_matrix(props: &ElasticProperties, dg: f64) -> Matrix3 {
    let [l1, l2, l3] = xi_eigenvalues(props, dg);
    let a = 0.5 * (l1 + l2);
    let b = 0.5 * (l1 - l2);
    [[a, b, 0.0], [b, a, 0.0], [0.0, 0.0, l3]]
}

/// Plane-stress projected return mapping.
///
/// The trial stress is split into spectral components that the return
/// scales independently, which turns the consistency condition into a
/// scalar equation in the plastic multiplier solved by safeguarded Newton.
pub fn radial_return(material: &PlasticMaterial, state: &PlasticState, strain: &[f64; 3]) -> Result<ReturnMapOutput> {
    let props = &material.elastic;
    let d = elastic_tangent(props);
    let elastic_strain = [strain[0] - state.eps_p[0], strain[1] - state.eps_p[1], strain[2] - state.eps_p[2]];
    let trial = mat_vec(&d, &elastic_strain);
    let f_trial = dot(&trial, &project(&trial)).max(0.0).sqrt();
    if SQRT_3_2 * f_trial <= material.yield_stress(state.ebar_p) {
        return Ok(ReturnMapOutput { stress: trial, state: *state, tangent: d, delta_gamma: 0.0 });
    }

    let a1 = (trial[0] + trial[1]) / core::f64::consts::SQRT_2;
    let a2 = (trial[1] - trial[0]) / core::f64::consts::SQRT_2;
    let s12 = trial[2];
    let bulk = props.e / (1.0 - props.nu);
    let g = props.shear_modulus();
    let h = material.h;

    // r(Δγ) = √(3/2) f(Δγ) − σy(ε̄n + √(2/3) Δγ f(Δγ)), with its derivative
    let residual = |dg: f64| -> (f64, f64) {
        let c1 = 1.0 + bulk * dg / 3.0;
        let c2 = 1.0 + 2.0 * g * dg;
        let f2 = a1 * a1 / (3.0 * c1 * c1) + (a2 * a2 + 2.0 * s12 * s12) / (c2 * c2);
        let df2 = -2.0 * a1 * a1 * bulk / (9.0 * c1 * c1 * c1) - 4.0 * g * (a2 * a2 + 2.0 * s12 * s12) / (c2 * c2 * c2);
        let f = f2.sqrt();
        let df = df2 / (2.0 * f);
        let ebar = state.ebar_p + SQRT_2_3 * dg * f;
        let r = SQRT_3_2 * f - material.yield_stress(ebar);
        let dr = SQRT_3_2 * df - h * SQRT_2_3 * (f + dg * df);
        (r, dr)
    };

    let tol = 1e-12 * material.sigma_y0;
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    let mut dg = 0.0;
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let (r, dr) = residual(dg);
        if r.abs() <= tol {
            converged = true;
            break;
        }
        if r > 0.0 {
            lo = dg;
        } else {
            hi = dg;
        }
        let mut next = dg - r / dr;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo.max(1e-12) };
        }
        if (next - dg).abs() <= 1e-15 * next.abs() {
            dg = next;
            converged = residual(dg).0.abs() <= 1e3 * tol;
            break;
        }
        dg = next;
    }
    if !converged {
        return Err(Error::ReturnMapDiverged { iterations: MAX_ITERATIONS });
    }

    let [l1, l2, l3] = [1.0 / (1.0 + bulk * dg / 3.0), 1.0 / (1.0 + 2.0 * g * dg), 1.0 / (1.0 + 2.0 * g * dg)];
    let (b1, b2) = (a1 * l1, a2 * l2);
    let stress = [(b1 - b2) / core::f64::consts::SQRT_2, (b1 + b2) / core::f64::consts::SQRT_2, s12 * l3];

    let n = project(&stress);
    let f = dot(&stress, &n).sqrt();
    let mut eps_p = state.eps_p;
    for i in 0..3 {
        eps_p[i] += dg * n[i];
    }
    eps_p[3] = -(eps_p[0] + eps_p[1]);
    let new_state = PlasticState { eps_p, ebar_p: state.ebar_p + SQRT_2_3 * dg * f };

    let xi = xi_matrix(props, dg);
    let xn = mat_vec(&xi, &n);
    let alpha = SQRT_3_2 - h * SQRT_2_3 * dg;
    let denom = h * SQRT_2_3 * f * f + alpha * dot(&n, &xn);
    let mut tangent = xi;
    for i in 0..3 {
        for j in 0..3 {
            tangent[i][j] -= alpha * xn[i] * xn[j] / denom;
        }
    }
    Ok(ReturnMapOutput { stress, state: new_state, tangent, delta_gamma: dg })
}
