use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use serde::{Deserialize, Serialize};

use super::return_map::radial_return;
use super::{PlasticMaterial, PlasticState};
use crate::error::{Error, Result};
use crate::fe::element::{add_btdb, gauss_strain_matrices, gauss_weight, strain_at, ElementMatrix};
use crate::fe::{assemble_with, BandedMatrix, constrain_and_solve, gather, orphan_dofs, BoundaryConditionSet, StructuredGrid};

/// Sub-steps per base increment at the deepest halving level.
const SPLIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Equal load steps of the linear ramp.
    pub increments: usize,
    /// Out-of-balance force norm relative to the reaction norm.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { increments: 20, tolerance: 1e-6, max_iterations: 25 }
    }
}

/// Converged state at the end of the ramp.
#[derive(Debug, Clone)]
pub struct IncrementalSolution {
    pub u: Vec<f64>,
    /// Committed history per element and Gauss point; default for inactive elements.
    pub states: Vec<[PlasticState; 4]>,
    /// Gauss-point stresses `(σ11, σ22, σ12)`; zero for inactive elements.
    pub stresses: Vec<[[f64; 3]; 4]>,
    /// Converged load steps, including any produced by halving.
    pub steps: usize,
    /// Newton iterations of each converged step.
    pub iterations: Vec<usize>,
    /// Relative out-of-balance norms of each converged step, one per iteration.
    pub residuals: Vec<Vec<f64>>,
}

struct Evaluation {
    k: Option<BandedMatrix>,
    f_int: Vec<f64>,
    states: Vec<[PlasticState; 4]>,
    stresses: Vec<[[f64; 3]; 4]>,
}

fn evaluate(
    grid: &StructuredGrid,
    active: &[bool],
    material: &PlasticMaterial,
    committed: &[[PlasticState; 4]],
    u: &[f64],
    with_tangent: bool,
) -> Result<Evaluation> {
    let bs = gauss_strain_matrices(grid.h);
    let w = gauss_weight(grid.h);
    let mut f_int = vec![0.0; grid.dof_count()];
    let mut states = committed.to_vec();
    let mut stresses = vec![[[0.0; 3]; 4]; grid.element_count()];
    let mut failure = None;
    let mut element = |e: usize, ke: Option<&mut ElementMatrix>| {
        if failure.is_some() {
            return;
        }
        let ue = gather(grid, e, u);
        let dofs = grid.element_dofs(e);
        let mut ke = ke;
        if let Some(k) = ke.as_deref_mut() {
            *k = [[0.0; 8]; 8];
        }
        for (gp, b) in bs.iter().enumerate() {
            let out = match radial_return(material, &committed[e][gp], &strain_at(b, &ue)) {
                Ok(out) => out,
                Err(err) => {
                    failure = Some(err);
                    return;
                }
            };
            if let Some(k) = ke.as_deref_mut() {
                add_btdb(k, b, &out.tangent, w);
            }
            for (a, &d) in dofs.iter().enumerate() {
                f_int[d] += w * (b[0][a] * out.stress[0] + b[1][a] * out.stress[1] + b[2][a] * out.stress[2]);
            }
            states[e][gp] = out.state;
            stresses[e][gp] = out.stress;
        }
    };
    let k = if with_tangent {
        Some(assemble_with(grid, active, |e, ke| element(e, Some(ke))))
    } else {
        for e in (0..grid.element_count()).filter(|&e| active[e]) {
            element(e, None);
        }
        None
    };
    match failure {
        Some(err) => Err(err),
        None => Ok(Evaluation { k, f_int, states, stresses }),
    }
}

fn norm(x: impl Iterator<Item = f64>) -> f64 {
    x.map(|v| v * v).sum::<f64>().sqrt()
}

/// Ramps `bcs` (prescribed values and point loads) linearly from zero to
/// full magnitude and solves each step with full Newton iterations on the
/// consistent tangent. A step that fails is retried as two halves, down to
/// 1/16 of the base increment.
pub fn solve_incremental(
    grid: &StructuredGrid,
    active: &[bool],
    material: &PlasticMaterial,
    bcs: &BoundaryConditionSet,
    settings: &SolverSettings,
) -> Result<IncrementalSolution> {
    if settings.increments == 0 || settings.max_iterations == 0 || !(settings.tolerance > 0.0) {
        return Err(Error::InvalidInput(alloc::format!("invalid solver settings {settings:?}")));
    }
    if active.len() != grid.element_count() {
        return Err(Error::shape("solve_incremental", &[grid.element_count()], &[active.len()]));
    }
    bcs.validate(grid.dof_count())?;

    let n = grid.dof_count();
    let orphan = orphan_dofs(grid, active);
    let mut constrained = orphan.clone();
    for &(d, _) in &bcs.fixed_dofs {
        constrained[d] = true;
    }
    let f_full = bcs.load_vector(n);

    let mut u = vec![0.0; n];
    let mut states = vec![[PlasticState::default(); 4]; grid.element_count()];
    let mut stresses = vec![[[0.0; 3]; 4]; grid.element_count()];
    let mut iterations = Vec::new();
    let mut residuals = Vec::new();
    let mut predictor: Option<BandedMatrix> = None;

    let total = settings.increments * SPLIT;
    let mut done = 0;
    let mut step = SPLIT;
    while done < total {
        let lambda = (done + step) as f64 / total as f64;
        match newton_step(grid, active, material, bcs, settings, &constrained, &orphan, &f_full, lambda, &u, &states, predictor.as_ref()) {
            Ok((u_new, mut eval, history)) => {
                u = u_new;
                predictor = eval.k.take();
                states = eval.states;
                stresses = eval.stresses;
                iterations.push(history.len());
                residuals.push(history);
                done += step;
                if step < SPLIT && done % (2 * step) == 0 {
                    step *= 2;
                }
            }
            Err(err) if is_recoverable(&err) => {
                if step == 1 {
                    return Err(Error::NewtonDiverged { load_factor: lambda });
                }
                step /= 2;
            }
            Err(err) => return Err(err),
        }
    }
    Ok(IncrementalSolution { u, states, stresses, steps: iterations.len(), iterations, residuals })
}

/// Energy line search: a step length where `du · R(u + α du)` has dropped
/// to half its initial value, found by regula falsi on at most four trials.
fn line_search<F>(du: &[f64], r0: &[f64], mut residual_at: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    let slope = |r: &[f64]| du.iter().zip(r).map(|(a, b)| a * b).sum::<f64>();
    let g0 = slope(r0);
    if !(g0 > 0.0) {
        return Ok(1.0);
    }
    let (mut lo, mut g_lo) = (0.0, g0);
    let (mut hi, mut g_hi) = (1.0, slope(&residual_at(1.0)?));
    if g_hi.abs() <= 0.5 * g0 || g_hi > 0.0 {
        return Ok(1.0);
    }
    let mut alpha = 1.0;
    for _ in 0..4 {
        alpha = (lo - g_lo * (hi - lo) / (g_hi - g_lo)).clamp(0.05, 1.0);
        let g = slope(&residual_at(alpha)?);
        if g.abs() <= 0.5 * g0 {
            break;
        }
        if g > 0.0 {
            lo = alpha;
            g_lo = g;
        } else {
            hi = alpha;
            g_hi = g;
        }
    }
    Ok(alpha)
}

fn is_recoverable(err: &Error) -> bool {
    matches!(err, Error::ReturnMapDiverged { .. } | Error::NewtonDiverged { .. })
}

#[allow(clippy::too_many_arguments)]
fn newton_step(
    grid: &StructuredGrid,
    active: &[bool],
    material: &PlasticMaterial,
    bcs: &BoundaryConditionSet,
    settings: &SolverSettings,
    constrained: &[bool],
    orphan: &[bool],
    f_full: &[f64],
    lambda: f64,
    u_committed: &[f64],
    committed: &[[PlasticState; 4]],
    predictor: Option<&BandedMatrix>,
) -> Result<(Vec<f64>, Evaluation, Vec<f64>)> {
    let n = u_committed.len();
    let mut u = u_committed.to_vec();
    let mut correction = BoundaryConditionSet {
        fixed_dofs: bcs.fixed_dofs.iter().map(|&(d, v)| (d, lambda * v - u[d])).collect(),
        point_loads: Vec::new(),
    };
    let residual_of = |eval: &Evaluation| -> Vec<f64> {
        (0..n).map(|d| if constrained[d] { 0.0 } else { lambda * f_full[d] - eval.f_int[d] }).collect()
    };
    let mut history = Vec::new();
    let mut eval = evaluate(grid, active, material, committed, &u, true)?;
    for it in 0..=settings.max_iterations {
        let residual = residual_of(&eval);
        let unbalanced = norm(residual.iter().copied());
        if !unbalanced.is_finite() {
            break;
        }
        if it > 0 {
            let reaction = norm((0..n).filter(|&d| constrained[d] && !orphan[d]).map(|d| eval.f_int[d]));
            let reference = reaction.max(norm(f_full.iter().map(|f| lambda * f)));
            history.push(if reference > 0.0 { unbalanced / reference } else { 0.0 });
            if unbalanced <= settings.tolerance * reference || unbalanced == 0.0 {
                return Ok((u, eval, history));
            }
        }
        if it == settings.max_iterations {
            break;
        }
        let k = eval.k.take().expect("tangent requested");
        // the converged tangent of the previous step predicts better than one
        // evaluated exactly on the yield surface
        let k = match predictor {
            Some(p) if it == 0 => p,
            _ => &k,
        };
        let du = constrain_and_solve(k, &residual, &correction, orphan)?;
        let step = |alpha: f64| -> Vec<f64> {
            let mut trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + alpha * b).collect();
            if it == 0 {
                for &(d, v) in &bcs.fixed_dofs {
                    trial[d] = lambda * v;
                }
            }
            trial
        };
        let alpha = if it == 0 { 1.0 } else { line_search(&du, &residual, |a| {
            let e = evaluate(grid, active, material, committed, &step(a), false)?;
            Ok(residual_of(&e))
        })? };
        u = step(alpha);
        correction.fixed_dofs.iter_mut().for_each(|c| c.1 = 0.0);
        eval = evaluate(grid, active, material, committed, &u, true)?;
    }
    Err(Error::NewtonDiverged { load_factor: lambda })
}
