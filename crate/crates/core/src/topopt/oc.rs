use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;

use super::filter::DensityFilter;
use super::ToSettings;
use crate::error::{Error, Result};
use crate::fe::DensityField;

const BRACKET: (f64, f64) = (1e-10, 1e10);
const MAX_DOUBLINGS: usize = 100;
const MAX_BISECTIONS: usize = 200;

/// Density update for a fixed Lagrange multiplier `lambda`:
/// `x·(−dc / (λ dv))^η`, limited to `x ± move` and to `[ρ_min, 1]`.
pub fn oc_candidate(rho: &[f64], sensitivity: &[f64], volume_grad: &[f64], lambda: f64, settings: &ToSettings) -> Vec<f64> {
    rho.iter()
        .zip(sensitivity)
        .zip(volume_grad)
        .map(|((&x, &dc), &dv)| {
            let ratio = (-dc / (lambda * dv)).max(0.0);
            let target = x * ratio.powf(settings.damping);
            let lo = (x - settings.move_limit).max(settings.rho_min);
            let hi = (x + settings.move_limit).min(1.0);
            target.max(lo).min(hi)
        })
        .collect()
}

/// Optimality-criteria step that bisects on the multiplier until the volume
/// measured by `volume_of` hits `vf`.
fn oc_bisect<F>(rho: &[f64], sensitivity: &[f64], volume_grad: &[f64], vf: f64, settings: &ToSettings, volume_of: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let vol = |lambda: f64| volume_of(&oc_candidate(rho, sensitivity, volume_grad, lambda, settings));
    let (mut lo, mut hi) = BRACKET;
    let mut doublings = 0;
    // small multipliers inflate the design, large ones shrink it
    while vol(lo) < vf {
        lo *= 0.5;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::BisectionFailure { doublings: MAX_DOUBLINGS });
        }
    }
    while vol(hi) > vf {
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::BisectionFailure { doublings: MAX_DOUBLINGS });
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = (lo * hi).sqrt();
        if vol(mid) > vf {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    // pick whichever end of the final bracket lands closer to the target
    let (a, b) = (oc_candidate(rho, sensitivity, volume_grad, lo, settings), oc_candidate(rho, sensitivity, volume_grad, hi, settings));
    Ok(if (volume_of(&a) - vf).abs() <= (volume_of(&b) - vf).abs() { a } else { b })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Optimality-criteria update of `rho` toward volume fraction `vf`.
///
/// `sensitivity` must be non-positive (compliance sensitivities are).
pub fn oc_update(rho: &DensityField, sensitivity: &[f64], vf: f64, settings: &ToSettings) -> Result<DensityField> {
    if sensitivity.len() != rho.len() {
        return Err(Error::shape("oc_update", &[rho.len()], &[sensitivity.len()]));
    }
    let ones = alloc::vec![1.0; rho.len()];
    let x = oc_bisect(&rho.rho, sensitivity, &ones, vf, settings, mean)?;
    Ok(DensityField { nx: rho.nx, ny: rho.ny, rho: x, binarized: false })
}

/// OC update whose volume constraint is enforced on the filtered field.
pub fn oc_update_filtered(
    rho: &DensityField,
    sensitivity: &[f64],
    vf: f64,
    settings: &ToSettings,
    filter: &DensityFilter,
) -> Result<DensityField> {
    if sensitivity.len() != rho.len() {
        return Err(Error::shape("oc_update", &[rho.len()], &[sensitivity.len()]));
    }
    let dv = filter.apply_transpose(&alloc::vec![1.0; rho.len()]);
    let x = oc_bisect(&rho.rho, sensitivity, &dv, vf, settings, |x| mean(&filter.apply_slice(x)))?;
    Ok(DensityField { nx: rho.nx, ny: rho.ny, rho: x, binarized: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn uniform_input_stays_uniform() {
        let s = ToSettings::default();
        let rho = DensityField::uniform(6, 4, 0.4).unwrap();
        let out = oc_update(&rho, &[-1.0; 24], 0.4, &s).unwrap();
        assert!(out.rho.iter().all(|&v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn volume_is_met_and_moves_are_limited() {
        let s = ToSettings::default();
        let mut rho = DensityField::uniform(8, 8, 0.5).unwrap();
        for (i, v) in rho.rho.iter_mut().enumerate() {
            *v = 0.2 + 0.6 * ((i * 13 % 7) as f64 / 6.0);
        }
        let sens: Vec<f64> = (0..64).map(|i| -((i * 31 % 11) as f64 + 0.1)).collect();
        for &vf in &[0.3, 0.45, 0.6] {
            let out = oc_update(&rho, &sens, vf, &s).unwrap();
            assert!((out.volume_fraction() - vf).abs() <= 1e-4, "vf {vf}: {}", out.volume_fraction());
            for (a, b) in out.rho.iter().zip(&rho.rho) {
                assert!((a - b).abs() <= s.move_limit + 1e-15);
                assert!((s.rho_min..=1.0).contains(a));
            }
        }
    }

    #[test]
    fn dominant_sensitivity_hits_the_move_limit() {
        let s = ToSettings::default();
        let rho = vec![0.3; 5];
        let ones = vec![1.0; 5];
        // at λ = 1, an element with −dc = 100 λ wants 10× its density
        let lambda = 1.0;
        let sens = vec![-100.0 * lambda, -1.0, -1.0, -1.0, -1.0];
        let out = oc_candidate(&rho, &sens, &ones, lambda, &s);
        assert_eq!(out[0], 0.3 + s.move_limit);
        assert_eq!(out[1], 0.3);

        // and through the full bisection the dominant element still saturates
        let field = DensityField::uniform(5, 1, 0.3).unwrap();
        let sens = vec![-1e4, -1.0, -1.0, -1.0, -1.0];
        let out = oc_update(&field, &sens, 0.3, &s).unwrap();
        assert!((out.rho[0] - (0.3 + s.move_limit)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_sensitivity_fails_bracketing() {
        let s = ToSettings::default();
        let rho = DensityField::uniform(4, 4, 0.3).unwrap();
        let r = oc_update(&rho, &[0.0; 16], 0.3, &s);
        assert!(matches!(r, Err(Error::BisectionFailure { .. })));
    }
}
