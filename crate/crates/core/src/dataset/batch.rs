use core::f64::consts::PI;

use alloc::vec::Vec;

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};
use crate::plasticity::PlasticLoadCase;
use crate::surrogates::{ModelInput, ModelKind};

/// Min-max normalization of the displacement magnitude over its sampling range.
pub fn normalize_umag(umag: f64) -> f64 {
    let (lo, hi) = PlasticLoadCase::UMAG_RANGE;
    (umag - lo) / (hi - lo)
}

pub fn normalize_theta(theta: f64) -> f64 {
    theta / PI
}

/// `P×2` element-centroid coordinates on the unit square, in element order.
pub fn element_centroids<T: Real>(nx: usize, ny: usize) -> Tensor<T> {
    Tensor::from_fn(&[nx * ny, 2], |i| {
        let e = i / 2;
        if i % 2 == 0 {
            T::of(((e % nx) as f64 + 0.5) / nx as f64)
        } else {
            T::of(((e / nx) as f64 + 0.5) / ny as f64)
        }
    })
}

/// Model inputs and the matching `N×1×ny×nx` target in units of the
/// stress scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub input: ModelInput<T>,
    pub target: Tensor<T>,
}

pub fn make_batch<T: Real>(data: &Dataset, indices: &[usize], kind: ModelKind) -> Result<Batch<T>> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
        return Err(Error::InvalidInput(alloc::format!("sample index {bad} out of range for {} samples", data.len())));
    }
    let (nx, ny, p, n) = (data.manifest.nx, data.manifest.ny, data.pixels(), indices.len());
    let scale = data.manifest.stress_scale;
    let geometry = |i: usize| data.geometry(i).iter().map(|&g| T::of(g as f64));
    let loads = |i: usize| {
        let (theta, umag) = data.load(i);
        (T::of(normalize_umag(umag as f64)), T::of(normalize_theta(theta as f64)))
    };

    let target: Vec<T> = indices.iter().flat_map(|&i| data.stress(i).iter().map(|&s| T::of(s as f64 / scale))).collect();
    let target = Tensor::new(&[n, 1, ny, nx], target)?;

    let input = match kind {
        ModelKind::ResUNet => {
            let mut x = Vec::with_capacity(3 * n * p);
            for &i in indices {
                let (u, t) = loads(i);
                x.extend(geometry(i));
                x.extend(core::iter::repeat(u).take(p));
                x.extend(core::iter::repeat(t).take(p));
            }
            ModelInput::Image(Tensor::new(&[n, 3, ny, nx], x)?)
        }
        ModelKind::VanillaDeeponet => {
            let mut branch = Vec::with_capacity(n * (p + 2));
            for &i in indices {
                let (u, t) = loads(i);
                branch.extend(geometry(i));
                branch.extend([u, t]);
            }
            ModelInput::Operator { branch: Tensor::new(&[n, p + 2], branch)?, trunk: element_centroids(nx, ny) }
        }
        ModelKind::Rdon => {
            let geometry: Vec<T> = indices.iter().flat_map(|&i| geometry(i)).collect();
            let loads: Vec<T> = indices.iter().flat_map(|&i| {
                let (u, t) = loads(i);
                [u, t]
            }).collect();
            ModelInput::Fused { geometry: Tensor::new(&[n, 1, ny, nx], geometry)?, loads: Tensor::new(&[n, 2], loads)? }
        }
    };
    Ok(Batch { input, target })
}
