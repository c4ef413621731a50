use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;

use crate::error::{Error, Result};
use crate::fe::DensityField;

/// Linear-hat density filter: `w_ij = max(0, r − dist(i, j))`, with
/// distances between element centres measured in element widths.
#[derive(Debug, Clone)]
pub struct DensityFilter {
    nx: usize,
    ny: usize,
    /// Per element, the neighbour list `(index, weight)`.
    neighbors: Vec<Vec<(usize, f64)>>,
    /// Row sums of the weights.
    row_sums: Vec<f64>,
}

impl DensityFilter {
    pub fn new(nx: usize, ny: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidInput(alloc::format!("filter radius must be positive, got {radius}")));
        }
        let reach = radius.ceil() as isize;
        let mut neighbors = Vec::with_capacity(nx * ny);
        let mut row_sums = Vec::with_capacity(nx * ny);
        for r in 0..ny as isize {
            for c in 0..nx as isize {
                let mut list = Vec::new();
                for dr in -reach..=reach {
                    for dc in -reach..=reach {
                        let (rr, cc) = (r + dr, c + dc);
                        if rr < 0 || cc < 0 || rr >= ny as isize || cc >= nx as isize {
                            continue;
                        }
                        let w = radius - ((dr * dr + dc * dc) as f64).sqrt();
                        if w > 0.0 {
                            list.push((rr as usize * nx + cc as usize, w));
                        }
                    }
                }
                row_sums.push(list.iter().map(|&(_, w)| w).sum());
                neighbors.push(list);
            }
        }
        Ok(Self { nx, ny, neighbors, row_sums })
    }

    pub fn apply_slice(&self, rho: &[f64]) -> Vec<f64> {
        self.neighbors
            .iter()
            .zip(&self.row_sums)
            .map(|(list, s)| list.iter().map(|&(j, w)| w * rho[j]).sum::<f64>() / s)
            .collect()
    }

    /// Chain rule through the filter: `∂/∂x_j = Σ_i w_ij / W_i · ∂/∂ρ̃_i`.
    pub fn apply_transpose(&self, grad: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; grad.len()];
        for (i, list) in self.neighbors.iter().enumerate() {
            let g = grad[i] / self.row_sums[i];
            for &(j, w) in list {
                out[j] += w * g;
            }
        }
        out
    }

    pub fn apply(&self, rho: &DensityField) -> DensityField {
        assert_eq!((rho.nx, rho.ny), (self.nx, self.ny));
        DensityField { nx: self.nx, ny: self.ny, rho: self.apply_slice(&rho.rho), binarized: false }
    }
}

/// Filters `rho` with a linear-hat kernel of the given radius (element widths).
pub fn density_filter(rho: &DensityField, radius: f64) -> Result<DensityField> {
    Ok(DensityFilter::new(rho.nx, rho.ny, radius)?.apply(rho))
}
