use core::f64::consts::PI;

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use rand_chacha::ChaCha8Rng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::solver::{solve_incremental, IncrementalSolution, SolverSettings};
use super::{von_mises_with, PlasticMaterial, VonMisesForm};
use crate::error::{Error, Result};
use crate::fe::{detect_floating_regions, BoundaryConditionSet, DensityField, StructuredGrid};

/// Uniform displacement `|u|(cos θ, sin θ)` applied to the whole top edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlasticLoadCase {
    pub theta: f64,
    pub umag: f64,
    pub seed: u64,
}

impl PlasticLoadCase {
    pub const THETA_RANGE: (f64, f64) = (0.0, PI);
    pub const UMAG_RANGE: (f64, f64) = (2.0, 8.0);

    pub fn new(theta: f64, umag: f64, seed: u64) -> Result<Self> {
        let case = Self { theta, umag, seed };
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<()> {
        if (Self::THETA_RANGE.0..=Self::THETA_RANGE.1).contains(&self.theta)
            && (Self::UMAG_RANGE.0..=Self::UMAG_RANGE.1).contains(&self.umag)
        {
            Ok(())
        } else {
            Err(Error::InvalidInput(alloc::format!("plastic load case out of range: {self:?}")))
        }
    }

    pub fn displacement(&self) -> (f64, f64) {
        (self.umag * self.theta.cos(), self.umag * self.theta.sin())
    }
}

/// `count` load cases drawn uniformly from the sampling ranges.
pub fn sample_plastic_loads(seed: u64, count: usize) -> Vec<PlasticLoadCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let theta = PlasticLoadCase::THETA_RANGE.1 * rng.random::<f64>();
            let umag = 2.0 + 6.0 * rng.random::<f64>();
            PlasticLoadCase { theta, umag, seed }
        })
        .collect()
}

/// Element von Mises stresses in MPa, row-major from the bottom row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressField {
    pub nx: usize,
    pub ny: usize,
    pub vm: Vec<f64>,
}

impl StressField {
    pub fn max(&self) -> f64 {
        self.vm.iter().copied().fold(0.0, f64::max)
    }
}

/// Bottom edge clamped, every top-edge node displaced by the load vector.
pub fn top_edge_bcs(grid: &StructuredGrid, load: &PlasticLoadCase) -> BoundaryConditionSet {
    let (ux, uy) = load.displacement();
    let mut bcs = BoundaryConditionSet::clamp_bottom(grid);
    for n in grid.top_nodes() {
        bcs.fixed_dofs.push((2 * n, ux));
        bcs.fixed_dofs.push((2 * n + 1, uy));
    }
    bcs
}

/// Ground-truth element von Mises field of a binary geometry under a
/// top-edge displacement ramp.
pub fn simulate_case(
    geometry: &DensityField,
    load: &PlasticLoadCase,
    material: &PlasticMaterial,
    grid: &StructuredGrid,
    increments: usize,
) -> Result<StressField> {
    let settings = SolverSettings { increments, ..SolverSettings::default() };
    simulate_case_detailed(geometry, load, material, grid, &settings, VonMisesForm::Standard).map(|(s, _)| s)
}

pub fn simulate_case_detailed(
    geometry: &DensityField,
    load: &PlasticLoadCase,
    material: &PlasticMaterial,
    grid: &StructuredGrid,
    settings: &SolverSettings,
    form: VonMisesForm,
) -> Result<(StressField, IncrementalSolution)> {
    if geometry.nx != grid.nx || geometry.ny != grid.ny {
        return Err(Error::shape("simulate_case", &[grid.ny, grid.nx], &[geometry.ny, geometry.nx]));
    }
    if geometry.rho.iter().any(|&r| r != 0.0 && r != 1.0) {
        return Err(Error::InvalidInput("simulation geometry must be binary".into()));
    }
    load.validate()?;
    let bcs = top_edge_bcs(grid, load);
    let active = detect_floating_regions(grid, &geometry.solid_mask(), &bcs);
    let sol = solve_incremental(grid, &active, material, &bcs, settings)?;
    let vm = (0..grid.element_count())
        .map(|e| {
            if active[e] {
                sol.stresses[e].iter().map(|s| von_mises_with(form, s[0], s[1], s[2])).sum::<f64>() / 4.0
            } else {
                0.0
            }
        })
        .collect();
    Ok((StressField { nx: grid.nx, ny: grid.ny, vm }, sol))
}
