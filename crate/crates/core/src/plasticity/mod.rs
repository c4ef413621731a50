//! Small-strain J2 plane-stress plasticity with linear isotropic hardening.
//!
//! Stresses and strains use Voigt order `(11, 22, 12)` with engineering
//! shear strain `γ12 = 2ε12`.

mod return_map;
mod simulate;
mod solver;

pub use return_map::{elastic_tangent, radial_return, ReturnMapOutput};
pub use simulate::{sample_plastic_loads, simulate_case, simulate_case_detailed, top_edge_bcs, PlasticLoadCase, StressField};
pub use solver::{solve_incremental, IncrementalSolution, SolverSettings};

#[allow(unused_imports)]
use num_traits::Float as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe::ElasticProperties;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlasticMaterial {
    pub elastic: ElasticProperties,
    /// Initial yield stress (MPa).
    pub sigma_y0: f64,
    /// Linear isotropic hardening modulus (MPa).
    pub h: f64,
}

impl PlasticMaterial {
    pub fn new(elastic: ElasticProperties, sigma_y0: f64, h: f64) -> Result<Self> {
        if sigma_y0 > 0.0 && h >= 0.0 && sigma_y0.is_finite() && h.is_finite() {
            Ok(Self { elastic, sigma_y0, h })
        } else {
            Err(Error::InvalidInput(alloc::format!("invalid yield parameters σy0={sigma_y0}, H={h}")))
        }
    }

    /// Structural steel: E = 209 GPa, ν = 0.3, σy0 = 235 MPa, H = 836 MPa.
    pub fn steel() -> Self {
        Self { elastic: ElasticProperties::steel(), sigma_y0: 235.0, h: 836.0 }
    }

    /// Current yield stress `σy0 + H ε̄p`.
    pub fn yield_stress(&self, ebar_p: f64) -> f64 {
        self.sigma_y0 + self.h * ebar_p
    }
}

/// Plastic history at one integration point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PlasticState {
    /// `(ε11p, ε22p, γ12p, ε33p)`.
    pub eps_p: [f64; 4],
    pub ebar_p: f64,
}

/// Which cross term the von Mises formula uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VonMisesForm {
    /// `√(σ11² − σ11σ22 + σ22² + 3σ12²)`, the plane-stress J2 equivalent stress.
    #[default]
    Standard,
    /// The same expression with `+σ11σ22`.
    PlusCrossTerm,
}

pub fn von_mises(s11: f64, s22: f64, s12: f64) -> f64 {
    von_mises_with(VonMisesForm::Standard, s11, s22, s12)
}

pub fn von_mises_with(form: VonMisesForm, s11: f64, s22: f64, s12: f64) -> f64 {
    let cross = match form {
        VonMisesForm::Standard => -s11 * s22,
        VonMisesForm::PlusCrossTerm => s11 * s22,
    };
    (s11 * s11 + cross + s22 * s22 + 3.0 * s12 * s12).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn von_mises_hand_cases() {
        assert!((von_mises(235.0, 0.0, 0.0) - 235.0).abs() < 1e-12);
        assert!((von_mises(0.0, 0.0, 10.0) - 10.0 * 3f64.sqrt()).abs() < 1e-12);
        assert!((von_mises(70.0, 70.0, 0.0) - 70.0).abs() < 1e-12);
        assert!((von_mises_with(VonMisesForm::PlusCrossTerm, 70.0, 70.0, 0.0) - 70.0 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(von_mises(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn steel_flow_stress() {
        let m = PlasticMaterial::steel();
        assert_eq!(m.yield_stress(0.0), 235.0);
        assert!((m.yield_stress(0.1) - 318.6).abs() < 1e-12);
        assert!(PlasticMaterial::new(m.elastic, 0.0, 1.0).is_err());
        assert!(PlasticMaterial::new(m.elastic, 1.0, -1.0).is_err());
    }
}
