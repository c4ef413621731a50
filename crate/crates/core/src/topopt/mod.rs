//! Elastic SIMP compliance minimization with a density filter and an
//! optimality-criteria update, used to generate diverse binary geometries.

mod case;
mod filter;
mod oc;
mod optimize;

pub use case::{sample_to_case, ToCase};
pub use filter::{density_filter, DensityFilter};
pub use oc::{oc_candidate, oc_update, oc_update_filtered};
pub use optimize::{
    binarize, compliance_and_sensitivity, load_node, run_topology_optimization, to_boundary_conditions, ToResult,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Density threshold applied to the final continuous design.
pub const BINARIZE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToSettings {
    /// SIMP exponent `p` in `E_e = ρ_e^p E`.
    pub penalty: f64,
    /// Filter radius in element widths.
    pub filter_radius: f64,
    pub iterations: usize,
    pub move_limit: f64,
    /// Exponent applied to the OC ratio.
    pub damping: f64,
    pub rho_min: f64,
}

impl Default for ToSettings {
    fn default() -> Self {
        Self { penalty: 3.0, filter_radius: 2.0, iterations: 30, move_limit: 0.2, damping: 0.5, rho_min: 1e-3 }
    }
}

impl ToSettings {
    pub fn validate(&self) -> Result<()> {
        if self.penalty >= 1.0 && self.filter_radius > 0.0 && self.iterations >= 1 && self.move_limit > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidInput(alloc::format!("invalid TO settings {self:?}")))
        }
    }
}
