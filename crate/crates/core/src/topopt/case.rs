use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters identifying one topology optimization run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToCase {
    /// Target volume fraction in `[0.2, 0.6]`.
    pub vf: f64,
    /// Load position along the top edge, normalized to `[0, 1]`.
    pub load_location: f64,
    /// Load angle in `[0, 2π]`, counter-clockwise from +x.
    pub theta: f64,
    pub seed: u64,
}

impl ToCase {
    pub const VF_RANGE: (f64, f64) = (0.2, 0.6);
    pub const THETA_RANGE: (f64, f64) = (0.0, 2.0 * PI);

    pub fn new(vf: f64, load_location: f64, theta: f64, seed: u64) -> Result<Self> {
        let case = Self { vf, load_location, theta, seed };
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (Self::VF_RANGE.0..=Self::VF_RANGE.1).contains(&self.vf)
            && (0.0..=1.0).contains(&self.load_location)
            && (Self::THETA_RANGE.0..=Self::THETA_RANGE.1).contains(&self.theta);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(alloc::format!("TO case out of range: {self:?}")))
        }
    }

    /// The case reflected about the vertical centre line of the domain.
    pub fn mirrored(&self) -> Self {
        let mut theta = PI - self.theta;
        if theta < 0.0 {
            theta += 2.0 * PI;
        }
        Self { load_location: 1.0 - self.load_location, theta, ..*self }
    }
}

/// Draws a case uniformly from the sampling ranges, reproducibly from `seed`.
pub fn sample_to_case(seed: u64) -> ToCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vf = ToCase::VF_RANGE.0 + (ToCase::VF_RANGE.1 - ToCase::VF_RANGE.0) * rng.random::<f64>();
    let load_location = rng.random::<f64>();
    let theta = ToCase::THETA_RANGE.1 * rng.random::<f64>();
    ToCase { vf, load_location, theta, seed }
}
