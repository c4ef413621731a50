//! Columnar sample storage, geometry-level splitting and batch assembly.
//!
//! Every image is stored row-major with row 0 at the bottom of the domain,
//! matching the element numbering of [`StructuredGrid`](crate::fe::StructuredGrid).

mod batch;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use batch::{element_centroids, make_batch, normalize_theta, normalize_umag, Batch};

use crate::error::{Error, Result};
use crate::plasticity::{PlasticLoadCase, StressField};
use crate::topopt::ToCase;

/// Stress normalization constant in MPa.
pub const STRESS_SCALE: f64 = 500.0;
pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_SPLIT: [f64; 2] = [0.8, 0.2];

/// One topology-optimized design and the case that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub id: u64,
    pub case: ToCase,
}

/// Which design and which of its load cases a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub design: u64,
    pub load_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub nx: usize,
    pub ny: usize,
    pub sample_count: usize,
    /// MPa.
    pub stress_scale: f64,
    pub split_seed: u64,
    /// `[train, test]`.
    pub split_fractions: [f64; 2],
    pub designs: Vec<DesignRecord>,
    pub provenance: Vec<Provenance>,
}

impl DatasetManifest {
    pub fn new(nx: usize, ny: usize, split_seed: u64) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            nx,
            ny,
            sample_count: 0,
            stress_scale: STRESS_SCALE,
            split_seed,
            split_fractions: DEFAULT_SPLIT,
            designs: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn pixels(&self) -> usize {
        self.nx * self.ny
    }

    pub fn design(&self, id: u64) -> Option<&DesignRecord> {
        self.designs.iter().find(|d| d.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvariantViolation(msg));
        if self.format_version != FORMAT_VERSION {
            return bad(format!("unsupported format version {}", self.format_version));
        }
        if self.nx == 0 || self.ny == 0 {
            return bad(format!("empty grid {}x{}", self.nx, self.ny));
        }
        if self.sample_count == 0 {
            return bad("dataset has no samples".into());
        }
        if !(self.stress_scale > 0.0 && self.stress_scale.is_finite()) {
            return bad(format!("stress scale must be positive, got {}", self.stress_scale));
        }
        let [a, b] = self.split_fractions;
        if !(a >= 0.0 && b >= 0.0 && (a + b - 1.0).abs() <= 1e-12) {
            return bad(format!("split fractions {a} + {b} do not sum to 1"));
        }
        if self.provenance.len() != self.sample_count {
            return bad(format!("{} provenance entries for {} samples", self.provenance.len(), self.sample_count));
        }
        Ok(())
    }
}

/// A single simulated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    /// Binary image, `ny·nx` values of 0 or 1.
    pub geometry: Vec<u8>,
    pub theta: f32,
    pub umag: f32,
    /// Von Mises stress in MPa.
    pub stress: Vec<f32>,
    pub provenance: Provenance,
}

impl SampleRecord {
    pub fn from_simulation(geometry: &[u8], load: &PlasticLoadCase, field: &StressField, provenance: Provenance) -> Self {
        Self {
            geometry: geometry.to_vec(),
            theta: load.theta as f32,
            umag: load.umag as f32,
            stress: field.vm.iter().map(|&v| v as f32).collect(),
            provenance,
        }
    }

    pub fn validate(&self, pixels: usize) -> Result<()> {
        check_sample(&self.geometry, &self.stress, pixels)
    }
}

fn check_sample(geometry: &[u8], stress: &[f32], pixels: usize) -> Result<()> {
    if geometry.len() != pixels || stress.len() != pixels {
        return Err(Error::InvariantViolation(format!(
            "sample has {} geometry and {} stress values, grid has {pixels}",
            geometry.len(),
            stress.len()
        )));
    }
    for (e, (&g, &s)) in geometry.iter().zip(stress).enumerate() {
        if g > 1 {
            return Err(Error::InvariantViolation(format!("geometry value {g} at element {e} is not binary")));
        }
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvariantViolation(format!("stress {s} at element {e} is negative or non-finite")));
        }
        if g == 0 && s != 0.0 {
            return Err(Error::InvariantViolation(format!("stress {s} on void element {e}")));
        }
    }
    Ok(())
}

/// All samples of a container, stored column-wise as on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// `[sample][row][col]`.
    pub geometry: Vec<u8>,
    /// `[sample][theta, umag]`.
    pub loads: Vec<f32>,
    /// `[sample][row][col]`, MPa.
    pub stress: Vec<f32>,
}

impl Dataset {
    /// Packs records under `manifest`, replacing its sample count and provenance.
    pub fn from_records(mut manifest: DatasetManifest, records: &[SampleRecord]) -> Result<Self> {
        let pixels = manifest.pixels();
        let mut geometry = Vec::with_capacity(records.len() * pixels);
        let mut loads = Vec::with_capacity(records.len() * 2);
        let mut stress = Vec::with_capacity(records.len() * pixels);
        manifest.provenance.clear();
        for r in records {
            r.validate(pixels)?;
            geometry.extend_from_slice(&r.geometry);
            loads.extend_from_slice(&[r.theta, r.umag]);
            stress.extend_from_slice(&r.stress);
            manifest.provenance.push(r.provenance);
        }
        manifest.sample_count = records.len();
        let data = Self { manifest, geometry, loads, stress };
        data.validate()?;
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.manifest.sample_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixels(&self) -> usize {
        self.manifest.pixels()
    }

    pub fn geometry(&self, i: usize) -> &[u8] {
        let p = self.pixels();
        &self.geometry[i * p..(i + 1) * p]
    }

    pub fn stress(&self, i: usize) -> &[f32] {
        let p = self.pixels();
        &self.stress[i * p..(i + 1) * p]
    }

    /// `(theta, umag)`.
    pub fn load(&self, i: usize) -> (f32, f32) {
        (self.loads[2 * i], self.loads[2 * i + 1])
    }

    pub fn record(&self, i: usize) -> SampleRecord {
        let (theta, umag) = self.load(i);
        SampleRecord {
            geometry: self.geometry(i).to_vec(),
            theta,
            umag,
            stress: self.stress(i).to_vec(),
            provenance: self.manifest.provenance[i],
        }
    }

    /// Target volume fraction of the design behind sample `i`, if recorded.
    pub fn design_vf(&self, i: usize) -> Option<f64> {
        self.manifest.design(self.manifest.provenance[i].design).map(|d| d.case.vf)
    }

    pub fn validate(&self) -> Result<()> {
        self.manifest.validate()?;
        let (n, p) = (self.len(), self.pixels());
        if self.geometry.len() != n * p || self.stress.len() != n * p || self.loads.len() != 2 * n {
            return Err(Error::InvariantViolation(format!(
                "blob lengths {}/{}/{} do not match {n} samples of {p} pixels",
                self.geometry.len(),
                self.loads.len(),
                self.stress.len()
            )));
        }
        for i in 0..n {
            check_sample(self.geometry(i), self.stress(i), p)?;
        }
        Ok(())
    }
}

/// Train and test sample indices, partitioned by design so that every load
/// case of a geometry lands on the same side. The design ids are sorted,
/// shuffled with `seed`, and the first `round(train_fraction · designs)` go
/// to training; indices are returned in ascending order.
pub fn split(manifest: &DatasetManifest, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut ids: Vec<u64> = manifest.provenance.iter().map(|p| p.design).collect::<BTreeSet<_>>().into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (manifest.split_fractions[0] * ids.len() as f64).round() as usize;
    let train_ids: BTreeSet<u64> = ids[..n_train.min(ids.len())].iter().copied().collect();
    manifest.provenance.iter().enumerate().map(|(i, p)| (i, train_ids.contains(&p.design))).fold(
        (Vec::new(), Vec::new()),
        |(mut train, mut test), (i, is_train)| {
            if is_train {
                train.push(i);
            } else {
                test.push(i);
            }
            (train, test)
        },
    )
}

#[cfg(test)]
mod tests;
