//! On-disk containers: a directory with a JSON manifest and raw
//! little-endian blobs laid out `[sample][row][col]`, row 0 at the bottom.

use std::fs;
use std::path::Path;

use opstress_core::dataset::{Dataset, DatasetManifest, DesignRecord};
use opstress_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const GEOMETRY: &str = "geometry.bin";
pub const LOADS: &str = "loads.bin";
pub const STRESS: &str = "stress.bin";
pub const DENSITY: &str = "density.bin";

pub fn f32_to_le(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn f32_from_le(bytes: &[u8], path: &Path) -> Result<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return Err(HarnessError::Invalid(format!("{}: length {} is not a multiple of 4", path.display(), bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(HarnessError::json(path))?;
    text.push('\n');
    fs::write(path, text).map_err(HarnessError::io(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
    serde_json::from_str(&text).map_err(HarnessError::json(path))
}

fn write_blob(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(HarnessError::io(path))
}

fn read_blob(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(HarnessError::io(path))
}

/// Writes a validated dataset. The manifest goes last so a readable
/// manifest implies complete blobs.
pub fn write_container(data: &Dataset, dir: &Path) -> Result<()> {
    data.validate()?;
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    write_blob(&dir.join(GEOMETRY), &data.geometry)?;
    write_blob(&dir.join(LOADS), &f32_to_le(&data.loads))?;
    write_blob(&dir.join(STRESS), &f32_to_le(&data.stress))?;
    write_json(&dir.join(MANIFEST), &data.manifest)
}

pub fn read_container(dir: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest = read_json(&dir.join(MANIFEST))?;
    let geometry = read_blob(&dir.join(GEOMETRY))?;
    let loads = f32_from_le(&read_blob(&dir.join(LOADS))?, &dir.join(LOADS))?;
    let stress = f32_from_le(&read_blob(&dir.join(STRESS))?, &dir.join(STRESS))?;
    let data = Dataset { manifest, geometry, loads, stress };
    data.validate()?;
    Ok(data)
}

/// Topology-optimized designs awaiting simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSet {
    pub nx: usize,
    pub ny: usize,
    pub designs: Vec<DesignRecord>,
    /// Continuous filtered densities, `[design][row][col]`.
    pub density: Vec<f32>,
    /// Binarized densities, `[design][row][col]`.
    pub geometry: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DesignManifest {
    format_version: u32,
    nx: usize,
    ny: usize,
    design_count: usize,
    designs: Vec<DesignRecord>,
}

impl DesignSet {
    pub fn pixels(&self) -> usize {
        self.nx * self.ny
    }

    pub fn geometry(&self, i: usize) -> &[u8] {
        &self.geometry[i * self.pixels()..(i + 1) * self.pixels()]
    }

    pub fn density(&self, i: usize) -> &[f32] {
        &self.density[i * self.pixels()..(i + 1) * self.pixels()]
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p) = (self.designs.len(), self.pixels());
        if self.density.len() != n * p || self.geometry.len() != n * p {
            return Err(CoreError::InvariantViolation(format!("design blobs do not match {n} designs of {p} pixels")).into());
        }
        if self.geometry.iter().any(|&g| g > 1) {
            return Err(CoreError::InvariantViolation("design geometry is not binary".into()).into());
        }
        Ok(())
    }
}

pub fn write_designs(set: &DesignSet, dir: &Path) -> Result<()> {
    set.validate()?;
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    write_blob(&dir.join(DENSITY), &f32_to_le(&set.density))?;
    write_blob(&dir.join(GEOMETRY), &set.geometry)?;
    let manifest = DesignManifest {
        format_version: opstress_core::dataset::FORMAT_VERSION,
        nx: set.nx,
        ny: set.ny,
        design_count: set.designs.len(),
        designs: set.designs.clone(),
    };
    write_json(&dir.join(MANIFEST), &manifest)
}

pub fn read_designs(dir: &Path) -> Result<DesignSet> {
    let m: DesignManifest = read_json(&dir.join(MANIFEST))?;
    if m.design_count != m.designs.len() {
        return Err(CoreError::InvariantViolation(format!("{} designs listed, {} declared", m.designs.len(), m.design_count)).into());
    }
    let set = DesignSet {
        nx: m.nx,
        ny: m.ny,
        designs: m.designs,
        density: f32_from_le(&read_blob(&dir.join(DENSITY))?, &dir.join(DENSITY))?,
        geometry: read_blob(&dir.join(GEOMETRY))?,
    };
    set.validate()?;
    Ok(set)
}
