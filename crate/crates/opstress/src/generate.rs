//! Batch data generation: topology optimization of sampled cases, then
//! elastoplastic simulation of every design under sampled loads. Cases run
//! in parallel; results depend only on their seeds, never on scheduling.

use std::time::Instant;

use opstress_core::dataset::{Dataset, DatasetManifest, DesignRecord, Provenance, SampleRecord};
use opstress_core::fe::{DensityField, ElasticProperties, StructuredGrid};
use opstress_core::plasticity::{sample_plastic_loads, simulate_case, PlasticLoadCase, PlasticMaterial, StressField};
use opstress_core::topopt::{binarize, run_topology_optimization, sample_to_case, ToSettings, BINARIZE_THRESHOLD};
use opstress_core::Error as CoreError;
use rayon::prelude::*;

use crate::container::DesignSet;
use crate::error::{HarnessError, Result};

/// Physical width of the domain in length units, at every resolution.
pub const DOMAIN_EXTENT: f64 = 128.0;
pub const THREADS_ENV: &str = "OPSTRESS_THREADS";

/// Grid with the fixed physical extent.
pub fn domain_grid(nx: usize, ny: usize) -> Result<StructuredGrid> {
    Ok(StructuredGrid::new(nx, ny, DOMAIN_EXTENT / nx as f64)?)
}

/// Worker pool sized by `OPSTRESS_THREADS`, or rayon's default.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| HarnessError::Invalid(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| HarnessError::Invalid(e.to_string()))
}

/// SplitMix64 finalizer, used to derive independent per-case seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A design record with its continuous and binarized densities.
type Optimized = (DesignRecord, Vec<f32>, Vec<u8>);

/// Optimizes `count` sampled cases on an `nx×ny` grid and binarizes them.
pub fn generate_designs(count: usize, nx: usize, ny: usize, seed: u64, settings: &ToSettings) -> Result<DesignSet> {
    let grid = domain_grid(nx, ny)?;
    let props = ElasticProperties::new(1.0, 0.3)?;
    let results: Vec<Result<Optimized>> = worker_pool()?.install(|| {
        (0..count as u64)
            .into_par_iter()
            .map(|id| {
                let case = sample_to_case(mix_seed(seed, id));
                let run = run_topology_optimization(&case, &grid, &props, settings)?;
                let binary = binarize(&run.density, BINARIZE_THRESHOLD);
                Ok((
                    DesignRecord { id, case },
                    run.density.rho.iter().map(|&r| r as f32).collect(),
                    binary.rho.iter().map(|&r| r as u8).collect(),
                ))
            })
            .collect()
    });
    let mut set = DesignSet { nx, ny, designs: Vec::with_capacity(count), density: Vec::new(), geometry: Vec::new() };
    for r in results {
        let (design, density, geometry) = r?;
        set.designs.push(design);
        set.density.extend(density);
        set.geometry.extend(geometry);
    }
    Ok(set)
}

/// Load cases of one design, reproducible from the run seed and design id.
pub fn design_loads(seed: u64, design: u64, count: usize) -> Vec<PlasticLoadCase> {
    sample_plastic_loads(mix_seed(seed, design), count)
}

/// Ground truth and wall-clock seconds of one simulation.
pub fn simulate_timed(geometry: &[u8], load: &PlasticLoadCase, nx: usize, ny: usize, increments: usize) -> Result<(StressField, f64)> {
    let grid = domain_grid(nx, ny)?;
    let mask: Vec<bool> = geometry.iter().map(|&g| g == 1).collect();
    let start = Instant::now();
    let density = DensityField::from_mask(nx, ny, &mask)?;
    let field = simulate_case(&density, load, &PlasticMaterial::steel(), &grid, increments)?;
    Ok((field, start.elapsed().as_secs_f64()))
}

/// A simulation that was skipped.
#[derive(Debug, Clone)]
pub struct SimulationFailure {
    pub provenance: Provenance,
    pub error: CoreError,
}

#[derive(Debug, Clone)]
pub struct SimulationBatch {
    pub dataset: Dataset,
    pub failures: Vec<SimulationFailure>,
    /// Mean wall-clock seconds per simulated case.
    pub seconds_per_case: f64,
}

/// Simulates every design under `loads_per_design` sampled loads. Cases
/// whose Newton iteration fails, or whose field is identically zero, are
/// reported and left out.
pub fn simulate_designs(set: &DesignSet, loads_per_design: usize, increments: usize, seed: u64) -> Result<SimulationBatch> {
    let jobs: Vec<(usize, u32, PlasticLoadCase)> = set
        .designs
        .iter()
        .enumerate()
        .flat_map(|(i, d)| design_loads(seed, d.id, loads_per_design).into_iter().enumerate().map(move |(k, l)| (i, k as u32, l)))
        .collect();
    let results: Vec<(Provenance, Result<(StressField, f64)>)> = worker_pool()?.install(|| {
        jobs.par_iter()
            .map(|&(i, load_index, load)| {
                let provenance = Provenance { design: set.designs[i].id, load_index };
                (provenance, simulate_timed(set.geometry(i), &load, set.nx, set.ny, increments))
            })
            .collect()
    });
    let mut records = Vec::with_capacity(jobs.len());
    let mut failures = Vec::new();
    let mut seconds = 0.0;
    for ((i, _, load), (provenance, r)) in jobs.iter().zip(results) {
        match r {
            Ok((field, t)) => {
                seconds += t;
                if field.vm.iter().all(|&v| v == 0.0) {
                    failures.push(SimulationFailure { provenance, error: CoreError::ZeroTruthNorm });
                } else {
                    records.push(SampleRecord::from_simulation(set.geometry(*i), load, &field, provenance));
                }
            }
            Err(HarnessError::Core(error)) if error.is_numerical() => failures.push(SimulationFailure { provenance, error }),
            Err(e) => return Err(e),
        }
    }
    let mut manifest = DatasetManifest::new(set.nx, set.ny, seed);
    manifest.designs = set.designs.clone();
    let dataset = Dataset::from_records(manifest, &records)?;
    let simulated = records.len() + failures.iter().filter(|f| f.error == CoreError::ZeroTruthNorm).count();
    Ok(SimulationBatch { dataset, failures, seconds_per_case: seconds / simulated.max(1) as f64 })
}
