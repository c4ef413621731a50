use std::fs;
use std::path::Path;
use std::time::Instant;

use opstress_core::dataset::{make_batch, Dataset, DatasetManifest, Provenance, SampleRecord};
use opstress_core::metrics::{mean, mrl2e, percentile_case, BinnedMeans, Histogram, Summary, PARAMETER_BINS};
use opstress_core::nn::Graph;
use opstress_core::plasticity::{PlasticLoadCase, StressField};
use opstress_core::topopt::ToCase;
use opstress_core::Error as CoreError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::container::write_json;
use crate::error::{HarnessError, Result};
use crate::generate::worker_pool;
use crate::render::{write_field_png, Palette};

/// A predicted stress field and the wall-clock time it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// MPa, zero on void elements.
    pub field: StressField,
    pub seconds: f64,
}

/// Surrogate stress field of one geometry and load.
pub fn predict(ckpt: &Checkpoint, geometry: &[u8], theta: f64, umag: f64) -> Result<Prediction> {
    let spec = ckpt.model.spec();
    let (nx, ny) = (spec.nx, spec.ny);
    if geometry.len() != nx * ny || geometry.iter().any(|&g| g > 1) {
        return Err(CoreError::InvalidInput(format!("geometry must be {nx}x{ny} binary values")).into());
    }
    PlasticLoadCase::new(theta, umag, 0)?;
    let start = Instant::now();
    let record = SampleRecord {
        geometry: geometry.to_vec(),
        theta: theta as f32,
        umag: umag as f32,
        stress: vec![0.0; nx * ny],
        provenance: Provenance { design: 0, load_index: 0 },
    };
    let one = Dataset::from_records(DatasetManifest::new(nx, ny, 0), &[record])?;
    let batch = make_batch::<f32>(&one, &[0], spec.kind)?;
    let mut g = Graph::inference(&ckpt.store);
    let y = ckpt.model.forward(&mut g, &batch.input)?;
    let scale = one.manifest.stress_scale;
    let vm = g.value(y).data().iter().zip(geometry).map(|(&v, &m)| if m == 1 { v as f64 * scale } else { 0.0 }).collect();
    Ok(Prediction { field: StressField { nx, ny, vm }, seconds: start.elapsed().as_secs_f64() })
}

/// Surrogate prediction of a stored sample, through [`predict`].
pub fn predict_sample(ckpt: &Checkpoint, data: &Dataset, i: usize) -> Result<Prediction> {
    let (theta, umag) = data.load(i);
    predict(ckpt, data.geometry(i), theta as f64, umag as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    /// Sample index in the container.
    pub index: usize,
    pub design: u64,
    pub load_index: u32,
    pub vf: f64,
    pub theta: f64,
    pub umag: f64,
    pub mrl2e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cases: Vec<CaseResult>,
    /// Samples left out because their ground truth is identically zero.
    pub excluded: Vec<usize>,
    pub summary: Summary,
    pub histogram: Histogram,
    pub by_vf: BinnedMeans,
    pub by_umag: BinnedMeans,
    pub by_theta: BinnedMeans,
    /// Mean wall-clock seconds of one prediction.
    pub seconds_per_case: f64,
}

impl EvalReport {
    pub fn errors(&self) -> Vec<f64> {
        self.cases.iter().map(|c| c.mrl2e).collect()
    }

    pub fn mean(&self) -> f64 {
        self.summary.mean
    }

    /// Cases at the best, 25th, 50th, 75th percentile and worst error.
    pub fn ranked_cases(&self) -> Vec<(&'static str, &CaseResult)> {
        let errors = self.errors();
        [("best", 0.0), ("p25", 25.0), ("p50", 50.0), ("p75", 75.0), ("worst", 100.0)]
            .into_iter()
            .filter_map(|(label, p)| percentile_case(&errors, p).map(|k| (label, &self.cases[k])))
            .collect()
    }
}

/// Report over `indices` given predicted fields (MPa) in the same order.
pub fn report_from_predictions(data: &Dataset, indices: &[usize], predictions: &[Prediction]) -> Result<EvalReport> {
    if indices.len() != predictions.len() {
        return Err(HarnessError::Invalid(format!("{} predictions for {} cases", predictions.len(), indices.len())));
    }
    let mut cases = Vec::with_capacity(indices.len());
    let mut excluded = Vec::new();
    for (&i, p) in indices.iter().zip(predictions) {
        let truth: Vec<f64> = data.stress(i).iter().map(|&s| s as f64).collect();
        let rho: Vec<f64> = data.geometry(i).iter().map(|&g| g as f64).collect();
        match mrl2e(&p.field.vm, &truth, &rho) {
            Ok(e) => {
                let (theta, umag) = data.load(i);
                let provenance = data.manifest.provenance[i];
                cases.push(CaseResult {
                    index: i,
                    design: provenance.design,
                    load_index: provenance.load_index,
                    vf: data.design_vf(i).unwrap_or(f64::NAN),
                    theta: theta as f64,
                    umag: umag as f64,
                    mrl2e: e,
                });
            }
            Err(CoreError::ZeroTruthNorm) => {
                eprintln!("warning: sample {i} has an all-zero ground truth and is excluded");
                excluded.push(i);
            }
            Err(e) => return Err(e.into()),
        }
    }
    let errors: Vec<f64> = cases.iter().map(|c| c.mrl2e).collect();
    let summary = Summary::of(&errors).ok_or_else(|| HarnessError::Invalid("no cases to evaluate".into()))?;
    let keys = |f: fn(&CaseResult) -> f64| cases.iter().map(f).collect::<Vec<f64>>();
    let (theta_lo, theta_hi) = PlasticLoadCase::THETA_RANGE;
    let (umag_lo, umag_hi) = PlasticLoadCase::UMAG_RANGE;
    let (vf_lo, vf_hi) = ToCase::VF_RANGE;
    Ok(EvalReport {
        histogram: Histogram::of_errors(&errors),
        by_vf: BinnedMeans::new(&keys(|c| c.vf), &errors, vf_lo, vf_hi, PARAMETER_BINS)?,
        by_umag: BinnedMeans::new(&keys(|c| c.umag), &errors, umag_lo, umag_hi, PARAMETER_BINS)?,
        by_theta: BinnedMeans::new(&keys(|c| c.theta), &errors, theta_lo, theta_hi, PARAMETER_BINS)?,
        seconds_per_case: mean(&predictions.iter().map(|p| p.seconds).collect::<Vec<_>>()),
        cases,
        excluded,
        summary,
    })
}

/// Predicts every case in `indices` (in parallel, one case per forward
/// pass) and scores it.
pub fn evaluate(ckpt: &Checkpoint, data: &Dataset, indices: &[usize]) -> Result<(EvalReport, Vec<Prediction>)> {
    let spec = ckpt.model.spec();
    if (spec.nx, spec.ny) != (data.manifest.nx, data.manifest.ny) {
        return Err(CoreError::InvalidInput(format!(
            "checkpoint grid {}x{} does not match dataset grid {}x{}",
            spec.nx, spec.ny, data.manifest.nx, data.manifest.ny
        ))
        .into());
    }
    let predictions: Vec<Prediction> =
        worker_pool()?.install(|| indices.par_iter().map(|&i| predict_sample(ckpt, data, i)).collect::<Result<_>>())?;
    let report = report_from_predictions(data, indices, &predictions)?;
    Ok((report, predictions))
}

/// Writes `report.json` and, for each percentile-ranked case, truth,
/// prediction and signed-error PNGs plus a CSV of the three fields.
pub fn write_report(report: &EvalReport, data: &Dataset, indices: &[usize], predictions: &[Prediction], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    write_json(&dir.join("report.json"), report)?;
    let (nx, ny) = (data.manifest.nx, data.manifest.ny);
    for (label, case) in report.ranked_cases() {
        let k = indices.iter().position(|&i| i == case.index).expect("case comes from indices");
        let truth: Vec<f64> = data.stress(case.index).iter().map(|&s| s as f64).collect();
        let pred = &predictions[k].field.vm;
        let error: Vec<f64> = pred.iter().zip(&truth).map(|(p, t)| p - t).collect();
        let mask = data.geometry(case.index);
        let top = truth.iter().chain(pred).copied().fold(0.0, f64::max);
        let span = error.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        write_field_png(&dir.join(format!("{label}_truth.png")), nx, ny, &truth, mask, Palette::Magnitude, top)?;
        write_field_png(&dir.join(format!("{label}_prediction.png")), nx, ny, pred, mask, Palette::Magnitude, top)?;
        write_field_png(&dir.join(format!("{label}_error.png")), nx, ny, &error, mask, Palette::Signed, span)?;
        let path = dir.join(format!("{label}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["row", "col", "solid", "truth_mpa", "prediction_mpa", "error_mpa"])?;
        for e in 0..nx * ny {
            w.serialize((e / nx, e % nx, mask[e], truth[e], pred[e], error[e]))?;
        }
        w.flush().map_err(HarnessError::io(&path))?;
    }
    Ok(())
}
