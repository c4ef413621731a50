//! Central finite-difference check of reverse-mode gradients.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, Mode, NodeId, ParamId, ParamStore};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    pub mode: Mode,
    /// Finite-difference step.
    pub step: f64,
    /// Gradients smaller than this are compared in absolute terms.
    pub floor: f64,
    /// Coordinates checked per parameter tensor; larger tensors are sampled.
    pub per_param: usize,
    /// Seed of the graph (dropout masks) and of the coordinate sampling.
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { mode: Mode::Train, step: 1e-4, floor: 1e-6, per_param: 8, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because the loss has a kink (a ReLU switching)
    /// within the step.
    pub skipped: usize,
    /// `(parameter name, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradcheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_error <= tol
    }
}

/// Compares [`Graph::backward`] with central differences of the scalar
/// built by `forward`, perturbing trainable entries of `store` in place.
/// The store is restored before returning.
pub fn gradcheck<F>(store: &mut ParamStore<f64>, opts: &GradcheckOptions, forward: F) -> Result<GradcheckReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<NodeId>,
{
    let eval = |store: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new(store, opts.mode, opts.seed);
        let loss = forward(&mut g)?;
        Ok(g.value(loss).data()[0])
    };
    let grads = {
        let mut g = Graph::new(store, opts.mode, opts.seed);
        let loss = forward(&mut g)?;
        g.backward(loss)?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
    let mut report = GradcheckReport::default();
    let ids: Vec<ParamId> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    for id in ids {
        let n = store.get(id).len();
        let picks: Vec<usize> = if n <= opts.per_param { (0..n).collect() } else { sample(&mut rng, n, opts.per_param).into_vec() };
        for k in picks {
            let analytic = grads.param(id).map_or(0.0, |g| g.data()[k]);
            let orig = store.get(id).data()[k];
            let at = |delta: f64, store: &mut ParamStore<f64>| -> Result<f64> {
                store.get_mut(id).data_mut()[k] = orig + delta;
                eval(store)
            };
            let h = opts.step;
            let (fp, fm, f0) = (at(h, store)?, at(-h, store)?, at(0.0, store)?);
            let (dp, dm) = ((fp - f0) / h, (f0 - fm) / h);
            let gap = (dp - dm).abs();
            let mut numeric = (fp - fm) / (2.0 * h);
            if gap > 1e-3 * dp.abs().max(dm.abs()).max(opts.floor) {
                let h2 = h / 10.0;
                let (fp2, fm2) = (at(h2, store)?, at(-h2, store)?);
                let gap2 = ((fp2 - f0) / h2 - (f0 - fm2) / h2).abs();
                if gap2 > 0.3 * gap {
                    store.get_mut(id).data_mut()[k] = orig;
                    report.skipped += 1;
                    continue;
                }
                // kink between h/10 and h: the shorter step does not cross it
                numeric = (fp2 - fm2) / (2.0 * h2);
            }
            store.get_mut(id).data_mut()[k] = orig;
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(opts.floor);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((store.entry(id).name.clone(), k, analytic, numeric));
            }
        }
    }
    Ok(report)
}
