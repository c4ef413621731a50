//! Loss, the masked relative L2 error, and the summary statistics and
//! binned analyses reported over a test set.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default histogram resolution for per-case errors.
pub const HISTOGRAM_BINS: usize = 50;
/// Bins of the error-versus-parameter analysis.
pub const PARAMETER_BINS: usize = 10;

fn same_len(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { op, expected: vec![a], got: vec![b] })
    }
}

/// Mean squared difference over every entry; inputs are already normalized.
pub fn scaled_mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    same_len("scaled_mse", target.len(), pred.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// `‖truth − pred∘ρ‖₂ / ‖truth‖₂` for one case.
pub fn mrl2e(pred: &[f64], truth: &[f64], rho: &[f64]) -> Result<f64> {
    same_len("mrl2e", truth.len(), pred.len())?;
    same_len("mrl2e", truth.len(), rho.len())?;
    let denom = truth.iter().map(|t| t * t).sum::<f64>();
    if denom == 0.0 {
        return Err(Error::ZeroTruthNorm);
    }
    let num = truth.iter().zip(pred).zip(rho).map(|((t, p), r)| (t - p * r) * (t - p * r)).sum::<f64>();
    Ok((num / denom).sqrt())
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Location statistics of a list of per-case errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let s = sorted(values);
        let n = s.len();
        let m = mean(values);
        let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
        Some(Self { count: n, mean: m, std: var.sqrt(), min: s[0], max: s[n - 1], median })
    }
}

/// Index into the ascending order of `values` of the nearest-rank
/// `p`-th percentile, `p ∈ [0, 100]`; `p = 0` selects the smallest value.
pub fn nearest_rank(n: usize, p: f64) -> usize {
    assert!(n > 0, "percentile of an empty list");
    let rank = (p / 100.0 * n as f64).ceil() as usize;
    rank.clamp(1, n) - 1
}

/// Position in `values` of the case at the nearest-rank `p`-th percentile.
pub fn percentile_case(values: &[f64], p: f64) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    Some(order[nearest_rank(values.len(), p)])
}

fn bin_of(value: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let b = ((value - lo) / (hi - lo) * bins as f64).floor();
    if b < 0.0 {
        0
    } else {
        (b as usize).min(bins - 1)
    }
}

fn edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
}

/// Uniform-width histogram; the upper edge belongs to the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        assert!(bins > 0);
        let mut counts = vec![0; bins];
        for &v in values {
            counts[bin_of(v, lo, hi, bins)] += 1;
        }
        Self { edges: edges(lo, hi, bins), counts }
    }

    /// [`HISTOGRAM_BINS`] bins over `[0, max]`.
    pub fn of_errors(values: &[f64]) -> Self {
        let max = values.iter().copied().fold(0.0, f64::max);
        Self::new(values, 0.0, if max > 0.0 { max } else { 1.0 }, HISTOGRAM_BINS)
    }
}

/// Mean of `values` grouped by equal-width bins of `keys` over `[lo, hi]`.
/// Keys outside the range fall into the end bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedMeans {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// `None` for empty bins.
    pub means: Vec<Option<f64>>,
}

impl BinnedMeans {
    pub fn new(keys: &[f64], values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        same_len("binned_means", keys.len(), values.len())?;
        assert!(bins > 0);
        let mut counts = vec![0; bins];
        let mut sums = vec![0.0; bins];
        for (&k, &v) in keys.iter().zip(values) {
            let b = bin_of(k, lo, hi, bins);
            counts[b] += 1;
            sums[b] += v;
        }
        let means = sums.iter().zip(&counts).map(|(&s, &c)| (c > 0).then(|| s / c as f64)).collect();
        Ok(Self { edges: edges(lo, hi, bins), counts, means })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mrl2e_hand_cases() {
        let truth = [3.0, 4.0];
        let ones = [1.0, 1.0];
        assert_eq!(mrl2e(&truth, &truth, &ones).unwrap(), 0.0);
        assert!((mrl2e(&[0.0, 0.0], &truth, &ones).unwrap() - 1.0).abs() <= 1e-12);
        assert!((mrl2e(&[3.0, 0.0], &truth, &ones).unwrap() - 0.8).abs() <= 1e-12);
    }

    #[test]
    fn mrl2e_errors() {
        assert_eq!(mrl2e(&[1.0], &[0.0], &[1.0]), Err(Error::ZeroTruthNorm));
        assert!(matches!(mrl2e(&[1.0], &[1.0, 2.0], &[1.0, 1.0]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn scaled_mse_cases() {
        let t = [0.2, 0.4, 0.0, 1.0];
        assert_eq!(scaled_mse(&t, &t).unwrap(), 0.0);
        let p: Vec<f64> = t.iter().map(|v| v + 0.1).collect();
        assert!((scaled_mse(&p, &t).unwrap() - 0.01).abs() <= 1e-15);
        assert!(scaled_mse(&p[..3], &t).is_err());
    }

    #[test]
    fn nearest_rank_convention() {
        // 5 values: 25th percentile is rank ceil(1.25) = 2
        assert_eq!(nearest_rank(5, 0.0), 0);
        assert_eq!(nearest_rank(5, 25.0), 1);
        assert_eq!(nearest_rank(5, 50.0), 2);
        assert_eq!(nearest_rank(5, 75.0), 3);
        assert_eq!(nearest_rank(5, 100.0), 4);
        assert_eq!(percentile_case(&[0.3, 0.1, 0.5, 0.2, 0.4], 50.0), Some(0));
        assert_eq!(percentile_case(&[], 50.0), None);
    }

    #[test]
    fn parameter_bins_over_vf_range() {
        let b = BinnedMeans::new(&[0.2, 0.6, 0.24, 0.41], &[1.0, 2.0, 3.0, 4.0], 0.2, 0.6, PARAMETER_BINS).unwrap();
        assert_eq!(b.edges.len(), 11);
        for (i, e) in b.edges.iter().enumerate() {
            assert!((e - (0.2 + 0.04 * i as f64)).abs() <= 1e-15);
        }
        assert_eq!(b.counts, [2, 0, 0, 0, 0, 1, 0, 0, 0, 1]);
        assert_eq!(b.means[0], Some(2.0));
        assert_eq!(b.means[9], Some(2.0));
        assert_eq!(b.means[1], None);
    }

    #[test]
    fn error_histogram_covers_zero_to_max() {
        let h = Histogram::of_errors(&[0.0, 0.5, 1.0, 0.25]);
        assert_eq!(h.counts.len(), 50);
        assert_eq!(h.edges[50], 1.0);
        assert_eq!(h.counts.iter().sum::<usize>(), 4);
        assert_eq!(h.counts[49], 1);
        assert_eq!(h.counts[0], 1);
    }

    proptest! {
        #[test]
        fn median_matches_sorted_middle(mut v in prop::collection::vec(-1e3f64..1e3, 0..40).prop_map(|mut v| { if v.len() % 2 == 0 { v.push(0.5); } v })) {
            let s = Summary::of(&v).unwrap();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assert_eq!(s.median, v[v.len() / 2]);
            prop_assert_eq!(s.min, v[0]);
            prop_assert_eq!(s.max, v[v.len() - 1]);
        }

        #[test]
        fn summary_moments_match_two_pass(v in prop::collection::vec(0.0f64..2.0, 1..60)) {
            let s = Summary::of(&v).unwrap();
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            prop_assert!((s.mean - m).abs() <= 1e-12);
            prop_assert!((s.std - var.sqrt()).abs() <= 1e-12);
        }

        #[test]
        fn masking_ignores_void_predictions(
            vals in prop::collection::vec((0.0f64..500.0, 0.0f64..500.0, any::<bool>(), -1e3f64..1e3), 2..50)
        ) {
            let truth: Vec<f64> = vals.iter().map(|v| if v.2 { v.0 + 1.0 } else { 0.0 }).collect();
            let rho: Vec<f64> = vals.iter().map(|v| v.2 as u8 as f64).collect();
            let pred: Vec<f64> = vals.iter().map(|v| v.1).collect();
            let perturbed: Vec<f64> = vals.iter().map(|v| if v.2 { v.1 } else { v.1 + v.3 }).collect();
            if truth.iter().any(|&t| t > 0.0) {
                prop_assert_eq!(mrl2e(&pred, &truth, &rho).unwrap(), mrl2e(&perturbed, &truth, &rho).unwrap());
            }
        }

        #[test]
        fn mse_matches_double_loop(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p: Vec<f64> = (0..rows * cols).map(|_| rng.random()).collect();
            let t: Vec<f64> = (0..rows * cols).map(|_| rng.random()).collect();
            let mut acc = 0.0;
            for r in 0..rows {
                for c in 0..cols {
                    let d = p[r * cols + c] - t[r * cols + c];
                    acc += d * d;
                }
            }
            prop_assert!((scaled_mse(&p, &t).unwrap() - acc / (rows * cols) as f64).abs() <= 1e-7);
        }

        #[test]
        fn histogram_and_bins_partition_all_values(v in prop::collection::vec(0.0f64..3.0, 1..80)) {
            let h = Histogram::of_errors(&v);
            prop_assert_eq!(h.counts.iter().sum::<usize>(), v.len());
            let b = BinnedMeans::new(&v, &v, 0.0, 3.0, PARAMETER_BINS).unwrap();
            prop_assert_eq!(b.counts.iter().sum::<usize>(), v.len());
            for (i, m) in b.means.iter().enumerate() {
                if let Some(m) = m {
                    prop_assert!(*m >= b.edges[i] - 1e-12 && *m <= b.edges[i + 1] + 1e-12);
                }
            }
        }
    }
}
