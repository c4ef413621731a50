use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;

use crate::error::{Error, Result};

/// Symmetric matrix stored as its lower band.
///
/// Row `i` keeps columns `i - bw ..= i`; entries outside the band are
/// structurally zero. Structured-grid stiffness matrices have a band of
/// `2 nx + 5`, so this is the sparse format used throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            None
        } else {
            Some(i * (self.bw + 1) + self.bw - (i - j))
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.offset(i, j).map_or(0.0, |o| self.data[o])
    }

    /// Adds `v` at `(i, j)` (and its mirror). Panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let o = self.offset(i, j).expect("entry outside band");
        self.data[o] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let o = self.offset(i, j).expect("entry outside band");
        self.data[o] = v;
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.data[i * (self.bw + 1) + self.bw]
    }

    /// Lower-band entries of row `i`, columns `i - len + 1 ..= i`.
    fn row(&self, i: usize) -> &[f64] {
        let start = i * (self.bw + 1);
        let first = i.saturating_sub(self.bw);
        &self.data[start + self.bw - (i - first)..start + self.bw + 1]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let first = i.saturating_sub(self.bw);
            let row = self.row(i);
            let mut acc = 0.0;
            for (k, &a) in row.iter().enumerate() {
                let j = first + k;
                acc += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
            y[i] += acc;
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Zeroes row and column `i`, leaving `diag` on the diagonal.
    pub fn isolate(&mut self, i: usize, diag: f64) {
        let lo = i.saturating_sub(self.bw);
        let hi = (i + self.bw).min(self.n - 1);
        for j in lo..=hi {
            self.set(i, j, 0.0);
        }
        self.set(i, i, diag);
    }

    /// Column `j` restricted to the band, as `(row, value)` pairs.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = j.saturating_sub(self.bw);
        let hi = (j + self.bw).min(self.n - 1);
        (lo..=hi).map(move |i| (i, self.get(i, j)))
    }

    /// In-place banded Cholesky factorization `A = L Lᵀ`.
    ///
    /// A pivot that falls below `1e-11` of its original diagonal is treated as
    /// a loss of positive definiteness.
    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let first_i = i.saturating_sub(bw);
            for j in first_i..=i {
                let first = first_i.max(j.saturating_sub(bw));
                let len = j - first;
                let ri = i * w + bw - (i - first);
                let rj = j * w + bw - (j - first);
                let s = self.data[i * w + bw - (i - j)] - dot(&self.data[ri..ri + len], &self.data[rj..rj + len]);
                if i == j {
                    let orig = self.data[i * w + bw];
                    if !(s > 1e-11 * orig.abs()) || !(s > 0.0) || !s.is_finite() {
                        return Err(Error::SingularSystem { dof: i });
                    }
                    self.data[i * w + bw] = s.sqrt();
                } else {
                    self.data[i * w + bw - (i - j)] = s / self.data[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky { factor: self })
    }
}

/// Dot product with four independent accumulators.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Lower-triangular banded Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    factor: BandedMatrix,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.factor;
        let n = l.n;
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let row = l.row(i);
            let first = i + 1 - row.len();
            let mut s = y[i];
            for (k, &a) in row[..row.len() - 1].iter().enumerate() {
                s -= a * y[first + k];
            }
            y[i] = s / row[row.len() - 1];
        }
        for i in (0..n).rev() {
            let row = l.row(i);
            let first = i + 1 - row.len();
            y[i] /= row[row.len() - 1];
            let yi = y[i];
            for (k, &a) in row[..row.len() - 1].iter().enumerate() {
                y[first + k] -= a * yi;
            }
        }
        y
    }
}
