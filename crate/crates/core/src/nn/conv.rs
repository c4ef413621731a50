//! im2col lowering for 2-D cross-correlation.

use super::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeometry {
    pub fn new(c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Result<Self> {
        if stride == 0 || k == 0 || h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::shape("conv2d", &[k, k], &[h + 2 * pad, w + 2 * pad]));
        }
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        Ok(Self { c, h, w, k, stride, pad, ho, wo })
    }

    /// Rows of the lowered matrix, `C·k·k`.
    pub fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    /// Output positions per channel.
    pub fn positions(&self) -> usize {
        self.ho * self.wo
    }

    /// 1×1, stride 1, no padding: the input already is the lowered matrix.
    pub fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn source(&self, o: usize, kk: usize, n: usize) -> Option<usize> {
        let i = (o * self.stride + kk) as isize - self.pad as isize;
        (i >= 0 && (i as usize) < n).then_some(i as usize)
    }

    /// Output columns `lo..hi` whose input column `ox·stride + kj − pad` is
    /// inside the image.
    fn valid_columns(&self, kj: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kj).div_ceil(self.stride);
        let hi = if self.w + self.pad > kj { (self.w + self.pad - kj).div_ceil(self.stride).min(self.wo) } else { 0 };
        (lo.min(hi), hi)
    }

    /// Lowers one `C×H×W` image into `rows × positions`.
    pub fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let l = self.positions();
        for ch in 0..self.c {
            let plane = &x[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (ch * self.k + ki) * self.k + kj;
                    let dst = &mut cols[row * l..(row + 1) * l];
                    let (lo, hi) = self.valid_columns(kj);
                    for oy in 0..self.ho {
                        let line = &mut dst[oy * self.wo..(oy + 1) * self.wo];
                        let Some(iy) = self.source(oy, ki, self.h) else {
                            line.fill(T::zero());
                            continue;
                        };
                        line[..lo].fill(T::zero());
                        line[hi..].fill(T::zero());
                        let src = &plane[iy * self.w..(iy + 1) * self.w];
                        let first = lo * self.stride + kj - self.pad;
                        if self.stride == 1 {
                            line[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                        } else {
                            for (j, v) in line[lo..hi].iter_mut().enumerate() {
                                *v = src[first + j * self.stride];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds a lowered gradient back onto one `C×H×W` image.
    pub fn col2im_add<T: Real>(&self, cols: &[T], dx: &mut [T]) {
        let l = self.positions();
        for ch in 0..self.c {
            let plane = &mut dx[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (ch * self.k + ki) * self.k + kj;
                    let src = &cols[row * l..(row + 1) * l];
                    let (lo, hi) = self.valid_columns(kj);
                    for oy in 0..self.ho {
                        let Some(iy) = self.source(oy, ki, self.h) else { continue };
                        let line = &src[oy * self.wo + lo..oy * self.wo + hi];
                        let first = lo * self.stride + kj - self.pad;
                        let dst = &mut plane[iy * self.w..(iy + 1) * self.w];
                        for (j, &v) in line.iter().enumerate() {
                            dst[first + j * self.stride] += v;
                        }
                    }
                }
            }
        }
    }
}
