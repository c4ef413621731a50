use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three surrogate architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(rename = "resunet")]
    ResUNet,
    VanillaDeeponet,
    Rdon,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::ResUNet, ModelKind::VanillaDeeponet, ModelKind::Rdon];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::ResUNet => "resunet",
            ModelKind::VanillaDeeponet => "vanilla_deeponet",
            ModelKind::Rdon => "rdon",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Published trainable-parameter counts at 128×128.
pub const PAPER_RESUNET_PARAMS: usize = 3_569_441;
pub const PAPER_VANILLA_PARAMS: usize = 3_505_677;
pub const PAPER_RDON_PARAMS: usize = 3_575_056;
/// Relative tolerance of a searched schedule against its target count.
pub const PARAM_TOLERANCE: f64 = 0.02;
/// Encoder levels of the U-Nets, the input resolution included.
pub const LEVELS: usize = 4;
/// Base widths tried by the schedule search (doubling per level).
pub const BASE_WIDTHS: core::ops::RangeInclusive<usize> = 4..=64;

/// Declarative description of one surrogate.
///
/// For the U-Net kinds `channels` is the encoder schedule, `branch` the load
/// tower before fusion (input 2, output = bottleneck width) and `trunk` the
/// tower after fusion (output `hidden_dim`). For the vanilla DeepONet
/// `branch` and `trunk` are the two fully connected towers, input and output
/// layers included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub nx: usize,
    pub ny: usize,
    pub hidden_dim: usize,
    pub channels: Vec<usize>,
    pub branch: Vec<usize>,
    pub trunk: Vec<usize>,
    pub dropout: f64,
    pub target_params: usize,
}

fn conv(k: usize, i: usize, o: usize) -> usize {
    k * k * i * o + o
}

fn bn(c: usize) -> usize {
    2 * c
}

fn dense_tower(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn res_block(i: usize, o: usize, projection: bool) -> usize {
    bn(i) + conv(3, i, o) + bn(o) + conv(3, o, o) + if projection { conv(1, i, o) } else { 0 }
}

/// Trainable parameters of a U-Net with the given schedule.
pub fn unet_params(channels: &[usize], inputs: usize, outputs: usize) -> usize {
    let c0 = channels[0];
    let mut total = conv(3, inputs, c0) + bn(c0) + conv(3, c0, c0) + conv(1, inputs, c0);
    for l in 1..channels.len() {
        total += res_block(channels[l - 1], channels[l], true);
    }
    for l in (0..channels.len() - 1).rev() {
        total += conv(3, channels[l + 1], channels[l]) + res_block(channels[l], channels[l], false);
    }
    total + bn(c0) + conv(1, c0, outputs)
}

fn doubling(base: usize) -> Vec<usize> {
    (0..LEVELS).map(|l| base << l).collect()
}

impl ModelSpec {
    /// Closed-form trainable-parameter count.
    pub fn closed_form_params(&self) -> usize {
        match self.kind {
            ModelKind::ResUNet => unet_params(&self.channels, 3, 1),
            ModelKind::VanillaDeeponet => dense_tower(&self.branch) + dense_tower(&self.trunk) + 1,
            ModelKind::Rdon => unet_params(&self.channels, 1, self.hidden_dim) + dense_tower(&self.branch) + dense_tower(&self.trunk) + 1,
        }
    }

    /// `closed_form_params / target − 1`.
    pub fn deviation(&self) -> f64 {
        self.closed_form_params() as f64 / self.target_params as f64 - 1.0
    }

    pub fn bottleneck(&self) -> usize {
        self.channels.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(alloc::format!("{}: {msg}", self.kind.name())));
        if self.hidden_dim == 0 || self.nx == 0 || self.ny == 0 || !(0.0..1.0).contains(&self.dropout) {
            return bad("hidden_dim, grid and dropout must be positive and dropout < 1");
        }
        match self.kind {
            ModelKind::VanillaDeeponet => {
                if self.branch.first() != Some(&(self.nx * self.ny + 2)) || self.trunk.first() != Some(&2) {
                    return bad("tower inputs must be nx·ny+2 and 2");
                }
                if self.branch.last() != Some(&self.hidden_dim) || self.trunk.last() != Some(&self.hidden_dim) {
                    return bad("tower outputs must equal hidden_dim");
                }
                if self.branch.iter().chain(&self.trunk).any(|&w| w == 0) {
                    return bad("zero-width layer");
                }
            }
            ModelKind::ResUNet | ModelKind::Rdon => {
                let levels = self.channels.len();
                if levels < 2 || self.channels.contains(&0) {
                    return bad("channel schedule needs at least 2 non-zero levels");
                }
                let f = 1 << (levels - 1);
                if self.nx % f != 0 || self.ny % f != 0 {
                    return bad("grid must be divisible by 2^(levels-1)");
                }
                if self.kind == ModelKind::Rdon {
                    let b = self.bottleneck();
                    if self.branch.first() != Some(&2) || self.branch.last() != Some(&b) || self.branch.contains(&0) {
                        return bad("pre-fusion tower must map 2 to the bottleneck width");
                    }
                    if self.trunk.first() != Some(&b) || self.trunk.last() != Some(&self.hidden_dim) || self.trunk.contains(&0) {
                        return bad("post-fusion tower must map the bottleneck width to hidden_dim");
                    }
                }
            }
        }
        Ok(())
    }

    fn unet_with_base(kind: ModelKind, nx: usize, ny: usize, hidden_dim: usize, base: usize, target: usize) -> Self {
        let channels = doubling(base);
        let b = channels[LEVELS - 1];
        let (branch, trunk) = match kind {
            ModelKind::Rdon => (vec![2, 64, 128, b], vec![b, 64, hidden_dim]),
            _ => (Vec::new(), Vec::new()),
        };
        let hidden_dim = if kind == ModelKind::Rdon { hidden_dim } else { 1 };
        Self { kind, nx, ny, hidden_dim, channels, branch, trunk, dropout: 0.02, target_params: target }
    }

    /// U-Net kinds: the doubling schedule whose count is nearest `target`.
    /// Fails with `SpecInfeasible` when the nearest misses by more than
    /// `tolerance`.
    pub fn search(kind: ModelKind, nx: usize, ny: usize, hidden_dim: usize, target: usize, tolerance: f64) -> Result<Self> {
        if kind == ModelKind::VanillaDeeponet {
            return Err(Error::InvalidInput("the vanilla DeepONet has fixed widths".into()));
        }
        let best = BASE_WIDTHS
            .map(|b| Self::unet_with_base(kind, nx, ny, hidden_dim, b, target))
            .min_by(|a, b| a.deviation().abs().total_cmp(&b.deviation().abs()))
            .expect("non-empty search range");
        if best.deviation().abs() > tolerance {
            return Err(Error::SpecInfeasible { target, tolerance });
        }
        best.validate()?;
        Ok(best)
    }

    /// Full-scale (128×128) architectures.
    pub fn paper(kind: ModelKind) -> Result<Self> {
        match kind {
            ModelKind::ResUNet => Self::search(kind, 128, 128, 1, PAPER_RESUNET_PARAMS, PARAM_TOLERANCE),
            ModelKind::Rdon => Self::search(kind, 128, 128, 32, PAPER_RDON_PARAMS, PARAM_TOLERANCE),
            ModelKind::VanillaDeeponet => Ok(Self {
                kind,
                nx: 128,
                ny: 128,
                hidden_dim: 256,
                channels: Vec::new(),
                branch: vec![16386, 175, 256, 256, 256, 128, 256],
                trunk: vec![2, 256, 256, 256, 256, 256, 256],
                dropout: 0.0,
                target_params: PAPER_VANILLA_PARAMS,
            }),
        }
    }

    /// Reduced architectures of roughly `target` parameters on an `n×n` grid.
    pub fn scaled(kind: ModelKind, n: usize, target: usize) -> Result<Self> {
        match kind {
            ModelKind::ResUNet => Self::search(kind, n, n, 1, target, 0.25),
            ModelKind::Rdon => Self::search(kind, n, n, 32, target, 0.25),
            ModelKind::VanillaDeeponet => {
                let w = if target >= 100_000 { 128 } else { 32 };
                let spec = Self {
                    kind,
                    nx: n,
                    ny: n,
                    hidden_dim: w,
                    channels: Vec::new(),
                    branch: vec![n * n + 2, w, w, w, w, w / 2, w],
                    trunk: vec![2, w / 2, w / 2, w / 2, w / 2, w / 2, w],
                    dropout: 0.0,
                    target_params: target,
                };
                spec.validate()?;
                Ok(spec)
            }
        }
    }
}
