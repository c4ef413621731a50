use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::Result;
use crate::nn::{Graph, Initializer, NodeId, ParamId, ParamStore, Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Conv {
    w: ParamId,
    b: ParamId,
    stride: usize,
    pad: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng>(s: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, k: usize, stride: usize, init: Initializer, rng: &mut R) -> Self {
        let w = s.add(format!("{name}.w"), init.sample(&[cout, cin, k, k], cin * k * k, cout * k * k, rng), true);
        let b = s.add(format!("{name}.b"), Tensor::zeros(&[cout]), true);
        Self { w, b, stride, pad: k / 2 }
    }

    pub fn apply<T: Real>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        g.conv2d(x, w, Some(b), self.stride, self.pad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn new<T: Real, R: Rng>(s: &mut ParamStore<T>, name: &str, i: usize, o: usize, init: Initializer, rng: &mut R) -> Self {
        let w = s.add(format!("{name}.w"), init.sample(&[i, o], i, o, rng), true);
        let b = s.add(format!("{name}.b"), Tensor::zeros(&[o]), true);
        Self { w, b }
    }

    pub fn apply<T: Real>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        g.dense(x, w, Some(b))
    }
}

/// Fully connected tower; ReLU after every layer, or every layer but the
/// last when `linear_output`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tower {
    layers: Vec<Dense>,
    linear_output: bool,
}

impl Tower {
    pub fn new<T: Real, R: Rng>(s: &mut ParamStore<T>, name: &str, widths: &[usize], linear_output: bool, rng: &mut R) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                Dense::new(s, &format!("{name}.{i}"), w[0], w[1], Initializer::GlorotUniform, rng)
            })
            .collect();
        Self { layers, linear_output }
    }

    pub fn apply<T: Real>(&self, g: &mut Graph<'_, T>, mut x: NodeId) -> Result<NodeId> {
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.apply(g, x)?;
            if !(self.linear_output && i + 1 == self.layers.len()) {
                x = g.relu(x);
            }
        }
        Ok(x)
    }

    pub fn last(&self) -> Option<&Dense> {
        self.layers.last()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BatchNorm {
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
}

impl BatchNorm {
    pub fn new<T: Real>(s: &mut ParamStore<T>, name: &str, c: usize) -> Self {
        Self {
            gamma: s.add(format!("{name}.gamma"), Tensor::full(&[c], T::one()), true),
            beta: s.add(format!("{name}.beta"), Tensor::zeros(&[c]), true),
            mean: s.add(format!("{name}.running_mean"), Tensor::zeros(&[c]), false),
            var: s.add(format!("{name}.running_var"), Tensor::full(&[c], T::one()), false),
        }
    }

    pub fn apply<T: Real>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let (gamma, beta) = (g.param(self.gamma), g.param(self.beta));
        g.batch_norm(x, gamma, beta, self.mean, self.var)
    }
}

/// Pre-activation residual block: `BN → ReLU → conv → BN → ReLU → conv`
/// plus an identity or 1×1 projection shortcut.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ResBlock {
    bn1: BatchNorm,
    conv1: Conv,
    bn2: BatchNorm,
    conv2: Conv,
    shortcut: Option<Conv>,
}

impl ResBlock {
    pub fn new<T: Real, R: Rng>(s: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, stride: usize, rng: &mut R) -> Self {
        let init = Initializer::GlorotUniform;
        let bn1 = BatchNorm::new(s, &format!("{name}.bn1"), cin);
        let conv1 = Conv::new(s, &format!("{name}.conv1"), cin, cout, 3, stride, init, rng);
        let bn2 = BatchNorm::new(s, &format!("{name}.bn2"), cout);
        let conv2 = Conv::new(s, &format!("{name}.conv2"), cout, cout, 3, 1, init, rng);
        let shortcut = (cin != cout || stride != 1).then(|| Conv::new(s, &format!("{name}.shortcut"), cin, cout, 1, stride, init, rng));
        Self { bn1, conv1, bn2, conv2, shortcut }
    }

    pub fn apply<T: Real>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let h = self.bn1.apply(g, x)?;
        let h = g.relu(h);
        let h = self.conv1.apply(g, h)?;
        let h = self.bn2.apply(g, h)?;
        let h = g.relu(h);
        let h = self.conv2.apply(g, h)?;
        let s = match &self.shortcut {
            Some(c) => c.apply(g, x)?,
            None => x,
        };
        g.add(h, s)
    }
}

/// First block: `conv → BN → ReLU → conv` with a 1×1 projection shortcut.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Stem {
    conv1: Conv,
    bn: BatchNorm,
    conv2: Conv,
    shortcut: Conv,
}

impl Stem {
    pub fn new<T: Real, R: Rng>(s: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, rng: &mut R) -> Self {
        let init = Initializer::GlorotUniform;
        Self {
            conv1: Conv::new(s, &format!("{name}.conv1"), cin, cout, 3, 1, init, rng),
            bn: BatchNorm::new(s, &format!("{name}.bn"), cout),
            conv2: Conv::new(s, &format!("{name}.conv2"), cout, cout, 3, 1, init, rng),
            shortcut: Conv::new(s, &format!("{name}.shortcut"), cin, cout, 1, 1, init, rng),
        }
    }

    pub fn apply<T: Real>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let h = self.conv1.apply(g, x)?;
        let h = self.bn.apply(g, h)?;
        let h = g.relu(h);
        let h = self.conv2.apply(g, h)?;
        let s = self.shortcut.apply(g, x)?;
        g.add(h, s)
    }
}

/// Intermediate nodes of a U-Net pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UNetNodes {
    pub output: NodeId,
    /// Deepest encoder features before fusion.
    pub bottleneck: NodeId,
    /// Bottleneck after the element-wise product with the fusion vector.
    pub fused: Option<NodeId>,
}

/// Residual U-Net: stride-2 residual encoder, nearest upsampling + 3×3 conv
/// decoder with additive skips, `BN → ReLU → 1×1` head.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct UNet {
    stem: Stem,
    down: Vec<ResBlock>,
    up: Vec<(Conv, ResBlock)>,
    head_bn: BatchNorm,
    head: Conv,
    dropout: f64,
}

impl UNet {
    pub fn new<T: Real, R: Rng>(s: &mut ParamStore<T>, name: &str, channels: &[usize], inputs: usize, outputs: usize, dropout: f64, rng: &mut R) -> Self {
        let stem = Stem::new(s, &format!("{name}.enc0"), inputs, channels[0], rng);
        let down = (1..channels.len())
            .map(|l| ResBlock::new(s, &format!("{name}.enc{l}"), channels[l - 1], channels[l], 2, rng))
            .collect();
        let up = (0..channels.len() - 1)
            .rev()
            .map(|l| {
                let conv = Conv::new(s, &format!("{name}.dec{l}.up"), channels[l + 1], channels[l], 3, 1, Initializer::GlorotUniform, rng);
                let block = ResBlock::new(s, &format!("{name}.dec{l}"), channels[l], channels[l], 1, rng);
                (conv, block)
            })
            .collect();
        let head_bn = BatchNorm::new(s, &format!("{name}.head_bn"), channels[0]);
        let head = Conv::new(s, &format!("{name}.head"), channels[0], outputs, 1, 1, Initializer::GlorotUniform, rng);
        Self { stem, down, up, head_bn, head, dropout }
    }

    pub fn apply<T: Real>(&self, g: &mut Graph<'_, T>, x: NodeId, fusion: Option<NodeId>) -> Result<UNetNodes> {
        let mut skips = Vec::with_capacity(self.down.len() + 1);
        let mut e = self.stem.apply(g, x)?;
        skips.push(e);
        for block in &self.down {
            e = block.apply(g, e)?;
            e = g.dropout(e, self.dropout);
            skips.push(e);
        }
        let bottleneck = e;
        let fused = fusion.map(|v| g.mul_channel(e, v)).transpose()?;
        let mut d = fused.unwrap_or(e);
        for ((conv, block), skip) in self.up.iter().zip(skips.iter().rev().skip(1)) {
            let u = g.upsample2x(d)?;
            let u = conv.apply(g, u)?;
            let u = g.add(u, *skip)?;
            d = block.apply(g, u)?;
            d = g.dropout(d, self.dropout);
        }
        let d = self.head_bn.apply(g, d)?;
        let d = g.relu(d);
        let output = self.head.apply(g, d)?;
        Ok(UNetNodes { output, bottleneck, fused })
    }
}
