//! The three stress surrogates: a standalone residual U-Net, a vanilla
//! DeepONet with fully connected towers, and the DeepONet whose trunk is a
//! residual U-Net fused with the load branch at the bottleneck.

mod layers;
mod spec;

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use layers::UNetNodes;
use layers::{Tower, UNet};
pub use spec::{
    unet_params, ModelKind, ModelSpec, BASE_WIDTHS, LEVELS, PAPER_RDON_PARAMS, PAPER_RESUNET_PARAMS, PAPER_VANILLA_PARAMS,
    PARAM_TOLERANCE,
};

use crate::error::{Error, Result};
use crate::nn::{Graph, NodeId, ParamId, ParamStore, Real, Tensor};

/// Network inputs in the layout each kind expects.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelInput<T> {
    /// `N×3×H×W`: geometry and the two load scalars as constant images.
    Image(Tensor<T>),
    /// Branch `N×(H·W+2)` (flattened geometry and loads) and trunk `P×2`
    /// query coordinates shared by every sample.
    Operator { branch: Tensor<T>, trunk: Tensor<T> },
    /// Geometry `N×1×H×W` and loads `N×2`.
    Fused { geometry: Tensor<T>, loads: Tensor<T> },
}

impl<T: Real> ModelInput<T> {
    pub fn batch_size(&self) -> usize {
        match self {
            ModelInput::Image(x) => x.shape()[0],
            ModelInput::Operator { branch, .. } => branch.shape()[0],
            ModelInput::Fused { geometry, .. } => geometry.shape()[0],
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelInput::Image(_) => ModelKind::ResUNet,
            ModelInput::Operator { .. } => ModelKind::VanillaDeeponet,
            ModelInput::Fused { .. } => ModelKind::Rdon,
        }
    }
}

/// Named intermediate nodes of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardNodes {
    /// `N×1×H×W`, non-negative.
    pub output: NodeId,
    pub unet: Option<UNetNodes>,
    /// Load-branch vector multiplied into the bottleneck.
    pub fusion: Option<NodeId>,
    /// Final branch vector of the DeepONets.
    pub branch: Option<NodeId>,
    /// Trunk features of the DeepONets before the dot product.
    pub trunk: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
enum Net {
    ResUNet(UNet),
    Vanilla { branch: Tower, trunk: Tower, b0: ParamId },
    Rdon { trunk: UNet, pre: Tower, post: Tower, b0: ParamId },
}

/// A built surrogate: parameter handles into a [`ParamStore`] plus its spec.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    spec: ModelSpec,
    net: Net,
}

impl Surrogate {
    /// Appends the model's parameters to `store` in checkpoint order.
    pub fn build<T: Real>(spec: &ModelSpec, store: &mut ParamStore<T>, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = match spec.kind {
            ModelKind::ResUNet => Net::ResUNet(UNet::new(store, "unet", &spec.channels, 3, 1, spec.dropout, &mut rng)),
            ModelKind::VanillaDeeponet => Net::Vanilla {
                branch: Tower::new(store, "branch", &spec.branch, true, &mut rng),
                trunk: Tower::new(store, "trunk", &spec.trunk, false, &mut rng),
                b0: store.add("b0", Tensor::zeros(&[1]), true),
            },
            ModelKind::Rdon => Net::Rdon {
                trunk: UNet::new(store, "trunk", &spec.channels, 1, spec.hidden_dim, spec.dropout, &mut rng),
                pre: Tower::new(store, "branch_pre", &spec.branch, true, &mut rng),
                post: Tower::new(store, "branch_post", &spec.trunk, true, &mut rng),
                b0: store.add("b0", Tensor::zeros(&[1]), true),
            },
        };
        Ok(Self { spec: spec.clone(), net })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    /// Predicted normalized stress, `N×1×H×W`.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, input: &ModelInput<T>) -> Result<NodeId> {
        self.forward_nodes(g, input).map(|n| n.output)
    }

    pub fn forward_nodes<T: Real>(&self, g: &mut Graph<'_, T>, input: &ModelInput<T>) -> Result<ForwardNodes> {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let check = |t: &Tensor<T>, want: &[usize]| {
            if t.shape() == want {
                Ok(())
            } else {
                Err(Error::shape("surrogate input", want, t.shape()))
            }
        };
        let n = input.batch_size();
        match (&self.net, input) {
            (Net::ResUNet(unet), ModelInput::Image(x)) => {
                check(x, &[n, 3, ny, nx])?;
                let x = g.input(x.clone());
                let nodes = unet.apply(g, x, None)?;
                let output = g.relu(nodes.output);
                Ok(ForwardNodes { output, unet: Some(nodes), fusion: None, branch: None, trunk: None })
            }
            (Net::Vanilla { branch, trunk, b0 }, ModelInput::Operator { branch: xb, trunk: xt }) => {
                check(xb, &[n, nx * ny + 2])?;
                let p = xt.shape()[0];
                check(xt, &[p, 2])?;
                if p != nx * ny {
                    return Err(Error::shape("surrogate trunk points", &[nx * ny, 2], xt.shape()));
                }
                let (xb, xt) = (g.input(xb.clone()), g.input(xt.clone()));
                let b = branch.apply(g, xb)?;
                let t = trunk.apply(g, xt)?;
                let y = g.outer_dot(b, t)?;
                let b0 = g.param(*b0);
                let y = g.add_scalar(y, b0)?;
                let y = g.relu(y);
                let output = g.reshape(y, &[n, 1, ny, nx])?;
                Ok(ForwardNodes { output, unet: None, fusion: None, branch: Some(b), trunk: Some(t) })
            }
            (Net::Rdon { trunk, pre, post, b0 }, ModelInput::Fused { geometry, loads }) => {
                check(geometry, &[n, 1, ny, nx])?;
                check(loads, &[n, 2])?;
                let (x, l) = (g.input(geometry.clone()), g.input(loads.clone()));
                let fusion = pre.apply(g, l)?;
                let nodes = trunk.apply(g, x, Some(fusion))?;
                let pooled = g.global_avg_pool(nodes.fused.expect("fusion requested"))?;
                let b = post.apply(g, pooled)?;
                let y = g.channel_dot(nodes.output, b)?;
                let b0 = g.param(*b0);
                let y = g.add_scalar(y, b0)?;
                let output = g.relu(y);
                Ok(ForwardNodes { output, unet: Some(nodes), fusion: Some(fusion), branch: Some(b), trunk: Some(nodes.output) })
            }
            _ => Err(Error::InvalidInput(alloc::format!(
                "{} model cannot take {} input",
                self.spec.kind.name(),
                input.kind().name()
            ))),
        }
    }

    /// Handles of the final layer of the pre-fusion load tower of an RDON.
    pub fn fusion_layer(&self) -> Option<(ParamId, ParamId)> {
        match &self.net {
            Net::Rdon { pre, .. } => pre.last().map(|d| (d.w, d.b)),
            _ => None,
        }
    }

    /// The output bias shared by the DeepONet kinds.
    pub fn output_bias(&self) -> Option<ParamId> {
        match &self.net {
            Net::Vanilla { b0, .. } | Net::Rdon { b0, .. } => Some(*b0),
            Net::ResUNet(_) => None,
        }
    }
}

/// Trainable-parameter groups by name prefix (`trunk.enc1`, `branch.0`, …).
pub fn parameter_groups<T: Real>(store: &ParamStore<T>) -> Vec<(alloc::string::String, Vec<ParamId>)> {
    let mut groups: Vec<(alloc::string::String, Vec<ParamId>)> = Vec::new();
    for (id, p) in store.iter().filter(|(_, p)| p.trainable) {
        let key: alloc::string::String = p.name.rsplit_once('.').map_or(p.name.as_str(), |(head, _)| head).into();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, ids)) => ids.push(id),
            None => groups.push((key, alloc::vec![id])),
        }
    }
    groups
}

#[cfg(test)]
mod tests;
