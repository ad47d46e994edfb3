//! Channel attention (CAM), spatial attention (SAM), their dual-branch
//! composition (DAM), and the efficient channel attention (ECA) gate.
//!
//! CAM pipeline: concat(AvgPool(F), MaxPool(F)) over channels -> 1x1 conv
//! (2C -> 2C/r) -> layer norm -> ReLU -> 1x1 conv (-> C) -> sigmoid,
//! yielding a per-channel gate in (0, 1).
//!
//! SAM runs two branches at different receptive fields (1x1 and 3x3 entry
//! convolutions, each reduced to a single channel), multiplies them
//! elementwise and applies a sigmoid, yielding a per-pixel gate in (0, 1).
//!
//! DAM computes both gates from the same input in parallel. In the default
//! broadcast mode the output is ((F_A1 * F_in) * F_A2) + F_in. The
//! literal-concat mode instead concatenates [F_A1 (spatially broadcast),
//! F_in, F_A2, F_in] along channels in that order and projects back to C
//! channels with a 1x1 convolution; it exists for ablations.
//!
//! ECA gates channels with a 1-D convolution over the globally pooled
//! channel descriptor; the kernel size adapts to the channel count.

use crate::error::{Error, Result};
use crate::graph::{ModelGraph, PortRef};
use crate::layer::{LayerGrads, LayerNode};
use crate::ops::{
    Add2, BroadcastMul, BroadcastSpatial, ChannelConv1d, ConcatChannels, Conv2d, GlobalAvgPool,
    GlobalMaxPool, LayerNorm, Relu, Sigmoid,
};
use crate::rng::Rng;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DamMode {
    /// Gates applied by broadcast multiplication plus a residual add.
    Broadcast,
    /// Channel concatenation in written order plus a 1x1 projection.
    LiteralConcat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", untagged)]
pub enum EcaKernel {
    Adaptive(AdaptiveTag),
    Fixed(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptiveTag {
    Adaptive,
}

impl EcaKernel {
    pub fn adaptive() -> Self {
        EcaKernel::Adaptive(AdaptiveTag::Adaptive)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AttentionConfig {
    /// Channel reduction ratio r.
    pub reduction: usize,
    pub mode: DamMode,
    pub eca_kernel: EcaKernel,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            reduction: 8,
            mode: DamMode::Broadcast,
            eca_kernel: EcaKernel::adaptive(),
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self, channels: usize) -> Result<()> {
        if self.reduction == 0 || channels % self.reduction != 0 {
            return Err(Error::Config(format!(
                "attention: channels {channels} not divisible by reduction {}",
                self.reduction
            )));
        }
        if let EcaKernel::Fixed(k) = self.eca_kernel {
            if k % 2 == 0 {
                return Err(Error::Config(format!("eca kernel {k} must be odd")));
            }
        }
        Ok(())
    }
}

/// Adaptive ECA kernel size: the odd integer nearest to log2(C)/2 + 1/2
/// (ties to the smaller), floored at 3; fixed at 3 for C < 16.
pub fn adaptive_eca_kernel(channels: usize) -> usize {
    if channels < 16 {
        return 3;
    }
    let t = (channels as f64).log2() / 2.0 + 0.5;
    let lo = {
        let f = t.floor() as i64;
        if f % 2 == 0 {
            f - 1
        } else {
            f
        }
    };
    let hi = lo + 2;
    let k = if (t - lo as f64) <= (hi as f64 - t) {
        lo
    } else {
        hi
    };
    (k.max(3)) as usize
}

fn delegate_params(graph: &ModelGraph) -> Vec<&Tensor> {
    LayerNode::params(graph)
}

macro_rules! delegate_layer_node {
    ($ty:ty) => {
        impl LayerNode for $ty {
            fn arity(&self) -> usize {
                LayerNode::arity(&self.graph)
            }
            fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
                LayerNode::forward(&self.graph, inputs)
            }
            fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
                LayerNode::backward(&self.graph, inputs, grad_out)
            }
            fn params(&self) -> Vec<&Tensor> {
                delegate_params(&self.graph)
            }
            fn params_mut(&mut self) -> Vec<&mut Tensor> {
                LayerNode::params_mut(&mut self.graph)
            }
            fn param_names(&self) -> Vec<String> {
                LayerNode::param_names(&self.graph)
            }
        }
    };
}

// ---------------------------------------------------------------------------
// CAM
// ---------------------------------------------------------------------------

/// Channel attention: [B, C, W, H] -> gate [B, C, 1, 1] in (0, 1).
pub struct CamBlock {
    graph: ModelGraph,
}

impl CamBlock {
    pub fn new(channels: usize, cfg: &AttentionConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate(channels)?;
        let mid = 2 * channels / cfg.reduction;
        let mut g = ModelGraph::new(1);
        let ap = g.add("avg", Box::new(GlobalAvgPool), vec![PortRef::Input(0)]);
        let mp = g.add("max", Box::new(GlobalMaxPool), vec![PortRef::Input(0)]);
        let cat = g.add(
            "concat",
            Box::new(ConcatChannels::new(2)),
            vec![PortRef::Node(ap), PortRef::Node(mp)],
        );
        let c1 = g.add(
            "conv1",
            Box::new(Conv2d::new(2 * channels, mid, 1, 1, 0, rng)),
            vec![PortRef::Node(cat)],
        );
        let ln = g.add("ln", Box::new(LayerNorm::new(mid, true)), vec![PortRef::Node(c1)]);
        let relu = g.add("relu", Box::new(Relu), vec![PortRef::Node(ln)]);
        let c2 = g.add(
            "conv2",
            Box::new(Conv2d::new(mid, channels, 1, 1, 0, rng)),
            vec![PortRef::Node(relu)],
        );
        let sig = g.add("sigmoid", Box::new(Sigmoid), vec![PortRef::Node(c2)]);
        g.set_output(sig);
        Ok(CamBlock { graph: g })
    }
}

delegate_layer_node!(CamBlock);

/// The CAM gate for a feature map.
pub fn cam_forward(cam: &CamBlock, f: &Tensor) -> Result<Tensor> {
    LayerNode::forward(cam, &[f])
}

// ---------------------------------------------------------------------------
// SAM
// ---------------------------------------------------------------------------

/// Spatial attention: [B, C, W, H] -> gate [B, 1, W, H] in (0, 1).
pub struct SamBlock {
    graph: ModelGraph,
}

impl SamBlock {
    pub fn new(channels: usize, cfg: &AttentionConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate(channels)?;
        let mid = channels / cfg.reduction;
        let mut g = ModelGraph::new(1);
        // Fine branch: 1x1 entry.
        let a1 = g.add(
            "fine.conv1",
            Box::new(Conv2d::new(channels, mid, 1, 1, 0, rng)),
            vec![PortRef::Input(0)],
        );
        let a2 = g.add("fine.ln", Box::new(LayerNorm::new(mid, true)), vec![PortRef::Node(a1)]);
        let a3 = g.add("fine.relu", Box::new(Relu), vec![PortRef::Node(a2)]);
        let a4 = g.add(
            "fine.conv2",
            Box::new(Conv2d::new(mid, 1, 1, 1, 0, rng)),
            vec![PortRef::Node(a3)],
        );
        // Coarse branch: 3x3 entry, same padding.
        let b1 = g.add(
            "coarse.conv1",
            Box::new(Conv2d::new(channels, mid, 3, 1, 1, rng)),
            vec![PortRef::Input(0)],
        );
        let b2 = g.add(
            "coarse.ln",
            Box::new(LayerNorm::new(mid, true)),
            vec![PortRef::Node(b1)],
        );
        let b3 = g.add("coarse.relu", Box::new(Relu), vec![PortRef::Node(b2)]);
        let b4 = g.add(
            "coarse.conv2",
            Box::new(Conv2d::new(mid, 1, 1, 1, 0, rng)),
            vec![PortRef::Node(b3)],
        );
        let mul = g.add(
            "mul",
            Box::new(BroadcastMul),
            vec![PortRef::Node(a4), PortRef::Node(b4)],
        );
        let sig = g.add("sigmoid", Box::new(Sigmoid), vec![PortRef::Node(mul)]);
        g.set_output(sig);
        Ok(SamBlock { graph: g })
    }
}

delegate_layer_node!(SamBlock);

pub fn sam_forward(sam: &SamBlock, f: &Tensor) -> Result<Tensor> {
    LayerNode::forward(sam, &[f])
}

// ---------------------------------------------------------------------------
// DAM
// ---------------------------------------------------------------------------

/// Dual attention: both gates computed from the input in parallel, then
/// combined per the configured mode. Output shape equals input shape.
pub struct DamBlock {
    graph: ModelGraph,
    pub mode: DamMode,
}

impl DamBlock {
    pub fn new(
        channels: usize,
        width: usize,
        height: usize,
        cfg: &AttentionConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        cfg.validate(channels)?;
        let mut g = ModelGraph::new(1);
        let cam = g.add(
            "cam",
            Box::new(CamBlock::new(channels, cfg, rng)?),
            vec![PortRef::Input(0)],
        );
        let sam = g.add(
            "sam",
            Box::new(SamBlock::new(channels, cfg, rng)?),
            vec![PortRef::Input(0)],
        );
        match cfg.mode {
            DamMode::Broadcast => {
                let gated_c = g.add(
                    "gate_channel",
                    Box::new(BroadcastMul),
                    vec![PortRef::Node(cam), PortRef::Input(0)],
                );
                let gated_s = g.add(
                    "gate_spatial",
                    Box::new(BroadcastMul),
                    vec![PortRef::Node(gated_c), PortRef::Node(sam)],
                );
                let out = g.add(
                    "residual",
                    Box::new(Add2),
                    vec![PortRef::Node(gated_s), PortRef::Input(0)],
                );
                g.set_output(out);
            }
            DamMode::LiteralConcat => {
                let spread = g.add(
                    "spread",
                    Box::new(BroadcastSpatial {
                        w: width,
                        h: height,
                    }),
                    vec![PortRef::Node(cam)],
                );
                // (F_A1 ++ F_in) ++ F_A2 ++ F_in, channel axis, written order.
                let cat = g.add(
                    "concat",
                    Box::new(ConcatChannels::new(4)),
                    vec![
                        PortRef::Node(spread),
                        PortRef::Input(0),
                        PortRef::Node(sam),
                        PortRef::Input(0),
                    ],
                );
                let proj = g.add(
                    "project",
                    Box::new(Conv2d::new(3 * channels + 1, channels, 1, 1, 0, rng)),
                    vec![PortRef::Node(cat)],
                );
                g.set_output(proj);
            }
        }
        Ok(DamBlock {
            graph: g,
            mode: cfg.mode,
        })
    }

    /// Index of the CAM gate node inside the block, for inspection.
    pub fn channel_gate(&self, f: &Tensor) -> Result<Tensor> {
        let trace = self.graph.forward_trace(&[f])?;
        Ok(trace[self.graph.node_index("cam").unwrap()].clone())
    }

    pub fn spatial_gate(&self, f: &Tensor) -> Result<Tensor> {
        let trace = self.graph.forward_trace(&[f])?;
        Ok(trace[self.graph.node_index("sam").unwrap()].clone())
    }
}

delegate_layer_node!(DamBlock);

pub fn dam_forward(dam: &DamBlock, f: &Tensor) -> Result<Tensor> {
    LayerNode::forward(dam, &[f])
}

// ---------------------------------------------------------------------------
// ECA
// ---------------------------------------------------------------------------

/// Efficient channel attention: GAP -> 1-D channel convolution -> sigmoid
/// -> broadcast multiply. Output shape equals input shape.
pub struct EcaBlock {
    graph: ModelGraph,
    pub kernel: usize,
}

impl EcaBlock {
    pub fn new(channels: usize, cfg: &AttentionConfig, rng: &mut Rng) -> Result<Self> {
        let kernel = match cfg.eca_kernel {
            EcaKernel::Fixed(k) => {
                if k % 2 == 0 {
                    return Err(Error::Config(format!("eca kernel {k} must be odd")));
                }
                k
            }
            EcaKernel::Adaptive(_) => adaptive_eca_kernel(channels),
        };
        let mut g = ModelGraph::new(1);
        let gap = g.add("gap", Box::new(GlobalAvgPool), vec![PortRef::Input(0)]);
        let conv = g.add(
            "conv",
            Box::new(ChannelConv1d::new(kernel, rng)),
            vec![PortRef::Node(gap)],
        );
        let sig = g.add("sigmoid", Box::new(Sigmoid), vec![PortRef::Node(conv)]);
        let mul = g.add(
            "gate",
            Box::new(BroadcastMul),
            vec![PortRef::Input(0), PortRef::Node(sig)],
        );
        g.set_output(mul);
        Ok(EcaBlock { graph: g, kernel })
    }
}

delegate_layer_node!(EcaBlock);

pub fn eca_forward(eca: &EcaBlock, f: &Tensor) -> Result<Tensor> {
    LayerNode::forward(eca, &[f])
}

// ---------------------------------------------------------------------------
// Shortcut embedding
// ---------------------------------------------------------------------------

/// Aggregate a backbone block's output with an attention branch output by
/// elementwise addition, with no trailing ReLU.
pub fn shortcut_attention_embed(block_out: &Tensor, attention_out: &Tensor) -> Result<Tensor> {
    block_out.add(attention_out)
}
