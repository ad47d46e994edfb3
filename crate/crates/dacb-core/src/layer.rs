//! The differentiable-operation contract.
//!
//! A [`LayerNode`] is a pure function of its inputs and parameters with an
//! explicit reverse-mode rule. `forward` never mutates the layer; `backward`
//! receives the same inputs the forward saw plus the gradient of a scalar
//! objective with respect to the output, and returns gradients for every
//! input and every parameter. Layers recompute whatever forward intermediates
//! they need inside `backward`, which keeps the contract stateless.
//!
//! Parameters are exposed positionally; `param_names` gives them stable names
//! for checkpoints and freeze bookkeeping.

use crate::error::Result;
use crate::tensor::Tensor;

pub struct LayerGrads {
    /// Gradient w.r.t. each input, in input order.
    pub inputs: Vec<Tensor>,
    /// Gradient w.r.t. each parameter, aligned with `params()`.
    pub params: Vec<Tensor>,
}

impl LayerGrads {
    pub fn inputs_only(inputs: Vec<Tensor>) -> Self {
        LayerGrads {
            inputs,
            params: Vec::new(),
        }
    }
}

pub trait LayerNode {
    /// Number of input tensors the layer consumes.
    fn arity(&self) -> usize {
        1
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads>;

    fn params(&self) -> Vec<&Tensor> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        Vec::new()
    }

    fn param_names(&self) -> Vec<String> {
        Vec::new()
    }
}

/// Forward of a single-input layer, for call sites that have one tensor.
pub fn forward1(layer: &dyn LayerNode, x: &Tensor) -> Result<Tensor> {
    layer.forward(&[x])
}
