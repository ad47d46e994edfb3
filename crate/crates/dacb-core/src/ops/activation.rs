//! Pointwise activations and the class-axis softmax.

use crate::error::Result;
use crate::layer::{LayerGrads, LayerNode};
use crate::tensor::Tensor;

/// Numerically stable logistic function, clamped into the open interval
/// (0, 1) so saturated inputs cannot round to exactly 0 or 1.
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub struct Relu;

impl LayerNode for Relu {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        Ok(inputs[0].map(|v| v.max(0.0)))
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let x = inputs[0];
        let mut dx = grad_out.clone();
        for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
            if v <= 0.0 {
                *d = 0.0;
            }
        }
        Ok(LayerGrads::inputs_only(vec![dx]))
    }
}

pub struct Sigmoid;

impl LayerNode for Sigmoid {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        Ok(inputs[0].map(sigmoid_scalar))
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let x = inputs[0];
        let mut dx = grad_out.clone();
        for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
            let s = sigmoid_scalar(v);
            *d *= s * (1.0 - s);
        }
        Ok(LayerGrads::inputs_only(vec![dx]))
    }
}

/// Row softmax over the class axis of a [B, P] tensor, stabilized by
/// max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let [b, p] = logits.dims2("softmax")?;
    let mut out = Tensor::zeros(&[b, p]);
    for i in 0..b {
        let row = &logits.data()[i * p..(i + 1) * p];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let dst = &mut out.data_mut()[i * p..(i + 1) * p];
        let mut sum = 0.0;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - m).exp();
            sum += *d;
        }
        for d in dst.iter_mut() {
            *d /= sum;
        }
    }
    Ok(out)
}

/// Pull a loss gradient on probabilities back through the row softmax:
/// dL/dz_j = p_j * (g_j - sum_k g_k p_k).
pub fn softmax_rows_backward(probs: &Tensor, grad_probs: &Tensor) -> Result<Tensor> {
    let [b, p] = probs.dims2("softmax backward")?;
    let mut dz = Tensor::zeros(&[b, p]);
    for i in 0..b {
        let pr = &probs.data()[i * p..(i + 1) * p];
        let g = &grad_probs.data()[i * p..(i + 1) * p];
        let inner: f64 = pr.iter().zip(g).map(|(a, b)| a * b).sum();
        let dst = &mut dz.data_mut()[i * p..(i + 1) * p];
        for j in 0..p {
            dst[j] = pr[j] * (g[j] - inner);
        }
    }
    Ok(dz)
}

pub struct SoftmaxRows;

impl LayerNode for SoftmaxRows {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        softmax_rows(inputs[0])
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let probs = softmax_rows(inputs[0])?;
        Ok(LayerGrads::inputs_only(vec![softmax_rows_backward(
            &probs, grad_out,
        )?]))
    }
}
