//! Fully connected layer: y = x W^T + b with weight [out, in].

use crate::error::{Error, Result};
use crate::layer::{LayerGrads, LayerNode};
use crate::ops::matmul::{matmul_nn, matmul_nt, matmul_tn};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        Linear {
            weight: Tensor::from_fn(&[outputs, inputs], |_| rng.uniform(-bound, bound)),
            bias: Tensor::zeros(&[outputs]),
        }
    }
}

impl LayerNode for Linear {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        let [b, din] = x.dims2("linear")?;
        let [dout, win] = self.weight.dims2("linear weight")?;
        if din != win {
            return Err(Error::Dimension(format!(
                "linear: input width {din} does not match weight width {win}"
            )));
        }
        let mut out = Tensor::zeros(&[b, dout]);
        matmul_nt(x.data(), self.weight.data(), out.data_mut(), b, din, dout);
        for i in 0..b {
            for (o, bv) in out.data_mut()[i * dout..(i + 1) * dout]
                .iter_mut()
                .zip(self.bias.data())
            {
                *o += bv;
            }
        }
        Ok(out)
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let x = inputs[0];
        let [b, din] = x.dims2("linear")?;
        let [dout, _] = self.weight.dims2("linear weight")?;
        let mut dx = Tensor::zeros(&[b, din]);
        matmul_nn(grad_out.data(), self.weight.data(), dx.data_mut(), b, dout, din);
        let mut dw = Tensor::zeros(self.weight.dims());
        matmul_tn(grad_out.data(), x.data(), dw.data_mut(), dout, b, din);
        let mut db = Tensor::zeros(self.bias.dims());
        for i in 0..b {
            for (acc, g) in db
                .data_mut()
                .iter_mut()
                .zip(&grad_out.data()[i * dout..(i + 1) * dout])
            {
                *acc += g;
            }
        }
        Ok(LayerGrads {
            inputs: vec![dx],
            params: vec![dw, db],
        })
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn param_names(&self) -> Vec<String> {
        vec!["weight".into(), "bias".into()]
    }
}

/// [B, C, W, H] -> [B, C*W*H], for feeding spatial maps to a linear head.
pub struct Flatten;

impl LayerNode for Flatten {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        let [b, c, w, h] = x.dims4("flatten")?;
        x.reshape(&[b, c * w * h])
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        Ok(LayerGrads::inputs_only(vec![
            grad_out.reshape(inputs[0].dims())?
        ]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_matches_manual_product() {
        let lin = Linear {
            weight: Tensor::from_vec(vec![2, 3], vec![1.0, 0.0, -1.0, 2.0, 1.0, 0.5]).unwrap(),
            bias: Tensor::from_vec(vec![2], vec![0.1, -0.2]).unwrap(),
        };
        let x = Tensor::from_vec(vec![1, 3], vec![3.0, 4.0, 5.0]).unwrap();
        let y = lin.forward(&[&x]).unwrap();
        assert!((y.data()[0] - (3.0 - 5.0 + 0.1)).abs() < 1e-12);
        assert!((y.data()[1] - (6.0 + 4.0 + 2.5 - 0.2)).abs() < 1e-12);
    }
}
