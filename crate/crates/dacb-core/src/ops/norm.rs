//! Layer normalization over the channel and spatial axes of each sample,
//! with optional per-channel scale/shift.

use crate::error::Result;
use crate::layer::{LayerGrads, LayerNode};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

pub struct LayerNorm {
    pub eps: f64,
    /// Per-channel (gamma, beta); `None` disables the affine step.
    pub affine: Option<(Tensor, Tensor)>,
}

impl LayerNorm {
    pub fn new(channels: usize, affine: bool) -> Self {
        LayerNorm {
            eps: LAYER_NORM_EPS,
            affine: affine.then(|| (Tensor::full(&[channels], 1.0), Tensor::zeros(&[channels]))),
        }
    }

    fn stats(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, var)
    }
}

impl LayerNode for LayerNorm {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        let [b, c, w, h] = x.dims4("layer_norm")?;
        let m = c * w * h;
        let mut out = Tensor::zeros(x.dims());
        for bi in 0..b {
            let src = &x.data()[bi * m..(bi + 1) * m];
            let (mean, var) = Self::stats(src);
            let inv = 1.0 / (var + self.eps).sqrt();
            let dst = &mut out.data_mut()[bi * m..(bi + 1) * m];
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = (v - mean) * inv;
            }
            if let Some((gamma, beta)) = &self.affine {
                for ch in 0..c {
                    let (g, bta) = (gamma.data()[ch], beta.data()[ch]);
                    for d in &mut dst[ch * w * h..(ch + 1) * w * h] {
                        *d = *d * g + bta;
                    }
                }
            }
        }
        Ok(out)
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let x = inputs[0];
        let [b, c, w, h] = x.dims4("layer_norm")?;
        let m = c * w * h;
        let mut dx = Tensor::zeros(x.dims());
        let mut dgamma = Tensor::zeros(&[c]);
        let mut dbeta = Tensor::zeros(&[c]);
        for bi in 0..b {
            let src = &x.data()[bi * m..(bi + 1) * m];
            let g = &grad_out.data()[bi * m..(bi + 1) * m];
            let (mean, var) = Self::stats(src);
            let inv = 1.0 / (var + self.eps).sqrt();
            // xhat and the gradient w.r.t. it (scaled by gamma when affine).
            let xhat: Vec<f64> = src.iter().map(|&v| (v - mean) * inv).collect();
            let mut gh: Vec<f64> = g.to_vec();
            if let Some((gamma, _)) = &self.affine {
                for ch in 0..c {
                    for (i, xh) in xhat[ch * w * h..(ch + 1) * w * h].iter().enumerate() {
                        let idx = ch * w * h + i;
                        dgamma.data_mut()[ch] += g[idx] * xh;
                        dbeta.data_mut()[ch] += g[idx];
                        gh[idx] *= gamma.data()[ch];
                    }
                }
            }
            let mean_gh = gh.iter().sum::<f64>() / m as f64;
            let mean_ghx = gh.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / m as f64;
            let dst = &mut dx.data_mut()[bi * m..(bi + 1) * m];
            for i in 0..m {
                dst[i] = inv * (gh[i] - mean_gh - xhat[i] * mean_ghx);
            }
        }
        let params = if self.affine.is_some() {
            vec![dgamma, dbeta]
        } else {
            Vec::new()
        };
        Ok(LayerGrads {
            inputs: vec![dx],
            params,
        })
    }

    fn params(&self) -> Vec<&Tensor> {
        match &self.affine {
            Some((g, b)) => vec![g, b],
            None => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match &mut self.affine {
            Some((g, b)) => vec![g, b],
            None => Vec::new(),
        }
    }

    fn param_names(&self) -> Vec<String> {
        if self.affine.is_some() {
            vec!["gamma".into(), "beta".into()]
        } else {
            Vec::new()
        }
    }
}
