//! Convolution layers.
//!
//! All convolutions use cross-correlation semantics (no kernel flip) and
//! zero padding, matching the orientation the test oracles assume. Tensors
//! are [B, C, W, H] row-major with H fastest.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::layer::{LayerGrads, LayerNode};
use crate::ops::matmul::{matmul_nn, matmul_nt, matmul_tn};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub(crate) fn out_extent(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        return Err(Error::Dimension(format!(
            "kernel {k} larger than padded input {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

fn im2col(
    x: &[f64],
    ci: usize,
    w: usize,
    h: usize,
    k: usize,
    stride: usize,
    pad: usize,
    wo: usize,
    ho: usize,
    col: &mut [f64],
) {
    let l = wo * ho;
    debug_assert_eq!(col.len(), ci * k * k * l);
    for c in 0..ci {
        let plane = &x[c * w * h..(c + 1) * w * h];
        for di in 0..k {
            for dj in 0..k {
                let row = &mut col[((c * k + di) * k + dj) * l..((c * k + di) * k + dj + 1) * l];
                for ox in 0..wo {
                    let sx = (ox * stride + di) as isize - pad as isize;
                    let dst = &mut row[ox * ho..(ox + 1) * ho];
                    if sx < 0 || sx >= w as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[sx as usize * h..(sx as usize + 1) * h];
                    for oy in 0..ho {
                        let sy = (oy * stride + dj) as isize - pad as isize;
                        dst[oy] = if sy < 0 || sy >= h as isize {
                            0.0
                        } else {
                            src[sy as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(
    col: &[f64],
    ci: usize,
    w: usize,
    h: usize,
    k: usize,
    stride: usize,
    pad: usize,
    wo: usize,
    ho: usize,
    x: &mut [f64],
) {
    let l = wo * ho;
    for c in 0..ci {
        let plane = &mut x[c * w * h..(c + 1) * w * h];
        for di in 0..k {
            for dj in 0..k {
                let row = &col[((c * k + di) * k + dj) * l..((c * k + di) * k + dj + 1) * l];
                for ox in 0..wo {
                    let sx = (ox * stride + di) as isize - pad as isize;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let dst = &mut plane[sx as usize * h..(sx as usize + 1) * h];
                    for oy in 0..ho {
                        let sy = (oy * stride + dj) as isize - pad as isize;
                        if sy >= 0 && sy < h as isize {
                            dst[sy as usize] += row[ox * ho + oy];
                        }
                    }
                }
            }
        }
    }
}

/// 2-D convolution with weight [Co, Ci, k, k] and per-channel bias.
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    /// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero bias.
    pub fn new(ci: usize, co: usize, k: usize, stride: usize, pad: usize, rng: &mut Rng) -> Self {
        let fan_in = (ci * k * k) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let weight = Tensor::from_fn(&[co, ci, k, k], |_| rng.uniform(-bound, bound));
        Conv2d {
            weight,
            bias: Tensor::zeros(&[co]),
            stride,
            pad,
        }
    }

    /// "Same" 3x3 / 1x1 convolution at stride 1 (pad = (k-1)/2).
    pub fn same(ci: usize, co: usize, k: usize, rng: &mut Rng) -> Self {
        Conv2d::new(ci, co, k, 1, (k - 1) / 2, rng)
    }

    fn geometry(&self, x: &Tensor) -> Result<(usize, usize, usize, usize, usize, usize, usize)> {
        let [b, ci, w, h] = x.dims4("conv2d")?;
        let [co, wci, k, k2] = self.weight.dims4("conv2d weight")?;
        if wci != ci {
            return Err(Error::Dimension(format!(
                "conv2d: input has {ci} channels, weight expects {wci}"
            )));
        }
        if k != k2 {
            return Err(Error::Dimension("conv2d: non-square kernel".into()));
        }
        let wo = out_extent(w, k, self.stride, self.pad)?;
        let ho = out_extent(h, k, self.stride, self.pad)?;
        Ok((b, ci, w, h, co, wo, ho))
    }
}

impl LayerNode for Conv2d {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        let (b, ci, w, h, co, wo, ho) = self.geometry(x)?;
        let k = self.weight.dims()[2];
        let (r, l) = (ci * k * k, wo * ho);
        let mut out = Tensor::zeros(&[b, co, wo, ho]);
        let xs = x.data();
        let wd = self.weight.data();
        let bias = self.bias.data();
        out.data_mut()
            .par_chunks_mut(co * l)
            .enumerate()
            .for_each(|(bi, chunk)| {
                let mut col = vec![0.0; r * l];
                im2col(
                    &xs[bi * ci * w * h..(bi + 1) * ci * w * h],
                    ci,
                    w,
                    h,
                    k,
                    self.stride,
                    self.pad,
                    wo,
                    ho,
                    &mut col,
                );
                matmul_nn(wd, &col, chunk, co, r, l);
                for oc in 0..co {
                    let bch = bias[oc];
                    for v in &mut chunk[oc * l..(oc + 1) * l] {
                        *v += bch;
                    }
                }
            });
        Ok(out)
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let x = inputs[0];
        let (b, ci, w, h, co, wo, ho) = self.geometry(x)?;
        let [gb, gco, gwo, gho] = grad_out.dims4("conv2d grad")?;
        if [gb, gco, gwo, gho] != [b, co, wo, ho] {
            return Err(Error::Dimension(format!(
                "conv2d: grad shape {:?} does not match output [{b}, {co}, {wo}, {ho}]",
                grad_out.dims()
            )));
        }
        let k = self.weight.dims()[2];
        let (r, l) = (ci * k * k, wo * ho);
        let xs = x.data();
        let gs = grad_out.data();
        let wd = self.weight.data();

        let mut dx = Tensor::zeros(x.dims());
        // Per-sample weight-gradient partials are summed in sample order so
        // the result does not depend on the thread count.
        let partials: Vec<Vec<f64>> = dx
            .data_mut()
            .par_chunks_mut(ci * w * h)
            .enumerate()
            .map(|(bi, dx_chunk)| {
                let mut col = vec![0.0; r * l];
                im2col(
                    &xs[bi * ci * w * h..(bi + 1) * ci * w * h],
                    ci,
                    w,
                    h,
                    k,
                    self.stride,
                    self.pad,
                    wo,
                    ho,
                    &mut col,
                );
                let g = &gs[bi * co * l..(bi + 1) * co * l];
                let mut dw = vec![0.0; co * r];
                matmul_nt(g, &col, &mut dw, co, l, r);
                let mut dcol = vec![0.0; r * l];
                matmul_tn(wd, g, &mut dcol, r, co, l);
                col2im(
                    &dcol,
                    ci,
                    w,
                    h,
                    k,
                    self.stride,
                    self.pad,
                    wo,
                    ho,
                    dx_chunk,
                );
                dw
            })
            .collect();

        let mut dweight = Tensor::zeros(self.weight.dims());
        for p in &partials {
            for (acc, v) in dweight.data_mut().iter_mut().zip(p) {
                *acc += v;
            }
        }
        let mut dbias = Tensor::zeros(self.bias.dims());
        for bi in 0..b {
            for oc in 0..co {
                let s: f64 = gs[(bi * co + oc) * l..(bi * co + oc + 1) * l].iter().sum();
                dbias.data_mut()[oc] += s;
            }
        }
        Ok(LayerGrads {
            inputs: vec![dx],
            params: vec![dweight, dbias],
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

/// Depthwise convolution: weight [C, 1, k, k], each channel filtered
/// independently. The pointwise half of a separable block is a 1x1 `Conv2d`.
pub struct DepthwiseConv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
}

impl DepthwiseConv2d {
    pub fn new(c: usize, k: usize, stride: usize, pad: usize, rng: &mut Rng) -> Self {
        let fan_in = (k * k) as f64;
        let bound = (6.0 / fan_in).sqrt();
        DepthwiseConv2d {
            weight: Tensor::from_fn(&[c, 1, k, k], |_| rng.uniform(-bound, bound)),
            bias: Tensor::zeros(&[c]),
            stride,
            pad,
        }
    }

    fn geometry(&self, x: &Tensor) -> Result<(usize, usize, usize, usize, usize, usize)> {
        let [b, c, w, h] = x.dims4("depthwise conv")?;
        let wc = self.weight.dims()[0];
        if wc != c {
            return Err(Error::Dimension(format!(
                "depthwise conv: input has {c} channels, weight expects {wc}"
            )));
        }
        let k = self.weight.dims()[2];
        let wo = out_extent(w, k, self.stride, self.pad)?;
        let ho = out_extent(h, k, self.stride, self.pad)?;
        Ok((b, c, w, h, wo, ho))
    }
}

impl LayerNode for DepthwiseConv2d {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        let (b, c, w, h, wo, ho) = self.geometry(x)?;
        let k = self.weight.dims()[2];
        let mut out = Tensor::zeros(&[b, c, wo, ho]);
        let xs = x.data();
        let wd = self.weight.data();
        let bias = self.bias.data();
        out.data_mut()
            .par_chunks_mut(c * wo * ho)
            .enumerate()
            .for_each(|(bi, chunk)| {
                for ch in 0..c {
                    let plane = &xs[(bi * c + ch) * w * h..(bi * c + ch + 1) * w * h];
                    let ker = &wd[ch * k * k..(ch + 1) * k * k];
                    let dst = &mut chunk[ch * wo * ho..(ch + 1) * wo * ho];
                    for ox in 0..wo {
                        for oy in 0..ho {
                            let mut acc = bias[ch];
                            for di in 0..k {
                                let sx = (ox * self.stride + di) as isize - self.pad as isize;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                for dj in 0..k {
                                    let sy = (oy * self.stride + dj) as isize - self.pad as isize;
                                    if sy >= 0 && sy < h as isize {
                                        acc += ker[di * k + dj]
                                            * plane[sx as usize * h + sy as usize];
                                    }
                                }
                            }
                            dst[ox * ho + oy] = acc;
                        }
                    }
                }
            });
        Ok(out)
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let x = inputs[0];
        let (_b, c, w, h, wo, ho) = self.geometry(x)?;
        let k = self.weight.dims()[2];
        let xs = x.data();
        let gs = grad_out.data();
        let wd = self.weight.data();

        let mut dx = Tensor::zeros(x.dims());
        let partials: Vec<(Vec<f64>, Vec<f64>)> = dx
            .data_mut()
            .par_chunks_mut(c * w * h)
            .enumerate()
            .map(|(bi, dx_chunk)| {
                let mut dw = vec![0.0; c * k * k];
                let mut db = vec![0.0; c];
                for ch in 0..c {
                    let plane = &xs[(bi * c + ch) * w * h..(bi * c + ch + 1) * w * h];
                    let g = &gs[(bi * c + ch) * wo * ho..(bi * c + ch + 1) * wo * ho];
                    let ker = &wd[ch * k * k..(ch + 1) * k * k];
                    let dplane = &mut dx_chunk[ch * w * h..(ch + 1) * w * h];
                    for ox in 0..wo {
                        for oy in 0..ho {
                            let gv = g[ox * ho + oy];
                            db[ch] += gv;
                            for di in 0..k {
                                let sx = (ox * self.stride + di) as isize - self.pad as isize;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                for dj in 0..k {
                                    let sy =
                                        (oy * self.stride + dj) as isize - self.pad as isize;
                                    if sy >= 0 && sy < h as isize {
                                        let src = sx as usize * h + sy as usize;
                                        dw[ch * k * k + di * k + dj] += gv * plane[src];
                                        dplane[src] += gv * ker[di * k + dj];
                                    }
                                }
                            }
                        }
                    }
                }
                (dw, db)
            })
            .collect();

        let mut dweight = Tensor::zeros(self.weight.dims());
        let mut dbias = Tensor::zeros(self.bias.dims());
        for (dw, db) in &partials {
            for (acc, v) in dweight.data_mut().iter_mut().zip(dw) {
                *acc += v;
            }
            for (acc, v) in dbias.data_mut().iter_mut().zip(db) {
                *acc += v;
            }
        }
        Ok(LayerGrads {
            inputs: vec![dx],
            params: vec![dweight, dbias],
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

/// 1-D convolution across the channel axis of a [B, C, 1, 1] descriptor,
/// one shared kernel plus a scalar bias. Zero padding keeps C channels.
pub struct ChannelConv1d {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ChannelConv1d {
    pub fn new(k: usize, rng: &mut Rng) -> Self {
        assert!(k % 2 == 1, "channel conv kernel must be odd");
        let bound = (6.0 / k as f64).sqrt();
        ChannelConv1d {
            weight: Tensor::from_fn(&[k], |_| rng.uniform(-bound, bound)),
            bias: Tensor::zeros(&[1]),
        }
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.dims()[0]
    }
}

impl LayerNode for ChannelConv1d {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        let [b, c, w, h] = x.dims4("channel conv1d")?;
        if w != 1 || h != 1 {
            return Err(Error::Dimension(format!(
                "channel conv1d expects [B, C, 1, 1], got {:?}",
                x.dims()
            )));
        }
        let k = self.kernel_size();
        let off = (k - 1) / 2;
        let wd = self.weight.data();
        let bias = self.bias.data()[0];
        let mut out = Tensor::zeros(&[b, c, 1, 1]);
        for bi in 0..b {
            for ci in 0..c {
                let mut acc = bias;
                for (j, &wj) in wd.iter().enumerate() {
                    let src = ci as isize + j as isize - off as isize;
                    if src >= 0 && src < c as isize {
                        acc += wj * x.data()[bi * c + src as usize];
                    }
                }
                out.data_mut()[bi * c + ci] = acc;
            }
        }
        Ok(out)
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let x = inputs[0];
        let [b, c, _, _] = x.dims4("channel conv1d")?;
        let k = self.kernel_size();
        let off = (k - 1) / 2;
        let wd = self.weight.data();
        let mut dx = Tensor::zeros(x.dims());
        let mut dw = Tensor::zeros(&[k]);
        let mut db = 0.0;
        for bi in 0..b {
            for ci in 0..c {
                let g = grad_out.data()[bi * c + ci];
                db += g;
                for j in 0..k {
                    let src = ci as isize + j as isize - off as isize;
                    if src >= 0 && src < c as isize {
                        dx.data_mut()[bi * c + src as usize] += g * wd[j];
                        dw.data_mut()[j] += g * x.data()[bi * c + src as usize];
                    }
                }
            }
        }
        Ok(LayerGrads {
            inputs: vec![dx],
            params: vec![dw, Tensor::from_vec(vec![1], vec![db]).unwrap()],
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

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_oracle(x: &Tensor, w: &Tensor, bias: &[f64], stride: usize, pad: usize) -> Tensor {
        let [b, ci, iw, ih] = x.dims4("t").unwrap();
        let [co, _, k, _] = w.dims4("t").unwrap();
        let wo = (iw + 2 * pad - k) / stride + 1;
        let ho = (ih + 2 * pad - k) / stride + 1;
        let mut out = Tensor::zeros(&[b, co, wo, ho]);
        for bi in 0..b {
            for oc in 0..co {
                for ox in 0..wo {
                    for oy in 0..ho {
                        let mut acc = bias[oc];
                        for c in 0..ci {
                            for di in 0..k {
                                for dj in 0..k {
                                    let sx = (ox * stride + di) as isize - pad as isize;
                                    let sy = (oy * stride + dj) as isize - pad as isize;
                                    if sx >= 0
                                        && sy >= 0
                                        && (sx as usize) < iw
                                        && (sy as usize) < ih
                                    {
                                        acc += w.at4(oc, c, di, dj)
                                            * x.at4(bi, c, sx as usize, sy as usize);
                                    }
                                }
                            }
                        }
                        out.set4(bi, oc, ox, oy, acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn one_by_one_identity_kernel_passes_input_through() {
        let x = Tensor::from_fn(&[1, 1, 3, 3], |i| i as f64 - 4.0);
        let conv = Conv2d {
            weight: Tensor::from_vec(vec![1, 1, 1, 1], vec![1.0]).unwrap(),
            bias: Tensor::zeros(&[1]),
            stride: 1,
            pad: 0,
        };
        let y = conv.forward(&[&x]).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut rng = Rng::new(1);
        let conv = Conv2d::same(2, 3, 3, &mut rng);
        let y = conv.forward(&[&Tensor::zeros(&[2, 2, 4, 4])]).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_sliding_window_oracle() {
        let mut rng = Rng::new(2);
        let x = Tensor::from_fn(&[2, 3, 5, 5], |_| rng.uniform(-1.0, 1.0));
        let mut conv = Conv2d::new(3, 4, 3, 1, 1, &mut rng);
        conv.bias = Tensor::from_fn(&[4], |_| rng.uniform(-0.5, 0.5));
        let got = conv.forward(&[&x]).unwrap();
        let want = conv_oracle(&x, &conv.weight, conv.bias.data(), 1, 1);
        assert_eq!(got.dims(), want.dims());
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn strided_matches_oracle() {
        let mut rng = Rng::new(3);
        let x = Tensor::from_fn(&[1, 2, 6, 6], |_| rng.uniform(-1.0, 1.0));
        let conv = Conv2d::new(2, 5, 3, 2, 1, &mut rng);
        let got = conv.forward(&[&x]).unwrap();
        let want = conv_oracle(&x, &conv.weight, conv.bias.data(), 2, 1);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(got.dims(), &[1, 5, 3, 3]);
    }

    #[test]
    fn oversized_kernel_is_a_dimension_error() {
        let mut rng = Rng::new(4);
        let conv = Conv2d::new(1, 1, 3, 1, 0, &mut rng);
        let r = conv.forward(&[&Tensor::zeros(&[1, 1, 2, 2])]);
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn depthwise_matches_per_channel_oracle() {
        let mut rng = Rng::new(5);
        let x = Tensor::from_fn(&[2, 3, 5, 5], |_| rng.uniform(-1.0, 1.0));
        let dw = DepthwiseConv2d::new(3, 3, 1, 1, &mut rng);
        let got = dw.forward(&[&x]).unwrap();
        // Equivalent dense conv with block-diagonal weight.
        let mut dense_w = Tensor::zeros(&[3, 3, 3, 3]);
        for c in 0..3 {
            for di in 0..3 {
                for dj in 0..3 {
                    dense_w.set4(c, c, di, dj, dw.weight.at4(c, 0, di, dj));
                }
            }
        }
        let want = conv_oracle(&x, &dense_w, dw.bias.data(), 1, 1);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_conv_single_channel_case() {
        let mut rng = Rng::new(6);
        let mut conv = ChannelConv1d::new(3, &mut rng);
        conv.bias = Tensor::from_vec(vec![1], vec![0.25]).unwrap();
        let x = Tensor::from_vec(vec![1, 1, 1, 1], vec![2.0]).unwrap();
        let y = conv.forward(&[&x]).unwrap();
        // Only the center tap overlaps a single channel.
        let want = conv.weight.data()[1] * 2.0 + 0.25;
        assert!((y.data()[0] - want).abs() < 1e-15);
    }
}
