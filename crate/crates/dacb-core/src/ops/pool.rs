//! Pooling layers. Max pooling routes the gradient to the argmax (first
//! maximum in scan order on ties); average pooling distributes it uniformly.

use crate::error::{Error, Result};
use crate::layer::{LayerGrads, LayerNode};
use crate::ops::conv::out_extent;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

pub struct Pool2d {
    pub kind: PoolKind,
    pub k: usize,
    pub stride: usize,
}

impl Pool2d {
    pub fn new(kind: PoolKind, k: usize, stride: usize) -> Self {
        Pool2d { kind, k, stride }
    }

    fn geometry(&self, x: &Tensor) -> Result<(usize, usize, usize, usize, usize, usize)> {
        let [b, c, w, h] = x.dims4("pool2d")?;
        if self.k == 0 || self.stride == 0 {
            return Err(Error::Dimension("pool2d: zero window or stride".into()));
        }
        let wo = out_extent(w, self.k, self.stride, 0)?;
        let ho = out_extent(h, self.k, self.stride, 0)?;
        Ok((b, c, w, h, wo, ho))
    }
}

impl LayerNode for Pool2d {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        let (b, c, _w, _h, wo, ho) = self.geometry(x)?;
        let mut out = Tensor::zeros(&[b, c, wo, ho]);
        for bi in 0..b {
            for ch in 0..c {
                for ox in 0..wo {
                    for oy in 0..ho {
                        let mut acc = match self.kind {
                            PoolKind::Max => f64::NEG_INFINITY,
                            PoolKind::Avg => 0.0,
                        };
                        for di in 0..self.k {
                            for dj in 0..self.k {
                                let v = x.at4(bi, ch, ox * self.stride + di, oy * self.stride + dj);
                                match self.kind {
                                    PoolKind::Max => acc = acc.max(v),
                                    PoolKind::Avg => acc += v,
                                }
                            }
                        }
                        if self.kind == PoolKind::Avg {
                            acc /= (self.k * self.k) as f64;
                        }
                        out.set4(bi, ch, ox, oy, acc);
                    }
                }
            }
        }
        Ok(out)
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let x = inputs[0];
        let (b, c, _w, _h, wo, ho) = self.geometry(x)?;
        let mut dx = Tensor::zeros(x.dims());
        let share = 1.0 / (self.k * self.k) as f64;
        for bi in 0..b {
            for ch in 0..c {
                for ox in 0..wo {
                    for oy in 0..ho {
                        let g = grad_out.at4(bi, ch, ox, oy);
                        match self.kind {
                            PoolKind::Avg => {
                                for di in 0..self.k {
                                    for dj in 0..self.k {
                                        let (sx, sy) =
                                            (ox * self.stride + di, oy * self.stride + dj);
                                        let cur = dx.at4(bi, ch, sx, sy);
                                        dx.set4(bi, ch, sx, sy, cur + g * share);
                                    }
                                }
                            }
                            PoolKind::Max => {
                                let (mut best, mut bx, mut by) = (f64::NEG_INFINITY, 0, 0);
                                for di in 0..self.k {
                                    for dj in 0..self.k {
                                        let (sx, sy) =
                                            (ox * self.stride + di, oy * self.stride + dj);
                                        let v = x.at4(bi, ch, sx, sy);
                                        if v > best {
                                            best = v;
                                            bx = sx;
                                            by = sy;
                                        }
                                    }
                                }
                                let cur = dx.at4(bi, ch, bx, by);
                                dx.set4(bi, ch, bx, by, cur + g);
                            }
                        }
                    }
                }
            }
        }
        Ok(LayerGrads::inputs_only(vec![dx]))
    }
}

/// Channelwise spatial mean: [B, C, W, H] -> [B, C, 1, 1].
pub struct GlobalAvgPool;

impl LayerNode for GlobalAvgPool {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        let [b, c, w, h] = x.dims4("global_avg_pool")?;
        let inv = 1.0 / (w * h) as f64;
        let mut out = Tensor::zeros(&[b, c, 1, 1]);
        for bi in 0..b {
            for ch in 0..c {
                let base = (bi * c + ch) * w * h;
                let s: f64 = x.data()[base..base + w * h].iter().sum();
                out.data_mut()[bi * c + ch] = s * inv;
            }
        }
        Ok(out)
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let x = inputs[0];
        let [b, c, w, h] = x.dims4("global_avg_pool")?;
        let inv = 1.0 / (w * h) as f64;
        let mut dx = Tensor::zeros(x.dims());
        for bi in 0..b {
            for ch in 0..c {
                let g = grad_out.data()[bi * c + ch] * inv;
                let base = (bi * c + ch) * w * h;
                for v in &mut dx.data_mut()[base..base + w * h] {
                    *v += g;
                }
            }
        }
        Ok(LayerGrads::inputs_only(vec![dx]))
    }
}

/// Channelwise spatial max: [B, C, W, H] -> [B, C, 1, 1].
pub struct GlobalMaxPool;

impl LayerNode for GlobalMaxPool {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        let [b, c, w, h] = x.dims4("global_max_pool")?;
        let mut out = Tensor::zeros(&[b, c, 1, 1]);
        for bi in 0..b {
            for ch in 0..c {
                let base = (bi * c + ch) * w * h;
                let m = x.data()[base..base + w * h]
                    .iter()
                    .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                out.data_mut()[bi * c + ch] = m;
            }
        }
        Ok(out)
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let x = inputs[0];
        let [b, c, w, h] = x.dims4("global_max_pool")?;
        let mut dx = Tensor::zeros(x.dims());
        for bi in 0..b {
            for ch in 0..c {
                let base = (bi * c + ch) * w * h;
                let plane = &x.data()[base..base + w * h];
                let mut best = 0;
                for (i, &v) in plane.iter().enumerate() {
                    if v > plane[best] {
                        best = i;
                    }
                }
                dx.data_mut()[base + best] += grad_out.data()[bi * c + ch];
            }
        }
        Ok(LayerGrads::inputs_only(vec![dx]))
    }
}
