//! Elementwise combination layers: residual addition, broadcast
//! multiplication (attention gating), and channel concatenation.

use crate::error::{Error, Result};
use crate::layer::{LayerGrads, LayerNode};
use crate::tensor::Tensor;

fn broadcast_dims(a: &[usize; 4], b: &[usize; 4], op: &str) -> Result<[usize; 4]> {
    let mut out = [0; 4];
    for i in 0..4 {
        out[i] = match (a[i], b[i]) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            (x, y) => {
                return Err(Error::Dimension(format!(
                    "{op}: axis {i} sizes {x} and {y} are not broadcastable"
                )))
            }
        };
    }
    Ok(out)
}

#[inline]
fn strides_for(dims: &[usize; 4], out: &[usize; 4]) -> [usize; 4] {
    let mut s = [0; 4];
    let mut acc = 1;
    for i in (0..4).rev() {
        s[i] = if dims[i] == 1 && out[i] != 1 { 0 } else { acc };
        acc *= dims[i];
    }
    s
}

/// Elementwise product of two rank-4 tensors with size-1 axis broadcasting.
pub fn bcast_mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let ad = a.dims4("broadcast mul")?;
    let bd = b.dims4("broadcast mul")?;
    let od = broadcast_dims(&ad, &bd, "broadcast mul")?;
    let (sa, sb) = (strides_for(&ad, &od), strides_for(&bd, &od));
    let mut out = Tensor::zeros(&od);
    let (av, bv) = (a.data(), b.data());
    let o = out.data_mut();
    let mut idx = 0;
    for i0 in 0..od[0] {
        for i1 in 0..od[1] {
            for i2 in 0..od[2] {
                let abase = i0 * sa[0] + i1 * sa[1] + i2 * sa[2];
                let bbase = i0 * sb[0] + i1 * sb[1] + i2 * sb[2];
                for i3 in 0..od[3] {
                    o[idx] = av[abase + i3 * sa[3]] * bv[bbase + i3 * sb[3]];
                    idx += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of `bcast_mul` w.r.t. both factors; broadcast axes are
/// sum-reduced back to the factor's shape.
pub fn bcast_mul_backward(a: &Tensor, b: &Tensor, grad: &Tensor) -> Result<(Tensor, Tensor)> {
    let ad = a.dims4("broadcast mul")?;
    let bd = b.dims4("broadcast mul")?;
    let od = broadcast_dims(&ad, &bd, "broadcast mul")?;
    let (sa, sb) = (strides_for(&ad, &od), strides_for(&bd, &od));
    let mut da = Tensor::zeros(&ad);
    let mut db = Tensor::zeros(&bd);
    let (av, bv, g) = (a.data(), b.data(), grad.data());
    let mut idx = 0;
    for i0 in 0..od[0] {
        for i1 in 0..od[1] {
            for i2 in 0..od[2] {
                let abase = i0 * sa[0] + i1 * sa[1] + i2 * sa[2];
                let bbase = i0 * sb[0] + i1 * sb[1] + i2 * sb[2];
                for i3 in 0..od[3] {
                    let (ai, bi) = (abase + i3 * sa[3], bbase + i3 * sb[3]);
                    da.data_mut()[ai] += g[idx] * bv[bi];
                    db.data_mut()[bi] += g[idx] * av[ai];
                    idx += 1;
                }
            }
        }
    }
    Ok((da, db))
}

/// Sum of two same-shape tensors, no trailing activation.
pub struct Add2;

impl LayerNode for Add2 {
    fn arity(&self) -> usize {
        2
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        inputs[0].add(inputs[1])
    }

    fn backward(&self, _inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        Ok(LayerGrads::inputs_only(vec![
            grad_out.clone(),
            grad_out.clone(),
        ]))
    }
}

/// Broadcasting elementwise product of two rank-4 tensors.
pub struct BroadcastMul;

impl LayerNode for BroadcastMul {
    fn arity(&self) -> usize {
        2
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        bcast_mul(inputs[0], inputs[1])
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let (da, db) = bcast_mul_backward(inputs[0], inputs[1], grad_out)?;
        Ok(LayerGrads::inputs_only(vec![da, db]))
    }
}

/// Copy a [B, C, 1, 1] descriptor across a spatial extent; the backward
/// rule sums the gradient back over that extent.
pub struct BroadcastSpatial {
    pub w: usize,
    pub h: usize,
}

impl LayerNode for BroadcastSpatial {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        let [b, c, w, h] = x.dims4("broadcast spatial")?;
        if (w, h) != (1, 1) {
            return Err(Error::Dimension(format!(
                "broadcast spatial expects [B, C, 1, 1], got {:?}",
                x.dims()
            )));
        }
        let mut out = Tensor::zeros(&[b, c, self.w, self.h]);
        let plane = self.w * self.h;
        for (i, &v) in x.data().iter().enumerate() {
            out.data_mut()[i * plane..(i + 1) * plane].fill(v);
        }
        Ok(out)
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let x = inputs[0];
        let plane = self.w * self.h;
        let mut dx = Tensor::zeros(x.dims());
        for (i, d) in dx.data_mut().iter_mut().enumerate() {
            *d = grad_out.data()[i * plane..(i + 1) * plane].iter().sum();
        }
        Ok(LayerGrads::inputs_only(vec![dx]))
    }
}

/// Concatenate rank-4 tensors along the channel axis.
pub struct ConcatChannels {
    n: usize,
}

impl ConcatChannels {
    pub fn new(n: usize) -> Self {
        ConcatChannels { n }
    }
}

impl LayerNode for ConcatChannels {
    fn arity(&self) -> usize {
        self.n
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let [b, _, w, h] = inputs[0].dims4("concat")?;
        let mut ctot = 0;
        for t in inputs {
            let [tb, tc, tw, th] = t.dims4("concat")?;
            if tb != b || tw != w || th != h {
                return Err(Error::Dimension(format!(
                    "concat: incompatible shape {:?} with leading {:?}",
                    t.dims(),
                    inputs[0].dims()
                )));
            }
            ctot += tc;
        }
        let mut out = Tensor::zeros(&[b, ctot, w, h]);
        let plane = w * h;
        for bi in 0..b {
            let mut coff = 0;
            for t in inputs {
                let tc = t.dims()[1];
                let src = &t.data()[bi * tc * plane..(bi + 1) * tc * plane];
                out.data_mut()[(bi * ctot + coff) * plane..(bi * ctot + coff + tc) * plane]
                    .copy_from_slice(src);
                coff += tc;
            }
        }
        Ok(out)
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let [b, ctot, w, h] = grad_out.dims4("concat grad")?;
        let plane = w * h;
        let mut grads: Vec<Tensor> = inputs.iter().map(|t| Tensor::zeros(t.dims())).collect();
        for bi in 0..b {
            let mut coff = 0;
            for (t, g) in inputs.iter().zip(grads.iter_mut()) {
                let tc = t.dims()[1];
                g.data_mut()[bi * tc * plane..(bi + 1) * tc * plane].copy_from_slice(
                    &grad_out.data()[(bi * ctot + coff) * plane..(bi * ctot + coff + tc) * plane],
                );
                coff += tc;
            }
        }
        Ok(LayerGrads::inputs_only(grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn broadcast_channel_gate() {
        // [B,C,W,H] * [B,C,1,1]
        let x = Tensor::from_fn(&[1, 2, 2, 2], |i| i as f64);
        let gate = Tensor::from_vec(vec![1, 2, 1, 1], vec![2.0, 0.5]).unwrap();
        let y = bcast_mul(&x, &gate).unwrap();
        for c in 0..2 {
            for s in 0..4 {
                let idx = c * 4 + s;
                assert_eq!(y.data()[idx], x.data()[idx] * [2.0, 0.5][c]);
            }
        }
    }

    #[test]
    fn broadcast_spatial_gate_and_backward_reduces() {
        let mut rng = Rng::new(21);
        let x = Tensor::from_fn(&[2, 3, 2, 2], |_| rng.uniform(-1.0, 1.0));
        let gate = Tensor::from_fn(&[2, 1, 2, 2], |_| rng.uniform(0.0, 1.0));
        let y = bcast_mul(&x, &gate).unwrap();
        assert_eq!(y.dims(), &[2, 3, 2, 2]);
        let g = Tensor::full(&[2, 3, 2, 2], 1.0);
        let (dx, dgate) = bcast_mul_backward(&x, &gate, &g).unwrap();
        assert_eq!(dx.dims(), x.dims());
        assert_eq!(dgate.dims(), gate.dims());
        // d gate sums x over the channel axis.
        for bi in 0..2 {
            for s in 0..4 {
                let want: f64 = (0..3).map(|c| x.data()[(bi * 3 + c) * 4 + s]).sum();
                assert!((dgate.data()[bi * 4 + s] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn incompatible_axes_rejected() {
        let a = Tensor::zeros(&[1, 2, 2, 2]);
        let b = Tensor::zeros(&[1, 3, 2, 2]);
        assert!(bcast_mul(&a, &b).is_err());
    }

    #[test]
    fn concat_roundtrip() {
        let a = Tensor::from_fn(&[2, 2, 2, 2], |i| i as f64);
        let b = Tensor::from_fn(&[2, 1, 2, 2], |i| 100.0 + i as f64);
        let cat = ConcatChannels::new(2);
        let y = cat.forward(&[&a, &b]).unwrap();
        assert_eq!(y.dims(), &[2, 3, 2, 2]);
        assert_eq!(y.at4(0, 2, 0, 1), 101.0);
        assert_eq!(y.at4(1, 0, 1, 0), a.at4(1, 0, 1, 0));
        let grads = cat.backward(&[&a, &b], &y).unwrap();
        assert_eq!(grads.inputs[0].data(), a.data());
        assert_eq!(grads.inputs[1].data(), b.data());
    }
}
