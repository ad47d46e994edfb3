//! Bilinear pooling and its compact (sketched) approximation.
//!
//! Exact pooling aggregates the outer product of two feature streams over
//! all spatial locations into an order-less second-order descriptor. The
//! compact path replaces the outer product with a randomized feature map
//! whose inner products approximate the second-order polynomial kernel:
//! <phi(x), phi(y)> ~= <x, y>^2 in expectation. Two projections are
//! provided, both frozen at construction and reconstructible from their
//! seed:
//!
//! * random-maclaurin (default): phi(a, b) = (1/sqrt(d)) (W1 a) .* (W2 b)
//!   with Rademacher sign matrices W1, W2;
//! * tensor-sketch: the circular convolution of two count sketches,
//!   computed in sparse form (O(n d) per location).

use crate::error::{Error, Result};
use crate::layer::{LayerGrads, LayerNode};
use crate::ops::matmul::{matmul_nn, matmul_nt, matmul_tn};
use crate::rng::Rng;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Epsilon guards for the signed square root derivative and the L2 norm
/// denominator.
pub const NORM_EPS: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Exact bilinear pooling
// ---------------------------------------------------------------------------

/// Sum over locations of fA(l) fB(l)^T, flattened row-major:
/// out[b, i*nB + j] = sum_l fA[b,i,l] * fB[b,j,l].
pub fn bilinear_pool(fa: &Tensor, fb: &Tensor) -> Result<Tensor> {
    BilinearPool.forward(&[fa, fb])
}

pub struct BilinearPool;

fn stream_geometry(fa: &Tensor, fb: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let [b, na, w, h] = fa.dims4("bilinear pool")?;
    let [b2, nb, w2, h2] = fb.dims4("bilinear pool")?;
    if b != b2 {
        return Err(Error::Dimension(format!(
            "bilinear pool: batch sizes {b} and {b2} differ"
        )));
    }
    if (w, h) != (w2, h2) {
        return Err(Error::Dimension(format!(
            "bilinear pool: spatial dims {w}x{h} vs {w2}x{h2} do not match"
        )));
    }
    Ok((b, na, nb, w * h))
}

impl LayerNode for BilinearPool {
    fn arity(&self) -> usize {
        2
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let (fa, fb) = (inputs[0], inputs[1]);
        let (b, na, nb, l) = stream_geometry(fa, fb)?;
        let mut out = Tensor::zeros(&[b, na * nb]);
        for bi in 0..b {
            let a = &fa.data()[bi * na * l..(bi + 1) * na * l];
            let bm = &fb.data()[bi * nb * l..(bi + 1) * nb * l];
            let dst = &mut out.data_mut()[bi * na * nb..(bi + 1) * na * nb];
            matmul_nt(a, bm, dst, na, l, nb);
        }
        Ok(out)
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let (fa, fb) = (inputs[0], inputs[1]);
        let (b, na, nb, l) = stream_geometry(fa, fb)?;
        let mut dfa = Tensor::zeros(fa.dims());
        let mut dfb = Tensor::zeros(fb.dims());
        for bi in 0..b {
            let a = &fa.data()[bi * na * l..(bi + 1) * na * l];
            let bm = &fb.data()[bi * nb * l..(bi + 1) * nb * l];
            let g = &grad_out.data()[bi * na * nb..(bi + 1) * na * nb];
            matmul_nn(g, bm, &mut dfa.data_mut()[bi * na * l..(bi + 1) * na * l], na, nb, l);
            matmul_tn(g, a, &mut dfb.data_mut()[bi * nb * l..(bi + 1) * nb * l], nb, na, l);
        }
        Ok(LayerGrads::inputs_only(vec![dfa, dfb]))
    }
}

// ---------------------------------------------------------------------------
// Normalizations
// ---------------------------------------------------------------------------

/// Elementwise sign(x) * sqrt(|x|).
pub fn signed_sqrt(x: &Tensor) -> Tensor {
    x.map(|v| v.signum() * v.abs().sqrt())
}

pub struct SignedSqrt;

impl LayerNode for SignedSqrt {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        Ok(signed_sqrt(inputs[0]))
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        // d/dx sign(x) sqrt(|x|) = 1 / (2 sqrt(|x|)), clamped near zero.
        let mut dx = grad_out.clone();
        for (d, &v) in dx.data_mut().iter_mut().zip(inputs[0].data()) {
            *d /= 2.0 * v.abs().sqrt().max(NORM_EPS);
        }
        Ok(LayerGrads::inputs_only(vec![dx]))
    }
}

/// Row-wise x / max(||x||_2, eps); zero rows map to zero rows.
pub fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    L2NormalizeRows.forward(&[x])
}

pub struct L2NormalizeRows;

impl LayerNode for L2NormalizeRows {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        let [b, d] = x.dims2("l2 normalize")?;
        let mut out = Tensor::zeros(&[b, d]);
        for i in 0..b {
            let row = &x.data()[i * d..(i + 1) * d];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_EPS);
            for (o, &v) in out.data_mut()[i * d..(i + 1) * d].iter_mut().zip(row) {
                *o = v / norm;
            }
        }
        Ok(out)
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let x = inputs[0];
        let [b, d] = x.dims2("l2 normalize")?;
        let mut dx = Tensor::zeros(&[b, d]);
        for i in 0..b {
            let row = &x.data()[i * d..(i + 1) * d];
            let g = &grad_out.data()[i * d..(i + 1) * d];
            let norm2: f64 = row.iter().map(|v| v * v).sum();
            let norm = norm2.sqrt();
            let dst = &mut dx.data_mut()[i * d..(i + 1) * d];
            if norm <= NORM_EPS {
                // Zero rows map to zero rows; a zero subgradient is the
                // stable choice for the guarded branch.
                continue;
            }
            let y_dot_g: f64 = row.iter().zip(g).map(|(v, gv)| v * gv).sum::<f64>() / norm2;
            for j in 0..d {
                dst[j] = (g[j] - row[j] * y_dot_g) / norm;
            }
        }
        Ok(LayerGrads::inputs_only(vec![dx]))
    }
}

// ---------------------------------------------------------------------------
// Sketch projections
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SketchKind {
    TensorSketch,
    RandomMaclaurin,
}

enum SketchState {
    /// Count-sketch hashes and signs for both streams.
    Ts {
        h_a: Vec<usize>,
        s_a: Vec<f64>,
        h_b: Vec<usize>,
        s_b: Vec<f64>,
    },
    /// Rademacher sign matrices, row-major [d, n].
    Rm { w1: Vec<f64>, w2: Vec<f64> },
}

/// Frozen random projection realizing the compact bilinear feature map.
/// Immutable after construction; the (kind, dims, seed) triple reconstructs
/// it bit-exactly, which is all a checkpoint stores.
pub struct SketchProjection {
    pub kind: SketchKind,
    pub n_a: usize,
    pub n_b: usize,
    pub dim: usize,
    pub seed: u64,
    state: SketchState,
}

impl SketchProjection {
    /// Build a frozen projection. `dim` is meant to sit well below the exact
    /// descriptor size `n_a * n_b`; that compactness requirement is enforced
    /// where the projection enters a model ([`CompactBilinear::new`]), so
    /// that standalone kernel-quality measurements may use any `dim`.
    pub fn new(kind: SketchKind, n_a: usize, n_b: usize, dim: usize, seed: u64) -> Result<Self> {
        if n_a == 0 || n_b == 0 || dim == 0 {
            return Err(Error::Config("sketch: zero dimension".into()));
        }
        let root = Rng::new(seed);
        let state = match kind {
            SketchKind::TensorSketch => {
                let mut r0 = root.stream(0);
                let mut r1 = root.stream(1);
                let mut r2 = root.stream(2);
                let mut r3 = root.stream(3);
                SketchState::Ts {
                    h_a: (0..n_a).map(|_| r0.below(dim)).collect(),
                    s_a: (0..n_a).map(|_| r1.sign()).collect(),
                    h_b: (0..n_b).map(|_| r2.below(dim)).collect(),
                    s_b: (0..n_b).map(|_| r3.sign()).collect(),
                }
            }
            SketchKind::RandomMaclaurin => {
                let mut r0 = root.stream(0);
                let mut r1 = root.stream(1);
                SketchState::Rm {
                    w1: (0..dim * n_a).map(|_| r0.sign()).collect(),
                    w2: (0..dim * n_b).map(|_| r1.sign()).collect(),
                }
            }
        };
        Ok(SketchProjection {
            kind,
            n_a,
            n_b,
            dim,
            seed,
            state,
        })
    }

    /// Sketch one pair of per-location vectors into R^d. The kernel feature
    /// map of a single vector x is `sketch_pair(x, x)`.
    pub fn sketch_pair(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        debug_assert_eq!(a.len(), self.n_a);
        debug_assert_eq!(b.len(), self.n_b);
        debug_assert_eq!(out.len(), self.dim);
        let d = self.dim;
        match &self.state {
            SketchState::Rm { w1, w2 } => {
                let scale = 1.0 / (d as f64).sqrt();
                let mut u = vec![0.0; d];
                let mut v = vec![0.0; d];
                matmul_nn(w1, a, &mut u, d, self.n_a, 1);
                matmul_nn(w2, b, &mut v, d, self.n_b, 1);
                for j in 0..d {
                    out[j] += scale * u[j] * v[j];
                }
            }
            SketchState::Ts { h_a, s_a, h_b, s_b } => {
                // v = count sketch of b; then convolve with the sparse
                // count sketch of a: (u (*) v)_j = sum_i s_a[i] a_i v[(j - h_a[i]) mod d]
                let mut v = vec![0.0; d];
                for i in 0..self.n_b {
                    v[h_b[i]] += s_b[i] * b[i];
                }
                for i in 0..self.n_a {
                    let coef = s_a[i] * a[i];
                    if coef == 0.0 {
                        continue;
                    }
                    let shift = h_a[i];
                    for j in 0..d {
                        // (j - shift) mod d
                        let src = if j >= shift { j - shift } else { j + d - shift };
                        out[j] += coef * v[src];
                    }
                }
            }
        }
    }
}

/// Differentiable compact bilinear pooling layer over two feature maps:
/// out[b] = sum_l phi(fA(b, l), fB(b, l)).
pub struct CompactBilinear {
    pub proj: std::sync::Arc<SketchProjection>,
}

impl CompactBilinear {
    /// Wrap a projection as a pooling layer. Fails unless the projection is
    /// actually compact (dim strictly below the exact descriptor size).
    pub fn new(proj: std::sync::Arc<SketchProjection>) -> Result<Self> {
        if proj.dim >= proj.n_a * proj.n_b {
            return Err(Error::Config(format!(
                "compact pooling needs dim < n_a * n_b, got {} >= {}",
                proj.dim,
                proj.n_a * proj.n_b
            )));
        }
        Ok(CompactBilinear { proj })
    }

    fn check(&self, fa: &Tensor, fb: &Tensor) -> Result<(usize, usize, usize, usize)> {
        let (b, na, nb, l) = stream_geometry(fa, fb)?;
        if na != self.proj.n_a || nb != self.proj.n_b {
            return Err(Error::Dimension(format!(
                "compact projection built for {}x{} channels, got {na}x{nb}",
                self.proj.n_a, self.proj.n_b
            )));
        }
        Ok((b, na, nb, l))
    }
}

/// Gather the per-location matrix [l, n] from a channel-major [n, l] slice.
fn transpose_to_locations(src: &[f64], n: usize, l: usize, dst: &mut [f64]) {
    for c in 0..n {
        for p in 0..l {
            dst[p * n + c] = src[c * l + p];
        }
    }
}

impl LayerNode for CompactBilinear {
    fn arity(&self) -> usize {
        2
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let (fa, fb) = (inputs[0], inputs[1]);
        let (b, na, nb, l) = self.check(fa, fb)?;
        let d = self.proj.dim;
        let mut out = Tensor::zeros(&[b, d]);
        match &self.proj.state {
            SketchState::Rm { w1, w2 } => {
                let scale = 1.0 / (d as f64).sqrt();
                for bi in 0..b {
                    let mut aloc = vec![0.0; l * na];
                    let mut bloc = vec![0.0; l * nb];
                    transpose_to_locations(&fa.data()[bi * na * l..], na, l, &mut aloc);
                    transpose_to_locations(&fb.data()[bi * nb * l..], nb, l, &mut bloc);
                    let mut u = vec![0.0; l * d];
                    let mut v = vec![0.0; l * d];
                    matmul_nt(&aloc, w1, &mut u, l, na, d);
                    matmul_nt(&bloc, w2, &mut v, l, nb, d);
                    let dst = &mut out.data_mut()[bi * d..(bi + 1) * d];
                    for p in 0..l {
                        let (urow, vrow) = (&u[p * d..(p + 1) * d], &v[p * d..(p + 1) * d]);
                        for j in 0..d {
                            dst[j] += scale * urow[j] * vrow[j];
                        }
                    }
                }
            }
            SketchState::Ts { .. } => {
                for bi in 0..b {
                    let mut a = vec![0.0; na];
                    let mut bb = vec![0.0; nb];
                    let dst = &mut out.data_mut()[bi * d..(bi + 1) * d];
                    for p in 0..l {
                        for c in 0..na {
                            a[c] = fa.data()[(bi * na + c) * l + p];
                        }
                        for c in 0..nb {
                            bb[c] = fb.data()[(bi * nb + c) * l + p];
                        }
                        self.proj.sketch_pair(&a, &bb, dst);
                    }
                }
            }
        }
        Ok(out)
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<LayerGrads> {
        let (fa, fb) = (inputs[0], inputs[1]);
        let (b, na, nb, l) = self.check(fa, fb)?;
        let d = self.proj.dim;
        let mut dfa = Tensor::zeros(fa.dims());
        let mut dfb = Tensor::zeros(fb.dims());
        match &self.proj.state {
            SketchState::Rm { w1, w2 } => {
                let scale = 1.0 / (d as f64).sqrt();
                for bi in 0..b {
                    let g = &grad_out.data()[bi * d..(bi + 1) * d];
                    let mut aloc = vec![0.0; l * na];
                    let mut bloc = vec![0.0; l * nb];
                    transpose_to_locations(&fa.data()[bi * na * l..], na, l, &mut aloc);
                    transpose_to_locations(&fb.data()[bi * nb * l..], nb, l, &mut bloc);
                    let mut u = vec![0.0; l * d];
                    let mut v = vec![0.0; l * d];
                    matmul_nt(&aloc, w1, &mut u, l, na, d);
                    matmul_nt(&bloc, w2, &mut v, l, nb, d);
                    // du_l = scale * g .* v_l, then da_l = du_l W1
                    for p in 0..l {
                        for j in 0..d {
                            let (uj, vj) = (u[p * d + j], v[p * d + j]);
                            u[p * d + j] = scale * g[j] * vj;
                            v[p * d + j] = scale * g[j] * uj;
                        }
                    }
                    let mut da = vec![0.0; l * na];
                    let mut db = vec![0.0; l * nb];
                    matmul_nn(&u, w1, &mut da, l, d, na);
                    matmul_nn(&v, w2, &mut db, l, d, nb);
                    for c in 0..na {
                        for p in 0..l {
                            dfa.data_mut()[(bi * na + c) * l + p] = da[p * na + c];
                        }
                    }
                    for c in 0..nb {
                        for p in 0..l {
                            dfb.data_mut()[(bi * nb + c) * l + p] = db[p * nb + c];
                        }
                    }
                }
            }
            SketchState::Ts { h_a, s_a, h_b, s_b } => {
                for bi in 0..b {
                    let g = &grad_out.data()[bi * d..(bi + 1) * d];
                    for p in 0..l {
                        // Rebuild the two dense sketches at this location.
                        let mut u = vec![0.0; d];
                        let mut v = vec![0.0; d];
                        for i in 0..na {
                            u[h_a[i]] += s_a[i] * fa.data()[(bi * na + i) * l + p];
                        }
                        for i in 0..nb {
                            v[h_b[i]] += s_b[i] * fb.data()[(bi * nb + i) * l + p];
                        }
                        // da_i = s_a[i] * sum_j g_j v[(j - h_a[i]) mod d]
                        for i in 0..na {
                            let shift = h_a[i];
                            let mut acc = 0.0;
                            for (j, gj) in g.iter().enumerate() {
                                let src = if j >= shift { j - shift } else { j + d - shift };
                                acc += gj * v[src];
                            }
                            dfa.data_mut()[(bi * na + i) * l + p] += s_a[i] * acc;
                        }
                        for i in 0..nb {
                            let shift = h_b[i];
                            let mut acc = 0.0;
                            for (j, gj) in g.iter().enumerate() {
                                let src = if j >= shift { j - shift } else { j + d - shift };
                                acc += gj * u[src];
                            }
                            dfb.data_mut()[(bi * nb + i) * l + p] += s_b[i] * acc;
                        }
                    }
                }
            }
        }
        Ok(LayerGrads::inputs_only(vec![dfa, dfb]))
    }
}

// ---------------------------------------------------------------------------
// Descriptor pipeline
// ---------------------------------------------------------------------------

/// A pooled (and possibly normalized) bilinear image descriptor.
pub struct BilinearDescriptor {
    pub vector: Tensor,
    pub normalized: bool,
}

/// Full compact pipeline: project, signed square root, L2 normalize.
pub fn cbp_layer(fa: &Tensor, fb: &Tensor, proj: &std::sync::Arc<SketchProjection>) -> Result<BilinearDescriptor> {
    let projected = CompactBilinear::new(proj.clone())?.forward(&[fa, fb])?;
    let vector = l2_normalize(&signed_sqrt(&projected))?;
    Ok(BilinearDescriptor {
        vector,
        normalized: true,
    })
}

/// Exact pipeline: outer-product pooling, signed square root, L2 normalize.
pub fn exact_descriptor(fa: &Tensor, fb: &Tensor) -> Result<BilinearDescriptor> {
    let pooled = bilinear_pool(fa, fb)?;
    let vector = l2_normalize(&signed_sqrt(&pooled))?;
    Ok(BilinearDescriptor {
        vector,
        normalized: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check, GradCheckConfig};

    fn pool_oracle(fa: &Tensor, fb: &Tensor) -> Tensor {
        let [b, na, w, h] = fa.dims4("t").unwrap();
        let nb = fb.dims()[1];
        let mut out = Tensor::zeros(&[b, na * nb]);
        for bi in 0..b {
            for i in 0..na {
                for j in 0..nb {
                    let mut acc = 0.0;
                    for x in 0..w {
                        for y in 0..h {
                            acc += fa.at4(bi, i, x, y) * fb.at4(bi, j, x, y);
                        }
                    }
                    out.data_mut()[bi * na * nb + i * nb + j] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn one_hot_outer_product() {
        let fa = Tensor::from_vec(vec![1, 2, 1, 1], vec![1.0, 0.0]).unwrap();
        let fb = Tensor::from_vec(vec![1, 2, 1, 1], vec![0.0, 1.0]).unwrap();
        let out = bilinear_pool(&fa, &fb).unwrap();
        assert_eq!(out.data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn output_size_is_na_times_nb() {
        let fa = Tensor::zeros(&[3, 5, 2, 2]);
        let fb = Tensor::zeros(&[3, 7, 2, 2]);
        let out = bilinear_pool(&fa, &fb).unwrap();
        assert_eq!(out.dims(), &[3, 35]);
    }

    #[test]
    fn matches_outer_product_oracle() {
        let mut rng = Rng::new(31);
        for _ in 0..20 {
            let (na, nb) = (1 + rng.below(8), 1 + rng.below(8));
            let (w, h) = (1 + rng.below(4), 1 + rng.below(4));
            let fa = Tensor::from_fn(&[2, na, w, h], |_| rng.uniform(-1.0, 1.0));
            let fb = Tensor::from_fn(&[2, nb, w, h], |_| rng.uniform(-1.0, 1.0));
            let got = bilinear_pool(&fa, &fb).unwrap();
            let want = pool_oracle(&fa, &fb);
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spatial_mismatch_is_rejected() {
        let fa = Tensor::zeros(&[1, 2, 3, 3]);
        let fb = Tensor::zeros(&[1, 2, 2, 2]);
        assert!(matches!(bilinear_pool(&fa, &fb), Err(Error::Dimension(_))));
    }

    #[test]
    fn location_permutation_invariance() {
        let mut rng = Rng::new(5);
        let (na, nb, w, h) = (3, 4, 2, 3);
        let fa = Tensor::from_fn(&[1, na, w, h], |_| rng.uniform(-1.0, 1.0));
        let fb = Tensor::from_fn(&[1, nb, w, h], |_| rng.uniform(-1.0, 1.0));
        let perm = rng.permutation(w * h);
        let permute = |t: &Tensor, n: usize| {
            let mut p = Tensor::zeros(t.dims());
            for c in 0..n {
                for (src, &dst) in perm.iter().enumerate() {
                    p.data_mut()[c * w * h + dst] = t.data()[c * w * h + src];
                }
            }
            p
        };
        let base = bilinear_pool(&fa, &fb).unwrap();
        let shuf = bilinear_pool(&permute(&fa, na), &permute(&fb, nb)).unwrap();
        for (a, b) in base.data().iter().zip(shuf.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn signed_sqrt_values() {
        let x = Tensor::from_vec(vec![3], vec![4.0, -9.0, 0.0]).unwrap();
        let y = signed_sqrt(&x);
        assert_eq!(y.data(), &[2.0, -3.0, 0.0]);
        // fourth powers with sign patterns
        let t = Tensor::from_vec(vec![2], vec![16.0, -81.0]).unwrap();
        assert_eq!(signed_sqrt(&t).data(), &[4.0, -9.0]);
    }

    #[test]
    fn signed_sqrt_gradient_away_from_zero() {
        let mut rng = Rng::new(41);
        let x = Tensor::from_fn(&[2, 6], |_| {
            let v = rng.uniform(0.5, 2.0);
            if rng.bool() {
                v
            } else {
                -v
            }
        });
        let report = grad_check(&mut SignedSqrt, &[&x], &GradCheckConfig::default()).unwrap();
        assert!(report.passed(), "rel err {}", report.max_rel_err);
    }

    #[test]
    fn l2_normalize_examples() {
        let x = Tensor::from_vec(vec![1, 2], vec![3.0, 4.0]).unwrap();
        let y = l2_normalize(&x).unwrap();
        assert!((y.data()[0] - 0.6).abs() < 1e-12);
        assert!((y.data()[1] - 0.8).abs() < 1e-12);

        let z = Tensor::zeros(&[1, 4]);
        assert!(l2_normalize(&z).unwrap().data().iter().all(|&v| v == 0.0));

        let mut rng = Rng::new(6);
        let r = Tensor::from_fn(&[1, 16], |_| rng.uniform(-5.0, 5.0));
        let n = l2_normalize(&r).unwrap();
        let norm: f64 = n.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn normalization_composition_is_unit_norm() {
        let mut rng = Rng::new(7);
        for _ in 0..50 {
            let v = Tensor::from_fn(&[1, 9], |_| rng.uniform(-4.0, 4.0));
            let y = l2_normalize(&signed_sqrt(&v)).unwrap();
            let norm: f64 = y.data().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn pooling_layer_requires_compact_dim() {
        let wide = std::sync::Arc::new(
            SketchProjection::new(SketchKind::RandomMaclaurin, 4, 4, 16, 0).unwrap(),
        );
        assert!(CompactBilinear::new(wide).is_err());
        let ok = std::sync::Arc::new(
            SketchProjection::new(SketchKind::RandomMaclaurin, 4, 4, 15, 0).unwrap(),
        );
        assert!(CompactBilinear::new(ok).is_ok());
    }

    #[test]
    fn same_seed_same_projection() {
        for kind in [SketchKind::RandomMaclaurin, SketchKind::TensorSketch] {
            let p1 = SketchProjection::new(kind, 8, 8, 32, 99).unwrap();
            let p2 = SketchProjection::new(kind, 8, 8, 32, 99).unwrap();
            let a: Vec<f64> = (0..8).map(|i| i as f64 * 0.3 - 1.0).collect();
            let b: Vec<f64> = (0..8).map(|i| 1.0 - i as f64 * 0.2).collect();
            let mut o1 = vec![0.0; 32];
            let mut o2 = vec![0.0; 32];
            p1.sketch_pair(&a, &b, &mut o1);
            p2.sketch_pair(&a, &b, &mut o2);
            assert_eq!(o1, o2);
        }
    }

    #[test]
    fn zero_features_sketch_to_zero() {
        for kind in [SketchKind::RandomMaclaurin, SketchKind::TensorSketch] {
            let proj =
                std::sync::Arc::new(SketchProjection::new(kind, 4, 4, 8, 3).unwrap());
            let z = Tensor::zeros(&[2, 4, 2, 2]);
            let out = CompactBilinear::new(proj).unwrap().forward(&[&z, &z]).unwrap();
            assert!(out.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn sketch_inner_products_are_unbiased() {
        // Fixed x, y of dim 16, d = 512; the Monte-Carlo mean over seeds of
        // <phi(x), phi(y)> approaches <x, y>^2. A 200-seed smoke version of
        // the 500-seed acceptance criterion. Positive entries keep the
        // target kernel value well away from zero so the relative band is
        // meaningful.
        let mut rng = Rng::new(2024);
        let x: Vec<f64> = (0..16).map(|_| rng.uniform(0.0, 1.0)).collect();
        let y: Vec<f64> = (0..16).map(|_| rng.uniform(0.0, 1.0)).collect();
        let want = x
            .iter()
            .zip(&y)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .powi(2);
        for kind in [SketchKind::RandomMaclaurin, SketchKind::TensorSketch] {
            let mut mean = 0.0;
            let n = 200;
            for seed in 0..n {
                let p = SketchProjection::new(kind, 16, 16, 512, seed).unwrap();
                let mut px = vec![0.0; 512];
                let mut py = vec![0.0; 512];
                p.sketch_pair(&x, &x, &mut px);
                p.sketch_pair(&y, &y, &mut py);
                mean += px.iter().zip(&py).map(|(a, b)| a * b).sum::<f64>();
            }
            mean /= n as f64;
            let rel = (mean - want).abs() / want.abs();
            assert!(rel < 0.10, "{kind:?}: mean {mean} vs kernel {want} (rel {rel})");
        }
    }

    #[test]
    fn compact_layer_output_dim_and_gradients() {
        let mut rng = Rng::new(55);
        for kind in [SketchKind::RandomMaclaurin, SketchKind::TensorSketch] {
            let proj = std::sync::Arc::new(SketchProjection::new(kind, 5, 3, 10, 77).unwrap());
            let fa = Tensor::from_fn(&[2, 5, 2, 2], |_| rng.uniform(-1.0, 1.0));
            let fb = Tensor::from_fn(&[2, 3, 2, 2], |_| rng.uniform(-1.0, 1.0));
            let mut layer = CompactBilinear::new(proj).unwrap();
            let out = layer.forward(&[&fa, &fb]).unwrap();
            assert_eq!(out.dims(), &[2, 10]);
            let report = grad_check(&mut layer, &[&fa, &fb], &GradCheckConfig::default()).unwrap();
            assert!(report.passed(), "{kind:?} rel err {}", report.max_rel_err);
        }
    }

    #[test]
    fn cbp_pipeline_shape_and_normalization() {
        let mut rng = Rng::new(66);
        let proj = std::sync::Arc::new(
            SketchProjection::new(SketchKind::RandomMaclaurin, 6, 4, 12, 5).unwrap(),
        );
        let fa = Tensor::from_fn(&[3, 6, 2, 2], |_| rng.uniform(-1.0, 1.0));
        let fb = Tensor::from_fn(&[3, 4, 2, 2], |_| rng.uniform(-1.0, 1.0));
        let desc = cbp_layer(&fa, &fb, &proj).unwrap();
        assert!(desc.normalized);
        assert_eq!(desc.vector.dims(), &[3, 12]);
        for bi in 0..3 {
            let norm: f64 = desc.vector.data()[bi * 12..(bi + 1) * 12]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            assert!((norm - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn ts_dense_convolution_oracle() {
        // Sparse-form tensor sketch equals the direct O(d^2) circular
        // convolution of the two dense count sketches.
        let p = SketchProjection::new(SketchKind::TensorSketch, 6, 5, 9, 13).unwrap();
        let SketchState::Ts { h_a, s_a, h_b, s_b } = &p.state else {
            unreachable!()
        };
        let mut rng = Rng::new(1);
        let a: Vec<f64> = (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..5).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let d = 9;
        let mut u = vec![0.0; d];
        let mut v = vec![0.0; d];
        for i in 0..6 {
            u[h_a[i]] += s_a[i] * a[i];
        }
        for i in 0..5 {
            v[h_b[i]] += s_b[i] * b[i];
        }
        let mut want = vec![0.0; d];
        for j in 0..d {
            for k in 0..d {
                want[j] += u[k] * v[(j + d - k) % d];
            }
        }
        let mut got = vec![0.0; d];
        p.sketch_pair(&a, &b, &mut got);
        for (x, y) in got.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
