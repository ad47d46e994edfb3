//! Dense n-dimensional tensor of 64-bit floats.
//!
//! The single value type used for images, feature maps, parameters and
//! gradients. Data is contiguous row-major (the last dimension varies
//! fastest). Constructors reject NaN/Inf so that non-finite values cannot
//! enter a computation silently; compute kernels preserve finiteness for
//! finite, non-overflowing inputs, and the places where overflow could
//! realistically arise (softmax, sigmoid, logarithms) are stabilized or
//! epsilon-guarded.
//!
//! Tensors are plain values: cloning copies the buffer, and nothing in the
//! library mutates a tensor that another component can still observe, so
//! sharing references across threads is safe.

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{:?}", self.dims)?;
        if self.data.len() <= 8 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    /// Build a tensor from a shape and a row-major buffer.
    pub fn from_vec(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!(
                "zero-sized dimension in shape {dims:?}"
            )));
        }
        if data.len() != n {
            return Err(Error::Dimension(format!(
                "shape {:?} needs {} elements, got {}",
                dims,
                n,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "tensor constructor received {bad} for shape {dims:?}"
            )));
        }
        Ok(Tensor { dims, data })
    }

    /// All-zeros tensor. Zero-sized dims are rejected like in `from_vec`.
    pub fn zeros(dims: &[usize]) -> Self {
        let n: usize = dims.iter().product();
        assert!(dims.iter().all(|&d| d > 0), "zero-sized dims: {dims:?}");
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn full(dims: &[usize], value: f64) -> Self {
        let mut t = Tensor::zeros(dims);
        t.data.fill(value);
        t
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let mut t = Tensor::zeros(dims);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = f(i);
        }
        t
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            dims: vec![1],
            data: vec![v],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshape(&self, dims: &[usize]) -> Result<Tensor> {
        let n: usize = dims.iter().product();
        if n != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} ({} elems) to {:?} ({} elems)",
                self.dims,
                self.data.len(),
                dims,
                n
            )));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Elementwise map into a new tensor.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "add")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            dims: self.dims.clone(),
            data,
        })
    }

    /// In-place accumulation, used on gradient buffers.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.check_same_shape(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Error (naming the offending operation) if any element is non-finite.
    pub fn check_finite(&self, op: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(format!(
                "{op} produced or received a non-finite value (shape {:?})",
                self.dims
            )))
        }
    }

    fn check_same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!(
                "{op}: shape mismatch {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Expect an exact rank, returning the dims as a fixed array.
    pub fn dims4(&self, op: &str) -> Result<[usize; 4]> {
        if self.dims.len() != 4 {
            return Err(Error::Dimension(format!(
                "{op}: expected rank-4 tensor, got shape {:?}",
                self.dims
            )));
        }
        Ok([self.dims[0], self.dims[1], self.dims[2], self.dims[3]])
    }

    pub fn dims2(&self, op: &str) -> Result<[usize; 2]> {
        if self.dims.len() != 2 {
            return Err(Error::Dimension(format!(
                "{op}: expected rank-2 tensor, got shape {:?}",
                self.dims
            )));
        }
        Ok([self.dims[0], self.dims[1]])
    }

    /// Row-major offset for a 4-D index.
    #[inline]
    pub fn at4(&self, b: usize, c: usize, x: usize, y: usize) -> f64 {
        let [_, cc, w, h] = [self.dims[0], self.dims[1], self.dims[2], self.dims[3]];
        self.data[((b * cc + c) * w + x) * h + y]
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dims[1] + j]
    }

    #[inline]
    pub fn set4(&mut self, b: usize, c: usize, x: usize, y: usize, v: f64) {
        let [_, cc, w, h] = [self.dims[0], self.dims[1], self.dims[2], self.dims[3]];
        self.data[((b * cc + c) * w + x) * h + y] = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length_and_finiteness() {
        assert!(Tensor::from_vec(vec![2, 2], vec![1.0; 4]).is_ok());
        assert!(matches!(
            Tensor::from_vec(vec![2, 2], vec![1.0; 3]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            Tensor::from_vec(vec![2], vec![f64::NAN, 0.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            Tensor::from_vec(vec![2], vec![f64::INFINITY, 0.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(Tensor::from_vec(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::from_vec(vec![2, 3], (0..6).map(|i| i as f64).collect()).unwrap();
        let r = t.reshape(&[3, 2]).unwrap();
        assert_eq!(r.dims(), &[3, 2]);
        assert_eq!(r.data(), t.data());
        assert!(t.reshape(&[4, 2]).is_err());
    }

    #[test]
    fn add_and_accumulate() {
        let a = Tensor::from_vec(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::from_vec(vec![3], vec![10.0, 20.0, 30.0]).unwrap();
        let c = a.add(&b).unwrap();
        assert_eq!(c.data(), &[11.0, 22.0, 33.0]);
        let bad = Tensor::zeros(&[4]);
        assert!(a.add(&bad).is_err());
    }

    #[test]
    fn at4_row_major_layout() {
        let t = Tensor::from_vec(vec![1, 2, 2, 3], (0..12).map(|i| i as f64).collect()).unwrap();
        // index ((b*C + c)*W + x)*H + y
        assert_eq!(t.at4(0, 1, 1, 2), 11.0);
        assert_eq!(t.at4(0, 0, 1, 0), 3.0);
    }
}
