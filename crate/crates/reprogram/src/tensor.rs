//! Dense row-major f64 tensor, the value carrier for every numeric interface
//! in this crate.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense n-dimensional array of `f64` in row-major order.
///
/// Invariants: `shape.iter().product() == data.len()` and every element is
/// finite. Both are checked on construction; operations in this crate only
/// build tensors through [`Tensor::new`] or the unchecked internal helpers
/// that re-validate before returning to callers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        // A zero leading dim is an empty batch (the endpoint protocol allows
        // zero-row requests); trailing dims must be positive.
        if shape.is_empty() || shape[1..].contains(&0) {
            return Err(Error::shape("Tensor::new", "positive dims", format!("{shape:?}")));
        }
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("{expect} elements for shape {shape:?}"),
                data.len(),
            ));
        }
        let t = Tensor { shape, data };
        t.check_finite("Tensor::new")?;
        Ok(t)
    }

    /// 2-D constructor used throughout the model plumbing.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows when viewed as 2-D (samples-by-features).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Row width when viewed as 2-D: the product of all trailing dims, so a
    /// `[n, h, w]` image batch flattens to rows of `h * w`.
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.cols();
        &self.data[i * w..(i + 1) * w]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.cols();
        &mut self.data[i * w..(i + 1) * w]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols())
    }

    /// Collapse any trailing dims into one, e.g. `[n, 2, 2]` -> `[n, 4]`.
    pub fn flattened(&self) -> Tensor {
        Tensor { shape: vec![self.rows(), self.cols()], data: self.data.clone() }
    }

    pub(crate) fn check_finite(&self, context: &'static str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite(format!(
                "{context}: element {i} is {}",
                self.data[i]
            ))),
            None => Ok(()),
        }
    }
}

/// One-hot encode class indices into an `[n, num_classes]` tensor.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Tensor> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Data(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    let mut t = Tensor::zeros(vec![labels.len(), num_classes]);
    for (i, &l) in labels.iter().enumerate() {
        t.row_mut(i)[l] = 1.0;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_shape_data_mismatch() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Tensor::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::new(vec![2], vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn row_views_and_flatten() {
        let t = Tensor::new(vec![2, 2, 2], (0..8).map(|v| v as f64).collect()).unwrap();
        assert_eq!(t.rows(), 2);
        assert_eq!(t.cols(), 4);
        assert_eq!(t.row(1), &[4.0, 5.0, 6.0, 7.0]);
        assert_eq!(t.flattened().shape(), &[2, 4]);
    }

    #[test]
    fn one_hot_bounds() {
        let t = one_hot(&[0, 2], 3).unwrap();
        assert_eq!(t.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(t.row(1), &[0.0, 0.0, 1.0]);
        assert!(one_hot(&[3], 3).is_err());
    }
}
