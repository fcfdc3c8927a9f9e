//! Input transformation layer: embeds a low-dimensional target sample into
//! the source input space via zero-padding and placement, then adds a
//! trainable masked perturbation kept in range by a tanh change of variable.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Where the target sample lands inside the source-sized vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementMode {
    /// Contiguous block starting at `(d_source - d_target) / 2`.
    Center,
    /// Contiguous block starting at the given index.
    Offset(usize),
    /// The sample repeated this many times, packed from index 0.
    Replicate(usize),
}

/// Placement geometry: target and source widths plus the index set the target
/// values are written to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementLayout {
    pub d_target: usize,
    pub d_source: usize,
    pub mode: PlacementMode,
    occupied: Vec<usize>,
}

impl PlacementLayout {
    pub fn new(d_target: usize, d_source: usize, mode: PlacementMode) -> Result<Self> {
        if d_target == 0 {
            return Err(Error::InvalidConfig("d_target must be positive".into()));
        }
        if d_target > d_source {
            return Err(Error::Assumption(format!(
                "target dimension {d_target} exceeds source dimension {d_source}"
            )));
        }
        let occupied: Vec<usize> = match mode {
            PlacementMode::Center => {
                let start = (d_source - d_target) / 2;
                (start..start + d_target).collect()
            }
            PlacementMode::Offset(k) => {
                if k + d_target > d_source {
                    return Err(Error::Capacity(format!(
                        "offset {k} plus target width {d_target} exceeds {d_source}"
                    )));
                }
                (k..k + d_target).collect()
            }
            PlacementMode::Replicate(r) => {
                if r == 0 {
                    return Err(Error::InvalidConfig("replicate count must be >= 1".into()));
                }
                if r * d_target > d_source {
                    return Err(Error::Capacity(format!(
                        "{r} replicates of width {d_target} exceed {d_source} dims"
                    )));
                }
                (0..r * d_target).collect()
            }
        };
        Ok(PlacementLayout { d_target, d_source, mode, occupied })
    }

    /// Indices holding target values, in write order.
    pub fn occupied_indices(&self) -> &[usize] {
        &self.occupied
    }

    pub fn replicates(&self) -> usize {
        match self.mode {
            PlacementMode::Replicate(r) => r,
            _ => 1,
        }
    }

    /// The default disjoint mask: zero on occupied indices, one elsewhere.
    pub fn mask(&self) -> Vec<u8> {
        let mut m = vec![1u8; self.d_source];
        for &i in &self.occupied {
            m[i] = 0;
        }
        m
    }
}

/// Binary mask and occupied index set for a layout. The number of ones in the
/// mask is the number of trainable dimensions.
pub fn build_placement_mask(layout: &PlacementLayout) -> (Vec<u8>, Vec<usize>) {
    (layout.mask(), layout.occupied_indices().to_vec())
}

/// Trainable input transformation.
///
/// Holds the placement layout, the binary mask `M`, and the unconstrained
/// variables `W`; the additive perturbation applied to the padded sample is
/// `M .* tanh(W)`, so padded entries stay strictly inside `(-1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputTransform {
    pub layout: PlacementLayout,
    mask: Vec<u8>,
    w: Vec<f64>,
    /// When set, `apply` rejects samples outside this closed interval.
    pub input_range: Option<(f64, f64)>,
}

impl InputTransform {
    /// Transform with the default disjoint mask and `W = 0`, i.e. pure
    /// zero-padding before any training.
    pub fn new(layout: PlacementLayout, input_range: Option<(f64, f64)>) -> Self {
        let mask = layout.mask();
        let w = vec![0.0; layout.d_source];
        InputTransform { layout, mask, w, input_range }
    }

    /// Overlay variant: mask all ones, so the perturbation also rides on top
    /// of the data dimensions. Outputs may leave the model's input range;
    /// range enforcement still applies to the raw samples only.
    pub fn new_overlay(layout: PlacementLayout, input_range: Option<(f64, f64)>) -> Self {
        let mask = vec![1u8; layout.d_source];
        let w = vec![0.0; layout.d_source];
        InputTransform { layout, mask, w, input_range }
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    /// Effective perturbation vector `M .* tanh(W)`.
    pub fn perturbation(&self) -> Vec<f64> {
        self.mask
            .iter()
            .zip(&self.w)
            .map(|(&m, &w)| if m == 1 { w.tanh() } else { 0.0 })
            .collect()
    }

    /// Number of trainable scalars, the popcount of the mask.
    pub fn trainable_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    /// Indices of trainable dimensions in ascending order.
    pub fn trainable_indices(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| (m == 1).then_some(i))
            .collect()
    }

    /// Copy the trainable entries of `W` out as a packed vector.
    pub(crate) fn packed_w(&self) -> Vec<f64> {
        self.trainable_indices().iter().map(|&i| self.w[i]).collect()
    }

    /// Write a packed vector of trainable entries back into `W`.
    pub(crate) fn set_packed_w(&mut self, packed: &[f64]) {
        for (slot, &v) in self.trainable_indices().iter().zip(packed) {
            self.w[*slot] = v;
        }
    }

    /// Mutable access to the unconstrained variables, for custom training
    /// loops and gradient checks. Masked entries have no effect on the
    /// output.
    pub fn w_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    /// Map a batch of target samples into the source input space:
    /// place each sample per the layout, then add `M .* tanh(W)`.
    pub fn apply(&self, batch: &Tensor) -> Result<Tensor> {
        let d_t = self.layout.d_target;
        let d_s = self.layout.d_source;
        if batch.cols() != d_t {
            return Err(Error::shape("apply_transform", d_t, batch.cols()));
        }
        if let Some((lo, hi)) = self.input_range {
            if let Some(bad) = batch.data().iter().find(|v| **v < lo || **v > hi) {
                return Err(Error::Data(format!(
                    "sample value {bad} outside input range [{lo}, {hi}]"
                )));
            }
        }
        let delta = self.perturbation();
        let n = batch.rows();
        let mut out = Tensor::zeros(vec![n, d_s]);
        let occupied = self.layout.occupied_indices();
        for r in 0..n {
            let x = batch.row(r);
            let row = out.row_mut(r);
            row.copy_from_slice(&delta);
            for (slot, &idx) in occupied.iter().enumerate() {
                // Replicates cycle through the sample in placement order.
                row[idx] += x[slot % d_t];
            }
        }
        out.check_finite("apply_transform")?;
        Ok(out)
    }

    /// Gradient of a scalar loss with respect to `W`, given the loss gradient
    /// with respect to the transformed batch: `sum_batch g .* M .* (1 - tanh^2 W)`.
    /// Entries where the mask is zero are exactly zero.
    pub fn grad_w(&self, grad_transformed: &Tensor) -> Result<Vec<f64>> {
        let d_s = self.layout.d_source;
        if grad_transformed.cols() != d_s {
            return Err(Error::shape("transform_grad", d_s, grad_transformed.cols()));
        }
        let mut grad = vec![0.0; d_s];
        for r in 0..grad_transformed.rows() {
            for (g, up) in grad.iter_mut().zip(grad_transformed.row(r)) {
                *g += up;
            }
        }
        for (i, g) in grad.iter_mut().enumerate() {
            if self.mask[i] == 0 {
                *g = 0.0;
            } else {
                let t = self.w[i].tanh();
                *g *= 1.0 - t * t;
            }
        }
        Ok(grad)
    }
}
