//! Output mapping layer: translates source-class predictions into
//! target-class predictions, either through a many-to-one label mapping with
//! averaged probabilities or through a trainable linear head.

use crate::error::{Error, Result};
use crate::model::{argmax, FrozenModel};
use crate::tensor::Tensor;
use crate::transform::InputTransform;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Surjective many-to-one assignment of source labels to target labels.
///
/// `assignment[t]` is the non-empty set of source labels backing target label
/// `t`; the sets are pairwise disjoint so no source label serves two targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapping {
    assignment: Vec<Vec<usize>>,
    num_source: usize,
}

impl LabelMapping {
    pub fn new(assignment: Vec<Vec<usize>>, num_source: usize) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::InvalidConfig("mapping needs at least one target class".into()));
        }
        if assignment.len() > num_source {
            return Err(Error::Assumption(format!(
                "target class count {} exceeds source class count {num_source}",
                assignment.len()
            )));
        }
        let mut seen = vec![false; num_source];
        for (t, block) in assignment.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidConfig(format!("target class {t} has no source labels")));
            }
            for &s in block {
                if s >= num_source {
                    return Err(Error::InvalidConfig(format!(
                        "mapping references source label {s} >= {num_source}"
                    )));
                }
                if seen[s] {
                    return Err(Error::InvalidConfig(format!(
                        "source label {s} assigned to two target classes"
                    )));
                }
                seen[s] = true;
            }
        }
        Ok(LabelMapping { assignment, num_source })
    }

    /// Uniform random assignment of `labels_per_target` distinct source labels
    /// to each target class, drawn without replacement.
    pub fn random(
        num_source: usize,
        num_target: usize,
        labels_per_target: usize,
        seed: u64,
    ) -> Result<Self> {
        if labels_per_target == 0 {
            return Err(Error::InvalidConfig("labels_per_target must be >= 1".into()));
        }
        let need = labels_per_target * num_target;
        if need > num_source {
            return Err(Error::Capacity(format!(
                "{num_target} targets x {labels_per_target} labels = {need} > {num_source} source labels"
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut pool: Vec<usize> = (0..num_source).collect();
        // Partial Fisher-Yates: the first `need` slots become the draw.
        for i in 0..need {
            let j = rng.gen_range(i..num_source);
            pool.swap(i, j);
        }
        let assignment = pool[..need]
            .chunks(labels_per_target)
            .map(|c| c.to_vec())
            .collect();
        LabelMapping::new(assignment, num_source)
    }

    /// Frequency-based greedy mapping from the frozen model's argmax responses
    /// on untrained (zero-padded) target samples.
    ///
    /// The transform must be at its initial state (`W = 0`) so the counted
    /// responses are the model's original reactions to the padded data.
    pub fn greedy_from_frequencies(
        model: &FrozenModel,
        transform: &InputTransform,
        samples: &Tensor,
        labels: &[usize],
        num_target: usize,
        labels_per_target: usize,
    ) -> Result<Self> {
        let counts = argmax_frequencies(model, transform, samples, labels, num_target)?;
        LabelMapping::greedy_from_counts(&counts, model.num_classes(), labels_per_target)
    }

    /// Greedy mapping from a precomputed count matrix (black-box runs build
    /// the counts through the forward oracle instead of a local model).
    pub fn greedy_from_counts(
        counts: &[Vec<u64>],
        num_source: usize,
        labels_per_target: usize,
    ) -> Result<Self> {
        let assignment = greedy_assign(counts, num_source, labels_per_target)?;
        LabelMapping::new(assignment, num_source)
    }

    pub fn num_target(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_source(&self) -> usize {
        self.num_source
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.assignment
    }

    pub fn is_one_to_one(&self) -> bool {
        self.assignment.iter().all(|b| b.len() == 1)
    }

    /// Aggregate source probabilities into target scores: each target score is
    /// the mean of the source probabilities assigned to it.
    pub fn aggregate(&self, src_probs: &Tensor) -> Result<Tensor> {
        if src_probs.cols() != self.num_source {
            return Err(Error::shape("aggregate_label_probs", self.num_source, src_probs.cols()));
        }
        let n = src_probs.rows();
        let k_t = self.assignment.len();
        let mut out = Tensor::zeros(vec![n, k_t]);
        for r in 0..n {
            let p = src_probs.row(r);
            let row = out.row_mut(r);
            for (t, block) in self.assignment.iter().enumerate() {
                let sum: f64 = block.iter().map(|&s| p[s]).sum();
                row[t] = sum / block.len() as f64;
            }
        }
        Ok(out)
    }

    /// Explicit pairs `(target, sources)` for report serialization.
    pub fn pairs(&self) -> Vec<(usize, Vec<usize>)> {
        self.assignment
            .iter()
            .enumerate()
            .map(|(t, b)| (t, b.clone()))
            .collect()
    }
}

/// Count, for every (target class, source label) pair, how often the source
/// label is the model's argmax on that class's transformed samples.
pub fn argmax_frequencies(
    model: &FrozenModel,
    transform: &InputTransform,
    samples: &Tensor,
    labels: &[usize],
    num_target: usize,
) -> Result<Vec<Vec<u64>>> {
    if samples.rows() == 0 {
        return Err(Error::Data("empty target training set".into()));
    }
    let probs = model.forward(&transform.apply(samples)?)?;
    argmax_frequency_counts(&probs, labels, num_target)
}

/// Count argmax responses from already-computed source probabilities.
pub fn argmax_frequency_counts(
    probs: &Tensor,
    labels: &[usize],
    num_target: usize,
) -> Result<Vec<Vec<u64>>> {
    if probs.rows() != labels.len() {
        return Err(Error::shape("argmax_frequency_counts", probs.rows(), labels.len()));
    }
    if probs.rows() == 0 {
        return Err(Error::Data("empty target training set".into()));
    }
    let mut counts = vec![vec![0u64; probs.cols()]; num_target];
    for (r, &label) in labels.iter().enumerate() {
        if label >= num_target {
            return Err(Error::Data(format!(
                "target label {label} out of range for {num_target} classes"
            )));
        }
        counts[label][argmax(probs.row(r))] += 1;
    }
    if let Some(empty) = counts.iter().position(|row| row.iter().all(|&c| c == 0)) {
        return Err(Error::Data(format!("target class {empty} has no samples")));
    }
    Ok(counts)
}

/// Greedy assignment over a count matrix: repeatedly take the globally
/// highest-count available (class, label) pair; ties break toward the lower
/// source label index, then the lower target class index. Classes that
/// already hold `labels_per_target` labels and already-assigned source
/// labels drop out of the pool.
pub fn greedy_assign(
    counts: &[Vec<u64>],
    num_source: usize,
    labels_per_target: usize,
) -> Result<Vec<Vec<usize>>> {
    let num_target = counts.len();
    if labels_per_target == 0 {
        return Err(Error::InvalidConfig("labels_per_target must be >= 1".into()));
    }
    if labels_per_target * num_target > num_source {
        return Err(Error::Capacity(format!(
            "{num_target} targets x {labels_per_target} labels exceed {num_source} source labels"
        )));
    }
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); num_target];
    let mut label_taken = vec![false; num_source];
    loop {
        let mut best: Option<(u64, usize, usize)> = None; // (count, source, target)
        for (t, row) in counts.iter().enumerate() {
            if assignment[t].len() >= labels_per_target {
                continue;
            }
            for (s, &c) in row.iter().enumerate() {
                if label_taken[s] {
                    continue;
                }
                let candidate = (c, s, t);
                best = match best {
                    None => Some(candidate),
                    Some((bc, bs, bt)) => {
                        if c > bc || (c == bc && (s < bs || (s == bs && t < bt))) {
                            Some(candidate)
                        } else {
                            Some((bc, bs, bt))
                        }
                    }
                };
            }
        }
        match best {
            Some((_, s, t)) => {
                assignment[t].push(s);
                label_taken[s] = true;
            }
            None => break,
        }
        if assignment.iter().all(|b| b.len() == labels_per_target) {
            break;
        }
    }
    Ok(assignment)
}

/// Trainable affine map from the source model's output (probabilities by
/// default, logits when `on_logits` is set) to target class scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    /// Row-major `[num_target, num_source]`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub num_source: usize,
    pub num_target: usize,
    pub on_logits: bool,
}

impl LinearHead {
    pub fn new(
        weight: Vec<f64>,
        bias: Vec<f64>,
        num_source: usize,
        num_target: usize,
        on_logits: bool,
    ) -> Result<Self> {
        if weight.len() != num_source * num_target {
            return Err(Error::shape("linear head weight", num_source * num_target, weight.len()));
        }
        if bias.len() != num_target {
            return Err(Error::shape("linear head bias", num_target, bias.len()));
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear head parameters".into()));
        }
        Ok(LinearHead { weight, bias, num_source, num_target, on_logits })
    }

    /// Seeded uniform init in `±sqrt(6 / (num_source + num_target))`, zero bias.
    pub fn random_init(num_source: usize, num_target: usize, on_logits: bool, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let bound = (6.0 / (num_source + num_target) as f64).sqrt();
        let weight = (0..num_source * num_target)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        LinearHead {
            weight,
            bias: vec![0.0; num_target],
            num_source,
            num_target,
            on_logits,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Affine forward: `out = src W^T + b`.
    pub fn forward(&self, src: &Tensor) -> Result<Tensor> {
        if src.cols() != self.num_source {
            return Err(Error::shape("linear_head_forward", self.num_source, src.cols()));
        }
        let n = src.rows();
        let mut out = Tensor::zeros(vec![n, self.num_target]);
        for r in 0..n {
            let x = src.row(r);
            let row = out.row_mut(r);
            for (t, o) in row.iter_mut().enumerate() {
                let wrow = &self.weight[t * self.num_source..(t + 1) * self.num_source];
                let mut acc = self.bias[t];
                for (w, xi) in wrow.iter().zip(x) {
                    acc += w * xi;
                }
                *o = acc;
            }
        }
        Ok(out)
    }

    /// Backward pass: given the upstream gradient on the head output, return
    /// `(grad_weight, grad_bias, grad_src)`.
    pub fn backward(
        &self,
        src: &Tensor,
        grad_out: &Tensor,
    ) -> Result<(Vec<f64>, Vec<f64>, Tensor)> {
        if grad_out.cols() != self.num_target || grad_out.rows() != src.rows() {
            return Err(Error::shape(
                "linear head backward",
                format!("({}, {})", src.rows(), self.num_target),
                format!("({}, {})", grad_out.rows(), grad_out.cols()),
            ));
        }
        let mut gw = vec![0.0; self.weight.len()];
        let mut gb = vec![0.0; self.bias.len()];
        let mut gsrc = Tensor::zeros(vec![src.rows(), self.num_source]);
        for r in 0..src.rows() {
            let x = src.row(r);
            let g = grad_out.row(r);
            let gx = gsrc.row_mut(r);
            for (t, &gt) in g.iter().enumerate() {
                gb[t] += gt;
                let wrow = &self.weight[t * self.num_source..(t + 1) * self.num_source];
                let grow = &mut gw[t * self.num_source..(t + 1) * self.num_source];
                for ((gwi, xi), (gxi, wi)) in
                    grow.iter_mut().zip(x).zip(gx.iter_mut().zip(wrow))
                {
                    *gwi += gt * xi;
                    *gxi += gt * wi;
                }
            }
        }
        Ok((gw, gb, gsrc))
    }
}

/// The output mapping used by a reprogramming run: exactly one of a fixed
/// label mapping or a trainable linear head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMap {
    Mapping(LabelMapping),
    Head(LinearHead),
}

impl OutputMap {
    pub fn num_target(&self) -> usize {
        match self {
            OutputMap::Mapping(m) => m.num_target(),
            OutputMap::Head(h) => h.num_target,
        }
    }

    /// Trainable scalars contributed by the output side: zero for a fixed
    /// label mapping.
    pub fn trainable_count(&self) -> usize {
        match self {
            OutputMap::Mapping(_) => 0,
            OutputMap::Head(h) => h.param_count(),
        }
    }
}
