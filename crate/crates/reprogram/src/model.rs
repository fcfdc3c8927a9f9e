//! Minimal feed-forward network engine.
//!
//! Defines, trains, and evaluates small dense classifiers and exposes exact
//! gradients of outputs with respect to inputs. Model parameters are
//! immutable once a [`FrozenModel`] is built; the SHA-256 parameter digest is
//! the enforcement handle for that guarantee.

use crate::error::{Error, Result};
use crate::tensor::{one_hot, Tensor};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Per-layer parameter gradient buffers: `(weight, bias)` for dense layers,
/// `None` for parameterless ones.
pub(crate) type ParamGrads = Vec<Option<(Vec<f64>, Vec<f64>)>>;

/// Architecture manifest entry: layer kind plus dimensions, no parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchLayer {
    Dense { in_dim: usize, out_dim: usize },
    Relu,
    Flatten,
    Softmax,
}

/// A fully parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Affine map `y = W x + b` with `weight` stored row-major `[out_dim, in_dim]`.
    Dense {
        in_dim: usize,
        out_dim: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu,
    Flatten,
    Softmax,
}

impl LayerSpec {
    pub fn arch(&self) -> ArchLayer {
        match self {
            LayerSpec::Dense { in_dim, out_dim, .. } => ArchLayer::Dense {
                in_dim: *in_dim,
                out_dim: *out_dim,
            },
            LayerSpec::Relu => ArchLayer::Relu,
            LayerSpec::Flatten => ArchLayer::Flatten,
            LayerSpec::Softmax => ArchLayer::Softmax,
        }
    }
}

/// Hyperparameters for training a source model from scratch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl SourceTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Layer-stack evaluation
// ---------------------------------------------------------------------------

/// All intermediate activations; `acts[0]` is the (flattened) input and
/// `acts[i + 1]` the output of layer `i`.
fn layer_activations(layers: &[LayerSpec], batch: &Tensor) -> Result<Vec<Tensor>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(batch.flattened());
    for layer in layers {
        let prev = acts.last().unwrap();
        let next = match layer {
            LayerSpec::Dense { in_dim, out_dim, weight, bias } => {
                if prev.cols() != *in_dim {
                    return Err(Error::shape("dense forward", *in_dim, prev.cols()));
                }
                let n = prev.rows();
                let mut out = Tensor::zeros(vec![n, *out_dim]);
                for r in 0..n {
                    let x = prev.row(r);
                    let y = out.row_mut(r);
                    for (o, yo) in y.iter_mut().enumerate() {
                        let wrow = &weight[o * in_dim..(o + 1) * in_dim];
                        let mut acc = bias[o];
                        for (wi, xi) in wrow.iter().zip(x) {
                            acc += wi * xi;
                        }
                        *yo = acc;
                    }
                }
                out
            }
            LayerSpec::Relu => {
                let mut out = prev.clone();
                for v in out.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                out
            }
            LayerSpec::Flatten => prev.flattened(),
            LayerSpec::Softmax => {
                let mut out = prev.clone();
                for r in 0..out.rows() {
                    softmax_row(out.row_mut(r));
                }
                out
            }
        };
        acts.push(next);
    }
    Ok(acts)
}

/// Vector-Jacobian product from layer `top` (exclusive) down to the input.
/// When `param_grads` is given, dense weight and bias gradients are
/// accumulated into the matching slots (used only by source training).
fn layer_vjp(
    layers: &[LayerSpec],
    acts: &[Tensor],
    mut grad: Tensor,
    top: usize,
    mut param_grads: Option<&mut ParamGrads>,
) -> Result<Tensor> {
    for i in (0..top).rev() {
        let input = &acts[i];
        grad = match &layers[i] {
            LayerSpec::Dense { in_dim, out_dim, weight, .. } => {
                let n = grad.rows();
                if let Some(grads) = param_grads.as_deref_mut() {
                    let (gw, gb) = grads[i].as_mut().expect("param grad slot for dense layer");
                    for r in 0..n {
                        let g = grad.row(r);
                        let x = input.row(r);
                        for (o, go) in g.iter().enumerate() {
                            gb[o] += go;
                            let grow = &mut gw[o * in_dim..(o + 1) * in_dim];
                            for (gi, xi) in grow.iter_mut().zip(x) {
                                *gi += go * xi;
                            }
                        }
                    }
                }
                let mut next = Tensor::zeros(vec![n, *in_dim]);
                for r in 0..n {
                    let g = grad.row(r);
                    let out_row = next.row_mut(r);
                    for o in 0..*out_dim {
                        let go = g[o];
                        let wrow = &weight[o * in_dim..(o + 1) * in_dim];
                        for (ni, wi) in out_row.iter_mut().zip(wrow) {
                            *ni += go * wi;
                        }
                    }
                }
                next
            }
            LayerSpec::Relu => {
                let mut next = grad;
                for (g, x) in next.data_mut().iter_mut().zip(input.data()) {
                    if *x <= 0.0 {
                        *g = 0.0;
                    }
                }
                next
            }
            LayerSpec::Flatten => Tensor::new(input.shape().to_vec(), grad.data().to_vec())?,
            LayerSpec::Softmax => {
                // d/dz <g, softmax(z)> = y .* (g - <g, y>)
                let y = &acts[i + 1];
                let mut next = Tensor::zeros(vec![grad.rows(), grad.cols()]);
                for r in 0..grad.rows() {
                    let g = grad.row(r);
                    let yr = y.row(r);
                    let dot: f64 = g.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((n, gi), yi) in next.row_mut(r).iter_mut().zip(g).zip(yr) {
                        *n = yi * (gi - dot);
                    }
                }
                next
            }
        };
    }
    grad.check_finite("vjp")?;
    Ok(grad)
}

fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

// ---------------------------------------------------------------------------
// FrozenModel
// ---------------------------------------------------------------------------

/// A classifier whose parameters never change after construction.
///
/// `forward` returns class probabilities, `logits` the pre-softmax
/// representation. Both borrow the model immutably, so concurrent evaluation
/// against a shared model is safe.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenModel {
    layers: Vec<LayerSpec>,
    input_dim: usize,
    num_classes: usize,
    input_range: (f64, f64),
    digest: String,
}

impl FrozenModel {
    pub fn new(layers: Vec<LayerSpec>, input_range: (f64, f64)) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("model needs at least one layer".into()));
        }
        if !(input_range.0 < input_range.1) {
            return Err(Error::InvalidConfig(format!(
                "input_range {input_range:?} is not an interval"
            )));
        }
        // Width bookkeeping: dense layers pin widths, everything else preserves them.
        let mut width: Option<usize> = None;
        let mut input_dim = None;
        for (i, layer) in layers.iter().enumerate() {
            match layer {
                LayerSpec::Dense { in_dim, out_dim, weight, bias } => {
                    if *in_dim == 0 || *out_dim == 0 {
                        return Err(Error::InvalidConfig("dense dims must be positive".into()));
                    }
                    if weight.len() != in_dim * out_dim {
                        return Err(Error::shape("dense weight", in_dim * out_dim, weight.len()));
                    }
                    if bias.len() != *out_dim {
                        return Err(Error::shape("dense bias", *out_dim, bias.len()));
                    }
                    if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite(format!("parameters of layer {i}")));
                    }
                    if let Some(w) = width {
                        if w != *in_dim {
                            return Err(Error::shape("dense input width", w, *in_dim));
                        }
                    }
                    input_dim.get_or_insert(*in_dim);
                    width = Some(*out_dim);
                }
                LayerSpec::Softmax => {
                    if i + 1 != layers.len() {
                        return Err(Error::InvalidConfig(
                            "softmax may only appear as the final layer".into(),
                        ));
                    }
                }
                LayerSpec::Relu | LayerSpec::Flatten => {}
            }
        }
        let input_dim = input_dim
            .ok_or_else(|| Error::InvalidConfig("model needs at least one dense layer".into()))?;
        let num_classes = width.expect("dense layer present");
        let digest = digest_of(&layers);
        Ok(FrozenModel { layers, input_dim, num_classes, input_range, digest })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn arch(&self) -> Vec<ArchLayer> {
        self.layers.iter().map(LayerSpec::arch).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_range(&self) -> (f64, f64) {
        self.input_range
    }

    /// SHA-256 over the little-endian bytes of all parameters, in layer order.
    /// Recomputed from the live parameters on every call so any mutation,
    /// however it happened, is caught.
    pub fn param_digest(&self) -> String {
        digest_of(&self.layers)
    }

    /// Digest recorded when the model was constructed or loaded.
    pub fn recorded_digest(&self) -> &str {
        &self.digest
    }

    fn check_batch(&self, batch: &Tensor, context: &'static str) -> Result<()> {
        if batch.cols() != self.input_dim {
            return Err(Error::shape(context, self.input_dim, batch.cols()));
        }
        Ok(())
    }

    /// Class probabilities for a batch; rows sum to one when the model ends in
    /// a softmax layer (the normal case for trained classifiers).
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch, "forward")?;
        let out = layer_activations(&self.layers, batch)?.pop().unwrap();
        out.check_finite("forward")?;
        Ok(out)
    }

    /// Pre-softmax representation: the output of the last layer before the
    /// final softmax (the full output if the model has no softmax).
    pub fn logits(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch, "logits")?;
        let mut acts = layer_activations(&self.layers, batch)?;
        if matches!(self.layers.last(), Some(LayerSpec::Softmax)) {
            acts.pop();
        }
        let out = acts.pop().unwrap();
        out.check_finite("logits")?;
        Ok(out)
    }

    /// Gradient of `<grad_out, output(batch)>` with respect to the input, where
    /// `output` is the full forward pass. Parameters receive no gradient.
    pub fn backward_to_input(&self, batch: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        self.check_batch(batch, "backward_to_input")?;
        let acts = layer_activations(&self.layers, batch)?;
        let last = acts.last().unwrap();
        if grad_out.rows() != last.rows() || grad_out.cols() != last.cols() {
            return Err(Error::shape(
                "backward_to_input grad_out",
                format!("({}, {})", last.rows(), last.cols()),
                format!("({}, {})", grad_out.rows(), grad_out.cols()),
            ));
        }
        layer_vjp(&self.layers, &acts, grad_out.clone(), self.layers.len(), None)
    }

    /// As [`FrozenModel::backward_to_input`] but seeding the backward pass at
    /// the logits instead of the probabilities.
    pub fn backward_logits_to_input(&self, batch: &Tensor, grad_logits: &Tensor) -> Result<Tensor> {
        self.check_batch(batch, "backward_logits_to_input")?;
        let acts = layer_activations(&self.layers, batch)?;
        let top = if matches!(self.layers.last(), Some(LayerSpec::Softmax)) {
            self.layers.len() - 1
        } else {
            self.layers.len()
        };
        if grad_logits.rows() != acts[top].rows() || grad_logits.cols() != acts[top].cols() {
            return Err(Error::shape(
                "backward_logits_to_input grad",
                format!("({}, {})", acts[top].rows(), acts[top].cols()),
                format!("({}, {})", grad_logits.rows(), grad_logits.cols()),
            ));
        }
        layer_vjp(&self.layers, &acts, grad_logits.clone(), top, None)
    }
}

fn digest_of(layers: &[LayerSpec]) -> String {
    let mut hasher = Sha256::new();
    for layer in layers {
        if let LayerSpec::Dense { weight, bias, .. } = layer {
            for v in weight.iter().chain(bias.iter()) {
                hasher.update(v.to_le_bytes());
            }
        }
    }
    let bytes = hasher.finalize();
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parameter bytes in checkpoint payload order (dense weights then bias, in
/// layer order, little-endian f64).
pub(crate) fn param_bytes(layers: &[LayerSpec]) -> Vec<u8> {
    let mut out = Vec::new();
    for layer in layers {
        if let LayerSpec::Dense { weight, bias, .. } = layer {
            for v in weight.iter().chain(bias.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Seeded uniform init in `±sqrt(6 / (in_dim + out_dim))`, biases zero.
pub(crate) fn init_layers(arch: &[ArchLayer], rng: &mut ChaCha20Rng) -> Vec<LayerSpec> {
    arch.iter()
        .map(|a| match *a {
            ArchLayer::Dense { in_dim, out_dim } => {
                let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
                let weight = (0..in_dim * out_dim)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                LayerSpec::Dense { in_dim, out_dim, weight, bias: vec![0.0; out_dim] }
            }
            ArchLayer::Relu => LayerSpec::Relu,
            ArchLayer::Flatten => LayerSpec::Flatten,
            ArchLayer::Softmax => LayerSpec::Softmax,
        })
        .collect()
}

/// Mean cross-entropy of softmax-output probabilities against integer labels.
fn mean_cross_entropy(model_out: &Tensor, labels: &[usize]) -> f64 {
    let n = model_out.rows();
    let mut total = 0.0;
    for (r, &l) in labels.iter().enumerate() {
        total -= model_out.row(r)[l].max(1e-12).ln();
    }
    total / n as f64
}

/// Train a classifier from scratch with SGD plus momentum, then freeze it.
///
/// The architecture must end in a softmax layer. Returns an error if the
/// final training cross-entropy did not decrease relative to initialization.
pub fn train_source(
    samples: &Tensor,
    labels: &[usize],
    arch: &[ArchLayer],
    cfg: &SourceTrainConfig,
) -> Result<FrozenModel> {
    cfg.validate()?;
    if samples.rows() == 0 || labels.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if samples.rows() != labels.len() {
        return Err(Error::shape("train_source labels", samples.rows(), labels.len()));
    }
    if !matches!(arch.last(), Some(ArchLayer::Softmax)) {
        return Err(Error::InvalidConfig("source architecture must end in softmax".into()));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut layers = init_layers(arch, &mut rng);
    // Validate the stack once up front; training only changes parameter values.
    let init_model = FrozenModel::new(layers.clone(), (-1.0, 1.0))?;
    let num_classes = init_model.num_classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Data(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    if samples.cols() != init_model.input_dim() {
        return Err(Error::shape(
            "train_source samples",
            init_model.input_dim(),
            samples.cols(),
        ));
    }
    let initial_ce = mean_cross_entropy(&init_model.forward(samples)?, labels);

    let mut velocity: ParamGrads = param_grad_slots(&layers);

    let n = samples.rows();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        // Fisher-Yates on the sample order, seeded.
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(cfg.batch_size) {
            let batch = gather_rows(samples, chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let acts = layer_activations(&layers, &batch)?;

            // Cross-entropy through softmax: dL/dlogits = (p - y) / B.
            let probs = acts.last().unwrap();
            let onehot = one_hot(&batch_labels, num_classes)?;
            let mut grad = Tensor::zeros(vec![probs.rows(), probs.cols()]);
            let inv = 1.0 / chunk.len() as f64;
            for ((g, p), y) in grad.data_mut().iter_mut().zip(probs.data()).zip(onehot.data()) {
                *g = (p - y) * inv;
            }

            let mut param_grads = param_grad_slots(&layers);
            layer_vjp(&layers, &acts, grad, layers.len() - 1, Some(&mut param_grads))?;

            for (layer, (grads, vel)) in layers
                .iter_mut()
                .zip(param_grads.iter().zip(velocity.iter_mut()))
            {
                if let LayerSpec::Dense { weight, bias, .. } = layer {
                    let (gw, gb) = grads.as_ref().unwrap();
                    let (vw, vb) = vel.as_mut().unwrap();
                    for ((w, g), v) in weight.iter_mut().zip(gw).zip(vw.iter_mut()) {
                        *v = cfg.momentum * *v - cfg.learning_rate * g;
                        *w += *v;
                    }
                    for ((b, g), v) in bias.iter_mut().zip(gb).zip(vb.iter_mut()) {
                        *v = cfg.momentum * *v - cfg.learning_rate * g;
                        *b += *v;
                    }
                }
            }
        }
    }

    let trained = FrozenModel::new(layers, (-1.0, 1.0))?;
    let final_ce = mean_cross_entropy(&trained.forward(samples)?, labels);
    if !(final_ce < initial_ce) {
        return Err(Error::NonFinite(format!(
            "training cross-entropy did not decrease ({initial_ce} -> {final_ce})"
        )));
    }
    Ok(trained)
}

fn param_grad_slots(layers: &[LayerSpec]) -> ParamGrads {
    layers
        .iter()
        .map(|l| match l {
            LayerSpec::Dense { weight, bias, .. } => {
                Some((vec![0.0; weight.len()], vec![0.0; bias.len()]))
            }
            _ => None,
        })
        .collect()
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn accuracy(probs: &Tensor, labels: &[usize]) -> f64 {
    let mut hits = 0usize;
    for (r, &l) in labels.iter().enumerate() {
        if argmax(probs.row(r)) == l {
            hits += 1;
        }
    }
    hits as f64 / labels.len() as f64
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn gather_rows(t: &Tensor, idx: &[usize]) -> Tensor {
    let w = t.cols();
    let mut data = Vec::with_capacity(idx.len() * w);
    for &i in idx {
        data.extend_from_slice(t.row(i));
    }
    Tensor::matrix(idx.len(), w, data).expect("gathered rows are finite")
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn identity_softmax_model(dim: usize) -> FrozenModel {
        let mut weight = vec![0.0; dim * dim];
        for i in 0..dim {
            weight[i * dim + i] = 1.0;
        }
        FrozenModel::new(
            vec![
                LayerSpec::Dense { in_dim: dim, out_dim: dim, weight, bias: vec![0.0; dim] },
                LayerSpec::Softmax,
            ],
            (-1.0, 1.0),
        )
        .unwrap()
    }

    /// Small random relu net ending in softmax, for gradient checks.
    pub(crate) fn random_model(
        din: usize,
        hidden: usize,
        dout: usize,
        rng: &mut ChaCha20Rng,
    ) -> FrozenModel {
        let layers = init_layers(
            &[
                ArchLayer::Dense { in_dim: din, out_dim: hidden },
                ArchLayer::Relu,
                ArchLayer::Dense { in_dim: hidden, out_dim: dout },
                ArchLayer::Softmax,
            ],
            rng,
        );
        FrozenModel::new(layers, (-1.0, 1.0)).unwrap()
    }

    #[test]
    fn softmax_on_equal_logits_is_uniform() {
        let m = identity_softmax_model(2);
        let out = m.forward(&Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap()).unwrap();
        assert!((out.row(0)[0] - 0.5).abs() < 1e-15);
        assert!((out.row(0)[1] - 0.5).abs() < 1e-15);

        let m3 = identity_softmax_model(3);
        let out = m3.forward(&Tensor::matrix(1, 3, vec![1.0, 1.0, 1.0]).unwrap()).unwrap();
        for v in out.row(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn logits_of_identity_layer_pass_through() {
        let m = identity_softmax_model(2);
        let z = m.logits(&Tensor::matrix(1, 2, vec![2.0, 3.0]).unwrap()).unwrap();
        assert_eq!(z.row(0), &[2.0, 3.0]);
    }

    #[test]
    fn relu_clamps_negative_preactivations() {
        let m = FrozenModel::new(
            vec![
                LayerSpec::Dense {
                    in_dim: 2,
                    out_dim: 2,
                    weight: vec![1.0, 0.0, 0.0, 1.0],
                    bias: vec![0.0, 0.0],
                },
                LayerSpec::Relu,
            ],
            (-1.0, 1.0),
        )
        .unwrap();
        let out = m.forward(&Tensor::matrix(1, 2, vec![-1.0, 4.0]).unwrap()).unwrap();
        assert_eq!(out.row(0), &[0.0, 4.0]);
    }

    #[test]
    fn softmax_of_logits_reproduces_forward() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let m = random_model(4, 5, 3, &mut rng);
        let batch = Tensor::matrix(3, 4, (0..12).map(|v| (v as f64) / 7.0 - 0.8).collect()).unwrap();
        let probs = m.forward(&batch).unwrap();
        let logits = m.logits(&batch).unwrap();
        for r in 0..3 {
            let mut row = logits.row(r).to_vec();
            softmax_row(&mut row);
            for (a, b) in row.iter().zip(probs.row(r)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    // Independently computed two-layer forward pass:
    //   z1 = W1 x + b1, a1 = relu(z1), z2 = W2 a1 + b2, p = softmax(z2)
    // with W1 = [[1, -2], [0.5, 1]], b1 = (0.1, 0.2), x = (1, -1)
    //   -> z1 = (3.1, -0.3), a1 = (3.1, 0)
    // W2 = [[0.2, -1], [0.4, 0.3]], b2 = (0, 0.1)
    //   -> z2 = (0.62, 1.34), p = (0.3273929829, 0.6726070171)
    #[test]
    fn two_layer_forward_matches_hand_computation() {
        let m = FrozenModel::new(
            vec![
                LayerSpec::Dense {
                    in_dim: 2,
                    out_dim: 2,
                    weight: vec![1.0, -2.0, 0.5, 1.0],
                    bias: vec![0.1, 0.2],
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    in_dim: 2,
                    out_dim: 2,
                    weight: vec![0.2, -1.0, 0.4, 0.3],
                    bias: vec![0.0, 0.1],
                },
                LayerSpec::Softmax,
            ],
            (-1.0, 1.0),
        )
        .unwrap();
        let x = Tensor::matrix(1, 2, vec![1.0, -1.0]).unwrap();
        let z = m.logits(&x).unwrap();
        assert!((z.row(0)[0] - 0.62).abs() < 1e-12);
        assert!((z.row(0)[1] - 1.34).abs() < 1e-12);
        let p = m.forward(&x).unwrap();
        assert!((p.row(0)[0] - 0.3273929829322395).abs() < 1e-12);
        assert!((p.row(0)[1] - 0.6726070170677605).abs() < 1e-12);
    }

    #[test]
    fn forward_rows_are_stochastic() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let m = random_model(6, 8, 4, &mut rng);
        let batch =
            Tensor::matrix(5, 6, (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let out = m.forward(&batch).unwrap();
        for r in 0..5 {
            let sum: f64 = out.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(out.row(r).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn flatten_collapses_image_batches() {
        let m = FrozenModel::new(
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_dim: 4,
                    out_dim: 2,
                    weight: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
                    bias: vec![0.0, 0.0],
                },
                LayerSpec::Softmax,
            ],
            (-1.0, 1.0),
        )
        .unwrap();
        let batch = Tensor::new(vec![2, 2, 2], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]).unwrap();
        let z = m.logits(&batch).unwrap();
        assert_eq!(z.shape(), &[2, 2]);
        assert!((z.row(0)[0] - 0.1).abs() < 1e-15);
        assert!((z.row(1)[1] - 0.8).abs() < 1e-15);
        // Input gradients come back in the engine's flat [n, d] view.
        let g = m
            .backward_logits_to_input(&batch, &Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap())
            .unwrap();
        assert_eq!(g.shape(), &[2, 4]);
        assert_eq!(g.row(0), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let m = identity_softmax_model(3);
        let err = m.forward(&Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 3") && msg.contains("got 2"), "{msg}");
    }

    #[test]
    fn dense_backward_returns_weight_row() {
        // Plain dense probe head, no softmax: grad e_k picks out row k of W.
        let m = FrozenModel::new(
            vec![LayerSpec::Dense {
                in_dim: 3,
                out_dim: 2,
                weight: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
                bias: vec![0.5, -0.5],
            }],
            (-1.0, 1.0),
        )
        .unwrap();
        let x = Tensor::matrix(1, 3, vec![0.3, -0.4, 0.9]).unwrap();
        let g = m
            .backward_to_input(&x, &Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap())
            .unwrap();
        assert_eq!(g.row(0), &[4.0, 5.0, 6.0]);
        let zero = m
            .backward_to_input(&x, &Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap())
            .unwrap();
        assert_eq!(zero.row(0), &[0.0, 0.0, 0.0]);
    }

    /// Central finite differences of `<g, f(x)>` with respect to each input.
    pub(crate) fn fd_input_gradient(
        m: &FrozenModel,
        batch: &Tensor,
        grad_out: &Tensor,
        step: f64,
    ) -> Tensor {
        let probe = |b: &Tensor| -> f64 {
            let out = m.forward(b).unwrap();
            out.data().iter().zip(grad_out.data()).map(|(a, g)| a * g).sum()
        };
        let mut fd = Tensor::zeros(vec![batch.rows(), batch.cols()]);
        for i in 0..batch.len() {
            let mut plus = batch.clone();
            plus.data_mut()[i] += step;
            let mut minus = batch.clone();
            minus.data_mut()[i] -= step;
            fd.data_mut()[i] = (probe(&plus) - probe(&minus)) / (2.0 * step);
        }
        fd
    }

    pub(crate) fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
        num / den
    }

    #[test]
    fn backward_matches_finite_differences_on_random_models() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for trial in 0..100 {
            let din = rng.gen_range(2..6);
            let hidden = rng.gen_range(2..6);
            let dout = rng.gen_range(2..5);
            let m = random_model(din, hidden, dout, &mut rng);
            let n = rng.gen_range(1..4);
            let batch = Tensor::matrix(
                n,
                din,
                (0..n * din).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let grad_out = Tensor::matrix(
                n,
                dout,
                (0..n * dout).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let exact = m.backward_to_input(&batch, &grad_out).unwrap();
            let fd = fd_input_gradient(&m, &batch, &grad_out, 1e-5);
            let err = rel_err(exact.data(), fd.data());
            assert!(err < 1e-4, "trial {trial}: rel err {err}");
        }
    }

    fn blob_data(seed: u64, n_per: usize) -> (Tensor, Vec<usize>) {
        // Two linearly separable 2-D blobs.
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * n_per {
            let c = i % 2;
            let (cx, cy) = if c == 0 { (-0.6, -0.6) } else { (0.6, 0.6) };
            data.push(cx + rng.gen_range(-0.25..0.25));
            data.push(cy + rng.gen_range(-0.25..0.25));
            labels.push(c);
        }
        (Tensor::matrix(2 * n_per, 2, data).unwrap(), labels)
    }

    fn blob_arch() -> Vec<ArchLayer> {
        vec![ArchLayer::Dense { in_dim: 2, out_dim: 2 }, ArchLayer::Softmax]
    }

    #[test]
    fn train_source_separates_blobs() {
        let (samples, labels) = blob_data(3, 60);
        let cfg = SourceTrainConfig {
            epochs: 20,
            batch_size: 16,
            learning_rate: 0.5,
            momentum: 0.9,
            seed: 1,
        };
        let m = train_source(&samples, &labels, &blob_arch(), &cfg).unwrap();
        let acc = accuracy(&m.forward(&samples).unwrap(), &labels);
        assert!(acc >= 0.95, "train accuracy {acc}");
    }

    #[test]
    fn train_source_is_deterministic() {
        let (samples, labels) = blob_data(3, 40);
        let cfg = SourceTrainConfig {
            epochs: 5,
            batch_size: 16,
            learning_rate: 0.3,
            momentum: 0.9,
            seed: 42,
        };
        let a = train_source(&samples, &labels, &blob_arch(), &cfg).unwrap();
        let b = train_source(&samples, &labels, &blob_arch(), &cfg).unwrap();
        assert_eq!(a.param_digest(), b.param_digest());
        assert_eq!(a.layers(), b.layers());
    }

    #[test]
    fn train_source_rejects_bad_inputs() {
        let (samples, labels) = blob_data(3, 10);
        let mut cfg = SourceTrainConfig {
            epochs: 0,
            batch_size: 16,
            learning_rate: 0.3,
            momentum: 0.9,
            seed: 0,
        };
        assert!(train_source(&samples, &labels, &blob_arch(), &cfg).is_err());
        cfg.epochs = 1;
        let bad_labels = vec![5; labels.len()];
        assert!(train_source(&samples, &bad_labels, &blob_arch(), &cfg).is_err());
        let empty = Tensor::zeros(vec![1, 2]);
        assert!(train_source(&empty, &[], &blob_arch(), &cfg).is_err());
    }

    #[test]
    fn digest_is_stable_and_parameter_sensitive() {
        let m = identity_softmax_model(3);
        assert_eq!(m.param_digest(), m.param_digest());
        assert_eq!(m.param_digest().len(), 64);
        assert_eq!(m.param_digest(), m.recorded_digest());

        let mut weight = vec![0.0; 9];
        for i in 0..3 {
            weight[i * 3 + i] = 1.0;
        }
        weight[1] = 1e-9;
        let other = FrozenModel::new(
            vec![
                LayerSpec::Dense { in_dim: 3, out_dim: 3, weight, bias: vec![0.0; 3] },
                LayerSpec::Softmax,
            ],
            (-1.0, 1.0),
        )
        .unwrap();
        assert_ne!(m.param_digest(), other.param_digest());
    }

    #[test]
    fn softmax_only_final() {
        let err = FrozenModel::new(
            vec![
                LayerSpec::Softmax,
                LayerSpec::Dense { in_dim: 2, out_dim: 2, weight: vec![0.0; 4], bias: vec![0.0; 2] },
            ],
            (-1.0, 1.0),
        );
        assert!(err.is_err());
    }
}
