//! Reprogramming training loop.
//!
//! Wires the trainable pieces around a frozen classifier: transformed inputs
//! go through the model, the output map turns source predictions into target
//! scores, and the task loss drives updates of the transform parameters and
//! (when present) the linear head. White-box mode uses exact gradients
//! through the frozen model; black-box mode estimates the transform gradient
//! from forward evaluations only, while the head (which is ours) still trains
//! analytically.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{argmax, gather_rows, FrozenModel};
use crate::output_map::{argmax_frequency_counts, LabelMapping, LinearHead, OutputMap};
use crate::tensor::{one_hot, Tensor};
use crate::transform::{InputTransform, PlacementLayout, PlacementMode};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::time::Instant;

const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    WhiteBox,
    BlackBox,
}

/// Zeroth-order estimator knobs: probe directions per estimate and the
/// smoothing radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoConfig {
    pub q: usize,
    pub mu: f64,
}

impl Default for ZoConfig {
    fn default() -> Self {
        ZoConfig { q: 20, mu: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Cross-entropy on scores renormalized to a distribution (label mapping)
    /// or on the softmax of the head output (linear head).
    CrossEntropy,
    /// Squared distance to the one-hot target on the raw scores.
    Mse,
}

/// Placement layout selection plus the overlay flag (mask all ones, so the
/// perturbation also rides on the data dimensions).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSpec {
    pub mode: PlacementMode,
    #[serde(default)]
    pub overlay: bool,
}

impl Default for LayoutSpec {
    fn default() -> Self {
        LayoutSpec { mode: PlacementMode::Center, overlay: false }
    }
}

/// Which output map to build before training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMapSpec {
    RandomMapping { labels_per_target: usize },
    GreedyMapping { labels_per_target: usize },
    ExplicitMapping { blocks: Vec<Vec<usize>> },
    LinearHead { on_logits: bool },
}

impl Default for OutputMapSpec {
    fn default() -> Self {
        OutputMapSpec::GreedyMapping { labels_per_target: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReprogramConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Learning rate for the transform variables `W`.
    pub lr_w: f64,
    /// Learning rate for the linear head, when one is used.
    pub lr_head: f64,
    pub momentum: f64,
    pub seed: u64,
    pub mode: TrainMode,
    pub zo: ZoConfig,
    pub loss: LossKind,
    pub layout: LayoutSpec,
    pub output_map: OutputMapSpec,
}

impl Default for ReprogramConfig {
    fn default() -> Self {
        ReprogramConfig {
            epochs: 100,
            batch_size: 32,
            lr_w: 0.05,
            lr_head: 0.01,
            momentum: 0.9,
            seed: 0,
            mode: TrainMode::WhiteBox,
            zo: ZoConfig::default(),
            loss: LossKind::CrossEntropy,
            layout: LayoutSpec::default(),
            output_map: OutputMapSpec::default(),
        }
    }
}

impl ReprogramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.zo.q < 1 {
            return Err(Error::InvalidConfig("zo.q must be >= 1".into()));
        }
        if !(self.zo.mu > 0.0) {
            return Err(Error::InvalidConfig("zo.mu must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        if self.lr_w < 0.0 || self.lr_head < 0.0 {
            return Err(Error::InvalidConfig("learning rates must be >= 0".into()));
        }
        match &self.output_map {
            OutputMapSpec::RandomMapping { labels_per_target }
            | OutputMapSpec::GreedyMapping { labels_per_target } => {
                if *labels_per_target == 0 {
                    return Err(Error::InvalidConfig("labels_per_target must be >= 1".into()));
                }
            }
            OutputMapSpec::LinearHead { on_logits } => {
                if *on_logits && self.mode == TrainMode::BlackBox {
                    return Err(Error::InvalidConfig(
                        "a head on logits is not available in black_box mode; the API exposes probabilities only"
                            .into(),
                    ));
                }
            }
            OutputMapSpec::ExplicitMapping { .. } => {}
        }
        Ok(())
    }
}

/// One row per epoch; this is what the trace file records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Cumulative per-sample forward queries (zero in white-box mode).
    pub queries: u64,
}

/// Training history plus oracle accounting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
    /// Wall-clock per epoch; reported but excluded from the reproducible
    /// trace records.
    pub wall_ms: Vec<u64>,
    /// Batch-level forward evaluations made by training steps (black-box:
    /// exactly `(q + 1) * steps` while the transform has trainable dims).
    pub train_oracle_calls: u64,
    /// Batch-level forward evaluations spent building the label mapping.
    pub setup_oracle_calls: u64,
    /// Batch-level forward evaluations spent on per-epoch test evaluation.
    pub eval_oracle_calls: u64,
}

impl TrainTrace {
    pub fn initial_loss(&self) -> Option<f64> {
        self.records.first().map(|r| r.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

// ---------------------------------------------------------------------------
// Task losses
// ---------------------------------------------------------------------------

/// Mean cross-entropy of target scores against integer labels. Rows are
/// renormalized to a distribution first (they must have strictly positive
/// sum), and the probability inside the log is clamped at 1e-12.
pub fn task_loss(pred: &Tensor, labels: &[usize]) -> Result<f64> {
    Ok(ce_loss_grad(pred, labels)?.0)
}

fn ce_loss_grad(pred: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    check_pred_labels(pred, labels)?;
    let n = pred.rows();
    let inv = 1.0 / n as f64;
    let mut grad = Tensor::zeros(vec![n, pred.cols()]);
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = pred.row(r);
        let sum: f64 = row.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::Data(format!(
                "prediction row {r} is not normalizable (sum {sum})"
            )));
        }
        let p = row[label] / sum;
        if p > LOG_CLAMP {
            total -= p.ln();
            let g = grad.row_mut(r);
            for (t, gt) in g.iter_mut().enumerate() {
                // d/dpred_t of -log(pred_y / sum) = 1/sum - [t == y]/pred_y
                *gt = inv * (1.0 / sum - if t == label { 1.0 / row[label] } else { 0.0 });
            }
        } else {
            // Clamp active: the loss is flat here, so the subgradient is zero.
            total -= LOG_CLAMP.ln();
        }
    }
    Ok((total * inv, grad))
}

/// Mean squared distance between score rows and their one-hot targets.
pub fn mse_loss(pred: &Tensor, labels: &[usize]) -> Result<f64> {
    Ok(mse_loss_grad(pred, labels)?.0)
}

fn mse_loss_grad(pred: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    check_pred_labels(pred, labels)?;
    let onehot = one_hot(labels, pred.cols())?;
    let n = pred.rows();
    let inv = 1.0 / n as f64;
    let mut grad = Tensor::zeros(vec![n, pred.cols()]);
    let mut total = 0.0;
    for ((g, p), y) in grad.data_mut().iter_mut().zip(pred.data()).zip(onehot.data()) {
        let diff = p - y;
        total += diff * diff;
        *g = 2.0 * diff * inv;
    }
    Ok((total * inv, grad))
}

fn check_pred_labels(pred: &Tensor, labels: &[usize]) -> Result<()> {
    if pred.rows() != labels.len() {
        return Err(Error::shape("task_loss", pred.rows(), labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= pred.cols()) {
        return Err(Error::Data(format!(
            "label {bad} out of range for {} classes",
            pred.cols()
        )));
    }
    Ok(())
}

fn softmax_rows(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
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
    out
}

/// Loss and upstream gradient on the raw target scores, honoring the loss
/// kind and whether the scores came from a label mapping (probabilities) or a
/// linear head (arbitrary reals, cross-entropy goes through a softmax).
fn score_loss_grad(
    scores: &Tensor,
    labels: &[usize],
    loss: LossKind,
    head: bool,
) -> Result<(f64, Tensor)> {
    match (loss, head) {
        (LossKind::CrossEntropy, false) => ce_loss_grad(scores, labels),
        (LossKind::CrossEntropy, true) => {
            let probs = softmax_rows(scores);
            let value = task_loss(&probs, labels)?;
            let onehot = one_hot(labels, scores.cols())?;
            let inv = 1.0 / scores.rows() as f64;
            let mut grad = Tensor::zeros(vec![scores.rows(), scores.cols()]);
            for ((g, p), y) in grad.data_mut().iter_mut().zip(probs.data()).zip(onehot.data()) {
                *g = (p - y) * inv;
            }
            Ok((value, grad))
        }
        (LossKind::Mse, _) => mse_loss_grad(scores, labels),
    }
}

fn score_loss_value(scores: &Tensor, labels: &[usize], loss: LossKind, head: bool) -> Result<f64> {
    match (loss, head) {
        (LossKind::CrossEntropy, false) => task_loss(scores, labels),
        (LossKind::CrossEntropy, true) => task_loss(&softmax_rows(scores), labels),
        (LossKind::Mse, _) => mse_loss(scores, labels),
    }
}

// ---------------------------------------------------------------------------
// Forward oracle
// ---------------------------------------------------------------------------

/// Anything that answers forward queries with class probabilities. The
/// counters make query accounting auditable.
pub trait ProbOracle {
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn probs(&mut self, batch: &Tensor) -> Result<Tensor>;
    /// Cumulative per-sample rows served.
    fn queries(&self) -> u64;
    /// Cumulative batch-level calls.
    fn calls(&self) -> u64;
}

/// In-process oracle over a local frozen model; used when black-box mode is
/// exercised without an external endpoint.
pub struct ModelOracle<'a> {
    model: &'a FrozenModel,
    queries: u64,
    calls: u64,
}

impl<'a> ModelOracle<'a> {
    pub fn new(model: &'a FrozenModel) -> Self {
        ModelOracle { model, queries: 0, calls: 0 }
    }
}

impl ProbOracle for ModelOracle<'_> {
    fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    fn probs(&mut self, batch: &Tensor) -> Result<Tensor> {
        self.calls += 1;
        self.queries += batch.rows() as u64;
        self.model.forward(batch)
    }

    fn queries(&self) -> u64 {
        self.queries
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}

// ---------------------------------------------------------------------------
// Zeroth-order gradient estimation
// ---------------------------------------------------------------------------

fn sphere_direction(dim: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Forward-difference sphere-sampled gradient estimate:
///
/// `g = dim/(q * mu) * sum_i (f(p + mu u_i) - f(p)) u_i`
///
/// with the `u_i` uniform on the unit sphere. Makes exactly `q + 1` calls to
/// the loss oracle.
pub fn zeroth_order_gradient(
    loss_fn: &mut dyn FnMut(&[f64]) -> Result<f64>,
    p: &[f64],
    q: usize,
    mu: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let base = loss_fn(p)?;
    if !base.is_finite() {
        return Err(Error::NonFinite(format!("loss oracle returned {base} at base point")));
    }
    zeroth_order_gradient_with_base(loss_fn, p, base, q, mu, seed)
}

/// Same estimator with the base loss already in hand; makes exactly `q` calls.
pub(crate) fn zeroth_order_gradient_with_base(
    loss_fn: &mut dyn FnMut(&[f64]) -> Result<f64>,
    p: &[f64],
    base: f64,
    q: usize,
    mu: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if q < 1 {
        return Err(Error::InvalidConfig("zeroth-order q must be >= 1".into()));
    }
    if !(mu > 0.0) {
        return Err(Error::InvalidConfig("zeroth-order mu must be > 0".into()));
    }
    let dim = p.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut grad = vec![0.0; dim];
    let mut probe = vec![0.0; dim];
    for _ in 0..q {
        let u = sphere_direction(dim, &mut rng);
        for ((pr, pi), ui) in probe.iter_mut().zip(p).zip(&u) {
            *pr = pi + mu * ui;
        }
        let val = loss_fn(&probe)?;
        if !val.is_finite() {
            return Err(Error::NonFinite(format!("loss oracle returned {val} at probe point")));
        }
        let coeff = val - base;
        for (g, ui) in grad.iter_mut().zip(&u) {
            *g += coeff * ui;
        }
    }
    let scale = dim as f64 / (q as f64 * mu);
    for g in grad.iter_mut() {
        *g *= scale;
    }
    Ok(grad)
}

// ---------------------------------------------------------------------------
// Composite forward and backward
// ---------------------------------------------------------------------------

/// Target-side scores for a batch: aggregated probabilities for a label
/// mapping, raw affine outputs for a linear head.
pub fn composite_scores(
    model: &FrozenModel,
    transform: &InputTransform,
    map: &OutputMap,
    samples: &Tensor,
) -> Result<Tensor> {
    let transformed = transform.apply(samples)?;
    match map {
        OutputMap::Mapping(m) => m.aggregate(&model.forward(&transformed)?),
        OutputMap::Head(h) => {
            let src = if h.on_logits {
                model.logits(&transformed)?
            } else {
                model.forward(&transformed)?
            };
            h.forward(&src)
        }
    }
}

/// Composite task loss as a plain scalar function of the current parameters.
pub fn composite_loss(
    model: &FrozenModel,
    transform: &InputTransform,
    map: &OutputMap,
    loss: LossKind,
    samples: &Tensor,
    labels: &[usize],
) -> Result<f64> {
    let scores = composite_scores(model, transform, map, samples)?;
    score_loss_value(&scores, labels, loss, matches!(map, OutputMap::Head(_)))
}

/// Exact end-to-end gradient of the composite loss.
pub struct CompositeGrad {
    pub loss: f64,
    /// Target scores of the batch (for accuracy bookkeeping).
    pub scores: Tensor,
    /// Gradient with respect to the full-length transform variables `W`.
    pub grad_w: Vec<f64>,
    /// Weight and bias gradients of the linear head, when one is in use.
    pub grad_head: Option<(Vec<f64>, Vec<f64>)>,
    /// Gradient of the loss with respect to the transformed input.
    pub grad_input: Tensor,
}

/// Chain rule through output map, frozen model, and input transform:
/// loss -> scores -> source output -> transformed input -> `W` (and head).
pub fn composite_grad(
    model: &FrozenModel,
    transform: &InputTransform,
    map: &OutputMap,
    loss: LossKind,
    samples: &Tensor,
    labels: &[usize],
) -> Result<CompositeGrad> {
    let transformed = transform.apply(samples)?;
    match map {
        OutputMap::Mapping(mapping) => {
            let probs = model.forward(&transformed)?;
            let scores = mapping.aggregate(&probs)?;
            let (value, dscores) = score_loss_grad(&scores, labels, loss, false)?;
            // Spread each target-score gradient back over its block, divided
            // by the block size (the aggregation is a mean).
            let mut dprobs = Tensor::zeros(vec![probs.rows(), probs.cols()]);
            for r in 0..probs.rows() {
                let ds = dscores.row(r);
                let dp = dprobs.row_mut(r);
                for (t, block) in mapping.blocks().iter().enumerate() {
                    let share = ds[t] / block.len() as f64;
                    for &s in block {
                        dp[s] = share;
                    }
                }
            }
            let grad_input = model.backward_to_input(&transformed, &dprobs)?;
            let grad_w = transform.grad_w(&grad_input)?;
            Ok(CompositeGrad { loss: value, scores, grad_w, grad_head: None, grad_input })
        }
        OutputMap::Head(head) => {
            let src = if head.on_logits {
                model.logits(&transformed)?
            } else {
                model.forward(&transformed)?
            };
            let scores = head.forward(&src)?;
            let (value, dscores) = score_loss_grad(&scores, labels, loss, true)?;
            let (gw, gb, dsrc) = head.backward(&src, &dscores)?;
            let grad_input = if head.on_logits {
                model.backward_logits_to_input(&transformed, &dsrc)?
            } else {
                model.backward_to_input(&transformed, &dsrc)?
            };
            let grad_w = transform.grad_w(&grad_input)?;
            Ok(CompositeGrad {
                loss: value,
                scores,
                grad_w,
                grad_head: Some((gw, gb)),
                grad_input,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

pub struct StepStats {
    pub loss: f64,
    pub correct: usize,
}

/// Owns the trainable state (transform variables, optional head, momentum
/// buffers) and performs single optimization steps. The frozen model is only
/// ever borrowed immutably.
pub struct Trainer {
    pub transform: InputTransform,
    pub output_map: OutputMap,
    loss: LossKind,
    lr_w: f64,
    lr_head: f64,
    momentum: f64,
    zo: ZoConfig,
    vel_w: Vec<f64>,
    vel_head: Option<(Vec<f64>, Vec<f64>)>,
}

impl Trainer {
    pub fn new(transform: InputTransform, output_map: OutputMap, cfg: &ReprogramConfig) -> Self {
        let vel_w = vec![0.0; transform.layout.d_source];
        let vel_head = match &output_map {
            OutputMap::Head(h) => Some((vec![0.0; h.weight.len()], vec![0.0; h.bias.len()])),
            OutputMap::Mapping(_) => None,
        };
        Trainer {
            transform,
            output_map,
            loss: cfg.loss,
            lr_w: cfg.lr_w,
            lr_head: cfg.lr_head,
            momentum: cfg.momentum,
            zo: cfg.zo,
            vel_w,
            vel_head,
        }
    }

    /// One SGD-with-momentum step using exact gradients through the frozen
    /// model. The model's parameters are untouched.
    pub fn first_order_step(
        &mut self,
        model: &FrozenModel,
        samples: &Tensor,
        labels: &[usize],
    ) -> Result<StepStats> {
        let g = composite_grad(model, &self.transform, &self.output_map, self.loss, samples, labels)?;
        if !g.loss.is_finite() {
            return Err(Error::NonFinite(format!("batch loss is {}", g.loss)));
        }
        let correct = count_correct(&g.scores, labels);
        self.apply_updates(&g.grad_w, g.grad_head.as_ref());
        Ok(StepStats { loss: g.loss, correct })
    }

    /// One black-box step: a single base forward query yields the loss, the
    /// batch predictions, and the analytic head gradient; `q` additional
    /// probe queries feed the zeroth-order estimate for the transform
    /// variables. Exactly `q + 1` oracle calls when the transform has
    /// trainable dimensions, one otherwise.
    pub fn zeroth_order_step(
        &mut self,
        oracle: &mut dyn ProbOracle,
        samples: &Tensor,
        labels: &[usize],
        seed: u64,
    ) -> Result<StepStats> {
        let is_head = matches!(self.output_map, OutputMap::Head(_));
        let transformed = self.transform.apply(samples)?;
        let src = oracle.probs(&transformed)?;
        let scores = match &self.output_map {
            OutputMap::Mapping(m) => m.aggregate(&src)?,
            OutputMap::Head(h) => h.forward(&src)?,
        };
        let (base_loss, dscores) = score_loss_grad(&scores, labels, self.loss, is_head)?;
        if !base_loss.is_finite() {
            return Err(Error::NonFinite(format!("batch loss is {base_loss}")));
        }
        let correct = count_correct(&scores, labels);

        // Head gradient is analytic; computed now, applied together with W
        // below so the probes see a consistent parameter point.
        let grad_head = match &self.output_map {
            OutputMap::Head(h) => {
                let (gw, gb, _) = h.backward(&src, &dscores)?;
                Some((gw, gb))
            }
            OutputMap::Mapping(_) => None,
        };

        let packed = self.transform.packed_w();
        let mut grad_w_full = vec![0.0; self.transform.layout.d_source];
        if !packed.is_empty() {
            let transform = &self.transform;
            let output_map = &self.output_map;
            let loss_kind = self.loss;
            let mut probe_loss = |w: &[f64]| -> Result<f64> {
                let mut probe_transform = transform.clone();
                probe_transform.set_packed_w(w);
                let probe_src = oracle.probs(&probe_transform.apply(samples)?)?;
                let probe_scores = match output_map {
                    OutputMap::Mapping(m) => m.aggregate(&probe_src)?,
                    OutputMap::Head(h) => h.forward(&probe_src)?,
                };
                score_loss_value(&probe_scores, labels, loss_kind, is_head)
            };
            let packed_grad = zeroth_order_gradient_with_base(
                &mut probe_loss,
                &packed,
                base_loss,
                self.zo.q,
                self.zo.mu,
                seed,
            )?;
            for (&idx, &g) in self.transform.trainable_indices().iter().zip(&packed_grad) {
                grad_w_full[idx] = g;
            }
        }
        self.apply_updates(&grad_w_full, grad_head.as_ref());
        Ok(StepStats { loss: base_loss, correct })
    }

    fn apply_updates(&mut self, grad_w: &[f64], grad_head: Option<&(Vec<f64>, Vec<f64>)>) {
        momentum_update(self.transform.w_mut(), grad_w, &mut self.vel_w, self.lr_w, self.momentum);
        if let (OutputMap::Head(head), Some((gw, gb)), Some((vw, vb))) =
            (&mut self.output_map, grad_head, self.vel_head.as_mut())
        {
            momentum_update(&mut head.weight, gw, vw, self.lr_head, self.momentum);
            momentum_update(&mut head.bias, gb, vb, self.lr_head, self.momentum);
        }
    }
}

fn momentum_update(params: &mut [f64], grad: &[f64], vel: &mut [f64], lr: f64, momentum: f64) {
    for ((p, g), v) in params.iter_mut().zip(grad).zip(vel.iter_mut()) {
        *v = momentum * *v - lr * g;
        *p += *v;
    }
}

fn count_correct(scores: &Tensor, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|(r, &l)| argmax(scores.row(*r)) == l)
        .count()
}

// ---------------------------------------------------------------------------
// The full run
// ---------------------------------------------------------------------------

enum Engine<'a> {
    White(&'a FrozenModel),
    Black(&'a mut dyn ProbOracle),
}

impl Engine<'_> {
    fn input_dim(&self) -> usize {
        match self {
            Engine::White(m) => m.input_dim(),
            Engine::Black(o) => o.input_dim(),
        }
    }

    fn num_classes(&self) -> usize {
        match self {
            Engine::White(m) => m.num_classes(),
            Engine::Black(o) => o.num_classes(),
        }
    }

    fn input_range(&self) -> (f64, f64) {
        match self {
            Engine::White(m) => m.input_range(),
            // Endpoints serve tanh-clipped probes; the standard range applies.
            Engine::Black(_) => (-1.0, 1.0),
        }
    }

    fn probs(&mut self, batch: &Tensor) -> Result<Tensor> {
        match self {
            Engine::White(m) => m.forward(batch),
            Engine::Black(o) => o.probs(batch),
        }
    }

    fn calls(&self) -> u64 {
        match self {
            Engine::White(_) => 0,
            Engine::Black(o) => o.calls(),
        }
    }

    fn queries(&self) -> u64 {
        match self {
            Engine::White(_) => 0,
            Engine::Black(o) => o.queries(),
        }
    }
}

/// Run the reprogramming procedure: build the transform and output map,
/// train them against the frozen model, and return them with the trace.
///
/// The source model's parameter digest is checked before and after; any
/// change aborts with an error.
pub fn reprogram(
    model: &FrozenModel,
    train: &Dataset,
    test: &Dataset,
    cfg: &ReprogramConfig,
) -> Result<(InputTransform, OutputMap, TrainTrace)> {
    reprogram_observed(model, train, test, cfg, &mut |_, _, _| {})
}

/// As [`reprogram`], invoking `observer(epoch, transform, output_map)` with
/// the state before training (epoch 0) and after each completed epoch
/// (1-based).
pub fn reprogram_observed(
    model: &FrozenModel,
    train: &Dataset,
    test: &Dataset,
    cfg: &ReprogramConfig,
    observer: &mut dyn FnMut(usize, &InputTransform, &OutputMap),
) -> Result<(InputTransform, OutputMap, TrainTrace)> {
    let digest_before = model.param_digest();
    let result = match cfg.mode {
        TrainMode::WhiteBox => run(Engine::White(model), train, test, cfg, observer),
        TrainMode::BlackBox => {
            let mut oracle = ModelOracle::new(model);
            run(Engine::Black(&mut oracle), train, test, cfg, observer)
        }
    };
    let digest_after = model.param_digest();
    if digest_before != digest_after {
        return Err(Error::Frozen(format!(
            "parameter digest changed during reprogramming: {digest_before} -> {digest_after}"
        )));
    }
    result
}

/// Train against an external forward oracle (a black-box endpoint). Only
/// black-box mode is possible: there is no model to differentiate through.
pub fn reprogram_via_oracle(
    oracle: &mut dyn ProbOracle,
    train: &Dataset,
    test: &Dataset,
    cfg: &ReprogramConfig,
) -> Result<(InputTransform, OutputMap, TrainTrace)> {
    if cfg.mode != TrainMode::BlackBox {
        return Err(Error::InvalidConfig(
            "training against an external endpoint requires black_box mode".into(),
        ));
    }
    run(Engine::Black(oracle), train, test, cfg, &mut |_, _, _| {})
}

fn run(
    mut engine: Engine<'_>,
    train: &Dataset,
    test: &Dataset,
    cfg: &ReprogramConfig,
    observer: &mut dyn FnMut(usize, &InputTransform, &OutputMap),
) -> Result<(InputTransform, OutputMap, TrainTrace)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("empty target training set".into()));
    }
    if test.is_empty() {
        return Err(Error::Data("empty target test set".into()));
    }
    let d_target = train.dim();
    let d_source = engine.input_dim();
    if d_target > d_source {
        return Err(Error::Assumption(format!(
            "(i) target dimension {d_target} exceeds source dimension {d_source}; reprogramming requires d_target <= d_source"
        )));
    }
    let k_target = train.num_classes;
    let k_source = engine.num_classes();
    if k_target > k_source {
        return Err(Error::Assumption(format!(
            "(ii) target class count {k_target} exceeds source class count {k_source}; reprogramming requires k_target <= k_source"
        )));
    }
    if test.dim() != d_target {
        return Err(Error::shape("reprogram test set", d_target, test.dim()));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let layout = PlacementLayout::new(d_target, d_source, cfg.layout.mode)?;
    let transform = if cfg.layout.overlay {
        InputTransform::new_overlay(layout, Some(engine.input_range()))
    } else {
        InputTransform::new(layout, Some(engine.input_range()))
    };

    let output_map = match &cfg.output_map {
        OutputMapSpec::RandomMapping { labels_per_target } => OutputMap::Mapping(
            LabelMapping::random(k_source, k_target, *labels_per_target, rng.gen())?,
        ),
        OutputMapSpec::GreedyMapping { labels_per_target } => {
            // Frequencies are taken at W = 0: the model's original responses
            // to plain zero-padded target data.
            let probs = engine.probs(&transform.apply(&train.samples)?)?;
            let counts = argmax_frequency_counts(&probs, &train.labels, k_target)?;
            OutputMap::Mapping(LabelMapping::greedy_from_counts(
                &counts,
                k_source,
                *labels_per_target,
            )?)
        }
        OutputMapSpec::ExplicitMapping { blocks } => {
            OutputMap::Mapping(LabelMapping::new(blocks.clone(), k_source)?)
        }
        OutputMapSpec::LinearHead { on_logits } => {
            OutputMap::Head(LinearHead::random_init(k_source, k_target, *on_logits, rng.gen()))
        }
    };
    let setup_calls = engine.calls();

    let mut trainer = Trainer::new(transform, output_map, cfg);
    observer(0, &trainer.transform, &trainer.output_map);

    let mut trace = TrainTrace { setup_oracle_calls: setup_calls, ..TrainTrace::default() };
    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut eval_calls = 0u64;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = gather_rows(&train.samples, chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let stats = match &mut engine {
                Engine::White(model) => trainer.first_order_step(model, &batch, &batch_labels),
                Engine::Black(oracle) => {
                    let step_seed = rng.gen();
                    trainer.zeroth_order_step(&mut **oracle, &batch, &batch_labels, step_seed)
                }
            };
            let stats = match stats {
                Ok(s) => s,
                Err(Error::NonFinite(message)) => {
                    return Err(Error::Diverged { epoch, message, trace: Box::new(trace) })
                }
                Err(e) => return Err(e),
            };
            loss_sum += stats.loss * chunk.len() as f64;
            correct += stats.correct;
        }
        let epoch_loss = loss_sum / n as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                message: format!("epoch loss is {epoch_loss}"),
                trace: Box::new(trace),
            });
        }

        let before_eval = engine.calls();
        let test_scores =
            eval_scores(&mut engine, &trainer.transform, &trainer.output_map, &test.samples)?;
        eval_calls += engine.calls() - before_eval;
        let test_acc = count_correct(&test_scores, &test.labels) as f64 / test.len() as f64;

        trace.records.push(EpochRecord {
            epoch,
            loss: epoch_loss,
            train_acc: correct as f64 / n as f64,
            test_acc,
            queries: engine.queries(),
        });
        trace.wall_ms.push(started.elapsed().as_millis() as u64);
        observer(epoch + 1, &trainer.transform, &trainer.output_map);
    }

    trace.eval_oracle_calls = eval_calls;
    trace.train_oracle_calls = engine.calls() - setup_calls - eval_calls;
    Ok((trainer.transform, trainer.output_map, trace))
}

fn eval_scores(
    engine: &mut Engine<'_>,
    transform: &InputTransform,
    map: &OutputMap,
    samples: &Tensor,
) -> Result<Tensor> {
    match engine {
        Engine::White(model) => composite_scores(model, transform, map, samples),
        Engine::Black(oracle) => {
            let src = oracle.probs(&transform.apply(samples)?)?;
            match map {
                OutputMap::Mapping(m) => m.aggregate(&src),
                OutputMap::Head(h) => h.forward(&src),
            }
        }
    }
}

/// Accuracy of a trained (transform, output map) pair on a dataset,
/// evaluated in-process against the frozen model.
pub fn evaluate_accuracy(
    model: &FrozenModel,
    transform: &InputTransform,
    map: &OutputMap,
    dataset: &Dataset,
) -> Result<f64> {
    let scores = composite_scores(model, transform, map, &dataset.samples)?;
    Ok(count_correct(&scores, &dataset.labels) as f64 / dataset.len() as f64)
}
