//! Risk and representation-alignment diagnostics.
//!
//! Computes the root-squared-error risk of a classifier, the exact empirical
//! Wasserstein-1 distance between equal-size representation samples (as a
//! minimum-cost perfect matching), the risk-bound report combining the two,
//! and the L1 norm of the average input gradient.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::FrozenModel;
use crate::output_map::{LabelMapping, OutputMap};
use crate::tensor::{one_hot, Tensor};
use crate::train::{composite_grad, composite_scores, LossKind, TrainMode};
use crate::transform::InputTransform;
use serde::{Deserialize, Serialize};

/// Exact assignment above this size is cubic-time and unreasonable; callers
/// must subsample instead.
pub const MAX_W1_SAMPLES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleOrigin {
    Source,
    ReprogrammedTarget,
}

/// A batch of logit vectors standing in for one side of the representation
/// distributions being compared.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSample {
    values: Tensor,
    origin: SampleOrigin,
}

impl RepresentationSample {
    pub fn new(values: Tensor, origin: SampleOrigin) -> Result<Self> {
        if values.rows() < 2 {
            return Err(Error::Data(format!(
                "representation sample needs at least 2 rows, got {}",
                values.rows()
            )));
        }
        values.check_finite("RepresentationSample")?;
        Ok(RepresentationSample { values, origin })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn origin(&self) -> SampleOrigin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }
}

/// Mean Euclidean distance between predictions and one-hot labels:
/// the empirical form of `E ||f(x) - y||_2`.
pub fn rms_risk(predictions: &Tensor, onehot_labels: &Tensor) -> Result<f64> {
    if predictions.rows() != onehot_labels.rows() || predictions.cols() != onehot_labels.cols() {
        return Err(Error::shape(
            "rms_risk",
            format!("({}, {})", predictions.rows(), predictions.cols()),
            format!("({}, {})", onehot_labels.rows(), onehot_labels.cols()),
        ));
    }
    let n = predictions.rows();
    let mut total = 0.0;
    for r in 0..n {
        let d2: f64 = predictions
            .row(r)
            .iter()
            .zip(onehot_labels.row(r))
            .map(|(p, y)| (p - y) * (p - y))
            .sum();
        total += d2.sqrt();
    }
    Ok(total / n as f64)
}

/// Risk of a bare model on a labeled dataset.
pub fn model_risk(model: &FrozenModel, dataset: &Dataset) -> Result<f64> {
    let probs = model.forward(&dataset.samples)?;
    let onehot = one_hot(&dataset.labels, model.num_classes())?;
    rms_risk(&probs, &onehot)
}

/// Risk of the reprogrammed stack (transform, frozen model, output map) on a
/// labeled target dataset.
pub fn reprogrammed_risk(
    model: &FrozenModel,
    transform: &InputTransform,
    map: &OutputMap,
    dataset: &Dataset,
) -> Result<f64> {
    let scores = composite_scores(model, transform, map, &dataset.samples)?;
    let onehot = one_hot(&dataset.labels, map.num_target())?;
    rms_risk(&scores, &onehot)
}

/// Exact empirical Wasserstein-1 distance between two equal-size samples:
/// the minimum over bijections of the mean pairwise Euclidean distance,
/// solved as a linear assignment problem.
pub fn empirical_w1(a: &RepresentationSample, b: &RepresentationSample) -> Result<f64> {
    empirical_w1_tensors(a.values(), b.values())
}

pub fn empirical_w1_tensors(a: &Tensor, b: &Tensor) -> Result<f64> {
    let n = a.rows();
    if b.rows() != n {
        return Err(Error::shape("empirical_w1 sample counts", n, b.rows()));
    }
    if a.cols() != b.cols() {
        return Err(Error::shape("empirical_w1 dimensions", a.cols(), b.cols()));
    }
    if n == 0 {
        return Err(Error::Data("empirical_w1 needs non-empty samples".into()));
    }
    if n > MAX_W1_SAMPLES {
        return Err(Error::Capacity(format!(
            "exact assignment is capped at {MAX_W1_SAMPLES} samples, got {n}; subsample first"
        )));
    }
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        let ra = a.row(i);
        for j in 0..n {
            let d2: f64 = ra
                .iter()
                .zip(b.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            cost[i * n + j] = d2.sqrt();
        }
    }
    Ok(assignment_min_cost(&cost, n) / n as f64)
}

/// Minimum total cost of a perfect matching in a square cost matrix,
/// by the shortest-augmenting-path method with dual potentials (O(n^3)).
/// Exact for arbitrary finite costs.
fn assignment_min_cost(cost: &[f64], n: usize) -> f64 {
    // 1-indexed arrays with a virtual row/column 0.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // row matched to each column
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut total = 0.0;
    for j in 1..=n {
        total += cost[(matched_row[j] - 1) * n + (j - 1)];
    }
    total
}

/// The empirical risk-bound check for a one-to-one mapping: target risk
/// against `source_risk + 2 sqrt(K) * w1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskBoundReport {
    /// Empirical target risk of the reprogrammed stack.
    pub target_risk: f64,
    /// Empirical source risk on held-out source data; absent when no labeled
    /// source data was provided.
    pub source_risk: Option<f64>,
    /// Empirical Wasserstein-1 distance between source and reprogrammed
    /// target logit samples.
    pub w1: f64,
    /// Number of representation samples per side that entered `w1`.
    pub n_rep: usize,
    /// Class count of the one-to-one mapping.
    pub k: usize,
    /// `source_risk + 2 sqrt(k) * w1`; absent when source risk is.
    pub bound: Option<f64>,
    /// Whether `target_risk <= bound` held empirically. This is a
    /// finite-sample check, not a proof.
    pub holds: Option<bool>,
}

impl RiskBoundReport {
    pub fn alignment_term(&self) -> f64 {
        2.0 * (self.k as f64).sqrt() * self.w1
    }
}

/// Build the risk-bound report for a trained transform under a strictly
/// one-to-one label mapping.
///
/// Representation samples are the logits of the frozen model on (a) the
/// transformed target test data and (b) raw source samples; the first
/// `n_rep` rows of each side are used (capped by the smaller side and by
/// [`MAX_W1_SAMPLES`]). Labeled source data enables the source-risk term;
/// pass samples without labels to degrade gracefully.
pub fn risk_bound_report(
    model: &FrozenModel,
    transform: &InputTransform,
    mapping: &LabelMapping,
    source_samples: &Tensor,
    source_labels: Option<&[usize]>,
    target_test: &Dataset,
    n_rep: usize,
) -> Result<RiskBoundReport> {
    if !mapping.is_one_to_one() {
        return Err(Error::Assumption(
            "risk-bound diagnostics require a one-to-one label mapping (one source label per target class)"
                .into(),
        ));
    }
    let k = mapping.num_target();
    let map = OutputMap::Mapping(mapping.clone());

    let target_risk = reprogrammed_risk(model, transform, &map, target_test)?;

    let source_risk = match source_labels {
        Some(labels) => {
            let probs = model.forward(source_samples)?;
            let onehot = one_hot(labels, model.num_classes())?;
            Some(rms_risk(&probs, &onehot)?)
        }
        None => None,
    };

    let n = n_rep
        .min(source_samples.rows())
        .min(target_test.len())
        .min(MAX_W1_SAMPLES);
    if n < 2 {
        return Err(Error::Data(format!(
            "need at least 2 representation samples per side, got {n}"
        )));
    }
    let target_logits = model.logits(&transform.apply(&head_rows(&target_test.samples, n))?)?;
    let source_logits = model.logits(&head_rows(source_samples, n))?;
    let w1 = empirical_w1(
        &RepresentationSample::new(target_logits, SampleOrigin::ReprogrammedTarget)?,
        &RepresentationSample::new(source_logits, SampleOrigin::Source)?,
    )?;

    let bound = source_risk.map(|eps| eps + 2.0 * (k as f64).sqrt() * w1);
    let holds = bound.map(|b| target_risk <= b);
    Ok(RiskBoundReport { target_risk, source_risk, w1, n_rep: n, k, bound, holds })
}

fn head_rows(t: &Tensor, n: usize) -> Tensor {
    let w = t.cols();
    Tensor::matrix(n, w, t.data()[..n * w].to_vec()).expect("head rows are finite")
}

/// L1 norm of the average input gradient of the task loss at the transformed
/// inputs. Requires white-box gradients.
pub fn input_gradient_l1(
    mode: TrainMode,
    model: &FrozenModel,
    transform: &InputTransform,
    map: &OutputMap,
    samples: &Tensor,
    labels: &[usize],
    loss: LossKind,
) -> Result<f64> {
    if mode == TrainMode::BlackBox {
        return Err(Error::Unsupported(
            "input-gradient diagnostics need white-box access to the model".into(),
        ));
    }
    let g = composite_grad(model, transform, map, loss, samples, labels)?;
    // grad_input rows are per-sample gradients of the mean loss, so their
    // column sums are exactly the average per-sample input gradient.
    let n = g.grad_input.rows();
    let d = g.grad_input.cols();
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(g.grad_input.row(r)) {
            *m += v;
        }
    }
    Ok(mean.iter().map(|v| v.abs()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{random_model, rel_err};
    use crate::model::LayerSpec;
    use crate::train::composite_loss;
    use crate::transform::{PlacementLayout, PlacementMode};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn sample(values: Tensor) -> RepresentationSample {
        RepresentationSample::new(values, SampleOrigin::Source).unwrap()
    }

    #[test]
    fn rms_risk_hand_values() {
        let onehot = Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap();
        let exact = Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap();
        assert_eq!(rms_risk(&exact, &onehot).unwrap(), 0.0);

        let opposite = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        assert!((rms_risk(&opposite, &onehot).unwrap() - 2f64.sqrt()).abs() < 1e-15);

        let uniform = Tensor::matrix(1, 2, vec![0.5, 0.5]).unwrap();
        assert!((rms_risk(&uniform, &onehot).unwrap() - 2f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rms_risk_bounded_for_probability_rows() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..50 {
            let k = rng.gen_range(2..6);
            let mut row: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            let label = rng.gen_range(0..k);
            let pred = Tensor::matrix(1, k, row).unwrap();
            let onehot = one_hot(&[label], k).unwrap();
            let risk = rms_risk(&pred, &onehot).unwrap();
            assert!((0.0..=2f64.sqrt() + 1e-12).contains(&risk));
        }
    }

    #[test]
    fn w1_identity_and_translation() {
        let a = sample(Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap());
        assert_eq!(empirical_w1(&a, &a).unwrap(), 0.0);

        // Point masses at 0 and 3 (duplicated to satisfy the n >= 2 rule).
        let zeros = sample(Tensor::matrix(2, 1, vec![0.0, 0.0]).unwrap());
        let threes = sample(Tensor::matrix(2, 1, vec![3.0, 3.0]).unwrap());
        assert!((empirical_w1(&zeros, &threes).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn w1_two_point_example() {
        // {0, 1} vs {1, 2}: both assignments cost 1 on average.
        let a = sample(Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap());
        let b = sample(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap());
        assert!((empirical_w1(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    pub(crate) fn brute_force_w1(a: &Tensor, b: &Tensor) -> f64 {
        fn visit(free: &mut Vec<usize>, chosen: &mut Vec<usize>, all: &mut Vec<Vec<usize>>) {
            if free.is_empty() {
                all.push(chosen.clone());
                return;
            }
            for i in 0..free.len() {
                let v = free.remove(i);
                chosen.push(v);
                visit(free, chosen, all);
                chosen.pop();
                free.insert(i, v);
            }
        }
        let n = a.rows();
        let mut perms = Vec::new();
        visit(&mut (0..n).collect(), &mut Vec::new(), &mut perms);
        let mut best = f64::INFINITY;
        for perm in perms {
            let mut total = 0.0;
            for (i, &j) in perm.iter().enumerate() {
                let d2: f64 = a
                    .row(i)
                    .iter()
                    .zip(b.row(j))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                total += d2.sqrt();
            }
            best = best.min(total / n as f64);
        }
        best
    }

    #[test]
    fn w1_matches_brute_force_on_small_samples() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for _ in 0..200 {
            let n = rng.gen_range(1..=6);
            let d = rng.gen_range(1..=3);
            let a = Tensor::matrix(n, d, (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .unwrap();
            let b = Tensor::matrix(n, d, (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .unwrap();
            let exact = empirical_w1_tensors(&a, &b).unwrap();
            let brute = brute_force_w1(&a, &b);
            assert!((exact - brute).abs() < 1e-9, "exact {exact} vs brute {brute}");
        }
    }

    #[test]
    fn w1_metric_axioms_on_random_triples() {
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        for _ in 0..50 {
            let n = rng.gen_range(2..8);
            let d = 2;
            let mk = |rng: &mut ChaCha20Rng| {
                Tensor::matrix(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .unwrap()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let c = mk(&mut rng);
            let dab = empirical_w1_tensors(&a, &b).unwrap();
            let dba = empirical_w1_tensors(&b, &a).unwrap();
            let dac = empirical_w1_tensors(&a, &c).unwrap();
            let dcb = empirical_w1_tensors(&c, &b).unwrap();
            assert!((dab - dba).abs() < 1e-9, "symmetry");
            assert!(dab <= dac + dcb + 1e-9, "triangle");
            assert!(empirical_w1_tensors(&a, &a).unwrap() < 1e-12, "identity");
        }
    }

    #[test]
    fn w1_size_cap_and_mismatch() {
        let a = Tensor::zeros(vec![513, 1]);
        let b = Tensor::zeros(vec![513, 1]);
        let err = empirical_w1_tensors(&a, &b).unwrap_err();
        assert!(err.to_string().contains("subsample"), "{err}");

        let a = Tensor::zeros(vec![3, 1]);
        let b = Tensor::zeros(vec![4, 1]);
        assert!(empirical_w1_tensors(&a, &b).is_err());
    }

    #[test]
    fn report_requires_one_to_one() {
        let mut rng = ChaCha20Rng::seed_from_u64(30);
        let model = random_model(4, 5, 4, &mut rng);
        let layout = PlacementLayout::new(2, 4, PlacementMode::Center).unwrap();
        let transform = InputTransform::new(layout, None);
        let mapping = LabelMapping::new(vec![vec![0, 1], vec![2]], 4).unwrap();
        let ds = Dataset::new(Tensor::zeros(vec![4, 2]), vec![0, 1, 0, 1], 2).unwrap();
        let err = risk_bound_report(
            &model,
            &transform,
            &mapping,
            &Tensor::zeros(vec![4, 4]),
            None,
            &ds,
            4,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Assumption(_)), "{err}");
    }

    #[test]
    fn degenerate_equal_data_gives_zero_w1() {
        // d_target == d_source: zero-padding is the identity and no dims are
        // trainable, so identical source and target data yield identical
        // logits and the bound collapses to the source risk.
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let model = random_model(3, 6, 3, &mut rng);
        let layout = PlacementLayout::new(3, 3, PlacementMode::Center).unwrap();
        let transform = InputTransform::new(layout, None);
        let mapping = LabelMapping::new(vec![vec![0], vec![1], vec![2]], 3).unwrap();
        let data =
            Tensor::matrix(6, 3, (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let labels = vec![0, 1, 2, 0, 1, 2];
        let ds = Dataset::new(data.clone(), labels.clone(), 3).unwrap();
        let report =
            risk_bound_report(&model, &transform, &mapping, &data, Some(&labels), &ds, 6).unwrap();
        assert!(report.w1 < 1e-12, "w1 {}", report.w1);
        let eps = report.source_risk.unwrap();
        assert!((report.bound.unwrap() - eps).abs() < 1e-12);
        assert_eq!(report.holds, Some(report.target_risk <= eps));
    }

    #[test]
    fn bound_is_at_least_source_risk() {
        let mut rng = ChaCha20Rng::seed_from_u64(32);
        let model = random_model(4, 6, 3, &mut rng);
        let layout = PlacementLayout::new(2, 4, PlacementMode::Center).unwrap();
        let transform = InputTransform::new(layout, None);
        let mapping = LabelMapping::new(vec![vec![2], vec![0]], 3).unwrap();
        let src =
            Tensor::matrix(8, 4, (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let src_labels: Vec<usize> = (0..8).map(|i| i % 3).collect();
        let tgt = Dataset::new(
            Tensor::matrix(8, 2, (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
            (0..8).map(|i| i % 2).collect(),
            2,
        )
        .unwrap();
        let report =
            risk_bound_report(&model, &transform, &mapping, &src, Some(&src_labels), &tgt, 8)
                .unwrap();
        assert!(report.bound.unwrap() >= report.source_risk.unwrap());
        assert!(report.w1 >= 0.0 && report.target_risk >= 0.0);
        assert!((report.alignment_term() - 2.0 * 2f64.sqrt() * report.w1).abs() < 1e-15);
    }

    #[test]
    fn constant_model_has_zero_input_gradient() {
        // All-zero weights: softmax output is uniform whatever the input.
        let model = FrozenModel::new(
            vec![
                LayerSpec::Dense { in_dim: 4, out_dim: 3, weight: vec![0.0; 12], bias: vec![0.0; 3] },
                LayerSpec::Softmax,
            ],
            (-1.0, 1.0),
        )
        .unwrap();
        let layout = PlacementLayout::new(2, 4, PlacementMode::Center).unwrap();
        let transform = InputTransform::new(layout, None);
        let map = OutputMap::Mapping(LabelMapping::new(vec![vec![0], vec![1]], 3).unwrap());
        let samples = Tensor::matrix(3, 2, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]).unwrap();
        let l1 = input_gradient_l1(
            TrainMode::WhiteBox,
            &model,
            &transform,
            &map,
            &samples,
            &[0, 1, 0],
            LossKind::CrossEntropy,
        )
        .unwrap();
        assert!(l1 < 1e-12, "l1 {l1}");
    }

    #[test]
    fn black_box_mode_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(33);
        let model = random_model(4, 4, 3, &mut rng);
        let layout = PlacementLayout::new(2, 4, PlacementMode::Center).unwrap();
        let transform = InputTransform::new(layout, None);
        let map = OutputMap::Mapping(LabelMapping::new(vec![vec![0], vec![1]], 3).unwrap());
        let err = input_gradient_l1(
            TrainMode::BlackBox,
            &model,
            &transform,
            &map,
            &Tensor::zeros(vec![1, 2]),
            &[0],
            LossKind::CrossEntropy,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn input_gradient_l1_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(34);
        let model = random_model(5, 6, 4, &mut rng);
        let layout = PlacementLayout::new(2, 5, PlacementMode::Center).unwrap();
        let mut transform = InputTransform::new(layout, None);
        for v in transform.w_mut().iter_mut() {
            *v = rng.gen_range(-0.4..0.4);
        }
        let map = OutputMap::Mapping(LabelMapping::new(vec![vec![3], vec![1]], 4).unwrap());
        let n = 2;
        let samples =
            Tensor::matrix(n, 2, (0..2 * n).map(|_| rng.gen_range(-0.8..0.8)).collect()).unwrap();
        let labels = vec![0, 1];

        // Single-sample batch equals that sample's own gradient norm.
        let single = Tensor::matrix(1, 2, samples.row(0).to_vec()).unwrap();
        let g = composite_grad(
            &model,
            &transform,
            &map,
            LossKind::CrossEntropy,
            &single,
            &labels[..1],
        )
        .unwrap();
        let direct: f64 = g.grad_input.data().iter().map(|v| v.abs()).sum();
        let l1_single = input_gradient_l1(
            TrainMode::WhiteBox,
            &model,
            &transform,
            &map,
            &single,
            &labels[..1],
            LossKind::CrossEntropy,
        )
        .unwrap();
        assert!((l1_single - direct).abs() < 1e-12);

        // Finite differences of the mean loss with respect to the transformed
        // inputs, using an identity transform so the loss is a function of
        // the transformed batch directly.
        let transformed = transform.apply(&samples).unwrap();
        let id_layout = PlacementLayout::new(5, 5, PlacementMode::Center).unwrap();
        let id = InputTransform::new(id_layout, None);
        let step = 1e-5;
        let mut mean_fd = [0.0; 5];
        for i in 0..transformed.len() {
            let mut plus = transformed.clone();
            plus.data_mut()[i] += step;
            let mut minus = transformed.clone();
            minus.data_mut()[i] -= step;
            let lp =
                composite_loss(&model, &id, &map, LossKind::CrossEntropy, &plus, &labels).unwrap();
            let lm =
                composite_loss(&model, &id, &map, LossKind::CrossEntropy, &minus, &labels).unwrap();
            mean_fd[i % 5] += (lp - lm) / (2.0 * step);
        }
        let fd_l1: f64 = mean_fd.iter().map(|v| v.abs()).sum();
        let l1 = input_gradient_l1(
            TrainMode::WhiteBox,
            &model,
            &transform,
            &map,
            &samples,
            &labels,
            LossKind::CrossEntropy,
        )
        .unwrap();
        assert!(rel_err(&[l1], &[fd_l1]) < 1e-3, "l1 {l1} vs fd {fd_l1}");
    }
}
