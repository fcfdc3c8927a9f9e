//! Cross-module invariants on the bundled task: freezing across every other
//! module's operations, and expected-loss improvement over seeded runs.

use reprogram::diagnostics::{input_gradient_l1, risk_bound_report};
use reprogram::output_map::{LabelMapping, OutputMap};
use reprogram::synthetic;
use reprogram::train::{reprogram, LossKind, OutputMapSpec, ReprogramConfig, TrainMode};
use reprogram::transform::{InputTransform, PlacementLayout, PlacementMode};

#[test]
fn digest_survives_every_module() {
    let task = synthetic::generate(3);
    let model = synthetic::train_bundled_source(&task, 3).unwrap();
    let digest = model.param_digest();

    // transform + forward + logits
    let layout =
        PlacementLayout::new(task.target_train.dim(), model.input_dim(), PlacementMode::Center)
            .unwrap();
    let transform = InputTransform::new(layout, Some(model.input_range()));
    let transformed = transform.apply(&task.target_train.samples).unwrap();
    model.forward(&transformed).unwrap();
    model.logits(&transformed).unwrap();
    assert_eq!(model.param_digest(), digest);

    // output mapping construction and aggregation
    let mapping = LabelMapping::greedy_from_frequencies(
        &model,
        &transform,
        &task.target_train.samples,
        &task.target_train.labels,
        2,
        2,
    )
    .unwrap();
    mapping.aggregate(&model.forward(&transformed).unwrap()).unwrap();
    assert_eq!(model.param_digest(), digest);

    // training, both modes
    for mode in [TrainMode::WhiteBox, TrainMode::BlackBox] {
        let cfg = ReprogramConfig { epochs: 2, mode, ..ReprogramConfig::default() };
        reprogram(&model, &task.target_train, &task.target_test, &cfg).unwrap();
        assert_eq!(model.param_digest(), digest);
    }

    // diagnostics
    let one_to_one = LabelMapping::new(vec![vec![0], vec![1]], model.num_classes()).unwrap();
    risk_bound_report(
        &model,
        &transform,
        &one_to_one,
        &task.source_test.samples,
        Some(&task.source_test.labels),
        &task.target_test,
        50,
    )
    .unwrap();
    input_gradient_l1(
        TrainMode::WhiteBox,
        &model,
        &transform,
        &OutputMap::Mapping(one_to_one),
        &task.target_test.samples,
        &task.target_test.labels,
        LossKind::CrossEntropy,
    )
    .unwrap();

    // checkpoint round trip
    let bytes = reprogram::checkpoint::to_bytes(&model);
    let back = reprogram::checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.param_digest(), digest);
    assert_eq!(model.param_digest(), digest);
}

#[test]
fn zeroth_order_high_budget_alignment() {
    // With many probes and a tiny radius the estimate lines up closely with
    // the true gradient of smooth functions.
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use reprogram::train::zeroth_order_gradient;

    let mut rng = ChaCha20Rng::seed_from_u64(4242);
    let p: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let cases: Vec<(Box<dyn FnMut(&[f64]) -> reprogram::Result<f64>>, Vec<f64>)> = vec![
        (
            Box::new(|x: &[f64]| Ok(x.iter().map(|v| v * v).sum())),
            p.iter().map(|v| 2.0 * v).collect(),
        ),
        (
            Box::new(|x: &[f64]| Ok(x.iter().map(|v| v.sin()).sum())),
            p.iter().map(|v| v.cos()).collect(),
        ),
        (
            Box::new(|x: &[f64]| Ok(x.iter().map(|v| (v * v * v) / 3.0 + v.exp()).sum())),
            p.iter().map(|v| v * v + v.exp()).collect(),
        ),
    ];
    for (mut f, exact) in cases {
        let est = zeroth_order_gradient(&mut *f, &p, 2000, 1e-5, 77).unwrap();
        let dot: f64 = est.iter().zip(&exact).map(|(a, b)| a * b).sum();
        let cos = dot
            / (est.iter().map(|v| v * v).sum::<f64>().sqrt()
                * exact.iter().map(|v| v * v).sum::<f64>().sqrt());
        assert!(cos >= 0.95, "cosine {cos}");
    }
}

#[test]
fn median_final_loss_improves_over_seeds() {
    let task = synthetic::generate(7);
    let model = synthetic::train_bundled_source(&task, 7).unwrap();
    let mut initial = Vec::new();
    let mut fin = Vec::new();
    for seed in 0..10u64 {
        let cfg = ReprogramConfig {
            epochs: 25,
            seed,
            output_map: OutputMapSpec::GreedyMapping { labels_per_target: 1 },
            ..ReprogramConfig::default()
        };
        let (_, _, trace) = reprogram(&model, &task.target_train, &task.target_test, &cfg).unwrap();
        initial.push(trace.initial_loss().unwrap());
        fin.push(trace.final_loss().unwrap());
    }
    initial.sort_by(f64::total_cmp);
    fin.sort_by(f64::total_cmp);
    let med_initial = (initial[4] + initial[5]) / 2.0;
    let med_final = (fin[4] + fin[5]) / 2.0;
    assert!(
        med_final < med_initial,
        "median final loss {med_final} not below median initial {med_initial}"
    );
}
