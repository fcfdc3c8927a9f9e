//! Risk-bound diagnostics on the one-to-one variant of the bundled task:
//! empirical target risk against source risk plus the scaled Wasserstein-1
//! representation-alignment term, measured in the frozen model's logit space.
//! Also shows the alignment distance falling between the start and the end of
//! training, and the L1 norm of the average input gradient.
//!
//! ```bash
//! cargo run --example risk_bound
//! ```

use reprogram::diagnostics::{empirical_w1_tensors, input_gradient_l1, risk_bound_report};
use reprogram::output_map::OutputMap;
use reprogram::report::render_risk_table;
use reprogram::synthetic;
use reprogram::train::{reprogram_observed, LossKind, OutputMapSpec, ReprogramConfig, TrainMode};
use reprogram::Tensor;

fn first_rows(t: &Tensor, n: usize) -> Tensor {
    Tensor::matrix(n, t.cols(), t.data()[..n * t.cols()].to_vec()).unwrap()
}

fn main() -> reprogram::Result<()> {
    let task = synthetic::generate(7);
    let model = synthetic::train_bundled_source(&task, 7)?;
    let n_rep = 200;
    let source_logits = model.logits(&first_rows(&task.source_test.samples, n_rep))?;

    let cfg = ReprogramConfig {
        epochs: 60,
        seed: 0,
        output_map: OutputMapSpec::GreedyMapping { labels_per_target: 1 },
        ..ReprogramConfig::default()
    };
    let mut w1_per_epoch = Vec::new();
    let (transform, output_map, _) = reprogram_observed(
        &model,
        &task.aligned_train,
        &task.aligned_test,
        &cfg,
        &mut |epoch, tr, _| {
            if epoch % 10 == 0 {
                let target_logits = model
                    .logits(&tr.apply(&first_rows(&task.aligned_test.samples, n_rep)).unwrap())
                    .unwrap();
                let w1 = empirical_w1_tensors(&target_logits, &source_logits).unwrap();
                w1_per_epoch.push((epoch, w1));
            }
        },
    )?;

    println!("alignment distance during training (lower = closer to source):");
    for (epoch, w1) in &w1_per_epoch {
        println!("  epoch {epoch:>3}: w1 {w1:.4}");
    }

    let OutputMap::Mapping(mapping) = &output_map else { unreachable!() };
    let report = risk_bound_report(
        &model,
        &transform,
        mapping,
        &task.source_test.samples,
        Some(&task.source_test.labels),
        &task.aligned_test,
        n_rep,
    )?;
    println!();
    print!("{}", render_risk_table(&report));

    let l1 = input_gradient_l1(
        TrainMode::WhiteBox,
        &model,
        &transform,
        &output_map,
        &task.aligned_test.samples,
        &task.aligned_test.labels,
        LossKind::CrossEntropy,
    )?;
    println!("\ninput_gradient_l1 {l1:.6}");
    Ok(())
}
