//! Output mapping by many-to-one label assignment: random vs frequency-based
//! greedy, and how aggregated target scores come from averaging the mapped
//! source probabilities.
//!
//! ```bash
//! cargo run --example label_mappings
//! ```

use reprogram::output_map::{argmax_frequencies, LabelMapping};
use reprogram::synthetic;
use reprogram::train::{reprogram, OutputMapSpec, ReprogramConfig};
use reprogram::transform::{InputTransform, PlacementLayout, PlacementMode};
use reprogram::Tensor;

fn main() -> reprogram::Result<()> {
    let task = synthetic::generate(7);
    let model = synthetic::train_bundled_source(&task, 7)?;

    // Aggregation: a target score is the mean probability of its source labels.
    let mapping = LabelMapping::new(vec![vec![0, 2], vec![5]], 10)?;
    let probs = Tensor::matrix(1, 10, vec![0.2, 0.05, 0.4, 0.1, 0.05, 0.1, 0.02, 0.03, 0.03, 0.02])?;
    let scores = mapping.aggregate(&probs)?;
    println!("source probs  {:?}", probs.row(0));
    println!("target scores {:?}  (mean of {{0,2}} and of {{5}})", scores.row(0));

    // The frequency table behind the greedy mapping: how often each source
    // label is the frozen model's argmax on untrained zero-padded samples.
    let layout = PlacementLayout::new(task.target_train.dim(), model.input_dim(), PlacementMode::Center)?;
    let at_w0 = InputTransform::new(layout, Some(model.input_range()));
    let counts = argmax_frequencies(
        &model,
        &at_w0,
        &task.target_train.samples,
        &task.target_train.labels,
        task.target_train.num_classes,
    )?;
    for (c, row) in counts.iter().enumerate() {
        println!("target class {c} argmax counts: {row:?}");
    }
    let greedy = LabelMapping::greedy_from_counts(&counts, model.num_classes(), 3)?;
    println!("greedy mapping, 3 labels per class: {:?}", greedy.pairs());
    let random = LabelMapping::random(model.num_classes(), 2, 3, 42)?;
    println!("random mapping, 3 labels per class: {:?}", random.pairs());

    // Train once under each mapping kind and compare.
    for (name, spec) in [
        ("random", OutputMapSpec::RandomMapping { labels_per_target: 3 }),
        ("greedy", OutputMapSpec::GreedyMapping { labels_per_target: 3 }),
    ] {
        let cfg = ReprogramConfig {
            epochs: 40,
            seed: 1,
            output_map: spec,
            ..ReprogramConfig::default()
        };
        let (_, _, trace) = reprogram(&model, &task.target_train, &task.target_test, &cfg)?;
        println!(
            "{name} mapping: test accuracy {:.4} after {} epochs",
            trace.records.last().unwrap().test_acc,
            cfg.epochs
        );
    }
    Ok(())
}
