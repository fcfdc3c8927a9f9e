//! Reprogram the frozen source model using forward queries only: the
//! transform gradient is estimated from sphere-sampled loss differences, so
//! nothing ever backpropagates through the model. Query accounting shows the
//! price of gradient-free access.
//!
//! ```bash
//! cargo run --example blackbox_reprogram
//! ```

use reprogram::synthetic;
use reprogram::train::{reprogram, OutputMapSpec, ReprogramConfig, TrainMode, ZoConfig};

fn main() -> reprogram::Result<()> {
    let task = synthetic::generate(7);
    let model = synthetic::train_bundled_source(&task, 7)?;

    let cfg = ReprogramConfig {
        epochs: 150,
        batch_size: 50,
        seed: 0,
        mode: TrainMode::BlackBox,
        zo: ZoConfig { q: 10, mu: 1e-3 },
        output_map: OutputMapSpec::GreedyMapping { labels_per_target: 1 },
        ..ReprogramConfig::default()
    };
    let (_, _, trace) = reprogram(&model, &task.target_train, &task.target_test, &cfg)?;

    let last = trace.records.last().unwrap();
    println!("epochs {}  probes per step q = {}", cfg.epochs, cfg.zo.q);
    println!("final loss {:.4}", last.loss);
    println!("final test accuracy {:.4}", last.test_acc);
    println!("per-sample forward queries: {}", last.queries);
    println!(
        "batch-level oracle calls: {} training ({} setup, {} eval)",
        trace.train_oracle_calls, trace.setup_oracle_calls, trace.eval_oracle_calls
    );
    let steps = cfg.epochs as u64 * (task.target_train.len() as u64).div_ceil(cfg.batch_size as u64);
    assert_eq!(trace.train_oracle_calls, (cfg.zo.q as u64 + 1) * steps);
    println!(
        "training calls match the budget exactly: (q + 1) x {steps} steps = {}",
        trace.train_oracle_calls
    );
    Ok(())
}
