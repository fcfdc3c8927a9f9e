//! Train the bundled source classifier from scratch, freeze it, and round-trip
//! it through the binary checkpoint format.
//!
//! ```bash
//! cargo run --example train_source
//! ```

use reprogram::checkpoint;
use reprogram::model::accuracy;
use reprogram::synthetic;

fn main() -> reprogram::Result<()> {
    let task = synthetic::generate(7);
    println!(
        "source task: {} train / {} test samples, {} classes, {} dims",
        task.source_train.len(),
        task.source_test.len(),
        task.source_train.num_classes,
        task.source_train.dim()
    );

    let model = synthetic::train_bundled_source(&task, 7)?;
    let train_acc = accuracy(&model.forward(&task.source_train.samples)?, &task.source_train.labels);
    let test_acc = accuracy(&model.forward(&task.source_test.samples)?, &task.source_test.labels);
    println!("train accuracy {train_acc:.4}");
    println!("test accuracy  {test_acc:.4}");
    println!("param digest   {}", model.param_digest());

    let dir = std::env::temp_dir().join("reprogram_example_train_source");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("source.ckpt");
    checkpoint::save(&model, &path)?;
    let reloaded = checkpoint::load(&path)?;
    println!("checkpoint     {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    println!("reload digest  {}", reloaded.param_digest());
    assert_eq!(model.param_digest(), reloaded.param_digest());
    assert_eq!(model.layers(), reloaded.layers());
    println!("round trip preserved every parameter bit");
    Ok(())
}
