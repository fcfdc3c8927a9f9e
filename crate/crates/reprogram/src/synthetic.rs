//! Seeded generator for the bundled desk-scale cross-domain task.
//!
//! Source side: a 10-class pattern classification problem on 8x8 inputs.
//! Each class is a fixed random prototype in `[-1, 1]^64`; samples are the
//! prototype plus clipped Gaussian noise.
//!
//! Target side: a 2-class problem on 4x4 inputs whose class prototypes are
//! the center crops of source prototypes 0 and 1. Zero-padded target samples
//! therefore already resemble weak versions of two source classes, which is
//! what makes the frozen source model reprogrammable for the target task.

use crate::data::Dataset;
use crate::error::Result;
use crate::model::{train_source, ArchLayer, FrozenModel, SourceTrainConfig};
use crate::tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub const SOURCE_SIDE: usize = 8;
pub const SOURCE_DIM: usize = SOURCE_SIDE * SOURCE_SIDE;
pub const SOURCE_CLASSES: usize = 10;
pub const TARGET_SIDE: usize = 4;
pub const TARGET_DIM: usize = TARGET_SIDE * TARGET_SIDE;
pub const TARGET_CLASSES: usize = 2;

pub const SOURCE_TRAIN: usize = 2000;
pub const SOURCE_TEST: usize = 500;
pub const TARGET_TRAIN: usize = 200;
pub const TARGET_TEST: usize = 200;
pub const ALIGNED_CLASSES: usize = SOURCE_CLASSES;
pub const ALIGNED_TRAIN: usize = 400;
pub const ALIGNED_TEST: usize = 200;

const SOURCE_NOISE: f64 = 0.3;
const TARGET_NOISE: f64 = 0.4;
const ALIGNED_NOISE: f64 = 0.25;

/// All dataset splits of the bundled task.
///
/// The 2-class target pair is the utility benchmark (chance 0.5). The
/// aligned pair is a 10-class variant with one target class per source
/// class, the setting the one-to-one risk-bound diagnostics assume.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub source_train: Dataset,
    pub source_test: Dataset,
    pub target_train: Dataset,
    pub target_test: Dataset,
    pub aligned_train: Dataset,
    pub aligned_test: Dataset,
}

/// Generate the bundled task. The same seed always yields byte-identical
/// datasets.
pub fn generate(seed: u64) -> SyntheticTask {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let prototypes: Vec<Vec<f64>> = (0..SOURCE_CLASSES)
        .map(|_| (0..SOURCE_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();

    let source_train = sample_around(&prototypes, SOURCE_DIM, SOURCE_TRAIN, SOURCE_NOISE, &mut rng);
    let source_test = sample_around(&prototypes, SOURCE_DIM, SOURCE_TEST, SOURCE_NOISE, &mut rng);

    // Target prototypes: center 4x4 crops of the source prototypes.
    let crop_offset = (SOURCE_SIDE - TARGET_SIDE) / 2;
    let crops: Vec<Vec<f64>> = (0..SOURCE_CLASSES)
        .map(|c| {
            let mut crop = Vec::with_capacity(TARGET_DIM);
            for r in 0..TARGET_SIDE {
                for col in 0..TARGET_SIDE {
                    crop.push(prototypes[c][(r + crop_offset) * SOURCE_SIDE + col + crop_offset]);
                }
            }
            crop
        })
        .collect();

    let target_train =
        sample_around(&crops[..TARGET_CLASSES], TARGET_DIM, TARGET_TRAIN, TARGET_NOISE, &mut rng);
    let target_test =
        sample_around(&crops[..TARGET_CLASSES], TARGET_DIM, TARGET_TEST, TARGET_NOISE, &mut rng);

    let aligned_train = sample_around(&crops, TARGET_DIM, ALIGNED_TRAIN, ALIGNED_NOISE, &mut rng);
    let aligned_test = sample_around(&crops, TARGET_DIM, ALIGNED_TEST, ALIGNED_NOISE, &mut rng);

    SyntheticTask {
        source_train,
        source_test,
        target_train,
        target_test,
        aligned_train,
        aligned_test,
    }
}

fn sample_around(
    prototypes: &[Vec<f64>],
    dim: usize,
    n: usize,
    noise: f64,
    rng: &mut ChaCha20Rng,
) -> Dataset {
    let k = prototypes.len();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        for &p in &prototypes[c] {
            let eps: f64 = rng.sample(StandardNormal);
            data.push((p + noise * eps).clamp(-1.0, 1.0));
        }
        labels.push(c);
    }
    Dataset::new(Tensor::matrix(n, dim, data).expect("finite samples"), labels, k)
        .expect("consistent synthetic dataset")
}

/// Architecture used for the bundled source model.
pub fn source_arch() -> Vec<ArchLayer> {
    vec![
        ArchLayer::Dense { in_dim: SOURCE_DIM, out_dim: 32 },
        ArchLayer::Relu,
        ArchLayer::Dense { in_dim: 32, out_dim: SOURCE_CLASSES },
        ArchLayer::Softmax,
    ]
}

/// Hyperparameters that train the bundled source model to high accuracy in
/// a few seconds.
pub fn source_train_config(seed: u64) -> SourceTrainConfig {
    SourceTrainConfig {
        epochs: 30,
        batch_size: 64,
        learning_rate: 0.1,
        momentum: 0.9,
        seed,
    }
}

/// Train the frozen source classifier for a generated task.
pub fn train_bundled_source(task: &SyntheticTask, seed: u64) -> Result<FrozenModel> {
    train_source(
        &task.source_train.samples,
        &task.source_train.labels,
        &source_arch(),
        &source_train_config(seed),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::accuracy;

    #[test]
    fn generation_is_deterministic() {
        let a = generate(5);
        let b = generate(5);
        assert_eq!(a.source_train.samples, b.source_train.samples);
        assert_eq!(a.target_test.samples, b.target_test.samples);
        let c = generate(6);
        assert_ne!(a.source_train.samples, c.source_train.samples);
    }

    #[test]
    fn shapes_and_ranges() {
        let t = generate(1);
        assert_eq!(t.source_train.dim(), SOURCE_DIM);
        assert_eq!(t.source_train.len(), SOURCE_TRAIN);
        assert_eq!(t.target_train.dim(), TARGET_DIM);
        assert_eq!(t.target_train.num_classes, TARGET_CLASSES);
        assert!(t
            .source_train
            .samples
            .data()
            .iter()
            .chain(t.target_train.samples.data())
            .all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn source_model_reaches_high_test_accuracy() {
        let task = generate(7);
        let model = train_bundled_source(&task, 7).unwrap();
        let acc = accuracy(
            &model.forward(&task.source_test.samples).unwrap(),
            &task.source_test.labels,
        );
        assert!(acc >= 0.9, "source test accuracy {acc}");
    }
}
