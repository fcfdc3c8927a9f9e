//! Repurpose a frozen pre-trained classifier for a new classification task
//! by training only an input transformation layer and an output mapping
//! layer. The pre-trained model's parameters never change; a parameter
//! digest enforces that.
//!
//! The crate covers:
//!
//! - a small dense-network engine for building frozen source models
//!   ([`model`], [`checkpoint`]);
//! - the trainable input transform (zero-padding, placement, replication,
//!   masked tanh perturbation) in [`transform`];
//! - output mapping by many-to-one label mapping or a linear head in
//!   [`output_map`];
//! - white-box (exact gradient) and black-box (zeroth-order) training in
//!   [`train`];
//! - risk and representation-alignment diagnostics in [`diagnostics`];
//! - dataset ingestion, the black-box endpoint protocol, run configs, and
//!   report persistence in [`data`], [`blackbox`], [`config`], [`report`];
//! - a bundled seeded generator for a desk-scale cross-domain task in
//!   [`synthetic`].
//!
//! See the `examples/` directory for one runnable walkthrough per
//! capability, and the `reprogram` binary for the command-line workflow.

pub mod blackbox;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod output_map;
pub mod report;
pub mod synthetic;
pub mod tensor;
pub mod train;
pub mod transform;

pub use diagnostics::{
    empirical_w1, input_gradient_l1, risk_bound_report, rms_risk, RepresentationSample,
    RiskBoundReport,
};
pub use error::{Error, Result};
pub use model::{accuracy, argmax, train_source, ArchLayer, FrozenModel, LayerSpec, SourceTrainConfig};
pub use output_map::{LabelMapping, LinearHead, OutputMap};
pub use tensor::{one_hot, Tensor};
pub use train::{
    composite_grad, composite_loss, composite_scores, evaluate_accuracy, reprogram,
    reprogram_observed, reprogram_via_oracle, task_loss, zeroth_order_gradient, LossKind,
    ProbOracle, ReprogramConfig, TrainMode, TrainTrace,
};
pub use transform::{build_placement_mask, InputTransform, PlacementLayout, PlacementMode};
