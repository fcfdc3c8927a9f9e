//! Run configuration: a single JSON document that drives every CLI command.
//! Unknown keys are rejected everywhere so typos fail loudly instead of
//! silently falling back to defaults.

use crate::data::{load_idx_dataset, parse_ucr_csv, Dataset};
use crate::error::{Error, Result};
use crate::synthetic;
use crate::train::{ReprogramConfig, TrainMode};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Which target variant of the bundled task to use: the 2-class utility
/// benchmark or the 10-class variant with one target class per source class
/// (the setting the risk-bound diagnostics assume).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticVariant {
    #[default]
    TwoClass,
    OneToOne,
}

/// Where one side's train/test datasets come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// The bundled seeded generator.
    Synthetic {
        seed: u64,
        #[serde(default)]
        variant: SyntheticVariant,
    },
    /// IDX image/label file pairs.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    /// UCR-style CSV files (`label,v1,...,vd` per line).
    Csv { train: PathBuf, test: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSide {
    Source,
    Target,
}

impl DataSpec {
    /// Load the train and test datasets this spec describes.
    pub fn load(&self, side: DataSide) -> Result<(Dataset, Dataset)> {
        match self {
            DataSpec::Synthetic { seed, variant } => {
                let task = synthetic::generate(*seed);
                Ok(match (side, variant) {
                    (DataSide::Source, _) => (task.source_train, task.source_test),
                    (DataSide::Target, SyntheticVariant::TwoClass) => {
                        (task.target_train, task.target_test)
                    }
                    (DataSide::Target, SyntheticVariant::OneToOne) => {
                        (task.aligned_train, task.aligned_test)
                    }
                })
            }
            DataSpec::Idx { train_images, train_labels, test_images, test_labels } => {
                let train = load_idx_dataset(&fs::read(train_images)?, &fs::read(train_labels)?)?;
                let test = load_idx_dataset(&fs::read(test_images)?, &fs::read(test_labels)?)?;
                Ok((train, test))
            }
            DataSpec::Csv { train, test } => {
                let train = parse_ucr_csv(&fs::read_to_string(train)?)?;
                let test = parse_ucr_csv(&fs::read_to_string(test)?)?;
                Ok((train, test))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<DataSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<DataSpec>,
}

/// Source-model training section (`train-source` command).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceTrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Hidden dense layer widths; relu after each.
    pub hidden: Vec<usize>,
}

impl Default for SourceTrainSection {
    fn default() -> Self {
        SourceTrainSection {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.1,
            momentum: 0.9,
            seed: 0,
            hidden: vec![32],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    /// Representation samples per side for the Wasserstein-1 estimate.
    pub n_rep: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection { n_rep: 200 }
    }
}

/// The whole run document. Every command reads the sections it needs; the
/// report echoes the fully resolved form so a run can be replayed exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Path of the frozen source checkpoint (output of `train-source`, input
    /// of everything else).
    pub checkpoint: PathBuf,
    /// Directory the `reprogram` command writes its artifacts into.
    pub report_dir: PathBuf,
    pub data: DataConfig,
    pub source_train: SourceTrainSection,
    pub reprogram: ReprogramConfig,
    /// Spawn this command as the black-box endpoint instead of evaluating the
    /// checkpoint in-process (black-box mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blackbox_cmd: Option<Vec<String>>,
    pub diagnostics: DiagnosticsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            checkpoint: PathBuf::from("source.ckpt"),
            report_dir: PathBuf::from("report"),
            data: DataConfig {
                source: Some(DataSpec::Synthetic { seed: 7, variant: SyntheticVariant::TwoClass }),
                target: Some(DataSpec::Synthetic { seed: 7, variant: SyntheticVariant::TwoClass }),
            },
            source_train: SourceTrainSection::default(),
            reprogram: ReprogramConfig::default(),
            blackbox_cmd: None,
            diagnostics: DiagnosticsSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.reprogram.validate()?;
        if self.source_train.epochs < 1 {
            return Err(Error::InvalidConfig("source_train.epochs must be >= 1".into()));
        }
        if !(self.source_train.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("source_train.learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.source_train.momentum) {
            return Err(Error::InvalidConfig("source_train.momentum must be in [0, 1)".into()));
        }
        if self.diagnostics.n_rep < 2 {
            return Err(Error::InvalidConfig("diagnostics.n_rep must be >= 2".into()));
        }
        if self.blackbox_cmd.is_some() && self.reprogram.mode != TrainMode::BlackBox {
            return Err(Error::InvalidConfig(
                "blackbox_cmd requires reprogram.mode = black_box".into(),
            ));
        }
        Ok(())
    }

    /// Apply command-line overrides; the echoed config carries the resolved
    /// values.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        mode: Option<TrainMode>,
        report_dir: Option<PathBuf>,
    ) {
        if let Some(s) = seed {
            self.reprogram.seed = s;
            self.source_train.seed = s;
        }
        if let Some(m) = mode {
            self.reprogram.mode = m;
        }
        if let Some(dir) = report_dir {
            self.report_dir = dir;
        }
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn source_data(&self) -> Result<(Dataset, Dataset)> {
        self.data
            .source
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("config has no data.source section".into()))?
            .load(DataSide::Source)
    }

    pub fn target_data(&self) -> Result<(Dataset, Dataset)> {
        self.data
            .target
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("config has no data.target section".into()))?
            .load(DataSide::Target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = RunConfig::default();
        let text = cfg.to_pretty_json();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"not_a_key": 1}"#).unwrap_err();
        assert!(err.to_string().contains("not_a_key"));

        let nested = r#"{"reprogram": {"zo": {"q": 5, "mu": 0.1, "oops": 2}}}"#;
        assert!(serde_json::from_str::<RunConfig>(nested).is_err());
    }

    #[test]
    fn partial_configs_resolve_to_defaults() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"reprogram": {"epochs": 3, "seed": 9}}"#).unwrap();
        assert_eq!(cfg.reprogram.epochs, 3);
        assert_eq!(cfg.reprogram.seed, 9);
        assert_eq!(cfg.reprogram.batch_size, ReprogramConfig::default().batch_size);
    }

    #[test]
    fn overrides_are_applied() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(Some(11), Some(TrainMode::BlackBox), Some(PathBuf::from("out")));
        assert_eq!(cfg.reprogram.seed, 11);
        assert_eq!(cfg.source_train.seed, 11);
        assert_eq!(cfg.reprogram.mode, TrainMode::BlackBox);
        assert_eq!(cfg.report_dir, PathBuf::from("out"));
    }

    #[test]
    fn validation_catches_bad_sections() {
        let mut cfg = RunConfig::default();
        cfg.diagnostics.n_rep = 1;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.blackbox_cmd = Some(vec!["x".into()]);
        assert!(cfg.validate().is_err()); // white_box + endpoint

        let mut cfg = RunConfig::default();
        cfg.reprogram.zo.mu = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn idx_and_csv_specs_load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let idx_images = |n: u32| {
            let mut b = Vec::new();
            b.extend_from_slice(&0x0000_0803u32.to_be_bytes());
            for d in [n, 2, 2] {
                b.extend_from_slice(&d.to_be_bytes());
            }
            b.extend((0..n * 4).map(|i| (i % 256) as u8));
            b
        };
        let idx_labels = |n: u32| {
            let mut b = Vec::new();
            b.extend_from_slice(&0x0000_0801u32.to_be_bytes());
            b.extend_from_slice(&n.to_be_bytes());
            b.extend((0..n).map(|i| (i % 2) as u8));
            b
        };
        for (name, bytes) in [
            ("tri.idx", idx_images(4)),
            ("trl.idx", idx_labels(4)),
            ("tei.idx", idx_images(2)),
            ("tel.idx", idx_labels(2)),
        ] {
            fs::write(dir.path().join(name), bytes).unwrap();
        }
        let spec = DataSpec::Idx {
            train_images: dir.path().join("tri.idx"),
            train_labels: dir.path().join("trl.idx"),
            test_images: dir.path().join("tei.idx"),
            test_labels: dir.path().join("tel.idx"),
        };
        let (train, test) = spec.load(DataSide::Target).unwrap();
        assert_eq!((train.len(), train.dim()), (4, 4));
        assert_eq!(test.len(), 2);

        fs::write(dir.path().join("train.csv"), "1,0.5,0.25\n2,0.75,0.5\n").unwrap();
        fs::write(dir.path().join("test.csv"), "1,0.1,0.9\n").unwrap();
        let spec = DataSpec::Csv {
            train: dir.path().join("train.csv"),
            test: dir.path().join("test.csv"),
        };
        let (train, test) = spec.load(DataSide::Target).unwrap();
        assert_eq!(train.num_classes, 2);
        assert_eq!(test.dim(), 2);
    }

    #[test]
    fn synthetic_spec_loads_both_sides() {
        let spec = DataSpec::Synthetic { seed: 3, variant: SyntheticVariant::TwoClass };
        let (strain, stest) = spec.load(DataSide::Source).unwrap();
        let (ttrain, _) = spec.load(DataSide::Target).unwrap();
        assert_eq!(strain.dim(), synthetic::SOURCE_DIM);
        assert_eq!(stest.len(), synthetic::SOURCE_TEST);
        assert_eq!(ttrain.dim(), synthetic::TARGET_DIM);
        let spec = DataSpec::Synthetic { seed: 3, variant: SyntheticVariant::OneToOne };
        let (atrain, _) = spec.load(DataSide::Target).unwrap();
        assert_eq!(atrain.num_classes, synthetic::ALIGNED_CLASSES);
    }
}
