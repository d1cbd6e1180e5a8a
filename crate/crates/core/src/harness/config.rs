use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infometrics::DEFAULT_BINS;
use crate::qmcm::QmcmConfig;
use crate::toytrain::{make_blobs, Activation, Budget, MlpSpec, SyntheticDataset, TrainConfig};
use crate::weights::DatasetRecipe;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    InitEnsemble,
    TwoScratch,
    LabelFraction,
    LabelCorruption,
    DistanceSim,
    Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub class_count: usize,
    pub per_class: usize,
    pub input_dim: usize,
    pub spread: f64,
    /// Defaults to the harness base seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub population_size: usize,
    pub dim: usize,
    pub fractions: Vec<f64>,
    pub bins: usize,
}

/// Full description of one harness run.
///
/// Every field has an experiment-specific default (see
/// [`ExperimentConfig::defaults_for`]); a JSON file may override any subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub ensemble_size: usize,
    pub base_seed: u64,
    pub dataset: DatasetParams,
    pub model: ModelParams,
    pub training: TrainConfig,
    pub qmcm: QmcmConfig,
    /// Smallest nearest-pairing fraction at which QMCM is applied.
    pub pairing_threshold: f64,
    /// Mean training accuracy the clean arm of a sweep must reach.
    pub min_clean_accuracy: f64,
    pub fractions: Vec<f64>,
    pub rates: Vec<f64>,
    pub sim: SimParams,
    pub output_dir: PathBuf,
    pub save_snapshots: bool,
}

impl ExperimentConfig {
    pub fn defaults_for(experiment: Experiment) -> Self {
        let sweep = Self {
            experiment,
            ensemble_size: 200,
            base_seed: 0,
            dataset: DatasetParams {
                class_count: 10,
                per_class: 30,
                input_dim: 10,
                spread: 0.2,
                seed: None,
            },
            model: ModelParams {
                hidden: vec![12],
                activation: Activation::Relu,
            },
            training: TrainConfig {
                budget: Budget::Steps(400),
                learning_rate: 0.3,
                batch_size: 30,
            },
            qmcm: QmcmConfig::default(),
            pairing_threshold: 0.95,
            min_clean_accuracy: 0.9,
            fractions: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            rates: (0..=10).map(|k| k as f64 / 10.0).collect(),
            sim: SimParams {
                population_size: 10_000,
                dim: 100,
                fractions: vec![0.1],
                bins: DEFAULT_BINS,
            },
            output_dir: PathBuf::from("out"),
            save_snapshots: false,
        };
        match experiment {
            Experiment::InitEnsemble | Experiment::TwoScratch | Experiment::Stats => Self {
                ensemble_size: if experiment == Experiment::TwoScratch { 100 } else { 200 },
                dataset: DatasetParams {
                    class_count: 2,
                    per_class: 50,
                    input_dim: 2,
                    spread: 0.15,
                    seed: None,
                },
                model: ModelParams {
                    hidden: vec![8],
                    activation: Activation::Relu,
                },
                training: TrainConfig {
                    budget: Budget::Epochs(50),
                    learning_rate: 0.1,
                    batch_size: 10,
                },
                ..sweep
            },
            _ => sweep,
        }
    }

    /// Defaults for `experiment` overridden by the keys present in `json`.
    pub fn from_json_overrides(experiment: Experiment, json: &str) -> Result<Self> {
        let mut base = serde_json::to_value(Self::defaults_for(experiment))?;
        let overrides: serde_json::Value = serde_json::from_str(json)?;
        merge(&mut base, overrides);
        let cfg: Self = serde_json::from_value(base)?;
        if cfg.experiment != experiment {
            return Err(Error::InvalidConfig(format!(
                "config is for {:?}, command runs {experiment:?}",
                cfg.experiment
            )));
        }
        Ok(cfg)
    }

    pub fn load(experiment: Experiment, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_overrides(experiment, &text)
    }

    pub fn dataset_seed(&self) -> u64 {
        self.dataset.seed.unwrap_or(self.base_seed)
    }

    pub fn recipe(&self) -> DatasetRecipe {
        DatasetRecipe {
            class_count: self.dataset.class_count,
            per_class: self.dataset.per_class,
            input_dim: self.dataset.input_dim,
            spread: self.dataset.spread,
            seed: self.dataset_seed(),
        }
    }

    pub fn make_dataset(&self) -> Result<SyntheticDataset> {
        make_blobs(
            self.dataset.class_count,
            self.dataset.per_class,
            self.dataset.input_dim,
            self.dataset.spread,
            self.dataset_seed(),
        )
    }

    /// Network for `seed`; the output layer always spans every class of the
    /// full dataset.
    pub fn mlp_spec(&self, seed: u64) -> Result<MlpSpec> {
        let mut sizes = vec![self.dataset.input_dim];
        sizes.extend(&self.model.hidden);
        sizes.push(self.dataset.class_count);
        MlpSpec::new(sizes, self.model.activation, seed)
    }

    /// Seed of ensemble member `index`.
    pub fn member_seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }

    pub fn validate(&self) -> Result<()> {
        let ensemble = matches!(
            self.experiment,
            Experiment::InitEnsemble
                | Experiment::TwoScratch
                | Experiment::LabelFraction
                | Experiment::LabelCorruption
                | Experiment::Stats
        );
        if ensemble && self.ensemble_size < 2 {
            return Err(Error::InvalidConfig("ensemble_size must be at least 2".into()));
        }
        if self.experiment == Experiment::TwoScratch && !self.ensemble_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig("two-scratch needs an even ensemble_size".into()));
        }
        if self.training.batch_size == 0 || !(self.training.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig("invalid training parameters".into()));
        }
        if !(self.qmcm.t > 0.0) || self.qmcm.n < 2 {
            return Err(Error::InvalidConfig("qmcm needs t > 0 and n >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.pairing_threshold) {
            return Err(Error::InvalidConfig("pairing_threshold outside [0, 1]".into()));
        }
        if self.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::InvalidConfig("label fractions must lie in (0, 1]".into()));
        }
        if self.rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidConfig("corruption rates must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Recursive JSON object merge; non-object values replace, and so does a
/// single-key object naming a different enum variant.
fn merge(base: &mut serde_json::Value, overrides: serde_json::Value) {
    match (base, overrides) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o))
            if !(b.len() == 1 && o.len() == 1 && b.keys().ne(o.keys())) =>
        {
            for (k, v) in o {
                merge(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}
