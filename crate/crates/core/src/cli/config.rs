//! Run configuration: a TOML file with defaults for every field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::experiment::TrainConfig;
use crate::synth::{GeneratorConfig, View};

/// Which pipeline `run` executes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    #[default]
    All,
    GenData,
    Train,
    Eval,
    MaskExperiment,
    Registration,
    AblatePos,
}

/// Views scored by `eval`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EvalView {
    #[default]
    Both,
    Cc,
    Mlo,
}

impl EvalView {
    pub fn views(self) -> Vec<View> {
        match self {
            EvalView::Both => View::BOTH.to_vec(),
            EvalView::Cc => vec![View::Cc],
            EvalView::Mlo => vec![View::Mlo],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub studies: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            studies: 625,
            split: [0.8, 0.1, 0.1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub view: EvalView,
    /// IoU a prediction's argmax RoI needs with the partner mass.
    pub registration_iou: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            view: EvalView::Both,
            registration_iou: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub experiment: Experiment,
    pub data: DataConfig,
    pub generator: GeneratorConfig,
    pub detector: DetectorConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("runs"),
            experiment: Experiment::All,
            data: DataConfig::default(),
            generator: GeneratorConfig::default(),
            detector: DetectorConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.detector.validate()?;
        crate::experiment::split_sizes(self.data.studies, self.data.split)?;
        if self.detector.image_size != self.generator.image_size {
            return Err(Error::Config(format!(
                "detector.image_size {} differs from generator.image_size {}",
                self.detector.image_size, self.generator.image_size
            )));
        }
        if self.data.studies == 0 {
            return Err(Error::Config("data.studies must be positive".into()));
        }
        if self.train.epochs == 0 {
            return Err(Error::Config("train.epochs must be positive".into()));
        }
        let lr = self.train.adam.lr;
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::Config(format!("train.adam.lr must be positive, got {lr}")));
        }
        let iou = self.eval.registration_iou;
        if !(0.0..1.0).contains(&iou) {
            return Err(Error::Config(format!("eval.registration_iou must lie in [0, 1), got {iou}")));
        }
        Ok(())
    }
}
