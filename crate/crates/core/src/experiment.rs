//! Training loop and dataset-level evaluation shared by the commands.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{AdamConfig, AdamState};
use crate::detector::{Detector, DetectorConfig, LossComponents, ViewPrediction};
use crate::error::{Error, Result};
use crate::froc::{froc_curve, FrocCurve, ImageEval, PredictionRecord, MATCH_IOU};
use crate::synth::{study_seed, StudyPair, View};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            adam: AdamConfig::default(),
        }
    }
}

/// Independent streams split off one run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seeds {
    pub data: u64,
    pub model: u64,
    pub shuffle: u64,
}

impl Seeds {
    pub fn from_run(seed: u64) -> Self {
        Seeds {
            data: study_seed(seed, 0),
            model: study_seed(seed, 1),
            shuffle: study_seed(seed, 2),
        }
    }
}

/// Loss of one Adam step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub study_id: u64,
    pub loss: LossComponents,
}

/// Study order of `epoch`; a pure function of the seed and the epoch.
pub fn epoch_order(n: usize, shuffle_seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(study_seed(shuffle_seed, epoch as u64));
    order.shuffle(&mut rng);
    order
}

/// Runs epochs `start_epoch..cfg.epochs`, one study per Adam step.
/// `on_epoch` sees the model and that epoch's steps, e.g. to checkpoint.
pub fn train(
    det: &mut Detector,
    adam: &mut AdamState,
    studies: &[StudyPair],
    cfg: &TrainConfig,
    shuffle_seed: u64,
    start_epoch: usize,
    mut on_epoch: impl FnMut(&Detector, &AdamState, usize, &[StepRecord]) -> Result<()>,
) -> Result<Vec<StepRecord>> {
    if studies.is_empty() {
        return Err(Error::invalid("studies", "empty training set"));
    }
    let mut log = Vec::new();
    for epoch in start_epoch..cfg.epochs {
        let order = epoch_order(studies.len(), shuffle_seed, epoch);
        let first = log.len();
        for (k, &i) in order.iter().enumerate() {
            let loss = det.train_step(&studies[i], adam)?;
            log.push(StepRecord {
                step: epoch * studies.len() + k,
                epoch,
                study_id: studies[i].study_id,
                loss,
            });
        }
        on_epoch(det, adam, epoch, &log[first..])?;
    }
    Ok(log)
}

/// Fresh detector trained on `studies`; the seeds come from `run_seed`.
pub fn fit(config: DetectorConfig, train_cfg: &TrainConfig, studies: &[StudyPair], run_seed: u64) -> Result<Detector> {
    let seeds = Seeds::from_run(run_seed);
    let mut det = Detector::new(config, seeds.model)?;
    let mut adam = det.new_optimizer(train_cfg.adam);
    train(&mut det, &mut adam, studies, train_cfg, seeds.shuffle, 0, |_, _, _, _| Ok(()))?;
    Ok(det)
}

/// Predictions of every study, in study order.
pub fn predict_all(det: &Detector, studies: &[StudyPair]) -> Result<Vec<(ViewPrediction, ViewPrediction)>> {
    studies.iter().map(|s| det.predict_full(s)).collect()
}

/// FROC inputs for the chosen views; each evaluated view image counts once
/// in the FPPI denominator.
pub fn image_evals(
    studies: &[StudyPair],
    preds: &[(ViewPrediction, ViewPrediction)],
    views: &[View],
) -> Vec<ImageEval> {
    let mut out = Vec::new();
    for (s, (cc, mlo)) in studies.iter().zip(preds) {
        for &v in views {
            let p = if v == View::Cc { cc } else { mlo };
            out.push(ImageEval {
                detections: p.detections(),
                gts: s.view(v).boxes.clone(),
            });
        }
    }
    out
}

pub fn prediction_records(
    studies: &[StudyPair],
    preds: &[(ViewPrediction, ViewPrediction)],
    views: &[View],
) -> Vec<PredictionRecord> {
    let mut out = Vec::new();
    for (s, (cc, mlo)) in studies.iter().zip(preds) {
        for &v in views {
            let p = if v == View::Cc { cc } else { mlo };
            out.extend(p.detections().iter().map(|d| PredictionRecord::new(s.study_id, v, d)));
        }
    }
    out
}

/// Predicts and scores `studies` on `views`.
pub fn evaluate(det: &Detector, studies: &[StudyPair], views: &[View]) -> Result<FrocCurve> {
    let preds = predict_all(det, studies)?;
    froc_curve(&image_evals(studies, &preds, views), MATCH_IOU)
}

/// Split sizes for `n` studies; rounding goes to the last part.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    let total: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be nonnegative and sum to 1")));
    }
    let a = (n as f64 * fractions[0]).round() as usize;
    let b = ((n as f64 * fractions[1]).round() as usize).min(n - a);
    Ok([a, b, n - a - b])
}
