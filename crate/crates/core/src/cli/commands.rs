//! The experiment commands. Each one reads its inputs from disk, writes its
//! outputs atomically into one directory and echoes the effective config there.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::attention::AttentionRecord;
use crate::autograd::Tape;
use crate::detector::{Detector, DetectorConfig, LossComponents};
use crate::error::{Error, Result};
use crate::experiment::{self, split_sizes, Seeds, StepRecord};
use crate::froc::{
    curve_csv, froc_curve, recall_at_fppi, summary_csv, write_predictions_jsonl, FrocCurve, FPPI_TARGETS, MATCH_IOU,
};
use crate::fsutil::write_atomic_str;
use crate::relevance::{registration_metrics, single_mass_studies, write_overlays_jsonl};
use crate::synth::{generate_dataset, mask_masses, read_dataset, write_dataset, write_gt_jsonl, StudyPair, View};

use super::config::RunConfig;
use super::svg::{Plot, Series};

pub const SPLITS: [&str; 3] = ["train", "val", "test"];
pub const CHECKPOINT: &str = "model.ckpt";
pub const CONFIG: &str = "config.toml";

const LOSS_HEADER: &str = "step,epoch,study_id,objectness,classification,box_regression,total";

fn echo_config(cfg: &RunConfig, dir: &Path) -> Result<()> {
    write_atomic_str(&dir.join(CONFIG), &cfg.to_toml())
}

fn read_split(data_dir: &Path, split: &str) -> Result<Vec<StudyPair>> {
    let path = data_dir.join(format!("{split}.xvds"));
    if !path.exists() {
        return Err(Error::invalid(
            "data",
            format!("{} not found; run gen-data first", path.display()),
        ));
    }
    read_dataset(&path)
}

/// Generates all studies from one seed stream and cuts them into the three
/// splits, so study ids never repeat across splits.
pub fn gen_data(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let sizes = split_sizes(cfg.data.studies, cfg.data.split)?;
    let studies = generate_dataset(Seeds::from_run(cfg.seed).data, cfg.data.studies, &cfg.generator)?;
    let mut start = 0;
    for (name, n) in SPLITS.iter().zip(sizes) {
        let part = &studies[start..start + n];
        write_dataset(part, &dir.join(format!("{name}.xvds")))?;
        write_gt_jsonl(part, &dir.join(format!("gt_{name}.jsonl")))?;
        start += n;
    }
    echo_config(cfg, dir)
}

/// Detector config stored next to a checkpoint, or `fallback` if there is none.
fn checkpoint_detector(checkpoint: &Path, fallback: &DetectorConfig) -> Result<DetectorConfig> {
    let sibling = checkpoint.with_file_name(CONFIG);
    if sibling.exists() {
        Ok(RunConfig::load(&sibling)?.detector)
    } else {
        Ok(fallback.clone())
    }
}

pub fn load_model(cfg: &RunConfig, checkpoint: &Path) -> Result<Detector> {
    if !checkpoint.exists() {
        return Err(Error::invalid(
            "checkpoint",
            format!("{} not found; run train first", checkpoint.display()),
        ));
    }
    let config = checkpoint_detector(checkpoint, &cfg.detector)?;
    Ok(Detector::load(checkpoint, config, cfg.train.adam)?.0)
}

pub fn loss_csv(rows: &[StepRecord]) -> String {
    let mut out = format!("{LOSS_HEADER}\n");
    for r in rows {
        let l = r.loss;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step, r.epoch, r.study_id, l.objectness, l.classification, l.box_regression, l.total
        );
    }
    out
}

pub fn parse_loss_csv(text: &str) -> Result<Vec<StepRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(LOSS_HEADER) {
        return Err(Error::parse("loss csv", "unexpected header"));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(Error::parse("loss csv", format!("expected 7 fields: {line}")));
            }
            let bad = |e: &dyn std::fmt::Display| Error::parse("loss csv", format!("{e}: {line}"));
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(&e));
            Ok(StepRecord {
                step: f[0].parse().map_err(|e| bad(&e))?,
                epoch: f[1].parse().map_err(|e| bad(&e))?,
                study_id: f[2].parse().map_err(|e| bad(&e))?,
                loss: LossComponents {
                    objectness: num(f[3])?,
                    classification: num(f[4])?,
                    box_regression: num(f[5])?,
                    total: num(f[6])?,
                },
            })
        })
        .collect()
}

fn loss_plot(rows: &[StepRecord]) -> String {
    let epochs = rows.iter().map(|r| r.epoch + 1).max().unwrap_or(0);
    let mean = |pick: fn(&LossComponents) -> f64| -> Vec<(f64, f64)> {
        (0..epochs)
            .filter_map(|e| {
                let v: Vec<f64> = rows.iter().filter(|r| r.epoch == e).map(|r| pick(&r.loss)).collect();
                (!v.is_empty()).then(|| ((e + 1) as f64, v.iter().sum::<f64>() / v.len() as f64))
            })
            .collect()
    };
    Plot {
        title: "Training loss (epoch mean)",
        x_label: "epoch",
        y_label: "loss",
        x_range: None,
        y_range: None,
        series: vec![
            Series { name: "total", points: mean(|l| l.total), steps: false },
            Series { name: "objectness", points: mean(|l| l.objectness), steps: false },
            Series { name: "classification", points: mean(|l| l.classification), steps: false },
            Series { name: "box regression", points: mean(|l| l.box_regression), steps: false },
        ],
    }
    .render()
}

/// Trains on the train split, checkpointing after every epoch. With `resume`
/// an existing checkpoint in `dir` continues where it stopped; the result is
/// identical to an uninterrupted run.
pub fn train(cfg: &RunConfig, data_dir: &Path, dir: &Path, resume: bool) -> Result<()> {
    let studies = read_split(data_dir, "train")?;
    let seeds = Seeds::from_run(cfg.seed);
    let ckpt = dir.join(CHECKPOINT);
    let mut cfg = cfg.clone();
    let (mut det, mut adam, done, mut rows) = if resume && ckpt.exists() {
        cfg.detector = checkpoint_detector(&ckpt, &cfg.detector)?;
        let (det, adam, done) = Detector::load(&ckpt, cfg.detector.clone(), cfg.train.adam)?;
        let adam = adam.ok_or_else(|| Error::invalid("resume", "checkpoint has no optimizer state"))?;
        let log = std::fs::read_to_string(dir.join("loss.csv")).map_err(|e| Error::io(dir.join("loss.csv"), e))?;
        let rows: Vec<StepRecord> = parse_loss_csv(&log)?
            .into_iter()
            .filter(|r| (r.epoch as u64) < done)
            .collect();
        (det, adam, done as usize, rows)
    } else {
        let det = Detector::new(cfg.detector.clone(), seeds.model)?;
        let adam = det.new_optimizer(cfg.train.adam);
        (det, adam, 0, Vec::new())
    };
    echo_config(&cfg, dir)?;
    experiment::train(&mut det, &mut adam, &studies, &cfg.train, seeds.shuffle, done, |det, adam, epoch, steps| {
        rows.extend_from_slice(steps);
        let mean = steps.iter().map(|s| s.loss.total).sum::<f64>() / steps.len() as f64;
        eprintln!("epoch {}/{}: mean loss {mean:.4}", epoch + 1, cfg.train.epochs);
        write_atomic_str(&dir.join("loss.csv"), &loss_csv(&rows))?;
        det.save(&ckpt, Some(adam), epoch as u64 + 1)
    })?;
    write_atomic_str(&dir.join("loss.csv"), &loss_csv(&rows))?;
    write_atomic_str(&dir.join("loss.svg"), &loss_plot(&rows))
}

fn froc_series<'a>(name: &'a str, curve: &FrocCurve) -> Series<'a> {
    let mut points = vec![(0.0, 0.0)];
    points.extend(curve.points.iter().filter(|p| p.threshold.is_finite()).map(|p| (p.fppi, p.recall)));
    Series { name, points, steps: true }
}

fn froc_plot(title: &str, series: Vec<Series<'_>>) -> String {
    let x_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(FPPI_TARGETS[2], f64::max)
        .min(4.0);
    Plot {
        title,
        x_label: "false positives per image",
        y_label: "recall",
        x_range: Some((0.0, x_max)),
        y_range: Some((0.0, 1.0)),
        series,
    }
    .render()
}

/// FROC of the test split on the configured views.
pub fn eval(cfg: &RunConfig, checkpoint: &Path, data_dir: &Path, dir: &Path) -> Result<()> {
    let det = load_model(cfg, checkpoint)?;
    let studies = read_split(data_dir, "test")?;
    let views = cfg.eval.view.views();
    let preds = experiment::predict_all(&det, &studies)?;
    let curve = froc_curve(&experiment::image_evals(&studies, &preds, &views), MATCH_IOU)?;
    write_atomic_str(&dir.join("froc.csv"), &curve_csv(&curve))?;
    write_atomic_str(&dir.join("summary.csv"), &summary_csv(&curve))?;
    write_predictions_jsonl(
        &experiment::prediction_records(&studies, &preds, &views),
        &dir.join("predictions.jsonl"),
    )?;
    write_atomic_str(&dir.join("froc.svg"), &froc_plot("FROC", vec![froc_series("model", &curve)]))?;
    for t in FPPI_TARGETS {
        eprintln!("R@{t}: {:.4}", recall_at_fppi(&curve, t));
    }
    echo_config(cfg, dir)
}

fn comparison_csv(a_name: &str, b_name: &str, diff_name: &str, a: &FrocCurve, b: &FrocCurve) -> String {
    let mut out = format!("fppi,{a_name},{b_name},{diff_name}\n");
    for t in FPPI_TARGETS {
        let (ra, rb) = (recall_at_fppi(a, t), recall_at_fppi(b, t));
        let _ = writeln!(out, "{t},{ra},{rb},{}", ra - rb);
    }
    out
}

/// CC-view FROC before and after the MLO masses are blended away.
pub fn mask_experiment(cfg: &RunConfig, checkpoint: &Path, data_dir: &Path, dir: &Path) -> Result<()> {
    let det = load_model(cfg, checkpoint)?;
    let studies = read_split(data_dir, "test")?;
    let masked: Vec<StudyPair> = studies.iter().map(|s| mask_masses(s, View::Mlo)).collect();
    let original = experiment::evaluate(&det, &studies, &[View::Cc])?;
    let blinded = experiment::evaluate(&det, &masked, &[View::Cc])?;
    write_atomic_str(&dir.join("mask.csv"), &comparison_csv("original", "masked", "drop", &original, &blinded))?;
    write_atomic_str(&dir.join("froc_original.csv"), &curve_csv(&original))?;
    write_atomic_str(&dir.join("froc_masked.csv"), &curve_csv(&blinded))?;
    write_atomic_str(
        &dir.join("mask.svg"),
        &froc_plot(
            "CC view FROC with MLO masses masked",
            vec![froc_series("original", &original), froc_series("MLO masked", &blinded)],
        ),
    )?;
    echo_config(cfg, dir)
}

/// Registration on the one-mass test studies, then on the same studies with
/// the auxiliary masses masked.
pub fn registration(cfg: &RunConfig, checkpoint: &Path, data_dir: &Path, dir: &Path) -> Result<()> {
    let det = load_model(cfg, checkpoint)?;
    if det.config.fusion.n_blocks == 0 {
        return Err(Error::invalid("checkpoint", "registration needs a model with fusion blocks"));
    }
    let one = single_mass_studies(&read_split(data_dir, "test")?);
    let iou_min = cfg.eval.registration_iou;
    let mut csv = String::new();
    let mut overlays = Vec::new();
    for view in View::BOTH {
        let masked: Vec<StudyPair> = one.iter().map(|s| mask_masses(s, view.other())).collect();
        for (name, set) in [("original", &one), ("masked", &masked)] {
            let (report, records) = registration_metrics(&det, set, view, iou_min)?;
            let body = report.csv();
            let (header, row) = body.split_once('\n').expect("report has a header");
            if csv.is_empty() {
                let _ = writeln!(csv, "dataset,view,{header}");
            }
            let _ = write!(csv, "{name},{},{row}", view.name());
            if name == "original" {
                overlays.extend(records);
            }
        }
    }
    write_atomic_str(&dir.join("registration.csv"), &csv)?;
    write_overlays_jsonl(&dir.join("overlays.jsonl"), &overlays)?;
    echo_config(cfg, dir)
}

/// Attention records of both directions for one study.
pub fn attention_records(det: &Detector, study: &StudyPair) -> Result<[AttentionRecord; 2]> {
    let mut tape = Tape::new();
    let (_, fwd) = det.forward(&mut tape, study)?;
    Ok(View::BOTH.map(|v| AttentionRecord::from_tape(&tape, fwd.attention(v), None)))
}

fn fit_into(cfg: &RunConfig, studies: &[StudyPair], dir: &Path) -> Result<Detector> {
    let seeds = Seeds::from_run(cfg.seed);
    let mut det = Detector::new(cfg.detector.clone(), seeds.model)?;
    let mut adam = det.new_optimizer(cfg.train.adam);
    let rows = experiment::train(&mut det, &mut adam, studies, &cfg.train, seeds.shuffle, 0, |_, _, epoch, _| {
        eprintln!("{}: epoch {}/{}", dir.display(), epoch + 1, cfg.train.epochs);
        Ok(())
    })?;
    det.save(&dir.join(CHECKPOINT), Some(&adam), cfg.train.epochs as u64)?;
    write_atomic_str(&dir.join("loss.csv"), &loss_csv(&rows))?;
    echo_config(cfg, dir)?;
    Ok(det)
}

/// Trains the configured model with and without positional encoding from the
/// same seeds and compares FROC and attention on the test split.
pub fn ablate_pos(cfg: &RunConfig, data_dir: &Path, dir: &Path) -> Result<()> {
    if cfg.detector.fusion.n_blocks == 0 {
        return Err(Error::invalid("detector", "positional ablation needs at least one fusion block"));
    }
    let train_set = read_split(data_dir, "train")?;
    let test = read_split(data_dir, "test")?;
    let mut with_cfg = cfg.clone();
    with_cfg.detector.fusion.use_positional = true;
    let mut without_cfg = cfg.clone();
    without_cfg.detector.fusion.use_positional = false;
    let with = fit_into(&with_cfg, &train_set, &dir.join("with_pos"))?;
    let without = fit_into(&without_cfg, &train_set, &dir.join("without_pos"))?;

    let views = cfg.eval.view.views();
    let a = experiment::evaluate(&with, &test, &views)?;
    let b = experiment::evaluate(&without, &test, &views)?;
    write_atomic_str(
        &dir.join("ablation.csv"),
        &comparison_csv("with_pos", "without_pos", "delta", &a, &b),
    )?;
    write_atomic_str(&dir.join("froc_with_pos.csv"), &curve_csv(&a))?;
    write_atomic_str(&dir.join("froc_without_pos.csv"), &curve_csv(&b))?;

    let mut diff = String::from("study_id,direction,max_abs_diff\n");
    for s in &test {
        let ra = attention_records(&with, s)?;
        let rb = attention_records(&without, s)?;
        for (v, (x, y)) in View::BOTH.iter().zip(ra.iter().zip(&rb)) {
            let _ = writeln!(diff, "{},{}_to_{},{}", s.study_id, v.name(), v.other().name(), x.max_abs_diff(y));
        }
    }
    write_atomic_str(&dir.join("attention_diff.csv"), &diff)?;
    write_atomic_str(
        &dir.join("ablation.svg"),
        &froc_plot(
            "Positional encoding ablation",
            vec![froc_series("with position", &a), froc_series("without position", &b)],
        ),
    )?;
    echo_config(cfg, dir)
}

/// Output locations under one root.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }
    pub fn train(&self) -> PathBuf {
        self.root.join("train")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.train().join(CHECKPOINT)
    }
    pub fn dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_csv_round_trips() {
        let rows = vec![
            StepRecord {
                step: 0,
                epoch: 0,
                study_id: 4,
                loss: LossComponents { objectness: 0.1, classification: 1.0 / 3.0, box_regression: 2e-17, total: 0.5 },
            },
            StepRecord { step: 1, epoch: 1, study_id: 9, loss: LossComponents::default() },
        ];
        assert_eq!(parse_loss_csv(&loss_csv(&rows)).unwrap(), rows);
        assert!(parse_loss_csv("a,b\n").is_err());
        assert!(parse_loss_csv(&format!("{LOSS_HEADER}\n1,2,3\n")).is_err());
    }

    #[test]
    fn comparison_rows_follow_targets() {
        let c = FrocCurve { points: vec![], n_images: 1, n_gts: 1 };
        let csv = comparison_csv("a", "b", "d", &c, &c);
        assert_eq!(csv.lines().count(), 1 + FPPI_TARGETS.len());
        assert!(csv.starts_with("fppi,a,b,d\n0.5,0,0,0\n"));
    }
}
