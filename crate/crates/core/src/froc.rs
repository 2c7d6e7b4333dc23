//! Detection evaluation: NMS, greedy matching and FROC curves.
//!
//! A gt box is recalled when a detection overlaps it with IoU strictly above
//! the matching threshold. Detections are processed by descending score with
//! ties broken by input order, which makes every result reproducible.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic_str;
use crate::geometry::{iou_unchecked, BBox};
use crate::synth::View;

pub use crate::geometry::iou;

pub const NMS_IOU: f64 = 0.1;
pub const MATCH_IOU: f64 = 0.2;
pub const FPPI_TARGETS: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BBox, score: f64) -> Self {
        Detection { bbox, score }
    }
}

fn validate(dets: &[Detection]) -> Result<()> {
    for d in dets {
        d.bbox.validate()?;
        if !d.score.is_finite() {
            return Err(Error::invalid("score", format!("non-finite score {}", d.score)));
        }
    }
    Ok(())
}

/// Indices sorted by descending score; the stable sort keeps input order on ties.
pub fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    idx
}

/// Greedy non-maximum suppression. Output is in descending score order.
pub fn nms(dets: &[Detection], iou_thresh: f64) -> Result<Vec<Detection>> {
    Ok(nms_indices(dets, iou_thresh)?.into_iter().map(|i| dets[i]).collect())
}

/// Input indices kept by [`nms`], in the same order.
pub fn nms_indices(dets: &[Detection], iou_thresh: f64) -> Result<Vec<usize>> {
    validate(dets)?;
    let mut kept: Vec<usize> = Vec::new();
    for i in score_order(dets) {
        if kept
            .iter()
            .all(|&k| iou_unchecked(&dets[k].bbox, &dets[i].bbox) <= iou_thresh)
        {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// Per-detection and per-gt outcome of matching one image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchResult {
    /// Aligned with the input detections.
    pub true_positive: Vec<bool>,
    /// Gt index claimed by each detection.
    pub matched_gt: Vec<Option<usize>>,
    pub gt_recalled: Vec<bool>,
}

/// Detections in score order claim the unclaimed gt of highest IoU, provided
/// that IoU is strictly greater than `iou_min`. Equal IoUs go to the lower gt
/// index.
pub fn match_detections(dets: &[Detection], gts: &[BBox], iou_min: f64) -> Result<MatchResult> {
    validate(dets)?;
    for g in gts {
        g.validate()?;
    }
    let mut res = MatchResult {
        true_positive: vec![false; dets.len()],
        matched_gt: vec![None; dets.len()],
        gt_recalled: vec![false; gts.len()],
    };
    for i in score_order(dets) {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if res.gt_recalled[j] {
                continue;
            }
            let v = iou_unchecked(&dets[i].bbox, g);
            if v > iou_min && best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        if let Some((j, _)) = best {
            res.gt_recalled[j] = true;
            res.true_positive[i] = true;
            res.matched_gt[i] = Some(j);
        }
    }
    Ok(res)
}

/// Detections and gt of one evaluated image.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImageEval {
    pub detections: Vec<Detection>,
    pub gts: Vec<BBox>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrocPoint {
    pub threshold: f64,
    pub fppi: f64,
    pub recall: f64,
}

/// Operating points ordered by decreasing threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct FrocCurve {
    pub points: Vec<FrocPoint>,
    pub n_images: usize,
    pub n_gts: usize,
}

/// Sweeps every distinct score as a threshold (`score >= t` kept).
///
/// Matching is greedy in score order, so the matching of the detections above
/// a threshold is the prefix of the full matching. One pass with cumulative
/// counts therefore equals re-matching at every threshold.
pub fn froc_curve(images: &[ImageEval], iou_min: f64) -> Result<FrocCurve> {
    let n_images = images.len();
    let n_gts: usize = images.iter().map(|im| im.gts.len()).sum();
    let mut scored: Vec<(f64, bool)> = Vec::new();
    for im in images {
        let m = match_detections(&im.detections, &im.gts, iou_min)?;
        scored.extend(im.detections.iter().zip(&m.true_positive).map(|(d, &tp)| (d.score, tp)));
    }
    let point = |threshold, fp: usize, tp: usize| FrocPoint {
        threshold,
        fppi: if n_images == 0 { 0.0 } else { fp as f64 / n_images as f64 },
        recall: if n_gts == 0 { 0.0 } else { tp as f64 / n_gts as f64 },
    };
    if scored.is_empty() {
        return Ok(FrocCurve {
            points: vec![point(f64::INFINITY, 0, 0)],
            n_images,
            n_gts,
        });
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = Vec::new();
    for (k, &(score, is_tp)) in scored.iter().enumerate() {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        if scored.get(k + 1).is_none_or(|n| n.0 != score) {
            points.push(point(score, fp, tp));
        }
    }
    Ok(FrocCurve {
        points,
        n_images,
        n_gts,
    })
}

/// Highest recall among operating points with `fppi <= target`; 0 if none.
pub fn recall_at_fppi(curve: &FrocCurve, target: f64) -> f64 {
    curve
        .points
        .iter()
        .filter(|p| p.fppi <= target)
        .map(|p| p.recall)
        .fold(0.0, f64::max)
}

/// `threshold,fppi,recall` rows in sweep order.
pub fn curve_csv(curve: &FrocCurve) -> String {
    let mut out = String::from("threshold,fppi,recall\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.fppi, p.recall);
    }
    out
}

/// `metric,value` rows for recall at each FPPI target.
pub fn summary_csv(curve: &FrocCurve) -> String {
    let mut out = String::from("metric,value\n");
    for t in FPPI_TARGETS {
        let _ = writeln!(out, "R@{t},{}", recall_at_fppi(curve, t));
    }
    let _ = writeln!(out, "images,{}", curve.n_images);
    let _ = writeln!(out, "gts,{}", curve.n_gts);
    out
}

/// One line of the prediction dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub study_id: u64,
    pub view: View,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub score: f64,
}

impl PredictionRecord {
    pub fn new(study_id: u64, view: View, d: &Detection) -> Self {
        PredictionRecord {
            study_id,
            view,
            x1: d.bbox.x1,
            y1: d.bbox.y1,
            x2: d.bbox.x2,
            y2: d.bbox.y2,
            score: d.score,
        }
    }

    pub fn detection(&self) -> Detection {
        Detection::new(BBox::new(self.x1, self.y1, self.x2, self.y2), self.score)
    }
}

pub fn write_predictions_jsonl(records: &[PredictionRecord], path: &Path) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).expect("prediction serializes"));
        text.push('\n');
    }
    write_atomic_str(path, &text)
}

pub fn parse_predictions_jsonl(text: &str) -> Result<Vec<PredictionRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::parse("predictions", e.to_string())))
        .collect()
}
