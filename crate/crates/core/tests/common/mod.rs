//! Brute-force reference implementations and random instances shared by the
//! integration tests. The oracles avoid the library's helpers on purpose:
//! their own IoU, explicit selection loops and re-matching per threshold.

#![allow(dead_code)]

use crossview::froc::{Detection, FrocPoint, ImageEval};
use crossview::geometry::BBox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn oracle_iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    let union = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Index of the best remaining detection: highest score, then lowest index.
fn pick(dets: &[Detection], alive: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in 0..dets.len() {
        if alive[i] && best.is_none_or(|b| dets[i].score > dets[b].score) {
            best = Some(i);
        }
    }
    best
}

/// Textbook NMS: take the best box, delete everything it overlaps, repeat.
pub fn oracle_nms(dets: &[Detection], thresh: f64) -> Vec<usize> {
    let mut alive = vec![true; dets.len()];
    let mut kept = Vec::new();
    while let Some(i) = pick(dets, &alive) {
        kept.push(i);
        alive[i] = false;
        for j in 0..dets.len() {
            if alive[j] && oracle_iou(&dets[i].bbox, &dets[j].bbox) > thresh {
                alive[j] = false;
            }
        }
    }
    kept
}

/// Greedy matching; returns the gt claimed by each detection.
pub fn oracle_match(dets: &[Detection], gts: &[BBox], iou_min: f64) -> Vec<Option<usize>> {
    let mut alive = vec![true; dets.len()];
    let mut claimed = vec![false; gts.len()];
    let mut out = vec![None; dets.len()];
    while let Some(i) = pick(dets, &alive) {
        alive[i] = false;
        let mut best: Option<usize> = None;
        for j in 0..gts.len() {
            let v = oracle_iou(&dets[i].bbox, &gts[j]);
            if !claimed[j] && v > iou_min && best.is_none_or(|b| v > oracle_iou(&dets[i].bbox, &gts[b])) {
                best = Some(j);
            }
        }
        if let Some(j) = best {
            claimed[j] = true;
            out[i] = Some(j);
        }
    }
    out
}

/// `(fp, tp)` of the detections scoring at least `t`, re-matched from scratch.
fn counts_at(images: &[ImageEval], t: f64, iou_min: f64) -> (usize, usize) {
    let (mut fp, mut tp) = (0, 0);
    for im in images {
        let kept: Vec<Detection> = im.detections.iter().copied().filter(|d| d.score >= t).collect();
        for m in oracle_match(&kept, &im.gts, iou_min) {
            if m.is_some() {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    (fp, tp)
}

fn thresholds(images: &[ImageEval]) -> Vec<f64> {
    let mut t: Vec<f64> = images.iter().flat_map(|im| im.detections.iter().map(|d| d.score)).collect();
    t.sort_by(|a, b| b.total_cmp(a));
    t.dedup();
    t
}

pub fn oracle_froc(images: &[ImageEval], iou_min: f64) -> Vec<FrocPoint> {
    let n_images = images.len();
    let n_gts: usize = images.iter().map(|im| im.gts.len()).sum();
    let point = |threshold: f64, (fp, tp): (usize, usize)| FrocPoint {
        threshold,
        fppi: if n_images == 0 { 0.0 } else { fp as f64 / n_images as f64 },
        recall: if n_gts == 0 { 0.0 } else { tp as f64 / n_gts as f64 },
    };
    let ts = thresholds(images);
    if ts.is_empty() {
        return vec![point(f64::INFINITY, (0, 0))];
    }
    ts.into_iter().map(|t| point(t, counts_at(images, t, iou_min))).collect()
}

/// Best recall over every threshold whose FPPI stays within `target`.
pub fn oracle_recall_at(images: &[ImageEval], iou_min: f64, target: f64) -> f64 {
    let n_gts: usize = images.iter().map(|im| im.gts.len()).sum();
    let mut best = 0.0;
    for t in thresholds(images) {
        let (fp, tp) = counts_at(images, t, iou_min);
        let fppi = fp as f64 / images.len() as f64;
        let recall = if n_gts == 0 { 0.0 } else { tp as f64 / n_gts as f64 };
        if fppi <= target && recall > best {
            best = recall;
        }
    }
    best
}

/// Integer-grid boxes and a coarse score set, so that ties and IoUs landing
/// exactly on a threshold occur often.
pub fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let x = rng.random_range(0..16) as f64;
    let y = rng.random_range(0..16) as f64;
    BBox::new(x, y, x + rng.random_range(1..9) as f64, y + rng.random_range(1..9) as f64)
}

pub fn random_detections(rng: &mut ChaCha8Rng, max: usize) -> Vec<Detection> {
    let n = rng.random_range(0..=max);
    (0..n)
        .map(|_| Detection::new(random_box(rng), rng.random_range(1..10) as f64 / 10.0))
        .collect()
}

pub fn random_gts(rng: &mut ChaCha8Rng, max: usize) -> Vec<BBox> {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| random_box(rng)).collect()
}

pub fn random_images(seed: u64) -> Vec<ImageEval> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..6);
    (0..n)
        .map(|_| ImageEval {
            detections: random_detections(&mut rng, 10),
            gts: random_gts(&mut rng, 4),
        })
        .collect()
}
