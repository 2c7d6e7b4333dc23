//! Gradient-weighted attention attribution over the auxiliary view's RoIs
//! and the registration metrics built on it.
//!
//! Per block, `Ā = mean_heads(max(∂s/∂A ⊙ A, 0))`. Relevance is rolled out
//! over the stacked co-attention blocks with main/aux blocks `R_mm = I`,
//! `R_aa = I`, `R_ma = R_am = 0` and the simultaneous update
//!
//! ```text
//! R_mm += Ā_m R_am    R_ma += Ā_m R_aa
//! R_aa += Ā_a R_ma    R_am += Ā_a R_mm
//! ```
//!
//! The relevance of query RoI `i` is row `i` of `R_ma`. With one block this
//! is the clamped grad × attention row itself.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionRecord;
use crate::autograd::{Tape, Tensor};
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::froc::MATCH_IOU;
use crate::fsutil::write_atomic_str;
use crate::geometry::{iou_unchecked as iou, BBox};
use crate::synth::{StudyPair, View};

#[derive(Clone, Debug, PartialEq)]
pub struct RelevanceMap {
    /// Proposal index of the prediction in its own view.
    pub prediction: usize,
    /// One nonnegative score per auxiliary RoI.
    pub scores: Vec<f64>,
    pub argmax: usize,
}

impl RelevanceMap {
    pub fn new(prediction: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid("relevance", "no auxiliary RoIs"));
        }
        if let Some(s) = scores.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::invalid("relevance", format!("score {s} is not a finite nonnegative value")));
        }
        let argmax = argmax_lowest(&scores);
        Ok(RelevanceMap {
            prediction,
            scores,
            argmax,
        })
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Head mean of `max(grad ⊙ A, 0)` for every block of a record.
pub fn weighted_attention(record: &AttentionRecord) -> Result<Vec<Tensor>> {
    let grads = record
        .grads
        .as_ref()
        .ok_or_else(|| Error::invalid("attention", "record carries no gradients"))?;
    record
        .blocks
        .iter()
        .zip(grads)
        .map(|(heads, gheads)| {
            let (r, c) = (heads[0].rows(), heads[0].cols());
            let mut acc = vec![0.0; r * c];
            for (a, g) in heads.iter().zip(gheads) {
                for ((o, &x), &dx) in acc.iter_mut().zip(a.data()).zip(g.data()) {
                    *o += (x * dx).max(0.0);
                }
            }
            let n = heads.len() as f64;
            acc.iter_mut().for_each(|x| *x /= n);
            Tensor::matrix(r, c, acc)
        })
        .collect()
}

fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for (p, &x) in a.row(i).iter().enumerate().take(k) {
            if x != 0.0 {
                for (o, &y) in out[i * m..(i + 1) * m].iter_mut().zip(b.row(p)) {
                    *o += x * y;
                }
            }
        }
    }
    Tensor::matrix(n, m, out).expect("matmul shape")
}

fn add(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::matrix(a.rows(), a.cols(), data).expect("add shape")
}

fn identity(n: usize) -> Tensor {
    let mut data = vec![0.0; n * n];
    (0..n).for_each(|i| data[i * n + i] = 1.0);
    Tensor::matrix(n, n, data).expect("identity shape")
}

/// Co-attention rollout; `main[b]` is `P_m × P_a`, `aux[b]` is `P_a × P_m`.
/// Returns `R_ma`.
pub fn rollout(main: &[Tensor], aux: &[Tensor]) -> Result<Tensor> {
    if main.len() != aux.len() || main.is_empty() {
        return Err(Error::invalid(
            "rollout",
            format!("{} main and {} auxiliary blocks", main.len(), aux.len()),
        ));
    }
    let (pm, pa) = (main[0].rows(), main[0].cols());
    for (m, a) in main.iter().zip(aux) {
        if m.shape() != [pm, pa] || a.shape() != [pa, pm] {
            return Err(Error::invalid("rollout", "inconsistent attention shapes"));
        }
    }
    let mut r_mm = identity(pm);
    let mut r_aa = identity(pa);
    let mut r_ma = Tensor::matrix(pm, pa, vec![0.0; pm * pa])?;
    let mut r_am = Tensor::matrix(pa, pm, vec![0.0; pa * pm])?;
    for (m, a) in main.iter().zip(aux) {
        let mm = add(&r_mm, &matmul(m, &r_am));
        let ma = add(&r_ma, &matmul(m, &r_aa));
        let aa = add(&r_aa, &matmul(a, &r_ma));
        let am = add(&r_am, &matmul(a, &r_mm));
        (r_mm, r_ma, r_aa, r_am) = (mm, ma, aa, am);
    }
    Ok(r_ma)
}

/// Relevance of every listed prediction of `view` over the other view's RoIs.
/// One forward pass; one backward pass per prediction.
pub fn relevance_scores(
    det: &Detector,
    study: &StudyPair,
    view: View,
    predictions: &[usize],
) -> Result<Vec<RelevanceMap>> {
    if det.config.fusion.n_blocks == 0 {
        return Err(Error::invalid("n_blocks", "relevance needs at least one fusion block"));
    }
    let mut tape = Tape::new();
    let (_, fwd) = det.forward(&mut tape, study)?;
    let len = fwd.view(view).proposals.len();
    predictions
        .iter()
        .map(|&i| {
            if i >= len {
                return Err(Error::IndexOutOfRange { index: i, len });
            }
            let logit = tape.element(fwd.view(view).logits, i)?;
            let score = tape.sigmoid(logit);
            let grads = tape.gradients(score)?;
            let main = AttentionRecord::from_tape(&tape, fwd.attention(view), Some(&grads));
            let aux = AttentionRecord::from_tape(&tape, fwd.attention(view.other()), Some(&grads));
            let r = rollout(&weighted_attention(&main)?, &weighted_attention(&aux)?)?;
            RelevanceMap::new(i, r.row(i).to_vec())
        })
        .collect()
}

/// Studies whose views each hold exactly one mass.
pub fn single_mass_studies(studies: &[StudyPair]) -> Vec<StudyPair> {
    studies
        .iter()
        .filter(|s| s.cc.boxes.len() == 1 && s.mlo.boxes.len() == 1)
        .cloned()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    /// Fraction of main-view masses with at least one hit; `None` without masses.
    pub recall: Option<f64>,
    /// Hits over qualifying predictions; `None` when nothing qualifies.
    pub accuracy: Option<f64>,
    pub qualifying: usize,
    pub hits: usize,
    pub gt_masses: usize,
    pub registered: usize,
}

impl RegistrationReport {
    pub fn csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x}"));
        format!(
            "recall,accuracy,qualifying,hits,gt_masses,registered\n{},{},{},{},{},{}\n",
            opt(self.recall),
            opt(self.accuracy),
            self.qualifying,
            self.hits,
            self.gt_masses,
            self.registered
        )
    }
}

/// One qualifying prediction and the auxiliary RoI it attributes to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayRecord {
    pub study_id: u64,
    pub view: View,
    pub prediction: [f64; 4],
    pub score: f64,
    pub gt_index: usize,
    pub argmax_roi: [f64; 4],
    pub relevance: f64,
    pub hit: bool,
}

/// Index of the main-view mass a prediction qualifies for: the highest IoU
/// above the detection match threshold, ties to the lower index.
pub fn qualifying_mass(pred: &BBox, gts: &[BBox]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (g, gt) in gts.iter().enumerate() {
        let v = iou(pred, gt);
        if v > MATCH_IOU && best.is_none_or(|(_, b)| v > b) {
            best = Some((g, v));
        }
    }
    best.map(|(g, _)| g)
}

/// Running hit counts over studies.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RegistrationTally {
    pub qualifying: usize,
    pub hits: usize,
    pub gt_masses: usize,
    pub registered: usize,
}

impl RegistrationTally {
    /// Scores one study. `items` pairs each qualifying prediction's mass
    /// index with its argmax RoI box; returns the hit flags.
    pub fn add_study(&mut self, study: &StudyPair, view: View, items: &[(usize, BBox)], iou_min: f64) -> Vec<bool> {
        let gts = &study.view(view).boxes;
        let aux_gts = &study.view(view.other()).boxes;
        let mut gt_hit = vec![false; gts.len()];
        let flags: Vec<bool> = items
            .iter()
            .map(|&(g, roi)| {
                let hit = study
                    .partner(view, g)
                    .and_then(|j| aux_gts.get(j))
                    .is_some_and(|p| iou(&roi, p) > iou_min);
                if hit {
                    gt_hit[g] = true;
                }
                hit
            })
            .collect();
        self.qualifying += items.len();
        self.hits += flags.iter().filter(|&&h| h).count();
        self.gt_masses += gts.len();
        self.registered += gt_hit.iter().filter(|&&h| h).count();
        flags
    }

    pub fn report(&self) -> RegistrationReport {
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        RegistrationReport {
            recall: ratio(self.registered, self.gt_masses),
            accuracy: ratio(self.hits, self.qualifying),
            qualifying: self.qualifying,
            hits: self.hits,
            gt_masses: self.gt_masses,
            registered: self.registered,
        }
    }
}

/// Registration over `studies` with `view` as the main view.
///
/// A post-NMS prediction qualifies when it matches a main-view mass; it is
/// a hit when its argmax relevance RoI has IoU above `iou_min` with that
/// mass's partner in the other view.
pub fn registration_metrics(
    det: &Detector,
    studies: &[StudyPair],
    view: View,
    iou_min: f64,
) -> Result<(RegistrationReport, Vec<OverlayRecord>)> {
    let mut overlays = Vec::new();
    let mut tally = RegistrationTally::default();
    for study in studies {
        let (cc, mlo) = det.predict_full(study)?;
        let (pred, aux_pred) = match view {
            View::Cc => (cc, mlo),
            View::Mlo => (mlo, cc),
        };
        let gts = &study.view(view).boxes;
        let chosen: Vec<(usize, usize)> = pred
            .kept
            .iter()
            .filter_map(|&k| qualifying_mass(&pred.raw[k].bbox, gts).map(|g| (k, g)))
            .collect();
        let ids: Vec<usize> = chosen.iter().map(|&(k, _)| k).collect();
        let maps = relevance_scores(det, study, view, &ids)?;
        let items: Vec<(usize, BBox)> = chosen
            .iter()
            .zip(&maps)
            .map(|(&(_, g), m)| (g, aux_pred.proposals[m.argmax].bbox))
            .collect();
        let flags = tally.add_study(study, view, &items, iou_min);
        for (((&(k, g), m), &(_, roi)), hit) in chosen.iter().zip(&maps).zip(&items).zip(flags) {
            overlays.push(OverlayRecord {
                study_id: study.study_id,
                view,
                prediction: pred.raw[k].bbox.as_array(),
                score: pred.raw[k].score,
                gt_index: g,
                argmax_roi: roi.as_array(),
                relevance: m.scores[m.argmax],
                hit,
            });
        }
    }
    Ok((tally.report(), overlays))
}

pub fn write_overlays_jsonl(path: &Path, records: &[OverlayRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("overlay serializes"));
        out.push('\n');
    }
    write_atomic_str(path, &out)
}
