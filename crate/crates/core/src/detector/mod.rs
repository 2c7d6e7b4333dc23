//! Toy two-view detector with one parameter copy shared by both views.
//!
//! Per view: each `s×s` cell is linearly embedded and rectified, a linear
//! objectness score ranks the cells, and the top `P` cells become proposals
//! whose embeddings pass through a linear RoI layer. The two RoI sets are
//! fused by the cross-view transformer, then a linear head predicts a mass
//! logit and four bounded box offsets per RoI.

mod assign;
mod grid;
mod loss;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{
    bidirectional_fuse, AttentionVars, CrossTransformerConfig, FusionWeights, RoISet, ViewInput,
};
use crate::autograd::checkpoint::{self, restore_params, store_entries};
use crate::autograd::{sigmoid, AdamConfig, AdamState, Bindings, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::froc::{nms_indices, Detection};
use crate::geometry::BBox;
use crate::synth::{StudyPair, SyntheticImage, View};

pub use assign::{assign_targets, Assignment, Label};
pub use grid::{top_p, Grid};
pub use loss::{diou_loss, diou_loss_tape, focal_loss, focal_loss_tape, PROB_MARGIN};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub image_size: usize,
    pub cell_size: usize,
    /// Proposals kept per view.
    pub num_proposals: usize,
    /// Side of the square anchor centered on every cell.
    pub anchor_size: f64,
    /// Initial foreground probability of the score and objectness biases.
    pub score_prior: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub positive_iou: f64,
    pub negative_iou: f64,
    pub nms_iou: f64,
    pub fusion: CrossTransformerConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            image_size: 64,
            cell_size: 8,
            num_proposals: 64,
            anchor_size: 11.0,
            score_prior: 0.01,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            positive_iou: 0.5,
            negative_iou: 0.3,
            nms_iou: crate::froc::NMS_IOU,
            fusion: CrossTransformerConfig {
                d: 64,
                n_heads: 2,
                ffn_hidden: 64,
                pos_scale: 1000.0,
                ..CrossTransformerConfig::default()
            },
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let grid = Grid::new(self.image_size, self.image_size, self.cell_size)?;
        if self.num_proposals == 0 || self.num_proposals > grid.n_cells() {
            return Err(Error::Config(format!(
                "num_proposals {} must be in 1..={}",
                self.num_proposals,
                grid.n_cells()
            )));
        }
        if !(self.anchor_size > 0.0) {
            return Err(Error::Config("anchor_size must be positive".into()));
        }
        if !(self.score_prior > 0.0 && self.score_prior < 1.0) {
            return Err(Error::Config("score_prior must lie in (0, 1)".into()));
        }
        if !(self.negative_iou <= self.positive_iou) {
            return Err(Error::Config("negative_iou must not exceed positive_iou".into()));
        }
        self.fusion.validate()
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.image_size, self.image_size, self.cell_size)
    }
}

/// Every trainable tensor of the detector; one copy serves both views.
#[derive(Clone, Debug)]
pub struct DetectorParams {
    pub store: ParamStore,
    pub encoder_w: ParamId,
    pub encoder_b: ParamId,
    pub objectness_w: ParamId,
    pub objectness_b: ParamId,
    pub roi_w: ParamId,
    pub roi_b: ParamId,
    pub head_w: ParamId,
    pub head_b: ParamId,
    pub fusion: FusionWeights,
}

impl DetectorParams {
    fn new(cfg: &DetectorConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = cfg.fusion.d;
        let patch = cfg.cell_size * cfg.cell_size;
        let prior_bias = -((1.0 - cfg.score_prior) / cfg.score_prior).ln();
        let encoder_w = store.register_uniform("encoder.w", &[patch, d], (patch as f64).sqrt().recip(), &mut rng)?;
        let encoder_b = store.register_filled("encoder.b", &[d], 0.0)?;
        let objectness_w = store.register_uniform("objectness.w", &[d, 1], (d as f64).sqrt().recip(), &mut rng)?;
        let objectness_b = store.register_filled("objectness.b", &[1], prior_bias)?;
        let roi_w = store.register_uniform("roi.w", &[d, d], (d as f64).sqrt().recip(), &mut rng)?;
        let roi_b = store.register_filled("roi.b", &[d], 0.0)?;
        let fusion = FusionWeights::register(&mut store, "fusion", &cfg.fusion, &mut rng)?;
        let head_w = store.register_uniform("head.w", &[d, 5], (d as f64).sqrt().recip(), &mut rng)?;
        let head_b = store.register("head.b", Tensor::vector(vec![prior_bias, 0.0, 0.0, 0.0, 0.0])?)?;
        Ok(DetectorParams {
            store,
            encoder_w,
            encoder_b,
            objectness_w,
            objectness_b,
            roi_w,
            roi_b,
            head_w,
            head_b,
            fusion,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proposal {
    pub bbox: BBox,
    pub objectness: f64,
    pub cell: usize,
}

/// Tape handles of one view's forward pass.
#[derive(Clone, Debug)]
pub struct ViewForward {
    /// `n_cells × 1` objectness logits.
    pub objectness: Var,
    pub proposals: Vec<Proposal>,
    /// `P × d` RoI features before fusion.
    pub roi: Var,
    pub fused: Var,
    /// `P × 1` mass logits.
    pub logits: Var,
    /// `P × 4` decoded boxes.
    pub boxes: Var,
}

#[derive(Clone, Debug)]
pub struct Forward {
    pub cc: ViewForward,
    pub mlo: ViewForward,
    pub cc_attention: AttentionVars,
    pub mlo_attention: AttentionVars,
}

impl Forward {
    pub fn view(&self, v: View) -> &ViewForward {
        match v {
            View::Cc => &self.cc,
            View::Mlo => &self.mlo,
        }
    }

    /// Attention of the direction whose queries come from `v`.
    pub fn attention(&self, v: View) -> &AttentionVars {
        match v {
            View::Cc => &self.cc_attention,
            View::Mlo => &self.mlo_attention,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub objectness: f64,
    pub classification: f64,
    pub box_regression: f64,
    pub total: f64,
}

/// Detections of one view before and after NMS.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewPrediction {
    pub proposals: Vec<Proposal>,
    /// One detection per proposal, in proposal order.
    pub raw: Vec<Detection>,
    /// Proposal indices surviving NMS, by descending score.
    pub kept: Vec<usize>,
}

impl ViewPrediction {
    pub fn detections(&self) -> Vec<Detection> {
        self.kept.iter().map(|&i| self.raw[i]).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Detector {
    pub config: DetectorConfig,
    pub params: DetectorParams,
    grid: Grid,
}

/// Scores stay strictly inside the unit interval.
fn score_of(logit: f64) -> f64 {
    sigmoid(logit).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl Detector {
    pub fn new(config: DetectorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = DetectorParams::new(&config, seed)?;
        let grid = config.grid()?;
        Ok(Detector { config, params, grid })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    fn bind(&self, tape: &mut Tape) -> Bindings {
        self.params.store.bind(tape)
    }

    fn embed(&self, tape: &mut Tape, bind: &Bindings, img: &SyntheticImage) -> Result<Var> {
        let patches = tape.constant(self.grid.patches(img)?);
        let lin = tape.matmul(patches, bind[self.params.encoder_w])?;
        let lin = tape.add_row(lin, bind[self.params.encoder_b])?;
        Ok(tape.relu(lin))
    }

    fn propose(&self, tape: &mut Tape, bind: &Bindings, emb: Var) -> Result<(Var, Vec<Proposal>, Var)> {
        let obj = tape.matmul(emb, bind[self.params.objectness_w])?;
        let obj = tape.add_row(obj, bind[self.params.objectness_b])?;
        let scores = tape.value(obj).data().to_vec();
        let idx = top_p(&scores, self.config.num_proposals)?;
        let proposals = idx
            .iter()
            .map(|&c| Proposal {
                bbox: self.grid.anchor(c, self.config.anchor_size),
                objectness: scores[c],
                cell: c,
            })
            .collect();
        let gathered = tape.gather_rows(emb, &idx)?;
        let roi = tape.matmul(gathered, bind[self.params.roi_w])?;
        let roi = tape.add_row(roi, bind[self.params.roi_b])?;
        Ok((obj, proposals, roi))
    }

    /// Mass logits and decoded boxes for `P` RoIs.
    ///
    /// With `t = tanh(offsets)`: the center moves by at most one cell and the
    /// size by at most half a cell, and the result is clipped to the image.
    fn head(&self, tape: &mut Tape, bind: &Bindings, fused: Var, boxes: &[BBox]) -> Result<(Var, Var)> {
        let out = tape.matmul(fused, bind[self.params.head_w])?;
        let out = tape.add_row(out, bind[self.params.head_b])?;
        let logits = tape.slice_cols(out, 0, 1)?;
        let raw = tape.slice_cols(out, 1, 5)?;
        let t = tape.tanh(raw);
        let n = boxes.len();
        let s = self.config.cell_size as f64;
        let (w_img, h_img) = (self.grid.width as f64, self.grid.height as f64);
        let column = |tape: &mut Tape, f: &dyn Fn(&BBox) -> f64| {
            Tensor::matrix(n, 1, boxes.iter().map(f).collect()).map(|t| tape.constant(t))
        };
        let mut coords = Vec::with_capacity(4);
        for (axis, extent) in [(0usize, w_img), (1, h_img)] {
            let c0 = column(tape, &|b: &BBox| if axis == 0 { b.center().0 } else { b.center().1 })?;
            let w0 = column(tape, &|b: &BBox| if axis == 0 { b.width() } else { b.height() })?;
            let tc = tape.slice_cols(t, axis, axis + 1)?;
            let tw = tape.slice_cols(t, axis + 2, axis + 3)?;
            let shift = tape.mul_scalar(tc, s);
            let c = tape.add(c0, shift)?;
            let c = tape.clamp(c, 0.0, extent);
            let grow = tape.mul_scalar(tw, s / 2.0);
            let w = tape.add(w0, grow)?;
            let half = tape.mul_scalar(w, 0.5);
            let lo = tape.sub(c, half)?;
            let hi = tape.add(c, half)?;
            coords.push((tape.clamp(lo, 0.0, extent), tape.clamp(hi, 0.0, extent)));
        }
        let decoded = tape.concat_cols(&[coords[0].0, coords[1].0, coords[0].1, coords[1].1])?;
        Ok((logits, decoded))
    }

    /// Full forward pass of both views with the given fusion weights.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        bind: &Bindings,
        weights: &FusionWeights,
        cc: &SyntheticImage,
        mlo: &SyntheticImage,
    ) -> Result<Forward> {
        let mut stage = |img: &SyntheticImage| -> Result<(Var, Vec<Proposal>, Var, Vec<[f64; 2]>)> {
            let emb = self.embed(tape, bind, img)?;
            let (obj, props, roi) = self.propose(tape, bind, emb)?;
            let centers = props
                .iter()
                .map(|p| {
                    let (cx, cy) = p.bbox.center();
                    [cx / self.grid.width as f64, cy / self.grid.height as f64]
                })
                .collect();
            Ok((obj, props, roi, centers))
        };
        let (cc_obj, cc_props, cc_roi, cc_centers) = stage(cc)?;
        let (mlo_obj, mlo_props, mlo_roi, mlo_centers) = stage(mlo)?;
        let fused = bidirectional_fuse(
            tape,
            bind,
            weights,
            &self.config.fusion,
            ViewInput {
                features: cc_roi,
                centers: &cc_centers,
            },
            ViewInput {
                features: mlo_roi,
                centers: &mlo_centers,
            },
        )?;
        let mut finish = |obj, props: Vec<Proposal>, roi, fused_var| -> Result<ViewForward> {
            let boxes: Vec<BBox> = props.iter().map(|p| p.bbox).collect();
            let (logits, decoded) = self.head(tape, bind, fused_var, &boxes)?;
            Ok(ViewForward {
                objectness: obj,
                proposals: props,
                roi,
                fused: fused_var,
                logits,
                boxes: decoded,
            })
        };
        let cc_view = finish(cc_obj, cc_props, cc_roi, fused.cc)?;
        let mlo_view = finish(mlo_obj, mlo_props, mlo_roi, fused.mlo)?;
        Ok(Forward {
            cc: cc_view,
            mlo: mlo_view,
            cc_attention: fused.cc_attention,
            mlo_attention: fused.mlo_attention,
        })
    }

    /// Binds the parameters on `tape` and runs the forward pass.
    pub fn forward(&self, tape: &mut Tape, study: &StudyPair) -> Result<(Bindings, Forward)> {
        let bind = self.bind(tape);
        let fwd = self.forward_with(tape, &bind, &self.params.fusion, &study.cc.image, &study.mlo.image)?;
        Ok((bind, fwd))
    }

    /// Training loss of a forward pass, summed over both views.
    pub fn loss(&self, tape: &mut Tape, fwd: &Forward, study: &StudyPair) -> Result<(Var, LossComponents)> {
        let cfg = &self.config;
        let anchors: Vec<BBox> = (0..self.grid.n_cells())
            .map(|c| self.grid.anchor(c, cfg.anchor_size))
            .collect();
        let mut terms = Vec::new();
        let mut parts = LossComponents::default();
        for v in View::BOTH {
            let vf = fwd.view(v);
            let gts = &study.view(v).boxes;

            let a = assign_targets(&anchors, gts, cfg.positive_iou, cfg.negative_iou)?;
            if let Some(l) = focal_loss_tape(tape, vf.objectness, &a.labels, cfg.focal_alpha, cfg.focal_gamma)? {
                parts.objectness += tape.value(l).item();
                terms.push(l);
            }

            let boxes: Vec<BBox> = vf.proposals.iter().map(|p| p.bbox).collect();
            let a = assign_targets(&boxes, gts, cfg.positive_iou, cfg.negative_iou)?;
            if let Some(l) = focal_loss_tape(tape, vf.logits, &a.labels, cfg.focal_alpha, cfg.focal_gamma)? {
                parts.classification += tape.value(l).item();
                terms.push(l);
            }
            let (rows, matched): (Vec<usize>, Vec<BBox>) = a.positives().map(|(i, j)| (i, gts[j])).unzip();
            if !rows.is_empty() {
                let pred = tape.gather_rows(vf.boxes, &rows)?;
                let l = diou_loss_tape(tape, pred, &matched)?;
                parts.box_regression += tape.value(l).item();
                terms.push(l);
            }
        }
        let mut total = tape.constant(Tensor::scalar(0.0));
        for t in terms {
            total = tape.add(total, t)?;
        }
        parts.total = tape.value(total).item();
        Ok((total, parts))
    }

    /// Loss and parameter gradients (stored on the parameters) for one study.
    pub fn compute_gradients(&mut self, study: &StudyPair) -> Result<LossComponents> {
        let mut tape = Tape::new();
        let (bind, fwd) = self.forward(&mut tape, study)?;
        let (total, parts) = self.loss(&mut tape, &fwd, study)?;
        let grads = tape.gradients(total)?;
        self.params.store.zero_grad();
        self.params.store.absorb(&grads, &bind);
        Ok(parts)
    }

    /// One Adam update on one study; both views share every parameter.
    pub fn train_step(&mut self, study: &StudyPair, adam: &mut AdamState) -> Result<LossComponents> {
        let parts = self.compute_gradients(study)?;
        adam.step(&mut self.params.store);
        Ok(parts)
    }

    pub fn new_optimizer(&self, config: AdamConfig) -> AdamState {
        AdamState::new(&self.params.store, config)
    }

    fn view_prediction(&self, tape: &Tape, vf: &ViewForward) -> Result<ViewPrediction> {
        let logits = tape.value(vf.logits).data();
        let boxes = tape.value(vf.boxes);
        let raw: Vec<Detection> = (0..vf.proposals.len())
            .map(|i| {
                let r = boxes.row(i);
                Detection::new(BBox::new(r[0], r[1], r[2], r[3]), score_of(logits[i]))
            })
            .collect();
        let kept = nms_indices(&raw, self.config.nms_iou)?;
        Ok(ViewPrediction {
            proposals: vf.proposals.clone(),
            raw,
            kept,
        })
    }

    /// Predictions of both views, with explicit fusion weights.
    pub fn predict_images_with(
        &self,
        weights: &FusionWeights,
        cc: &SyntheticImage,
        mlo: &SyntheticImage,
    ) -> Result<(ViewPrediction, ViewPrediction)> {
        let mut tape = Tape::new();
        let bind = self.bind(&mut tape);
        let fwd = self.forward_with(&mut tape, &bind, weights, cc, mlo)?;
        Ok((self.view_prediction(&tape, &fwd.cc)?, self.view_prediction(&tape, &fwd.mlo)?))
    }

    pub fn predict_full(&self, study: &StudyPair) -> Result<(ViewPrediction, ViewPrediction)> {
        self.predict_images_with(&self.params.fusion, &study.cc.image, &study.mlo.image)
    }

    /// Post-NMS detections `(cc, mlo)`.
    pub fn predict(&self, study: &StudyPair) -> Result<(Vec<Detection>, Vec<Detection>)> {
        let (cc, mlo) = self.predict_full(study)?;
        Ok((cc.detections(), mlo.detections()))
    }

    /// Rectified cell embeddings, `n_cells × d`.
    pub fn encode_image(&self, img: &SyntheticImage) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bind = self.bind(&mut tape);
        let emb = self.embed(&mut tape, &bind, img)?;
        Ok(tape.value(emb).clone().with_requires_grad(false))
    }

    /// Top-`P` proposals of a cell-embedding matrix and their RoI features.
    pub fn generate_proposals(&self, grid_features: &Tensor) -> Result<(Vec<Proposal>, RoISet)> {
        let mut tape = Tape::new();
        let bind = self.bind(&mut tape);
        let emb = tape.constant(grid_features.clone());
        let (_, props, roi) = self.propose(&mut tape, &bind, emb)?;
        let set = RoISet::new(
            tape.value(roi).clone().with_requires_grad(false),
            props.iter().map(|p| p.bbox).collect(),
            self.grid.width as f64,
            self.grid.height as f64,
        )?;
        Ok((props, set))
    }

    /// Pre-NMS detections for a fused RoI set, one per RoI.
    pub fn roi_head(&self, fused: &RoISet) -> Result<Vec<Detection>> {
        let mut tape = Tape::new();
        let bind = self.bind(&mut tape);
        let f = tape.constant(fused.features.clone());
        let (logits, boxes) = self.head(&mut tape, &bind, f, &fused.boxes)?;
        let l = tape.value(logits).data();
        let b = tape.value(boxes);
        Ok((0..fused.len())
            .map(|i| {
                let r = b.row(i);
                Detection::new(BBox::new(r[0], r[1], r[2], r[3]), score_of(l[i]))
            })
            .collect())
    }

    /// Parameters, optional optimizer state and a progress counter.
    pub fn save(&self, path: &Path, adam: Option<&AdamState>, epochs_done: u64) -> Result<()> {
        let mut entries = store_entries(&self.params.store);
        if let Some(a) = adam {
            entries.extend(a.export(&self.params.store));
        }
        entries.push(("train.epochs".into(), Tensor::scalar(epochs_done as f64)));
        checkpoint::save(path, &entries)
    }

    /// Restores a checkpoint written by [`Detector::save`] into a detector
    /// built from `config`.
    pub fn load(
        path: &Path,
        config: DetectorConfig,
        adam_config: AdamConfig,
    ) -> Result<(Detector, Option<AdamState>, u64)> {
        let entries = checkpoint::load(path)?;
        let mut det = Detector::new(config, 0)?;
        restore_params(&mut det.params.store, &entries)?;
        let has_adam = entries.iter().any(|(n, _)| n == "adam.step");
        let adam = if has_adam {
            Some(AdamState::import(&det.params.store, adam_config, &entries)?)
        } else {
            None
        };
        let epochs = entries
            .iter()
            .find(|(n, _)| n == "train.epochs")
            .map_or(0, |(_, t)| t.item() as u64);
        Ok((det, adam, epochs))
    }
}
