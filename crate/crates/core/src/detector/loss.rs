//! Focal and distance-IoU losses, as plain values and as tape expressions.

use crate::autograd::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{iou_unchecked, BBox};

use super::assign::Label;

/// Probability margin used before taking logs on the tape.
pub const PROB_MARGIN: f64 = 1e-7;

/// Mean of `-alpha * (1 - p_t)^gamma * ln(p_t)` where `p_t = p` for positives
/// and `1 - p` for negatives. `alpha` weighs every sample equally.
pub fn focal_loss(scores: &[f64], labels: &[bool], alpha: f64, gamma: f64) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(
            "labels",
            format!("{} labels for {} scores", labels.len(), scores.len()),
        ));
    }
    if scores.is_empty() {
        return Err(Error::invalid("scores", "no samples"));
    }
    let mut total = 0.0;
    for (&p, &y) in scores.iter().zip(labels) {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid("scores", format!("{p} outside (0, 1)")));
        }
        let pt = if y { p } else { 1.0 - p };
        total += -alpha * (1.0 - pt).powf(gamma) * pt.ln();
    }
    Ok(total / scores.len() as f64)
}

/// Focal loss of `sigmoid(logits)` over the non-ignored rows of an `N×1`
/// logit column. Returns `None` when every row is ignored.
pub fn focal_loss_tape(
    tape: &mut Tape,
    logits: Var,
    labels: &[Label],
    alpha: f64,
    gamma: f64,
) -> Result<Option<Var>> {
    let rows = tape.value(logits).rows();
    if rows != labels.len() {
        return Err(Error::invalid(
            "labels",
            format!("{} labels for {rows} logits", labels.len()),
        ));
    }
    let (idx, ys): (Vec<usize>, Vec<f64>) = labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match l {
            Label::Positive => Some((i, 1.0)),
            Label::Negative => Some((i, 0.0)),
            Label::Ignore => None,
        })
        .unzip();
    if idx.is_empty() {
        return Ok(None);
    }
    let n = idx.len();
    let z = tape.gather_rows(logits, &idx)?;
    let p = tape.sigmoid(z);
    let p = tape.clamp(p, PROB_MARGIN, 1.0 - PROB_MARGIN);
    let sign = tape.constant(Tensor::matrix(n, 1, ys.iter().map(|y| 2.0 * y - 1.0).collect())?);
    let offset = tape.constant(Tensor::matrix(n, 1, ys.iter().map(|y| 1.0 - y).collect())?);
    let signed = tape.mul(p, sign)?;
    let pt = tape.add(signed, offset)?;
    let neg = tape.mul_scalar(pt, -1.0);
    let one_minus = tape.add_scalar(neg, 1.0);
    let weight = tape.pow_scalar(one_minus, gamma);
    let log_pt = tape.log(pt);
    let terms = tape.mul(weight, log_pt)?;
    let mean = tape.mean(terms);
    Ok(Some(tape.mul_scalar(mean, -alpha)))
}

/// `1 - IoU + |c_p - c_g|^2 / diag^2` with `diag` the diagonal of the
/// smallest box enclosing both.
pub fn diou_loss(pred: &BBox, gt: &BBox) -> Result<f64> {
    pred.validate()?;
    gt.validate()?;
    let (pcx, pcy) = pred.center();
    let (gcx, gcy) = gt.center();
    let rho2 = (pcx - gcx).powi(2) + (pcy - gcy).powi(2);
    let c = pred.enclosing(gt);
    let c2 = c.width().powi(2) + c.height().powi(2);
    Ok(1.0 - iou_unchecked(pred, gt) + rho2 / c2)
}

/// Mean distance-IoU loss between the rows of an `N×4` box expression and
/// fixed gt boxes.
pub fn diou_loss_tape(tape: &mut Tape, pred: Var, gts: &[BBox]) -> Result<Var> {
    let n = tape.value(pred).rows();
    if n != gts.len() || tape.value(pred).cols() != 4 {
        return Err(Error::ShapeMismatch {
            op: "diou_loss_tape",
            left: tape.shape(pred).to_vec(),
            right: vec![gts.len(), 4],
        });
    }
    for g in gts {
        g.validate()?;
    }
    let col = |tape: &mut Tape, j: usize| tape.slice_cols(pred, j, j + 1);
    let (px1, py1, px2, py2) = (col(tape, 0)?, col(tape, 1)?, col(tape, 2)?, col(tape, 3)?);
    let gcol = |tape: &mut Tape, f: fn(&BBox) -> f64| {
        let data = gts.iter().map(f).collect();
        Tensor::matrix(n, 1, data).map(|t| tape.constant(t))
    };
    let gx1 = gcol(tape, |b| b.x1)?;
    let gy1 = gcol(tape, |b| b.y1)?;
    let gx2 = gcol(tape, |b| b.x2)?;
    let gy2 = gcol(tape, |b| b.y2)?;
    let g_area = gcol(tape, BBox::area)?;
    let g_cx = gcol(tape, |b| b.center().0)?;
    let g_cy = gcol(tape, |b| b.center().1)?;

    let overlap = |tape: &mut Tape, a1: Var, a2: Var, b1: Var, b2: Var| -> Result<Var> {
        let hi = tape.minimum(a2, b2)?;
        let lo = tape.maximum(a1, b1)?;
        let d = tape.sub(hi, lo)?;
        Ok(tape.relu(d))
    };
    let iw = overlap(tape, px1, px2, gx1, gx2)?;
    let ih = overlap(tape, py1, py2, gy1, gy2)?;
    let inter = tape.mul(iw, ih)?;
    let pw = tape.sub(px2, px1)?;
    let ph = tape.sub(py2, py1)?;
    let p_area = tape.mul(pw, ph)?;
    let areas = tape.add(p_area, g_area)?;
    let union = tape.sub(areas, inter)?;
    let iou = tape.div(inter, union)?;

    let center = |tape: &mut Tape, a: Var, b: Var| -> Result<Var> {
        let s = tape.add(a, b)?;
        Ok(tape.mul_scalar(s, 0.5))
    };
    let sq_dist = |tape: &mut Tape, a: Var, b: Var| -> Result<Var> {
        let d = tape.sub(a, b)?;
        tape.mul(d, d)
    };
    let pcx = center(tape, px1, px2)?;
    let pcy = center(tape, py1, py2)?;
    let dx2 = sq_dist(tape, pcx, g_cx)?;
    let dy2 = sq_dist(tape, pcy, g_cy)?;
    let rho2 = tape.add(dx2, dy2)?;

    let span = |tape: &mut Tape, a1: Var, a2: Var, b1: Var, b2: Var| -> Result<Var> {
        let hi = tape.maximum(a2, b2)?;
        let lo = tape.minimum(a1, b1)?;
        let d = tape.sub(hi, lo)?;
        tape.mul(d, d)
    };
    let cw2 = span(tape, px1, px2, gx1, gx2)?;
    let ch2 = span(tape, py1, py2, gy1, gy2)?;
    let c2 = tape.add(cw2, ch2)?;
    let penalty = tape.div(rho2, c2)?;

    let neg_iou = tape.mul_scalar(iou, -1.0);
    let base = tape.add_scalar(neg_iou, 1.0);
    let per_box = tape.add(base, penalty)?;
    Ok(tape.mean(per_box))
}
