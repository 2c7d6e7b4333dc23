use crate::error::Result;
use crate::geometry::{iou_unchecked, BBox};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
    Ignore,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub labels: Vec<Label>,
    /// Gt index regressed by each positive proposal.
    pub matched: Vec<Option<usize>>,
}

impl Assignment {
    pub fn positives(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.matched
            .iter()
            .zip(&self.labels)
            .enumerate()
            .filter(|&(_i, (_m, l))| *l == Label::Positive ).map(|(i, (m, _l))| (i, m.expect("positive has gt")))
    }
}

/// Labels proposals against gt boxes.
///
/// A proposal whose best IoU is at least `pos_iou` is positive for that gt,
/// below `neg_iou` negative, otherwise ignored. Afterwards every gt, in index
/// order, claims its highest-IoU proposal (lowest index on ties) as a
/// positive, provided the overlap is nonzero. Best-gt ties go to the lower gt
/// index.
pub fn assign_targets(
    proposals: &[BBox],
    gts: &[BBox],
    pos_iou: f64,
    neg_iou: f64,
) -> Result<Assignment> {
    for b in proposals.iter().chain(gts) {
        b.validate()?;
    }
    let ious: Vec<Vec<f64>> = proposals
        .iter()
        .map(|p| gts.iter().map(|g| iou_unchecked(p, g)).collect())
        .collect();
    let mut labels = Vec::with_capacity(proposals.len());
    let mut matched = Vec::with_capacity(proposals.len());
    for row in &ious {
        let best = row
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, f64)>, (j, &v)| match acc {
                Some((_, b)) if b >= v => acc,
                _ => Some((j, v)),
            });
        match best {
            Some((j, v)) if v >= pos_iou => {
                labels.push(Label::Positive);
                matched.push(Some(j));
            }
            Some((_, v)) if v >= neg_iou => {
                labels.push(Label::Ignore);
                matched.push(None);
            }
            _ => {
                labels.push(Label::Negative);
                matched.push(None);
            }
        }
    }
    for j in 0..gts.len() {
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in ious.iter().enumerate() {
            if row[j] > 0.0 && best.is_none_or(|(_, b)| row[j] > b) {
                best = Some((i, row[j]));
            }
        }
        if let Some((i, _)) = best {
            labels[i] = Label::Positive;
            matched[i] = Some(j);
        }
    }
    Ok(Assignment { labels, matched })
}
