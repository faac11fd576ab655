use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::annotate::AnnotationRecord;
use crate::error::{Error, Result};
use crate::eval::PredictionRecord;

/// Intersection over union of two `[x_min, y_min, width, height]` boxes.
pub fn iou(a: &[f64; 4], b: &[f64; 4]) -> Result<f64> {
    for bx in [a, b] {
        if !(bx[2] > 0.0 && bx[3] > 0.0) || bx.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "box {bx:?} must be finite with positive extents"
            )));
        }
    }
    let ix = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let iy = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    if ix <= 0.0 || iy <= 0.0 {
        return Ok(0.0);
    }
    let inter = ix * iy;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Prediction indices in processing order: descending score, ties by index.
    pub order: Vec<usize>,
    /// True-positive flag per prediction, indexed like the input.
    pub pred_tp: Vec<bool>,
    /// Whether each ground-truth record was claimed, indexed like the input.
    pub gt_matched: Vec<bool>,
}

impl MatchResult {
    /// TP flags in score order.
    pub fn flags_in_order(&self) -> Vec<bool> {
        self.order.iter().map(|&i| self.pred_tp[i]).collect()
    }

    pub fn true_positives(&self) -> usize {
        self.pred_tp.iter().filter(|t| **t).count()
    }
}

/// Greedy one-to-one matching by confidence within each (frame, label).
/// Every prediction must reference a frame present in `gts`.
pub fn match_predictions(
    preds: &[PredictionRecord],
    gts: &[AnnotationRecord],
    iou_threshold: f64,
) -> Result<MatchResult> {
    let frames: BTreeSet<&str> = gts.iter().map(|g| g.frame_id.as_str()).collect();
    match_within(preds, gts, &frames, iou_threshold)
}

/// As [`match_predictions`], but predictions may also reference any frame in
/// `known_frames`, such as rendered frames with no visible target.
pub fn match_predictions_in(
    preds: &[PredictionRecord],
    gts: &[AnnotationRecord],
    known_frames: &BTreeSet<String>,
    iou_threshold: f64,
) -> Result<MatchResult> {
    let frames: BTreeSet<&str> = known_frames
        .iter()
        .map(String::as_str)
        .chain(gts.iter().map(|g| g.frame_id.as_str()))
        .collect();
    match_within(preds, gts, &frames, iou_threshold)
}

fn match_within(
    preds: &[PredictionRecord],
    gts: &[AnnotationRecord],
    frames: &BTreeSet<&str>,
    iou_threshold: f64,
) -> Result<MatchResult> {
    let unknown: BTreeSet<&str> = preds
        .iter()
        .map(|p| p.frame_id.as_str())
        .filter(|f| !frames.contains(f))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownFrames(unknown.into_iter().map(str::to_owned).collect()));
    }

    let mut by_key: HashMap<(&str, &str), Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_key.entry((&g.frame_id, &g.object_label)).or_default().push(i);
    }
    let gt_boxes: Vec<[f64; 4]> = gts.iter().map(AnnotationRecord::corner_box).collect();

    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));

    let mut pred_tp = vec![false; preds.len()];
    let mut gt_matched = vec![false; gts.len()];
    for &p in &order {
        let pred = &preds[p];
        let Some(candidates) = by_key.get(&(pred.frame_id.as_str(), pred.label.as_str())) else {
            continue;
        };
        let mut best: Option<(usize, f64)> = None;
        for &g in candidates {
            if gt_matched[g] {
                continue;
            }
            let o = iou(&pred.bbox, &gt_boxes[g])?;
            if best.is_none_or(|(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        if let Some((g, o)) = best {
            if o >= iou_threshold {
                pred_tp[p] = true;
                gt_matched[g] = true;
            }
        }
    }
    Ok(MatchResult {
        order,
        pred_tp,
        gt_matched,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMethod {
    /// Area under the monotone precision envelope at every recall step.
    #[default]
    AllPoint,
    /// Mean interpolated precision at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

/// All-point average precision of TP/FP flags sorted by descending score.
/// `None` when there is no ground truth.
pub fn average_precision(flags: &[bool], n_gt: usize) -> Option<f64> {
    average_precision_with(flags, n_gt, ApMethod::AllPoint)
}

pub fn average_precision_with(flags: &[bool], n_gt: usize, method: ApMethod) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut recall = Vec::with_capacity(flags.len());
    let mut precision = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (k, &is_tp) in flags.iter().enumerate() {
        tp += usize::from(is_tp);
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    // running max from the right gives the monotone envelope
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let ap = match method {
        ApMethod::AllPoint => {
            let mut prev = 0.0;
            let mut sum = 0.0;
            for (r, p) in recall.iter().zip(&precision) {
                sum += (r - prev) * p;
                prev = *r;
            }
            sum
        }
        ApMethod::ElevenPoint => {
            (0..=10)
                .map(|t| {
                    let t = t as f64 / 10.0;
                    recall
                        .iter()
                        .position(|&r| r >= t - 1e-12)
                        .map_or(0.0, |k| precision[k])
                })
                .sum::<f64>()
                / 11.0
        }
    };
    Some(ap.clamp(0.0, 1.0))
}
