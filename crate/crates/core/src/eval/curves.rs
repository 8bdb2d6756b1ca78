use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positive = defect. Higher scores are more anomalous.
fn class_counts(labels: &[bool]) -> (u64, u64) {
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    (pos, labels.len() as u64 - pos)
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::shape(
            "labeled scores",
            format!("{} scores vs {} labels", scores.len(), labels.len()),
        ));
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {bad}")));
    }
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass {
            positives: pos as usize,
            negatives: neg as usize,
        });
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Cumulative `(false positives, true positives)` after admitting each
/// distinct score, highest first, starting from `(0, 0)`.
fn count_staircase(scores: &[f64], labels: &[bool]) -> (Vec<f64>, Vec<(u64, u64)>) {
    let order = descending(scores);
    let mut thresholds = vec![f64::INFINITY];
    let mut counts = vec![(0u64, 0u64)];
    let (mut fp, mut tp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(t);
        counts.push((fp, tp));
    }
    (thresholds, counts)
}

/// AUC as the normalized Mann-Whitney U statistic with midranks for ties:
/// the probability that a random defect outscores a random good sample, ties
/// counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of the positives; doubled midranks stay integral
    let mut rank2_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share the midrank (i + 1 + j) / 2
        let mid2 = (i + 1 + j) as u128;
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        rank2_sum += mid2 * tied_pos;
        i = j;
    }
    let (p, n) = (pos as u128, neg as u128);
    let u2 = rank2_sum - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

/// AUC as the trapezoid integral of the ROC staircase. Accumulated in integer
/// counts, so it agrees exactly with [`auc`].
pub fn auc_trapezoid(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let (_, counts) = count_staircase(scores, labels);
    let area2: u128 = counts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) as u128 * (w[1].1 + w[0].1) as u128)
        .sum();
    Ok(area2 as f64 / (2 * pos as u128 * neg as u128) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Samples scoring at or above this value are flagged as defects.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

impl RocPoint {
    pub fn fnr(&self) -> f64 {
        1.0 - self.tpr
    }
}

/// ROC staircase from `(0, 0)` (threshold `+inf`) to `(1, 1)`, one point per
/// distinct score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let (thresholds, counts) = count_staircase(scores, labels);
    let points = thresholds
        .into_iter()
        .zip(counts)
        .map(|(threshold, (fp, tp))| RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        })
        .collect();
    Ok(RocCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub fnr: f64,
}

/// Detection-error trade-off: the ROC points with `FNR = 1 - TPR`.
pub fn det_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<DetPoint>> {
    Ok(roc_curve(scores, labels)?
        .points
        .into_iter()
        .map(|p| DetPoint {
            threshold: p.threshold,
            fpr: p.fpr,
            fnr: p.fnr(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eer {
    pub rate: f64,
    /// Adjacent curve points bracketing the crossing.
    pub below: DetPoint,
    pub above: DetPoint,
}

/// Equal error rate: where FPR meets FNR, linearly interpolated between the
/// two DET points that bracket the crossing.
pub fn eer(scores: &[f64], labels: &[bool]) -> Result<Eer> {
    let det = det_curve(scores, labels)?;
    let i = det
        .iter()
        .position(|p| p.fpr >= p.fnr)
        .expect("the final point has fpr 1 and fnr 0");
    // the first point is (0, 1), so the crossing has a predecessor
    let (a, b) = (det[i - 1], det[i]);
    let da = a.fpr - a.fnr;
    let db = b.fpr - b.fnr;
    let t = -da / (db - da);
    let rate = a.fpr + t * (b.fpr - a.fpr);
    Ok(Eer {
        rate,
        below: a,
        above: b,
    })
}
