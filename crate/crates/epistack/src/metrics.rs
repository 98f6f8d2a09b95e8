//! Binary-classifier evaluation: rank AUC, Gini, log loss, MSE,
//! sensitivity/specificity at a threshold, F1-optimal threshold search and
//! ROC point emission.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("scores and labels have different lengths ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("labels must be 0 or 1, found {0}")]
    BadLabel(u8),
    #[error("rank metrics need both classes present")]
    SingleClass,
    #[error("no positive labels present")]
    NoPositives,
    #[error("empty input")]
    Empty,
}

/// Paired scores and 0/1 labels. Scores are case probabilities.
#[derive(Debug, Clone)]
pub struct ScoredLabels<F: Scalar> {
    scores: Vec<F>,
    labels: Vec<u8>,
}

impl<F: Scalar> ScoredLabels<F> {
    pub fn new(scores: Vec<F>, labels: Vec<u8>) -> Result<Self, MetricsError> {
        if scores.len() != labels.len() {
            return Err(MetricsError::LengthMismatch {
                scores: scores.len(),
                labels: labels.len(),
            });
        }
        if scores.is_empty() {
            return Err(MetricsError::Empty);
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(MetricsError::BadLabel(bad));
        }
        Ok(ScoredLabels { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[F] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (pos, self.labels.len() - pos)
    }
}

/// Rank-statistic AUC with average ranks for ties: pool the scores, rank them
/// ascending, and normalise the positive-rank sum by the pair count. Equals
/// the probability that a random positive outranks a random negative, ties
/// crediting one half.
pub fn auc_rank<F: Scalar>(sl: &ScoredLabels<F>) -> Result<f64, MetricsError> {
    let (n_pos, n_neg) = sl.class_counts();
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let n = sl.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        sl.scores[a]
            .partial_cmp(&sl.scores[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    // average ranks across tied runs
    let mut rank = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sl.scores[order[j + 1]] == sl.scores[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for k in i..=j {
            rank[order[k]] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = sl
        .labels
        .iter()
        .zip(&rank)
        .filter(|(&l, _)| l == 1)
        .map(|(_, &r)| r)
        .sum();
    let n1 = n_pos as f64;
    let n2 = n_neg as f64;
    Ok((rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n2))
}

/// Gini coefficient of a ranking: `2 * AUC - 1`.
pub fn gini(auc: f64) -> f64 {
    2.0 * auc - 1.0
}

pub const LOGLOSS_CLAMP: f64 = 1e-15;

/// Mean negative log likelihood of the labels under the scores, with scores
/// clamped away from 0 and 1.
pub fn logloss<F: Scalar>(sl: &ScoredLabels<F>) -> f64 {
    logloss_clamped(sl, LOGLOSS_CLAMP)
}

pub fn logloss_clamped<F: Scalar>(sl: &ScoredLabels<F>, clamp: f64) -> f64 {
    let n = sl.len() as f64;
    let sum: f64 = sl
        .scores
        .iter()
        .zip(&sl.labels)
        .map(|(&s, &l)| {
            let p = s.to_f64_lossy().clamp(clamp, 1.0 - clamp);
            if l == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    sum / n
}

/// Mean squared difference between labels and scores.
pub fn mse<F: Scalar>(sl: &ScoredLabels<F>) -> f64 {
    let n = sl.len() as f64;
    sl.scores
        .iter()
        .zip(&sl.labels)
        .map(|(&s, &l)| (l as f64 - s.to_f64_lossy()).powi(2))
        .sum::<f64>()
        / n
}

/// Sensitivity and specificity at a threshold; score >= threshold predicts
/// positive. A side with no members comes back as `None` rather than 0.
pub fn confusion_at<F: Scalar>(sl: &ScoredLabels<F>, threshold: f64) -> (Option<f64>, Option<f64>) {
    let thr = F::from_f64_lossy(threshold);
    let (mut tp, mut fn_, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in sl.scores.iter().zip(&sl.labels) {
        let predicted_pos = s >= thr;
        match (l, predicted_pos) {
            (1, true) => tp += 1,
            (1, false) => fn_ += 1,
            (0, false) => tn += 1,
            (0, true) => fp += 1,
            _ => unreachable!(),
        }
    }
    let sens = (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64);
    let spec = (tn + fp > 0).then(|| tn as f64 / (tn + fp) as f64);
    (sens, spec)
}

/// Threshold maximising F1, scanned over midpoints of consecutive distinct
/// scores plus the endpoints 0 and 1. Ties resolve to the smallest threshold.
pub fn optimal_f1_threshold<F: Scalar>(sl: &ScoredLabels<F>) -> Result<(f64, f64), MetricsError> {
    let (n_pos, _) = sl.class_counts();
    if n_pos == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut distinct: Vec<f64> = sl.scores.iter().map(|s| s.to_f64_lossy()).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    let mut candidates = vec![0.0, 1.0];
    candidates.extend(distinct.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut best = (0.0, -1.0);
    for &thr in &candidates {
        let t = F::from_f64_lossy(thr);
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&s, &l) in sl.scores.iter().zip(&sl.labels) {
            match (l, s >= t) {
                (1, true) => tp += 1,
                (0, true) => fp += 1,
                (1, false) => fn_ += 1,
                _ => {}
            }
        }
        let f1 = if 2 * tp + fp + fn_ == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        };
        if f1 > best.1 {
            best = (thr, f1);
        }
    }
    Ok(best)
}

/// ROC points from (0,0) to (1,1), one step per distinct score, descending.
/// Tied scores advance both coordinates at once, so the trapezoidal area under
/// the points matches [`auc_rank`].
pub fn roc_points<F: Scalar>(sl: &ScoredLabels<F>) -> Result<Vec<(f64, f64)>, MetricsError> {
    let (n_pos, n_neg) = sl.class_counts();
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..sl.len()).collect();
    order.sort_by(|&a, &b| {
        sl.scores[b]
            .partial_cmp(&sl.scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut points = Vec::with_capacity(sl.len() + 1);
    points.push((0.0, 0.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let score = sl.scores[order[i]];
        while i < order.len() && sl.scores[order[i]] == score {
            if sl.labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    Ok(points)
}

/// Area under a piecewise-linear ROC path.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Full evaluation of scored predictions at a decision threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub gini: f64,
    pub logloss: f64,
    pub auc: f64,
    pub mse: f64,
    pub roc_points: Vec<(f64, f64)>,
}

pub fn evaluate<F: Scalar>(sl: &ScoredLabels<F>, threshold: f64) -> Result<EvalReport, MetricsError> {
    let auc = auc_rank(sl)?;
    let (sens, spec) = confusion_at(sl, threshold);
    Ok(EvalReport {
        threshold,
        sensitivity: sens.ok_or(MetricsError::SingleClass)?,
        specificity: spec.ok_or(MetricsError::SingleClass)?,
        gini: gini(auc),
        logloss: logloss(sl),
        auc,
        mse: mse(sl),
        roc_points: roc_points(sl)?,
    })
}

/// Write ROC points as a two-column CSV.
pub fn write_roc_csv(points: &[(f64, f64)], w: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "fpr,tpr")?;
    for (fpr, tpr) in points {
        writeln!(w, "{fpr},{tpr}")?;
    }
    Ok(())
}
