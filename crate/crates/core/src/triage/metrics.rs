use serde::{Deserialize, Serialize};

use super::aggregate::RepeatSet;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub per_core: Vec<(String, f64)>,
    pub overall: f64,
}

/// Share of a core's three predicted classes that equal their mode.
pub fn core_consistency(set: &RepeatSet) -> f64 {
    let classes: Vec<usize> = set.predictions.iter().map(|p| p.predicted_class).collect();
    let mode_count = classes
        .iter()
        .map(|c| classes.iter().filter(|d| *d == c).count())
        .max()
        .unwrap_or(0);
    mode_count as f64 / classes.len() as f64
}

pub fn consistency(sets: &[RepeatSet]) -> Result<Consistency> {
    if sets.is_empty() {
        return Err(Error::Metric("consistency of zero cores".into()));
    }
    let per_core: Vec<(String, f64)> =
        sets.iter().map(|s| (s.core_id.clone(), core_consistency(s))).collect();
    let overall = per_core.iter().map(|c| c.1).sum::<f64>() / per_core.len() as f64;
    Ok(Consistency { per_core, overall })
}

/// Rows are truth, columns prediction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_count: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.class_count).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }
}

/// Count `(truth, predicted)` pairs.
pub fn confusion(
    pairs: impl IntoIterator<Item = (usize, usize)>,
    class_count: usize,
) -> Result<ConfusionMatrix> {
    let mut counts = vec![vec![0u64; class_count]; class_count];
    let mut any = false;
    for (t, p) in pairs {
        if t >= class_count || p >= class_count {
            return Err(Error::Metric(format!("class ({t}, {p}) outside {class_count} classes")));
        }
        counts[t][p] += 1;
        any = true;
    }
    if !any {
        return Err(Error::Metric("confusion matrix of zero decisions".into()));
    }
    Ok(ConfusionMatrix { class_count, counts })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC over `(is_positive, score)` samples. Thresholds descend through the
/// distinct scores, so tied scores form a single (possibly diagonal) step.
/// The trapezoid area is accumulated in integer units of one
/// positive–negative pair and divided once, which makes it equal the
/// concordance statistic up to a single rounding.
pub fn roc_auc(samples: &[(bool, f64)]) -> Result<RocCurve> {
    if samples.iter().any(|s| !s.1.is_finite()) {
        return Err(Error::Metric("non-finite ROC score".into()));
    }
    let pos = samples.iter().filter(|s| s.0).count() as u64;
    let neg = samples.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("ROC needs both classes among the truths".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the area, in pair units
    let mut area2 = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].1;
        let (mut dtp, mut dfp) = (0u64, 0u64);
        while i < sorted.len() && sorted[i].1 == score {
            if sorted[i].0 {
                dtp += 1;
            } else {
                dfp += 1;
            }
            i += 1;
        }
        area2 += dfp * (2 * tp + dtp);
        tp += dtp;
        fp += dfp;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(RocCurve {
        points,
        auc: area2 as f64 / (2 * pos * neg) as f64,
    })
}
