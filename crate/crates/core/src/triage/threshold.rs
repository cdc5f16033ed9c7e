use serde::{Deserialize, Serialize};

use super::aggregate::Decision;
use crate::error::{Error, Result};

pub const DEFAULT_TARGET_RATE: f64 = 0.15;

/// `0, 1/(n-1), …, 1`; the default grid has 101 points.
pub fn threshold_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriageDecision {
    pub decision: Decision,
    pub threshold: f64,
    /// `None` when the decision is indeterminate.
    pub outcome: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Thresholded {
    pub decisions: Vec<TriageDecision>,
    pub indeterminate_fraction: f64,
}

impl Thresholded {
    pub fn determinate(&self) -> impl Iterator<Item = &Decision> {
        self.decisions.iter().filter(|d| d.outcome.is_some()).map(|d| &d.decision)
    }
}

/// Mark decisions with confidence below `theta` as indeterminate.
pub fn apply_threshold(decisions: &[Decision], theta: f64) -> Thresholded {
    let decisions: Vec<TriageDecision> = decisions
        .iter()
        .map(|d| TriageDecision {
            outcome: (d.confidence >= theta).then_some(d.class),
            decision: d.clone(),
            threshold: theta,
        })
        .collect();
    let indeterminate = decisions.iter().filter(|d| d.outcome.is_none()).count();
    let indeterminate_fraction = if decisions.is_empty() {
        0.0
    } else {
        indeterminate as f64 / decisions.len() as f64
    };
    Thresholded {
        decisions,
        indeterminate_fraction,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    /// `None` where no decision stays determinate.
    pub accuracy: Option<f64>,
    pub indeterminate_fraction: f64,
    pub determinate: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
    pub target_rate: f64,
    /// Smallest grid threshold reaching the target indeterminate rate.
    pub theta_star: Option<f64>,
}

impl SweepCurve {
    pub fn point_at(&self, theta: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.threshold == theta)
    }

    pub fn operating_point(&self) -> Option<&SweepPoint> {
        self.theta_star.and_then(|t| self.point_at(t))
    }
}

/// Accuracy and indeterminate fraction at every grid threshold. Sorting the
/// confidences once makes each point a binary search.
pub fn sweep(decisions: &[Decision], grid: &[f64], target_rate: f64) -> Result<SweepCurve> {
    if decisions.is_empty() {
        return Err(Error::Metric("sweep over an empty decision set".into()));
    }
    let mut scored: Vec<(f64, bool)> = Vec::with_capacity(decisions.len());
    for d in decisions {
        let ok = d
            .is_correct()
            .ok_or_else(|| Error::Metric(format!("{} has no true label", d.core_id)))?;
        scored.push((d.confidence, ok));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    // correct_from[i]: correct decisions among scored[i..]
    let mut correct_from = vec![0usize; scored.len() + 1];
    for i in (0..scored.len()).rev() {
        correct_from[i] = correct_from[i + 1] + scored[i].1 as usize;
    }
    let n = scored.len();
    let points: Vec<SweepPoint> = grid
        .iter()
        .map(|&theta| {
            let below = scored.partition_point(|s| s.0 < theta);
            let det = n - below;
            SweepPoint {
                threshold: theta,
                accuracy: (det > 0).then(|| correct_from[below] as f64 / det as f64),
                indeterminate_fraction: below as f64 / n as f64,
                determinate: det,
            }
        })
        .collect();
    let theta_star = points
        .iter()
        .filter(|p| p.indeterminate_fraction >= target_rate)
        .map(|p| p.threshold)
        .min_by(f64::total_cmp);
    Ok(SweepCurve {
        points,
        target_rate,
        theta_star,
    })
}
