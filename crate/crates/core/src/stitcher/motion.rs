use serde::{Deserialize, Serialize};

use super::correlation::CorrelationSeries;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    RawCorrelation,
    SquareWaveRefined,
}

/// Per-frame moving (`true`) / static (`false`) labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionLabels {
    pub moving: Vec<bool>,
    pub source: LabelSource,
}

impl MotionLabels {
    pub fn len(&self) -> usize {
        self.moving.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moving.is_empty()
    }

    /// Maximal runs of moving frames as inclusive `(first, last)` pairs.
    pub fn moving_runs(&self) -> Vec<(usize, usize)> {
        runs(&self.moving, true)
    }

    pub fn hamming(&self, other: &[bool]) -> usize {
        self.moving.iter().zip(other).filter(|(a, b)| a != b).count()
    }
}

/// Maximal runs of `value` in `labels`, inclusive bounds.
pub(crate) fn runs(labels: &[bool], value: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &l) in labels.iter().enumerate() {
        match (l == value, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, labels.len() - 1));
    }
    out
}

/// Half-width, in pairs, of the averaging window around a frame.
pub fn half_window(window: usize) -> usize {
    (window / 2).max(1)
}

/// Label a frame static when the mean correlation of the pairs inside a
/// `window`-frame neighbourhood reaches `theta_static`.
///
/// Frame `f` averages pairs `f - h ..= f + h - 1` (clipped to the series),
/// i.e. every pair with both frames within `h` of `f`.
pub fn classify_motion(
    series: &CorrelationSeries,
    window: usize,
    theta_static: f64,
) -> Result<MotionLabels> {
    let pairs = series.len();
    if window == 0 || window > pairs {
        return Err(Error::param(format!(
            "window {window} must lie in [1, {pairs}]"
        )));
    }
    let h = half_window(window);
    let mut prefix = Vec::with_capacity(pairs + 1);
    prefix.push(0.0);
    for v in &series.values {
        prefix.push(prefix.last().unwrap() + v);
    }
    // frames beyond the last pair still get the trailing pairs
    let frames = pairs + series.stride;
    let moving = (0..frames)
        .map(|f| {
            let lo = f.saturating_sub(h);
            let hi = (f + h).min(pairs);
            let lo = lo.min(hi.saturating_sub(1));
            let mean = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
            mean < theta_static
        })
        .collect();
    Ok(MotionLabels {
        moving,
        source: LabelSource::RawCorrelation,
    })
}
