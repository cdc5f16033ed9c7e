use serde::{Deserialize, Serialize};

use super::correlation::CorrelationSeries;
use super::motion::{half_window, MotionLabels};
use super::squarewave::SquareWaveModel;
use crate::error::{Error, Result};
use crate::imaging::Direction;

/// The frames of one scan line. Bounds are inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanLineSegment {
    pub line: usize,
    pub first: usize,
    pub last: usize,
    pub direction: Direction,
    pub row: usize,
}

impl ScanLineSegment {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// One segment per moving run long enough to be a scan line. Runs shorter
/// than `jump_frames + 2` are row jumps and are skipped.
pub fn extract_segments(
    labels: &MotionLabels,
    model: &SquareWaveModel,
    start: Direction,
    jump_frames: usize,
) -> Result<Vec<ScanLineSegment>> {
    let all = labels.moving_runs();
    let lines: Vec<(usize, usize)> = all
        .iter()
        .copied()
        .filter(|(a, b)| b - a + 1 >= jump_frames + 2)
        .collect();
    if lines.len() != model.line_count {
        let lengths: Vec<usize> = all.iter().map(|(a, b)| b - a + 1).collect();
        return Err(Error::Structure(format!(
            "model predicts {} scan lines, labels hold {} (moving run lengths {:?})",
            model.line_count,
            lines.len(),
            lengths
        )));
    }
    let mut direction = start;
    Ok(lines
        .into_iter()
        .enumerate()
        .map(|(i, (first, last))| {
            let seg = ScanLineSegment {
                line: i,
                first,
                last,
                direction,
                row: i,
            };
            direction = direction.flipped();
            seg
        })
        .collect())
}

/// Move segment bounds onto the sharpest static→moving (start) and
/// moving→static (end) step of the pair correlation near the bounds implied
/// by the window.
///
/// Windowed labelling widens every moving run by about half a window on
/// each side; the raw pair series still resolves the exact frame where
/// identical paused frames give way to motion.
pub fn snap_segments(
    segments: &[ScanLineSegment],
    series: &CorrelationSeries,
    window: usize,
) -> Vec<ScanLineSegment> {
    let h = half_window(window);
    let reach = h + 2;
    let c = &series.values;
    let frames = c.len() + series.stride;
    let mean = |lo: i64, hi: i64| -> Option<f64> {
        let lo = lo.max(0) as usize;
        let hi = (hi.max(-1) + 1).min(c.len() as i64) as usize;
        (hi > lo).then(|| c[lo..hi].iter().sum::<f64>() / (hi - lo) as f64)
    };
    segments
        .iter()
        .map(|seg| {
            let guess_first = (seg.first + h).min(seg.last);
            let guess_last = seg.last.saturating_sub(h).max(guess_first);
            // first moving frame s: pairs before s-1 static, pair s-1 onwards moving
            let start_score = |s: i64| -> Option<f64> {
                Some(mean(s - 1 - reach as i64, s - 2)? - mean(s - 1, s - 2 + reach as i64)?)
            };
            // last moving frame e: pairs up to e moving, pairs after e static
            let end_score = |e: i64| -> Option<f64> {
                Some(mean(e + 1, e + reach as i64)? - mean(e + 1 - reach as i64, e)?)
            };
            let first = best_near(guess_first, reach, frames, start_score);
            let last = best_near(guess_last, reach, frames, end_score);
            let (first, last) = if first <= last {
                (first, last)
            } else {
                (guess_first, guess_last)
            };
            let (first, last) = if series.stride == 1 {
                settle_on_pauses(first, last, c, reach)
            } else {
                (first, last)
            };
            ScanLineSegment { first, last, ..*seg }
        })
        .collect()
}

/// Pairs this close to the static plateau count as identical frames.
const STATIC_TOL: f64 = 0.02;

/// Make sure the frame before `first` and the frame after `last` are truly
/// paused: identical to their neighbour on the far side and different from
/// the moving frame. An edge frame that moved only a fraction of a step can
/// correlate well enough with the pause to fool the step detector.
fn settle_on_pauses(first: usize, last: usize, c: &[f64], reach: usize) -> (usize, usize) {
    let n = c.len();
    let window = |lo: usize, hi: usize| c[lo.min(n)..hi.min(n)].iter().copied().fold(f64::MIN, f64::max);
    let static_pair = |i: usize, plateau: f64| i < n && c[i] >= plateau - STATIC_TOL;
    let moving_pair = |i: usize, plateau: f64| i < n && c[i] < plateau - STATIC_TOL;

    let plateau = window(first.saturating_sub(2 * reach + 2), first + reach);
    // anchor a = first - 1: pair (a-1, a) static, pair (a, a+1) moving
    let start_ok = |f: usize| f >= 2 && f <= last && static_pair(f - 2, plateau) && moving_pair(f - 1, plateau);
    let first = nearest(first, reach, true, start_ok).unwrap_or(first);

    let plateau = window(last.saturating_sub(reach), last + 2 * reach + 2);
    // anchor b = last + 1: pair (b-1, b) moving, pair (b, b+1) static
    let end_ok = |l: usize| l >= first && moving_pair(l, plateau) && static_pair(l + 1, plateau);
    let last = nearest(last, reach, false, end_ok).unwrap_or(last);
    (first, last)
}

/// `at` itself if it passes, else the closest passing position within
/// `reach`; at equal distance the lower one wins when `lower_first`.
fn nearest(at: usize, reach: usize, lower_first: bool, ok: impl Fn(usize) -> bool) -> Option<usize> {
    if ok(at) {
        return Some(at);
    }
    (1..=reach).find_map(|d| {
        let (lo, hi) = (at.checked_sub(d), Some(at + d));
        let order = if lower_first { [lo, hi] } else { [hi, lo] };
        order.into_iter().flatten().find(|&p| ok(p))
    })
}

/// Position within `reach` of `guess` with the highest score; ties go to the
/// position closest to `guess`, then the earlier one.
fn best_near(
    guess: usize,
    reach: usize,
    frames: usize,
    score: impl Fn(i64) -> Option<f64>,
) -> usize {
    let lo = guess.saturating_sub(reach);
    let hi = (guess + reach).min(frames - 1);
    let mut best = (guess, f64::MIN);
    let mut candidates: Vec<usize> = (lo..=hi).collect();
    candidates.sort_by_key(|&p| (p.abs_diff(guess), p));
    for p in candidates {
        if let Some(s) = score(p as i64) {
            if s > best.1 + 1e-12 {
                best = (p, s);
            }
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stitcher::motion::{classify_motion, LabelSource};

    fn model(lines: usize) -> SquareWaveModel {
        SquareWaveModel {
            period: 10,
            on_frames: 5,
            phase: 0,
            line_count: lines,
        }
    }

    fn labels(pattern: &str) -> MotionLabels {
        MotionLabels {
            moving: pattern.chars().map(|c| c == '1').collect(),
            source: LabelSource::SquareWaveRefined,
        }
    }

    #[test]
    fn two_lines_alternate() {
        let segs =
            extract_segments(&labels("0011111100011111100"), &model(2), Direction::PlusX, 3)
                .unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].direction, Direction::PlusX);
        assert_eq!(segs[1].direction, Direction::MinusX);
        assert_eq!((segs[1].first, segs[1].last, segs[1].row), (11, 16, 1));
    }

    #[test]
    fn jump_runs_excluded() {
        let l = labels("001111111000111000111111100011100011111110");
        let segs = extract_segments(&l, &model(3), Direction::PlusX, 3).unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[2].direction, Direction::PlusX);
    }

    #[test]
    fn single_line_keeps_start_direction() {
        let segs = extract_segments(&labels("0111110"), &model(1), Direction::MinusX, 3).unwrap();
        assert_eq!(segs[0].direction, Direction::MinusX);
    }

    #[test]
    fn count_mismatch_is_structural() {
        let err = extract_segments(&labels("0111110"), &model(2), Direction::PlusX, 3).unwrap_err();
        assert!(matches!(err, Error::Structure(ref m) if m.contains("[5]")), "{err}");
    }

    #[test]
    fn snapping_recovers_exact_bounds() {
        // paused 0..=9, moving 10..=29, paused 30..=39
        let mut c = vec![1.0; 39];
        for (i, v) in c.iter_mut().enumerate() {
            if (9..=29).contains(&i) {
                *v = 0.2 + 0.01 * (i % 3) as f64;
            }
        }
        let series = CorrelationSeries { values: c, stride: 1 };
        let raw = classify_motion(&series, 5, 0.985).unwrap();
        let runs = raw.moving_runs();
        assert_eq!(runs, vec![(8, 31)]);
        let seg = ScanLineSegment {
            line: 0,
            first: 8,
            last: 31,
            direction: Direction::PlusX,
            row: 0,
        };
        let snapped = snap_segments(&[seg], &series, 5);
        assert_eq!((snapped[0].first, snapped[0].last), (10, 29));
    }

    #[test]
    fn partial_edge_moves_stay_in_the_line() {
        // frames 15..=20 move; 15 and 20 are partial steps that still
        // correlate fairly well with the pause
        let mut c = vec![1.0; 40];
        for (i, v) in [(14, 0.45), (15, 0.1), (16, 0.05), (17, 0.1), (18, 0.08), (19, 0.0), (20, 0.40)] {
            c[i] = v;
        }
        let series = CorrelationSeries { values: c, stride: 1 };
        let seg = ScanLineSegment {
            line: 0,
            first: 14,
            last: 21,
            direction: Direction::PlusX,
            row: 0,
        };
        let snapped = snap_segments(&[seg], &series, 5);
        assert_eq!((snapped[0].first, snapped[0].last), (15, 20));
    }

    #[test]
    fn snapping_keeps_guess_on_flat_series() {
        let series = CorrelationSeries {
            values: vec![1.0; 39],
            stride: 1,
        };
        let seg = ScanLineSegment {
            line: 0,
            first: 8,
            last: 31,
            direction: Direction::PlusX,
            row: 0,
        };
        let snapped = snap_segments(&[seg], &series, 5);
        assert_eq!((snapped[0].first, snapped[0].last), (10, 29));
    }
}
