use serde::{Deserialize, Serialize};

use super::motion::{runs, LabelSource, MotionLabels};
use crate::error::{Error, Result};

/// A periodic moving/static pattern: one moving run of `on_frames` per
/// `period`, the first full run starting at frame `phase`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SquareWaveModel {
    pub period: usize,
    pub on_frames: usize,
    pub phase: usize,
    /// Moving runs the model predicts inside the sequence.
    pub line_count: usize,
}

impl SquareWaveModel {
    pub fn duty(&self) -> f64 {
        self.on_frames as f64 / self.period as f64
    }

    pub fn is_moving(&self, frame: usize) -> bool {
        is_on(frame, self.period, self.on_frames, self.phase)
    }

    pub fn predict(&self, frames: usize) -> Vec<bool> {
        (0..frames).map(|f| self.is_moving(f)).collect()
    }
}

fn is_on(frame: usize, period: usize, on: usize, phase: usize) -> bool {
    (frame as i64 - phase as i64).rem_euclid(period as i64) < on as i64
}

/// Bounds of the coarse grid. Phases are always searched exhaustively.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareWaveSearch {
    pub period_min: usize,
    pub period_max: usize,
    pub duty_min: f64,
    pub duty_max: f64,
    /// Only admit waves that are off at the first and last frame. A scan
    /// that begins and ends at rest cannot otherwise tell a long static run
    /// inside a line from the gap between lines.
    #[serde(default)]
    pub rest_at_ends: bool,
}

impl SquareWaveSearch {
    /// Period within ±20% of `expected_period`, duty within ±0.1.
    pub fn around(expected_period: usize, duty: f64) -> Self {
        let p = expected_period.max(2) as f64;
        SquareWaveSearch {
            period_min: ((0.8 * p).floor() as usize).max(2),
            period_max: (1.2 * p).ceil() as usize,
            duty_min: (duty - 0.1).max(0.0),
            duty_max: (duty + 0.1).min(1.0),
            rest_at_ends: false,
        }
    }

    pub fn with_rest_at_ends(self, rest_at_ends: bool) -> Self {
        SquareWaveSearch { rest_at_ends, ..self }
    }

    /// Bounds estimated from the labels alone: the period is the strongest
    /// autocorrelation lag of the label signal, or the whole sequence when
    /// no repetition is visible.
    pub fn from_labels(labels: &[bool]) -> Self {
        let n = labels.len();
        let moving = labels.iter().filter(|&&m| m).count() as f64 / n.max(1) as f64;
        match label_period(labels) {
            Some(p) => SquareWaveSearch::around(p, moving),
            None => SquareWaveSearch {
                period_min: n.max(2),
                period_max: n.max(2),
                duty_min: (moving - 0.1).max(0.0),
                duty_max: (moving + 0.1).min(1.0),
                rest_at_ends: false,
            },
        }
    }
}

fn label_period(labels: &[bool]) -> Option<usize> {
    let n = labels.len();
    if n < 8 {
        return None;
    }
    let mean = labels.iter().map(|&m| if m { 1.0 } else { -1.0 }).sum::<f64>() / n as f64;
    let x: Vec<f64> = labels
        .iter()
        .map(|&m| if m { 1.0 } else { -1.0 } - mean)
        .collect();
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return None;
    }
    let r = |lag: usize| x.iter().zip(&x[lag..]).map(|(a, b)| a * b).sum::<f64>() / energy;
    let max_lag = (n as f64 * 0.6) as usize;
    let first_negative = (1..=max_lag).find(|&l| r(l) < 0.0)?;
    let (lag, best) = (first_negative..=max_lag)
        .map(|l| (l, r(l)))
        .fold((0, f64::MIN), |acc, (l, v)| if v > acc.1 { (l, v) } else { acc });
    (best >= 0.2).then_some(lag)
}

/// Hamming distance evaluator over prefix sums of the observed labels.
struct Objective {
    prefix: Vec<u32>,
}

impl Objective {
    fn new(labels: &[bool]) -> Self {
        let mut prefix = Vec::with_capacity(labels.len() + 1);
        prefix.push(0u32);
        for &m in labels {
            prefix.push(prefix.last().unwrap() + m as u32);
        }
        Objective { prefix }
    }

    fn frames(&self) -> usize {
        self.prefix.len() - 1
    }

    fn cost(&self, period: usize, on: usize, phase: usize) -> usize {
        let n = self.frames() as i64;
        let total_moving = self.prefix[self.frames()] as i64;
        let (p, on) = (period as i64, on as i64);
        let mut start = phase as i64 % p - p;
        let mut cost = total_moving;
        while start < n {
            let lo = start.max(0);
            let hi = (start + on).min(n);
            if hi > lo {
                let moving = (self.prefix[hi as usize] - self.prefix[lo as usize]) as i64;
                cost += (hi - lo) - 2 * moving;
            }
            start += p;
        }
        cost as usize
    }
}

fn valid(period: usize, on: usize) -> bool {
    period >= 2 && on >= 1 && on < period
}

/// Fit a square wave to raw motion labels by exhaustive search inside
/// `search` followed by unbounded unit-step hill climbing, minimizing the
/// Hamming distance. Returns the model, the refined labels and the distance.
pub fn fit_square_wave(
    labels: &MotionLabels,
    search: &SquareWaveSearch,
) -> Result<(SquareWaveModel, MotionLabels, usize)> {
    let obs = &labels.moving;
    let moving = obs.iter().filter(|&&m| m).count();
    if moving == 0 || moving == obs.len() {
        return Err(Error::Fit(format!(
            "all {} frames labelled {}; use the raw labels instead",
            obs.len(),
            if moving == 0 { "static" } else { "moving" }
        )));
    }
    if search.period_min < 2 || search.period_min > search.period_max {
        return Err(Error::param(format!(
            "empty period range [{}, {}]",
            search.period_min, search.period_max
        )));
    }
    let objective = Objective::new(obs);
    let last = obs.len() - 1;
    let admissible = |p: usize, on: usize, ph: usize| {
        !search.rest_at_ends || !(is_on(0, p, on, ph) || is_on(last, p, on, ph))
    };

    let mut best: Option<(usize, usize, usize, usize)> = None;
    let mut consider = |cost: usize, p: usize, on: usize, ph: usize| {
        if best.map_or(true, |b| cost < b.0) {
            best = Some((cost, p, on, ph));
        }
    };
    for p in search.period_min..=search.period_max {
        let on_lo = ((search.duty_min * p as f64).ceil() as usize).max(1);
        let on_hi = ((search.duty_max * p as f64).floor() as usize).min(p - 1);
        for on in on_lo..=on_hi {
            for ph in (0..p).filter(|&ph| admissible(p, on, ph)) {
                consider(objective.cost(p, on, ph), p, on, ph);
            }
        }
    }
    let (mut cost, mut p, mut on, mut ph) = best.ok_or_else(|| {
        Error::Fit(format!(
            "no admissible (period, duty) in the search bounds {search:?}"
        ))
    })?;

    loop {
        let mut improved = false;
        for (dp, don, dph) in neighbours() {
            let np = p as i64 + dp;
            let non = on as i64 + don;
            if np < 2 || non < 1 || non >= np {
                continue;
            }
            let (np, non) = (np as usize, non as usize);
            let nph = (ph as i64 + dph).rem_euclid(np as i64) as usize;
            debug_assert!(valid(np, non));
            if !admissible(np, non, nph) {
                continue;
            }
            let c = objective.cost(np, non, nph);
            if c < cost {
                (cost, p, on, ph) = (c, np, non, nph);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }

    let predicted: Vec<bool> = (0..obs.len()).map(|f| is_on(f, p, on, ph)).collect();
    let model = SquareWaveModel {
        period: p,
        on_frames: on,
        phase: ph,
        line_count: runs(&predicted, true).len(),
    };
    Ok((
        model,
        MotionLabels {
            moving: predicted,
            source: LabelSource::SquareWaveRefined,
        },
        cost,
    ))
}

fn neighbours() -> impl Iterator<Item = (i64, i64, i64)> {
    (-1..=1)
        .flat_map(|a| (-1..=1).flat_map(move |b| (-1..=1).map(move |c| (a, b, c))))
        .filter(|&d| d != (0, 0, 0))
}
