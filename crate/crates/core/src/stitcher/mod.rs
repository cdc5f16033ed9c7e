//! Scan-structure recovery and mosaic composition from an unlabelled video.
//!
//! The pipeline is: pair correlation → windowed motion labels → square-wave
//! repair → scan-line segments → dead-reckoning composition.

mod compose;
mod correlation;
mod motion;
mod segments;
mod squarewave;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use compose::{compose, ComposeParams, LinePlacement, StitchedSlide};
pub use correlation::{correlation_series, pearson, CentralLuma, CorrelationSeries};
pub use motion::{classify_motion, half_window, LabelSource, MotionLabels};
pub use segments::{extract_segments, snap_segments, ScanLineSegment};
pub use squarewave::{fit_square_wave, SquareWaveModel, SquareWaveSearch};

use crate::error::{Error, Result};
use crate::imaging::{Direction, FrameManifest, FrameSource};
use crate::synthscan::ScanConfig;

pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_THETA_STATIC: f64 = 0.985;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StitchParams {
    pub window: usize,
    pub theta_static: f64,
    pub stride: usize,
    pub refine: bool,
    pub start_direction: Direction,
    pub jump_frames: usize,
    pub step_um: f64,
    pub row_pitch_um: f64,
    /// Centre of the square-wave period search; estimated from the labels
    /// when absent.
    pub expected_period: Option<usize>,
    pub expected_duty: Option<f64>,
    /// Snap segment bounds onto the raw correlation steps.
    pub snap: bool,
}

impl Default for StitchParams {
    fn default() -> Self {
        StitchParams::for_scan(&ScanConfig::default(), None)
    }
}

impl StitchParams {
    /// Parameters matching a scan configuration. With `scan_frames` (scanning
    /// frames per line) the period search is centred on the configured
    /// line period.
    pub fn for_scan(cfg: &ScanConfig, scan_frames: Option<usize>) -> Self {
        let pause = cfg.pause_frames();
        let h = half_window(DEFAULT_WINDOW);
        let (expected_period, expected_duty) = match scan_frames {
            Some(n) => {
                let p = n + 2 * pause + cfg.jump_frames;
                (Some(p), Some((n + 2 * h).min(p) as f64 / p as f64))
            }
            None => (None, None),
        };
        StitchParams {
            window: DEFAULT_WINDOW,
            theta_static: DEFAULT_THETA_STATIC,
            stride: 1,
            refine: true,
            start_direction: cfg.start_direction,
            jump_frames: cfg.jump_frames,
            step_um: cfg.step_um(),
            row_pitch_um: cfg.row_pitch(),
            expected_period,
            expected_duty,
            snap: true,
        }
    }

    /// Square-wave search bounds for raw `labels`. When the labels begin
    /// and end static the fit is held at rest at both ends.
    pub fn square_wave_search(&self, labels: &[bool]) -> SquareWaveSearch {
        let at_rest = matches!((labels.first(), labels.last()), (Some(false), Some(false)));
        let search = match (self.expected_period, self.expected_duty) {
            (Some(p), Some(d)) => SquareWaveSearch::around(p, d),
            (Some(p), None) => {
                let moving = labels.iter().filter(|&&m| m).count() as f64 / labels.len() as f64;
                SquareWaveSearch::around(p, moving)
            }
            _ => SquareWaveSearch::from_labels(labels),
        };
        search.with_rest_at_ends(at_rest)
    }
}

/// JSON placement report written next to the mosaic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StitchReport {
    pub manifest: FrameManifest,
    pub params: StitchParams,
    pub model: SquareWaveModel,
    /// Hamming distance between the raw labels and the fitted wave.
    pub fit_hamming: usize,
    pub mosaic_width: usize,
    pub mosaic_height: usize,
    pub lines: Vec<LinePlacement>,
}

impl StitchReport {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec_pretty(self).expect("report serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

/// Everything the stitch stage produces.
#[derive(Clone, Debug)]
pub struct StitchOutcome {
    pub slide: StitchedSlide,
    pub series: CorrelationSeries,
    pub raw: MotionLabels,
    pub refined: MotionLabels,
    pub segments: Vec<ScanLineSegment>,
    pub report: StitchReport,
}

/// Run the full stitch on a frame source.
pub fn stitch<S: FrameSource + ?Sized>(source: &S, params: &StitchParams) -> Result<StitchOutcome> {
    let series = correlation_series(source, params.stride)?;
    let raw = classify_motion(&series, params.window.min(series.len()), params.theta_static)?;
    let (model, refined, fit_hamming) = fit_square_wave(&raw, &params.square_wave_search(&raw.moving))?;
    log::info!(
        "square wave: period {} on {} phase {} lines {} (hamming {fit_hamming})",
        model.period,
        model.on_frames,
        model.phase,
        model.line_count
    );
    let mut segments = extract_segments(&refined, &model, params.start_direction, params.jump_frames)?;
    if params.snap {
        segments = snap_segments(&segments, &series, params.window);
    }
    let slide = compose(
        source,
        &segments,
        &ComposeParams {
            step_um: params.step_um,
            row_pitch_um: params.row_pitch_um,
            refine: params.refine,
        },
    )?;
    let report = StitchReport {
        manifest: source.manifest().clone(),
        params: params.clone(),
        model,
        fit_hamming,
        mosaic_width: slide.mosaic.width(),
        mosaic_height: slide.mosaic.height(),
        lines: slide.lines.clone(),
    };
    Ok(StitchOutcome {
        slide,
        series,
        raw,
        refined,
        segments,
        report,
    })
}
