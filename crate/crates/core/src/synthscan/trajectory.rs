use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Direction;

/// Continuous serpentine scan settings. Defaults are the reference device:
/// 5 mm/s stage, 30 fps 640x480 camera behind a 10x objective (0.56 µm/px),
/// 7.8 ms exposure, 0.5 s pauses at each line end and 3-frame row jumps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub stage_speed_um_s: f64,
    pub frame_rate_hz: f64,
    pub exposure_s: f64,
    pub frame_width_px: usize,
    pub frame_height_px: usize,
    pub scale_um_per_px: f64,
    /// Vertical step between lines; `None` means 85% of the FOV height.
    pub row_pitch_um: Option<f64>,
    pub pause_s: f64,
    pub jump_frames: usize,
    pub line_count: usize,
    pub start_direction: Direction,
    /// Camera phase relative to the stage, as a fraction of one frame step.
    pub phase_offset: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            stage_speed_um_s: 5000.0,
            frame_rate_hz: 30.0,
            exposure_s: 0.0078,
            frame_width_px: 640,
            frame_height_px: 480,
            scale_um_per_px: 0.56,
            row_pitch_um: None,
            pause_s: 0.5,
            jump_frames: 3,
            line_count: 1,
            start_direction: Direction::PlusX,
            phase_offset: 0.0,
        }
    }
}

/// Largest vertical overlap between adjacent lines.
pub const MAX_ROW_OVERLAP: f64 = 0.20;
pub const DEFAULT_ROW_OVERLAP: f64 = 0.15;

impl ScanConfig {
    pub fn fov_um(&self) -> (f64, f64) {
        (
            self.frame_width_px as f64 * self.scale_um_per_px,
            self.frame_height_px as f64 * self.scale_um_per_px,
        )
    }

    pub fn row_pitch(&self) -> f64 {
        self.row_pitch_um
            .unwrap_or((1.0 - DEFAULT_ROW_OVERLAP) * self.fov_um().1)
    }

    /// Stage displacement between consecutive frames while scanning, µm.
    pub fn step_um(&self) -> f64 {
        self.stage_speed_um_s / self.frame_rate_hz
    }

    pub fn pause_frames(&self) -> usize {
        (self.pause_s * self.frame_rate_hz).round() as usize
    }

    pub fn blur_um(&self) -> f64 {
        self.stage_speed_um_s * self.exposure_s
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("stage_speed_um_s", self.stage_speed_um_s),
            ("frame_rate_hz", self.frame_rate_hz),
            ("scale_um_per_px", self.scale_um_per_px),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.frame_width_px == 0 || self.frame_height_px == 0 {
            return Err(Error::param("frame dimensions must be positive"));
        }
        if !(self.exposure_s >= 0.0 && self.exposure_s <= 1.0 / self.frame_rate_hz) {
            return Err(Error::param(format!(
                "exposure {} s exceeds the frame period",
                self.exposure_s
            )));
        }
        if self.pause_s < 0.0 {
            return Err(Error::param("pause_s must be >= 0"));
        }
        if self.line_count == 0 {
            return Err(Error::param("line_count must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.phase_offset) {
            return Err(Error::param(format!(
                "phase_offset must lie in [0, 1), got {}",
                self.phase_offset
            )));
        }
        let fov_h = self.fov_um().1;
        let pitch = self.row_pitch();
        if !(pitch <= fov_h + 1e-9 && pitch >= (1.0 - MAX_ROW_OVERLAP) * fov_h - 1e-9) {
            return Err(Error::param(format!(
                "row pitch {pitch:.2} µm must keep row overlap within 0..20% of the {fov_h:.2} µm field"
            )));
        }
        Ok(())
    }

    /// Number of lines needed to cover `height_um`.
    pub fn lines_to_cover(&self, height_um: f64) -> usize {
        let fov_h = self.fov_um().1;
        if height_um <= fov_h {
            return 1;
        }
        ((height_um - fov_h) / self.row_pitch() - 1e-9).ceil() as usize + 1
    }

    /// Slide height swept exactly by `lines` lines.
    pub fn height_for_lines(&self, lines: usize) -> f64 {
        (lines.max(1) - 1) as f64 * self.row_pitch() + self.fov_um().1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Scanning,
    Paused,
    Jumping,
}

impl Phase {
    pub fn is_moving(self) -> bool {
        !matches!(self, Phase::Paused)
    }

    fn as_str(self) -> &'static str {
        match self {
            Phase::Scanning => "scanning",
            Phase::Paused => "paused",
            Phase::Jumping => "jumping",
        }
    }
}

/// Stage position at mid-exposure of one frame. `x_um`, `y_um` locate the
/// top-left corner of the field of view on the slide.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSample {
    pub frame: usize,
    pub x_um: f64,
    pub y_um: f64,
    pub phase: Phase,
    pub direction: Option<Direction>,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageTrajectory {
    pub config: ScanConfig,
    pub samples: Vec<StageSample>,
    pub line_length_um: f64,
    pub scan_frames_per_line: usize,
}

/// Aggregate scan geometry and timing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub frames: usize,
    pub duration_s: f64,
    /// Sum of the field-of-view area of every captured frame.
    pub imaged_area_mm2: f64,
    pub acquisition_rate_mm2_s: f64,
    /// Distinct slide area swept by the scan.
    pub covered_area_mm2: f64,
    pub coverage_rate_mm2_s: f64,
}

impl StageTrajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Frames per line period: scan run, two pauses and one jump.
    pub fn period_frames(&self) -> usize {
        self.scan_frames_per_line + 2 * self.config.pause_frames() + self.config.jump_frames
    }

    pub fn summary(&self) -> ScanSummary {
        let (fw, fh) = self.config.fov_um();
        let frames = self.samples.len();
        let duration_s = frames as f64 / self.config.frame_rate_hz;
        let imaged_area_mm2 = frames as f64 * fw * fh * 1e-6;
        let covered_area_mm2 = (self.line_length_um + fw)
            * self.config.height_for_lines(self.config.line_count)
            * 1e-6;
        ScanSummary {
            frames,
            duration_s,
            imaged_area_mm2,
            acquisition_rate_mm2_s: imaged_area_mm2 / duration_s,
            covered_area_mm2,
            coverage_rate_mm2_s: covered_area_mm2 / duration_s,
        }
    }

    pub fn moving_labels(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.phase.is_moving()).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::with_capacity(self.samples.len() * 40);
        writeln!(out, "frame,x_um,y_um,phase,direction").expect("vec write");
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{}",
                s.frame,
                s.x_um,
                s.y_um,
                s.phase.as_str(),
                s.direction.map(Direction::as_str).unwrap_or("none")
            )
            .expect("vec write");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Plan a serpentine scan over a slide of `extent_um` (width, height).
///
/// Every line visits the same grid of scanning positions
/// `(k + phase_offset) · step`, ascending on `+x` lines and descending on
/// `-x` lines, bracketed by paused frames at the line ends. Lines after the
/// first are preceded by `jump_frames` frames of vertical travel.
pub fn plan_trajectory(config: &ScanConfig, extent_um: (f64, f64)) -> Result<StageTrajectory> {
    config.validate()?;
    let (fov_w, fov_h) = config.fov_um();
    let line_length = extent_um.0 - fov_w;
    if line_length <= 0.0 {
        return Err(Error::param(format!(
            "zero-length scan line: slide width {:.1} µm does not exceed the {fov_w:.1} µm field",
            extent_um.0
        )));
    }
    let pitch = config.row_pitch();
    let last_y = (config.line_count - 1) as f64 * pitch;
    if last_y + fov_h > extent_um.1 + 1e-6 {
        return Err(Error::param(format!(
            "{} lines need {:.1} µm of slide height, extent is {:.1} µm",
            config.line_count,
            last_y + fov_h,
            extent_um.1
        )));
    }
    let step = config.step_um();
    let phase = config.phase_offset;
    let reach = line_length / step - phase;
    if reach < 0.0 {
        return Err(Error::param(format!(
            "scan line of {line_length:.1} µm is shorter than the camera phase offset"
        )));
    }
    let n_scan = reach.floor() as usize + 1;
    let grid: Vec<f64> = (0..n_scan).map(|k| (k as f64 + phase) * step).collect();
    let pause = config.pause_frames();

    let mut samples = Vec::new();
    let mut push = |x_um: f64, y_um: f64, phase: Phase, direction: Option<Direction>, line: usize| {
        let frame = samples.len();
        samples.push(StageSample {
            frame,
            x_um,
            y_um,
            phase,
            direction,
            line,
        });
    };
    let mut direction = config.start_direction;
    for line in 0..config.line_count {
        let y = line as f64 * pitch;
        let (start, end) = match direction {
            Direction::PlusX => (0.0, line_length),
            Direction::MinusX => (line_length, 0.0),
        };
        if line > 0 {
            for j in 0..config.jump_frames {
                let t = (j + 1) as f64 / (config.jump_frames + 1) as f64;
                push(start, y - pitch + t * pitch, Phase::Jumping, None, line);
            }
        }
        for _ in 0..pause {
            push(start, y, Phase::Paused, None, line);
        }
        match direction {
            Direction::PlusX => grid
                .iter()
                .for_each(|&x| push(x, y, Phase::Scanning, Some(direction), line)),
            Direction::MinusX => grid
                .iter()
                .rev()
                .for_each(|&x| push(x, y, Phase::Scanning, Some(direction), line)),
        }
        for _ in 0..pause {
            push(end, y, Phase::Paused, None, line);
        }
        direction = direction.flipped();
    }

    Ok(StageTrajectory {
        config: config.clone(),
        samples,
        line_length_um: line_length,
        scan_frames_per_line: n_scan,
    })
}
