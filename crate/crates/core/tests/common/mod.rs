#![allow(dead_code)]

use blurscan_core::imaging::FrameSequence;
use blurscan_core::synthscan::{
    plan_trajectory, render_frames, synth_slide, ScanConfig, SlideSpec, SlideTruth, StageTrajectory,
};

pub struct Scan {
    pub cfg: ScanConfig,
    pub truth: SlideTruth,
    pub traj: StageTrajectory,
    pub seq: FrameSequence,
}

/// A small camera (160×120 at 2 µm/px) so whole scans render in well under
/// a second.
pub fn small_config(lines: usize, phase: f64) -> ScanConfig {
    ScanConfig {
        frame_width_px: 160,
        frame_height_px: 120,
        scale_um_per_px: 2.0,
        line_count: lines,
        phase_offset: phase,
        ..ScanConfig::default()
    }
}

/// A `rows`×`cols` grid of 120 µm cores at 170 µm pitch in a slide sized
/// for `cfg.line_count` lines.
pub fn grid_spec(cfg: &ScanConfig, rows: usize, cols: usize, width_um: f64, seed: u64) -> SlideSpec {
    let cells = (0..rows * cols).map(|i| Some((i % 4) as u8)).collect();
    let mut spec = SlideSpec::new(rows, cols, cells);
    spec.core_diameter_um = 120.0;
    spec.core_pitch_um = 170.0;
    spec.margin_um = 40.0;
    spec.scale_um_per_px = cfg.scale_um_per_px;
    spec.extent_um = Some((width_um, cfg.height_for_lines(cfg.line_count)));
    spec.seed = seed;
    spec
}

pub fn scan(cfg: ScanConfig, spec: &SlideSpec) -> Scan {
    let truth = synth_slide(spec).unwrap();
    let traj = plan_trajectory(&cfg, truth.image.extent_um()).unwrap();
    let seq = render_frames(&truth, &traj).unwrap();
    Scan { cfg, truth, traj, seq }
}

/// Frames at least `margin` frames from any change of the truth labels.
pub fn far_from_transitions(truth: &[bool], margin: usize) -> Vec<usize> {
    let n = truth.len();
    (0..n)
        .filter(|&i| {
            let lo = i.saturating_sub(margin);
            let hi = (i + margin).min(n - 1);
            (lo..=hi).all(|j| truth[j] == truth[i])
        })
        .collect()
}

pub fn mismatches(labels: &[bool], truth: &[bool], frames: &[usize]) -> usize {
    frames.iter().filter(|&&i| labels[i] != truth[i]).count()
}
