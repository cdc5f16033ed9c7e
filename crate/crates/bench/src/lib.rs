//! Deterministic inputs shared by the benchmarks.

use blurscan_core::classify::Prediction;
use blurscan_core::synthscan::{plan_trajectory, render_frames, synth_slide, ScanConfig, SlideSpec, StageTrajectory};
use blurscan_core::triage::RepeatSet;
use blurscan_core::FrameSequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A rendered serpentine scan plus the trajectory that produced it.
pub struct ScanFixture {
    pub config: ScanConfig,
    pub trajectory: StageTrajectory,
    pub frames: FrameSequence,
}

/// A `lines`-line scan of a 3×6 grid with a `width`×`height` camera at
/// 2 µm/px. The slide is three field-of-view widths wide.
pub fn scan_fixture(width: usize, height: usize, lines: usize) -> ScanFixture {
    let config = ScanConfig {
        frame_width_px: width,
        frame_height_px: height,
        scale_um_per_px: 2.0,
        line_count: lines,
        phase_offset: 0.3,
        ..ScanConfig::default()
    };
    let (fov_w, _) = config.fov_um();
    let mut spec = SlideSpec::new(3, 6, (0..18).map(|i| Some((i % 4) as u8)).collect());
    spec.scale_um_per_px = config.scale_um_per_px;
    spec.core_diameter_um = fov_w / 4.0;
    spec.core_pitch_um = fov_w / 2.5;
    spec.margin_um = fov_w / 8.0;
    spec.extent_um = Some((3.0 * fov_w, config.height_for_lines(lines)));
    spec.seed = 11;
    let truth = synth_slide(&spec).expect("fixture slide");
    let trajectory = plan_trajectory(&config, truth.image.extent_um()).expect("fixture plan");
    let frames = render_frames(&truth, &trajectory).expect("fixture render");
    ScanFixture {
        config,
        trajectory,
        frames,
    }
}

/// `n` four-class repeat sets with random probabilities and truths.
pub fn repeat_sets(n: usize, seed: u64) -> Vec<RepeatSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let id = format!("c{i}");
            let preds = (0..3)
                .map(|r| {
                    let w: Vec<f64> = (0..4).map(|_| rng.gen_range(0.01..1.0)).collect();
                    let s: f64 = w.iter().sum();
                    Prediction::new(id.as_str(), r, w.iter().map(|v| v / s).collect()).expect("valid")
                })
                .collect();
            RepeatSet::new(id.as_str(), Some(rng.gen_range(0..4)), preds).expect("valid set")
        })
        .collect()
}
