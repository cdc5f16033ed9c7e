//! Rendered frames against an independent temporal-averaging oracle: the
//! exposure window is sampled at M sub-exposure instants, each an unblurred
//! bilinear crop of the rest slide at that instant's stage position.

use blurscan_core::imaging::{box_taps, Direction, Raster};
use blurscan_core::synthscan::{
    plan_trajectory, render_frames, synth_slide, Phase, ScanConfig, SlideSpec, StageTrajectory,
};

const SUB_EXPOSURES: usize = 64;

fn lerp_sample(img: &Raster, x: f64, y: f64, c: usize) -> f64 {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let px = |xi: i64, yi: i64| img.pixel(xi.clamp(0, w - 1) as usize, yi.clamp(0, h - 1) as usize)[c] as f64;
    let (xi, yi) = (x0 as i64, y0 as i64);
    let top = px(xi, yi) * (1.0 - fx) + px(xi + 1, yi) * fx;
    let bot = px(xi, yi + 1) * (1.0 - fx) + px(xi + 1, yi + 1) * fx;
    top * (1.0 - fy) + bot * fy
}

/// Returns the largest absolute difference between the oracle and `frame`.
fn oracle_max_diff(slide: &Raster, traj: &StageTrajectory, index: usize, frame: &Raster) -> f64 {
    let cfg = &traj.config;
    let s = traj.samples[index];
    let x = s.x_um / cfg.scale_um_per_px;
    let y = s.y_um / cfg.scale_um_per_px;
    // stage displacement during the exposure, in the discretized blur width
    let travel = match s.phase {
        Phase::Scanning => (cfg.blur_um() / cfg.scale_um_per_px).round(),
        _ => 0.0,
    };
    let _ = box_taps(travel as usize, Direction::PlusX);
    let mut worst = 0.0f64;
    for v in 0..frame.height() {
        for u in 0..frame.width() {
            for c in 0..3 {
                let mut acc = 0.0;
                for j in 0..SUB_EXPOSURES {
                    let t = (j as f64 + 0.5) / SUB_EXPOSURES as f64 - 0.5;
                    acc += lerp_sample(slide, x + u as f64 + t * travel, y + v as f64, c);
                }
                let expected = (acc / SUB_EXPOSURES as f64 + 0.5).floor();
                let got = frame.pixel(u, v)[c] as f64;
                worst = worst.max((got - expected).abs());
            }
        }
    }
    worst
}

#[test]
fn scanning_frame_matches_temporal_oracle() {
    let mut spec = SlideSpec::new(1, 3, vec![Some(3), Some(1), Some(2)]);
    spec.core_diameter_um = 160.0;
    spec.core_pitch_um = 220.0;
    spec.margin_um = 40.0;
    spec.seed = 11;
    let truth = synth_slide(&spec).unwrap();
    let cfg = ScanConfig {
        frame_width_px: 96,
        frame_height_px: 72,
        phase_offset: 0.37,
        line_count: 1,
        ..ScanConfig::default()
    };
    let traj = plan_trajectory(&cfg, truth.image.extent_um()).unwrap();
    let seq = render_frames(&truth, &traj).unwrap();
    let mut worst = 0.0f64;
    for (i, s) in traj.samples.iter().enumerate() {
        let d = oracle_max_diff(&truth.image, &traj, i, &seq.frames[i]);
        if s.phase == Phase::Paused {
            assert_eq!(d, 0.0);
        }
        worst = worst.max(d);
    }
    eprintln!("worst diff {worst}");
    assert!(worst <= 1.0);
}
