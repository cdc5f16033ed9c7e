use std::time::Instant;

use anyhow::{ensure, Context, Result};
use blurscan_core::coreprep::{segment_cores, white_balance, BalanceParams, SegmentParams};
use blurscan_core::imaging::{blur_raster_px, box_center_offset, to_gray, Direction, SequenceReader};
use blurscan_core::stitcher::{
    classify_motion, correlation_series, fit_square_wave, stitch, StitchParams,
};
use blurscan_core::synthscan::{plan_trajectory, render_frames, render_to_dir, synth_slide, ScanConfig, SlideSpec};

pub fn round_trip() -> Result<String> {
    const DIAMETER_UM: f64 = 120.0;
    let mut worst_mae = 0.0f64;
    let mut worst_centroid = 0.0f64;
    let cases = [(7u64, 0.41), (19, 0.0), (23, 0.83)];
    for (seed, phase) in cases {
        let cfg = ScanConfig {
            line_count: 3,
            phase_offset: phase,
            ..ScanConfig::default()
        };
        let scale = cfg.scale_um_per_px;
        let cells = (0..16).map(|i| Some((i % 4) as u8)).collect();
        let mut spec = SlideSpec::new(4, 4, cells);
        spec.core_diameter_um = DIAMETER_UM;
        spec.core_pitch_um = 170.0;
        spec.margin_um = 40.0;
        spec.scale_um_per_px = scale;
        spec.extent_um = Some((2000.0, cfg.height_for_lines(3)));
        spec.seed = seed;
        let truth = synth_slide(&spec)?;
        let traj = plan_trajectory(&cfg, truth.image.extent_um())?;
        let seq = render_frames(&truth, &traj)?;
        let out = stitch(&seq, &StitchParams::for_scan(&cfg, Some(traj.scan_frames_per_line)))?;
        ensure!(out.slide.lines.len() == 3, "seed {seed}: {} lines stitched", out.slide.lines.len());

        // mosaic x = slide x - ox, fixed by the true position of the first placed frame
        let line0 = &out.slide.lines[0];
        let ox = traj.samples[line0.segment.first].x_um / scale - line0.x_px[0] as f64;
        let mosaic = &out.slide.mosaic;
        let (mw, mh) = (mosaic.width(), mosaic.height());
        let n = (cfg.blur_um() / scale).round() as usize;
        let expected = |dir: Direction| {
            let blurred = blur_raster_px(&truth.image, n, dir);
            to_gray(&blurred.crop_bilinear(ox - box_center_offset(n, dir), 0.0, mw, mh))
        };
        let (plus, minus) = (expected(Direction::PlusX), expected(Direction::MinusX));
        // each mosaic row is judged against the blur direction of the line
        // whose band centre is nearest
        let fh = cfg.frame_height_px as f64;
        let row_dir: Vec<Direction> = (0..mh)
            .map(|y| {
                out.slide
                    .lines
                    .iter()
                    .min_by(|a, b| {
                        let d = |l: &blurscan_core::stitcher::LinePlacement| {
                            (y as f64 + 0.5 - (l.y_px as f64 + fh / 2.0)).abs()
                        };
                        d(a).total_cmp(&d(b))
                    })
                    .map(|l| l.segment.direction)
                    .unwrap()
            })
            .collect();
        let got = to_gray(mosaic);

        let r = 0.5 * DIAMETER_UM / scale;
        let (mut sum, mut count) = (0f64, 0usize);
        for c in &truth.layout {
            let (cx, cy) = (c.center_x_um / scale - ox, c.center_y_um / scale);
            for y in (cy - r).max(0.0) as usize..((cy + r) as usize).min(mh) {
                let gt = match row_dir[y] {
                    Direction::PlusX => &plus,
                    Direction::MinusX => &minus,
                };
                for x in (cx - r).max(0.0) as usize..((cx + r) as usize).min(mw) {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    if dx * dx + dy * dy <= r * r {
                        sum += (got.get(x, y) as f64 - gt.get(x, y) as f64).abs();
                        count += 1;
                    }
                }
            }
        }
        ensure!(count > 0, "seed {seed}: no tissue pixels on the mosaic");
        let mae = sum / count as f64;
        ensure!(mae <= 5.0, "seed {seed}: tissue MAE {mae:.2} gray levels");
        worst_mae = worst_mae.max(mae);

        let balanced = white_balance(mosaic, &BalanceParams::default())?;
        let seg = SegmentParams {
            core_diameter_px: DIAMETER_UM / scale,
            ..SegmentParams::default()
        };
        let boxes = segment_cores(&balanced, &seg)?;
        ensure!(
            boxes.len() == truth.layout.len(),
            "seed {seed}: {} cores segmented, {} on the slide",
            boxes.len(),
            truth.layout.len()
        );
        for c in &truth.layout {
            let (cx, cy) = (c.center_x_um / scale - ox, c.center_y_um / scale);
            let d = boxes
                .iter()
                .map(|b| {
                    let (bx, by) = b.centroid();
                    ((bx - cx).powi(2) + (by - cy).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            ensure!(d <= 5.0, "seed {seed}: core ({}, {}) centroid off by {d:.2} px", c.row, c.col);
            worst_centroid = worst_centroid.max(d);
        }
    }
    Ok(format!(
        "{} scans of 3 lines: worst tissue MAE {worst_mae:.2} gray levels, worst centroid error {worst_centroid:.2} px",
        cases.len()
    ))
}

/// Frames at least `margin` frames away from any change of `truth`.
fn far_from_transitions(truth: &[bool], margin: usize) -> Vec<usize> {
    let n = truth.len();
    (0..n)
        .filter(|&i| {
            let (lo, hi) = (i.saturating_sub(margin), (i + margin).min(n - 1));
            (lo..=hi).all(|j| truth[j] == truth[i])
        })
        .collect()
}

fn longest_wrong_run(labels: &[bool], truth: &[bool]) -> usize {
    let (mut best, mut run) = (0, 0);
    for (a, b) in labels.iter().zip(truth) {
        run = if a != b { run + 1 } else { 0 };
        best = best.max(run);
    }
    best
}

pub fn square_wave_repair() -> Result<String> {
    // a textured slide with a wide flat strip across every line: frames
    // inside the strip are constant and correlate as if paused
    const WIDTH_UM: f64 = 20000.0;
    const BAND_UM: (f64, f64) = (7600.0, 12400.0);
    let cfg = ScanConfig {
        frame_width_px: 160,
        frame_height_px: 120,
        scale_um_per_px: 2.0,
        line_count: 3,
        phase_offset: 0.3,
        ..ScanConfig::default()
    };
    let mut spec = SlideSpec::new(1, 2, vec![Some(3), Some(1)]);
    spec.core_diameter_um = 300.0;
    spec.core_pitch_um = 16000.0;
    spec.margin_um = 500.0;
    spec.background_texture = 8.0;
    spec.scale_um_per_px = cfg.scale_um_per_px;
    spec.extent_um = Some((WIDTH_UM, cfg.height_for_lines(cfg.line_count)));
    spec.seed = 0xC4;
    let mut truth = synth_slide(&spec)?;
    let img = &mut truth.image;
    let (x0, x1) = (
        (BAND_UM.0 / cfg.scale_um_per_px) as usize,
        ((BAND_UM.1 / cfg.scale_um_per_px) as usize).min(img.width()),
    );
    let flat = img.pixel(x0, 0);
    for y in 0..img.height() {
        for x in x0..x1 {
            img.set_pixel(x, y, flat);
        }
    }
    let traj = plan_trajectory(&cfg, truth.image.extent_um())?;
    let seq = render_frames(&truth, &traj)?;

    let params = StitchParams::for_scan(&cfg, Some(traj.scan_frames_per_line));
    let series = correlation_series(&seq, 1)?;
    let raw = classify_motion(&series, params.window, params.theta_static)?;
    let (model, refined, _) = fit_square_wave(&raw, &params.square_wave_search(&raw.moving))?;

    let truth_labels = traj.moving_labels();
    let band = longest_wrong_run(&raw.moving, &truth_labels);
    ensure!(band >= 20, "the featureless band corrupts only {band} consecutive raw labels");
    let frames = far_from_transitions(&truth_labels, 3);
    let wrong = |labels: &[bool]| frames.iter().filter(|&&i| labels[i] != truth_labels[i]).count();
    let (raw_wrong, refined_wrong) = (wrong(&raw.moving), wrong(&refined.moving));
    ensure!(raw_wrong > 0, "raw labels already match the trajectory; the band is not featureless");
    ensure!(
        refined_wrong == 0,
        "refined labels disagree with the trajectory at {refined_wrong} of {} frames",
        frames.len()
    );
    Ok(format!(
        "band of {band} corrupted labels; raw wrong at {raw_wrong}, refined (period {}, on {}) at 0 of {} checked frames",
        model.period,
        model.on_frames,
        frames.len()
    ))
}

pub fn throughput() -> Result<String> {
    const FRAMES: usize = 2000;
    const LINES: usize = 20;
    let base = ScanConfig {
        scale_um_per_px: 2.0,
        line_count: LINES,
        phase_offset: 0.3,
        ..ScanConfig::default()
    };
    let (fov_w, _) = base.fov_um();
    let height = base.height_for_lines(LINES);
    // widen the slide one step at a time until the scan reaches the frame count
    let mut width = fov_w + base.step_um();
    let traj = loop {
        let t = plan_trajectory(&base, (width, height))?;
        if t.samples.len() >= FRAMES {
            break t;
        }
        width += base.step_um();
    };
    let (diameter, pitch, margin) = (600.0, 900.0, 150.0);
    let fit = |extent: f64| (((extent - 2.0 * margin - diameter) / pitch).floor() as usize + 1).max(1);
    let (rows, cols) = (fit(height), fit(width));
    let mut spec = SlideSpec::new(rows, cols, (0..rows * cols).map(|i| Some((i % 4) as u8)).collect());
    spec.core_diameter_um = diameter;
    spec.core_pitch_um = pitch;
    spec.margin_um = margin;
    spec.scale_um_per_px = base.scale_um_per_px;
    spec.extent_um = Some((width, height));
    spec.seed = 0xC10;
    let truth = synth_slide(&spec)?;
    let traj = plan_trajectory(&traj.config, truth.image.extent_um())?;
    let dir = tempfile::tempdir()?;
    let seq_dir = dir.path().join("scan");
    render_to_dir(&truth, &traj, &seq_dir).context("rendering the sequence")?;

    let start = Instant::now();
    let reader = SequenceReader::open(&seq_dir)?;
    let out = stitch(&reader, &StitchParams::for_scan(&base, Some(traj.scan_frames_per_line)))?;
    let secs = start.elapsed().as_secs_f64();
    let m = &out.slide.mosaic;
    ensure!(out.slide.lines.len() == LINES, "{} of {LINES} lines stitched", out.slide.lines.len());
    let cores = rayon::current_num_threads();
    ensure!(
        secs < 60.0,
        "{} frames stitched in {secs:.1} s on {cores} worker thread(s); budget 60 s",
        traj.samples.len()
    );
    Ok(format!(
        "{} frames of {}x{} stitched from disk in {secs:.1} s on {cores} worker thread(s), mosaic {}x{}",
        traj.samples.len(),
        base.frame_width_px,
        base.frame_height_px,
        m.width(),
        m.height()
    ))
}
