use anyhow::{ensure, Result};
use blurscan_core::imaging::{blur_raster, blur_width, BlurSpec, Direction, Raster};
use blurscan_core::synthscan::{plan_trajectory, render_frames, synth_slide, Phase, ScanConfig, SlideSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Sub-exposure instants per frame in the temporal oracles.
const M: usize = 64;

/// Mean of `M` bilinear crops of `img` at `(x0 + u + t·travel, y0 + v)` for
/// `t` spread uniformly over the exposure, rounded to 8 bits. Each output
/// row interpolates vertically once, then samples that line along x.
fn exposure_average(img: &Raster, x0: f64, y0: f64, w: usize, h: usize, travel: f64) -> Vec<u8> {
    let instants = if travel == 0.0 { 1 } else { M };
    let (iw, ih) = (img.width() as i64, img.height() as i64);
    let lo = (x0 - travel).floor() as i64 - 1;
    let hi = (x0 + w as f64 + travel).ceil() as i64 + 2;
    let mut out = vec![0u8; w * h * 3];
    out.par_chunks_mut(w * 3).enumerate().for_each(|(v, row)| {
        let y = y0 + v as f64;
        let (yi, fy) = (y.floor() as i64, y - y.floor());
        let (ya, yb) = (yi.clamp(0, ih - 1) as usize, (yi + 1).clamp(0, ih - 1) as usize);
        let line: Vec<[f64; 3]> = (lo..=hi)
            .map(|xi| {
                let x = xi.clamp(0, iw - 1) as usize;
                let (a, b) = (img.pixel(x, ya), img.pixel(x, yb));
                std::array::from_fn(|c| a[c] as f64 * (1.0 - fy) + b[c] as f64 * fy)
            })
            .collect();
        for u in 0..w {
            let mut acc = [0.0; 3];
            for j in 0..instants {
                let t = (j as f64 + 0.5) / instants as f64 - 0.5;
                let x = x0 + u as f64 + t * travel;
                let (xi, fx) = (x.floor() as i64, x - x.floor());
                let (p, q) = (line[(xi - lo) as usize], line[(xi + 1 - lo) as usize]);
                for c in 0..3 {
                    acc[c] += p[c] * (1.0 - fx) + q[c] * fx;
                }
            }
            for c in 0..3 {
                row[3 * u + c] = (acc[c] / instants as f64 + 0.5).floor() as u8;
            }
        }
    });
    out
}

/// The exposure split into `n` equal instants, each seeing the scene
/// displaced by a whole pixel: the instant offsets `k + 1/2 - n/2` round
/// down for `+x` and up for `-x`, so the two directions mirror each other.
fn shifted_copies_average(img: &Raster, n: usize, dir: Direction) -> Vec<u8> {
    let n = n.max(1);
    let shifts: Vec<i64> = (0..n)
        .map(|k| {
            let s = k as f64 + 0.5 - n as f64 / 2.0;
            match dir {
                Direction::PlusX => s.floor() as i64,
                Direction::MinusX => s.ceil() as i64,
            }
        })
        .collect();
    let w = img.width() as i64;
    let mut out = Vec::with_capacity(img.data().len());
    for y in 0..img.height() {
        for x in 0..w {
            for c in 0..3 {
                let sum: u64 = shifts
                    .iter()
                    .map(|s| img.pixel((x + s).clamp(0, w - 1) as usize, y)[c] as u64)
                    .sum();
                // round half up in integers
                out.push(((2 * sum + n as u64) / (2 * n as u64)) as u8);
            }
        }
    }
    out
}

fn max_abs_diff(a: &[u8], b: &[u8]) -> u8 {
    a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).max().unwrap_or(0)
}

fn random_slide(rng: &mut ChaCha8Rng) -> Result<Raster> {
    let rows = rng.gen_range(1..=2);
    let cols = rng.gen_range(1..=3);
    let mut cells: Vec<Option<u8>> = (0..rows * cols)
        .map(|_| rng.gen_bool(0.8).then(|| rng.gen_range(0..4)))
        .collect();
    cells[0] = Some(rng.gen_range(0..4));
    let mut spec = SlideSpec::new(rows, cols, cells);
    spec.scale_um_per_px = rng.gen_range(0.5..2.5);
    spec.core_diameter_um = rng.gen_range(80.0..200.0);
    spec.core_pitch_um = spec.core_diameter_um + rng.gen_range(20.0..120.0);
    spec.margin_um = rng.gen_range(20.0..80.0);
    spec.background_texture = rng.gen_range(0.0..6.0);
    spec.seed = rng.gen();
    Ok(synth_slide(&spec)?.image)
}

pub fn blur_equivalence() -> Result<String> {
    let reference = blur_width(&BlurSpec::new(5000.0, 0.0078, Direction::PlusX), 0.56);
    ensure!(
        (reference.um - 39.0).abs() < 1e-9 && reference.px == 70,
        "5000 µm/s for 7.8 ms at 0.56 µm/px reports {} µm / {} px, expected 39 µm / 70 px",
        reference.um,
        reference.px
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let mut worst = 0u8;
    let mut widths = Vec::new();
    for draw in 0..50 {
        let slide = random_slide(&mut rng)?;
        // a random window keeps the oracle cheap; its own edges are replicated
        let w = rng.gen_range(48..=200).min(slide.width());
        let h = rng.gen_range(4..=24).min(slide.height());
        let x = rng.gen_range(0..=slide.width() - w);
        let y = rng.gen_range(0..=slide.height() - h);
        let img = slide.crop(x, y, w, h)?;

        let speed = rng.gen_range(500.0..10_000.0);
        let exposure = rng.gen_range(0.0005..0.015);
        let dir = if rng.gen_bool(0.5) { Direction::PlusX } else { Direction::MinusX };
        let spec = BlurSpec::new(speed, exposure, dir);
        let width = blur_width(&spec, img.scale());
        ensure!(
            (width.um - speed * exposure).abs() < 1e-9 * width.um.max(1.0),
            "draw {draw}: width {} µm, expected {}",
            width.um,
            speed * exposure
        );
        let n = width.px;
        let oracle = shifted_copies_average(&img, n, dir);
        let d = max_abs_diff(blur_raster(&img, &spec).data(), &oracle);
        ensure!(d <= 1, "draw {draw}: {n} px {dir:?} blur differs from the oracle by {d}");
        worst = worst.max(d);
        widths.push(n);
    }
    let (lo, hi) = (widths.iter().min().unwrap(), widths.iter().max().unwrap());
    Ok(format!(
        "39 µm / 70 px reference; 50 draws with widths {lo}..{hi} px, worst sample difference {worst}"
    ))
}

pub fn render_commutativity() -> Result<String> {
    let mut spec = SlideSpec::new(2, 4, (0..8).map(|i| Some((i * 3 % 4) as u8)).collect());
    spec.core_diameter_um = 300.0;
    spec.core_pitch_um = 420.0;
    spec.margin_um = 100.0;
    spec.seed = 0xC2;
    let cfg = ScanConfig {
        frame_width_px: 160,
        frame_height_px: 120,
        scale_um_per_px: 0.56,
        phase_offset: 0.37,
        ..ScanConfig::default()
    };
    let (w, h) = spec.grid_extent_um();
    let width = w + 2.0 * spec.margin_um;
    // cover the grid, then add lines until the scan has 500 frames
    let mut lines = cfg.lines_to_cover(h + 2.0 * spec.margin_um);
    let traj = loop {
        let c = ScanConfig { line_count: lines, ..cfg.clone() };
        spec.scale_um_per_px = c.scale_um_per_px;
        spec.extent_um = Some((width, c.height_for_lines(lines)));
        let t = plan_trajectory(&c, spec.extent())?;
        if t.samples.len() >= 500 {
            break t;
        }
        lines += 1;
    };
    let truth = synth_slide(&spec)?;
    let traj = plan_trajectory(&traj.config, truth.image.extent_um())?;
    let seq = render_frames(&truth, &traj)?;
    let tc = &traj.config;
    let n = (tc.blur_um() / tc.scale_um_per_px).round();
    let (fw, fh) = (tc.frame_width_px, tc.frame_height_px);

    let mut worst = 0u8;
    let mut scanning = 0;
    for (i, s) in traj.samples.iter().enumerate() {
        let travel = if s.phase == Phase::Scanning { n } else { 0.0 };
        scanning += (s.phase == Phase::Scanning) as usize;
        let oracle = exposure_average(
            &truth.image,
            s.x_um / tc.scale_um_per_px,
            s.y_um / tc.scale_um_per_px,
            fw,
            fh,
            travel,
        );
        let frame = &seq.frames[i];
        let d = max_abs_diff(frame.data(), &oracle);
        ensure!(d <= 1, "frame {i} ({:?}) differs from the oracle by {d}", s.phase);
        if s.phase == Phase::Paused {
            ensure!(frame.data() == oracle.as_slice(), "paused frame {i} is not the plain crop");
        }
        worst = worst.max(d);
    }
    Ok(format!(
        "{} frames ({scanning} scanning, {n} px blur) over {lines} lines, worst sample difference {worst}",
        traj.samples.len()
    ))
}
