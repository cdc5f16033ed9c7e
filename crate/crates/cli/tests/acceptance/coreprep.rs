use std::collections::BTreeSet;

use anyhow::{ensure, Result};
use blurscan_core::coreprep::{
    assign_labels, fit_grid, segment_cores, white_balance, BalanceParams, LabelMap, SegmentParams,
};
use blurscan_core::synthscan::{synth_slide, SlideSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SLIDES: usize = 20;

pub fn segmentation_exactness() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC5);
    let (mut cores, mut empty) = (0, 0);
    for slide in 0..SLIDES {
        let rows = rng.gen_range(2..=6);
        let cols = rng.gen_range(2..=6);
        let mut cells: Vec<Option<u8>> = (0..rows * cols)
            .map(|_| rng.gen_bool(0.75).then(|| rng.gen_range(0..4)))
            .collect();
        // the lattice spans the occupied rectangle, so its corners stay filled
        for i in [0, cols - 1, (rows - 1) * cols, rows * cols - 1] {
            cells[i].get_or_insert(rng.gen_range(0..4));
        }
        let mut spec = SlideSpec::new(rows, cols, cells);
        spec.core_diameter_um = rng.gen_range(150.0..300.0);
        spec.core_pitch_um = spec.core_diameter_um + rng.gen_range(60.0..200.0);
        spec.margin_um = rng.gen_range(60.0..200.0);
        spec.background_texture = rng.gen_range(0.0..6.0);
        spec.seed = rng.gen();
        let truth = synth_slide(&spec)?;
        let scale = truth.image.scale();

        let balanced = white_balance(&truth.image, &BalanceParams::default())?;
        let seg = SegmentParams {
            core_diameter_px: spec.core_diameter_um / scale,
            ..SegmentParams::default()
        };
        let boxes = segment_cores(&balanced, &seg)?;
        let grid = fit_grid(&boxes, rows, cols)?;
        ensure!(grid.conflicts.is_empty(), "slide {slide}: {} grid conflicts", grid.conflicts.len());
        let mut map = LabelMap::new(rows, cols);
        for c in &truth.layout {
            map.insert(c.row, c.col, c.score)?;
        }
        let (records, report) = assign_labels(&grid, &map, &balanced, &format!("s{slide}"), 0)?;

        let want: BTreeSet<(usize, usize)> = truth.layout.iter().map(|c| (c.row, c.col)).collect();
        let got: BTreeSet<(usize, usize)> = records.iter().map(|r| (r.row, r.col)).collect();
        ensure!(
            got == want,
            "slide {slide} ({rows}x{cols}): cells {:?} missed, {:?} spurious",
            want.difference(&got).collect::<Vec<_>>(),
            got.difference(&want).collect::<Vec<_>>()
        );
        ensure!(
            report.unlabeled.is_empty() && report.missing.is_empty(),
            "slide {slide}: label report {report:?}"
        );
        for c in &truth.layout {
            let r = records.iter().find(|r| (r.row, r.col) == (c.row, c.col)).unwrap();
            ensure!(
                r.label == Some(c.score),
                "slide {slide}: core ({}, {}) labelled {:?}, truth {}",
                c.row,
                c.col,
                r.label,
                c.score
            );
            let (x, y) = (c.center_x_um / scale, c.center_y_um / scale);
            ensure!(
                r.bbox.contains(x, y),
                "slide {slide}: core ({}, {}) box {:?} misses its centre ({x:.1}, {y:.1})",
                c.row,
                c.col,
                r.bbox
            );
        }
        cores += want.len();
        empty += rows * cols - want.len();
    }
    Ok(format!(
        "{SLIDES} slides: {cores} cores recovered with correct labels, {empty} empty cells left empty"
    ))
}
