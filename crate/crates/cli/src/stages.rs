//! The pipeline stages. Each reads its inputs from the run directory and
//! writes its outputs there, so any stage can be rerun on its own.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use blurscan_core::classify::{
    extract_features, import_predictions, train_baseline, write_predictions, BaselineModel, FeatureVector,
    Prediction, TrainParams,
};
use blurscan_core::coreprep::{
    assign_labels, build_stack, fit_grid, read_cores, segment_cores, white_balance, write_cores, LabelMap,
    LabelReport, SegmentParams,
};
use blurscan_core::imaging::{read_raster, write_raster, FrameSource, SequenceReader};
use blurscan_core::stitcher::stitch;
use blurscan_core::synthscan::{
    plan_trajectory, render_to_dir, synth_slide, write_label_map_csv, ScanConfig, ScanSummary, SlideTruth,
};
use blurscan_core::triage::{aggregate_all, binarize_label, consistency, group_repeats, AggregateOptions, RepeatSet, REPEATS};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ClassifierKind, PipelineConfig};
use crate::io::{ensure_parent, fresh_dir, read_json, write_json, write_text};
use crate::plan::{run_name, RunLayout, SlidePlan, Split};
use crate::report::{class_counts, write_decisions, TriageMeta, CONSISTENCY_FILE, TRIAGE_META};

pub const SLIDE_FILE: &str = "slide.raw";
pub const LABELS_FILE: &str = "labels.csv";
pub const LAYOUT_FILE: &str = "layout.csv";
pub const SPEC_FILE: &str = "spec.json";
pub const SCAN_FILE: &str = "scan.json";
pub const EXTRACT_FILE: &str = "extract.json";

/// What one stage produced.
#[derive(Clone, Debug, Default)]
pub struct StageOutput {
    pub items: usize,
    /// Slide area processed, for throughput.
    pub area_mm2: Option<f64>,
    pub artifacts: Vec<PathBuf>,
    pub scans: Vec<ScanRecord>,
    pub note: Option<String>,
}

/// Written as `scan.json` into each sequence directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub slide_id: String,
    pub repeat: usize,
    pub config: ScanConfig,
    pub scan_frames_per_line: usize,
    pub summary: ScanSummary,
    /// Coverage rate predicted from the scan settings alone.
    pub nominal_rate_mm2_s: f64,
}

/// Coverage rate from speed, pauses and jumps, without frame quantization.
pub fn nominal_rate_mm2_s(cfg: &ScanConfig, line_length_um: f64) -> f64 {
    let lines = cfg.line_count as f64;
    let seconds = lines * (line_length_um / cfg.stage_speed_um_s + 2.0 * cfg.pause_s)
        + (lines - 1.0) * cfg.jump_frames as f64 / cfg.frame_rate_hz;
    let area = (line_length_um + cfg.fov_um().0) * cfg.height_for_lines(cfg.line_count) * 1e-6;
    area / seconds
}

/// Written as `extract.json` next to `cores.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractRecord {
    pub otsu_boxes: usize,
    pub filled_cells: usize,
    pub conflicts: usize,
    pub labels: LabelReport,
}

/// One row of `dataset.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub core_id: String,
    pub slide_id: String,
    pub split: Split,
    pub repeat: usize,
    pub row: usize,
    pub col: usize,
    pub label: Option<u8>,
    pub crop_seed: u64,
    pub brown_fraction: f64,
    pub mean_saturation: f64,
    pub heterogeneity: f64,
    /// Stack file relative to the run directory; empty when stacks are off.
    pub stack: Option<PathBuf>,
}

impl DatasetRow {
    pub fn features(&self) -> FeatureVector {
        FeatureVector {
            brown_fraction: self.brown_fraction,
            mean_saturation: self.mean_saturation,
            heterogeneity: self.heterogeneity,
        }
    }
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.with_context(|| format!("{}: data row {}", path.display(), i + 1)))
        .collect()
}

fn area_mm2(width: usize, height: usize, scale: f64) -> f64 {
    width as f64 * height as f64 * scale * scale * 1e-6
}

fn runs(slides: &[SlidePlan]) -> impl Iterator<Item = (&SlidePlan, usize)> {
    slides.iter().flat_map(|s| (0..REPEATS).map(move |r| (s, r)))
}

pub fn synth(cfg: &PipelineConfig, layout: &RunLayout, slides: &[SlidePlan]) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    let mut area = 0.0;
    for s in slides {
        let dir = layout.slide_dir(&s.id);
        fresh_dir(&dir)?;
        let truth = synth_slide(&s.spec).with_context(|| format!("slide {}", s.id))?;
        write_raster(dir.join(SLIDE_FILE), &truth.image)?;
        write_label_map_csv(&truth, dir.join(LABELS_FILE))?;
        truth.write_layout_csv(dir.join(LAYOUT_FILE))?;
        write_json(&dir.join(SPEC_FILE), &s.spec)?;
        let (w, h) = s.spec.extent();
        area += w * h * 1e-6;
        out.items += 1;
        out.artifacts.push(dir);
    }
    log::info!("synthesized {} slides (seed {})", slides.len(), cfg.seed);
    out.area_mm2 = Some(area);
    Ok(out)
}

pub fn scan(cfg: &PipelineConfig, layout: &RunLayout, slides: &[SlidePlan]) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    let mut area = 0.0;
    for s in slides {
        let path = layout.slide_dir(&s.id).join(SLIDE_FILE);
        let truth = SlideTruth {
            image: read_raster(&path)?,
            layout: Vec::new(),
            background: s.spec.background,
            grid_rows: s.spec.grid_rows,
            grid_cols: s.spec.grid_cols,
        };
        for r in 0..REPEATS {
            let config = s.scan_config(cfg, r);
            let traj = plan_trajectory(&config, truth.image.extent_um())
                .with_context(|| format!("planning {}", run_name(&s.id, r)))?;
            let dir = layout.scan_dir(&s.id, r);
            fresh_dir(&dir)?;
            render_to_dir(&truth, &traj, &dir)?;
            let summary = traj.summary();
            let rec = ScanRecord {
                slide_id: s.id.clone(),
                repeat: r,
                nominal_rate_mm2_s: nominal_rate_mm2_s(&config, traj.line_length_um),
                config,
                scan_frames_per_line: traj.scan_frames_per_line,
                summary,
            };
            write_json(&dir.join(SCAN_FILE), &rec)?;
            log::info!("{}: {} frames", run_name(&s.id, r), summary.frames);
            area += summary.covered_area_mm2;
            out.items += 1;
            out.artifacts.push(dir);
            out.scans.push(rec);
        }
    }
    out.area_mm2 = Some(area);
    Ok(out)
}

/// Stitch one sequence directory into `mosaic` (plus a `.json` report).
/// Uses the directory's `scan.json` for the scan geometry when present.
pub fn stitch_one(cfg: &PipelineConfig, seq_dir: &Path, mosaic: &Path) -> Result<f64> {
    let reader = SequenceReader::open(seq_dir)?;
    let scan_file = seq_dir.join(SCAN_FILE);
    let params = if scan_file.is_file() {
        let rec: ScanRecord = read_json(&scan_file)?;
        cfg.stitch.params(&rec.config, Some(rec.scan_frames_per_line))
    } else {
        let m = reader.manifest();
        let mut scan = cfg.scan.scan_config(1, 0.0);
        scan.frame_width_px = m.width;
        scan.frame_height_px = m.height;
        scan.scale_um_per_px = m.scale_um_per_px;
        scan.frame_rate_hz = 1.0 / m.frame_period_s;
        scan.exposure_s = m.exposure_s;
        cfg.stitch.params(&scan, None)
    };
    let outcome = stitch(&reader, &params).with_context(|| format!("stitching {}", seq_dir.display()))?;
    ensure_parent(mosaic)?;
    let m = &outcome.slide.mosaic;
    write_raster(mosaic, m)?;
    outcome.report.write(stitch_report_path(mosaic))?;
    log::info!(
        "{}: {} lines, mosaic {}x{}, fit hamming {}",
        seq_dir.display(),
        outcome.slide.lines.len(),
        m.width(),
        m.height(),
        outcome.report.fit_hamming
    );
    Ok(area_mm2(m.width(), m.height(), m.scale()))
}

/// The mosaic's own `.json` sidecar describes the raster; the stitch report
/// sits next to it.
pub fn stitch_report_path(mosaic: &Path) -> PathBuf {
    mosaic.with_extension("stitch.json")
}

pub fn stitch_stage(cfg: &PipelineConfig, layout: &RunLayout, slides: &[SlidePlan]) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    let mut area = 0.0;
    for (s, r) in runs(slides) {
        let mosaic = layout.mosaic(&s.id, r);
        area += stitch_one(cfg, &layout.scan_dir(&s.id, r), &mosaic)?;
        out.items += 1;
        out.artifacts.push(mosaic.with_extension("json"));
        out.artifacts.push(stitch_report_path(&mosaic));
        out.artifacts.push(mosaic);
    }
    out.area_mm2 = Some(area);
    Ok(out)
}

/// Stitch explicitly named sequence directories. `output` is allowed only
/// with a single input; otherwise mosaics go to `<out>/mosaics/<dir>.raw`.
pub fn stitch_inputs(
    cfg: &PipelineConfig,
    layout: &RunLayout,
    inputs: &[PathBuf],
    output: Option<&Path>,
) -> Result<StageOutput> {
    if output.is_some() && inputs.len() != 1 {
        bail!("--output needs exactly one --input");
    }
    let mut out = StageOutput::default();
    let mut area = 0.0;
    for input in inputs {
        let mosaic = match output {
            Some(p) => p.to_path_buf(),
            None => {
                let name = input
                    .file_name()
                    .with_context(|| format!("{} has no directory name", input.display()))?;
                layout.root.join("mosaics").join(name).with_extension("raw")
            }
        };
        area += stitch_one(cfg, input, &mosaic)?;
        out.items += 1;
        out.artifacts.push(mosaic.with_extension("json"));
        out.artifacts.push(stitch_report_path(&mosaic));
        out.artifacts.push(mosaic);
    }
    out.area_mm2 = Some(area);
    Ok(out)
}

pub fn extract(cfg: &PipelineConfig, layout: &RunLayout, slides: &[SlidePlan]) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    let mut area = 0.0;
    let mut cores = 0;
    for (s, r) in runs(slides) {
        let name = run_name(&s.id, r);
        let mosaic = read_raster(layout.mosaic(&s.id, r))?;
        area += area_mm2(mosaic.width(), mosaic.height(), mosaic.scale());
        let balanced = white_balance(&mosaic, &cfg.coreprep.balance).with_context(|| format!("balancing {name}"))?;
        let seg = SegmentParams {
            core_diameter_px: s.spec.core_diameter_um / mosaic.scale(),
            min_area_fraction: cfg.coreprep.min_area_fraction,
        };
        let boxes = segment_cores(&balanced, &seg).with_context(|| format!("segmenting {name}"))?;
        let (rows, cols) = (s.spec.grid_rows, s.spec.grid_cols);
        let grid = fit_grid(&boxes, rows, cols).with_context(|| format!("fitting the grid of {name}"))?;
        let map = LabelMap::read_csv(layout.slide_dir(&s.id).join(LABELS_FILE), rows, cols)?;
        let (records, labels) = assign_labels(&grid, &map, &balanced, &s.id, r)?;
        let dir = layout.cores_dir(&s.id, r);
        fresh_dir(&dir)?;
        write_cores(&dir, &records)?;
        write_json(
            &dir.join(EXTRACT_FILE),
            &ExtractRecord {
                otsu_boxes: boxes.len(),
                filled_cells: records.len(),
                conflicts: grid.conflicts.len(),
                labels,
            },
        )?;
        log::info!("{name}: {} cores", records.len());
        cores += records.len();
        out.items += 1;
        out.artifacts.push(dir);
    }
    out.area_mm2 = Some(area);
    out.note = Some(format!("{cores} cores"));
    Ok(out)
}

pub fn dataset(cfg: &PipelineConfig, layout: &RunLayout, slides: &[SlidePlan]) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    let stacks_dir = layout.root.join("stacks");
    if cfg.output.stacks {
        fresh_dir(&stacks_dir)?;
    }
    let mut rows = Vec::new();
    for (s, r) in runs(slides) {
        let records = read_cores(layout.cores_dir(&s.id, r))?;
        let built = records
            .par_iter()
            .map(|rec| -> Result<DatasetRow> {
                let crop_seed = s.crop_seed(cfg, rec.row, rec.col, r);
                let stack = build_stack(rec, crop_seed);
                let f = extract_features(&stack);
                let path = if cfg.output.stacks {
                    let p = layout.stack(&rec.id, r);
                    stack.write(&p)?;
                    Some(layout.relative(&p))
                } else {
                    None
                };
                Ok(DatasetRow {
                    core_id: rec.id.clone(),
                    slide_id: s.id.clone(),
                    split: s.split,
                    repeat: r,
                    row: rec.row,
                    col: rec.col,
                    label: rec.label,
                    crop_seed,
                    brown_fraction: f.brown_fraction,
                    mean_saturation: f.mean_saturation,
                    heterogeneity: f.heterogeneity,
                    stack: path,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(built);
    }
    let path = layout.dataset();
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    out.items = rows.len();
    out.artifacts.push(path);
    if cfg.output.stacks {
        out.artifacts.push(stacks_dir);
    }
    Ok(out)
}

pub fn train(cfg: &PipelineConfig, layout: &RunLayout) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    if cfg.classifier.kind == ClassifierKind::Import {
        out.note = Some("skipped: predictions are imported".into());
        return Ok(out);
    }
    let rows = read_dataset(&layout.dataset())?;
    let samples: Vec<(FeatureVector, u8)> = rows
        .iter()
        .filter(|r| r.split == Split::Train)
        .filter_map(|r| r.label.map(|l| (r.features(), l)))
        .collect();
    let params = TrainParams {
        epochs: cfg.classifier.epochs,
        learning_rate: cfg.classifier.learning_rate,
        seed: cfg.seed,
    };
    let model = train_baseline(&samples, cfg.classifier.class_count, &params)?;
    log::info!("trained on {} samples, final loss {:.4}", samples.len(), model.meta.final_loss);
    let path = layout.model();
    model.save(&path)?;
    out.items = samples.len();
    out.artifacts.push(path);
    out.note = Some(format!("final loss {:.6}", model.meta.final_loss));
    Ok(out)
}

pub fn classify(cfg: &PipelineConfig, layout: &RunLayout) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    let mut preds: Vec<Prediction> = match cfg.classifier.kind {
        ClassifierKind::Baseline => {
            let model = BaselineModel::load(layout.model())?;
            read_dataset(&layout.dataset())?
                .iter()
                .filter(|r| r.split == Split::Test)
                .map(|r| model.predict_features(&r.features(), &r.core_id, r.repeat))
                .collect()
        }
        ClassifierKind::Import => {
            let src = cfg.classifier.predictions.as_ref().context("no predictions file configured")?;
            import_predictions(src, cfg.classifier.class_count).with_context(|| format!("importing {}", src.display()))?
        }
    };
    preds.sort_by(|a, b| (&a.core_id, a.repeat).cmp(&(&b.core_id, b.repeat)));
    let path = layout.predictions();
    write_predictions(&path, &preds)?;
    out.items = preds.len();
    out.artifacts.push(path);
    Ok(out)
}

pub fn triage(cfg: &PipelineConfig, layout: &RunLayout) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    let k = cfg.classifier.class_count;
    let preds = import_predictions(layout.predictions(), k)?;
    let mut truth = BTreeMap::new();
    for row in read_dataset(&layout.dataset())? {
        if let Some(l) = row.label {
            let l = if k == 2 { binarize_label(l as usize)? } else { l as usize };
            truth.insert(row.core_id, l);
        }
    }
    let (sets, incomplete) = group_repeats(&preds, &truth)?;
    ensure!(!sets.is_empty(), "no core has all {REPEATS} repeats");
    if !incomplete.is_empty() {
        log::warn!("{} cores lack a repeat and are left out: {}", incomplete.len(), incomplete.join(", "));
    }
    let dir = layout.triage_dir();
    fresh_dir(&dir)?;
    let opts = AggregateOptions {
        normalize_weighted: cfg.triage.normalize_weighted,
    };
    for kk in class_counts(k) {
        let variant: Vec<RepeatSet> = if kk == k {
            sets.clone()
        } else {
            sets.iter().map(RepeatSet::binarized).collect::<blurscan_core::Result<_>>()?
        };
        for &m in &cfg.triage.methods {
            let ds = aggregate_all(&variant, m, &opts)?;
            let path = layout.decisions(m, kk);
            write_decisions(&path, &ds, kk)?;
            out.artifacts.push(path);
        }
    }
    let c = consistency(&sets)?;
    let mut text = String::from("core_id,consistency\n");
    for (id, v) in &c.per_core {
        text.push_str(&format!("{id},{v}\n"));
    }
    out.artifacts.push(write_text(&dir.join(CONSISTENCY_FILE), &text)?);
    let meta = TriageMeta {
        class_count: k,
        methods: cfg.triage.methods.clone(),
        cores: sets.len(),
        incomplete_cores: incomplete,
        consistency: c.overall,
    };
    out.artifacts.push(write_json(&dir.join(TRIAGE_META), &meta)?);
    out.items = sets.len();
    out.note = Some(format!("consistency {:.4}", c.overall));
    Ok(out)
}

/// Delete the rendered sequences once they are stitched.
pub fn discard_frames(layout: &RunLayout) -> Result<()> {
    let dir = layout.scans_dir();
    if dir.exists() {
        std::fs::remove_dir_all(&dir).with_context(|| format!("removing {}", dir.display()))?;
    }
    Ok(())
}
