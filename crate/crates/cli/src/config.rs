//! TOML run configuration. Every section rejects unknown keys and every
//! field has a default, so an empty file is a valid (reference-device) run.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use blurscan_core::coreprep::BalanceParams;
use blurscan_core::stitcher::{StitchParams, DEFAULT_THETA_STATIC, DEFAULT_WINDOW};
use blurscan_core::synthscan::{default_appearance, ClassAppearance, ScanConfig, DEFAULT_BACKGROUND};
use blurscan_core::triage::{Method, DEFAULT_TARGET_RATE};
use blurscan_core::Direction;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Run directory, relative to the working directory.
    pub out: PathBuf,
    pub slides: SlideSection,
    pub scan: ScanSection,
    pub stitch: StitchSection,
    pub coreprep: CoreprepSection,
    pub classifier: ClassifierSection,
    pub triage: TriageSection,
    pub output: OutputSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            out: PathBuf::from("blurscan-out"),
            slides: SlideSection::default(),
            scan: ScanSection::default(),
            stitch: StitchSection::default(),
            coreprep: CoreprepSection::default(),
            classifier: ClassifierSection::default(),
            triage: TriageSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// Template shared by every synthetic slide of a run; scores, empty cells
/// and texture seeds vary per slide.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlideSection {
    pub train_slides: usize,
    pub test_slides: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Interior cells left empty on each slide.
    pub empty_cells: usize,
    pub core_diameter_um: f64,
    pub core_pitch_um: f64,
    /// Clearance around the grid. The planner adds one stage step, since the
    /// mosaic starts up to a step past the leading pause.
    pub margin_um: f64,
    pub background: [u8; 3],
    pub background_texture: f64,
    pub appearance: [ClassAppearance; 4],
}

impl Default for SlideSection {
    fn default() -> Self {
        SlideSection {
            train_slides: 4,
            test_slides: 2,
            grid_rows: 4,
            grid_cols: 4,
            empty_cells: 0,
            core_diameter_um: 300.0,
            core_pitch_um: 420.0,
            margin_um: 150.0,
            background: DEFAULT_BACKGROUND,
            background_texture: 3.0,
            appearance: default_appearance(),
        }
    }
}

/// Scan settings without the per-run fields (line count follows from the
/// slide height, the phase offset is drawn per repeat).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub stage_speed_um_s: f64,
    pub frame_rate_hz: f64,
    pub exposure_s: f64,
    pub frame_width_px: usize,
    pub frame_height_px: usize,
    pub scale_um_per_px: f64,
    pub row_pitch_um: Option<f64>,
    pub pause_s: f64,
    pub jump_frames: usize,
    pub start_direction: Direction,
}

impl Default for ScanSection {
    fn default() -> Self {
        let c = ScanConfig::default();
        ScanSection {
            stage_speed_um_s: c.stage_speed_um_s,
            frame_rate_hz: c.frame_rate_hz,
            exposure_s: c.exposure_s,
            frame_width_px: c.frame_width_px,
            frame_height_px: c.frame_height_px,
            scale_um_per_px: c.scale_um_per_px,
            row_pitch_um: c.row_pitch_um,
            pause_s: c.pause_s,
            jump_frames: c.jump_frames,
            start_direction: c.start_direction,
        }
    }
}

impl ScanSection {
    pub fn scan_config(&self, line_count: usize, phase_offset: f64) -> ScanConfig {
        ScanConfig {
            stage_speed_um_s: self.stage_speed_um_s,
            frame_rate_hz: self.frame_rate_hz,
            exposure_s: self.exposure_s,
            frame_width_px: self.frame_width_px,
            frame_height_px: self.frame_height_px,
            scale_um_per_px: self.scale_um_per_px,
            row_pitch_um: self.row_pitch_um,
            pause_s: self.pause_s,
            jump_frames: self.jump_frames,
            line_count,
            start_direction: self.start_direction,
            phase_offset,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StitchSection {
    pub window: usize,
    pub theta_static: f64,
    pub stride: usize,
    pub refine: bool,
    pub snap: bool,
    /// Overrides the scan's start direction when set.
    pub start_direction: Option<Direction>,
}

impl Default for StitchSection {
    fn default() -> Self {
        StitchSection {
            window: DEFAULT_WINDOW,
            theta_static: DEFAULT_THETA_STATIC,
            stride: 1,
            refine: true,
            snap: true,
            start_direction: None,
        }
    }
}

impl StitchSection {
    /// Stitcher parameters for a scan; `scan_frames` centres the period
    /// search when the scan geometry is known.
    pub fn params(&self, scan: &ScanConfig, scan_frames: Option<usize>) -> StitchParams {
        let mut p = StitchParams::for_scan(scan, scan_frames);
        p.window = self.window;
        p.theta_static = self.theta_static;
        p.stride = self.stride;
        p.refine = self.refine;
        p.snap = self.snap;
        if let Some(d) = self.start_direction {
            p.start_direction = d;
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoreprepSection {
    pub balance: BalanceParams,
    pub min_area_fraction: f64,
}

impl Default for CoreprepSection {
    fn default() -> Self {
        CoreprepSection {
            balance: BalanceParams::default(),
            min_area_fraction: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Baseline,
    Import,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSection {
    pub kind: ClassifierKind,
    /// Prediction CSV for `kind = "import"`, relative to the config file.
    pub predictions: Option<PathBuf>,
    pub class_count: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        ClassifierSection {
            kind: ClassifierKind::Baseline,
            predictions: None,
            class_count: 4,
            epochs: 500,
            learning_rate: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriageSection {
    pub methods: Vec<Method>,
    pub grid_points: usize,
    pub target_rate: f64,
    pub normalize_weighted: bool,
}

impl Default for TriageSection {
    fn default() -> Self {
        TriageSection {
            methods: Method::ALL.to_vec(),
            grid_points: 101,
            target_rate: DEFAULT_TARGET_RATE,
            normalize_weighted: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Keep rendered frame sequences after `pipeline` has stitched them.
    pub keep_frames: bool,
    /// Write patch stacks (about 3.9 MB each) during `dataset`.
    pub stacks: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            keep_frames: false,
            stacks: true,
        }
    }
}

impl PipelineConfig {
    /// Parse and validate a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(p) = cfg.classifier.predictions.as_mut() {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
        }
        cfg.validate().with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.slides;
        ensure!(s.grid_rows > 0 && s.grid_cols > 0, "slides: grid needs at least one row and column");
        ensure!(s.test_slides > 0, "slides: test_slides must be at least 1");
        let interior = s.grid_rows.saturating_sub(2) * s.grid_cols.saturating_sub(2);
        ensure!(
            s.empty_cells <= interior,
            "slides: {} empty cells requested but the grid has only {interior} interior cells",
            s.empty_cells
        );
        self.scan.scan_config(1, 0.0).validate().context("scan")?;
        ensure!(self.stitch.window > 0 && self.stitch.stride > 0, "stitch: window and stride must be positive");
        ensure!(
            self.stitch.theta_static > -1.0 && self.stitch.theta_static <= 1.0,
            "stitch: theta_static must lie in (-1, 1]"
        );
        ensure!(
            self.coreprep.min_area_fraction > 0.0 && self.coreprep.min_area_fraction <= 1.0,
            "coreprep: min_area_fraction must lie in (0, 1]"
        );
        let c = &self.classifier;
        ensure!(matches!(c.class_count, 2 | 4), "classifier: class_count must be 2 or 4");
        match c.kind {
            ClassifierKind::Baseline => {
                ensure!(c.class_count == 4, "classifier: the baseline is trained on 4 classes");
                ensure!(s.train_slides > 0, "slides: the baseline needs at least one training slide");
                ensure!(c.learning_rate > 0.0 && c.learning_rate.is_finite(), "classifier: learning_rate must be > 0");
            }
            ClassifierKind::Import => match &c.predictions {
                None => bail!("classifier: kind = \"import\" requires `predictions`"),
                Some(p) if !p.is_file() => bail!("classifier: predictions file {} does not exist", p.display()),
                Some(_) => {}
            },
        }
        let t = &self.triage;
        ensure!(!t.methods.is_empty(), "triage: at least one method is required");
        for (i, m) in t.methods.iter().enumerate() {
            ensure!(!t.methods[..i].contains(m), "triage: method `{m}` listed twice");
        }
        ensure!(t.grid_points >= 2, "triage: grid_points must be at least 2");
        ensure!(t.target_rate > 0.0 && t.target_rate <= 1.0, "triage: target_rate must lie in (0, 1]");
        Ok(())
    }
}
