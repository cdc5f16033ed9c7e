//! Deterministic expansion of a config into concrete slides, scan repeats
//! and file locations.

use std::path::{Path, PathBuf};

use blurscan_core::synthscan::{ScanConfig, SlideSpec};
use blurscan_core::triage::REPEATS;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;

/// Independent random streams drawn from the global seed.
#[derive(Clone, Copy, Debug)]
pub enum Stream {
    SlideTexture = 1,
    SlideScores = 2,
    ScanPhase = 3,
    Crop = 4,
}

/// A 64-bit value that depends only on `(seed, stream, index)`.
pub fn derive(seed: u64, stream: Stream, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 56) ^ index);
    rng.next_u64()
}

/// Uniform draw in [0, 1) with 53 bits of resolution.
pub fn unit(v: u64) -> f64 {
    (v >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}`")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SlidePlan {
    pub index: usize,
    pub id: String,
    pub split: Split,
    pub spec: SlideSpec,
    pub line_count: usize,
}

impl SlidePlan {
    pub fn scan_config(&self, cfg: &PipelineConfig, repeat: usize) -> ScanConfig {
        let phase = unit(derive(cfg.seed, Stream::ScanPhase, (self.index * REPEATS + repeat) as u64));
        cfg.scan.scan_config(self.line_count, phase)
    }

    /// Seed of the random crops for one core of one repeat.
    pub fn crop_seed(&self, cfg: &PipelineConfig, row: usize, col: usize, repeat: usize) -> u64 {
        let cells = (self.spec.grid_rows * self.spec.grid_cols) as u64;
        let cell = (row * self.spec.grid_cols + col) as u64;
        let index = (self.index as u64 * cells + cell) * REPEATS as u64 + repeat as u64;
        derive(cfg.seed, Stream::Crop, index)
    }
}

/// Slides of a run: training slides first, then test slides. Each slide
/// holds a shuffled, class-balanced set of scores with `empty_cells`
/// interior cells left empty.
pub fn plan_slides(cfg: &PipelineConfig) -> Vec<SlidePlan> {
    let s = &cfg.slides;
    let scale = cfg.scan.scale_um_per_px;
    let probe = cfg.scan.scan_config(1, 0.0);
    let splits = std::iter::repeat(Split::Train)
        .take(s.train_slides)
        .chain(std::iter::repeat(Split::Test).take(s.test_slides));
    let mut counters = [0usize; 2];
    splits
        .enumerate()
        .map(|(index, split)| {
            let n = &mut counters[split as usize];
            let id = format!("{}{:02}", split.as_str(), *n);
            *n += 1;

            let cells = slide_cells(cfg, index);
            let mut spec = SlideSpec::new(s.grid_rows, s.grid_cols, cells);
            spec.core_diameter_um = s.core_diameter_um;
            spec.core_pitch_um = s.core_pitch_um;
            let margin = s.margin_um + probe.step_um();
            spec.margin_um = margin;
            spec.scale_um_per_px = scale;
            spec.background = s.background;
            spec.background_texture = s.background_texture;
            spec.appearance = s.appearance.clone();
            spec.seed = derive(cfg.seed, Stream::SlideTexture, index as u64);
            let (w, h) = spec.grid_extent_um();
            let (w, h) = (w + 2.0 * margin, h + 2.0 * margin);
            let line_count = probe.lines_to_cover(h);
            // whole pixels, never shorter than the scanned height
            let h = (probe.height_for_lines(line_count) / scale).ceil() * scale;
            spec.extent_um = Some((w, h));
            SlidePlan {
                index,
                id,
                split,
                spec,
                line_count,
            }
        })
        .collect()
}

fn slide_cells(cfg: &PipelineConfig, index: usize) -> Vec<Option<u8>> {
    let s = &cfg.slides;
    let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, Stream::SlideScores, index as u64));
    let n = s.grid_rows * s.grid_cols;
    let mut interior: Vec<usize> = (0..n)
        .filter(|&i| {
            let (r, c) = (i / s.grid_cols, i % s.grid_cols);
            r > 0 && r + 1 < s.grid_rows && c > 0 && c + 1 < s.grid_cols
        })
        .collect();
    interior.shuffle(&mut rng);
    let empty = &interior[..s.empty_cells];
    let mut scores: Vec<u8> = (0..n - s.empty_cells).map(|i| (i % 4) as u8).collect();
    scores.shuffle(&mut rng);
    let mut scores = scores.into_iter();
    (0..n)
        .map(|i| if empty.contains(&i) { None } else { scores.next() })
        .collect()
}

/// Paths inside a run directory.
#[derive(Clone, Debug)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }

    pub fn slide_dir(&self, slide: &str) -> PathBuf {
        self.root.join("slides").join(slide)
    }

    pub fn scans_dir(&self) -> PathBuf {
        self.root.join("scans")
    }

    pub fn scan_dir(&self, slide: &str, repeat: usize) -> PathBuf {
        self.scans_dir().join(run_name(slide, repeat))
    }

    pub fn mosaic(&self, slide: &str, repeat: usize) -> PathBuf {
        self.root.join("mosaics").join(format!("{}.raw", run_name(slide, repeat)))
    }

    pub fn cores_dir(&self, slide: &str, repeat: usize) -> PathBuf {
        self.root.join("cores").join(run_name(slide, repeat))
    }

    pub fn stack(&self, core_id: &str, repeat: usize) -> PathBuf {
        self.root.join("stacks").join(format!("{}.stack", run_name(core_id, repeat)))
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.csv")
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model.json")
    }

    pub fn predictions(&self) -> PathBuf {
        self.root.join("predictions.csv")
    }

    pub fn triage_dir(&self) -> PathBuf {
        self.root.join("triage")
    }

    pub fn decisions(&self, method: blurscan_core::triage::Method, classes: usize) -> PathBuf {
        self.triage_dir().join(format!("decisions_{method}_{classes}.csv"))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn run_report(&self, command: &str) -> PathBuf {
        if command == "pipeline" {
            self.root.join("run_report.json")
        } else {
            self.root.join(format!("run_report_{command}.json"))
        }
    }

    /// `path` relative to the run directory, for reports.
    pub fn relative(&self, path: &Path) -> PathBuf {
        path.strip_prefix(&self.root).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
    }
}

pub fn run_name(id: &str, repeat: usize) -> String {
    format!("{id}_rep{repeat}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        let a = derive(7, Stream::Crop, 3);
        assert_eq!(a, derive(7, Stream::Crop, 3));
        assert_ne!(a, derive(7, Stream::Crop, 4));
        assert_ne!(a, derive(7, Stream::ScanPhase, 3));
        assert_ne!(a, derive(8, Stream::Crop, 3));
        assert!((0.0..1.0).contains(&unit(u64::MAX)));
    }

    #[test]
    fn slides_are_balanced_and_split() {
        let mut cfg = PipelineConfig::default();
        cfg.slides.train_slides = 2;
        cfg.slides.test_slides = 1;
        cfg.slides.empty_cells = 2;
        let plan = plan_slides(&cfg);
        let ids: Vec<&str> = plan.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["train00", "train01", "test00"]);
        for p in &plan {
            let cells = &p.spec.cells;
            assert_eq!(cells.iter().filter(|c| c.is_none()).count(), 2);
            for (i, c) in cells.iter().enumerate() {
                let (r, col) = (i / 4, i % 4);
                if r == 0 || r == 3 || col == 0 || col == 3 {
                    assert!(c.is_some(), "border cell {i} empty");
                }
            }
            let mut counts = [0; 4];
            cells.iter().flatten().for_each(|&s| counts[s as usize] += 1);
            assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
            p.spec.validate().unwrap();
            let scan = p.scan_config(&cfg, 0);
            let (_, h) = p.spec.extent_um.unwrap();
            assert!(scan.height_for_lines(p.line_count) <= h);
        }
        assert_ne!(plan[0].spec.cells, plan[1].spec.cells);
    }

    #[test]
    fn repeats_get_distinct_phases() {
        let cfg = PipelineConfig::default();
        let plan = plan_slides(&cfg);
        let phases: Vec<f64> = (0..3).map(|r| plan[0].scan_config(&cfg, r).phase_offset).collect();
        assert!(phases[0] != phases[1] && phases[1] != phases[2]);
    }
}
