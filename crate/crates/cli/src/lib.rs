//! Pipeline driver behind the `blurscan` binary: configuration, per-stage
//! execution over a run directory, and report emission.

pub mod config;
pub mod io;
pub mod plan;
pub mod report;
pub mod stages;
pub mod svg;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub use config::PipelineConfig;
pub use plan::RunLayout;
pub use report::Summary;

use stages::{ScanRecord, StageOutput};

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Synth,
    Scan,
    Stitch {
        inputs: Vec<PathBuf>,
        output: Option<PathBuf>,
    },
    Extract,
    Dataset,
    Train,
    Classify,
    Triage,
    Report,
    Pipeline,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Scan => "scan",
            Command::Stitch { .. } => "stitch",
            Command::Extract => "extract",
            Command::Dataset => "dataset",
            Command::Train => "train",
            Command::Classify => "classify",
            Command::Triage => "triage",
            Command::Report => "report",
            Command::Pipeline => "pipeline",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub seconds: f64,
    pub items: usize,
    pub area_mm2: Option<f64>,
    pub throughput_mm2_s: Option<f64>,
    /// Paths relative to the run directory.
    pub artifacts: Vec<PathBuf>,
    pub note: Option<String>,
}

/// Written as `run_report.json` (pipeline) or `run_report_<stage>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    pub out: PathBuf,
    pub seconds: f64,
    pub stages: Vec<StageReport>,
    pub scans: Vec<ScanRecord>,
    pub metrics: Option<Summary>,
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    layout: RunLayout,
    report: RunReport,
}

impl Runner<'_> {
    fn stage(&mut self, name: &str, f: impl FnOnce(&PipelineConfig, &RunLayout) -> Result<StageOutput>) -> Result<()> {
        log::info!("stage {name}");
        let start = Instant::now();
        let out = f(self.cfg, &self.layout).with_context(|| format!("stage `{name}` failed"))?;
        let seconds = start.elapsed().as_secs_f64();
        self.report.scans.extend(out.scans);
        self.report.stages.push(StageReport {
            stage: name.to_string(),
            seconds,
            items: out.items,
            area_mm2: out.area_mm2,
            throughput_mm2_s: out.area_mm2.map(|a| a / seconds.max(1e-9)),
            artifacts: out.artifacts.iter().map(|p| self.layout.relative(p)).collect(),
            note: out.note,
        });
        Ok(())
    }

    fn report_stage(&mut self) -> Result<()> {
        let mut summary = None;
        self.stage("report", |cfg, layout| {
            let (s, files) = report::emit_report(cfg, layout)?;
            summary = Some(s);
            Ok(StageOutput {
                items: files.len(),
                artifacts: files,
                ..StageOutput::default()
            })
        })?;
        self.report.metrics = summary;
        Ok(())
    }
}

/// Run one subcommand (or the whole pipeline) and write its run report.
pub fn run(command: &Command, cfg: &PipelineConfig) -> Result<RunReport> {
    let layout = RunLayout::new(&cfg.out);
    std::fs::create_dir_all(&layout.root).with_context(|| format!("creating {}", layout.root.display()))?;
    let slides = plan::plan_slides(cfg);
    let start = Instant::now();
    let mut r = Runner {
        cfg,
        layout: layout.clone(),
        report: RunReport {
            command: command.name().to_string(),
            seed: cfg.seed,
            out: cfg.out.clone(),
            seconds: 0.0,
            stages: Vec::new(),
            scans: Vec::new(),
            metrics: None,
        },
    };
    match command {
        Command::Synth => r.stage("synth", |c, l| stages::synth(c, l, &slides))?,
        Command::Scan => r.stage("scan", |c, l| stages::scan(c, l, &slides))?,
        Command::Stitch { inputs, output } if !inputs.is_empty() => {
            r.stage("stitch", |c, l| stages::stitch_inputs(c, l, inputs, output.as_deref()))?
        }
        Command::Stitch { output, .. } => {
            anyhow::ensure!(output.is_none(), "--output needs exactly one --input");
            r.stage("stitch", |c, l| stages::stitch_stage(c, l, &slides))?
        }
        Command::Extract => r.stage("extract", |c, l| stages::extract(c, l, &slides))?,
        Command::Dataset => r.stage("dataset", |c, l| stages::dataset(c, l, &slides))?,
        Command::Train => r.stage("train", stages::train)?,
        Command::Classify => r.stage("classify", stages::classify)?,
        Command::Triage => r.stage("triage", stages::triage)?,
        Command::Report => r.report_stage()?,
        Command::Pipeline => {
            r.stage("synth", |c, l| stages::synth(c, l, &slides))?;
            r.stage("scan", |c, l| stages::scan(c, l, &slides))?;
            r.stage("stitch", |c, l| stages::stitch_stage(c, l, &slides))?;
            if !cfg.output.keep_frames {
                stages::discard_frames(&layout)?;
                let scan = r.report.stages.iter_mut().find(|s| s.stage == "scan").expect("scan ran");
                scan.artifacts.clear();
                scan.note = Some("frame sequences removed after stitching".into());
            }
            r.stage("extract", |c, l| stages::extract(c, l, &slides))?;
            r.stage("dataset", |c, l| stages::dataset(c, l, &slides))?;
            r.stage("train", stages::train)?;
            r.stage("classify", stages::classify)?;
            r.stage("triage", stages::triage)?;
            r.report_stage()?;
        }
    }
    r.report.seconds = start.elapsed().as_secs_f64();
    io::write_json(&layout.run_report(command.name()), &r.report)?;
    Ok(r.report)
}
