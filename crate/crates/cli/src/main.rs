use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use blurscan_cli::{run, Command, PipelineConfig, RunReport};
use blurscan_core::Direction;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Continuous-scan slide pipeline: synthesize, scan, stitch, extract cores,
/// classify and triage by confidence.
#[derive(Parser, Debug)]
#[command(name = "blurscan", version)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Generate the synthetic slides and their label maps.
    Synth,
    /// Render three serpentine scan repeats of every slide.
    Scan,
    /// Stitch frame sequences into mosaics.
    Stitch(StitchArgs),
    /// Segment cores from the mosaics and attach labels.
    Extract,
    /// Build patch stacks and the feature table.
    Dataset,
    /// Train the baseline classifier on the training split.
    Train,
    /// Predict the test split (or import external predictions).
    Classify,
    /// Aggregate repeats and write decisions per method.
    Triage,
    /// Emit sweep, confusion and ROC files plus summary.json.
    Report,
    /// Run every stage in order.
    Pipeline,
}

#[derive(Args, Debug)]
struct StitchArgs {
    /// Sequence directory to stitch (repeatable); defaults to every scan of the run.
    #[arg(long)]
    input: Vec<PathBuf>,
    /// Mosaic path when stitching a single input.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    theta_static: Option<f64>,
    #[arg(long, value_enum)]
    refine: Option<OnOff>,
    /// `+x` or `-x`.
    #[arg(long, allow_hyphen_values = true)]
    start_direction: Option<Direction>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OnOff {
    On,
    Off,
}

fn config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Sub::Stitch(a) = &cli.command {
        if let Some(w) = a.window {
            cfg.stitch.window = w;
        }
        if let Some(t) = a.theta_static {
            cfg.stitch.theta_static = t;
        }
        if let Some(r) = a.refine {
            cfg.stitch.refine = matches!(r, OnOff::On);
        }
        if a.start_direction.is_some() {
            cfg.stitch.start_direction = a.start_direction;
        }
    }
    cfg.validate().context("invalid settings")?;
    Ok(cfg)
}

fn command(sub: &Sub) -> Command {
    match sub {
        Sub::Synth => Command::Synth,
        Sub::Scan => Command::Scan,
        Sub::Stitch(a) => Command::Stitch {
            inputs: a.input.clone(),
            output: a.output.clone(),
        },
        Sub::Extract => Command::Extract,
        Sub::Dataset => Command::Dataset,
        Sub::Train => Command::Train,
        Sub::Classify => Command::Classify,
        Sub::Triage => Command::Triage,
        Sub::Report => Command::Report,
        Sub::Pipeline => Command::Pipeline,
    }
}

fn print(report: &RunReport) {
    for s in &report.stages {
        let rate = s.throughput_mm2_s.map(|t| format!("  {t:.3} mm²/s")).unwrap_or_default();
        let note = s.note.as_deref().map(|n| format!("  ({n})")).unwrap_or_default();
        println!("{:<9}{:>9.2} s  {:>5} items{rate}{note}", s.stage, s.seconds, s.items);
    }
    if let Some(m) = &report.metrics {
        println!("consistency {:.4} over {} cores", m.consistency, m.cores);
        for ms in &m.methods {
            for r in &ms.results {
                let op = r
                    .operating_point
                    .and_then(|p| p.accuracy.map(|a| format!("{a:.4} at θ={:.2}", p.threshold)))
                    .unwrap_or_else(|| "n/a".into());
                println!(
                    "{:<12}{} classes  accuracy {:.4}  operating point {op}",
                    ms.method.name(),
                    r.classes,
                    r.accuracy
                );
            }
            if let Some(a) = ms.auc {
                println!("{:<12}AUC {a:.4}", ms.method.name());
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = (|| -> Result<RunReport> {
        if let Some(j) = cli.jobs {
            rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build_global()
                .context("configuring worker threads")?;
        }
        let cfg = config(&cli)?;
        run(&command(&cli.command), &cfg)
    })();
    match result {
        Ok(report) => {
            print(&report);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("blurscan: {e:#}");
            ExitCode::FAILURE
        }
    }
}
