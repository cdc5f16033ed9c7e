//! Triage outputs on disk: decision CSVs written by `triage`, and the
//! sweep/confusion/ROC files plus `summary.json` written by `report`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use blurscan_core::triage::{
    confusion, roc_auc, sweep, threshold_grid, ConfusionMatrix, Decision, Method, RocCurve, SweepCurve,
    SweepPoint,
};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::io::{write_json, write_text};
use crate::plan::RunLayout;
use crate::svg;

pub const TRIAGE_META: &str = "triage.json";
pub const CONSISTENCY_FILE: &str = "consistency.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Written by `triage` next to the decision files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriageMeta {
    pub class_count: usize,
    pub methods: Vec<Method>,
    /// Cores with a complete set of three repeats.
    pub cores: usize,
    /// Cores dropped for lacking a repeat.
    pub incomplete_cores: Vec<String>,
    pub consistency: f64,
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub class_count: usize,
    pub cores: usize,
    pub incomplete_cores: Vec<String>,
    pub consistency: f64,
    pub target_indeterminate_rate: f64,
    pub methods: Vec<MethodSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Binary ROC area from the positive-class probability; absent when
    /// the test set holds a single binary class.
    pub auc: Option<f64>,
    pub results: Vec<ClassResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    pub classes: usize,
    pub decisions: usize,
    /// Accuracy with every decision determinate (θ = 0).
    pub accuracy: f64,
    pub theta_star: Option<f64>,
    pub operating_point: Option<SweepPoint>,
    pub confusion: ConfusionMatrix,
}

impl Summary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

impl MethodSummary {
    pub fn classes(&self, k: usize) -> Option<&ClassResult> {
        self.results.iter().find(|r| r.classes == k)
    }
}

/// Class counts reported for a run whose classifier emits `k` classes.
pub fn class_counts(k: usize) -> Vec<usize> {
    if k == 4 {
        vec![4, 2]
    } else {
        vec![k]
    }
}

pub fn write_decisions(path: &Path, decisions: &[Decision], class_count: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut head = vec!["core_id".to_string(), "repeat".into(), "class".into(), "confidence".into(), "truth".into()];
    head.extend((0..class_count).map(|k| format!("p{k}")));
    w.write_record(&head)?;
    for d in decisions {
        ensure!(d.probabilities.len() == class_count, "decision for {} has the wrong class count", d.core_id);
        let mut rec = vec![
            d.core_id.clone(),
            d.repeat.map(|r| r.to_string()).unwrap_or_default(),
            d.class.to_string(),
            d.confidence.to_string(),
            d.truth.map(|t| t.to_string()).unwrap_or_default(),
        ];
        rec.extend(d.probabilities.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_decisions(path: &Path, method: Method, class_count: usize) -> Result<Vec<Decision>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let ctx = || format!("{}: data row {}", path.display(), i + 1);
        let rec = rec.with_context(ctx)?;
        ensure!(rec.len() == 5 + class_count, "{}: expected {} fields", ctx(), 5 + class_count);
        let opt = |s: &str| -> Result<Option<usize>> {
            if s.is_empty() {
                Ok(None)
            } else {
                Ok(Some(s.parse().with_context(ctx)?))
            }
        };
        let probabilities = rec
            .iter()
            .skip(5)
            .map(|v| v.parse::<f64>().with_context(ctx))
            .collect::<Result<Vec<_>>>()?;
        out.push(Decision {
            core_id: rec[0].to_string(),
            method,
            repeat: opt(&rec[1])?,
            class: rec[2].parse().with_context(ctx)?,
            confidence: rec[3].parse().with_context(ctx)?,
            truth: opt(&rec[4])?,
            probabilities,
        });
    }
    Ok(out)
}

fn sweep_csv(curve: &SweepCurve) -> String {
    let mut s = String::from("threshold,accuracy,indeterminate_fraction,determinate\n");
    for p in &curve.points {
        let acc = p.accuracy.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{acc},{},{}", p.threshold, p.indeterminate_fraction, p.determinate);
    }
    s
}

fn confusion_csv(m: &ConfusionMatrix) -> String {
    let names = svg::class_names(m.class_count);
    let mut s = format!("truth/predicted,{}\n", names.join(","));
    for (t, row) in m.counts.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "{},{}", names[t], cells.join(","));
    }
    let _ = writeln!(s, "accuracy,{}", m.accuracy());
    s
}

fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("fpr,tpr\n");
    for (f, t) in &curve.points {
        let _ = writeln!(s, "{f},{t}");
    }
    s
}

fn truths(ds: &[Decision]) -> Result<Vec<usize>> {
    ds.iter()
        .map(|d| d.truth.with_context(|| format!("decision for {} has no ground truth", d.core_id)))
        .collect()
}

/// Compute every curve and matrix from the decision files and write the
/// report directory. Returns the summary and the files written.
pub fn emit_report(cfg: &PipelineConfig, layout: &RunLayout) -> Result<(Summary, Vec<PathBuf>)> {
    let meta_path = layout.triage_dir().join(TRIAGE_META);
    let meta: TriageMeta = crate::io::read_json(&meta_path)?;
    let dir = layout.report_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let grid = threshold_grid(cfg.triage.grid_points);
    let target = cfg.triage.target_rate;
    let mut files = Vec::new();
    let mut methods = Vec::new();

    for &m in &cfg.triage.methods {
        if !meta.methods.contains(&m) {
            bail!("method `{m}` was not triaged; rerun `triage`");
        }
        let mut results = Vec::new();
        let mut auc = None;
        for k in class_counts(meta.class_count) {
            let ds = read_decisions(&layout.decisions(m, k), m, k)?;
            ensure!(!ds.is_empty(), "no `{m}` decisions to report");
            let truth = truths(&ds)?;
            let curve = sweep(&ds, &grid, target)?;
            let matrix = confusion(truth.iter().copied().zip(ds.iter().map(|d| d.class)), k)?;
            let base = dir.join(format!("confusion_{m}_{k}"));
            let title = format!("{m}, {k} classes");
            files.push(write_text(&base.with_extension("csv"), &confusion_csv(&matrix))?);
            files.push(write_text(&base.with_extension("svg"), &svg::confusion_svg(&matrix, &title))?);
            files.push(write_json(&base.with_extension("json"), &matrix)?);
            if k == meta.class_count {
                let base = dir.join(format!("sweep_{m}"));
                files.push(write_text(&base.with_extension("csv"), &sweep_csv(&curve))?);
                files.push(write_text(&base.with_extension("svg"), &svg::sweep_svg(&curve, &title))?);
            }
            if k == 2 {
                let samples: Vec<(bool, f64)> = ds.iter().zip(&truth).map(|(d, &t)| (t == 1, d.positive_score())).collect();
                match roc_auc(&samples) {
                    Ok(roc) => {
                        let base = dir.join(format!("roc_{m}"));
                        files.push(write_text(&base.with_extension("csv"), &roc_csv(&roc))?);
                        files.push(write_text(&base.with_extension("svg"), &svg::roc_svg(&roc, &format!("{m} ROC")))?);
                        auc = Some(roc.auc);
                    }
                    Err(e) => log::warn!("{m}: no ROC curve: {e}"),
                }
            }
            results.push(ClassResult {
                classes: k,
                decisions: ds.len(),
                accuracy: matrix.accuracy(),
                theta_star: curve.theta_star,
                operating_point: curve.operating_point().copied(),
                confusion: matrix,
            });
        }
        methods.push(MethodSummary { method: m, auc, results });
    }

    let summary = Summary {
        class_count: meta.class_count,
        cores: meta.cores,
        incomplete_cores: meta.incomplete_cores,
        consistency: meta.consistency,
        target_indeterminate_rate: target,
        methods,
    };
    files.push(write_json(&dir.join(SUMMARY_FILE), &summary)?);
    Ok((summary, files))
}
