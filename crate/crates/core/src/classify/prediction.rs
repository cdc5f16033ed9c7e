use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SUM_TOLERANCE: f64 = 1e-6;
/// Imported rows whose probabilities sum within this band are renormalized.
pub const IMPORT_SUM_BAND: (f64, f64) = (0.99, 1.01);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub core_id: String,
    pub repeat: usize,
    pub class_count: usize,
    pub probabilities: Vec<f64>,
    pub predicted_class: usize,
    /// Maximum class probability.
    pub confidence: f64,
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

impl Prediction {
    /// Validating constructor.
    pub fn new(core_id: impl Into<String>, repeat: usize, probabilities: Vec<f64>) -> Result<Self> {
        if !matches!(probabilities.len(), 2 | 4) {
            return Err(Error::param(format!(
                "prediction needs 2 or 4 probabilities, got {}",
                probabilities.len()
            )));
        }
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::param("probabilities must be finite and nonnegative"));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::param(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self::from_normalized(core_id.into(), repeat, probabilities))
    }

    pub(crate) fn from_normalized(core_id: String, repeat: usize, probabilities: Vec<f64>) -> Self {
        let predicted_class = argmax(&probabilities);
        Prediction {
            core_id,
            repeat,
            class_count: probabilities.len(),
            confidence: probabilities[predicted_class],
            predicted_class,
            probabilities,
        }
    }
}

fn header(class_count: usize) -> Vec<String> {
    let mut h = vec!["core_id".to_string(), "repeat".to_string()];
    h.extend((0..class_count).map(|k| format!("p{k}")));
    h
}

/// Write predictions as `core_id,repeat,p0..pK`. Probabilities use Rust's
/// shortest round-trip formatting, so a reimport is exact.
pub fn write_predictions(path: impl AsRef<Path>, preds: &[Prediction]) -> Result<()> {
    let path = path.as_ref();
    let k = preds.first().map_or(4, |p| p.class_count);
    if preds.iter().any(|p| p.class_count != k) {
        return Err(Error::param("mixed class counts in one prediction file"));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(header(k)).map_err(io)?;
    for p in preds {
        let mut rec = vec![p.core_id.clone(), p.repeat.to_string()];
        rec.extend(p.probabilities.iter().map(|v| v.to_string()));
        w.write_record(rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read externally computed predictions. Rows are numbered from 1 for the
/// first data row.
pub fn import_predictions(path: impl AsRef<Path>, class_count: usize) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    if !matches!(class_count, 2 | 4) {
        return Err(Error::param("class count must be 2 or 4"));
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, e.into()))?;
    let head = r.headers().map_err(|e| Error::Import {
        row: 0,
        message: e.to_string(),
    })?;
    let want = header(class_count);
    if head.iter().ne(want.iter().map(String::as_str)) {
        return Err(Error::Import {
            row: 0,
            message: format!("header must be `{}`", want.join(",")),
        });
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let bad = |message: String| Error::Import { row, message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != class_count + 2 {
            return Err(bad(format!("expected {} fields, found {}", class_count + 2, rec.len())));
        }
        let core_id = rec[0].to_string();
        let repeat: usize = rec[1].parse().map_err(|_| bad(format!("bad repeat `{}`", &rec[1])))?;
        let mut p = Vec::with_capacity(class_count);
        for v in rec.iter().skip(2) {
            let x: f64 = v.parse().map_err(|_| bad(format!("bad probability `{v}`")))?;
            if !x.is_finite() || x < 0.0 {
                return Err(bad(format!("probability `{v}` must be finite and nonnegative")));
            }
            p.push(x);
        }
        let sum: f64 = p.iter().sum();
        if !(IMPORT_SUM_BAND.0..=IMPORT_SUM_BAND.1).contains(&sum) {
            return Err(bad(format!("probabilities sum to {sum}")));
        }
        if !seen.insert((core_id.clone(), repeat)) {
            return Err(bad(format!("duplicate ({core_id}, {repeat})")));
        }
        p.iter_mut().for_each(|v| *v /= sum);
        out.push(Prediction::from_normalized(core_id, repeat, p));
    }
    Ok(out)
}
