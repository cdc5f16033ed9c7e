use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::classify::Prediction;
use crate::error::{Error, Result};

pub const REPEATS: usize = 3;

/// Merge a 4-class label into negative (0, 1) or positive (2, 3).
pub fn binarize_label(label: usize) -> Result<usize> {
    match label {
        0 | 1 => Ok(0),
        2 | 3 => Ok(1),
        _ => Err(Error::param(format!("label {label} is not a 4-class score"))),
    }
}

/// Merge 4-class probabilities into (negative, positive).
pub fn binarize_prediction(p: &Prediction) -> Result<Prediction> {
    if p.class_count != 4 {
        return Err(Error::param(format!(
            "binarize needs a 4-class prediction, got {} classes",
            p.class_count
        )));
    }
    let q = &p.probabilities;
    Ok(Prediction::from_normalized(
        p.core_id.clone(),
        p.repeat,
        vec![q[0] + q[1], q[2] + q[3]],
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    AllScans,
    MaxCi,
    WeightedCi,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::AllScans, Method::MaxCi, Method::WeightedCi];

    pub fn name(self) -> &'static str {
        match self {
            Method::AllScans => "all-scans",
            Method::MaxCi => "max-ci",
            Method::WeightedCi => "weighted-ci",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::param(format!("unknown triage method `{s}`")))
    }
}

/// The three scans of one specimen, ordered by repeat index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatSet {
    pub core_id: String,
    pub truth: Option<usize>,
    pub predictions: [Prediction; REPEATS],
}

impl RepeatSet {
    pub fn new(core_id: impl Into<String>, truth: Option<usize>, mut preds: Vec<Prediction>) -> Result<Self> {
        let core_id = core_id.into();
        let fail = |m: String| Error::Aggregation(format!("{core_id}: {m}"));
        if preds.len() != REPEATS {
            return Err(fail(format!("expected {REPEATS} predictions, found {}", preds.len())));
        }
        preds.sort_by_key(|p| p.repeat);
        if preds.iter().enumerate().any(|(i, p)| p.repeat != i) {
            return Err(fail("repeat indices must be 0, 1 and 2".into()));
        }
        let k = preds[0].class_count;
        if preds.iter().any(|p| p.class_count != k) {
            return Err(fail("class counts differ between repeats".into()));
        }
        if preds.iter().any(|p| p.core_id != core_id) {
            return Err(fail("prediction for another core".into()));
        }
        if truth.is_some_and(|t| t >= k) {
            return Err(fail(format!("truth {} outside {k} classes", truth.unwrap())));
        }
        let predictions: [Prediction; REPEATS] = preds.try_into().expect("length checked");
        Ok(RepeatSet {
            core_id,
            truth,
            predictions,
        })
    }

    pub fn class_count(&self) -> usize {
        self.predictions[0].class_count
    }

    /// The 2-class view of a 4-class set.
    pub fn binarized(&self) -> Result<RepeatSet> {
        let preds = self
            .predictions
            .iter()
            .map(binarize_prediction)
            .collect::<Result<Vec<_>>>()?;
        let truth = self.truth.map(binarize_label).transpose()?;
        RepeatSet::new(self.core_id.clone(), truth, preds)
    }
}

/// Group predictions by core into repeat sets. Cores without exactly three
/// distinct repeats are returned separately instead of failing the batch.
pub fn group_repeats(
    preds: &[Prediction],
    truth: &BTreeMap<String, usize>,
) -> Result<(Vec<RepeatSet>, Vec<String>)> {
    let mut by_core: BTreeMap<&str, Vec<Prediction>> = BTreeMap::new();
    for p in preds {
        by_core.entry(&p.core_id).or_default().push(p.clone());
    }
    let mut sets = Vec::new();
    let mut incomplete = Vec::new();
    for (id, group) in by_core {
        let mut reps: Vec<usize> = group.iter().map(|p| p.repeat).collect();
        reps.sort_unstable();
        if reps != [0, 1, 2] {
            incomplete.push(id.to_string());
            continue;
        }
        sets.push(RepeatSet::new(id, truth.get(id).copied(), group)?);
    }
    Ok((sets, incomplete))
}

/// A decision before thresholding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub core_id: String,
    pub method: Method,
    /// Source repeat for all-scans and max-ci.
    pub repeat: Option<usize>,
    pub class: usize,
    pub confidence: f64,
    pub truth: Option<usize>,
    /// Class distribution behind the decision; weighted-ci uses the
    /// confidence-weighted mean of the three repeats.
    pub probabilities: Vec<f64>,
}

impl Decision {
    pub fn class_count(&self) -> usize {
        self.probabilities.len()
    }

    /// Score of the positive class for ROC analysis: `p1` for two classes,
    /// `p2 + p3` for four.
    pub fn positive_score(&self) -> f64 {
        match self.probabilities.len() {
            2 => self.probabilities[1],
            _ => self.probabilities[2] + self.probabilities[3],
        }
    }

    pub fn is_correct(&self) -> Option<bool> {
        self.truth.map(|t| t == self.class)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AggregateOptions {
    /// Divide the weighted class sum by the total confidence.
    pub normalize_weighted: bool,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        AggregateOptions {
            normalize_weighted: true,
        }
    }
}

pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

fn single(set: &RepeatSet, method: Method, p: &Prediction) -> Decision {
    Decision {
        core_id: set.core_id.clone(),
        method,
        repeat: Some(p.repeat),
        class: p.predicted_class,
        confidence: p.confidence,
        truth: set.truth,
        probabilities: p.probabilities.clone(),
    }
}

/// Aggregate one repeat set. All-scans yields three decisions, the other
/// methods one.
pub fn aggregate(set: &RepeatSet, method: Method, opts: &AggregateOptions) -> Result<Vec<Decision>> {
    let preds = &set.predictions;
    match method {
        Method::AllScans => Ok(preds.iter().map(|p| single(set, method, p)).collect()),
        Method::MaxCi => {
            let mut best = &preds[0];
            for p in &preds[1..] {
                if p.confidence > best.confidence {
                    best = p;
                }
            }
            Ok(vec![single(set, method, best)])
        }
        Method::WeightedCi => {
            let total: f64 = preds.iter().map(|p| p.confidence).sum();
            if !(total > 0.0) {
                return Err(Error::Aggregation(format!("{}: total confidence is zero", set.core_id)));
            }
            let weighted: f64 = preds.iter().map(|p| p.predicted_class as f64 * p.confidence).sum();
            let score = if opts.normalize_weighted { weighted / total } else { weighted };
            let top = (set.class_count() - 1) as f64;
            let class = round_half_up(score).clamp(0.0, top) as usize;
            let k = set.class_count();
            let probabilities = (0..k)
                .map(|c| preds.iter().map(|p| p.probabilities[c] * p.confidence).sum::<f64>() / total)
                .collect();
            Ok(vec![Decision {
                core_id: set.core_id.clone(),
                method,
                repeat: None,
                class,
                confidence: total / REPEATS as f64,
                truth: set.truth,
                probabilities,
            }])
        }
    }
}

/// Aggregate every set with one method.
pub fn aggregate_all(sets: &[RepeatSet], method: Method, opts: &AggregateOptions) -> Result<Vec<Decision>> {
    let mut out = Vec::with_capacity(sets.len() * if method == Method::AllScans { 3 } else { 1 });
    for s in sets {
        out.extend(aggregate(s, method, opts)?);
    }
    Ok(out)
}
