use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{extract_features, FeatureVector};
use super::prediction::Prediction;
use crate::coreprep::PatchStack;
use crate::error::{Error, Result};

/// Anything that maps a patch stack to class probabilities.
pub trait Classifier: Sync {
    fn class_count(&self) -> usize;
    fn classify(&self, stack: &PatchStack) -> Prediction;
}

pub const L2_PENALTY: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 500,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub l2: f64,
    pub samples: usize,
    pub final_loss: f64,
}

/// Multinomial logistic regression over standardized features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub class_count: usize,
    /// Per class: three feature weights then the bias.
    pub weights: Vec<[f64; 4]>,
    pub feature_mean: [f64; 3],
    pub feature_scale: [f64; 3],
    pub meta: TrainingMeta,
}

impl BaselineModel {
    /// A model whose every weight is zero (uniform predictions).
    pub fn zero(class_count: usize) -> Self {
        BaselineModel {
            class_count,
            weights: vec![[0.0; 4]; class_count],
            feature_mean: [0.0; 3],
            feature_scale: [1.0; 3],
            meta: TrainingMeta {
                epochs: 0,
                learning_rate: 0.0,
                seed: 0,
                l2: L2_PENALTY,
                samples: 0,
                final_loss: (class_count as f64).ln(),
            },
        }
    }

    fn standardize(&self, f: &FeatureVector) -> [f64; 3] {
        let a = f.as_array();
        std::array::from_fn(|i| (a[i] - self.feature_mean[i]) / self.feature_scale[i])
    }

    /// Linear class scores before the softmax.
    pub fn scores(&self, f: &FeatureVector) -> Vec<f64> {
        let z = self.standardize(f);
        self.weights
            .iter()
            .map(|w| w[0] * z[0] + w[1] * z[1] + w[2] * z[2] + w[3])
            .collect()
    }

    pub fn probabilities(&self, f: &FeatureVector) -> Vec<f64> {
        softmax(&self.scores(f))
    }

    pub fn predict_features(&self, f: &FeatureVector, core_id: &str, repeat: usize) -> Prediction {
        Prediction::from_normalized(core_id.to_string(), repeat, self.probabilities(f))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec_pretty(self).expect("model serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let m: BaselineModel =
            serde_json::from_slice(&text).map_err(|e| Error::format(path, 0, e.to_string()))?;
        if !matches!(m.class_count, 2 | 4)
            || m.weights.len() != m.class_count
            || m.weights.iter().flatten().any(|w| !w.is_finite())
        {
            return Err(Error::format(path, 0, "model must have 2 or 4 classes of finite weights"));
        }
        Ok(m)
    }
}

impl Classifier for BaselineModel {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn classify(&self, stack: &PatchStack) -> Prediction {
        self.predict_features(&extract_features(stack), &stack.core_id, stack.repeat)
    }
}

pub fn predict(model: &BaselineModel, stack: &PatchStack) -> Prediction {
    model.classify(stack)
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Full-batch gradient descent on the mean cross-entropy plus an L2 penalty
/// on the non-bias weights. Weights start at zero, so the result depends on
/// the data and hyperparameters only; the seed is recorded for provenance.
pub fn train_baseline(
    samples: &[(FeatureVector, u8)],
    class_count: usize,
    params: &TrainParams,
) -> Result<BaselineModel> {
    if !matches!(class_count, 2 | 4) {
        return Err(Error::Training(format!("class count {class_count} is not 2 or 4")));
    }
    if let Some((_, l)) = samples.iter().find(|(_, l)| *l as usize >= class_count) {
        return Err(Error::Training(format!("label {l} outside {class_count} classes")));
    }
    let mut present = vec![false; class_count];
    samples.iter().for_each(|(_, l)| present[*l as usize] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Training("training set holds fewer than two classes".into()));
    }
    let n = samples.len() as f64;
    let mut model = BaselineModel::zero(class_count);
    for i in 0..3 {
        let mean = samples.iter().map(|(f, _)| f.as_array()[i]).sum::<f64>() / n;
        let var = samples.iter().map(|(f, _)| (f.as_array()[i] - mean).powi(2)).sum::<f64>() / n;
        model.feature_mean[i] = mean;
        model.feature_scale[i] = if var > 1e-18 { var.sqrt() } else { 1.0 };
    }
    let z: Vec<[f64; 3]> = samples.iter().map(|(f, _)| model.standardize(f)).collect();

    let loss_of = |w: &[[f64; 4]]| -> f64 {
        let mut loss = 0.0;
        for (zi, (_, l)) in z.iter().zip(samples) {
            let s: Vec<f64> = w.iter().map(|w| w[0] * zi[0] + w[1] * zi[1] + w[2] * zi[2] + w[3]).collect();
            let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - s[*l as usize];
        }
        let reg: f64 = w.iter().map(|w| w[..3].iter().map(|v| v * v).sum::<f64>()).sum();
        loss / n + 0.5 * L2_PENALTY * reg
    };

    for _ in 0..params.epochs {
        let mut grad = vec![[0.0f64; 4]; class_count];
        for (zi, (_, l)) in z.iter().zip(samples) {
            let s: Vec<f64> = model
                .weights
                .iter()
                .map(|w| w[0] * zi[0] + w[1] * zi[1] + w[2] * zi[2] + w[3])
                .collect();
            let p = softmax(&s);
            for k in 0..class_count {
                let d = p[k] - if *l as usize == k { 1.0 } else { 0.0 };
                for j in 0..3 {
                    grad[k][j] += d * zi[j];
                }
                grad[k][3] += d;
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            for j in 0..4 {
                let reg = if j < 3 { L2_PENALTY * w[j] } else { 0.0 };
                w[j] -= params.learning_rate * (g[j] / n + reg);
            }
        }
    }
    model.meta = TrainingMeta {
        epochs: params.epochs,
        learning_rate: params.learning_rate,
        seed: params.seed,
        l2: L2_PENALTY,
        samples: samples.len(),
        final_loss: loss_of(&model.weights),
    };
    Ok(model)
}
