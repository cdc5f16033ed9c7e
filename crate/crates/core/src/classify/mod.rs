//! Classifier contract, the feature-based baseline and prediction I/O.

mod features;
mod model;
mod prediction;

pub use features::{brown_fraction, extract_features, image_features, is_brown, FeatureVector, WHITE_LEVEL};
pub use model::{
    predict, softmax, train_baseline, BaselineModel, Classifier, TrainParams, TrainingMeta, L2_PENALTY,
};
pub use prediction::{import_predictions, write_predictions, Prediction, IMPORT_SUM_BAND, SUM_TOLERANCE};
