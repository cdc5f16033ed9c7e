//! Repeat aggregation, confidence thresholding and evaluation metrics.

mod aggregate;
mod metrics;
mod threshold;

pub use aggregate::{
    aggregate, aggregate_all, binarize_label, binarize_prediction, group_repeats, round_half_up,
    AggregateOptions, Decision, Method, RepeatSet, REPEATS,
};
pub use metrics::{confusion, consistency, core_consistency, roc_auc, ConfusionMatrix, Consistency, RocCurve};
pub use threshold::{
    apply_threshold, sweep, threshold_grid, SweepCurve, SweepPoint, Thresholded, TriageDecision,
    DEFAULT_TARGET_RATE,
};
