//! Loss, optimisation, metrics and the training loop.

mod loss;
mod metrics;
mod optim;
mod search;
mod trainer;

pub use loss::{class_weights_from_counts, weighted_ce};
pub use metrics::{fmt_auc, roc_auc, Confusion, MetricsReport};
pub use optim::{Optimizer, OptimizerKind};
pub use search::{random_search, selection_score, SearchResult, SearchSpace, Trial};
pub use trainer::{
    curves_csv, evaluate, predict, predict_logits, stratified_split, train, CurveRow, Split, Trainable,
    TrainConfig, TrainOutcome,
};
