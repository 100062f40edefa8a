//! Correlation metrics, pair scoring, cross-validation and the
//! sample-efficiency sweep.

pub mod kfold;
pub mod metrics;
pub mod sweep;

pub use kfold::{
    check_partition, fold_assignment, split, kfold_eval, kfold_eval_trained, score_pairs, EvalOptions, EvalReport,
    FoldReport, DEFAULT_FOLDS,
};
pub use metrics::{average_ranks, pearson, spearman};
pub use sweep::{
    default_ratios, parse_sweep_csv, sample_efficiency_sweep, sample_efficiency_sweep_trained, subset_size,
    SweepPoint, SweepResult,
};
