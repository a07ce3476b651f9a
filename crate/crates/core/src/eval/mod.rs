//! Scoring, significance tests and the experiment protocols.

pub mod experiment;
pub mod metrics;

pub use experiment::{
    diff_cases, positive_class, run_curve, run_paradigm, split_corpus, train_method, with_threads, Comparison, CurvePoint, EmbeddingCorpus,
    CurveReport, DiffCase, EvalReport, ExperimentConfig, FeatureAssets, FeatureKind, Method, ParadigmResult,
    DEFAULT_CURVE_SIZES,
};
pub use metrics::{approximate_randomization, confusion, mcnemar, mcnemar_p, prf, ConfusionCounts, McNemar, Metric, Prf};
