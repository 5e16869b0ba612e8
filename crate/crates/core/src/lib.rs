//! Multi-metric feature-template matching with biometric evaluation.
//!
//! The crate covers the whole measurement path of a verification or
//! identification experiment:
//!
//! * [`templates`]: template files, validation, normalization and
//!   leave-one-session-out folds;
//! * [`metrics`]: seven distance kernels between non-negative feature vectors;
//! * [`matcher`]: probe x gallery score matrices, genuine/impostor labeling
//!   and per-probe subject rankings;
//! * [`evaluator`]: ROC, TAR at a target FAR, EER, AUC, CMC and cross-fold
//!   aggregation;
//! * [`cli`]: the `spectramatch` command-line tool.

pub mod cli;
pub mod error;
pub mod evaluator;
pub mod matcher;
pub mod metrics;
pub mod templates;

pub use error::{Error, Result};
pub use evaluator::{
    aggregate_folds, auc, cmc_curve, eer, identification_scores, roc_curve, tar_at_far, CmcCurve,
    CrossValSummary, EvalReport, RocCurve,
};
pub use matcher::{
    label_scores, rank_from_class_scores, rank_gallery, score_matrix, Fusion, LabeledScores,
    RankList, SampleKey, ScoreMatrix,
};
pub use metrics::{distance, Distance, MetricId};
pub use templates::{
    l1_normalize, load_templates, split_folds, FeatureTemplate, FoldSpec, LayerTag, LoadOptions,
    TemplateFormat, TemplateSet,
};
