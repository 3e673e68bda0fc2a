//! Ensemble diagnostics and evaluation metrics.

mod decomposition;
mod diversity;
mod metrics;
mod rademacher;

pub use decomposition::{ambiguity_identity, bvc_decompose, DecompositionReport};
pub use diversity::{pairwise_diversity, DiversityMatrix};
pub use metrics::{
    cumulative_score, regression_metrics, sign_accuracy, trait_metrics, RegressionMetrics,
    TraitMetrics,
};
pub use rademacher::{rademacher_group_ratio, rademacher_linear, GroupRatio, RademacherEstimate};
