//! Detection and clustering metrics, and the synthetic experiment harness.

mod experiment;
mod metrics;

pub use experiment::{
    run_experiment, CategorizationReport, CategorizeConfig, ConfigReport, Dataset, DetectionRecord,
    DetectionsUsed, EvalReport, ExperimentConfig, PromptConfig,
};
pub use metrics::{auroc, detection_f1, iou, Detection, F1Score};
