//! Candidate refinement: per-point scoring, patch merging, final regions.

mod heatmap;
mod merge;
mod pipeline;
mod render;

pub use heatmap::{score_candidate_region, Heatmap};
pub use merge::{merge_anomalous_patches, MergedRegion};
pub use render::{render_grid_png, render_heatmap_png};
pub use pipeline::{
    detect, detect_raw, parse_result_json, CandidateSource, ConfigEcho, DetectConfig,
    DetectionResult, DetectionStatus, FinalRegion,
};
