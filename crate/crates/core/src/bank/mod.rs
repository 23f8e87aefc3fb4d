//! Normal-feature bank: patch extraction, nearest-neighbor scoring and
//! threshold calibration.

mod patch;
mod store;
mod threshold;

pub use patch::{extract_patches, Origin, PatchSpec};
pub use store::{anomaly_score, build_bank, FeatureBank, Provenance};
pub use threshold::{
    calibrate_threshold, classify, Calibration, CalibrationSource, Label, MIN_CALIBRATION_SCORES,
};
