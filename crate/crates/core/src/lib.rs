//! Reservoir-refined anomaly detection for ground-penetrating radar B-scans.
//!
//! The pipeline:
//!
//! 1. [`gpr`] loads and preprocesses frames (or synthesizes them).
//! 2. [`reservoir`] fits local patches with a dual-directional echo state
//!    network; the ridge readout `[W_out a]` is the patch's dynamic feature.
//! 3. [`bank`] collects features of non-target patches and scores queries by
//!    nearest-neighbor distance.
//! 4. [`segment`] turns click prompts into a candidate rectangle.
//! 5. [`detect`] scores every point of the candidate and merges anomalous
//!    patches into final regions.
//! 6. [`categorize`] refits final regions and clusters their features.
//! 7. [`eval`] holds the metrics and the synthetic experiment harness.

mod codec;
pub mod bank;
pub mod categorize;
pub mod detect;
pub mod error;
pub mod eval;
pub mod gpr;
pub mod region;
pub mod reservoir;
pub mod segment;

pub use error::{Error, Result};
pub use region::Region;
