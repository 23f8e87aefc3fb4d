//! The dual-directional echo state network and its frozen reservoir.

mod config;
mod eigen;
mod esn;
mod ridge;
mod weights;

pub use config::ReservoirConfig;
pub use eigen::{eigenvalues, spectral_radius};
pub use esn::{
    assemble_regression, assemble_regression_with, fit_patch, fit_patch_with, fit_readout,
    iterate_hidden_states, predict, DynamicFeature, HiddenStateGrid, Regression,
};
pub use ridge::solve_ridge;
pub use weights::{build_reservoir, Fingerprint, ReservoirWeights};
