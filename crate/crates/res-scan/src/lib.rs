//! Command line and HTTP front ends for `res_scan_core`.

pub mod cli;
pub mod commands;
pub mod service;
