//! Candidate-region identification from click prompts.
//!
//! The built-in segmenter is a smoothed flood fill; any external tool can
//! drive candidates instead by writing a binary mask image per frame.

mod grow;
mod mask;
mod prompts;

pub use grow::{region_grow, GrowParams};
pub use mask::{bounding_rect, component_rects, load_external_mask, Mask};
pub use prompts::PromptSet;
