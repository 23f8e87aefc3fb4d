//! B-scan frames: loading, preprocessing and synthetic generation.

mod frame;
pub mod io;
pub mod preprocess;
pub mod synth;

pub use frame::{BScanFrame, Category, FrameMeta, Grid, GroundTruthRegion};
pub use io::{
    decode_grid, encode_grid, encode_pgm, encode_png_gray, frame_id_from_path, list_frame_files,
    load_frame, load_frame_auto, load_frame_dir, read_truth, save_frame, write_truth, FrameFormat,
};
pub use preprocess::{
    median_filter, normalize, remove_surface_reflection, time_gain, GainProfile, Preprocess,
    PreprocessStep,
};
pub use synth::{synth_generate, Background, FrameSpec, Insertion, SceneConfig};
