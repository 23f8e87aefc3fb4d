use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use res_scan_core::bank::{Calibration, CalibrationSource};
use res_scan_core::categorize::{Algorithm, CategorizeRequest};
use res_scan_core::detect::DetectConfig;
use res_scan_core::eval::PromptConfig;
use res_scan_core::gpr::{read_truth, FrameFormat, Preprocess, SceneConfig};
use res_scan_core::segment::PromptSet;

use crate::commands::{self, Preset, DEFAULT_BANK_FRAMES};
use crate::service::{self, ServiceConfig, DEFAULT_PIXEL_BUDGET};

#[derive(Debug, Parser)]
#[command(name = "res-scan", version, about = "Prompted anomaly detection on GPR B-scans")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset: frames/ plus truth.json.
    Synth(SynthArgs),
    #[command(subcommand)]
    Bank(BankCommand),
    /// Detect anomalies in one frame from click prompts.
    Detect(DetectCli),
    /// Cluster the final regions of saved detection results.
    Categorize(CategorizeCli),
    /// Run the prompted-detection experiment on a dataset with truth.
    Eval(EvalCli),
    /// Serve the HTTP API.
    Serve(ServeCli),
}

#[derive(Debug, Subcommand)]
pub enum BankCommand {
    /// Fit non-target frames into a calibrated feature bank.
    Build(BankBuildCli),
}

fn parse_preprocess(s: &str) -> Result<Preprocess, String> {
    Preprocess::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `key = value` scene description; flags below override it.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub normal: Option<usize>,
    #[arg(long)]
    pub per_category: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// f32, csv, pgm or png. The integer formats quantize.
    #[arg(long, default_value = "f32")]
    pub format: FrameFormat,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    /// JSON experiment config replacing the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub reservoir_seed: Option<u64>,
    /// quantile:Q or sigma:K
    #[arg(long)]
    pub calibration: Option<Calibration>,
    /// loo or lofo
    #[arg(long)]
    pub calibration_source: Option<CalibrationSource>,
    /// e.g. surface:0.1,median:3,gain:linear,normalize
    #[arg(long, value_parser = parse_preprocess)]
    pub preprocess: Option<Preprocess>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<res_scan_core::eval::ExperimentConfig> {
        let mut cfg = commands::experiment_config(self.preset, self.config.as_deref())?;
        if let Some(l) = self.lambda {
            cfg.reservoir.lambda = l;
        }
        if let Some(s) = self.reservoir_seed {
            cfg.reservoir.seed = s;
        }
        if let Some(c) = self.calibration {
            cfg.calibration = c;
        }
        if let Some(c) = self.calibration_source {
            cfg.calibration_source = c;
        }
        if let Some(p) = &self.preprocess {
            cfg.preprocess = p.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct BankBuildCli {
    /// Frame directory, or a dataset directory holding frames/.
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the bank path with a .r2de extension.
    #[arg(long)]
    pub reservoir_out: Option<PathBuf>,
    /// Skip frames that have ground truth.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Use a random subset of this many eligible frames.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Summary JSON path; stdout when omitted.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct DetectOptions {
    /// Threshold overriding the bank's calibrated one.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, value_parser = parse_preprocess)]
    pub preprocess: Option<Preprocess>,
}

impl DetectOptions {
    fn detect_config(&self) -> DetectConfig {
        DetectConfig {
            beta: self.beta,
            stride: self.stride,
            ..DetectConfig::default()
        }
    }

    fn preprocess(&self) -> Preprocess {
        self.preprocess.clone().unwrap_or_default()
    }
}

#[derive(Debug, Args)]
pub struct DetectCli {
    #[arg(long)]
    pub frame: PathBuf,
    #[arg(long)]
    pub bank: PathBuf,
    /// Defaults to the bank path with a .r2de extension.
    #[arg(long)]
    pub reservoir: Option<PathBuf>,
    /// pos:x,y;x,y;neg:x,y
    #[arg(long)]
    pub prompts: PromptSet,
    /// Directory of `<frame_id>.pgm` masks replacing the region grower.
    #[arg(long)]
    pub external_masks: Option<PathBuf>,
    #[arg(long)]
    pub heatmap_png: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub options: DetectOptions,
}

#[derive(Debug, Args)]
pub struct CategorizeCli {
    /// Directory of detection result JSON files.
    #[arg(long)]
    pub results: PathBuf,
    /// Frame directory (or dataset directory) the results refer to.
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub reservoir: PathBuf,
    /// kmeans, ac[:average|ward|single|complete] or fcm[:m]
    #[arg(long, default_value = "ac")]
    pub algo: Algorithm,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ground truth JSON; adds Acc, ARI and NMI.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Cluster every final region, not only the primary one.
    #[arg(long)]
    pub all_finals: bool,
    /// Skip per-dimension standardization.
    #[arg(long)]
    pub raw_features: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalCli {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "5/5,5/3,5/1,5/0,3/3,3/1,3/0")]
    pub configs: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_BANK_FRAMES)]
    pub bank_frames: usize,
    /// Detection stride override.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct ServeCli {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Frame directory, or a dataset directory holding frames/ and truth.json.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long)]
    pub reservoir: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Frames with more pixels are detected as background jobs.
    #[arg(long, default_value_t = DEFAULT_PIXEL_BUDGET)]
    pub pixel_budget: usize,
    #[command(flatten)]
    pub options: DetectOptions,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let mut scene = match &a.scene {
                Some(p) => SceneConfig::parse(&fs::read_to_string(p)?)?,
                None => SceneConfig {
                    normal_frames: 20,
                    anomaly_frames_per_category: 8,
                    ..SceneConfig::default()
                },
            };
            if let Some(v) = a.normal {
                scene.normal_frames = v;
            }
            if let Some(v) = a.per_category {
                scene.anomaly_frames_per_category = v;
            }
            if let Some(v) = a.width {
                scene.width = v;
            }
            if let Some(v) = a.height {
                scene.height = v;
            }
            let summary = commands::synth(&a.out, &scene, a.seed, a.format)?;
            emit(None, &commands::to_json(&summary))
        }
        Command::Bank(BankCommand::Build(a)) => {
            let summary = commands::bank_build(&commands::BankBuild {
                frames: &a.frames,
                out: &a.out,
                reservoir_out: a.reservoir_out.as_deref(),
                truth: a.truth.as_deref(),
                limit: a.limit,
                seed: a.seed,
                config: a.model.resolve()?,
            })?;
            emit(a.summary.as_deref(), &commands::to_json(&summary))
        }
        Command::Detect(a) => {
            let (bank, w) = commands::load_model(&a.bank, a.reservoir.as_deref())?;
            let result = commands::detect_file(
                &commands::DetectArgs {
                    frame: &a.frame,
                    prompts: &a.prompts,
                    external_masks: a.external_masks.as_deref(),
                    preprocess: &a.options.preprocess(),
                    detect: &a.options.detect_config(),
                },
                &bank,
                &w,
            )?;
            if let Some(p) = &a.heatmap_png {
                fs::write(p, commands::heatmap_png(&result)?)?;
            }
            emit(a.out.as_deref(), &result.to_json())
        }
        Command::Categorize(a) => {
            let report = commands::categorize(&commands::CategorizeArgs {
                results: &a.results,
                frames: &a.frames,
                reservoir: &a.reservoir,
                truth: a.truth.as_deref(),
                request: CategorizeRequest {
                    algorithm: a.algo,
                    k: a.k,
                    seed: a.seed,
                    standardize: !a.raw_features,
                    primary_only: !a.all_finals,
                },
            })?;
            emit(a.out.as_deref(), &report.to_json())
        }
        Command::Eval(a) => {
            let mut config = a.model.resolve()?;
            if let Some(s) = a.stride {
                config.detect.stride = s;
            }
            let configs = PromptConfig::parse_list(&a.configs)?;
            let start = Instant::now();
            let report = commands::eval(&commands::EvalArgs {
                dataset: &a.dataset,
                configs: &configs,
                seed: a.seed,
                bank_frames: a.bank_frames,
                config,
            })?;
            for c in &report.configs {
                eprintln!(
                    "{}: auc {} f1 {:.3} (p {:.3}, r {:.3})",
                    c.prompts,
                    c.auc.map_or("n/a".into(), |v| format!("{v:.3}")),
                    c.f1,
                    c.precision,
                    c.recall
                );
            }
            eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
            emit(a.out.as_deref(), &report.to_json())
        }
        Command::Serve(a) => {
            let (bank, weights) = commands::load_model(&a.bank, a.reservoir.as_deref())?;
            let (frames_dir, found_truth) = commands::dataset_layout(&a.data);
            let truths = match a.truth.as_deref().or(found_truth.as_deref()) {
                Some(p) => Some(read_truth(p)?),
                None => None,
            };
            let config = ServiceConfig {
                frames: res_scan_core::gpr::load_frame_dir(&frames_dir)?,
                bank,
                weights,
                preprocess: a.options.preprocess(),
                detect: a.options.detect_config(),
                pixel_budget: a.pixel_budget,
                truths,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(config, &a.bind))
        }
    }
}
