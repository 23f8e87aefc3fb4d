//! Subcommand bodies. Each returns the JSON it would print or write so the
//! binary and the tests share one code path.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use res_scan_core::bank::{build_bank, Calibration, CalibrationSource, FeatureBank, PatchSpec};
use res_scan_core::categorize::{categorize_results, Algorithm, CategorizeReport, CategorizeRequest};
use res_scan_core::detect::{
    detect_raw, parse_result_json, render_heatmap_png, DetectConfig, DetectionResult,
};
use res_scan_core::eval::{run_experiment, Dataset, EvalReport, ExperimentConfig, PromptConfig};
use res_scan_core::gpr::{
    load_frame_auto, load_frame_dir, read_truth, save_frame, synth_generate, write_truth, BScanFrame,
    FrameFormat, GroundTruthRegion, Preprocess, SceneConfig,
};
use res_scan_core::reservoir::{build_reservoir, Fingerprint, ReservoirConfig, ReservoirWeights};
use res_scan_core::segment::{load_external_mask, PromptSet};

pub const RESERVOIR_EXT: &str = "r2de";
pub const DEFAULT_BANK_FRAMES: usize = 20;

/// Named parameter sets; `desk` suits 128×128 frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Preset {
    #[default]
    Desk,
    Base,
}

impl Preset {
    pub fn config(self) -> ExperimentConfig {
        match self {
            Preset::Desk => ExperimentConfig::desk(),
            Preset::Base => ExperimentConfig::default(),
        }
    }
}

/// Preset, replaced wholesale by a JSON config file when one is given.
pub fn experiment_config(preset: Preset, file: Option<&Path>) -> Result<ExperimentConfig> {
    match file {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(preset.config()),
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// `DIR/frames` and `DIR/truth.json` when present, else `DIR` itself.
pub fn dataset_layout(dir: &Path) -> (PathBuf, Option<PathBuf>) {
    let frames = dir.join("frames");
    let frames = if frames.is_dir() { frames } else { dir.to_path_buf() };
    let truth = dir.join("truth.json");
    (frames, truth.is_file().then_some(truth))
}

/// Reservoir blob stored next to a bank: same stem, `.r2de`.
pub fn reservoir_path_for(bank: &Path) -> PathBuf {
    bank.with_extension(RESERVOIR_EXT)
}

/// Loads a bank with its reservoir and checks they belong together.
pub fn load_model(bank: &Path, reservoir: Option<&Path>) -> Result<(FeatureBank, ReservoirWeights)> {
    let rpath = reservoir.map(Path::to_path_buf).unwrap_or_else(|| reservoir_path_for(bank));
    let fb = FeatureBank::load(bank).with_context(|| format!("loading bank {}", bank.display()))?;
    let w = ReservoirWeights::load(&rpath)
        .with_context(|| format!("loading reservoir {}", rpath.display()))?;
    if fb.fingerprint() != w.fingerprint() {
        bail!(
            "bank {} was built with reservoir {}, but {} has fingerprint {}",
            bank.display(),
            fb.fingerprint(),
            rpath.display(),
            w.fingerprint()
        );
    }
    Ok((fb, w))
}

/// `count` ids drawn without replacement, returned sorted.
pub fn select_bank_frames(candidates: &[String], count: usize, seed: u64) -> Result<Vec<String>> {
    if candidates.len() < count {
        bail!("need {count} non-target frames, found {}", candidates.len());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<String> = rand::seq::index::sample(&mut rng, candidates.len(), count)
        .into_iter()
        .map(|i| candidates[i].clone())
        .collect();
    picked.sort();
    Ok(picked)
}

fn without_truth(frames: &[BScanFrame], truths: &[GroundTruthRegion]) -> Vec<String> {
    let marked: BTreeSet<&str> = truths.iter().map(|t| t.frame_id.as_str()).collect();
    frames
        .iter()
        .filter(|f| !marked.contains(f.id.as_str()))
        .map(|f| f.id.clone())
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSummary {
    pub seed: u64,
    pub scene: SceneConfig,
    pub format: String,
    pub frames: Vec<String>,
    pub truths: usize,
}

/// Writes `out/frames/<id>.<ext>` and `out/truth.json`.
pub fn synth(out: &Path, scene: &SceneConfig, seed: u64, format: FrameFormat) -> Result<SynthSummary> {
    let (frames, truths) = synth_generate(scene, seed)?;
    let dir = out.join("frames");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for f in &frames {
        save_frame(f, dir.join(format!("{}.{}", f.id, format.extension())), format)?;
    }
    write_truth(out.join("truth.json"), &truths)?;
    Ok(SynthSummary {
        seed,
        scene: scene.clone(),
        format: format.extension().to_owned(),
        frames: frames.iter().map(|f| f.id.clone()).collect(),
        truths: truths.len(),
    })
}

pub struct BankBuild<'a> {
    pub frames: &'a Path,
    pub out: &'a Path,
    pub reservoir_out: Option<&'a Path>,
    /// Frames listed here are left out.
    pub truth: Option<&'a Path>,
    /// Random subset size; all eligible frames when unset.
    pub limit: Option<usize>,
    pub seed: u64,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankSummary {
    pub fingerprint: Fingerprint,
    pub entries: usize,
    pub dim: usize,
    pub beta: f64,
    pub frames: Vec<String>,
    pub reservoir: ReservoirConfig,
    pub patch: PatchSpec,
    pub preprocess: Preprocess,
    pub calibration: Calibration,
    pub calibration_source: CalibrationSource,
}

pub fn bank_build(args: &BankBuild<'_>) -> Result<BankSummary> {
    let (frames_dir, _) = dataset_layout(args.frames);
    let raw = load_frame_dir(&frames_dir)?;
    let truths = match args.truth {
        Some(p) => read_truth(p)?,
        None => Vec::new(),
    };
    let eligible = without_truth(&raw, &truths);
    let ids = match args.limit {
        Some(n) => select_bank_frames(&eligible, n, args.seed)?,
        None => eligible,
    };
    if ids.is_empty() {
        bail!("no non-target frames in {}", frames_dir.display());
    }
    let cfg = &args.config;
    let keep: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let frames: Vec<BScanFrame> = raw
        .iter()
        .filter(|f| keep.contains(f.id.as_str()))
        .map(|f| cfg.preprocess.apply(f))
        .collect::<res_scan_core::Result<_>>()?;
    let w = build_reservoir(&cfg.reservoir)?;
    let mut bank = build_bank(&frames, &w, &cfg.patch, cfg.reservoir.lambda)?;
    let beta = bank.calibrate(cfg.calibration, cfg.calibration_source)?;
    bank.save(args.out)?;
    let rpath = args
        .reservoir_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| reservoir_path_for(args.out));
    w.save(&rpath)?;
    Ok(BankSummary {
        fingerprint: w.fingerprint(),
        entries: bank.len(),
        dim: bank.dim(),
        beta,
        frames: ids,
        reservoir: cfg.reservoir,
        patch: cfg.patch,
        preprocess: cfg.preprocess.clone(),
        calibration: cfg.calibration,
        calibration_source: cfg.calibration_source,
    })
}

pub struct DetectArgs<'a> {
    pub frame: &'a Path,
    pub prompts: &'a PromptSet,
    pub external_masks: Option<&'a Path>,
    pub preprocess: &'a Preprocess,
    pub detect: &'a DetectConfig,
}

pub fn detect_file(
    args: &DetectArgs<'_>,
    bank: &FeatureBank,
    w: &ReservoirWeights,
) -> Result<DetectionResult> {
    let raw = load_frame_auto(args.frame)?;
    let mask = match args.external_masks {
        Some(dir) => Some(load_external_mask(
            &raw.id,
            dir.join(format!("{}.pgm", raw.id)),
            raw.width(),
            raw.height(),
        )?),
        None => None,
    };
    Ok(detect_raw(&raw, args.preprocess, args.prompts, bank, w, args.detect, mask.as_ref())?)
}

/// Heatmap PNG of a result, or an error when no candidate was scored.
pub fn heatmap_png(result: &DetectionResult) -> Result<Vec<u8>> {
    let Some(heatmap) = result.heatmap.as_ref() else {
        bail!("frame {} has no candidate, so no heatmap", result.frame_id);
    };
    Ok(render_heatmap_png(heatmap, result.width, result.height)?)
}

/// Result files in `dir` (`*.json`), sorted by name.
pub fn load_results(dir: &Path) -> Result<Vec<DetectionResult>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p)?;
            parse_result_json(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

/// Loads the frames results refer to, preprocessed with each result's own
/// echoed chain (the default chain when none was echoed).
pub fn frames_for_results(
    results: &[DetectionResult],
    frames_dir: &Path,
) -> Result<HashMap<String, BScanFrame>> {
    let raw: HashMap<String, BScanFrame> = load_frame_dir(frames_dir)?
        .into_iter()
        .map(|f| (f.id.clone(), f))
        .collect();
    let mut out = HashMap::new();
    for r in results {
        if out.contains_key(&r.frame_id) {
            continue;
        }
        let frame = raw
            .get(&r.frame_id)
            .with_context(|| format!("frame {} not found in {}", r.frame_id, frames_dir.display()))?;
        let chain = r.config.preprocess.clone().unwrap_or_default();
        out.insert(r.frame_id.clone(), chain.apply(frame)?);
    }
    Ok(out)
}

pub struct CategorizeArgs<'a> {
    pub results: &'a Path,
    pub frames: &'a Path,
    pub reservoir: &'a Path,
    pub truth: Option<&'a Path>,
    pub request: CategorizeRequest,
}

pub fn categorize(args: &CategorizeArgs<'_>) -> Result<CategorizeReport> {
    let results = load_results(args.results)?;
    if results.is_empty() {
        bail!("no result files in {}", args.results.display());
    }
    let w = ReservoirWeights::load(args.reservoir)?;
    let lambda = results[0].config.reservoir.lambda;
    if results.iter().any(|r| r.config.reservoir.lambda != lambda) {
        bail!("results were produced with different ridge lambdas");
    }
    let (frames_dir, _) = dataset_layout(args.frames);
    let frames = frames_for_results(&results, &frames_dir)?;
    let truths = match args.truth {
        Some(p) => Some(read_truth(p)?),
        None => None,
    };
    Ok(categorize_results(&results, &frames, &w, lambda, &args.request, truths.as_deref())?)
}

pub fn default_request(algorithm: Algorithm, k: usize) -> CategorizeRequest {
    CategorizeRequest {
        algorithm,
        k,
        seed: 0,
        standardize: true,
        primary_only: true,
    }
}

pub struct EvalArgs<'a> {
    pub dataset: &'a Path,
    pub configs: &'a [PromptConfig],
    pub seed: u64,
    pub bank_frames: usize,
    pub config: ExperimentConfig,
}

/// Bank frames are drawn from the non-target frames with the run seed.
pub fn eval(args: &EvalArgs<'_>) -> Result<EvalReport> {
    let (frames_dir, truth) = dataset_layout(args.dataset);
    let truth = truth.with_context(|| format!("{} has no truth.json", args.dataset.display()))?;
    let dataset = Dataset {
        frames: load_frame_dir(&frames_dir)?,
        truths: read_truth(truth)?,
    };
    let bank_ids = select_bank_frames(
        &without_truth(&dataset.frames, &dataset.truths),
        args.bank_frames,
        args.seed,
    )?;
    Ok(run_experiment(&dataset, &bank_ids, args.configs, &args.config, args.seed)?)
}
