use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{auroc, detection_f1, iou, Detection};
use crate::bank::{build_bank, Calibration, CalibrationSource, PatchSpec};
use crate::categorize::{ari, clustering_accuracy, fit_region_feature, nmi, standardize, Algorithm};
use crate::detect::{detect, DetectConfig, DetectionResult};
use crate::error::{Error, Result};
use crate::gpr::{BScanFrame, Category, GroundTruthRegion, Preprocess};
use crate::region::Region;
use crate::reservoir::{build_reservoir, Fingerprint, ReservoirConfig};
use crate::segment::PromptSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PromptConfig {
    pub n_pos: usize,
    pub n_neg: usize,
}

impl PromptConfig {
    pub fn new(n_pos: usize, n_neg: usize) -> Result<Self> {
        if n_pos == 0 {
            return Err(Error::invalid("a prompt config needs at least one positive"));
        }
        Ok(PromptConfig { n_pos, n_neg })
    }

    /// Parses a comma list such as `5/5,3/0`.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::parse).collect()
    }
}

impl FromStr for PromptConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::parse("prompt config", format!("expected POS/NEG, got {s:?}"));
        let (p, n) = s.split_once('/').ok_or_else(bad)?;
        PromptConfig::new(p.trim().parse().map_err(|_| bad())?, n.trim().parse().map_err(|_| bad())?)
    }
}

impl fmt::Display for PromptConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.n_pos, self.n_neg)
    }
}

impl Serialize for PromptConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PromptConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which final regions count as detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionsUsed {
    #[default]
    Primary,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorizeConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    pub standardize: bool,
}

impl Default for CategorizeConfig {
    fn default() -> Self {
        CategorizeConfig {
            algorithm: Algorithm::Agglomerative {
                linkage: Default::default(),
            },
            k: Category::ALL.len(),
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub reservoir: ReservoirConfig,
    pub patch: PatchSpec,
    pub preprocess: Preprocess,
    pub calibration: Calibration,
    pub calibration_source: CalibrationSource,
    pub detect: DetectConfig,
    /// Minimum gap in pixels between a negative prompt and any truth rect.
    pub negative_margin: usize,
    pub iou_threshold: f64,
    pub detections: DetectionsUsed,
    /// Clusters the primary finals of the first prompt config.
    pub categorize: Option<CategorizeConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            reservoir: ReservoirConfig::default(),
            patch: PatchSpec::default(),
            preprocess: Preprocess::default(),
            calibration: Calibration::default(),
            calibration_source: CalibrationSource::default(),
            detect: DetectConfig::default(),
            negative_margin: 5,
            iou_threshold: 0.5,
            detections: DetectionsUsed::default(),
            categorize: Some(CategorizeConfig::default()),
        }
    }
}

impl ExperimentConfig {
    /// Settings sized for 128×128 synthetic frames on a single machine.
    pub fn desk() -> Self {
        ExperimentConfig {
            reservoir: ReservoirConfig {
                n: 16,
                rho: 0.9,
                input_scale: 1.0,
                lambda: 3.0,
                seed: 0,
            },
            patch: PatchSpec {
                win_x: 12,
                win_y: 12,
                stride: 8,
            },
            calibration: Calibration::Quantile { q: 0.999 },
            calibration_source: CalibrationSource::LeaveOneFrameOut,
            categorize: Some(CategorizeConfig {
                algorithm: Algorithm::Agglomerative {
                    linkage: crate::categorize::Linkage::Ward,
                },
                ..CategorizeConfig::default()
            }),
            ..ExperimentConfig::default()
        }
    }
}

/// Frames with ground truth, not yet preprocessed.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub frames: Vec<BScanFrame>,
    pub truths: Vec<GroundTruthRegion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigReport {
    pub prompts: PromptConfig,
    pub auc: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub cases: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub prompts: PromptConfig,
    pub frame_id: String,
    pub region: Region,
    pub score: f64,
    pub iou: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorizationReport {
    pub regions: usize,
    pub acc: f64,
    pub ari: f64,
    pub nmi: f64,
    pub labels: Vec<usize>,
    pub truth: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub fingerprint: Fingerprint,
    pub bank_frames: Vec<String>,
    pub bank_entries: usize,
    pub beta: f64,
    pub configs: Vec<ConfigReport>,
    pub detections: Vec<DetectionRecord>,
    pub categorization: Option<CategorizationReport>,
    pub warnings: Vec<String>,
    pub config: ExperimentConfig,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn config_report(&self, prompts: PromptConfig) -> Option<&ConfigReport> {
        self.configs.iter().find(|c| c.prompts == prompts)
    }
}

/// One prompted detection target: a truth rect in a frame.
struct Case<'a> {
    frame: usize,
    truth: &'a GroundTruthRegion,
}

fn uniform_in(rng: &mut ChaCha8Rng, r: &Region) -> (usize, usize) {
    (rng.random_range(r.x1..=r.x2), rng.random_range(r.y1..=r.y2))
}

/// Points at least `margin` pixels outside every rect.
fn negative_pool(width: usize, height: usize, rects: &[Region], margin: usize) -> Vec<(usize, usize)> {
    let grown: Vec<Region> = rects.iter().map(|r| r.dilate(margin, margin, width, height)).collect();
    let mut pool = Vec::new();
    for y in 0..height {
        for x in 0..width {
            if !grown.iter().any(|g| g.contains(x, y)) {
                pool.push((x, y));
            }
        }
    }
    pool
}

/// Samples the largest prompt set once; each config takes a prefix, so
/// smaller configs are nested in larger ones.
fn sample_prompts(
    rng: &mut ChaCha8Rng,
    truth: &Region,
    pool: &[(usize, usize)],
    n_pos: usize,
    n_neg: usize,
) -> Option<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    if n_neg > 0 && pool.is_empty() {
        return None;
    }
    let pos = (0..n_pos).map(|_| uniform_in(rng, truth)).collect();
    let neg = (0..n_neg).map(|_| pool[rng.random_range(0..pool.len())]).collect();
    Some((pos, neg))
}

/// Bank from the designated non-target frames, then prompted detection on
/// every truth region of the remaining frames under every prompt config.
pub fn run_experiment(
    dataset: &Dataset,
    bank_frame_ids: &[String],
    prompt_configs: &[PromptConfig],
    config: &ExperimentConfig,
    seed: u64,
) -> Result<EvalReport> {
    if prompt_configs.is_empty() {
        return Err(Error::invalid("no prompt configs"));
    }
    let bank_ids: BTreeSet<&str> = bank_frame_ids.iter().map(String::as_str).collect();
    let mut bank_raw = Vec::new();
    let mut eval_frames = Vec::new();
    for f in &dataset.frames {
        if bank_ids.contains(f.id.as_str()) {
            bank_raw.push(f);
        } else {
            eval_frames.push(f);
        }
    }
    if bank_raw.len() != bank_ids.len() {
        return Err(Error::invalid("some bank frame ids are not in the dataset"));
    }
    if let Some(t) = dataset.truths.iter().find(|t| bank_ids.contains(t.frame_id.as_str())) {
        return Err(Error::invalid(format!("bank frame {} has ground truth", t.frame_id)));
    }

    let w = build_reservoir(&config.reservoir)?;
    let prep = |fs: &[&BScanFrame]| -> Result<Vec<BScanFrame>> {
        fs.par_iter().map(|f| config.preprocess.apply(f)).collect()
    };
    let bank_frames = prep(&bank_raw)?;
    let frames = prep(&eval_frames)?;
    let mut bank = build_bank(&bank_frames, &w, &config.patch, config.reservoir.lambda)?;
    let beta = bank.calibrate(config.calibration, config.calibration_source)?;

    let mut cases = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        for t in dataset.truths.iter().filter(|t| t.frame_id == f.id) {
            cases.push(Case { frame: i, truth: t });
        }
    }
    for c in &cases {
        assert!(!bank_ids.contains(frames[c.frame].id.as_str()), "bank frame in evaluation set");
    }
    let eval_truths: Vec<GroundTruthRegion> = cases.iter().map(|c| c.truth.clone()).collect();

    let max_pos = prompt_configs.iter().map(|p| p.n_pos).max().unwrap_or(0);
    let max_neg = prompt_configs.iter().map(|p| p.n_neg).max().unwrap_or(0);
    let needs_neg = prompt_configs.iter().any(|p| p.n_neg > 0);

    // per case: per config: Some(result) or None when skipped
    let outcomes: Vec<Vec<Option<DetectionResult>>> = cases
        .par_iter()
        .enumerate()
        .map(|(ci, case)| {
            let frame = &frames[case.frame];
            let rects: Vec<Region> = dataset
                .truths
                .iter()
                .filter(|t| t.frame_id == frame.id)
                .map(|t| t.rect)
                .collect();
            let pool = negative_pool(frame.width(), frame.height(), &rects, config.negative_margin);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ci as u64);
            let sampled = sample_prompts(&mut rng, &case.truth.rect, &pool, max_pos, max_neg);
            prompt_configs
                .iter()
                .map(|pc| {
                    let (pos, neg) = sampled.as_ref()?;
                    if pc.n_neg > 0 && pool.is_empty() {
                        return None;
                    }
                    let prompts = PromptSet::new(pos[..pc.n_pos].to_vec(), neg[..pc.n_neg].to_vec());
                    Some(detect(frame, &prompts, &bank, &w, &config.detect, None))
                })
                .map(|r| r.transpose())
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    if needs_neg {
        for (c, out) in cases.iter().zip(&outcomes) {
            if out.iter().any(Option::is_none) {
                warnings.push(format!(
                    "frame {}: no room for negative prompts outside {}",
                    frames[c.frame].id, c.truth.rect
                ));
            }
        }
    }

    let mut reports = Vec::new();
    let mut records = Vec::new();
    for (k, &pc) in prompt_configs.iter().enumerate() {
        let mut dets = Vec::new();
        let mut truths = Vec::new();
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        let mut skipped = 0;
        for ((case, out), truth) in cases.iter().zip(&outcomes).zip(&eval_truths) {
            let Some(result) = &out[k] else {
                skipped += 1;
                continue;
            };
            truths.push(truth.clone());
            let finals = result.finals.iter().filter(|f| match config.detections {
                DetectionsUsed::Primary => f.primary,
                DetectionsUsed::All => true,
            });
            for f in finals {
                dets.push(Detection {
                    frame_id: result.frame_id.clone(),
                    region: f.region,
                    score: f.mean_center_score,
                });
            }
            if let Some(h) = &result.heatmap {
                for &(x, y, s) in &h.entries {
                    scores.push(s);
                    labels.push(case.truth.rect.contains(x, y));
                }
            }
        }
        let score = detection_f1(&dets, &truths, config.iou_threshold);
        for (d, m) in dets.iter().zip(&score.matches) {
            let best_iou = truths
                .iter()
                .filter(|t| t.frame_id == d.frame_id)
                .map(|t| iou(&d.region, &t.rect))
                .fold(0.0, f64::max);
            records.push(DetectionRecord {
                prompts: pc,
                frame_id: d.frame_id.clone(),
                region: d.region,
                score: d.score,
                iou: m.map(|(_, v)| v).unwrap_or(best_iou),
                correct: m.is_some(),
            });
        }
        reports.push(ConfigReport {
            prompts: pc,
            auc: auroc(&scores, &labels).ok(),
            precision: score.precision,
            recall: score.recall,
            f1: score.f1,
            cases: truths.len(),
            skipped,
        });
    }

    let categorization = match &config.categorize {
        None => None,
        Some(cc) => {
            let picked: Vec<(usize, Region, Category)> = cases
                .iter()
                .zip(&outcomes)
                .filter_map(|(case, out)| {
                    let r = out[0].as_ref()?.primary()?.region;
                    (r.width() >= 2 && r.height() >= 2).then_some((case.frame, r, case.truth.category))
                })
                .collect();
            if picked.len() < cc.k.max(2) {
                warnings.push(format!(
                    "categorization skipped: {} regions for k = {}",
                    picked.len(),
                    cc.k
                ));
                None
            } else {
                let features: Vec<Vec<f64>> = picked
                    .par_iter()
                    .map(|(fi, r, _)| {
                        fit_region_feature(&frames[*fi], r, &w, config.reservoir.lambda)
                            .map(|rf| rf.feature.into_vector())
                    })
                    .collect::<Result<_>>()?;
                let data = if cc.standardize { standardize(&features) } else { features };
                let assignment = cc.algorithm.run(&data, cc.k, seed)?;
                let truth: Vec<Category> = picked.iter().map(|p| p.2).collect();
                let truth_idx: Vec<usize> = truth.iter().map(|c| c.index()).collect();
                Some(CategorizationReport {
                    regions: picked.len(),
                    acc: clustering_accuracy(&assignment.labels, &truth_idx)?,
                    ari: ari(&assignment.labels, &truth_idx)?,
                    nmi: nmi(&assignment.labels, &truth_idx)?,
                    labels: assignment.labels,
                    truth,
                })
            }
        }
    };

    Ok(EvalReport {
        seed,
        fingerprint: w.fingerprint(),
        bank_frames: bank_raw.iter().map(|f| f.id.clone()).collect(),
        bank_entries: bank.len(),
        beta,
        configs: reports,
        detections: records,
        categorization,
        warnings,
        config: config.clone(),
    })
}
