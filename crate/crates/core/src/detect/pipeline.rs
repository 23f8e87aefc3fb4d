use serde::{Deserialize, Serialize};

use super::heatmap::{score_candidate_region, Heatmap};
use super::merge::merge_anomalous_patches;
use crate::bank::{FeatureBank, PatchSpec};
use crate::error::{Error, Result};
use crate::gpr::{BScanFrame, Preprocess};
use crate::region::Region;
use crate::reservoir::{Fingerprint, ReservoirConfig, ReservoirWeights};
use crate::segment::{bounding_rect, region_grow, GrowParams, Mask, PromptSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub grow: GrowParams,
    /// Overrides the bank's calibrated threshold when set.
    pub beta: Option<f64>,
    /// Spacing of scored centers inside the candidate.
    pub stride: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            grow: GrowParams::default(),
            beta: None,
            stride: 1,
        }
    }
}

/// Where the candidate mask came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    RegionGrow,
    ExternalMask,
}

/// Every parameter that influenced a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub reservoir: ReservoirConfig,
    pub patch: PatchSpec,
    pub beta: f64,
    pub stride: usize,
    pub grow: GrowParams,
    pub candidate_source: CandidateSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preprocess: Option<Preprocess>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRegion {
    pub region: Region,
    /// Mean heatmap score over the region.
    pub confidence: f64,
    pub mean_center_score: f64,
    pub centers: usize,
    /// Set on the top-scoring region only.
    pub primary: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionStatus {
    Ok,
    NoCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub frame_id: String,
    pub width: usize,
    pub height: usize,
    pub status: DetectionStatus,
    pub prompts: PromptSet,
    pub candidate: Option<Region>,
    pub heatmap: Option<Heatmap>,
    pub finals: Vec<FinalRegion>,
    pub config: ConfigEcho,
    pub fingerprint: Fingerprint,
}

impl DetectionResult {
    pub fn primary(&self) -> Option<&FinalRegion> {
        self.finals.iter().find(|f| f.primary)
    }

    /// Canonical JSON rendering shared by every front end.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&JsonResult::from(self)).expect("serializable");
        s.push('\n');
        s
    }
}

/// Wire form: heatmap as `[x, y, score]` triples.
#[derive(Serialize)]
struct JsonResult<'a> {
    frame_id: &'a str,
    width: usize,
    height: usize,
    status: DetectionStatus,
    prompts: &'a PromptSet,
    candidate: Option<Region>,
    heatmap: Vec<(usize, usize, f64)>,
    finals: &'a [FinalRegion],
    config: &'a ConfigEcho,
    fingerprint: Fingerprint,
}

impl<'a> From<&'a DetectionResult> for JsonResult<'a> {
    fn from(r: &'a DetectionResult) -> Self {
        JsonResult {
            frame_id: &r.frame_id,
            width: r.width,
            height: r.height,
            status: r.status,
            prompts: &r.prompts,
            candidate: r.candidate,
            heatmap: r.heatmap.as_ref().map(|h| h.entries.clone()).unwrap_or_default(),
            finals: &r.finals,
            config: &r.config,
            fingerprint: r.fingerprint,
        }
    }
}

/// Parses the wire form back into a result.
pub fn parse_result_json(text: &str) -> Result<DetectionResult> {
    #[derive(Deserialize)]
    struct Wire {
        frame_id: String,
        width: usize,
        height: usize,
        status: DetectionStatus,
        prompts: PromptSet,
        candidate: Option<Region>,
        heatmap: Vec<(usize, usize, f64)>,
        finals: Vec<FinalRegion>,
        config: ConfigEcho,
        fingerprint: Fingerprint,
    }
    let w: Wire = serde_json::from_str(text).map_err(|e| Error::parse("result json", e.to_string()))?;
    let heatmap = w.candidate.map(|region| Heatmap {
        region,
        entries: w.heatmap,
    });
    Ok(DetectionResult {
        frame_id: w.frame_id,
        width: w.width,
        height: w.height,
        status: w.status,
        prompts: w.prompts,
        candidate: w.candidate,
        heatmap,
        finals: w.finals,
        config: w.config,
        fingerprint: w.fingerprint,
    })
}

/// Segment, bound, score and merge one preprocessed frame.
///
/// `external_mask` replaces the built-in region grower. An empty mask gives
/// a `NoCandidate` result instead of an error.
pub fn detect(
    frame: &BScanFrame,
    prompts: &PromptSet,
    bank: &FeatureBank,
    w: &ReservoirWeights,
    config: &DetectConfig,
    external_mask: Option<&Mask>,
) -> Result<DetectionResult> {
    let (width, height) = (frame.width(), frame.height());
    prompts.validate(width, height)?;
    let beta = config
        .beta
        .or(bank.beta())
        .ok_or_else(|| Error::invalid("no threshold: bank is uncalibrated and none was given"))?;
    let spec = bank.spec();
    let echo = ConfigEcho {
        reservoir: ReservoirConfig {
            n: w.n(),
            rho: w.rho(),
            input_scale: w.input_scale(),
            lambda: bank.lambda(),
            seed: w.seed(),
        },
        patch: spec,
        beta,
        stride: config.stride,
        grow: config.grow,
        candidate_source: if external_mask.is_some() {
            CandidateSource::ExternalMask
        } else {
            CandidateSource::RegionGrow
        },
        preprocess: None,
    };
    let mut result = DetectionResult {
        frame_id: frame.id.clone(),
        width,
        height,
        status: DetectionStatus::NoCandidate,
        prompts: prompts.clone(),
        candidate: None,
        heatmap: None,
        finals: Vec::new(),
        config: echo,
        fingerprint: w.fingerprint(),
    };

    let grown;
    let mask = match external_mask {
        Some(m) => {
            if (m.width(), m.height()) != (width, height) {
                return Err(Error::DimensionMismatch {
                    expected: format!("{width}x{height} mask"),
                    found: format!("{}x{} mask", m.width(), m.height()),
                });
            }
            m
        }
        None => {
            grown = region_grow(frame, prompts, &config.grow)?;
            &grown
        }
    };
    let candidate = match bounding_rect(mask) {
        Ok(r) => r,
        Err(Error::EmptyRegion) => return Ok(result),
        Err(e) => return Err(e),
    };

    let heatmap = score_candidate_region(frame, &candidate, bank, w, &spec, bank.lambda(), config.stride)?;
    let merged = merge_anomalous_patches(&heatmap, beta, &spec, width, height);
    result.finals = merged
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            let inside: Vec<f64> = heatmap
                .entries
                .iter()
                .filter(|&&(x, y, _)| m.region.contains(x, y))
                .map(|e| e.2)
                .collect();
            FinalRegion {
                region: m.region,
                confidence: inside.iter().sum::<f64>() / inside.len().max(1) as f64,
                mean_center_score: m.mean_center_score,
                centers: m.centers,
                primary: i == 0,
                category: None,
            }
        })
        .collect();
    result.status = DetectionStatus::Ok;
    result.candidate = Some(candidate);
    result.heatmap = Some(heatmap);
    Ok(result)
}

/// Preprocesses a raw frame, then runs [`detect`]; the chain is echoed.
pub fn detect_raw(
    raw: &BScanFrame,
    preprocess: &Preprocess,
    prompts: &PromptSet,
    bank: &FeatureBank,
    w: &ReservoirWeights,
    config: &DetectConfig,
    external_mask: Option<&Mask>,
) -> Result<DetectionResult> {
    let frame = preprocess.apply(raw)?;
    let mut result = detect(&frame, prompts, bank, w, config, external_mask)?;
    result.config.preprocess = Some(preprocess.clone());
    Ok(result)
}
