use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::cluster::Algorithm;
use super::features::{fit_region_features, standardize};
use super::metrics::{ari, clustering_accuracy, nmi};
use crate::detect::DetectionResult;
use crate::error::{Error, Result};
use crate::eval::iou;
use crate::gpr::{BScanFrame, Category, GroundTruthRegion};
use crate::region::Region;
use crate::reservoir::{Fingerprint, ReservoirWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorizeRequest {
    pub algorithm: Algorithm,
    pub k: usize,
    pub seed: u64,
    /// Per-dimension z-score before clustering.
    pub standardize: bool,
    /// Cluster only primary finals instead of every final.
    pub primary_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorizedRegion {
    pub frame_id: String,
    pub region: Region,
    pub cluster: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<Category>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub memberships: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterScores {
    pub acc: f64,
    pub ari: f64,
    pub nmi: f64,
    /// Regions with a matching truth rect, the only ones scored.
    pub scored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorizeReport {
    pub request: CategorizeRequest,
    pub fingerprint: Fingerprint,
    pub lambda: f64,
    pub regions: Vec<CategorizedRegion>,
    pub centroids: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<ClusterScores>,
}

impl CategorizeReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }
}

/// Truth category of the best-overlapping truth rect in the same frame.
fn match_truth(frame_id: &str, region: &Region, truths: &[GroundTruthRegion]) -> Option<Category> {
    truths
        .iter()
        .filter(|t| t.frame_id == frame_id)
        .map(|t| (iou(region, &t.rect), t.category))
        .filter(|(v, _)| *v > 0.0)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
}

/// Refits the final regions of detection results and clusters them.
///
/// `frames` must hold the preprocessed frames the results were computed
/// on. Results are taken in the given order; regions smaller than 2×2 are
/// left out.
pub fn categorize_results(
    results: &[DetectionResult],
    frames: &HashMap<String, BScanFrame>,
    w: &ReservoirWeights,
    lambda: f64,
    request: &CategorizeRequest,
    truths: Option<&[GroundTruthRegion]>,
) -> Result<CategorizeReport> {
    let mut owners: Vec<BScanFrame> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut picked: Vec<(usize, Region)> = Vec::new();
    for res in results {
        if res.fingerprint != w.fingerprint() {
            return Err(Error::FingerprintMismatch {
                bank: w.fingerprint().to_hex(),
                query: res.fingerprint.to_hex(),
            });
        }
        let frame = frames
            .get(&res.frame_id)
            .ok_or_else(|| Error::invalid(format!("no frame {:?} for result", res.frame_id)))?;
        let fi = *index.entry(res.frame_id.as_str()).or_insert_with(|| {
            owners.push(frame.clone());
            owners.len() - 1
        });
        for f in &res.finals {
            if (f.primary || !request.primary_only) && f.region.width() >= 2 && f.region.height() >= 2 {
                picked.push((fi, f.region));
            }
        }
    }
    let features = fit_region_features(&owners, &picked, w, lambda)?;
    let raw: Vec<Vec<f64>> = features.iter().map(|f| f.feature.as_vector().to_vec()).collect();
    let data = if request.standardize { standardize(&raw) } else { raw };
    let assignment = request.algorithm.run(&data, request.k, request.seed)?;

    let regions: Vec<CategorizedRegion> = features
        .iter()
        .enumerate()
        .map(|(i, f)| CategorizedRegion {
            frame_id: f.frame_id.clone(),
            region: f.region,
            cluster: assignment.labels[i],
            truth: truths.and_then(|t| match_truth(&f.frame_id, &f.region, t)),
            memberships: assignment.memberships.as_ref().map(|m| m[i].clone()),
        })
        .collect();

    let scores = match truths {
        None => None,
        Some(_) => {
            let (pred, truth): (Vec<usize>, Vec<usize>) = regions
                .iter()
                .filter_map(|r| r.truth.map(|t| (r.cluster, t.index())))
                .unzip();
            if pred.len() < 2 {
                None
            } else {
                Some(ClusterScores {
                    acc: clustering_accuracy(&pred, &truth)?,
                    ari: ari(&pred, &truth)?,
                    nmi: nmi(&pred, &truth)?,
                    scored: pred.len(),
                })
            }
        }
    };

    Ok(CategorizeReport {
        request: request.clone(),
        fingerprint: w.fingerprint(),
        lambda,
        regions,
        centroids: assignment.centroids,
        scores,
    })
}
