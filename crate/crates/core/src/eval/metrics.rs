use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpr::GroundTruthRegion;
use crate::region::Region;

/// Intersection over union with inclusive pixel counts.
pub fn iou(a: &Region, b: &Region) -> f64 {
    match a.intersection(b) {
        None => 0.0,
        Some(i) => {
            let inter = i.area() as f64;
            inter / (a.area() as f64 + b.area() as f64 - inter)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_id: String,
    pub region: Region,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Per input detection: matched truth index and its IoU.
    pub matches: Vec<Option<(usize, f64)>>,
}

/// Greedy matching by descending score; each detection takes the
/// highest-IoU unmatched truth of its frame when that IoU exceeds `thresh`.
///
/// With no truths and no detections every rate is 1.
pub fn detection_f1(detections: &[Detection], truths: &[GroundTruthRegion], thresh: f64) -> F1Score {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score).then(a.cmp(&b)));
    let mut taken = vec![false; truths.len()];
    let mut matches = vec![None; detections.len()];
    for &d in &order {
        let det = &detections[d];
        let mut best: Option<(usize, f64)> = None;
        for (t, truth) in truths.iter().enumerate() {
            if taken[t] || truth.frame_id != det.frame_id {
                continue;
            }
            let v = iou(&det.region, &truth.rect);
            if v > thresh && best.is_none_or(|(_, b)| v > b) {
                best = Some((t, v));
            }
        }
        if let Some((t, _)) = best {
            taken[t] = true;
        }
        matches[d] = best;
    }
    let tp = matches.iter().filter(|m| m.is_some()).count();
    let fp = detections.len() - tp;
    let fn_ = truths.len() - tp;
    let (precision, recall, f1) = if detections.is_empty() && truths.is_empty() {
        (1.0, 1.0, 1.0)
    } else {
        let p = if detections.is_empty() { 0.0 } else { tp as f64 / detections.len() as f64 };
        let r = if truths.is_empty() { 0.0 } else { tp as f64 / truths.len() as f64 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        (p, r, f)
    };
    F1Score {
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
        matches,
    }
}

/// Rank-based AUC with midranks for ties.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} labels", scores.len()),
            found: format!("{} labels", labels.len()),
        });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("AUROC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * midrank;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}
