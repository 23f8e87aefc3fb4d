use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::{FeatureBank, PatchSpec};
use crate::error::{Error, Result};
use crate::gpr::BScanFrame;
use crate::region::Region;
use crate::reservoir::{fit_patch, ReservoirWeights};

/// Sparse anomaly likelihood over a candidate region, keyed by patch center.
/// Entries are kept in row-major order of `(y, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub region: Region,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Heatmap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.entries
            .binary_search_by(|&(ex, ey, _)| (ey, ex).cmp(&(y, x)))
            .ok()
            .map(|i| self.entries[i].2)
    }

    /// Highest-scoring entry; the first in row-major order on ties.
    pub fn argmax(&self) -> Option<(usize, usize, f64)> {
        self.entries
            .iter()
            .copied()
            .fold(None, |best, e| match best {
                Some((_, _, s)) if s >= e.2 => best,
                _ => Some(e),
            })
    }

    pub fn max_score(&self) -> Option<f64> {
        self.argmax().map(|e| e.2)
    }
}

/// Scores every `stride`-th point of `candidate` whose centered patch lies
/// inside the frame by the nearest-normal distance of its fitted feature.
pub fn score_candidate_region(
    frame: &BScanFrame,
    candidate: &Region,
    bank: &FeatureBank,
    w: &ReservoirWeights,
    spec: &PatchSpec,
    lambda: f64,
    stride: usize,
) -> Result<Heatmap> {
    let (width, height) = (frame.width(), frame.height());
    if !candidate.fits_in(width, height) {
        return Err(Error::invalid(format!(
            "candidate {candidate} outside {width}x{height} frame"
        )));
    }
    if bank.fingerprint() != w.fingerprint() {
        return Err(Error::FingerprintMismatch {
            bank: bank.fingerprint().to_hex(),
            query: w.fingerprint().to_hex(),
        });
    }
    if stride == 0 {
        return Err(Error::invalid("scoring stride must be >= 1"));
    }
    let centers: Vec<(usize, usize, Region)> = (candidate.y1..=candidate.y2)
        .step_by(stride)
        .flat_map(|y| {
            (candidate.x1..=candidate.x2)
                .step_by(stride)
                .filter_map(move |x| spec.centered(x, y, width, height).map(|r| (x, y, r)))
        })
        .collect();
    let entries = centers
        .into_par_iter()
        .map(|(x, y, rect)| {
            let patch = frame.grid.crop(&rect)?;
            let feature = fit_patch(&patch, w, lambda)?;
            Ok((x, y, bank.nearest_distance(feature.as_vector())?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Heatmap {
        region: *candidate,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_and_argmax() {
        let h = Heatmap {
            region: Region::new(0, 2, 0, 1).unwrap(),
            entries: vec![(0, 0, 1.0), (2, 0, 3.0), (1, 1, 3.0), (2, 1, 0.5)],
        };
        assert_eq!(h.get(1, 1), Some(3.0));
        assert_eq!(h.get(1, 0), None);
        assert_eq!(h.argmax(), Some((2, 0, 3.0)));
    }
}
