use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpr::BScanFrame;
use crate::region::Region;
use crate::reservoir::{fit_patch, DynamicFeature, ReservoirWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFeature {
    pub frame_id: String,
    pub region: Region,
    pub feature: DynamicFeature,
}

/// Fits the reservoir readout on the raw region sub-grid, no resizing.
pub fn fit_region_feature(
    frame: &BScanFrame,
    region: &Region,
    w: &ReservoirWeights,
    lambda: f64,
) -> Result<RegionFeature> {
    if region.width() < 2 || region.height() < 2 {
        return Err(Error::invalid(format!(
            "region {region} is smaller than 2x2"
        )));
    }
    let sub = frame.grid.crop(region)?;
    Ok(RegionFeature {
        frame_id: frame.id.clone(),
        region: *region,
        feature: fit_patch(&sub, w, lambda)?,
    })
}

/// Fits many `(frame index, region)` pairs in parallel, order preserved.
pub fn fit_region_features(
    frames: &[BScanFrame],
    regions: &[(usize, Region)],
    w: &ReservoirWeights,
    lambda: f64,
) -> Result<Vec<RegionFeature>> {
    regions
        .par_iter()
        .map(|(i, r)| {
            let frame = frames
                .get(*i)
                .ok_or_else(|| Error::invalid(format!("frame index {i} out of range")))?;
            fit_region_feature(frame, r, w, lambda)
        })
        .collect()
}

/// Per-dimension z-score. Constant dimensions become 0.
pub fn standardize(data: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(first) = data.first() else {
        return Vec::new();
    };
    let d = first.len();
    let n = data.len() as f64;
    let mut mean = vec![0.0; d];
    for row in data {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; d];
    for row in data {
        for j in 0..d {
            sd[j] += (row[j] - mean[j]).powi(2) / n;
        }
    }
    for s in &mut sd {
        *s = s.sqrt();
    }
    data.iter()
        .map(|row| {
            (0..d)
                .map(|j| if sd[j] > 1e-12 { (row[j] - mean[j]) / sd[j] } else { 0.0 })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpr::Grid;
    use crate::reservoir::{build_reservoir, ReservoirConfig};

    fn weights() -> ReservoirWeights {
        build_reservoir(&ReservoirConfig {
            n: 4,
            ..ReservoirConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn whole_frame_region_equals_patch_fit() {
        let w = weights();
        let grid = Grid::from_fn(9, 7, |x, y| ((x * 3 + y * 5) % 7) as f64 / 7.0 - 0.4);
        let frame = BScanFrame::new("f", grid.clone());
        let rf = fit_region_feature(&frame, &grid.bounds(), &w, 0.01).unwrap();
        assert_eq!(rf.feature, fit_patch(&grid, &w, 0.01).unwrap());
    }

    #[test]
    fn zero_region_gives_zero_feature() {
        let w = weights();
        let frame = BScanFrame::new("z", Grid::zeros(8, 8));
        let rf = fit_region_feature(&frame, &Region::new(1, 5, 2, 6).unwrap(), &w, 0.01).unwrap();
        assert!(rf.feature.as_vector().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_region_rejected() {
        let w = weights();
        let frame = BScanFrame::new("z", Grid::zeros(8, 8));
        assert!(fit_region_feature(&frame, &Region::new(1, 1, 0, 5).unwrap(), &w, 0.01).is_err());
        assert!(fit_region_feature(&frame, &Region::new(0, 5, 3, 3).unwrap(), &w, 0.01).is_err());
    }

    #[test]
    fn standardize_zero_mean_unit_variance() {
        let data = vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]];
        let z = standardize(&data);
        let m: f64 = z.iter().map(|r| r[0]).sum::<f64>() / 3.0;
        let v: f64 = z.iter().map(|r| r[0] * r[0]).sum::<f64>() / 3.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        assert!(z.iter().all(|r| r[1] == 0.0));
    }
}
