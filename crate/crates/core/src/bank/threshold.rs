use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the decision threshold β is derived from scores of normal data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Calibration {
    /// Nearest-rank empirical quantile: the sorted score at 0-based index `⌊q·N⌋`.
    Quantile { q: f64 },
    MeanPlusKSigma { k: f64 },
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration::Quantile { q: 0.99 }
    }
}

impl std::str::FromStr for Calibration {
    type Err = Error;
    /// `quantile:0.99` or `sigma:3`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::parse("calibration", format!("expected quantile:Q or sigma:K, got {s:?}"));
        let (name, arg) = s.split_once(':').ok_or_else(bad)?;
        let v: f64 = arg.parse().map_err(|_| bad())?;
        match name {
            "quantile" => Ok(Calibration::Quantile { q: v }),
            "sigma" => Ok(Calibration::MeanPlusKSigma { k: v }),
            _ => Err(bad()),
        }
    }
}

/// Which held-out distances of the bank feed the calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationSource {
    /// Each entry against all other entries.
    #[default]
    LeaveOneOut,
    /// Each entry against entries of other frames only.
    LeaveOneFrameOut,
}

impl std::str::FromStr for CalibrationSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loo" | "leave-one-out" => Ok(CalibrationSource::LeaveOneOut),
            "lofo" | "leave-one-frame-out" => Ok(CalibrationSource::LeaveOneFrameOut),
            _ => Err(Error::parse("calibration source", format!("unknown source {s:?}"))),
        }
    }
}

pub const MIN_CALIBRATION_SCORES: usize = 10;

pub fn calibrate_threshold(normal_scores: &[f64], method: Calibration) -> Result<f64> {
    if normal_scores.len() < MIN_CALIBRATION_SCORES {
        return Err(Error::invalid(format!(
            "threshold calibration needs at least {MIN_CALIBRATION_SCORES} scores, got {}",
            normal_scores.len()
        )));
    }
    if let Some(index) = normal_scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    match method {
        Calibration::Quantile { q } => {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::invalid(format!("quantile {q} outside [0, 1]")));
            }
            let mut sorted = normal_scores.to_vec();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            // tolerance absorbs representation error in q·N (0.99·100 = 98.99…)
            let index = ((q * n as f64 + 1e-9).floor() as usize).min(n - 1);
            Ok(sorted[index])
        }
        Calibration::MeanPlusKSigma { k } => {
            let n = normal_scores.len() as f64;
            let mean = normal_scores.iter().sum::<f64>() / n;
            let var = normal_scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
            Ok(mean + k * var.sqrt())
        }
    }
}

/// Decision of the threshold classifier; discriminants follow the 0/1 labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Abnormal = 0,
    Normal = 1,
}

/// Abnormal strictly above β; a score equal to β is normal.
pub fn classify(score: f64, beta: f64) -> Label {
    if score > beta {
        Label::Abnormal
    } else {
        Label::Normal
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_scores() {
        assert_eq!(calibrate_threshold(&[2.5; 12], Calibration::default()).unwrap(), 2.5);
        assert_eq!(
            calibrate_threshold(&[2.5; 12], Calibration::MeanPlusKSigma { k: 3.0 }).unwrap(),
            2.5
        );
    }

    #[test]
    fn nearest_rank_of_zero_to_ninety_nine() {
        let scores: Vec<f64> = (0..100).rev().map(f64::from).collect();
        assert_eq!(calibrate_threshold(&scores, Calibration::Quantile { q: 0.99 }).unwrap(), 99.0);
        assert_eq!(calibrate_threshold(&scores, Calibration::Quantile { q: 0.5 }).unwrap(), 50.0);
        assert_eq!(calibrate_threshold(&scores, Calibration::Quantile { q: 1.0 }).unwrap(), 99.0);
    }

    #[test]
    fn sigma_rule() {
        let scores = [1.0, 3.0, 1.0, 3.0, 1.0, 3.0, 1.0, 3.0, 1.0, 3.0];
        let beta = calibrate_threshold(&scores, Calibration::MeanPlusKSigma { k: 2.0 }).unwrap();
        assert!((beta - 4.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_or_bad_scores() {
        assert!(calibrate_threshold(&[1.0; 9], Calibration::default()).is_err());
        let mut s = vec![1.0; 10];
        s[3] = f64::NAN;
        assert!(calibrate_threshold(&s, Calibration::default()).is_err());
        assert!(calibrate_threshold(&[1.0; 10], Calibration::Quantile { q: 1.5 }).is_err());
    }

    #[test]
    fn classify_cases() {
        assert_eq!(classify(5.0, 3.0), Label::Abnormal);
        assert_eq!(classify(1.0, 3.0), Label::Normal);
        assert_eq!(classify(3.0, 3.0), Label::Normal);
        assert_eq!(Label::Abnormal as u8, 0);
        assert_eq!(Label::Normal as u8, 1);
    }
}
