//! Dual-directional echo state network fitting.
//!
//! A patch `u` of width `X` and height `Y` is scanned row-major. Each point
//! receives state `h(x,y) = tanh(Wx·h(x-1,y) + Wy·h(x,y-1) + Win·u(x,y))`
//! with zero states outside the patch. The readout predicts `u(x,y)` from
//! the predecessor states `[h(x-1,y); h(x,y-1)]`, and the ridge-fitted
//! `[W_out a]` is the patch's dynamic feature.

use serde::{Deserialize, Serialize};

use super::ridge::solve_ridge;
use super::weights::{Fingerprint, ReservoirWeights};
use crate::error::{Error, Result};
use crate::gpr::Grid;

/// States for every point of a patch, `n` values per point, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStateGrid {
    width: usize,
    height: usize,
    n: usize,
    states: Vec<f64>,
    zero: Vec<f64>,
}

impl HiddenStateGrid {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// State at 0-based `(x, y)`.
    pub fn state(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.n;
        &self.states[i..i + self.n]
    }

    /// `h(x-1, y)`, zero on the left boundary.
    pub fn left_of(&self, x: usize, y: usize) -> &[f64] {
        if x == 0 {
            &self.zero
        } else {
            self.state(x - 1, y)
        }
    }

    /// `h(x, y-1)`, zero on the top boundary.
    pub fn above(&self, x: usize, y: usize) -> &[f64] {
        if y == 0 {
            &self.zero
        } else {
            self.state(x, y - 1)
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.states
    }
}

pub fn iterate_hidden_states(patch: &Grid, w: &ReservoirWeights) -> HiddenStateGrid {
    let (width, height, n) = (patch.width(), patch.height(), w.n());
    let mut states = vec![0.0; width * height * n];
    let zero = vec![0.0; n];
    let (wx, wy, win) = (w.wx(), w.wy(), w.win());
    let mut pre = vec![0.0; n];
    for y in 0..height {
        for x in 0..width {
            let u = patch.get(x, y);
            for (p, &wi) in pre.iter_mut().zip(win) {
                *p = wi * u;
            }
            if x > 0 {
                let left = (y * width + x - 1) * n;
                let hl = &states[left..left + n];
                for (i, p) in pre.iter_mut().enumerate() {
                    let row = &wx[i * n..(i + 1) * n];
                    *p += row.iter().zip(hl).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            if y > 0 {
                let up = ((y - 1) * width + x) * n;
                let hu = &states[up..up + n];
                for (i, p) in pre.iter_mut().enumerate() {
                    let row = &wy[i * n..(i + 1) * n];
                    *p += row.iter().zip(hu).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            let at = (y * width + x) * n;
            for (s, p) in states[at..at + n].iter_mut().zip(&pre) {
                *s = p.tanh();
            }
        }
    }
    HiddenStateGrid {
        width,
        height,
        n,
        states,
        zero,
    }
}

/// Augmented design matrix `H̃` (row-major, one row per point in scan order)
/// and the matching target vector `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regression {
    pub rows: usize,
    pub cols: usize,
    pub design: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Regression {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.design[r * self.cols..(r + 1) * self.cols]
    }
}

/// Rows `[h(x-1,y); h(x,y-1); 1]` for every point, including `(0,0)` whose
/// predecessors are both boundary zeros.
pub fn assemble_regression(hidden: &HiddenStateGrid, patch: &Grid) -> Result<Regression> {
    assemble_regression_with(hidden, patch, true)
}

/// As [`assemble_regression`]; with `include_origin = false` the first
/// point, which carries no predecessor information, is dropped.
pub fn assemble_regression_with(
    hidden: &HiddenStateGrid,
    patch: &Grid,
    include_origin: bool,
) -> Result<Regression> {
    if hidden.width != patch.width() || hidden.height != patch.height() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} patch", hidden.width, hidden.height),
            found: format!("{}x{} patch", patch.width(), patch.height()),
        });
    }
    let n = hidden.n;
    let cols = 2 * n + 1;
    let skip = usize::from(!include_origin);
    let rows = patch.width() * patch.height() - skip;
    let mut design = Vec::with_capacity(rows * cols);
    let mut targets = Vec::with_capacity(rows);
    for y in 0..patch.height() {
        for x in 0..patch.width() {
            if !include_origin && x == 0 && y == 0 {
                continue;
            }
            design.extend_from_slice(hidden.left_of(x, y));
            design.extend_from_slice(hidden.above(x, y));
            design.push(1.0);
            targets.push(patch.get(x, y));
        }
    }
    Ok(Regression {
        rows,
        cols,
        design,
        targets,
    })
}

/// Readout weights and bias of one fit, flattened as `[W_out..., a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicFeature {
    values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    fingerprint: Option<Fingerprint>,
}

impl DynamicFeature {
    /// Builds a feature from a raw `[W_out..., a]` vector of odd length.
    pub fn from_vec(values: Vec<f64>, fingerprint: Option<Fingerprint>) -> Result<Self> {
        if values.len() % 2 == 0 {
            return Err(Error::invalid(format!(
                "feature length {} is not 2n+1",
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(DynamicFeature {
            values,
            fingerprint,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len() / 2
    }

    pub fn wout(&self) -> &[f64] {
        &self.values[..self.values.len() - 1]
    }

    pub fn bias(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn as_vector(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vector(self) -> Vec<f64> {
        self.values
    }

    /// Reservoir the feature was fitted under, when known.
    pub fn fingerprint(&self) -> Option<Fingerprint> {
        self.fingerprint
    }
}

/// Solves `[W_out a]ᵀ = (H̃ᵀH̃ + λ²I)⁻¹ H̃ᵀU`.
pub fn fit_readout(regression: &Regression, lambda: f64) -> Result<DynamicFeature> {
    let w = solve_ridge(
        &regression.design,
        regression.rows,
        regression.cols,
        &regression.targets,
        lambda,
    )?;
    DynamicFeature::from_vec(w, None)
}

/// Full fit of one patch: states, regression, readout.
pub fn fit_patch(patch: &Grid, w: &ReservoirWeights, lambda: f64) -> Result<DynamicFeature> {
    fit_patch_with(patch, w, lambda, true)
}

pub fn fit_patch_with(
    patch: &Grid,
    w: &ReservoirWeights,
    lambda: f64,
    include_origin: bool,
) -> Result<DynamicFeature> {
    if patch.width() * patch.height() < 1 + usize::from(!include_origin) {
        return Err(Error::invalid("patch has no points to fit"));
    }
    let hidden = iterate_hidden_states(patch, w);
    let regression = assemble_regression_with(&hidden, patch, include_origin)?;
    let mut feature = fit_readout(&regression, lambda)?;
    feature.fingerprint = Some(w.fingerprint());
    Ok(feature)
}

/// Readout output `v = W_out·[h_left; h_above] + a`.
pub fn predict(h_left: &[f64], h_above: &[f64], feature: &DynamicFeature) -> Result<f64> {
    let n = feature.n();
    if h_left.len() != n || h_above.len() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("two state vectors of length {n}"),
            found: format!("lengths {} and {}", h_left.len(), h_above.len()),
        });
    }
    let wout = feature.wout();
    let dot = h_left
        .iter()
        .chain(h_above)
        .zip(wout)
        .map(|(h, w)| h * w)
        .sum::<f64>();
    Ok(dot + feature.bias())
}

#[cfg(test)]
mod tests {
    use super::super::{build_reservoir, ReservoirConfig};
    use super::*;

    fn weights(n: usize, seed: u64) -> ReservoirWeights {
        build_reservoir(&ReservoirConfig {
            n,
            seed,
            ..ReservoirConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_patch_gives_zero_states_and_feature() {
        let w = weights(5, 1);
        let p = Grid::zeros(4, 3);
        let h = iterate_hidden_states(&p, &w);
        assert!(h.as_slice().iter().all(|&v| v == 0.0));
        let f = fit_patch(&p, &w, 1e-2).unwrap();
        assert!(f.as_vector().iter().all(|&v| v == 0.0));
        assert_eq!(f.as_vector().len(), 11);
    }

    #[test]
    fn single_point_state_is_tanh_of_input() {
        let w = weights(4, 2);
        let p = Grid::filled(1, 1, 0.6);
        let h = iterate_hidden_states(&p, &w);
        for (s, wi) in h.state(0, 0).iter().zip(w.win()) {
            assert_eq!(*s, (wi * 0.6).tanh());
        }
        let reg = assemble_regression(&h, &p).unwrap();
        assert_eq!((reg.rows, reg.cols), (1, 9));
        assert_eq!(reg.row(0), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn origin_row_is_bias_only_and_flag_drops_it() {
        let w = weights(3, 3);
        let p = Grid::from_fn(3, 3, |x, y| 0.1 * (x as f64) - 0.2 * y as f64);
        let h = iterate_hidden_states(&p, &w);
        let reg = assemble_regression(&h, &p).unwrap();
        assert_eq!(reg.row(0), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let dropped = assemble_regression_with(&h, &p, false).unwrap();
        assert_eq!(dropped.rows, 8);
        assert_eq!(dropped.row(0), reg.row(1));
        assert!(assemble_regression(&h, &Grid::zeros(2, 3)).is_err());
    }

    #[test]
    fn predict_cases() {
        let f = DynamicFeature::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.25], None).unwrap();
        assert_eq!(predict(&[0.0, 0.0], &[0.0, 0.0], &f).unwrap(), 0.25);
        let zero = DynamicFeature::from_vec(vec![0.0; 5], None).unwrap();
        assert_eq!(predict(&[0.3, -0.1], &[0.9, 0.2], &zero).unwrap(), 0.0);
        let v = predict(&[0.3, -0.1], &[0.9, 0.2], &f).unwrap();
        assert!((v - (0.3 + 0.2 + 0.45 + 0.6 + 0.25)).abs() < 1e-15);
        assert!(predict(&[0.0], &[0.0, 0.0], &f).is_err());
    }

    #[test]
    fn feature_length_checks() {
        assert!(DynamicFeature::from_vec(vec![0.0; 4], None).is_err());
        assert!(DynamicFeature::from_vec(vec![0.0, f64::NAN, 0.0], None).is_err());
    }
}
