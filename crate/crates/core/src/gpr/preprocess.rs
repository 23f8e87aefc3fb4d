use serde::{Deserialize, Serialize};

use super::frame::{BScanFrame, Grid};
use crate::error::{Error, Result};

/// Subtracts each top-band row's mean (the mean trace at that time sample)
/// from that row; rows at or below `surface_rows` are untouched.
pub fn remove_surface_reflection(frame: &BScanFrame, surface_rows: usize) -> Result<BScanFrame> {
    let (w, h) = (frame.width(), frame.height());
    if surface_rows >= h {
        return Err(Error::invalid(format!(
            "surface band of {surface_rows} rows does not fit a frame of height {h}"
        )));
    }
    let mut grid = frame.grid.clone();
    for y in 0..surface_rows {
        let mean = frame.grid.row(y).iter().sum::<f64>() / w as f64;
        for x in 0..w {
            grid.set(x, y, frame.get(x, y) - mean);
        }
    }
    Ok(frame.with_grid(grid))
}

/// k×k median with edge replication.
pub fn median_filter(frame: &BScanFrame, k: usize) -> Result<BScanFrame> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::invalid(format!("median window must be odd, got {k}")));
    }
    Ok(frame.with_grid(median_grid(&frame.grid, k)))
}

pub(crate) fn median_grid(grid: &Grid, k: usize) -> Grid {
    if k == 1 {
        return grid.clone();
    }
    let (w, h) = (grid.width() as isize, grid.height() as isize);
    let r = (k / 2) as isize;
    let mut window = Vec::with_capacity(k * k);
    Grid::from_fn(grid.width(), grid.height(), |x, y| {
        window.clear();
        for dy in -r..=r {
            let yy = (y as isize + dy).clamp(0, h - 1) as usize;
            for dx in -r..=r {
                let xx = (x as isize + dx).clamp(0, w - 1) as usize;
                window.push(grid.get(xx, yy));
            }
        }
        let mid = window.len() / 2;
        *window
            .select_nth_unstable_by(mid, |a, b| a.total_cmp(b))
            .1
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainProfile {
    Linear,
    Exponential,
}

/// Multiplies row `y` by `1 + rate*y` (linear) or `exp(rate*y)` (exponential).
pub fn time_gain(frame: &BScanFrame, profile: GainProfile, rate: f64) -> Result<BScanFrame> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::invalid(format!("gain rate must be >= 0, got {rate}")));
    }
    let mut grid = frame.grid.clone();
    for y in 0..frame.height() {
        let factor = match profile {
            GainProfile::Linear => 1.0 + rate * y as f64,
            GainProfile::Exponential => (rate * y as f64).exp(),
        };
        for x in 0..frame.width() {
            grid.set(x, y, frame.get(x, y) * factor);
        }
    }
    Ok(frame.with_grid(grid))
}

/// Linear rate that multiplies the bottom row of a `height`-row frame by 4.
pub fn default_linear_gain(height: usize) -> f64 {
    if height <= 1 {
        0.0
    } else {
        3.0 / (height - 1) as f64
    }
}

/// Affine map of `[min, max]` onto `[-1, 1]`; constant frames become zeros.
pub fn normalize(frame: &BScanFrame) -> Result<BScanFrame> {
    if let Some(index) = frame.grid.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(frame.with_grid(normalize_grid(&frame.grid)))
}

pub(crate) fn normalize_grid(grid: &Grid) -> Grid {
    let (lo, hi) = grid.min_max();
    if hi == lo {
        return Grid::zeros(grid.width(), grid.height());
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    grid.map(|v| ((v - mid) / half).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum PreprocessStep {
    /// Band height as a fraction of the frame height.
    SurfaceRemoval { fraction: f64 },
    Median { k: usize },
    /// `rate = None` picks the rate that gains the bottom row by 4.
    Gain {
        profile: GainProfile,
        rate: Option<f64>,
    },
    Normalize,
}

/// Ordered preprocessing chain applied to every frame before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    pub steps: Vec<PreprocessStep>,
}

impl Default for Preprocess {
    fn default() -> Self {
        Preprocess {
            steps: vec![
                PreprocessStep::SurfaceRemoval { fraction: 0.1 },
                PreprocessStep::Median { k: 3 },
                PreprocessStep::Gain {
                    profile: GainProfile::Linear,
                    rate: None,
                },
                PreprocessStep::Normalize,
            ],
        }
    }
}

impl Preprocess {
    pub fn normalize_only() -> Self {
        Preprocess {
            steps: vec![PreprocessStep::Normalize],
        }
    }

    pub fn apply(&self, frame: &BScanFrame) -> Result<BScanFrame> {
        let mut out = frame.clone();
        for step in &self.steps {
            out = match *step {
                PreprocessStep::SurfaceRemoval { fraction } => {
                    let rows = (fraction * out.height() as f64).floor() as usize;
                    remove_surface_reflection(&out, rows)?
                }
                PreprocessStep::Median { k } => median_filter(&out, k)?,
                PreprocessStep::Gain { profile, rate } => {
                    let rate = rate.unwrap_or_else(|| match profile {
                        GainProfile::Linear => default_linear_gain(out.height()),
                        GainProfile::Exponential => {
                            4f64.ln() / (out.height().max(2) - 1) as f64
                        }
                    });
                    time_gain(&out, profile, rate)?
                }
                PreprocessStep::Normalize => normalize(&out)?,
            };
        }
        Ok(out)
    }

    /// Parses a comma list such as `surface:0.1,median:3,gain:linear,normalize`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut steps = Vec::new();
        for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (name, arg) = token.split_once(':').unwrap_or((token, ""));
            let bad = || Error::parse("preprocess step", token.to_owned());
            steps.push(match name {
                "surface" => PreprocessStep::SurfaceRemoval {
                    fraction: if arg.is_empty() { 0.1 } else { arg.parse().map_err(|_| bad())? },
                },
                "median" => PreprocessStep::Median {
                    k: if arg.is_empty() { 3 } else { arg.parse().map_err(|_| bad())? },
                },
                "gain" => {
                    let mut parts = arg.split(':');
                    let profile = match parts.next().unwrap_or("") {
                        "" | "linear" => GainProfile::Linear,
                        "exponential" | "exp" => GainProfile::Exponential,
                        _ => return Err(bad()),
                    };
                    let rate = match parts.next() {
                        Some(r) => Some(r.parse().map_err(|_| bad())?),
                        None => None,
                    };
                    PreprocessStep::Gain { profile, rate }
                }
                "normalize" => PreprocessStep::Normalize,
                _ => return Err(bad()),
            });
        }
        Ok(Preprocess { steps })
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn frame(w: usize, h: usize, f: impl FnMut(usize, usize) -> f64) -> BScanFrame {
        BScanFrame::new("t", Grid::from_fn(w, h, f))
    }

    fn random_frame(w: usize, h: usize, seed: u64) -> BScanFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        frame(w, h, |_, _| rng.random_range(-5.0..5.0))
    }

    #[test]
    fn surface_removal_zeroes_constant_band() {
        let f = frame(6, 5, |x, y| if y < 2 { 7.5 } else { (x + y) as f64 });
        let out = remove_surface_reflection(&f, 2).unwrap();
        for x in 0..6 {
            assert_eq!(out.get(x, 0), 0.0);
            assert_eq!(out.get(x, 1), 0.0);
            for y in 2..5 {
                assert_eq!(out.get(x, y), f.get(x, y));
            }
        }
        let zeros = frame(4, 4, |_, _| 0.0);
        assert_eq!(remove_surface_reflection(&zeros, 1).unwrap(), zeros);
        assert!(remove_surface_reflection(&zeros, 4).is_err());
    }

    #[test]
    fn surface_removal_matches_direct_row_means() {
        let f = random_frame(8, 8, 3);
        let out = remove_surface_reflection(&f, 3).unwrap();
        for y in 0..8 {
            let mut sum = 0.0;
            for x in 0..8 {
                sum += f.get(x, y);
            }
            let mean = sum / 8.0;
            for x in 0..8 {
                let expected = if y < 3 { f.get(x, y) - mean } else { f.get(x, y) };
                assert!((out.get(x, y) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn median_identity_constant_and_even_rejection() {
        let f = random_frame(5, 4, 1);
        assert_eq!(median_filter(&f, 1).unwrap(), f);
        let c = frame(5, 5, |_, _| 2.5);
        assert_eq!(median_filter(&c, 3).unwrap(), c);
        assert!(median_filter(&f, 2).is_err());
        assert!(median_filter(&f, 0).is_err());
    }

    fn brute_median(f: &BScanFrame, k: usize, x: usize, y: usize) -> f64 {
        let r = (k / 2) as isize;
        let mut v = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let xx = (x as isize + dx).max(0).min(f.width() as isize - 1) as usize;
                let yy = (y as isize + dy).max(0).min(f.height() as isize - 1) as usize;
                v.push(f.get(xx, yy));
            }
        }
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    }

    #[test]
    fn median_removes_impulse_and_matches_sorting() {
        let f = frame(5, 5, |x, y| if (x, y) == (2, 2) { 100.0 } else { 1.0 });
        let out = median_filter(&f, 3).unwrap();
        assert!(out.grid.values().iter().all(|&v| v == 1.0));

        let r = random_frame(7, 6, 9);
        for k in [3, 5] {
            let out = median_filter(&r, k).unwrap();
            for y in 0..6 {
                for x in 0..7 {
                    assert_eq!(out.get(x, y), brute_median(&r, k, x, y));
                }
            }
        }
    }

    #[test]
    fn gain_cases() {
        let f = random_frame(4, 6, 5);
        assert_eq!(time_gain(&f, GainProfile::Linear, 0.0).unwrap(), f);
        assert_eq!(time_gain(&f, GainProfile::Exponential, 0.0).unwrap(), f);
        let two = frame(1, 4, |_, _| 2.0);
        assert_eq!(time_gain(&two, GainProfile::Linear, 1.0).unwrap().get(0, 3), 8.0);
        assert!(time_gain(&f, GainProfile::Linear, -0.1).is_err());

        let g = 0.17;
        let out = time_gain(&f, GainProfile::Exponential, g).unwrap();
        for y in 0..6 {
            let mut factor = 1.0;
            for _ in 0..y {
                factor *= g.exp();
            }
            assert!((out.get(2, y) - f.get(2, y) * factor).abs() < 1e-12);
        }
        let bottom = default_linear_gain(6);
        let lin = time_gain(&frame(1, 6, |_, _| 1.0), GainProfile::Linear, bottom).unwrap();
        assert!((lin.get(0, 5) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_cases() {
        let f = frame(2, 1, |x, _| if x == 0 { 0.0 } else { 255.0 });
        assert_eq!(normalize(&f).unwrap().grid.values(), &[-1.0, 1.0]);
        let c = frame(3, 3, |_, _| 4.0);
        assert!(normalize(&c).unwrap().grid.values().iter().all(|&v| v == 0.0));

        let r = random_frame(9, 7, 11);
        let n = normalize(&r).unwrap();
        let (lo, hi) = r.grid.min_max();
        for (a, b) in r.grid.values().iter().zip(n.grid.values()) {
            let expected = 2.0 * (a - lo) / (hi - lo) - 1.0;
            assert!((b - expected).abs() < 1e-12);
        }
        let (nlo, nhi) = n.grid.min_max();
        assert_eq!((nlo, nhi), (-1.0, 1.0));
    }

    #[test]
    fn chain_parses_in_order() {
        let p = Preprocess::parse("surface:0.2,median:5,gain:exp:0.01,normalize").unwrap();
        assert_eq!(
            p.steps,
            vec![
                PreprocessStep::SurfaceRemoval { fraction: 0.2 },
                PreprocessStep::Median { k: 5 },
                PreprocessStep::Gain {
                    profile: GainProfile::Exponential,
                    rate: Some(0.01)
                },
                PreprocessStep::Normalize,
            ]
        );
        assert!(Preprocess::parse("blur").is_err());
        let out = Preprocess::default().apply(&random_frame(20, 20, 2)).unwrap();
        let (lo, hi) = out.grid.min_max();
        assert!(lo >= -1.0 && hi <= 1.0);
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        fn arb_frame() -> impl Strategy<Value = BScanFrame> {
            (1usize..8, 1usize..8).prop_flat_map(|(w, h)| {
                prop::collection::vec(-100.0f64..100.0, w * h)
                    .prop_map(move |v| BScanFrame::new("p", Grid::new(w, h, v).unwrap()))
            })
        }

        proptest! {
            #[test]
            fn normalize_is_idempotent(f in arb_frame()) {
                let once = normalize(&f).unwrap();
                let twice = normalize(&once).unwrap();
                for (a, b) in once.grid.values().iter().zip(twice.grid.values()) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }

            #[test]
            fn median_output_is_drawn_from_input(f in arb_frame(), k in prop::sample::select(vec![1usize, 3, 5])) {
                let out = median_filter(&f, k).unwrap();
                prop_assert_eq!((out.width(), out.height()), (f.width(), f.height()));
                for v in out.grid.values() {
                    prop_assert!(f.grid.values().contains(v));
                }
            }
        }
    }
}
