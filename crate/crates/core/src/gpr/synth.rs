//! Synthetic B-scan generator.
//!
//! Background frames are a stack of gently undulating horizontal reflectors
//! under a saturating direct-wave band, with row-correlated and white noise.
//! Anomalies are drawn inside their rectangle only, so the ground-truth rect
//! is exactly the inserted one.
//!
//! Scene files are plain `key = value` text; `#` starts a comment:
//!
//! ```text
//! width = 128
//! height = 128
//! layers = 5
//! layer_amplitude = 0.3
//! noise = 0.04
//! band_noise = 0.03
//! surface_amplitude = 1.5
//! clip = 1.0
//! normal_frames = 20
//! anomaly_frames_per_category = 8
//! categories = cavity,crack,loose,manhole,pipe
//! # explicit frames: `frame` opens a frame, `insert` adds to the last one
//! frame = handmade
//! insert = pipe, 40, 80, 30, 60, 0.8
//! ```

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::frame::{BScanFrame, Category, FrameMeta, Grid, GroundTruthRegion};
use crate::error::{Error, Result};
use crate::region::Region;

/// Layered-background texture parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub layers: usize,
    pub layer_amplitude: f64,
    /// Maximum vertical undulation of a layer, in rows.
    pub layer_undulation: f64,
    /// White noise standard deviation.
    pub noise: f64,
    /// Standard deviation of the per-row offset shared across a whole row.
    pub band_noise: f64,
    pub surface_row: usize,
    pub surface_amplitude: f64,
    /// Saturation level; output is clipped to `[-clip, clip]`.
    pub clip: f64,
}

impl Default for Background {
    fn default() -> Self {
        Background {
            layers: 5,
            layer_amplitude: 0.3,
            layer_undulation: 3.0,
            noise: 0.04,
            band_noise: 0.03,
            surface_row: 4,
            surface_amplitude: 1.5,
            clip: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Insertion {
    pub category: Category,
    pub rect: Region,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub id: String,
    pub insertions: Vec<Insertion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub background: Background,
    /// Pure-background frames generated ahead of any anomaly frame.
    pub normal_frames: usize,
    /// Randomly placed single-anomaly frames per listed category.
    pub anomaly_frames_per_category: usize,
    pub categories: Vec<Category>,
    pub frames: Vec<FrameSpec>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 128,
            height: 128,
            background: Background::default(),
            normal_frames: 0,
            anomaly_frames_per_category: 0,
            categories: Category::ALL.to_vec(),
            frames: Vec::new(),
        }
    }
}

impl SceneConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SceneConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("scene", format!("line {}: expected key = value", no + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::parse("scene", format!("line {}: bad {what} {value:?}", no + 1));
            let num = |what: &str| value.parse::<f64>().map_err(|_| bad(what));
            let int = |what: &str| value.parse::<usize>().map_err(|_| bad(what));
            match key {
                "width" => cfg.width = int(key)?,
                "height" => cfg.height = int(key)?,
                "layers" => cfg.background.layers = int(key)?,
                "layer_amplitude" => cfg.background.layer_amplitude = num(key)?,
                "layer_undulation" => cfg.background.layer_undulation = num(key)?,
                "noise" => cfg.background.noise = num(key)?,
                "band_noise" => cfg.background.band_noise = num(key)?,
                "surface_row" => cfg.background.surface_row = int(key)?,
                "surface_amplitude" => cfg.background.surface_amplitude = num(key)?,
                "clip" => cfg.background.clip = num(key)?,
                "normal_frames" => cfg.normal_frames = int(key)?,
                "anomaly_frames_per_category" => cfg.anomaly_frames_per_category = int(key)?,
                "categories" => {
                    cfg.categories = value
                        .split(',')
                        .map(str::parse)
                        .collect::<Result<Vec<Category>>>()?
                }
                "frame" => cfg.frames.push(FrameSpec {
                    id: value.to_owned(),
                    insertions: Vec::new(),
                }),
                "insert" => {
                    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                    if parts.len() != 6 {
                        return Err(bad("insertion (category,x1,x2,y1,y2,amplitude)"));
                    }
                    let category = parts[0].parse()?;
                    let coord = |s: &str| s.parse::<usize>().map_err(|_| bad("insertion coordinate"));
                    let rect = Region::new(coord(parts[1])?, coord(parts[2])?, coord(parts[3])?, coord(parts[4])?)?;
                    let amplitude = parts[5].parse::<f64>().map_err(|_| bad("amplitude"))?;
                    let frame = cfg
                        .frames
                        .last_mut()
                        .ok_or_else(|| bad("insert before any frame"))?;
                    frame.insertions.push(Insertion {
                        category,
                        rect,
                        amplitude,
                    });
                }
                other => {
                    return Err(Error::parse(
                        "scene",
                        format!("line {}: unknown key {other:?}", no + 1),
                    ))
                }
            }
        }
        Ok(cfg)
    }
}

/// Rectangle size ranges (w, h) and vertical placement per category, as
/// fractions of the frame.
fn category_geometry(category: Category) -> ((f64, f64), (f64, f64), (f64, f64)) {
    match category {
        Category::Pipe => ((0.34, 0.44), (0.24, 0.32), (0.15, 0.55)),
        Category::Cavity => ((0.28, 0.38), (0.28, 0.38), (0.25, 0.6)),
        Category::Loose => ((0.3, 0.4), (0.3, 0.4), (0.2, 0.6)),
        Category::Crack => ((0.4, 0.5), (0.18, 0.24), (0.2, 0.7)),
        Category::Manhole => ((0.36, 0.46), (0.22, 0.28), (0.1, 0.16)),
    }
}

fn random_insertion(category: Category, width: usize, height: usize, rng: &mut ChaCha8Rng) -> Insertion {
    let ((w_lo, w_hi), (h_lo, h_hi), (top_lo, top_hi)) = category_geometry(category);
    let rw = ((rng.random_range(w_lo..w_hi) * width as f64).round() as usize).clamp(2, width);
    let rh = ((rng.random_range(h_lo..h_hi) * height as f64).round() as usize).clamp(2, height);
    let margin_x = width / 10;
    let max_x1 = width.saturating_sub(rw + margin_x).max(margin_x);
    let x1 = rng.random_range(margin_x..=max_x1).min(width - rw);
    let top = ((rng.random_range(top_lo..top_hi)) * height as f64) as usize;
    let y1 = top.min(height.saturating_sub(rh + height / 16));
    let amplitude = rng.random_range(0.7..0.9);
    Insertion {
        category,
        rect: Region {
            x1,
            x2: x1 + rw - 1,
            y1,
            y2: y1 + rh - 1,
        },
        amplitude,
    }
}

fn frame_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Generates frames and their ground truth deterministically from `seed`.
pub fn synth_generate(config: &SceneConfig, seed: u64) -> Result<(Vec<BScanFrame>, Vec<GroundTruthRegion>)> {
    let (w, h) = (config.width, config.height);
    if w < 2 || h < 2 {
        return Err(Error::invalid(format!("scene frame {w}x{h} is too small")));
    }
    let mut specs: Vec<FrameSpec> = Vec::new();
    let mut layout_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5EED));
    for i in 0..config.normal_frames {
        specs.push(FrameSpec {
            id: format!("normal_{i:03}"),
            insertions: Vec::new(),
        });
    }
    for &category in &config.categories {
        for i in 0..config.anomaly_frames_per_category {
            specs.push(FrameSpec {
                id: format!("{category}_{i:03}"),
                insertions: vec![random_insertion(category, w, h, &mut layout_rng)],
            });
        }
    }
    specs.extend(config.frames.iter().cloned());

    let mut frames = Vec::with_capacity(specs.len());
    let mut truths = Vec::new();
    for (index, spec) in specs.iter().enumerate() {
        for ins in &spec.insertions {
            if !ins.rect.fits_in(w, h) {
                return Err(Error::invalid(format!(
                    "insertion {} in frame {} lies outside the {w}x{h} frame",
                    ins.rect, spec.id
                )));
            }
        }
        let mut rng = frame_rng(seed, index as u64);
        let mut grid = background(w, h, &config.background, &mut rng);
        for ins in &spec.insertions {
            draw_anomaly(&mut grid, ins, &mut rng);
            truths.push(GroundTruthRegion {
                frame_id: spec.id.clone(),
                rect: ins.rect,
                category: ins.category,
            });
        }
        let clip = config.background.clip;
        let grid = grid.map(|v| v.clamp(-clip, clip));
        frames.push(BScanFrame {
            id: spec.id.clone(),
            grid,
            meta: FrameMeta {
                time_window_ns: Some(64.0),
                trace_spacing_m: Some(15.0 / w as f64),
            },
        });
    }
    Ok((frames, truths))
}

fn ricker(t: f64, sigma: f64) -> f64 {
    let a = (t / sigma).powi(2);
    (1.0 - a) * (-0.5 * a).exp()
}

/// Two-lobed wavelet reaching both +1 and -1.
fn cosine_burst(t: f64, period: f64, sigma: f64) -> f64 {
    (2.0 * PI * t / period).cos() * (-(t / sigma).powi(2)).exp()
}

fn background(w: usize, h: usize, bg: &Background, rng: &mut ChaCha8Rng) -> Grid {
    let white = Normal::new(0.0, bg.noise.max(1e-12)).unwrap();
    let band = Normal::new(0.0, bg.band_noise.max(1e-12)).unwrap();

    struct Layer {
        depth: f64,
        amplitude: f64,
        sigma: f64,
        undulation: f64,
        period: f64,
        phase: f64,
    }
    let top = (bg.surface_row + 8) as f64;
    let span = (h as f64 - 4.0 - top).max(1.0);
    let layers: Vec<Layer> = (0..bg.layers)
        .map(|i| {
            let slot = span / bg.layers.max(1) as f64;
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            Layer {
                depth: top + slot * (i as f64 + rng.random_range(0.2..0.8)),
                amplitude: sign * bg.layer_amplitude * rng.random_range(0.6..1.0),
                sigma: rng.random_range(1.2..2.2),
                undulation: bg.layer_undulation * rng.random_range(0.0..1.0),
                period: rng.random_range(0.8..2.0) * w as f64,
                phase: rng.random_range(0.0..2.0 * PI),
            }
        })
        .collect();
    let row_offsets: Vec<f64> = (0..h).map(|_| band.sample(rng)).collect();
    let trace_gain: Vec<f64> = (0..w).map(|_| 1.0 + 0.05 * band.sample(rng) / bg.band_noise.max(1e-12)).collect();
    let mut noise: Vec<f64> = (0..w * h).map(|_| white.sample(rng)).collect();
    if bg.noise == 0.0 {
        noise.iter_mut().for_each(|v| *v = 0.0);
    }

    Grid::from_fn(w, h, |x, y| {
        let yf = y as f64;
        let attenuation = (-yf / (1.5 * h as f64)).exp();
        let mut v = bg.surface_amplitude * cosine_burst(yf - bg.surface_row as f64, 6.0, 3.0);
        for l in &layers {
            let d = l.depth + l.undulation * (2.0 * PI * x as f64 / l.period + l.phase).sin();
            v += l.amplitude * attenuation * ricker(yf - d, l.sigma);
        }
        v * trace_gain[x] + row_offsets[y] * attenuation + noise[y * w + x]
    })
}

fn draw_anomaly(grid: &mut Grid, ins: &Insertion, rng: &mut ChaCha8Rng) {
    let r = ins.rect;
    let amp = ins.amplitude;
    let (rw, rh) = (r.width() as f64, r.height() as f64);
    let cx = 0.5 * (r.x1 + r.x2) as f64;
    match ins.category {
        Category::Pipe => {
            // diffraction hyperbola, apex near the top edge, limbs reaching the bottom corners
            let hw = (0.5 * rw).max(1.0);
            let apex = r.y1 as f64 + 2.5;
            let drop = (rh - 5.0).max(1.0);
            let d = 0.45 * hw;
            let norm = (d * d + hw * hw).sqrt() - d;
            for y in r.y1..=r.y2 {
                for x in r.x1..=r.x2 {
                    let dx = x as f64 - cx;
                    let t = apex + drop * ((d * d + dx * dx).sqrt() - d) / norm;
                    let fade = 1.0 - 0.5 * (dx.abs() / hw).min(1.0);
                    let dy = y as f64 - t;
                    let v = amp * fade * (1.2 * ricker(dy, 1.3) - 0.6 * ricker(dy - 4.0, 1.3));
                    grid.set(x, y, grid.get(x, y) + v);
                }
            }
        }
        Category::Cavity => {
            // strong top reflection ringing down through an elliptical envelope
            let cy = 0.5 * (r.y1 + r.y2) as f64;
            for y in r.y1..=r.y2 {
                for x in r.x1..=r.x2 {
                    let ex = (x as f64 - cx) / (0.5 * rw);
                    let ey = (y as f64 - cy) / (0.5 * rh);
                    let env = (1.0 - 0.7 * (ex * ex + ey * ey)).max(0.0);
                    let depth = (y - r.y1) as f64;
                    let ring = (2.0 * PI * depth / 5.0).cos() * (-depth / (0.7 * rh)).exp();
                    let v = 1.6 * amp * env.sqrt() * ring;
                    grid.set(x, y, grid.get(x, y) + v);
                }
            }
        }
        Category::Loose => {
            // chaotic scattering: smoothed random field, tapered to the rect
            let (iw, ih) = (r.width(), r.height());
            let normal = Normal::new(0.0, 1.0).unwrap();
            let raw: Vec<f64> = (0..iw * ih).map(|_| normal.sample(rng)).collect();
            for j in 0..ih {
                for i in 0..iw {
                    let mut s = 0.0;
                    let mut n: f64 = 0.0;
                    for dj in j.saturating_sub(1)..=(j + 1).min(ih - 1) {
                        for di in i.saturating_sub(1)..=(i + 1).min(iw - 1) {
                            s += raw[dj * iw + di];
                            n += 1.0;
                        }
                    }
                    let tx = (i.min(iw - 1 - i) as f64 / 3.0).min(1.0);
                    let ty = (j.min(ih - 1 - j) as f64 / 3.0).min(1.0);
                    let v = 1.3 * amp * tx.max(0.3) * ty.max(0.3) * s / n.sqrt();
                    let (x, y) = (r.x1 + i, r.y1 + j);
                    grid.set(x, y, grid.get(x, y) + v);
                }
            }
        }
        Category::Crack => {
            // dipping fracture from one top corner to the opposite bottom
            // corner: broken thin reflector, layers phase reversed below it
            let down = rng.random_bool(0.5);
            let scatter = Normal::new(0.0, 1.0).unwrap();
            let mut on = true;
            let gaps: Vec<bool> = (r.x1..=r.x2)
                .map(|_| {
                    if rng.random_bool(0.08) {
                        on = !on;
                    }
                    on
                })
                .collect();
            for (i, x) in (r.x1..=r.x2).enumerate() {
                let f = i as f64 / (rw - 1.0).max(1.0);
                let f = if down { f } else { 1.0 - f };
                let centre = r.y1 as f64 + 2.0 + f * (rh - 5.0).max(0.0);
                let line = if gaps[i] { 1.0 } else { 0.6 };
                for y in r.y1..=r.y2 {
                    let bgv = grid.get(x, y);
                    let dy = y as f64 - centre;
                    let flip = if dy > 0.0 { -2.0 * bgv } else { 0.0 };
                    let zone = (-(dy / 5.0).powi(2)).exp();
                    let rubble = 0.5 * amp * zone * scatter.sample(rng);
                    let v = flip
                        + rubble
                        + amp * line * (1.4 * ricker(dy, 1.0) + 0.6 * (2.0 * PI * dy / 3.0).sin() * zone);
                    grid.set(x, y, bgv + v);
                }
            }
        }
        Category::Manhole => {
            // strong shallow multiples spanning the rect width
            for y in r.y1..=r.y2 {
                for x in r.x1..=r.x2 {
                    let depth = (y - r.y1) as f64;
                    let edge = ((x - r.x1).min(r.x2 - x) as f64 / 3.0).min(1.0);
                    let v = 1.8 * amp * edge.max(0.4) * (2.0 * PI * depth / 3.5).sin() * (-depth / (2.0 * rh)).exp();
                    grid.set(x, y, grid.get(x, y) + v);
                }
            }
        }
    }
}
