use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::mask::Mask;
use super::prompts::PromptSet;
use crate::error::{Error, Result};
use crate::gpr::preprocess::median_grid;
use crate::gpr::{BScanFrame, Grid};

/// Parameters of the built-in prompt-seeded region grower.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowParams {
    /// Maximum absolute difference from the seed value, in normalized units.
    pub tol: f64,
    /// Median pre-smoothing window (odd).
    pub smooth_k: usize,
}

impl Default for GrowParams {
    fn default() -> Self {
        GrowParams {
            tol: 0.15,
            smooth_k: 3,
        }
    }
}

/// 4-connected flood fill of points within `tol` of the seed's value.
/// Points flagged in `barrier` are never entered.
fn flood(grid: &Grid, seed: (usize, usize), tol: f64, barrier: Option<&[bool]>, out: &mut [bool]) {
    let w = grid.width();
    let h = grid.height();
    let reference = grid.get(seed.0, seed.1);
    let blocked = |i: usize| barrier.is_some_and(|b| b[i]);
    let start = seed.1 * w + seed.0;
    if out[start] || blocked(start) {
        return;
    }
    let mut queue = VecDeque::from([start]);
    out[start] = true;
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut push = |j: usize| {
            if !out[j] && !blocked(j) && (grid.values()[j] - reference).abs() <= tol {
                out[j] = true;
                queue.push_back(j);
            }
        };
        if x > 0 {
            push(i - 1);
        }
        if x + 1 < w {
            push(i + 1);
        }
        if y > 0 {
            push(i - w);
        }
        if y + 1 < h {
            push(i + w);
        }
    }
}

/// Union of the positives' grown sets minus the negatives' grown sets.
///
/// Each seed grows independently (already-claimed points are still tested
/// against the new seed's value). Negative growth treats positive prompt
/// points as barriers, so every positive stays inside the mask and no
/// negative set overlaps the result.
pub fn region_grow(frame: &BScanFrame, prompts: &PromptSet, params: &GrowParams) -> Result<Mask> {
    let (w, h) = (frame.width(), frame.height());
    prompts.validate(w, h)?;
    if params.smooth_k % 2 == 0 {
        return Err(Error::invalid(format!(
            "smoothing window must be odd, got {}",
            params.smooth_k
        )));
    }
    if !(params.tol >= 0.0) {
        return Err(Error::invalid(format!("tolerance must be >= 0, got {}", params.tol)));
    }
    let smooth = median_grid(&frame.grid, params.smooth_k);

    let mut positive = vec![false; w * h];
    for &seed in &prompts.positives {
        let mut grown = vec![false; w * h];
        flood(&smooth, seed, params.tol, None, &mut grown);
        positive.iter_mut().zip(&grown).for_each(|(p, g)| *p |= g);
    }

    let mut seeds = vec![false; w * h];
    for &(x, y) in &prompts.positives {
        seeds[y * w + x] = true;
    }
    let mut negative = vec![false; w * h];
    for &seed in &prompts.negatives {
        let mut grown = vec![false; w * h];
        flood(&smooth, seed, params.tol, Some(&seeds), &mut grown);
        negative.iter_mut().zip(&grown).for_each(|(n, g)| *n |= g);
    }

    let mut mask = Mask::empty(frame.id.clone(), w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if positive[i] && !negative[i] {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}
