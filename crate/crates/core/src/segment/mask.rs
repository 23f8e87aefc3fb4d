use std::path::Path;

use crate::error::{Error, Result};
use crate::gpr::io::{decode_grid, FrameFormat};
use crate::region::Region;

/// Boolean membership grid with the frame's dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub frame_id: String,
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(frame_id: impl Into<String>, width: usize, height: usize) -> Self {
        Mask {
            frame_id: frame_id.into(),
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.bits[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }
}

/// Smallest rectangle holding every set bit.
pub fn bounding_rect(mask: &Mask) -> Result<Region> {
    let mut bounds: Option<Region> = None;
    for (x, y) in mask.points() {
        bounds = Some(match bounds {
            None => Region {
                x1: x,
                x2: x,
                y1: y,
                y2: y,
            },
            Some(r) => Region {
                x1: r.x1.min(x),
                x2: r.x2.max(x),
                y1: r.y1.min(y),
                y2: r.y2.max(y),
            },
        });
    }
    bounds.ok_or(Error::EmptyRegion)
}

/// Bounding rectangles of the 4-connected components, in scan order of each
/// component's first pixel.
pub fn component_rects(mask: &Mask) -> Vec<Region> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (sx, sy) = (start % w, start / w);
        let mut r = Region {
            x1: sx,
            x2: sx,
            y1: sy,
            y2: sy,
        };
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            r = r.union_bounds(&Region {
                x1: x,
                x2: x,
                y1: y,
                y2: y,
            });
            let mut visit = |j: usize| {
                if mask.bits[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        out.push(r);
    }
    out
}

/// Reads a PGM or PNG mask produced by any external segmenter; nonzero
/// pixels are inside.
pub fn load_external_mask(
    frame_id: &str,
    source: impl AsRef<Path>,
    width: usize,
    height: usize,
) -> Result<Mask> {
    let path = source.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = match FrameFormat::from_path(path)? {
        f @ (FrameFormat::Pgm | FrameFormat::PngGray) => f,
        other => {
            return Err(Error::parse(
                "mask",
                format!("masks must be PGM or PNG, got {other:?}"),
            ))
        }
    };
    let grid = decode_grid(&bytes, format)?;
    if grid.width() != width || grid.height() != height {
        return Err(Error::DimensionMismatch {
            expected: format!("{width}x{height} mask for frame {frame_id}"),
            found: format!("{}x{} image at {}", grid.width(), grid.height(), path.display()),
        });
    }
    Ok(Mask {
        frame_id: frame_id.to_owned(),
        width,
        height,
        bits: grid.values().iter().map(|&v| v != 0.0).collect(),
    })
}
