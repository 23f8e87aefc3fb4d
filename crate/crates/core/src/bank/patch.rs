use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpr::{BScanFrame, Grid};
use crate::region::Region;

/// Sliding-window geometry shared by bank building and detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub win_x: usize,
    pub win_y: usize,
    pub stride: usize,
}

impl Default for PatchSpec {
    fn default() -> Self {
        PatchSpec {
            win_x: 32,
            win_y: 32,
            stride: 16,
        }
    }
}

impl PatchSpec {
    pub fn new(win_x: usize, win_y: usize, stride: usize) -> Result<Self> {
        let spec = PatchSpec {
            win_x,
            win_y,
            stride,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.win_x < 2 || self.win_y < 2 {
            return Err(Error::invalid(format!(
                "patch window {}x{} must be at least 2x2",
                self.win_x, self.win_y
            )));
        }
        if self.stride == 0 {
            return Err(Error::invalid("patch stride must be >= 1"));
        }
        Ok(())
    }

    /// Patches a `width × height` frame yields.
    pub fn count(&self, width: usize, height: usize) -> usize {
        if self.win_x > width || self.win_y > height {
            return 0;
        }
        ((width - self.win_x) / self.stride + 1) * ((height - self.win_y) / self.stride + 1)
    }

    /// Rectangle of the patch centered on `(x, y)`:
    /// `[x - ⌊X/2⌋, x + ⌈X/2⌉ - 1] × [y - ⌊Y/2⌋, y + ⌈Y/2⌉ - 1]`, or `None`
    /// when it would leave a `width × height` frame.
    pub fn centered(&self, x: usize, y: usize, width: usize, height: usize) -> Option<Region> {
        let x1 = x.checked_sub(self.win_x / 2)?;
        let y1 = y.checked_sub(self.win_y / 2)?;
        let x2 = x1 + self.win_x - 1;
        let y2 = y1 + self.win_y - 1;
        (x2 < width && y2 < height).then_some(Region { x1, x2, y1, y2 })
    }

    /// The centered rectangle clipped to the frame instead of rejected.
    pub fn centered_clipped(&self, x: usize, y: usize, width: usize, height: usize) -> Region {
        let x1 = x.saturating_sub(self.win_x / 2);
        let y1 = y.saturating_sub(self.win_y / 2);
        let x2 = (x + self.win_x.div_ceil(2) - 1).min(width - 1);
        let y2 = (y + self.win_y.div_ceil(2) - 1).min(height - 1);
        Region { x1, x2, y1, y2 }
    }
}

/// Top-left corner of an extracted patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Origin {
    pub x: usize,
    pub y: usize,
}

/// Windows at `(i·s, j·s)` that lie fully inside the frame, row-major.
pub fn extract_patches(frame: &BScanFrame, spec: &PatchSpec) -> Result<Vec<(Origin, Grid)>> {
    spec.validate()?;
    let (w, h) = (frame.width(), frame.height());
    if spec.win_x > w || spec.win_y > h {
        return Err(Error::invalid(format!(
            "window {}x{} larger than frame {w}x{h}",
            spec.win_x, spec.win_y
        )));
    }
    let mut out = Vec::with_capacity(spec.count(w, h));
    for y in (0..=h - spec.win_y).step_by(spec.stride) {
        for x in (0..=w - spec.win_x).step_by(spec.stride) {
            let rect = Region {
                x1: x,
                x2: x + spec.win_x - 1,
                y1: y,
                y2: y + spec.win_y - 1,
            };
            out.push((Origin { x, y }, frame.grid.crop(&rect)?));
        }
    }
    Ok(out)
}
