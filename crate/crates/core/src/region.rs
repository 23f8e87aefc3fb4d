use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle with inclusive pixel bounds, `x` along columns and
/// `y` along rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Region {
    pub x1: usize,
    pub x2: usize,
    pub y1: usize,
    pub y2: usize,
}

impl Region {
    pub fn new(x1: usize, x2: usize, y1: usize, y2: usize) -> Result<Self> {
        if x1 > x2 || y1 > y2 {
            return Err(Error::invalid(format!(
                "degenerate region x[{x1},{x2}] y[{y1},{y2}]"
            )));
        }
        Ok(Region { x1, x2, y1, y2 })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Region {
            x1: 0,
            x2: width - 1,
            y1: 0,
            y2: height - 1,
        }
    }

    pub fn width(&self) -> usize {
        self.x2 - self.x1 + 1
    }

    pub fn height(&self) -> usize {
        self.y2 - self.y1 + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x1..=self.x2).contains(&x) && (self.y1..=self.y2).contains(&y)
    }

    pub fn contains_region(&self, other: &Region) -> bool {
        self.x1 <= other.x1 && other.x2 <= self.x2 && self.y1 <= other.y1 && other.y2 <= self.y2
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.x2 < width && self.y2 < height
    }

    pub fn intersection(&self, other: &Region) -> Option<Region> {
        let x1 = self.x1.max(other.x1);
        let x2 = self.x2.min(other.x2);
        let y1 = self.y1.max(other.y1);
        let y2 = self.y2.min(other.y2);
        (x1 <= x2 && y1 <= y2).then_some(Region { x1, x2, y1, y2 })
    }

    /// Smallest rectangle containing both.
    pub fn union_bounds(&self, other: &Region) -> Region {
        Region {
            x1: self.x1.min(other.x1),
            x2: self.x2.max(other.x2),
            y1: self.y1.min(other.y1),
            y2: self.y2.max(other.y2),
        }
    }

    /// True when the rectangles share a pixel or sit edge/corner adjacent.
    pub fn overlaps_or_touches(&self, other: &Region) -> bool {
        self.x1 <= other.x2 + 1
            && other.x1 <= self.x2 + 1
            && self.y1 <= other.y2 + 1
            && other.y1 <= self.y2 + 1
    }

    /// Grows each side by the given margins, clipped to a `width`×`height` frame.
    pub fn dilate(&self, dx: usize, dy: usize, width: usize, height: usize) -> Region {
        Region {
            x1: self.x1.saturating_sub(dx),
            x2: (self.x2 + dx).min(width - 1),
            y1: self.y1.saturating_sub(dy),
            y2: (self.y2 + dy).min(height - 1),
        }
    }
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]x[{}, {}]", self.x1, self.x2, self.y1, self.y2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inverted_bounds() {
        assert!(Region::new(3, 2, 0, 0).is_err());
        assert!(Region::new(0, 0, 5, 4).is_err());
    }

    #[test]
    fn touching_is_inclusive_of_adjacency() {
        let a = Region::new(0, 4, 0, 4).unwrap();
        assert!(a.overlaps_or_touches(&Region::new(5, 9, 0, 4).unwrap()));
        assert!(a.overlaps_or_touches(&Region::new(5, 9, 5, 9).unwrap()));
        assert!(!a.overlaps_or_touches(&Region::new(6, 9, 0, 4).unwrap()));
    }

    #[test]
    fn dilate_clips_to_frame() {
        let r = Region::new(2, 5, 1, 3).unwrap();
        assert_eq!(r.dilate(4, 4, 8, 6), Region::new(0, 7, 0, 5).unwrap());
    }
}
