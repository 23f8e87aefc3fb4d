use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::region::Region;

/// Dense 2D grid of amplitudes stored row-major: `values[y * width + x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("empty grid {width}x{height}")));
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} values for {width}x{height}", width * height),
                found: format!("{} values", values.len()),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Grid {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty grid");
        Grid {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty grid");
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Grid {
            width,
            height,
            values,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    pub fn bounds(&self) -> Region {
        Region::full(self.width, self.height)
    }

    /// Copies the sub-grid covered by `region`.
    pub fn crop(&self, region: &Region) -> Result<Grid> {
        if !region.fits_in(self.width, self.height) {
            return Err(Error::invalid(format!(
                "region {region} outside {}x{} grid",
                self.width, self.height
            )));
        }
        let mut values = Vec::with_capacity(region.area());
        for y in region.y1..=region.y2 {
            values.extend_from_slice(&self.row(y)[region.x1..=region.x2]);
        }
        Ok(Grid {
            width: region.width(),
            height: region.height(),
            values,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Swaps the roles of x and y.
    pub fn transpose(&self) -> Grid {
        Grid::from_fn(self.height, self.width, |x, y| self.get(y, x))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Optional acquisition metadata carried alongside a frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_window_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_spacing_m: Option<f64>,
}

/// One B-scan frame: columns are scan positions, rows are time samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BScanFrame {
    pub id: String,
    pub grid: Grid,
    pub meta: FrameMeta,
}

impl BScanFrame {
    pub fn new(id: impl Into<String>, grid: Grid) -> Self {
        BScanFrame {
            id: id.into(),
            grid,
            meta: FrameMeta::default(),
        }
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.grid.get(x, y)
    }

    pub(crate) fn with_grid(&self, grid: Grid) -> BScanFrame {
        BScanFrame {
            id: self.id.clone(),
            grid,
            meta: self.meta.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Cavity,
    Crack,
    Loose,
    Manhole,
    Pipe,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Cavity,
        Category::Crack,
        Category::Loose,
        Category::Manhole,
        Category::Pipe,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Cavity => "cavity",
            Category::Crack => "crack",
            Category::Loose => "loose",
            Category::Manhole => "manhole",
            Category::Pipe => "pipe",
        }
    }

    pub fn index(&self) -> usize {
        Category::ALL.iter().position(|c| c == self).unwrap()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::parse("category", format!("unknown category {s:?}")))
    }
}

/// Annotated anomaly rectangle for one frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthRegion {
    pub frame_id: String,
    pub rect: Region,
    pub category: Category,
}
