use super::heatmap::Heatmap;
use crate::error::Result;
use crate::gpr::{encode_png_gray, Grid};

/// Grayscale view of a grid: min maps to 0, max to 255.
pub fn render_grid_png(grid: &Grid) -> Result<Vec<u8>> {
    let (lo, hi) = grid.min_max();
    let span = hi - lo;
    let scaled = grid.map(|v| if span > 0.0 { (v - lo) / span * 255.0 } else { 0.0 });
    encode_png_gray(&scaled)
}

/// Frame-sized heatmap image. Unscored pixels are 0, scored pixels span
/// 1..=254 and the argmax pixel alone is 255.
pub fn render_heatmap_png(heatmap: &Heatmap, width: usize, height: usize) -> Result<Vec<u8>> {
    let mut grid = Grid::zeros(width, height);
    if let Some((ax, ay, hi)) = heatmap.argmax() {
        let lo = heatmap.entries.iter().map(|e| e.2).fold(f64::INFINITY, f64::min);
        let span = hi - lo;
        for &(x, y, s) in &heatmap.entries {
            let v = if span > 0.0 { 1.0 + (s - lo) / span * 253.0 } else { 254.0 };
            grid.set(x, y, v.round().min(254.0));
        }
        grid.set(ax, ay, 255.0);
    }
    encode_png_gray(&grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpr::{decode_grid, FrameFormat};
    use crate::region::Region;

    #[test]
    fn argmax_pixel_is_unique_white() {
        let heatmap = Heatmap {
            region: Region::new(1, 2, 1, 2).unwrap(),
            entries: vec![(1, 1, 0.5), (2, 1, 0.9), (1, 2, 0.9), (2, 2, 0.1)],
        };
        let png = render_heatmap_png(&heatmap, 4, 4).unwrap();
        let g = decode_grid(&png, FrameFormat::PngGray).unwrap();
        assert_eq!(g.get(2, 1), 255.0);
        assert_eq!(g.get(1, 2), 254.0);
        assert_eq!(g.get(2, 2), 1.0);
        assert_eq!(g.get(0, 0), 0.0);
        let whites = g.values().iter().filter(|&&v| v == 255.0).count();
        assert_eq!(whites, 1);
    }
}
