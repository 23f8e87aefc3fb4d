//! Frame readers and writers.
//!
//! Supported encodings: binary PGM (P5, 8 or 16 bit), single-channel PNG,
//! comma-separated text (one row per line), and raw little-endian `f32` with
//! an 8-byte `width u32 | height u32` header.

use std::fs;
use std::io::Cursor;
use std::path::Path;
use std::str::FromStr;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};

use super::frame::{BScanFrame, Grid, GroundTruthRegion};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameFormat {
    Pgm,
    PngGray,
    Csv,
    F32Raw,
}

impl FrameFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "pgm" => Ok(FrameFormat::Pgm),
            "png" => Ok(FrameFormat::PngGray),
            "csv" => Ok(FrameFormat::Csv),
            "f32" | "raw" => Ok(FrameFormat::F32Raw),
            _ => Err(Error::parse(
                "frame format",
                format!("cannot infer format from {}", path.display()),
            )),
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            FrameFormat::Pgm => "pgm",
            FrameFormat::PngGray => "png",
            FrameFormat::Csv => "csv",
            FrameFormat::F32Raw => "f32",
        }
    }
}

impl FromStr for FrameFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgm" => Ok(FrameFormat::Pgm),
            "png" | "png-gray" => Ok(FrameFormat::PngGray),
            "csv" => Ok(FrameFormat::Csv),
            "f32" | "f32-raw" => Ok(FrameFormat::F32Raw),
            other => Err(Error::parse("frame format", format!("unknown {other:?}"))),
        }
    }
}

pub fn frame_id_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "frame".to_owned())
}

/// Loads a frame; the id is the file stem.
pub fn load_frame(path: impl AsRef<Path>, format: FrameFormat) -> Result<BScanFrame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let grid = decode_grid(&bytes, format)?;
    Ok(BScanFrame::new(frame_id_from_path(path), grid))
}

/// Loads a frame, inferring the format from the extension.
pub fn load_frame_auto(path: impl AsRef<Path>) -> Result<BScanFrame> {
    let path = path.as_ref();
    load_frame(path, FrameFormat::from_path(path)?)
}

/// Frame files directly inside `dir` with a known extension, sorted by name.
pub fn list_frame_files(dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && FrameFormat::from_path(&path).is_ok() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Loads every frame in `dir`, ordered by id. Duplicate ids are rejected.
pub fn load_frame_dir(dir: impl AsRef<Path>) -> Result<Vec<BScanFrame>> {
    let mut frames = list_frame_files(dir)?
        .iter()
        .map(load_frame_auto)
        .collect::<Result<Vec<_>>>()?;
    frames.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(pair) = frames.windows(2).find(|p| p[0].id == p[1].id) {
        return Err(Error::invalid(format!("duplicate frame id {:?}", pair[0].id)));
    }
    Ok(frames)
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthRegion>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse("truth json", e.to_string()))
}

pub fn write_truth(path: impl AsRef<Path>, truths: &[GroundTruthRegion]) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(truths).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn decode_grid(bytes: &[u8], format: FrameFormat) -> Result<Grid> {
    match format {
        FrameFormat::Pgm => decode_pgm(bytes),
        FrameFormat::PngGray => decode_png(bytes),
        FrameFormat::Csv => decode_csv(bytes),
        FrameFormat::F32Raw => decode_f32(bytes),
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<Grid> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // whitespace and comments between header tokens
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse("pgm", "truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("").to_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::parse("pgm", format!("magic {:?} is not P5", fields[0])));
    }
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::parse("pgm", format!("bad {what} {s:?}")))
    };
    let width = num(&fields[1], "width")?;
    let height = num(&fields[2], "height")?;
    let maxval = num(&fields[3], "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse("pgm", format!("maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let sample = if maxval < 256 { 1 } else { 2 };
    let needed = width * height * sample;
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() < needed {
        return Err(Error::DimensionMismatch {
            expected: format!("{needed} raster bytes for {width}x{height}"),
            found: format!("{} bytes", data.len()),
        });
    }
    let values = if sample == 1 {
        data[..needed].iter().map(|&b| b as f64).collect()
    } else {
        data[..needed]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    };
    Grid::new(width, height, values)
}

fn decode_png(bytes: &[u8]) -> Result<Grid> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::parse("png", e.to_string()))?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let values = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        other => {
            return Err(Error::parse(
                "png",
                format!("expected single-channel image, found {:?}", other.color()),
            ))
        }
    };
    Grid::new(width, height, values)
}

fn decode_csv(bytes: &[u8]) -> Result<Grid> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse("csv", e.to_string()))?;
    let mut width = None;
    let mut values = Vec::new();
    let mut height = 0;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::parse("csv", format!("line {}: bad number {cell:?}", line_no + 1))
            })?;
            values.push(v);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(Error::DimensionMismatch {
                    expected: format!("{w} columns"),
                    found: format!("{count} columns on line {}", line_no + 1),
                })
            }
            _ => {}
        }
        height += 1;
    }
    let width = width.ok_or_else(|| Error::parse("csv", "no rows"))?;
    Grid::new(width, height, values)
}

fn decode_f32(bytes: &[u8]) -> Result<Grid> {
    if bytes.len() < 8 {
        return Err(Error::parse("f32 raw", "missing 8-byte header"));
    }
    let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != width * height * 4 {
        return Err(Error::DimensionMismatch {
            expected: format!("{} payload bytes for {width}x{height}", width * height * 4),
            found: format!("{} bytes", body.len()),
        });
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Grid::new(width, height, values)
}

pub fn encode_grid(grid: &Grid, format: FrameFormat) -> Result<Vec<u8>> {
    match format {
        FrameFormat::Pgm => Ok(encode_pgm(grid)),
        FrameFormat::PngGray => encode_png_gray(grid),
        FrameFormat::Csv => Ok(encode_csv(grid)),
        FrameFormat::F32Raw => Ok(encode_f32(grid)),
    }
}

pub fn save_frame(frame: &BScanFrame, path: impl AsRef<Path>, format: FrameFormat) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_grid(&frame.grid, format)?).map_err(|e| Error::io(path, e))
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// 8-bit PGM; values are rounded and clamped to `[0, 255]`.
pub fn encode_pgm(grid: &Grid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    out.extend(grid.values().iter().map(|&v| to_u8(v)));
    out
}

/// 8-bit grayscale PNG; values are rounded and clamped to `[0, 255]`.
pub fn encode_png_gray(grid: &Grid) -> Result<Vec<u8>> {
    let raw: Vec<u8> = grid.values().iter().map(|&v| to_u8(v)).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(grid.width() as u32, grid.height() as u32, raw)
            .expect("buffer length matches grid");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::parse("png", e.to_string()))?;
    Ok(out.into_inner())
}

fn encode_csv(grid: &Grid) -> Vec<u8> {
    let mut out = String::new();
    for y in 0..grid.height() {
        let row: Vec<String> = grid.row(y).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

fn encode_f32(grid: &Grid) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + grid.values().len() * 4);
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    for &v in grid.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}
