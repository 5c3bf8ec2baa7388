//! Heatmap rendering for spectrogram grids and critic input gradients.
//!
//! Images map one grid cell to one pixel: x is time (frames left to
//! right), y is frequency with bin 0 at the bottom, and only the bins below
//! a configurable crop are drawn, which is where the toy sources live.
//! Magnitudes render on a black-to-white scale normalized to the grid's
//! maximum; signed gradients render on a diverging scale with the most
//! negative value black, zero mid-gray, and the most positive white. Next
//! to every image sits a CSV dump of the exact values behind it, one row
//! per frame, bins in ascending order, so pixels can be verified headlessly.

use std::io::BufWriter;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// An 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Writes the image as a grayscale PNG.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
        writer
            .write_image_data(&self.pixels)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
    }
}

fn crop_check(grid: &Array2<f64>, max_bin: usize) -> Result<()> {
    if max_bin == 0 || max_bin > grid.ncols() {
        return Err(Error::Config(format!(
            "bin crop must be in 1..={}, got {max_bin}",
            grid.ncols()
        )));
    }
    if grid.nrows() == 0 {
        return Err(Error::Config("cannot render an empty grid".into()));
    }
    Ok(())
}

fn render<F: Fn(f64) -> u8>(grid: &Array2<f64>, max_bin: usize, shade: F) -> GrayImage {
    let (frames, _) = grid.dim();
    let mut pixels = Vec::with_capacity(frames * max_bin);
    for y in 0..max_bin {
        let bin = max_bin - 1 - y;
        for x in 0..frames {
            pixels.push(shade(grid[(x, bin)]));
        }
    }
    GrayImage {
        width: frames,
        height: max_bin,
        pixels,
    }
}

/// Renders non-negative magnitudes: 0 maps to black, the grid's maximum to
/// white, linearly in between. An all-zero grid is all black.
pub fn magnitude_heatmap(grid: &Array2<f64>, max_bin: usize) -> Result<GrayImage> {
    crop_check(grid, max_bin)?;
    let lo = grid.iter().cloned().fold(f64::INFINITY, f64::min);
    if !lo.is_finite() || lo < 0.0 {
        return Err(Error::Config(format!(
            "magnitude heatmap expects finite non-negative values, found {lo}"
        )));
    }
    let hi = grid
        .slice(ndarray::s![.., ..max_bin])
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max);
    let scale = if hi > 0.0 { 255.0 / hi } else { 0.0 };
    Ok(render(grid, max_bin, |v| (v * scale).round() as u8))
}

/// Renders signed values on a diverging scale, symmetric about zero: with
/// `m = max |v|` over the cropped grid, a value maps to the byte
/// `round(127.5 * (1 + v / m))`, so `-m` is black (0), zero is mid-gray
/// (128), and `+m` is white (255). An all-zero grid is uniformly mid-gray.
pub fn gradient_heatmap(grid: &Array2<f64>, max_bin: usize) -> Result<GrayImage> {
    crop_check(grid, max_bin)?;
    if let Some(v) = grid.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!(
            "gradient heatmap expects finite values, found {v}"
        )));
    }
    let m = grid
        .slice(ndarray::s![.., ..max_bin])
        .iter()
        .fold(0.0_f64, |a, &v| a.max(v.abs()));
    Ok(render(grid, max_bin, move |v| {
        let t = if m > 0.0 { v / m } else { 0.0 };
        (127.5 * (1.0 + t)).round().clamp(0.0, 255.0) as u8
    }))
}

/// The values behind a heatmap: one CSV row per frame, the cropped bins in
/// ascending order, full float precision.
pub fn grid_csv(grid: &Array2<f64>, max_bin: usize) -> Result<String> {
    crop_check(grid, max_bin)?;
    let mut out = String::new();
    for row in grid.outer_iter() {
        let line: Vec<String> = row.iter().take(max_bin).map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Writes `<stem>.png` and `<stem>.csv` for a rendered grid.
pub fn export(dir: &Path, stem: &str, image: &GrayImage, csv: &str) -> Result<()> {
    let png_path = dir.join(format!("{stem}.png"));
    image.write_png(&png_path)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))
}
