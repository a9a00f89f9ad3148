//! Image and frame-directory loading on top of [`crate::pnm`].

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use snf_core::signal::{image_from_pixels, values_to_pixels, video_from_frames, Grid};
use snf_core::{Matrix, SampledSignal};

use crate::error::{Result, SnfError};
use crate::pnm::Image;

pub fn load_image_grid(path: &Path) -> Result<SampledSignal> {
    let img = Image::read(path)?;
    Ok(image_from_pixels(img.width, img.height, img.channels, &img.pixels)?)
}

/// Frame files (`.ppm`/`.pgm`) of `dir` in lexicographic order.
pub fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| SnfError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| SnfError::io(dir, e))?.path();
        if matches!(path.extension().and_then(|e| e.to_str()), Some("ppm" | "pgm")) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Frames `range` of the directory, placed on a time axis spanning
/// `total_frames` (the whole directory when `None`).
pub fn load_video_grid(dir: &Path, range: Range<usize>, total_frames: Option<usize>) -> Result<SampledSignal> {
    let paths = frame_paths(dir)?;
    let total = total_frames.unwrap_or(paths.len());
    if range.is_empty() || range.end > paths.len() || range.end > total {
        return Err(SnfError::Usage(format!(
            "frame range {range:?} not available ({} frames in {}, plan of {total})",
            paths.len(),
            dir.display()
        )));
    }
    let mut frames = Vec::with_capacity(range.len());
    let mut shape = None;
    for path in &paths[range.clone()] {
        let img = Image::read(path)?;
        let this = (img.width, img.height, img.channels);
        if *shape.get_or_insert(this) != this {
            return Err(SnfError::Usage(format!(
                "{}: frame is {}x{}x{}, expected {:?}",
                path.display(),
                img.width,
                img.height,
                img.channels,
                shape.unwrap()
            )));
        }
        frames.push(img.pixels);
    }
    let (w, h, c) = shape.expect("non-empty range");
    Ok(video_from_frames(w, h, c, &frames, range.start, total)?)
}

/// `values` (network range) on an image grid as an 8-bit image.
pub fn to_image(values: &Matrix, width: usize, height: usize) -> Image {
    Image::new(width, height, values.cols(), values_to_pixels(values))
}

/// Splits network-range video values into per-frame images.
pub fn to_frames(values: &Matrix, grid: Grid) -> Vec<Image> {
    let Grid::Video { width, height, channels, frames, .. } = grid else {
        return Vec::new();
    };
    let per = width * height;
    (0..frames).map(|f| to_image(&values.block(f * per, 0, per, channels), width, height)).collect()
}

/// A grey square sliding diagonally over a dark background, with
/// anti-aliased edges.
pub fn moving_square(width: usize, height: usize, frames: usize) -> Vec<Image> {
    let side = width.min(height) as f64 / 3.0;
    (0..frames)
        .map(|f| {
            let t = if frames > 1 { f as f64 / (frames - 1) as f64 } else { 0.0 };
            let x0 = 2.0 + t * (width as f64 - side - 4.0);
            let y0 = 2.0 + t * (height as f64 - side - 4.0) * 0.5;
            let cover = |p: usize, lo: f64| ((p as f64 + 1.0).min(lo + side) - (p as f64).max(lo)).clamp(0.0, 1.0);
            let pixels = (0..width * height)
                .flat_map(|i| {
                    let a = cover(i % width, x0) * cover(i / width, y0);
                    let base = 40.0 + 20.0 * (i % width) as f64 / width as f64;
                    let v = (base + a * (215.0 - base)).round() as u8;
                    [v, v / 2 + 60, 255 - v]
                })
                .collect();
            Image::new(width, height, 3, pixels)
        })
        .collect()
}

/// Writes frames as `frame_0000.ppm`, `frame_0001.ppm`, ...
pub fn write_frames(dir: &Path, frames: &[Image]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SnfError::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        f.write(&dir.join(format!("frame_{i:04}.ppm")))?;
    }
    Ok(())
}
