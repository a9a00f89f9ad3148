//! Target signals as coordinate/value samples.
//!
//! Coordinates live in `[-1, 1]^n` at cell centers; values are normalized to
//! `[-1, 1]`. Images and videos use `(x, y)` and `(t, x, y)` with samples in
//! row-major order (frame, then row, then column).

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::loss::RegionMask;
use crate::net::ValueMap;
use crate::tensor::{Matrix, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    /// 1D samples. `regular` means cell-centered and evenly spaced.
    Line {
        samples: usize,
        regular: bool,
    },
    Image {
        width: usize,
        height: usize,
        channels: usize,
    },
    /// Frames `first_frame..first_frame + frames` of a plan of `total_frames`.
    Video {
        width: usize,
        height: usize,
        channels: usize,
        frames: usize,
        first_frame: usize,
        total_frames: usize,
    },
}

impl Grid {
    pub fn samples(&self) -> usize {
        match *self {
            Grid::Line { samples, .. } => samples,
            Grid::Image { width, height, .. } => width * height,
            Grid::Video { width, height, frames, .. } => width * height * frames,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub coords: Matrix,
    pub values: Matrix,
    pub grid: Grid,
    /// Maps normalized values back to the signal's natural scale.
    pub value_map: ValueMap,
}

impl SampledSignal {
    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.rows() == 0
    }

    /// Values at their natural scale.
    pub fn raw_values(&self) -> Matrix {
        let m = self.value_map;
        self.values.map(|v| m.apply(v))
    }
}

/// Pixel-center coordinate of cell `i` out of `n`.
#[inline]
pub fn cell_center(i: usize, n: usize) -> f64 {
    -1.0 + (2 * i + 1) as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// Cell centers of `[0, 1)`, suitable for DFT analysis.
    #[default]
    Regular,
    /// Independent uniform draws over `[0, 1)`.
    Random,
}

/// `f(x) = sum_i sin(2 pi k_i x + phi_i)` on `x in [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinusoidSpec {
    pub frequencies: Vec<f64>,
    pub phases: Vec<f64>,
    pub samples: usize,
    pub sampling: Sampling,
}

/// Raw values are divided by this so the sum of ten unit sinusoids fits in `[-1, 1]`.
pub const SINUSOID_SCALE: f64 = 10.0;

impl SinusoidSpec {
    /// Frequencies `5, 10, ..., 50` with phases drawn from `U(0, 2 pi)`.
    pub fn standard(samples: usize, rng: &mut RngState) -> Result<Self> {
        let frequencies: Vec<f64> = (1..=10).map(|i| 5.0 * i as f64).collect();
        let phases = rng.uniform(0.0, 2.0 * PI, frequencies.len())?;
        Ok(SinusoidSpec { frequencies, phases, samples, sampling: Sampling::Regular })
    }

    /// Raw (unscaled) function value.
    pub fn eval(&self, x: f64) -> f64 {
        self.frequencies.iter().zip(&self.phases).map(|(&k, &p)| libm::sin(2.0 * PI * k * x + p)).sum()
    }
}

/// Samples the sinusoid on `[0, 1]`, mapping `x` to `2x - 1` for the network
/// and scaling values by `1 / SINUSOID_SCALE`.
pub fn make_sinusoid_1d(spec: &SinusoidSpec, rng: &mut RngState) -> Result<SampledSignal> {
    if spec.frequencies.is_empty() || spec.frequencies.len() != spec.phases.len() {
        return Err(Error::arg("sinusoid needs equal, non-empty frequency and phase lists"));
    }
    if spec.samples < 2 {
        return Err(Error::arg("sinusoid needs at least two samples"));
    }
    let n = spec.samples;
    let xs: Vec<f64> = match spec.sampling {
        Sampling::Regular => (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect(),
        Sampling::Random => (0..n).map(|_| rng.next_f64()).collect(),
    };
    let coords = Matrix::from_fn(n, 1, |r, _| 2.0 * xs[r] - 1.0);
    let values = Matrix::from_fn(n, 1, |r, _| spec.eval(xs[r]) / SINUSOID_SCALE);
    Ok(SampledSignal {
        coords,
        values,
        grid: Grid::Line { samples: n, regular: spec.sampling == Sampling::Regular },
        value_map: ValueMap { scale: SINUSOID_SCALE, offset: 0.0 },
    })
}

#[inline]
pub fn byte_to_value(b: u8) -> f64 {
    b as f64 / 127.5 - 1.0
}

#[inline]
pub fn value_to_byte(v: f64) -> u8 {
    libm::round((0.5 * v + 0.5).clamp(0.0, 1.0) * 255.0) as u8
}

fn check_pixels(width: usize, height: usize, channels: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 || channels == 0 {
        return Err(Error::arg("image dimensions must be non-zero"));
    }
    if len != width * height * channels {
        return Err(Error::shape("image", (width * height, channels), (len, 1)));
    }
    Ok(())
}

/// Builds an image signal from interleaved 8-bit samples.
pub fn image_from_pixels(width: usize, height: usize, channels: usize, pixels: &[u8]) -> Result<SampledSignal> {
    check_pixels(width, height, channels, pixels.len())?;
    let n = width * height;
    let coords =
        Matrix::from_fn(
            n,
            2,
            |i, c| if c == 0 { cell_center(i % width, width) } else { cell_center(i / width, height) },
        );
    let values = Matrix::from_vec(n, channels, pixels.iter().map(|&b| byte_to_value(b)).collect())?;
    Ok(SampledSignal { coords, values, grid: Grid::Image { width, height, channels }, value_map: ValueMap::UNIT })
}

/// Builds a video signal from frames `first_frame..` of a plan with
/// `total_frames` frames; `t` is placed at the frame's cell center in the plan.
pub fn video_from_frames<F: AsRef<[u8]>>(
    width: usize,
    height: usize,
    channels: usize,
    frames: &[F],
    first_frame: usize,
    total_frames: usize,
) -> Result<SampledSignal> {
    if frames.is_empty() {
        return Err(Error::arg("video needs at least one frame"));
    }
    if first_frame + frames.len() > total_frames {
        return Err(Error::arg("frame range exceeds the planned frame count"));
    }
    let per_frame = width * height;
    let mut pixels = Vec::with_capacity(per_frame * channels * frames.len());
    for f in frames {
        check_pixels(width, height, channels, f.as_ref().len())?;
        pixels.extend_from_slice(f.as_ref());
    }
    let n = per_frame * frames.len();
    let coords = Matrix::from_fn(n, 3, |i, c| {
        let p = i % per_frame;
        match c {
            0 => cell_center(first_frame + i / per_frame, total_frames),
            1 => cell_center(p % width, width),
            _ => cell_center(p / width, height),
        }
    });
    let values = Matrix::from_vec(n, channels, pixels.iter().map(|&b| byte_to_value(b)).collect())?;
    Ok(SampledSignal {
        coords,
        values,
        grid: Grid::Video { width, height, channels, frames: frames.len(), first_frame, total_frames },
        value_map: ValueMap::UNIT,
    })
}

/// Interleaved 8-bit pixels for `values` laid out on an image or video grid.
pub fn values_to_pixels(values: &Matrix) -> Vec<u8> {
    values.as_slice().iter().map(|&v| value_to_byte(v)).collect()
}

/// The first `frames` frames of a video signal.
pub fn video_prefix(signal: &SampledSignal, frames: usize) -> Result<SampledSignal> {
    let Grid::Video { width, height, channels, frames: have, first_frame, total_frames } = signal.grid else {
        return Err(Error::arg("video_prefix needs a video signal"));
    };
    if frames == 0 || frames > have {
        return Err(Error::arg(alloc::format!("frame prefix {frames} out of range 1..={have}")));
    }
    let n = frames * width * height;
    Ok(SampledSignal {
        coords: signal.coords.block(0, 0, n, 3),
        values: signal.values.block(0, 0, n, channels),
        grid: Grid::Video { width, height, channels, frames, first_frame, total_frames },
        value_map: signal.value_map,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StripOrder {
    #[default]
    LeftToRight,
    /// Middle strip first, then alternating outward (left side first on ties).
    CenterOut,
}

/// Strip index of each column when `width` columns are cut into `num_strips` equal strips.
#[inline]
fn strip_of(col: usize, width: usize, num_strips: usize) -> usize {
    col * num_strips / width
}

fn strip_rank(order: StripOrder, num_strips: usize) -> Vec<usize> {
    let mut strips: Vec<usize> = (0..num_strips).collect();
    if order == StripOrder::CenterOut {
        strips.sort_by_key(|&s| ((2 * s + 1).abs_diff(num_strips), s));
    }
    let mut rank = alloc::vec![0; num_strips];
    for (r, s) in strips.into_iter().enumerate() {
        rank[s] = r;
    }
    rank
}

/// Mask of pixels in the first `k` vertical strips.
pub fn partition_spatial(signal: &SampledSignal, num_strips: usize, k: usize) -> Result<RegionMask> {
    partition_spatial_ordered(signal, num_strips, k, StripOrder::LeftToRight)
}

pub fn partition_spatial_ordered(
    signal: &SampledSignal,
    num_strips: usize,
    k: usize,
    order: StripOrder,
) -> Result<RegionMask> {
    let Grid::Image { width, height, .. } = signal.grid else {
        return Err(Error::arg("spatial partitioning needs an image signal"));
    };
    if num_strips == 0 || num_strips > width {
        return Err(Error::arg(alloc::format!("cannot cut {width} columns into {num_strips} strips")));
    }
    if k == 0 || k > num_strips {
        return Err(Error::arg(alloc::format!("strip count {k} out of range 1..={num_strips}")));
    }
    let rank = strip_rank(order, num_strips);
    let members = (0..width * height).map(|i| rank[strip_of(i % width, width, num_strips)] < k).collect();
    Ok(RegionMask::new(members))
}

/// Column range `[start, end)` of strip `s` (0-based, spatial order).
pub fn strip_columns(width: usize, num_strips: usize, s: usize) -> (usize, usize) {
    let start = (0..width).find(|&c| strip_of(c, width, num_strips) == s).unwrap_or(width);
    let end = (start..width).find(|&c| strip_of(c, width, num_strips) != s).unwrap_or(width);
    (start, end)
}
