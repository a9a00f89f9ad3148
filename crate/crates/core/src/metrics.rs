//! Reconstruction quality and spectrum measurements.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Tables and CSV reports print this instead of an infinite PSNR.
pub const PSNR_CAP: f64 = 99.0;

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::shape("mse", (target.len(), 1), (pred.len(), 1)));
    }
    if pred.is_empty() {
        return Err(Error::arg("mse of empty arrays"));
    }
    Ok(pred.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64)
}

/// `10 log10(peak^2 / mse)`. Zero error gives `f64::INFINITY`.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        10.0 * libm::log10(peak * peak / mse)
    }
}

pub fn psnr(pred: &[f64], target: &[f64], peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(pred, target)?, peak))
}

pub fn capped(psnr: f64) -> f64 {
    psnr.min(PSNR_CAP)
}

/// Maps a network-range value in `[-1, 1]` to `[0, 1]`, clamping.
#[inline]
pub fn to_unit(v: f64) -> f64 {
    (0.5 * v + 0.5).clamp(0.0, 1.0)
}

/// PSNR (peak 1) between network-range matrices after mapping both to `[0, 1]`.
/// When `rows` is given only those samples are compared.
pub fn unit_psnr(pred: &Matrix, target: &Matrix, rows: Option<&[bool]>) -> Result<f64> {
    Ok(psnr_from_mse(unit_mse(pred, target, rows)?, 1.0))
}

pub fn unit_mse(pred: &Matrix, target: &Matrix, rows: Option<&[bool]>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("unit_mse", target.shape(), pred.shape()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in 0..pred.rows() {
        if rows.is_some_and(|m| !m[r]) {
            continue;
        }
        for (&p, &t) in pred.row(r).iter().zip(target.row(r)) {
            let e = to_unit(p) - to_unit(t);
            sum += e * e;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::arg("unit_mse over an empty selection"));
    }
    Ok(sum / count as f64)
}

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = libm::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Mirror index without repeating the edge sample: -1 -> 1, n -> n - 2.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

fn blur(plane: &[f64], width: usize, height: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let xx = reflect(x as isize + k as isize - half, width);
                acc += t * plane[y * width + xx];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let yy = reflect(y as isize + k as isize - half, height);
                acc += t * tmp[yy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Mean SSIM of one plane with values in `[0, 1]`.
pub fn ssim_plane(a: &[f64], b: &[f64], width: usize, height: usize) -> Result<f64> {
    if a.len() != width * height || b.len() != width * height {
        return Err(Error::shape("ssim", (height, width), (a.len(), b.len())));
    }
    if width < SSIM_WINDOW || height < SSIM_WINDOW {
        return Err(Error::arg(alloc::format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {width}x{height}"
        )));
    }
    let taps = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mu_a = blur(a, width, height, &taps);
    let mu_b = blur(b, width, height, &taps);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let e_aa = blur(&aa, width, height, &taps);
    let e_bb = blur(&bb, width, height, &taps);
    let e_ab = blur(&ab, width, height, &taps);
    let mut total = 0.0;
    for i in 0..a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / a.len() as f64)
}

/// SSIM of two `N x c` sample matrices laid out as a `width x height` grid,
/// averaged over channels. Values must already be in `[0, 1]`.
pub fn ssim(pred: &Matrix, target: &Matrix, width: usize, height: usize) -> Result<f64> {
    if pred.shape() != target.shape() || pred.rows() != width * height {
        return Err(Error::shape("ssim", (width * height, target.cols()), pred.shape()));
    }
    let channels = pred.cols();
    let mut acc = 0.0;
    for c in 0..channels {
        let a: Vec<f64> = pred.row_iter().map(|r| r[c]).collect();
        let b: Vec<f64> = target.row_iter().map(|r| r[c]).collect();
        acc += ssim_plane(&a, &b, width, height)?;
    }
    Ok(acc / channels as f64)
}

/// Discrete Fourier transform, radix-2 for power-of-two lengths and direct otherwise.
pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    if n <= 1 {
        return x.to_vec();
    }
    if n.is_power_of_two() {
        fft_radix2(x)
    } else {
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| v * twiddle((k * j) % n, n))
                    .fold(Complex64::new(0.0, 0.0), |a, b| a + b)
            })
            .collect()
    }
}

#[inline]
fn twiddle(k: usize, n: usize) -> Complex64 {
    let (s, c) = libm::sincos(-2.0 * PI * k as f64 / n as f64);
    Complex64::new(c, s)
}

fn fft_radix2(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let bits = n.trailing_zeros();
    let mut a: Vec<Complex64> = (0..n).map(|i| x[i.reverse_bits() >> (usize::BITS - bits)]).collect();
    let tw: Vec<Complex64> = (0..n / 2).map(|k| twiddle(k, n)).collect();
    let mut len = 2;
    while len <= n {
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                let w = tw[k * step];
                let u = a[start + k];
                let v = a[start + k + len / 2] * w;
                a[start + k] = u + v;
                a[start + k + len / 2] = u - v;
            }
        }
        len <<= 1;
    }
    a
}

/// Magnitudes of bins `0..=N/2` of a real regular-grid signal.
pub fn dft_1d(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::arg("dft_1d needs at least two samples"));
    }
    let x: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let spec = dft(&x);
    Ok(spec[..=values.len() / 2].iter().map(|c| c.norm()).collect())
}

/// Centered 2D magnitude spectrum of a `height x width` plane (row-major).
/// Entry `(height/2, width/2)` is the DC term.
pub fn spectrum_2d(plane: &[f64], width: usize, height: usize) -> Result<Matrix> {
    if plane.len() != width * height || width == 0 || height == 0 {
        return Err(Error::shape("spectrum_2d", (height, width), (plane.len(), 1)));
    }
    if width > 512 || height > 512 {
        return Err(Error::arg("spectrum_2d supports grids up to 512x512"));
    }
    let mut rows: Vec<Vec<Complex64>> = (0..height)
        .map(|y| dft(&plane[y * width..(y + 1) * width].iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>()))
        .collect();
    for x in 0..width {
        let col: Vec<Complex64> = rows.iter().map(|r| r[x]).collect();
        for (y, v) in dft(&col).into_iter().enumerate() {
            rows[y][x] = v;
        }
    }
    Ok(Matrix::from_fn(height, width, |r, c| {
        rows[(r + height - height / 2) % height][(c + width - width / 2) % width].norm()
    }))
}

/// Mean magnitude over integer-radius annuli around the spectrum center.
pub fn radial_profile(spectrum: &Matrix) -> Vec<f64> {
    let (h, w) = spectrum.shape();
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let max_r = libm::round(libm::sqrt(cy * cy + cx * cx)) as usize + 1;
    let mut sum = vec![0.0; max_r + 1];
    let mut count = vec![0usize; max_r + 1];
    for r in 0..h {
        for c in 0..w {
            let d = libm::round(libm::hypot(r as f64 - cy, c as f64 - cx)) as usize;
            sum[d] += spectrum[(r, c)];
            count[d] += 1;
        }
    }
    let last = count.iter().rposition(|&c| c > 0).unwrap_or(0);
    sum.truncate(last + 1);
    sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect()
}

/// Fraction of spectral energy (squared magnitude) at radius strictly above `radius`.
pub fn high_frequency_fraction(spectrum: &Matrix, radius: f64) -> f64 {
    let (h, w) = spectrum.shape();
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let mut high = 0.0;
    let mut total = 0.0;
    for r in 0..h {
        for c in 0..w {
            let e = spectrum[(r, c)] * spectrum[(r, c)];
            total += e;
            if libm::hypot(r as f64 - cy, c as f64 - cx) > radius {
                high += e;
            }
        }
    }
    if total > 0.0 {
        high / total
    } else {
        0.0
    }
}

/// Energy-weighted mean bin index.
pub fn spectral_centroid(magnitudes: &[f64]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, &m) in magnitudes.iter().enumerate() {
        num += k as f64 * m * m;
        den += m * m;
    }
    if den.is_nan() || den <= 0.0 {
        return Err(Error::arg("spectral centroid of an all-zero spectrum"));
    }
    Ok(num / den)
}

/// Per-stage evaluation row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageMetrics {
    pub stage: usize,
    pub params: usize,
    pub mse: f64,
    pub psnr: f64,
    pub ssim: Option<f64>,
}

impl StageMetrics {
    /// Builds a row whose PSNR is derived from `mse` (peak 1).
    pub fn new(stage: usize, params: usize, mse: f64, ssim: Option<f64>) -> Self {
        StageMetrics { stage, params, mse, psnr: psnr_from_mse(mse, 1.0), ssim }
    }
}

/// One logged training point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub stage: usize,
    pub loss: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub stages: Vec<StageMetrics>,
    pub series: Vec<LogRow>,
}

impl MetricsReport {
    pub fn extend(&mut self, other: MetricsReport) {
        self.stages.extend(other.stages);
        self.series.extend(other.series);
    }

    pub fn last_log(&self) -> Option<&LogRow> {
        self.series.last()
    }

    pub fn series_for(&self, stage: usize) -> impl Iterator<Item = &LogRow> {
        self.series.iter().filter(move |r| r.stage == stage)
    }
}

/// Largest drop of a curve below its running maximum.
pub fn max_drawdown(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    for v in values {
        peak = peak.max(v);
        worst = worst.max(peak - v);
    }
    worst
}
