//! Fidelity metrics and the bicubic baseline.

use crate::error::{Error, Result};
use crate::image::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Catmull-Rom parameter of the cubic convolution kernel.
pub const BICUBIC_A: f64 = -0.5;

fn same_dims(a: &Image, b: &Image) -> Result<()> {
    b.ensure_dims(a.dims())
}

pub fn mse(reference: &Image, test: &Image) -> Result<f64> {
    same_dims(reference, test)?;
    let sum: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.len() as f64)
}

/// `10 log10(1 / MSE)` on unit peak; `+inf` for identical images.
pub fn psnr(reference: &Image, test: &Image) -> Result<f64> {
    let e = mse(reference, test)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * e.log10())
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" filtering: output is `(h - k + 1) x (w - k + 1)`.
fn filter_valid(data: &[f64], height: usize, width: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = width - k + 1;
    let oh = height - k + 1;
    let mut rows = vec![0.0; height * ow];
    for r in 0..height {
        let src = &data[r * width..(r + 1) * width];
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().zip(&src[c..c + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for (i, t) in taps.iter().enumerate() {
            let src = &rows[(r + i) * ow..(r + i + 1) * ow];
            for (o, v) in out[r * ow..(r + 1) * ow].iter_mut().zip(src) {
                *o += t * v;
            }
        }
    }
    out
}

/// Mean SSIM over all fully-covered 11x11 Gaussian windows (σ = 1.5) with
/// `C1 = 0.01²`, `C2 = 0.03²` on unit dynamic range.
pub fn ssim(reference: &Image, test: &Image) -> Result<f64> {
    same_dims(reference, test)?;
    let (h, w) = reference.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Dimension {
            expected: format!("at least {SSIM_WINDOW}x{SSIM_WINDOW}"),
            actual: format!("{h}x{w}"),
        });
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let x = reference.data();
    let y = test.data();
    let prod = |f: fn(f64, f64) -> f64| -> Vec<f64> { x.iter().zip(y).map(|(a, b)| f(*a, *b)).collect() };
    let mu_x = filter_valid(x, h, w, &taps);
    let mu_y = filter_valid(y, h, w, &taps);
    let xx = filter_valid(&prod(|a, _| a * a), h, w, &taps);
    let yy = filter_valid(&prod(|_, b| b * b), h, w, &taps);
    let xy = filter_valid(&prod(|a, b| a * b), h, w, &taps);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = xx[i] - mx * mx;
            let vy = yy[i] - my * my;
            let cxy = xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Cubic convolution kernel with parameter `a`.
pub fn cubic_kernel(t: f64, a: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// Source taps and weights for each output coordinate along one axis.
/// Output pixel `i` samples LR position `(i + 0.5)/f − 0.5`, so LR pixel
/// centers land on HR block centers.
fn axis_taps(len: usize, factor: usize) -> Vec<([usize; 4], [f64; 4])> {
    let last = len as isize - 1;
    (0..len * factor)
        .map(|i| {
            let u = (i as f64 + 0.5) / factor as f64 - 0.5;
            let base = u.floor();
            let t = u - base;
            let base = base as isize;
            let mut idx = [0usize; 4];
            let mut wts = [0.0; 4];
            for k in 0..4 {
                idx[k] = (base + k as isize - 1).clamp(0, last) as usize;
                wts[k] = cubic_kernel(t - (k as f64 - 1.0), BICUBIC_A);
            }
            (idx, wts)
        })
        .collect()
}

/// Catmull-Rom upsampling by an integer factor with edge clamping.
pub fn bicubic_upsample(lr: &Image, factor: usize) -> Result<Image> {
    if factor == 0 {
        return Err(Error::param("factor", "must be at least 1"));
    }
    let (h, w) = lr.dims();
    let rows = axis_taps(h, factor);
    let cols = axis_taps(w, factor);
    let ow = w * factor;
    let mut horiz = vec![0.0; h * ow];
    for r in 0..h {
        let src = &lr.data()[r * w..(r + 1) * w];
        for (c, (idx, wts)) in cols.iter().enumerate() {
            horiz[r * ow + c] = (0..4).map(|k| wts[k] * src[idx[k]]).sum();
        }
    }
    let data = rows
        .iter()
        .flat_map(|(idx, wts)| {
            let horiz = &horiz;
            (0..ow).map(move |c| (0..4).map(|k| wts[k] * horiz[idx[k] * ow + c]).sum())
        })
        .collect();
    Image::new(h * factor, ow, data)
}
