//! Diffusion prior step.
//!
//! The latent `z` is treated as a sample at noise level `ρ` of the
//! variance-exploding process `x_σ = x₀ + σ ε`. The reverse-time SDE
//!
//! ```text
//! dx = −d(σ²)/dt · ∇log p_σ(x) dt + sqrt(d(σ²)/dt) dw̄
//! ```
//!
//! is integrated down a decreasing σ-grid with Euler–Maruyama. The score
//! comes from a posterior-mean denoiser via `∇log p_σ(x) = (D(x; σ) − x)/σ²`,
//! so one step from `σ_i` to `σ_{i+1}` reads
//!
//! ```text
//! x ← x + (σ_i² − σ_{i+1}²)/σ_i² · (D(x; σ_i) − x) + sqrt(σ_i² − σ_{i+1}²) ξ
//! ```
//!
//! The last transition jumps from the floor level straight to `D(x; σ_K)`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::Image;

/// Range denoiser outputs are clamped to while integrating.
pub const DENOISER_CLAMP: (f64, f64) = (-0.5, 1.5);

/// A posterior-mean denoiser `D(x; σ) ≈ E[x₀ | x₀ + σ ε = x]`.
pub trait Denoiser: Send + Sync {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image>;

    /// Whether independent chains may call this denoiser at the same time.
    /// Out-of-process denoisers serve one request at a time and return
    /// `false`.
    fn is_concurrent(&self) -> bool {
        true
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        (**self).denoise(x, sigma)
    }

    fn is_concurrent(&self) -> bool {
        (**self).is_concurrent()
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        (**self).denoise(x, sigma)
    }

    fn is_concurrent(&self) -> bool {
        (**self).is_concurrent()
    }
}

impl<D: Denoiser + ?Sized> Denoiser for std::sync::Arc<D> {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        (**self).denoise(x, sigma)
    }

    fn is_concurrent(&self) -> bool {
        (**self).is_concurrent()
    }
}

/// `D(x; σ) = x`: zero score.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn denoise(&self, x: &Image, _sigma: f64) -> Result<Image> {
        Ok(x.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeConfig {
    /// Integration steps per prior step.
    pub num_steps: usize,
    /// Lowest noise level integrated to before the final denoiser jump.
    pub sigma_floor: f64,
    /// Power-law spacing exponent of the σ-grid.
    pub curvature: f64,
    /// `false` drops the Wiener increments and keeps only the drift.
    pub stochastic: bool,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            num_steps: 20,
            sigma_floor: 0.01,
            curvature: 7.0,
            stochastic: true,
        }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_steps == 0 {
            return Err(Error::param("steps", "must be at least 1"));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::param("sigma_floor", "must be positive and finite"));
        }
        if !(self.curvature > 0.0 && self.curvature.is_finite()) {
            return Err(Error::param("curvature", "must be positive and finite"));
        }
        Ok(())
    }
}

/// `K + 1` noise levels from `start` down to the floor:
/// `σ_i = (start^(1/γ) + i/K · (floor^(1/γ) − start^(1/γ)))^γ`.
pub fn sigma_grid(start: f64, cfg: &SdeConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(start > cfg.sigma_floor && start.is_finite()) {
        return Err(Error::param(
            "rho",
            format!("start level {start} must exceed sigma_floor {}", cfg.sigma_floor),
        ));
    }
    let inv = 1.0 / cfg.curvature;
    let hi = start.powf(inv);
    let lo = cfg.sigma_floor.powf(inv);
    let k = cfg.num_steps;
    let mut grid: Vec<f64> = (0..=k)
        .map(|i| (hi + (i as f64 / k as f64) * (lo - hi)).powf(cfg.curvature))
        .collect();
    // pin the endpoints against powf round-off
    grid[0] = start;
    grid[k] = cfg.sigma_floor;
    Ok(grid)
}

fn clamped_denoise<D: Denoiser + ?Sized>(d: &D, x: &Image, sigma: f64) -> Result<Image> {
    let out = d.denoise(x, sigma)?;
    if out.dims() != x.dims() {
        return Err(Error::dims(x.dims(), out.dims()));
    }
    if !out.is_finite() {
        return Err(Error::Numeric(format!(
            "denoiser returned non-finite output at sigma {sigma}"
        )));
    }
    let (lo, hi) = DENOISER_CLAMP;
    Ok(out.clamp(lo, hi))
}

/// Refines `z`, read as a noisy observation at level `rho`, into a draw
/// from the prior conditioned on `z`.
pub fn prior_refine<D, R>(z: &Image, rho: f64, denoiser: &D, cfg: &SdeConfig, rng: &mut R) -> Result<Image>
where
    D: Denoiser + ?Sized,
    R: Rng + ?Sized,
{
    let grid = sigma_grid(rho, cfg)?;
    let mut x = z.clone();
    for pair in grid.windows(2) {
        let (hi, lo) = (pair[0], pair[1]);
        let d = clamped_denoise(denoiser, &x, hi)?;
        let var_drop = hi * hi - lo * lo;
        let gain = var_drop / (hi * hi);
        let noise_scale = var_drop.sqrt();
        for (xv, dv) in x.data_mut().iter_mut().zip(d.data()) {
            *xv += gain * (dv - *xv);
            if cfg.stochastic {
                let xi: f64 = rng.sample(StandardNormal);
                *xv += noise_scale * xi;
            }
        }
    }
    clamped_denoise(denoiser, &x, cfg.sigma_floor)
}
