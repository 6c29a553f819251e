//! Data-consistency step of the split Gibbs sampler.
//!
//! For `y ~ N(Ax, σ_y² I)` and coupling `ρ`, the latent conditional is
//! Gaussian with precision `Λ = AᵀA/σ_y² + I/ρ²` and mean
//! `Λ⁻¹(Aᵀy/σ_y² + x/ρ²)`. In the right singular basis `Λ` is diagonal, so
//! moments and draws cost one forward and one inverse spectral transform.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::operators::SvdOperator;

/// Smallest coupling accepted by the likelihood step. Keeps `1/ρ²` far from
/// overflow and bounds the condition number of `Λ`.
pub const MIN_RHO: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct LikelihoodModel {
    operator: SvdOperator,
    noise_sigma: f64,
    measurement: Image,
    // Vᵀ Aᵀ y / σ_y², cached
    spectral_data: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConditionalMoments {
    pub mean: Image,
    /// Diagonal of `Λ` in the right singular basis.
    pub spectral_precision: Vec<f64>,
}

impl LikelihoodModel {
    pub fn new(operator: SvdOperator, noise_sigma: f64, measurement: Image) -> Result<Self> {
        if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
            return Err(Error::param(
                "noise_sigma",
                format!("must be positive, got {noise_sigma}"),
            ));
        }
        measurement.ensure_dims(operator.out_dims())?;
        let aty = operator.apply_adjoint(&measurement)?;
        let inv_var = 1.0 / (noise_sigma * noise_sigma);
        let mut spectral_data = operator.to_spectral(aty.data())?;
        spectral_data.iter_mut().for_each(|v| *v *= inv_var);
        Ok(Self {
            operator,
            noise_sigma,
            measurement,
            spectral_data,
        })
    }

    pub fn operator(&self) -> &SvdOperator {
        &self.operator
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn measurement(&self) -> &Image {
        &self.measurement
    }

    /// `‖y − Ax‖² / (2σ_y²)`.
    pub fn data_fidelity(&self, x: &Image) -> Result<f64> {
        let ax = self.operator.apply(x)?;
        let sq: f64 = ax
            .data()
            .iter()
            .zip(self.measurement.data())
            .map(|(a, y)| (y - a) * (y - a))
            .sum();
        Ok(sq / (2.0 * self.noise_sigma * self.noise_sigma))
    }

    pub fn spectral_precision(&self, rho: f64) -> Result<Vec<f64>> {
        check_rho(rho)?;
        let coupling = 1.0 / (rho * rho);
        let inv_var = 1.0 / (self.noise_sigma * self.noise_sigma);
        let mut prec = vec![coupling; self.operator.in_len()];
        for (p, s) in prec.iter_mut().zip(self.operator.singular_values()) {
            *p += s * s * inv_var;
        }
        Ok(prec)
    }

    fn spectral_mean(&self, x: &Image, precision: &[f64], rho: f64) -> Result<Vec<f64>> {
        x.ensure_dims(self.operator.in_dims())?;
        let coupling = 1.0 / (rho * rho);
        let mut coeffs = self.operator.to_spectral(x.data())?;
        for ((c, d), p) in coeffs.iter_mut().zip(&self.spectral_data).zip(precision) {
            *c = (d + coupling * *c) / p;
        }
        Ok(coeffs)
    }

    pub fn conditional_moments(&self, x: &Image, rho: f64) -> Result<ConditionalMoments> {
        let precision = self.spectral_precision(rho)?;
        let coeffs = self.spectral_mean(x, &precision, rho)?;
        let mean = x.with_data(self.operator.from_spectral(&coeffs)?)?;
        Ok(ConditionalMoments {
            mean,
            spectral_precision: precision,
        })
    }

    /// Draws `z ~ N(m(x), Λ⁻¹)`.
    pub fn sample_conditional<R: Rng + ?Sized>(&self, x: &Image, rho: f64, rng: &mut R) -> Result<Image> {
        let precision = self.spectral_precision(rho)?;
        let mut coeffs = self.spectral_mean(x, &precision, rho)?;
        for (c, p) in coeffs.iter_mut().zip(&precision) {
            let xi: f64 = rng.sample(StandardNormal);
            *c += xi / p.sqrt();
        }
        x.with_data(self.operator.from_spectral(&coeffs)?)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho >= MIN_RHO && rho.is_finite()) {
        return Err(Error::param(
            "rho",
            format!("coupling must be finite and at least {MIN_RHO}, got {rho}"),
        ));
    }
    Ok(())
}
