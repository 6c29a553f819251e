//! Exactly solvable priors.
//!
//! These implement [`Denoiser`] in closed form and come with dense posterior
//! oracles, which is what makes the sampler checkable end to end.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::likelihood::LikelihoodModel;
use crate::prior::Denoiser;

/// Largest problem the dense oracles will factor.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Scalar(f64),
    Diagonal(Vec<f64>),
}

/// `N(μ, C)` with `C` scalar or diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    mean: Image,
    covariance: Covariance,
}

impl GaussianPrior {
    pub fn isotropic(mean: Image, variance: f64) -> Result<Self> {
        Self::new(mean, Covariance::Scalar(variance))
    }

    pub fn diagonal(mean: Image, variances: Vec<f64>) -> Result<Self> {
        Self::new(mean, Covariance::Diagonal(variances))
    }

    pub fn new(mean: Image, covariance: Covariance) -> Result<Self> {
        let ok = match &covariance {
            Covariance::Scalar(v) => *v > 0.0 && v.is_finite(),
            Covariance::Diagonal(vs) => {
                if vs.len() != mean.len() {
                    return Err(Error::Dimension {
                        expected: format!("{} variances", mean.len()),
                        actual: format!("{}", vs.len()),
                    });
                }
                vs.iter().all(|v| *v > 0.0 && v.is_finite())
            }
        };
        if !ok {
            return Err(Error::param("variance", "covariance entries must be positive"));
        }
        Ok(Self { mean, covariance })
    }

    pub fn mean(&self) -> &Image {
        &self.mean
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    #[inline]
    pub fn variance(&self, i: usize) -> f64 {
        match &self.covariance {
            Covariance::Scalar(v) => *v,
            Covariance::Diagonal(vs) => vs[i],
        }
    }

    /// Normalized log density of the prior convolved with `N(0, σ² I)`.
    pub fn smoothed_log_density(&self, x: &Image, sigma: f64) -> Result<f64> {
        x.ensure_dims(self.mean.dims())?;
        let s2 = sigma * sigma;
        Ok(x.data()
            .iter()
            .zip(self.mean.data())
            .enumerate()
            .map(|(i, (xv, mu))| {
                let v = self.variance(i) + s2;
                -0.5 * ((xv - mu) * (xv - mu) / v + (2.0 * std::f64::consts::PI * v).ln())
            })
            .sum())
    }
}

/// `μ + C (C + σ² I)⁻¹ (x − μ)`, entrywise.
pub fn gaussian_denoise(prior: &GaussianPrior, x: &Image, sigma: f64) -> Result<Image> {
    if !(sigma >= 0.0) {
        return Err(Error::param("sigma", format!("must be nonnegative, got {sigma}")));
    }
    x.ensure_dims(prior.mean.dims())?;
    let s2 = sigma * sigma;
    let data = x
        .data()
        .iter()
        .zip(prior.mean.data())
        .enumerate()
        .map(|(i, (xv, mu))| {
            let c = prior.variance(i);
            mu + c / (c + s2) * (xv - mu)
        })
        .collect();
    x.with_data(data)
}

impl Denoiser for GaussianPrior {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        gaussian_denoise(self, x, sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Pixelwise-independent scalar Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    components: Vec<GmmComponent>,
}

impl GmmPrior {
    /// Weights are renormalized to sum to one.
    pub fn new(mut components: Vec<GmmComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::param("components", "need at least one component"));
        }
        for c in &components {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::param("weight", format!("must be positive, got {}", c.weight)));
            }
            if !(c.variance > 0.0 && c.variance.is_finite()) {
                return Err(Error::param(
                    "variance",
                    format!("must be positive, got {}", c.variance),
                ));
            }
            if !c.mean.is_finite() {
                return Err(Error::param("mean", "must be finite"));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        components.iter_mut().for_each(|c| c.weight /= total);
        Ok(Self { components })
    }

    /// One component per level, weighted by how many pixels of `img` sit
    /// closest to it. Levels no pixel is assigned to are dropped.
    pub fn fit_to_levels(img: &Image, levels: &[f64], variance: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::param("levels", "need at least one level"));
        }
        let mut counts = vec![0usize; levels.len()];
        for &v in img.data() {
            let nearest = levels
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
                .map(|(i, _)| i)
                .unwrap();
            counts[nearest] += 1;
        }
        let components = levels
            .iter()
            .zip(counts)
            .filter(|(_, n)| *n > 0)
            .map(|(&mean, n)| GmmComponent {
                weight: n as f64,
                mean,
                variance,
            })
            .collect();
        Self::new(components)
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    fn log_joint(&self, k: usize, x: f64, s2: f64) -> f64 {
        let c = &self.components[k];
        let v = c.variance + s2;
        c.weight.ln() - 0.5 * ((x - c.mean) * (x - c.mean) / v + (2.0 * std::f64::consts::PI * v).ln())
    }

    fn denoise_pixel(&self, x: f64, s2: f64, logs: &mut [f64]) -> f64 {
        let mut top = f64::NEG_INFINITY;
        for (k, l) in logs.iter_mut().enumerate() {
            *l = self.log_joint(k, x, s2);
            top = top.max(*l);
        }
        let mut norm = 0.0;
        let mut acc = 0.0;
        for (c, l) in self.components.iter().zip(logs.iter()) {
            let r = (l - top).exp();
            norm += r;
            acc += r * (c.mean + c.variance / (c.variance + s2) * (x - c.mean));
        }
        acc / norm
    }

    pub fn smoothed_log_density(&self, x: &Image, sigma: f64) -> f64 {
        let s2 = sigma * sigma;
        x.data()
            .iter()
            .map(|&v| {
                let logs: Vec<f64> = (0..self.components.len()).map(|k| self.log_joint(k, v, s2)).collect();
                let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln()
            })
            .sum()
    }
}

/// Posterior mean under the mixture, per pixel, with responsibilities
/// evaluated in the log domain.
pub fn gmm_denoise(prior: &GmmPrior, x: &Image, sigma: f64) -> Result<Image> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
    }
    let s2 = sigma * sigma;
    let mut logs = vec![0.0; prior.components.len()];
    let data = x
        .data()
        .iter()
        .map(|&v| prior.denoise_pixel(v, s2, &mut logs))
        .collect();
    x.with_data(data)
}

impl Denoiser for GmmPrior {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        gmm_denoise(self, x, sigma)
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorMoments {
    pub mean: Image,
    pub variances: Vec<f64>,
}

/// Exact posterior of `x` under a Gaussian prior and the Gaussian
/// likelihood of `model`.
pub fn gaussian_posterior_oracle(prior: &GaussianPrior, model: &LikelihoodModel) -> Result<PosteriorMoments> {
    dense_posterior(prior, model, 0.0)
}

/// Stationary `x`-marginal of the split Gibbs chain run at fixed coupling
/// `rho` with exact conditional steps: the prior times the relaxed
/// likelihood `N(y; Ax, σ_y² I + ρ² A Aᵀ)`. Reduces to
/// [`gaussian_posterior_oracle`] as `rho → 0`.
pub fn coupled_posterior_oracle(prior: &GaussianPrior, model: &LikelihoodModel, rho: f64) -> Result<PosteriorMoments> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param("rho", "must be positive"));
    }
    dense_posterior(prior, model, rho)
}

/// Dense matrix of `A`, one applied basis vector per column.
pub fn dense_forward_matrix(model: &LikelihoodModel) -> Result<DMatrix<f64>> {
    let op = model.operator();
    let n = op.in_len();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { n, limit: DENSE_LIMIT });
    }
    let (h, w) = op.in_dims();
    let mut a = DMatrix::zeros(op.out_len(), n);
    let mut e = Image::zeros(h, w);
    for j in 0..n {
        e.data_mut()[j] = 1.0;
        let col = op.apply(&e)?;
        a.column_mut(j).copy_from_slice(col.data());
        e.data_mut()[j] = 0.0;
    }
    Ok(a)
}

fn dense_posterior(prior: &GaussianPrior, model: &LikelihoodModel, rho: f64) -> Result<PosteriorMoments> {
    let n = model.operator().in_len();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { n, limit: DENSE_LIMIT });
    }
    prior.mean.ensure_dims(model.operator().in_dims())?;
    let a = dense_forward_matrix(model)?;
    let m = a.nrows();
    let s2 = model.noise_sigma().powi(2);
    let noise_cov = DMatrix::<f64>::identity(m, m) * s2 + (&a * a.transpose()) * (rho * rho);
    let noise_chol = noise_cov
        .cholesky()
        .ok_or_else(|| Error::Numeric("noise covariance not positive definite".into()))?;
    let y = DVector::from_column_slice(model.measurement().data());
    let whitened_a = noise_chol.solve(&a);
    let whitened_y = noise_chol.solve(&y);

    let mut precision = a.transpose() * whitened_a;
    let mut rhs = a.transpose() * whitened_y;
    for i in 0..n {
        let inv_c = 1.0 / prior.variance(i);
        precision[(i, i)] += inv_c;
        rhs[i] += inv_c * prior.mean.data()[i];
    }
    let chol = precision
        .cholesky()
        .ok_or_else(|| Error::Numeric("posterior precision not positive definite".into()))?;
    let mean = chol.solve(&rhs);
    let cov = chol.inverse();
    Ok(PosteriorMoments {
        mean: prior.mean.with_data(mean.as_slice().to_vec())?,
        variances: (0..n).map(|i| cov[(i, i)]).collect(),
    })
}
