//! Oracles and statistics shared by the integration tests and the
//! acceptance runner. Everything here is built from first principles and
//! avoids the library code paths it is used to check.

#![allow(dead_code)]

use nalgebra::DMatrix;
use pnpdm::prior::SdeConfig;
use pnpdm::priors::{gaussian_posterior_oracle, GaussianPrior, GmmPrior, PosteriorMoments};
use pnpdm::sampler::{run_chain, AnnealSchedule, RunConfig};
use pnpdm::{block_average_downsample, identity_operator, Image, LikelihoodModel, SvdOperator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, lo: f64, hi: f64) -> Image {
    Image::from_fn(h, w, |_, _| rng.random_range(lo..hi))
}

pub fn helper_path() -> &'static str {
    env!("CARGO_BIN_EXE_pnpd-helper")
}

pub fn pnpdm_path() -> &'static str {
    env!("CARGO_BIN_EXE_pnpdm")
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Relative error in the max norm, scaled by the larger operand.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = a
        .iter()
        .chain(b)
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    max_abs_diff(a, b) / scale
}

/// Explicit block-averaging matrix: row `(r/f, c/f)` holds `1/f²` at every
/// pixel of its block.
pub fn dense_block_average(factor: usize, h: usize, w: usize) -> DMatrix<f64> {
    let (oh, ow) = (h / factor, w / factor);
    let inv = 1.0 / (factor * factor) as f64;
    let mut a = DMatrix::zeros(oh * ow, h * w);
    for r in 0..h {
        for c in 0..w {
            a[((r / factor) * ow + c / factor, r * w + c)] = inv;
        }
    }
    a
}

pub fn dense_operator(op: &SvdOperator) -> DMatrix<f64> {
    let (h, w) = op.in_dims();
    dense_block_average(op.factor(), h, w)
}

/// Columns are the library's right-singular basis vectors.
pub fn spectral_basis(op: &SvdOperator) -> DMatrix<f64> {
    let n = op.in_len();
    let mut v = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = op.from_spectral(&e).unwrap();
        v.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    v
}

#[derive(Debug, Clone, Copy)]
pub struct PixelStats {
    pub mean: f64,
    pub var: f64,
    /// Batch-means standard error of `mean`.
    pub se: f64,
}

/// Per-pixel mean, variance and batch-means standard error.
pub fn pixel_stats(samples: &[Image], batches: usize) -> Vec<PixelStats> {
    let ns = samples.len();
    assert!(ns >= 2 * batches, "{ns} samples for {batches} batches");
    let size = ns / batches;
    let used = size * batches;
    let n = samples[0].len();
    (0..n)
        .map(|i| {
            let xs: Vec<f64> = samples[..used].iter().map(|s| s.data()[i]).collect();
            let mean = xs.iter().sum::<f64>() / used as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (used - 1) as f64;
            let bvar = xs
                .chunks(size)
                .map(|b| (b.iter().sum::<f64>() / size as f64 - mean).powi(2))
                .sum::<f64>()
                / (batches - 1) as f64;
            PixelStats {
                mean,
                var,
                se: (bvar / batches as f64).sqrt(),
            }
        })
        .collect()
}

/// A conjugate test problem with a diagonal prior, plus a coupling floor
/// small enough that the split-Gibbs target is close to the true posterior.
pub struct GaussianCase {
    pub label: String,
    pub prior: GaussianPrior,
    pub model: LikelihoodModel,
    pub schedule: AnnealSchedule,
    pub sde: SdeConfig,
}

pub fn gaussian_case(side: usize, factor: usize, sigma_y: f64, seed: u64) -> GaussianCase {
    let mut r = rng(seed);
    let op = if factor == 1 {
        identity_operator(side, side).unwrap()
    } else {
        block_average_downsample(factor, side, side).unwrap()
    };
    // noise level seen by x along the operator's range
    let s = sigma_y * factor as f64;
    let c_scale = (0.25 * s * s).min(0.01);
    let n = side * side;
    let vars: Vec<f64> = (0..n).map(|_| c_scale * r.random_range(0.5..1.5)).collect();
    let mean = random_image(&mut r, side, side, 0.3, 0.7);
    let truth = Image::from_fn(side, side, |row, col| {
        let i = row * side + col;
        mean.data()[i] + vars[i].sqrt() * normal(&mut r)
    });
    let clean = op.apply(&truth).unwrap();
    let y = clean.map(|v| v + sigma_y * normal(&mut r));
    let rho_min = 0.2 * s.min(c_scale.sqrt());
    let label = match factor {
        1 => format!("n={n} identity sigma_y={sigma_y}"),
        f => format!("n={n} block-average f={f} sigma_y={sigma_y}"),
    };
    GaussianCase {
        label,
        prior: GaussianPrior::diagonal(mean, vars).unwrap(),
        model: LikelihoodModel::new(op, sigma_y, y).unwrap(),
        schedule: AnnealSchedule::new(10.0, rho_min, 0.9).unwrap(),
        sde: SdeConfig {
            sigma_floor: rho_min / 10.0,
            ..SdeConfig::default()
        },
    }
}

#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub samples: usize,
    pub max_z: f64,
    pub max_var_rel: f64,
    pub min_ess: f64,
}

impl OracleCheck {
    pub fn passes(&self) -> bool {
        self.samples >= 2000 && self.max_z <= 4.0 && self.max_var_rel <= 0.10
    }
}

pub fn compare_to_oracle(samples: &[Image], oracle: &PosteriorMoments) -> OracleCheck {
    let stats = pixel_stats(samples, 50);
    let mut check = OracleCheck {
        samples: samples.len(),
        max_z: 0.0,
        max_var_rel: 0.0,
        min_ess: f64::INFINITY,
    };
    for (i, s) in stats.iter().enumerate() {
        check.max_z = check.max_z.max((s.mean - oracle.mean.data()[i]).abs() / s.se);
        check.max_var_rel = check.max_var_rel.max((s.var / oracle.variances[i] - 1.0).abs());
        check.min_ess = check.min_ess.min(s.var / (s.se * s.se));
    }
    check
}

/// Runs one chain past the clamp, collects `collected` samples thinned by
/// `thin`, and compares them to the exact posterior.
pub fn run_against_oracle(case: &GaussianCase, collected: usize, thin: usize, seed: u64) -> OracleCheck {
    let burn_in = case.schedule.clamp_iteration() + 2000;
    let cfg = RunConfig {
        iterations: burn_in + collected * thin,
        burn_in,
        collect_every: thin,
        seed,
    };
    let (h, w) = case.model.operator().in_dims();
    let out = run_chain(
        &case.model,
        &case.prior,
        &case.schedule,
        &case.sde,
        &cfg,
        Image::filled(h, w, 0.5),
    )
    .unwrap();
    let oracle = gaussian_posterior_oracle(&case.prior, &case.model).unwrap();
    compare_to_oracle(&out.samples, &oracle)
}

/// Exact posterior mean of a pixelwise mixture prior under block averaging
/// by `factor` with Gaussian noise of variance `noise_var` on each block
/// mean. Pixels in a block are exchangeable, so every pixel's posterior mean
/// equals the posterior mean of the block average, obtained by enumerating
/// how many pixels take each component.
pub fn exact_block_gmm_mean(prior: &GmmPrior, y: &Image, factor: usize, noise_var: f64) -> Image {
    let comps = prior.components();
    let d = factor * factor;
    let k = comps.len();
    let mut counts = Vec::new();
    compositions(d, k, &mut vec![0; k], 0, &mut counts);
    let ln_fact: Vec<f64> = (0..=d).map(|i| (1..=i).map(|j| (j as f64).ln()).sum()).collect();
    let terms: Vec<(f64, f64, f64)> = counts
        .iter()
        .map(|n| {
            let mut log_w = ln_fact[d];
            let mut mean = 0.0;
            let mut var = 0.0;
            for (c, &m) in comps.iter().zip(n) {
                log_w += m as f64 * c.weight.ln() - ln_fact[m];
                mean += m as f64 * c.mean;
                var += m as f64 * c.variance;
            }
            (log_w, mean / d as f64, var / (d * d) as f64)
        })
        .collect();
    let g: Vec<f64> = y
        .data()
        .iter()
        .map(|&yb| {
            let logs: Vec<f64> = terms
                .iter()
                .map(|(lw, m, v)| lw - 0.5 * ((yb - m).powi(2) / (v + noise_var) + (v + noise_var).ln()))
                .collect();
            let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut norm = 0.0;
            let mut acc = 0.0;
            for (l, (_, m, v)) in logs.iter().zip(&terms) {
                let r = (l - top).exp();
                norm += r;
                acc += r * (m + v / (v + noise_var) * (yb - m));
            }
            acc / norm
        })
        .collect();
    let (oh, ow) = y.dims();
    Image::from_fn(oh * factor, ow * factor, |r, c| g[(r / factor) * ow + c / factor])
}

fn compositions(left: usize, parts: usize, cur: &mut Vec<usize>, at: usize, out: &mut Vec<Vec<usize>>) {
    if at + 1 == parts {
        cur[at] = left;
        out.push(cur.clone());
        return;
    }
    for i in 0..=left {
        cur[at] = i;
        compositions(left - i, parts, cur, at + 1, out);
    }
}

/// SSIM evaluated window by window straight from the definition.
pub fn ssim_reference(a: &Image, b: &Image) -> f64 {
    let (h, w) = a.dims();
    let k = 11usize;
    let sigma = 1.5f64;
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            g[i * k + j] = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    let mut count = 0usize;
    for r in 0..=h - k {
        for c in 0..=w - k {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    mx += g[i * k + j] * a.get(r + i, c + j);
                    my += g[i * k + j] * b.get(r + i, c + j);
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let dx = a.get(r + i, c + j) - mx;
                    let dy = b.get(r + i, c + j) - my;
                    vx += g[i * k + j] * dx * dx;
                    vy += g[i * k + j] * dy * dy;
                    cxy += g[i * k + j] * dx * dy;
                }
            }
            acc += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    acc / count as f64
}
