//! Annealed split Gibbs sampler.
//!
//! Each iteration draws the latent `z` from the likelihood conditional and
//! then refines it with the diffusion prior step, at a coupling `ρ_q` that
//! decays geometrically from `ρ₀` and is clamped at `ρ_min`. Once the clamp
//! engages the chain samples at fixed coupling; samples are collected from
//! that phase.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{pixel_mean, Image};
use crate::likelihood::LikelihoodModel;
use crate::prior::{prior_refine, Denoiser, SdeConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule {
    pub rho0: f64,
    pub rho_min: f64,
    pub alpha: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            rho0: 10.0,
            rho_min: 0.3,
            alpha: 0.9,
        }
    }
}

impl AnnealSchedule {
    pub fn new(rho0: f64, rho_min: f64, alpha: f64) -> Result<Self> {
        let s = Self { rho0, rho_min, alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_min > 0.0 && self.rho_min.is_finite()) {
            return Err(Error::param("rho_min", "must be positive"));
        }
        if !(self.rho0 >= self.rho_min && self.rho0.is_finite()) {
            return Err(Error::param("rho0", "must be at least rho_min"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("alpha", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// `max(α^q ρ₀, ρ_min)`.
    pub fn rho_at(&self, q: usize) -> f64 {
        // powf rather than powi: repeated squaring drifts by several ulp
        (self.alpha.powf(q as f64) * self.rho0).max(self.rho_min)
    }

    /// First iteration at which the clamp is active. Only meaningful for a
    /// validated schedule; saturates at `u32::MAX` otherwise.
    pub fn clamp_iteration(&self) -> usize {
        (0..u32::MAX as usize)
            .find(|&q| self.alpha.powf(q as f64) * self.rho0 <= self.rho_min)
            .unwrap_or(u32::MAX as usize)
    }
}

pub fn rho_at(schedule: &AnnealSchedule, q: usize) -> f64 {
    schedule.rho_at(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub collect_every: usize,
    pub seed: u64,
}

/// Post-annealing samples collected by [`RunConfig::for_schedule`].
pub const DEFAULT_COLLECTED: usize = 100;

impl RunConfig {
    /// Burn in through the annealing phase, then collect
    /// [`DEFAULT_COLLECTED`] samples at the clamped coupling.
    pub fn for_schedule(schedule: &AnnealSchedule, seed: u64) -> Self {
        let burn_in = schedule.clamp_iteration();
        Self {
            iterations: burn_in + DEFAULT_COLLECTED,
            burn_in,
            collect_every: 1,
            seed,
        }
    }

    /// 100 iterations from the start, every iterate collected; no burn-in.
    pub fn collect_all(seed: u64) -> Self {
        Self {
            iterations: 100,
            burn_in: 0,
            collect_every: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be at least 1"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::param("burn_in", "must be smaller than iterations"));
        }
        if self.collect_every == 0 {
            return Err(Error::param("collect_every", "must be at least 1"));
        }
        Ok(())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_schedule(&AnnealSchedule::default(), 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// `f² Aᵀ y`: each measurement replicated over its block.
    #[default]
    AdjointUpsample,
    ConstantHalf,
    /// Clamped `N(0.5, 0.25²)` pixels.
    RandomNormal,
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjoint-upsample" => Ok(Self::AdjointUpsample),
            "constant-half" => Ok(Self::ConstantHalf),
            "random-normal" => Ok(Self::RandomNormal),
            other => Err(Error::param("init", format!("unknown mode `{other}`"))),
        }
    }
}

pub fn initialize<R: rand::Rng + ?Sized>(model: &LikelihoodModel, mode: InitMode, rng: &mut R) -> Result<Image> {
    let op = model.operator();
    let (h, w) = op.in_dims();
    match mode {
        InitMode::AdjointUpsample => {
            let scale = op.upsample_scale();
            Ok(op.apply_adjoint(model.measurement())?.map(|v| v * scale))
        }
        InitMode::ConstantHalf => Ok(Image::filled(h, w, 0.5)),
        InitMode::RandomNormal => {
            let normal = Normal::new(0.5f64, 0.25).unwrap();
            Ok(Image::from_fn(h, w, |_, _| normal.sample(rng).clamp(0.0, 1.0)))
        }
    }
}

/// Live state of one chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub x: Image,
    pub z: Image,
    pub q: usize,
    pub rng: ChaCha8Rng,
}

impl ChainState {
    pub fn new(x_init: Image, seed: u64) -> Self {
        Self {
            z: x_init.clone(),
            x: x_init,
            q: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// One likelihood draw followed by one prior refinement at `rho`.
    pub fn step<D: Denoiser + ?Sized>(
        &mut self,
        model: &LikelihoodModel,
        denoiser: &D,
        sde: &SdeConfig,
        rho: f64,
    ) -> Result<()> {
        self.z = model.sample_conditional(&self.x, rho, &mut self.rng)?;
        self.x = prior_refine(&self.z, rho, denoiser, sde, &mut self.rng)?;
        self.q += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub q: usize,
    pub rho: f64,
    /// Data fidelity of the iterate produced at `q`.
    pub data_fidelity: f64,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub samples: Vec<Image>,
    /// Pixelwise sample average clamped to [0, 1].
    pub mean: Image,
    pub trace: Vec<IterationRecord>,
}

pub fn run_chain<D: Denoiser + ?Sized>(
    model: &LikelihoodModel,
    denoiser: &D,
    schedule: &AnnealSchedule,
    sde: &SdeConfig,
    cfg: &RunConfig,
    x_init: Image,
) -> Result<ChainOutput> {
    schedule.validate()?;
    sde.validate()?;
    cfg.validate()?;
    x_init.ensure_dims(model.operator().in_dims())?;
    let mut state = ChainState::new(x_init, cfg.seed);
    let mut samples = Vec::new();
    let mut trace = Vec::with_capacity(cfg.iterations);
    for q in 0..cfg.iterations {
        let rho = schedule.rho_at(q);
        state.step(model, denoiser, sde, rho)?;
        if !state.x.is_finite() {
            return Err(Error::Numeric(format!("chain diverged at iteration {q}")));
        }
        trace.push(IterationRecord {
            q,
            rho,
            data_fidelity: model.data_fidelity(&state.x)?,
        });
        if q >= cfg.burn_in && (q - cfg.burn_in).is_multiple_of(cfg.collect_every) {
            samples.push(state.x.clone());
        }
    }
    let mean = pixel_mean(&samples)
        .ok_or_else(|| Error::param("burn_in", "no samples collected"))?
        .clamp(0.0, 1.0);
    Ok(ChainOutput { samples, mean, trace })
}

#[derive(Debug, Clone)]
pub struct MultiChainOutput {
    pub chains: Vec<ChainOutput>,
    /// Average over every collected sample of every chain, in chain order,
    /// clamped to [0, 1].
    pub mean: Image,
}

/// Runs `chains` independent chains; chain `c` is seeded with
/// `cfg.seed + c`. `denoisers` holds either one denoiser shared by all
/// chains or one per chain. Chains run in parallel unless a shared
/// denoiser is exclusive.
pub fn run_chains<D: Denoiser>(
    model: &LikelihoodModel,
    denoisers: &[D],
    schedule: &AnnealSchedule,
    sde: &SdeConfig,
    cfg: &RunConfig,
    init: InitMode,
    chains: usize,
) -> Result<MultiChainOutput> {
    if chains == 0 {
        return Err(Error::param("chains", "must be at least 1"));
    }
    if denoisers.len() != 1 && denoisers.len() != chains {
        return Err(Error::param(
            "chains",
            format!("{} denoisers for {chains} chains", denoisers.len()),
        ));
    }
    let run_one = |c: usize| -> Result<ChainOutput> {
        let seed = cfg.seed.wrapping_add(c as u64);
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        init_rng.set_stream(1);
        let x0 = initialize(model, init, &mut init_rng)?;
        let d = &denoisers[c % denoisers.len()];
        run_chain(model, d, schedule, sde, &RunConfig { seed, ..*cfg }, x0)
    };
    let shared_exclusive = denoisers.len() == 1 && !denoisers[0].is_concurrent();
    let outputs: Vec<ChainOutput> = if shared_exclusive || chains == 1 {
        (0..chains).map(run_one).collect::<Result<_>>()?
    } else {
        (0..chains).into_par_iter().map(run_one).collect::<Result<_>>()?
    };
    let mean = pixel_mean(outputs.iter().flat_map(|o| o.samples.iter()))
        .expect("validated config collects at least one sample")
        .clamp(0.0, 1.0);
    Ok(MultiChainOutput { chains: outputs, mean })
}
