//! Command-line driver: `simulate`, `reconstruct`, `evaluate`.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 runtime or numeric
//! error, 3 external denoiser failure.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand};

use crate::bridge::{BridgeConfig, BridgeDenoiser};
use crate::error::Error;
use crate::image::Image;
use crate::io::{read_image, write_image};
use crate::likelihood::LikelihoodModel;
use crate::metrics::{psnr, ssim};
use crate::operators::{block_average_downsample, identity_operator, SvdOperator};
use crate::phantom::{degrade, generate_phantom, Interface, Layer, PhantomSpec};
use crate::prior::{Denoiser, SdeConfig};
use crate::priors::{GaussianPrior, GmmComponent, GmmPrior};
use crate::sampler::{run_chains, AnnealSchedule, InitMode, MultiChainOutput, RunConfig};

use self::config::{float_list, Config};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_BRIDGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "pnpdm",
    version,
    about = "Plug-and-play diffusion posterior sampling for B-scan super-resolution"
)]
pub struct Cli {
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for parallel chains.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a phantom, its speckled version and the LR measurement.
    Simulate { config: PathBuf },
    /// Run the sampler on an LR measurement.
    Reconstruct { config: PathBuf },
    /// Print PSNR/SSIM of each test image against a reference.
    Evaluate {
        reference: PathBuf,
        #[arg(required = true)]
        tests: Vec<PathBuf>,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }

    fn runtime(e: Error) -> Self {
        let code = match e {
            Error::Bridge(_) => EXIT_BRIDGE,
            Error::Config(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not configure thread pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Simulate { config } => cmd_simulate(config, cli.seed).map(|m| {
            println!("{}", m.display());
        }),
        Command::Reconstruct { config } => cmd_reconstruct(config, cli.seed).map(|out| {
            println!("{}", out.mean_path.display());
        }),
        Command::Evaluate { reference, tests } => {
            let report = cmd_evaluate(reference, tests);
            print!("{}", report.table);
            if report.failures > 0 {
                Err(CliError {
                    code: EXIT_RUNTIME,
                    message: format!("{} of {} rows failed", report.failures, tests.len()),
                })
            } else {
                Ok(())
            }
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

// ---- simulate ----

#[derive(Debug, Clone)]
pub struct SimulateConfig {
    pub phantom: PhantomSpec,
    pub factor: usize,
    pub sigma_y: f64,
    pub noise_seed: u64,
    pub output_dir: PathBuf,
}

pub fn phantom_from_config(cfg: &Config) -> Result<PhantomSpec, Error> {
    let height = cfg.get_or("phantom", "height", 256usize)?;
    let width = cfg.get_or("phantom", "width", 256usize)?;
    let seed = cfg.get_or("phantom", "seed", 0u64)?;
    let mut spec = PhantomSpec::cornea(height, width, seed);
    let layers = cfg.all("phantom", "layer");
    if !layers.is_empty() {
        spec.layers = layers
            .into_iter()
            .map(|(line, v)| {
                let p = float_list(line, v, 4)?;
                Ok(Layer {
                    interface: Interface {
                        c0: p[0],
                        c1: p[1],
                        c2: p[2],
                    },
                    brightness: p[3],
                })
            })
            .collect::<Result<_, Error>>()?;
    }
    spec.background = cfg.get_or("phantom", "background", spec.background)?;
    spec.speckle_shape = cfg.get_or("phantom", "speckle_shape", spec.speckle_shape)?;
    spec.validate()?;
    Ok(spec)
}

pub fn parse_simulate_config(cfg: &Config, seed: Option<u64>) -> Result<SimulateConfig, Error> {
    let mut phantom = phantom_from_config(cfg)?;
    let factor = cfg.get_or("likelihood", "factor", 4usize)?;
    let sigma_y = cfg.get_or("likelihood", "sigma_y", 0.03f64)?;
    let mut noise_seed = cfg.get_or("likelihood", "seed", 1u64)?;
    let output_dir = PathBuf::from(cfg.get_or("output", "dir", "simulated".to_string())?);
    cfg.finish()?;
    if let Some(s) = seed {
        phantom.seed = s;
        noise_seed = s.wrapping_add(1);
    }
    if factor == 0 || phantom.height % factor != 0 || phantom.width % factor != 0 {
        return Err(Error::Config(format!(
            "factor {factor} must divide the phantom size {}x{}",
            phantom.height, phantom.width
        )));
    }
    if !(sigma_y >= 0.0) {
        return Err(Error::Config("sigma_y must be nonnegative".into()));
    }
    Ok(SimulateConfig {
        phantom,
        factor,
        sigma_y,
        noise_seed,
        output_dir,
    })
}

/// Writes `clean.pnpi`, `speckled.pnpi`, `lr.pnpi` and `manifest.txt`
/// under the output directory, resolved against the config's directory;
/// returns the manifest path.
pub fn cmd_simulate(config_path: &Path, seed: Option<u64>) -> Result<PathBuf, CliError> {
    let cfg = Config::load(config_path).map_err(CliError::config)?;
    let mut sim = parse_simulate_config(&cfg, seed).map_err(CliError::config)?;
    sim.output_dir = config_path.parent().unwrap_or(Path::new(".")).join(&sim.output_dir);
    run_simulate(&sim).map_err(CliError::runtime)
}

pub fn run_simulate(sim: &SimulateConfig) -> Result<PathBuf, Error> {
    let (clean, speckled) = generate_phantom(&sim.phantom)?;
    let lr = degrade(&speckled, sim.factor, sim.sigma_y, sim.noise_seed)?;
    fs::create_dir_all(&sim.output_dir)?;
    let paths = [
        ("clean", sim.output_dir.join("clean.pnpi"), &clean),
        ("speckled", sim.output_dir.join("speckled.pnpi"), &speckled),
        ("lr", sim.output_dir.join("lr.pnpi"), &lr),
    ];
    let mut manifest = String::new();
    for (name, path, img) in &paths {
        write_image(path, img)?;
        let (h, w) = img.dims();
        writeln!(manifest, "{name} = {} # {h}x{w}", path.display()).unwrap();
    }
    writeln!(manifest, "factor = {}", sim.factor).unwrap();
    writeln!(manifest, "sigma_y = {}", sim.sigma_y).unwrap();
    writeln!(manifest, "speckle_shape = {}", sim.phantom.speckle_shape).unwrap();
    writeln!(manifest, "phantom_seed = {}", sim.phantom.seed).unwrap();
    writeln!(manifest, "noise_seed = {}", sim.noise_seed).unwrap();
    let manifest_path = sim.output_dir.join("manifest.txt");
    fs::write(&manifest_path, manifest)?;
    Ok(manifest_path)
}

// ---- reconstruct ----

#[derive(Debug, Clone, PartialEq)]
pub enum PriorChoice {
    Gaussian { mean: f64, variance: f64 },
    Gmm(Vec<GmmComponent>),
    Bridge(BridgeConfig),
}

#[derive(Debug, Clone)]
pub struct ReconstructConfig {
    pub measurement: PathBuf,
    pub operator: String,
    pub factor: usize,
    pub sigma_y: f64,
    pub prior: PriorChoice,
    pub schedule: AnnealSchedule,
    pub sde: SdeConfig,
    pub run: RunConfig,
    pub chains: usize,
    pub init: InitMode,
    pub mean_path: PathBuf,
    pub log_path: PathBuf,
    pub samples_dir: Option<PathBuf>,
}

fn parse_prior(cfg: &Config) -> Result<PriorChoice, Error> {
    let kind: String = cfg.require("prior", "kind")?;
    if let Some(cmd) = kind.strip_prefix("bridge:") {
        return parse_bridge(cfg, Some(cmd));
    }
    match kind.as_str() {
        "gaussian" => Ok(PriorChoice::Gaussian {
            mean: cfg.get_or("prior", "mean", 0.5)?,
            variance: cfg.get_or("prior", "variance", 0.04)?,
        }),
        "gmm" => {
            let comps = cfg
                .all("prior", "component")
                .into_iter()
                .map(|(line, v)| {
                    let p = float_list(line, v, 3)?;
                    Ok(GmmComponent {
                        weight: p[0],
                        mean: p[1],
                        variance: p[2],
                    })
                })
                .collect::<Result<Vec<_>, Error>>()?;
            GmmPrior::new(comps.clone())?;
            Ok(PriorChoice::Gmm(comps))
        }
        "bridge" => parse_bridge(cfg, None),
        other => Err(Error::Config(format!(
            "unknown prior kind `{other}` (expected gaussian, gmm or bridge:<command>)"
        ))),
    }
}

fn parse_bridge(cfg: &Config, inline: Option<&str>) -> Result<PriorChoice, Error> {
    let command: Option<String> = cfg.get("prior", "command")?;
    let command = match (inline, command.as_deref()) {
        (Some(_), Some(_)) => return Err(Error::Config("bridge command given twice".into())),
        (Some(c), None) | (None, Some(c)) if !c.trim().is_empty() => c.to_string(),
        _ => return Err(Error::Config("bridge prior needs a command".into())),
    };
    let timeout: f64 = cfg.get_or("prior", "timeout", 60.0)?;
    if !(timeout > 0.0 && timeout.is_finite()) {
        return Err(Error::Config("bridge timeout must be positive".into()));
    }
    let mut bridge = BridgeConfig::new(
        command.split_whitespace().map(String::from).collect(),
        Duration::from_secs_f64(timeout),
    );
    bridge.restart_on_crash = cfg.get_or("prior", "restart_on_crash", false)?;
    bridge.validate()?;
    Ok(PriorChoice::Bridge(bridge))
}

pub fn parse_reconstruct_config(cfg: &Config, seed: Option<u64>) -> Result<ReconstructConfig, Error> {
    let measurement = PathBuf::from(cfg.require::<String>("input", "measurement")?);
    let operator = cfg.get_or("likelihood", "operator", "block-average".to_string())?;
    if operator != "block-average" && operator != "identity" {
        return Err(Error::Config(format!("unknown operator `{operator}`")));
    }
    let factor = cfg.get_or("likelihood", "factor", 4usize)?;
    let sigma_y = cfg.get_or("likelihood", "sigma_y", 0.03f64)?;
    if !(sigma_y > 0.0) {
        return Err(Error::Config("sigma_y must be positive".into()));
    }
    let prior = parse_prior(cfg)?;

    let d = AnnealSchedule::default();
    let schedule = AnnealSchedule::new(
        cfg.get_or("schedule", "rho0", d.rho0)?,
        cfg.get_or("schedule", "rho_min", d.rho_min)?,
        cfg.get_or("schedule", "alpha", d.alpha)?,
    )?;

    let ds = SdeConfig::default();
    let sde = SdeConfig {
        num_steps: cfg.get_or("sde", "steps", ds.num_steps)?,
        curvature: cfg.get_or("sde", "curvature", ds.curvature)?,
        sigma_floor: cfg.get_or("sde", "sigma_floor", ds.sigma_floor)?,
        stochastic: cfg.get_or("sde", "stochastic", ds.stochastic)?,
    };
    sde.validate()?;
    if schedule.rho_min <= sde.sigma_floor {
        return Err(Error::Config("rho_min must exceed sigma_floor".into()));
    }

    let run_seed = seed.unwrap_or(cfg.get_or("run", "seed", 0u64)?);
    let mode = cfg.get_or("run", "mode", "annealed".to_string())?;
    let base = match mode.as_str() {
        "annealed" => RunConfig::for_schedule(&schedule, run_seed),
        "collect-all" => RunConfig::collect_all(run_seed),
        other => return Err(Error::Config(format!("unknown run mode `{other}`"))),
    };
    let run = RunConfig {
        iterations: cfg.get_or("run", "iterations", base.iterations)?,
        burn_in: cfg.get_or("run", "burn_in", base.burn_in)?,
        collect_every: cfg.get_or("run", "collect_every", base.collect_every)?,
        seed: run_seed,
    };
    run.validate()?;
    let chains = cfg.get_or("run", "chains", 1usize)?;
    if chains == 0 {
        return Err(Error::Config("chains must be at least 1".into()));
    }
    let init: InitMode = cfg.get_or("run", "init", "adjoint-upsample".to_string())?.parse()?;

    let mean_path = PathBuf::from(cfg.get_or("output", "mean", "mean.pnpi".to_string())?);
    let log_path = PathBuf::from(cfg.get_or("output", "log", "run.log".to_string())?);
    let samples_dir = cfg.get::<String>("output", "samples_dir")?.map(PathBuf::from);
    cfg.finish()?;
    Ok(ReconstructConfig {
        measurement,
        operator,
        factor,
        sigma_y,
        prior,
        schedule,
        sde,
        run,
        chains,
        init,
        mean_path,
        log_path,
        samples_dir,
    })
}

#[derive(Debug)]
pub struct ReconstructOutput {
    pub mean_path: PathBuf,
    pub result: MultiChainOutput,
}

pub fn cmd_reconstruct(config_path: &Path, seed: Option<u64>) -> Result<ReconstructOutput, CliError> {
    let cfg = Config::load(config_path).map_err(CliError::config)?;
    // relative paths in the config resolve against the config's directory
    let base = config_path.parent().unwrap_or(Path::new("."));
    let mut rc = parse_reconstruct_config(&cfg, seed).map_err(|e| match e {
        Error::Bridge(_) | Error::Config(_) | Error::InvalidParameter { .. } => CliError::config(e),
        other => CliError::runtime(other),
    })?;
    for p in [&mut rc.measurement, &mut rc.mean_path, &mut rc.log_path] {
        *p = base.join(&*p);
    }
    if let Some(dir) = rc.samples_dir.as_mut() {
        *dir = base.join(&*dir);
    }
    run_reconstruct(&rc).map_err(CliError::runtime)
}

fn build_operator(rc: &ReconstructConfig, lr: &Image) -> Result<SvdOperator, Error> {
    let (h, w) = lr.dims();
    match rc.operator.as_str() {
        "identity" => identity_operator(h, w),
        _ => block_average_downsample(rc.factor, h * rc.factor, w * rc.factor),
    }
}

pub fn run_reconstruct(rc: &ReconstructConfig) -> Result<ReconstructOutput, Error> {
    let lr = read_image(&rc.measurement)?;
    let op = build_operator(rc, &lr)?;
    let (h, w) = op.in_dims();
    let model = LikelihoodModel::new(op, rc.sigma_y, lr)?;
    let denoisers: Vec<Box<dyn Denoiser>> = match &rc.prior {
        PriorChoice::Gaussian { mean, variance } => {
            vec![Box::new(GaussianPrior::isotropic(
                Image::filled(h, w, *mean),
                *variance,
            )?)]
        }
        PriorChoice::Gmm(comps) => vec![Box::new(GmmPrior::new(comps.clone())?)],
        PriorChoice::Bridge(bc) => (0..rc.chains)
            .map(|_| BridgeDenoiser::new(bc.clone()).map(|b| Box::new(b) as Box<dyn Denoiser>))
            .collect::<Result<_, _>>()?,
    };
    let result = run_chains(&model, &denoisers, &rc.schedule, &rc.sde, &rc.run, rc.init, rc.chains)?;

    if let Some(parent) = rc.mean_path.parent() {
        fs::create_dir_all(parent)?;
    }
    write_image(&rc.mean_path, &result.mean)?;
    let mut log = String::from("# chain q rho data_fidelity\n");
    for (c, chain) in result.chains.iter().enumerate() {
        for r in &chain.trace {
            writeln!(log, "{c} {} {:.17e} {:.17e}", r.q, r.rho, r.data_fidelity).unwrap();
        }
    }
    if let Some(parent) = rc.log_path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&rc.log_path, log)?;
    if let Some(dir) = &rc.samples_dir {
        fs::create_dir_all(dir)?;
        for (c, chain) in result.chains.iter().enumerate() {
            for (i, s) in chain.samples.iter().enumerate() {
                write_image(dir.join(format!("sample_{c:03}_{i:04}.pnpi")), s)?;
            }
        }
    }
    Ok(ReconstructOutput {
        mean_path: rc.mean_path.clone(),
        result,
    })
}

// ---- evaluate ----

#[derive(Debug, Clone)]
pub struct EvalRow {
    pub name: String,
    pub outcome: Result<(f64, f64), String>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub table: String,
    pub failures: usize,
}

/// Formats with six significant digits; `inf` for infinities.
pub fn sig6(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn cmd_evaluate(reference: &Path, tests: &[PathBuf]) -> EvalReport {
    let reference_img = read_image(reference).map_err(|e| e.to_string());
    let rows: Vec<EvalRow> = tests
        .iter()
        .map(|t| {
            let outcome = reference_img.clone().and_then(|r| {
                let img = read_image(t).map_err(|e| e.to_string())?;
                let p = psnr(&r, &img).map_err(|e| e.to_string())?;
                let s = ssim(&r, &img).map_err(|e| e.to_string())?;
                Ok((p, s))
            });
            EvalRow {
                name: t.display().to_string(),
                outcome,
            }
        })
        .collect();
    let name_w = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut table = format!("{:<name_w$}  {:>10}  {:>10}  {:>6}\n", "name", "PSNR", "SSIM", "LPIPS");
    let mut failures = 0;
    for row in &rows {
        match &row.outcome {
            Ok((p, s)) => writeln!(
                table,
                "{:<name_w$}  {:>10}  {:>10}  {:>6}",
                row.name,
                sig6(*p),
                sig6(*s),
                "n/a"
            )
            .unwrap(),
            Err(e) => {
                failures += 1;
                writeln!(table, "{:<name_w$}  error: {e}", row.name).unwrap()
            }
        }
    }
    EvalReport { rows, table, failures }
}
