//! Annealed split-Gibbs posterior sampling with plug-and-play diffusion
//! priors, for super-resolution and denoising of speckled B-scans.
//!
//! Each iteration alternates an exact Gaussian likelihood step, computed in
//! the right-singular basis of the forward operator, with a prior step that
//! runs a short reverse-diffusion trajectory driven by a [`Denoiser`]. The
//! coupling strength `rho` is annealed geometrically toward a floor.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod cli;
pub mod error;
pub mod image;
pub mod io;
pub mod likelihood;
pub mod metrics;
pub mod operators;
pub mod phantom;
pub mod prior;
pub mod priors;
pub mod sampler;

pub use error::{Error, Result};
pub use image::Image;
pub use likelihood::LikelihoodModel;
pub use operators::{block_average_downsample, identity_operator, SvdOperator};
pub use prior::{prior_refine, Denoiser, SdeConfig};
pub use sampler::{run_chain, run_chains, AnnealSchedule, ChainOutput, RunConfig};
