//! Sampling from unnormalized densities with controlled reverse-time diffusions.
//!
//! A forward (noising) diffusion with a variance-preserving schedule transports a
//! target density `ρ/Z` to an approximately Gaussian prior. Running the diffusion
//! backwards with a learned drift turns draws from that prior into approximate
//! target samples. The drift is a small neural network trained by minimizing a
//! Kullback–Leibler divergence on path space; the same path functionals give both
//! a stochastic lower bound on `log Z` and an unbiased importance-sampling
//! estimate of it.
//!
//! The crate is organized as:
//!
//! - [`targets`]: benchmark densities (Gaussian mixture, funnel, double well,
//!   isotropic Gaussian) with analytic scores, Hessian-vector products, and
//!   quadrature/closed-form reference statistics.
//! - [`sde`]: the noise schedule, Euler–Maruyama simulation of the controlled
//!   generative SDE, and the analytic optimal control for Gaussian targets.
//! - [`nn`]: the control-network parametrization (time-embedding MLPs plus a
//!   score-interpolation term) with hand-written reverse-mode gradients.
//! - [`losses`]: path-space objectives (`dis`, `pis`, `dds`, `logvar`) computed
//!   from recorded trajectory batches.
//! - [`train`]: Adam with decoupled weight decay, gradient clipping, step/clip
//!   schedules, parameter averaging, and the chunked gradient driver.
//! - [`eval`]: normalizing-constant estimators (lower bound and importance
//!   sampling), moment diagnostics, and CSV reports.
//! - [`cli`]: the `revdiff` command-line interface.
//!
//! Determinism: every run is driven by one `u64` seed through counter-based
//! per-trajectory RNG substreams, and batch reductions happen in a fixed chunk
//! order, so outputs are reproducible bit-for-bit at fixed precision and do not
//! depend on the number of worker threads.

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod losses;
pub mod nn;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod selftest;
pub mod targets;
pub mod train;

pub use error::{Error, Result};
