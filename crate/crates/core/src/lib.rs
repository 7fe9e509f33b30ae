//! Particle flow solver for linear-Gaussian inverse problems with
//! analytic diffusion priors.
//!
//! The crate evolves an ensemble of latent particles under two exactly
//! computable drifts — a data-consistency term pulled back through a
//! linear decoder, and a schedule-weighted regularization term steering
//! the diffused ensemble toward a Gaussian-mixture prior. Every piece
//! (scores, posteriors, KL divergences) has a closed form, so the
//! iterative solver can be checked against independent oracles down to
//! floating-point tolerances.
//!
//! Module map:
//!
//! * [`schedule`] — variance-preserving noise schedule on a discrete grid.
//! * [`prior`] — Gaussian-mixture latent prior with diffused densities
//!   and scores.
//! * [`autoencoder`] — affine decoder/encoder pair with the conjugate
//!   (posterior-mean) encoder available in closed form.
//! * [`observation`] — masking/downsampling forward operators and the
//!   Gaussian likelihood.
//! * [`flow`] — the particle update loop: drifts, kernel density
//!   estimates, Euler/Adam steps.
//! * [`oracle`] — conjugate posteriors, normal-equation MAP points, KL
//!   divergences, PSNR, ensemble moments.
//! * [`verify`] — self-contained verification suites used by the CLI and
//!   the acceptance tests.
//! * [`config`] — TOML experiment descriptions and their translation
//!   into runnable problems.
//! * [`artifacts`] — deterministic CSV writers for run outputs.

pub mod artifacts;
pub mod autoencoder;
pub mod config;
pub mod error;
pub mod flow;
mod linalg;
pub mod observation;
pub mod oracle;
pub mod prior;
pub mod schedule;
pub mod verify;

pub use autoencoder::LinearAutoencoder;
pub use error::{Error, Result};
pub use flow::{run, FlowConfig, Optimizer, ParticleEnsemble, Problem, RunResult, TraceRow};
pub use observation::{ForwardOperator, ObservationModel};
pub use oracle::GaussianDist;
pub use prior::{GaussianComponent, GaussianMixture};
pub use schedule::Schedule;
