//! Particle flow for latent-space posterior sampling.
//!
//! An ensemble of `N` latent particles `{z⁽ⁱ⁾}` is initialized from the
//! prior and driven for `T + 1` steps indexed by the schedule grid
//! `s = T, T−1, …, 0`. Each step combines two drifts per particle and
//! feeds their sum to an optimizer step, treating it as the gradient of a
//! loss:
//!
//! * **data drift** `u`: decode the particle with fresh reparameterization
//!   noise, `x₀ = D(z) + ρε`, and pull back the data-consistency and
//!   log-likelihood gradients through the decoder,
//!   `u = Wᵀ(−λ̂ρ²·(D(E(x₀))−x₀)/ρ² − Aᵀ(y − A x₀)/σ_y²)`;
//! * **regularization drift** `v`: diffuse the particle to time `s`,
//!   `z_s = α_s z + σ_s ν`, and compare the ensemble's own kernel density
//!   estimate against the analytic diffused prior,
//!   `v = w(s)·α_s·(∇log KDE(z_s) − ∇log p_s(z_s))`.
//!
//! The KDE is always evaluated against the frozen start-of-step ensemble,
//! so all particle gradients within a step commute. The grid point `s = 0`
//! is data-drift-only: the KDE kernel `N(·; α₀ z, σ₀² I)` degenerates
//! there (`σ₀ = 0`), and `w(0) = 0` makes the omitted term the limit of
//! the included ones.

use crate::autoencoder::LinearAutoencoder;
use crate::error::{Error, Result};
use crate::linalg;
use crate::observation::ObservationModel;
use crate::prior::GaussianMixture;
use crate::schedule::Schedule;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Particle ensemble with the number of optimizer steps taken so far.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub particles: Vec<DVector<f64>>,
    pub step: usize,
}

impl ParticleEnsemble {
    /// Wraps a particle list at step zero.
    pub fn new(particles: Vec<DVector<f64>>) -> Self {
        ParticleEnsemble { particles, step: 0 }
    }

    /// Number of particles.
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    /// True when the ensemble holds no particles.
    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Latent dimension (of the first particle).
    pub fn dim(&self) -> usize {
        self.particles.first().map_or(0, |z| z.len())
    }
}

/// Optimizer used to apply the per-step drift.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    /// Plain explicit Euler: `z ← z − step_size · g`. The reference
    /// discretization for correctness tests.
    Euler { step_size: f64 },
    /// Adam with bias correction.
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps_hat: f64,
    },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            lr: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

impl Optimizer {
    fn validate(&self) -> Result<()> {
        match *self {
            Optimizer::Euler { step_size } => {
                if !(step_size.is_finite() && step_size > 0.0) {
                    return Err(Error::config(format!(
                        "flow.optimizer.step_size: must be a positive finite real, got {step_size}"
                    )));
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps_hat,
            } => {
                if !(lr.is_finite() && lr > 0.0) {
                    return Err(Error::config(format!(
                        "flow.optimizer.lr: must be a positive finite real, got {lr}"
                    )));
                }
                for (name, beta) in [("beta1", beta1), ("beta2", beta2)] {
                    if !(beta.is_finite() && (0.0..1.0).contains(&beta)) {
                        return Err(Error::config(format!(
                            "flow.optimizer.{name}: must lie in [0, 1), got {beta}"
                        )));
                    }
                }
                if !(eps_hat.is_finite() && eps_hat > 0.0) {
                    return Err(Error::config(format!(
                        "flow.optimizer.eps_hat: must be a positive finite real, got {eps_hat}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// First and second moment accumulators for Adam, one pair per particle.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<DVector<f64>>,
    v: Vec<DVector<f64>>,
    t: usize,
}

/// Mutable optimizer state carried across steps.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Euler,
    Adam(AdamState),
}

impl OptimizerState {
    /// Fresh state for `n` particles of dimension `dim`.
    pub fn new(optimizer: &Optimizer, n: usize, dim: usize) -> Self {
        match optimizer {
            Optimizer::Euler { .. } => OptimizerState::Euler,
            Optimizer::Adam { .. } => OptimizerState::Adam(AdamState {
                m: vec![DVector::zeros(dim); n],
                v: vec![DVector::zeros(dim); n],
                t: 0,
            }),
        }
    }
}

/// Data drift for one particle: decode with the supplied noise and pull
/// the data-consistency and likelihood gradients back through the decoder.
///
/// The data-consistency cotangent is `−λ̂ρ²·data_score_approx(x₀)`, i.e.
/// the gradient of `λ̂/2·‖x₀ − D(E(x₀))‖²` with the encode-decode round
/// trip treated as constant (the stop-gradient reading). When no
/// observation is supplied the likelihood term is absent, so `λ̂ = 0`
/// makes the drift identically zero.
pub fn data_drift(
    ae: &LinearAutoencoder,
    obs: Option<&ObservationModel>,
    z: &DVector<f64>,
    eps: &DVector<f64>,
    lambda_hat: f64,
) -> Result<DVector<f64>> {
    if !(lambda_hat.is_finite() && lambda_hat >= 0.0) {
        return Err(Error::config(format!(
            "flow.lambda_hat: must be a nonnegative finite real, got {lambda_hat}"
        )));
    }
    let x0 = ae.decode(z, eps)?;
    let mut cot = DVector::zeros(x0.len());
    if lambda_hat > 0.0 {
        let rho2 = ae.rho() * ae.rho();
        cot -= ae.data_score_approx(&x0)? * (lambda_hat * rho2);
    }
    if let Some(model) = obs {
        cot -= model.likelihood_grad(&x0)?;
    }
    ae.decoder_vjp(z, &cot)
}

/// Scaled squared distances `−‖query − α_s z_j‖²/(2σ_s²)` over the
/// ensemble, shared by the KDE score and log-density.
fn kde_exponents(
    ensemble: &ParticleEnsemble,
    sched: &Schedule,
    s: usize,
    query: &DVector<f64>,
) -> Result<(f64, f64, Vec<f64>)> {
    if ensemble.is_empty() {
        return Err(Error::domain(
            "kde: ensemble must hold at least one particle",
        ));
    }
    if s == 0 {
        return Err(Error::domain(
            "kde: the kernel bandwidth collapses at s = 0; the regularization drift is only defined for s >= 1",
        ));
    }
    linalg::check_finite("kde: query", query)?;
    let (alpha, sigma) = sched.alpha_sigma(s)?;
    let inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    let exps = ensemble
        .particles
        .iter()
        .map(|z| {
            if z.len() != query.len() {
                return Err(Error::shape(format!(
                    "kde: particle has dimension {} but the query has dimension {}",
                    z.len(),
                    query.len()
                )));
            }
            Ok(-(query - z * alpha).norm_squared() * inv_two_sigma2)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((alpha, sigma, exps))
}

/// Score of the ensemble's kernel density estimate at time `s`,
/// `∇_q log (1/N) Σ_j N(q; α_s z_j, σ_s² I)`, evaluated at `query`.
pub fn kde_score(
    ensemble: &ParticleEnsemble,
    sched: &Schedule,
    s: usize,
    query: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (alpha, sigma, exps) = kde_exponents(ensemble, sched, s, query)?;
    let lse = linalg::log_sum_exp(&exps);
    // Responsibility-weighted center: score = −(q − α Σ_j r_j z_j)/σ².
    let mut center = DVector::zeros(query.len());
    for (z, e) in ensemble.particles.iter().zip(&exps) {
        center += z * (e - lse).exp();
    }
    Ok(-(query - center * alpha) / (sigma * sigma))
}

/// Log-density of the ensemble's kernel density estimate at time `s`.
pub fn kde_log_density(
    ensemble: &ParticleEnsemble,
    sched: &Schedule,
    s: usize,
    query: &DVector<f64>,
) -> Result<f64> {
    let (_, sigma, exps) = kde_exponents(ensemble, sched, s, query)?;
    let d = query.len() as f64;
    let n = ensemble.len() as f64;
    Ok(linalg::log_sum_exp(&exps) - n.ln() - 0.5 * d * (linalg::LN_2PI + 2.0 * sigma.ln()))
}

/// Regularization drift for particle `i`: diffuse it to time `s` with the
/// supplied noise and weight the score gap between the ensemble KDE and
/// the analytic diffused prior, `w(s)·α_s·(∇log KDE − ∇log p_s)(z_s)`.
/// The trailing `α_s` is the Jacobian of `z_s = α_s z + σ_s ν` in `z`.
pub fn reg_drift(
    ensemble: &ParticleEnsemble,
    prior: &GaussianMixture,
    sched: &Schedule,
    s: usize,
    i: usize,
    nu: &DVector<f64>,
    c: f64,
) -> Result<DVector<f64>> {
    if i >= ensemble.len() {
        return Err(Error::domain(format!(
            "reg_drift: particle index {i} out of range for an ensemble of {}",
            ensemble.len()
        )));
    }
    let z_s = sched.diffuse(&ensemble.particles[i], s, nu)?;
    let kde = kde_score(ensemble, sched, s, &z_s)?;
    let prior_score = prior.score_at_time(sched, s, &z_s)?;
    let (alpha, _) = sched.alpha_sigma(s)?;
    let w = sched.weight(s, c)?;
    Ok((kde - prior_score) * (w * alpha))
}

/// Applies one optimizer step to the whole ensemble in place.
pub fn optimizer_step(
    state: &mut OptimizerState,
    ensemble: &mut ParticleEnsemble,
    grads: &[DVector<f64>],
    optimizer: &Optimizer,
) -> Result<()> {
    optimizer.validate()?;
    if grads.len() != ensemble.len() {
        return Err(Error::shape(format!(
            "optimizer_step: {} gradients for {} particles",
            grads.len(),
            ensemble.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.len() != ensemble.particles[i].len() {
            return Err(Error::shape(format!(
                "optimizer_step: gradient {i} has dimension {} but particle {i} has dimension {}",
                g.len(),
                ensemble.particles[i].len()
            )));
        }
        if !g.iter().all(|x| x.is_finite()) {
            return Err(Error::numeric(format!(
                "optimizer_step: non-finite gradient for particle {i} at step {}",
                ensemble.step
            )));
        }
    }
    match (optimizer, &mut *state) {
        (Optimizer::Euler { step_size }, OptimizerState::Euler) => {
            for (z, g) in ensemble.particles.iter_mut().zip(grads) {
                *z -= g * *step_size;
            }
        }
        (
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps_hat,
            },
            OptimizerState::Adam(adam),
        ) => {
            adam.t += 1;
            let bias1 = 1.0 - beta1.powi(adam.t as i32);
            let bias2 = 1.0 - beta2.powi(adam.t as i32);
            for ((z, g), (m, v)) in ensemble
                .particles
                .iter_mut()
                .zip(grads)
                .zip(adam.m.iter_mut().zip(adam.v.iter_mut()))
            {
                for k in 0..z.len() {
                    m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                    v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                    let m_hat = m[k] / bias1;
                    let v_hat = v[k] / bias2;
                    z[k] -= lr * m_hat / (v_hat.sqrt() + eps_hat);
                }
            }
        }
        _ => {
            return Err(Error::config(
                "optimizer_step: optimizer state does not match the optimizer kind",
            ));
        }
    }
    ensemble.step += 1;
    for (i, z) in ensemble.particles.iter().enumerate() {
        if !z.iter().all(|x| x.is_finite()) {
            return Err(Error::numeric(format!(
                "optimizer_step: particle {i} became non-finite at step {}",
                ensemble.step
            )));
        }
    }
    Ok(())
}

/// Flow hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    /// Regularization strength multiplying the drift `v`.
    pub gamma: f64,
    /// Data-consistency strength; the full cotangent weight is `λ̂ρ²`.
    pub lambda_hat: f64,
    /// Weight-schedule constant `c ∈ (0, 1)`.
    pub c: f64,
    /// Ensemble size.
    pub n_particles: usize,
    pub optimizer: Optimizer,
    /// Seed of the flow's random stream (initialization and per-step noise).
    pub seed: u64,
    /// When true all particles share one decode noise `ε` per step;
    /// otherwise every particle draws fresh noise every step.
    pub shared_decode_noise: bool,
    /// Record per-step diagnostics and ensemble snapshots.
    pub trace: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            gamma: 0.15,
            lambda_hat: 0.1,
            c: 0.5,
            n_particles: 4,
            optimizer: Optimizer::default(),
            seed: 0,
            shared_decode_noise: false,
            trace: false,
        }
    }
}

impl FlowConfig {
    /// Checks every scalar field, reporting the offending field path.
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::config(format!(
                "flow.gamma: must be a nonnegative finite real, got {}",
                self.gamma
            )));
        }
        if !(self.lambda_hat.is_finite() && self.lambda_hat >= 0.0) {
            return Err(Error::config(format!(
                "flow.lambda_hat: must be a nonnegative finite real, got {}",
                self.lambda_hat
            )));
        }
        if !(self.c.is_finite() && self.c > 0.0 && self.c < 1.0) {
            return Err(Error::config(format!(
                "flow.c: must lie strictly inside (0, 1), got {}",
                self.c
            )));
        }
        if self.n_particles == 0 {
            return Err(Error::config("flow.n_particles: must be at least 1"));
        }
        self.optimizer.validate()
    }
}

/// A fully assembled inverse problem. The observation is optional so that
/// pure prior-sampling dynamics (`u ≡ 0` with `λ̂ = 0`) can be run.
#[derive(Debug, Clone)]
pub struct Problem {
    pub schedule: Schedule,
    pub prior: GaussianMixture,
    pub autoencoder: LinearAutoencoder,
    pub observation: Option<ObservationModel>,
}

impl Problem {
    /// Checks cross-module dimension agreement, naming both fields on a
    /// mismatch.
    pub fn validate(&self) -> Result<()> {
        let (d_x, d_z) = self.autoencoder.dims();
        if self.prior.dim() != d_z {
            return Err(Error::config(format!(
                "prior.components (dimension {}) and autoencoder.decoder (latent dimension {d_z}) disagree",
                self.prior.dim()
            )));
        }
        if let Some(obs) = &self.observation {
            if obs.op.input_dim() != d_x {
                return Err(Error::config(format!(
                    "observation operator input dimension {} and autoencoder.decoder observation dimension {d_x} disagree",
                    obs.op.input_dim()
                )));
            }
        }
        Ok(())
    }
}

/// Per-step, per-particle diagnostics recorded when tracing is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// Optimizer step count, starting at 0.
    pub step: usize,
    /// Schedule grid index for this step.
    pub s: usize,
    pub particle: usize,
    /// `‖y − A x₀‖²/(2σ_y²)`, zero when no observation is attached.
    pub likelihood: f64,
    /// `λ̂/2 · ‖x₀ − D(E(x₀))‖²`.
    pub data_consistency: f64,
    pub u_norm: f64,
    pub v_norm: f64,
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct RunResult {
    /// Final ensemble.
    pub ensemble: ParticleEnsemble,
    /// Noiseless decodes `D(z⁽ⁱ⁾)` of the final particles.
    pub decoded: Vec<DVector<f64>>,
    /// Per-step diagnostics (when tracing).
    pub trace: Option<Vec<TraceRow>>,
    /// Ensemble after initialization and after every step (when tracing).
    pub snapshots: Option<Vec<Vec<DVector<f64>>>>,
}

/// Runs the flow: initializes `N` particles from the prior and sweeps the
/// schedule grid from `s = T` down to `s = 0`, applying one optimizer step
/// per grid point.
pub fn run(problem: &Problem, config: &FlowConfig) -> Result<RunResult> {
    config.validate()?;
    problem.validate()?;
    let (d_x, _) = problem.autoencoder.dims();
    let t_max = problem.schedule.t_max();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ensemble = ParticleEnsemble::new(problem.prior.sample(config.n_particles, &mut rng));
    let mut state = OptimizerState::new(&config.optimizer, ensemble.len(), ensemble.dim());
    let mut trace = if config.trace { Some(Vec::new()) } else { None };
    let mut snapshots = if config.trace {
        Some(vec![ensemble.particles.clone()])
    } else {
        None
    };

    let draw =
        |rng: &mut ChaCha8Rng, dim: usize| DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));

    for s in (0..=t_max).rev() {
        let shared_eps = if config.shared_decode_noise {
            Some(draw(&mut rng, d_x))
        } else {
            None
        };
        let mut grads = Vec::with_capacity(ensemble.len());
        for i in 0..ensemble.len() {
            let eps = match &shared_eps {
                Some(e) => e.clone(),
                None => draw(&mut rng, d_x),
            };
            let nu = draw(&mut rng, ensemble.dim());
            let z = &ensemble.particles[i];
            let located = |e: Error| {
                Error::numeric(format!(
                    "flow aborted at grid index s = {s}, particle {i}: {e}"
                ))
            };
            let u = data_drift(
                &problem.autoencoder,
                problem.observation.as_ref(),
                z,
                &eps,
                config.lambda_hat,
            )
            .map_err(located)?;
            let v = if s >= 1 && config.gamma > 0.0 {
                reg_drift(
                    &ensemble,
                    &problem.prior,
                    &problem.schedule,
                    s,
                    i,
                    &nu,
                    config.c,
                )
                .map_err(located)?
            } else {
                DVector::zeros(ensemble.dim())
            };
            if let Some(rows) = trace.as_mut() {
                let x0 = problem.autoencoder.decode(z, &eps)?;
                let likelihood = match &problem.observation {
                    Some(obs) => obs.neg_log_likelihood(&x0)?,
                    None => 0.0,
                };
                let round_trip = problem
                    .autoencoder
                    .decode_mean(&problem.autoencoder.encode(&x0)?)?;
                let data_consistency = 0.5 * config.lambda_hat * (&x0 - round_trip).norm_squared();
                rows.push(TraceRow {
                    step: ensemble.step,
                    s,
                    particle: i,
                    likelihood,
                    data_consistency,
                    u_norm: u.norm(),
                    v_norm: v.norm(),
                });
            }
            grads.push(u + v * config.gamma);
        }
        optimizer_step(&mut state, &mut ensemble, &grads, &config.optimizer)
            .map_err(|e| Error::numeric(format!("flow aborted at grid index s = {s}: {e}")))?;
        if let Some(snaps) = snapshots.as_mut() {
            snaps.push(ensemble.particles.clone());
        }
    }

    let decoded = ensemble
        .particles
        .iter()
        .map(|z| problem.autoencoder.decode_mean(z))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult {
        ensemble,
        decoded,
        trace,
        snapshots,
    })
}
