//! Self-contained verification suites.
//!
//! Each suite checks a family of identities the solver relies on —
//! gradient cancellations, analytic scores against finite differences,
//! divergence properties, and the prior fixed point of the regularized
//! flow — and reports measured errors next to their thresholds. The CLI
//! `verify` subcommand and the acceptance tests both run these, so the
//! command line and the test suite can never drift apart.

use crate::autoencoder::LinearAutoencoder;
use crate::error::{Error, Result};
use crate::flow::{self, FlowConfig, Optimizer, ParticleEnsemble, Problem};
use crate::observation::{ForwardOperator, ObservationModel};
use crate::oracle::{self, GaussianDist};
use crate::prior::{GaussianComponent, GaussianMixture};
use crate::schedule::Schedule;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt;

/// Outcome of one checked property.
#[derive(Debug, Clone)]
pub struct PropertyReport {
    /// Short identifier, e.g. `reparam/zero-gradient`.
    pub name: String,
    /// Largest error (or statistic) observed.
    pub measured: f64,
    /// The bound `measured` must stay below.
    pub threshold: f64,
    /// Whether `measured` met the threshold.
    pub passed: bool,
    /// Human-readable description of what was measured.
    pub detail: String,
}

impl PropertyReport {
    fn new(name: &str, measured: f64, threshold: f64, detail: String) -> Self {
        PropertyReport {
            name: name.to_string(),
            measured,
            threshold,
            passed: measured.is_finite() && measured < threshold,
            detail,
        }
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: {} = {:.3e} (threshold {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.measured,
            self.threshold
        )
    }
}

/// All property outcomes of one suite.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: String,
    pub properties: Vec<PropertyReport>,
}

impl SuiteReport {
    /// True when every property met its threshold.
    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.properties {
            writeln!(f, "{p}")?;
        }
        write!(
            f,
            "suite {}: {}",
            self.suite,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Names accepted by [`run_suite`].
pub const SUITE_NAMES: [&str; 4] = ["reparam", "gradients", "theorem1", "fixedpoint"];

/// Runs one suite by name (see [`SUITE_NAMES`]).
pub fn run_suite(name: &str) -> Result<SuiteReport> {
    match name {
        "reparam" => Ok(reparam_suite()),
        "gradients" => gradients_suite(),
        "theorem1" => theorem1_suite(),
        "fixedpoint" => fixedpoint_suite(),
        other => Err(Error::config(format!(
            "verify: unknown suite {other:?}; expected one of {SUITE_NAMES:?} or \"all\""
        ))),
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| StandardNormal.sample(rng))
}

fn normal_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn random_spd(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let a = normal_mat(rng, dim, dim);
    &a * a.transpose() + DMatrix::identity(dim, dim) * 0.4
}

fn random_mixture(rng: &mut ChaCha8Rng, dim: usize, k: usize) -> GaussianMixture {
    let mut weights: Vec<f64> = (0..k)
        .map(|_| {
            let g: f64 = StandardNormal.sample(rng);
            g.abs() + 0.1
        })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    GaussianMixture::new(
        weights
            .into_iter()
            .map(|weight| GaussianComponent {
                weight,
                mean: normal_vec(rng, dim) * 2.0,
                cov: random_spd(rng, dim),
            })
            .collect(),
    )
    .expect("randomly generated mixture is valid by construction")
}

/// Reparameterization cancellation: with the decode noise shared between
/// the sample and the density, the latent gradient of the decoder's own
/// log-likelihood vanishes identically. Checks 100 random
/// (decoder, z, ε) triples; the path and density contributions must
/// cancel to strictly better than 1e-12 componentwise.
pub fn reparam_suite() -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (d_x, d_z) = (5, 3);
        let w = normal_mat(&mut rng, d_x, d_z);
        let b = normal_vec(&mut rng, d_x);
        let g: f64 = StandardNormal.sample(&mut rng);
        let rho = 0.02 + 0.1 * g.abs();
        let prior_mean = normal_vec(&mut rng, d_z);
        let prior_cov = random_spd(&mut rng, d_z);
        let ae = LinearAutoencoder::exact(w, b, rho, &prior_mean, &prior_cov)
            .expect("random decoder with Gaussian-column entries has full column rank");
        let z = normal_vec(&mut rng, d_z);
        let eps = normal_vec(&mut rng, d_x);
        let grad = ae
            .reparam_self_likelihood_grad(&z, &eps)
            .expect("shapes are consistent by construction");
        worst = worst.max(grad.abs().max());
    }
    SuiteReport {
        suite: "reparam".to_string(),
        properties: vec![PropertyReport::new(
            "reparam/zero-gradient",
            worst,
            1e-12,
            "max |gradient| over 100 triples".to_string(),
        )],
    }
}

fn central_fd<F: FnMut(&DVector<f64>) -> f64>(mut f: F, z: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(z.len(), |k, _| {
        let mut plus = z.clone();
        let mut minus = z.clone();
        plus[k] += h;
        minus[k] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    })
}

fn relative_norm_error(approx: &DVector<f64>, exact: &DVector<f64>) -> f64 {
    (approx - exact).norm() / exact.norm().max(1e-6)
}

/// Analytic gradients against central finite differences:
///
/// * the diffused-mixture score vs the log-density, 100 points,
/// * the kernel-estimate score vs its log-density, 100 points,
/// * the full per-particle drift (data + regularization, noises frozen)
///   vs the scalar objective it descends, on an 8-particle problem.
pub fn gradients_suite() -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let sched = Schedule::new(999, 0.1, 20.0)?;
    let h = 1e-5;

    let prior = random_mixture(&mut rng, 2, 3);
    let mut worst_prior = 0.0f64;
    for i in 0..100 {
        let s = [0, 1, 250, 600, 999][i % 5];
        let z = normal_vec(&mut rng, 2) * 2.0;
        let exact = prior.score_at_time(&sched, s, &z)?;
        let fd = central_fd(
            |q| {
                prior
                    .log_density_at_time(&sched, s, q)
                    .expect("finite query")
            },
            &z,
            h,
        );
        worst_prior = worst_prior.max(relative_norm_error(&fd, &exact));
    }

    let ensemble = ParticleEnsemble::new((0..8).map(|_| normal_vec(&mut rng, 2)).collect());
    let mut worst_kde = 0.0f64;
    for i in 0..100 {
        let s = [1, 100, 400, 800, 999][i % 5];
        let q = normal_vec(&mut rng, 2) * 1.5;
        let exact = flow::kde_score(&ensemble, &sched, s, &q)?;
        let fd = central_fd(
            |p| flow::kde_log_density(&ensemble, &sched, s, p).expect("finite query"),
            &q,
            h,
        );
        worst_kde = worst_kde.max(relative_norm_error(&fd, &exact));
    }

    let worst_drift = frozen_drift_fd_error(&mut rng, &sched, h)?;

    Ok(SuiteReport {
        suite: "gradients".to_string(),
        properties: vec![
            PropertyReport::new(
                "gradients/prior-score-fd",
                worst_prior,
                1e-5,
                "max relative error over 100 points".to_string(),
            ),
            PropertyReport::new(
                "gradients/kde-score-fd",
                worst_kde,
                1e-5,
                "max relative error over 100 points".to_string(),
            ),
            PropertyReport::new(
                "gradients/frozen-drift-fd",
                worst_drift,
                1e-4,
                "max relative error over 8 particles".to_string(),
            ),
        ],
    })
}

/// Compares the drift `u + γ v` for every particle against central finite
/// differences of the frozen-noise objective
///
/// ```text
/// L(z_i) = ‖y − A x_i‖²/(2σ_y²) + λ̂/2 ‖x_i − c_i‖²
///        + γ w(s) [log kde⁰(α z_i + σ ν_i) − log p_s(α z_i + σ ν_i)],
/// ```
///
/// where `x_i = D(z_i) + ρ ε_i`, the targets `c_i = D(E(x_i))` and the
/// kernel centers are frozen at the base point, and `ε_i, ν_i` are fixed
/// draws. Both routes must agree because the drift is exactly the
/// gradient of this objective.
fn frozen_drift_fd_error(rng: &mut ChaCha8Rng, sched: &Schedule, h: f64) -> Result<f64> {
    let (d_x, d_z, n) = (4, 2, 8);
    let prior = random_mixture(rng, d_z, 2);
    let (prior_mean, prior_cov) = prior.mean_cov();
    let w = normal_mat(rng, d_x, d_z);
    let b = normal_vec(rng, d_x);
    let ae = LinearAutoencoder::exact(w, b, 0.05, &prior_mean, &prior_cov)?;
    let x_true = ae.decode_mean(&normal_vec(rng, d_z))?;
    let obs = ObservationModel::observe(
        ForwardOperator::mask(vec![true, true, false, true])?,
        &x_true,
        0.25,
        rng,
    )?;
    let (gamma, lambda_hat, c, s) = (0.4, 0.3, 0.5, 600);
    let (alpha, sigma) = sched.alpha_sigma(s)?;
    let weight = sched.weight(s, c)?;

    let base: Vec<DVector<f64>> = (0..n).map(|_| normal_vec(rng, d_z)).collect();
    let eps: Vec<DVector<f64>> = (0..n).map(|_| normal_vec(rng, d_x)).collect();
    let nu: Vec<DVector<f64>> = (0..n).map(|_| normal_vec(rng, d_z)).collect();
    let ensemble = ParticleEnsemble::new(base.clone());
    let targets: Vec<DVector<f64>> = base
        .iter()
        .zip(&eps)
        .map(|(z, e)| {
            let x = ae.decode(z, e)?;
            ae.decode_mean(&ae.encode(&x)?)
        })
        .collect::<Result<_>>()?;

    let mut worst = 0.0f64;
    for i in 0..n {
        let u = flow::data_drift(&ae, Some(&obs), &base[i], &eps[i], lambda_hat)?;
        let v = flow::reg_drift(&ensemble, &prior, sched, s, i, &nu[i], c)?;
        let drift = u + v * gamma;

        let objective = |z: &DVector<f64>| -> f64 {
            let x = ae.decode(z, &eps[i]).expect("consistent shapes");
            let data = obs.neg_log_likelihood(&x).expect("consistent shapes")
                + 0.5 * lambda_hat * (&x - &targets[i]).norm_squared();
            let z_s = z * alpha + &nu[i] * sigma;
            let reg = flow::kde_log_density(&ensemble, sched, s, &z_s).expect("s >= 1")
                - prior
                    .log_density_at_time(sched, s, &z_s)
                    .expect("finite query");
            data + gamma * weight * reg
        };
        let fd = central_fd(objective, &base[i], h);
        worst = worst.max(relative_norm_error(&fd, &drift));
    }
    Ok(worst)
}

/// Divergence properties of the schedule-weighted KL on 200 seeded
/// Gaussian pairs: nonnegativity, midpoint convexity along
/// mean-interpolation paths (the divergence is quadratic in the mean for
/// fixed covariances), and coincidence of its zero set with the zero set
/// of the plain Gaussian KL.
pub fn theorem1_suite() -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let sched = Schedule::new(999, 0.1, 20.0)?;
    let (c, nodes) = (0.5, 200);

    let mut min_value = f64::INFINITY;
    let mut worst_convexity = f64::NEG_INFINITY;
    let mut coincidence_failures = 0usize;
    for pair in 0..200 {
        let cov_q = random_spd(&mut rng, 2);
        let mu0 = normal_vec(&mut rng, 2) * 2.0;
        let mu1 = normal_vec(&mut rng, 2) * 2.0;
        let p = GaussianDist::new(normal_vec(&mut rng, 2) * 2.0, random_spd(&mut rng, 2))?;

        let at = |t: f64| -> Result<f64> {
            let q = GaussianDist::new(&mu0 * (1.0 - t) + &mu1 * t, cov_q.clone())?;
            oracle::weighted_kl(&q, &p, &sched, c, nodes)
        };
        let (f0, f_half, f1) = (at(0.0)?, at(0.5)?, at(1.0)?);
        min_value = min_value.min(f0).min(f_half).min(f1);
        worst_convexity = worst_convexity.max(f_half - 0.5 * (f0 + f1));

        // Zero coincidence on the endpoint pair, plus identical and
        // nearly identical pairs every eighth iteration.
        let q = GaussianDist::new(mu0.clone(), cov_q.clone())?;
        let mut cases = vec![q.clone()];
        if pair % 8 == 0 {
            cases.push(q.clone());
            let mut nudged = q.clone();
            nudged.mean[0] += 1e-5;
            cases.push(nudged);
        }
        for (k, other) in cases.iter().enumerate() {
            let (lhs, rhs) = if k == 0 { (&q, &p) } else { (&q, other) };
            let weighted = oracle::weighted_kl(lhs, rhs, &sched, c, nodes)?;
            let plain = oracle::gaussian_kl(lhs, rhs)?;
            if (weighted.abs() < 1e-6) != (plain.abs() < 1e-6) {
                coincidence_failures += 1;
            }
            min_value = min_value.min(weighted);
        }
    }

    Ok(SuiteReport {
        suite: "theorem1".to_string(),
        properties: vec![
            PropertyReport::new(
                "theorem1/nonnegative",
                -min_value,
                1e-12,
                "-(minimum divergence) over 200 pairs".to_string(),
            ),
            PropertyReport::new(
                "theorem1/mean-convexity",
                worst_convexity,
                1e-9,
                "max midpoint excess f(1/2) - (f(0)+f(1))/2".to_string(),
            ),
            PropertyReport::new(
                "theorem1/zero-coincidence",
                coincidence_failures as f64,
                0.5,
                "pairs where weighted and plain KL disagree about vanishing".to_string(),
            ),
        ],
    })
}

/// Runs the pure-regularization flow (no observation, `λ̂ = 0`, `γ = 1`)
/// on 512 particles initialized from a correlated single-Gaussian prior
/// and returns the moment errors of the final ensemble: the Euclidean
/// distance of the mean and the relative Frobenius error of the
/// covariance against the prior moments.
pub fn fixedpoint_moments(optimizer: &Optimizer, seed: u64) -> Result<(f64, f64)> {
    let mean = DVector::from_vec(vec![0.7, -0.3]);
    let cov = DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.2, 0.5]);
    let prior = GaussianMixture::new(vec![GaussianComponent {
        weight: 1.0,
        mean: mean.clone(),
        cov: cov.clone(),
    }])?;
    let ae = LinearAutoencoder::exact(
        DMatrix::identity(2, 2),
        DVector::zeros(2),
        1e-3,
        &mean,
        &cov,
    )?;
    let problem = Problem {
        schedule: Schedule::new(999, 0.1, 20.0)?,
        prior,
        autoencoder: ae,
        observation: None,
    };
    let config = FlowConfig {
        gamma: 1.0,
        lambda_hat: 0.0,
        c: 0.5,
        n_particles: 512,
        optimizer: optimizer.clone(),
        seed,
        shared_decode_noise: false,
        trace: false,
    };
    let result = flow::run(&problem, &config)?;
    let (emp_mean, emp_cov) = oracle::ensemble_stats(&result.ensemble)?;
    Ok((
        (&emp_mean - &mean).norm(),
        (&emp_cov - &cov).norm() / cov.norm(),
    ))
}

/// Prior fixed point: with no observation and `λ̂ = 0` the data drift
/// vanishes, so the flow is driven purely by the regularization term and
/// must keep an ensemble initialized from the prior distributed like the
/// prior, up to Monte-Carlo error in the moments. Uses the Euler
/// reference discretization, whose steps scale with the actual drift;
/// scale-free Adam steps move every coordinate by O(lr) regardless of
/// how small the drift is and therefore cannot hold a stationary
/// distribution tighter than the learning rate.
pub fn fixedpoint_suite() -> Result<SuiteReport> {
    let (mean_err, cov_err) = fixedpoint_moments(&Optimizer::Euler { step_size: 1.0 }, 7)?;
    Ok(SuiteReport {
        suite: "fixedpoint".to_string(),
        properties: vec![
            PropertyReport::new(
                "fixedpoint/mean",
                mean_err,
                0.1,
                "|ensemble mean - prior mean|".to_string(),
            ),
            PropertyReport::new(
                "fixedpoint/covariance",
                cov_err,
                0.15,
                "relative Frobenius error of the ensemble covariance".to_string(),
            ),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reparam_suite_passes() {
        let report = reparam_suite();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn gradients_suite_passes() {
        let report = gradients_suite().unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn theorem1_suite_passes() {
        let report = theorem1_suite().unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn fixedpoint_suite_passes() {
        let report = fixedpoint_suite().unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    #[ignore = "measurement helper; run explicitly to compare discretizations"]
    fn fixedpoint_moments_by_optimizer() {
        for seed in [7, 8, 9] {
            let euler = fixedpoint_moments(&Optimizer::Euler { step_size: 1.0 }, seed).unwrap();
            let adam = fixedpoint_moments(&Optimizer::default(), seed).unwrap();
            println!("seed {seed}: euler (mean, cov) = {euler:?}, adam = {adam:?}");
        }
    }

    #[test]
    fn run_suite_dispatches_and_rejects_unknown_names() {
        assert!(run_suite("reparam").unwrap().passed());
        let err = run_suite("nonsense").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("nonsense"));
    }

    #[test]
    fn report_formatting_includes_verdict_and_values() {
        let report = reparam_suite();
        let text = format!("{report}");
        assert!(text.contains("[PASS] reparam/zero-gradient"));
        assert!(text.contains("suite reparam: PASS"));
    }
}
