//! Closed-form reference quantities for linear-Gaussian problems.
//!
//! Everything the flow approximates has an exact counterpart here:
//!
//! * the conjugate latent posterior `z | y` for a Gaussian prior and the
//!   noiseless decoder pushed through a linear operator,
//! * the pulled-back MAP point solving the flow's stationarity equations,
//! * closed-form and schedule-weighted KL divergences between Gaussians,
//! * PSNR and ensemble moment summaries.
//!
//! These are computed through independent routes (precision fusion, normal
//! equations, quadrature) so they can arbitrate the iterative code.

use crate::autoencoder::LinearAutoencoder;
use crate::error::{Error, Result};
use crate::flow::ParticleEnsemble;
use crate::linalg;
use crate::observation::ObservationModel;
use crate::schedule::Schedule;
use nalgebra::{DMatrix, DVector};

/// PSNR values are capped here (returned for a zero-error reconstruction).
pub const PSNR_CAP_DB: f64 = 100.0;

/// A single Gaussian `N(mean, cov)` with a validated SPD covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDist {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianDist {
    /// Validates the covariance (symmetric positive definite) and mean.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        linalg::check_finite("gaussian.mean", &mean)?;
        if cov.nrows() != mean.len() {
            return Err(Error::shape(format!(
                "gaussian.cov: is {}x{} but the mean has dimension {}",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        linalg::spd_cholesky("gaussian.cov", &cov)?;
        Ok(GaussianDist { mean, cov })
    }

    /// Dimension of the distribution.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// The Gaussian pushed through the diffusion kernel at grid time `s`:
    /// `N(α_s mean, α_s² cov + σ_s² I)`.
    pub fn diffused(&self, sched: &Schedule, s: usize) -> Result<GaussianDist> {
        let (alpha, sigma) = sched.alpha_sigma(s)?;
        Ok(self.diffused_with(alpha, sigma))
    }

    fn diffused_with(&self, alpha: f64, sigma: f64) -> GaussianDist {
        GaussianDist {
            mean: &self.mean * alpha,
            cov: &self.cov * (alpha * alpha)
                + DMatrix::identity(self.dim(), self.dim()) * (sigma * sigma),
        }
    }
}

/// Exact conjugate posterior of `z` given `y = A(W z + b) + σ_y ξ` under
/// `z ~ N(m, S)`: precision `Λ = S⁻¹ + (AW)ᵀ(AW)/σ_y²` and mean
/// `Λ⁻¹(S⁻¹ m + (AW)ᵀ(y − A b)/σ_y²)`.
pub fn conjugate_posterior(
    prior: &GaussianDist,
    ae: &LinearAutoencoder,
    obs: &ObservationModel,
) -> Result<GaussianDist> {
    let (_, d_z) = ae.dims();
    if prior.dim() != d_z {
        return Err(Error::shape(format!(
            "conjugate_posterior: prior has dimension {} but the latent dimension is {d_z}",
            prior.dim()
        )));
    }
    let a = obs.op.matrix();
    if obs.op.input_dim() != ae.dims().0 {
        return Err(Error::shape(format!(
            "conjugate_posterior: operator input dimension {} does not match the observation dimension {}",
            obs.op.input_dim(),
            ae.dims().0
        )));
    }
    let g = &a * ae.w();
    let sigma2 = obs.sigma_y * obs.sigma_y;
    let prior_chol = linalg::spd_cholesky("conjugate_posterior: prior.cov", &prior.cov)?;
    let s_inv = prior_chol.inverse();
    let precision = &s_inv + g.transpose() * &g / sigma2;
    let chol = linalg::spd_cholesky("conjugate_posterior: posterior precision", &precision)?;
    let shifted = &obs.y - &a * ae.b();
    let rhs = &s_inv * &prior.mean + g.transpose() * shifted / sigma2;
    let mean = chol.solve(&rhs);
    let cov = chol.inverse();
    GaussianDist::new(mean, (&cov + cov.transpose()) * 0.5)
}

/// Stationary point of the data drift with the decode noise averaged out:
/// the minimizer of
///
/// ```text
/// ‖y − A(Wz + b)‖²/(2σ_y²) + λ̂ρ²·½ (x−c̄)ᵀ M (x−c̄),
///     x = Wz + b,  c̄ = W m + b,  M = (W S Wᵀ + ρ² I)⁻¹,
/// ```
///
/// solved via the normal equations
/// `[(AW)ᵀ(AW)/σ_y² + λ̂ρ²·WᵀMW] z = (AW)ᵀ(y − Ab)/σ_y² + λ̂ρ²·WᵀMW m`.
/// At the full Bayesian weight `λ̂ = 1/ρ²` this is the pixel-space MAP
/// pulled back to latent space; with `λ̂ = 0` it is plain least squares and
/// requires `AW` to have full column rank.
pub fn map_point(
    prior: &GaussianDist,
    ae: &LinearAutoencoder,
    obs: &ObservationModel,
    lambda_hat: f64,
) -> Result<DVector<f64>> {
    if !(lambda_hat.is_finite() && lambda_hat >= 0.0) {
        return Err(Error::config(format!(
            "flow.lambda_hat: must be a nonnegative finite real, got {lambda_hat}"
        )));
    }
    let (d_x, d_z) = ae.dims();
    if prior.dim() != d_z {
        return Err(Error::shape(format!(
            "map_point: prior has dimension {} but the latent dimension is {d_z}",
            prior.dim()
        )));
    }
    let a = obs.op.matrix();
    let g = &a * ae.w();
    let sigma2 = obs.sigma_y * obs.sigma_y;
    let shifted = &obs.y - &a * ae.b();
    let mut h = g.transpose() * &g / sigma2;
    let mut rhs = g.transpose() * shifted / sigma2;
    if lambda_hat > 0.0 {
        let rho2 = ae.rho() * ae.rho();
        let marginal_cov =
            ae.w() * &prior.cov * ae.w().transpose() + DMatrix::identity(d_x, d_x) * rho2;
        let marginal_chol = linalg::spd_cholesky("map_point: marginal covariance", &marginal_cov)?;
        let m_w = marginal_chol.solve(ae.w());
        let pulled_back = ae.w().transpose() * m_w * (lambda_hat * rho2);
        rhs += &pulled_back * &prior.mean;
        h += pulled_back;
    }
    let chol = nalgebra::Cholesky::new((&h + h.transpose()) * 0.5).ok_or_else(|| {
        Error::numeric(
            "map_point: normal equations are rank deficient (AW loses rank and lambda_hat provides no regularization)",
        )
    })?;
    Ok(chol.solve(&rhs))
}

/// Closed-form KL divergence between Gaussians,
/// `KL(q‖p) = ½[tr(Σ_p⁻¹Σ_q) + (μ_p−μ_q)ᵀΣ_p⁻¹(μ_p−μ_q) − d + ln(|Σ_p|/|Σ_q|)]`.
pub fn gaussian_kl(q: &GaussianDist, p: &GaussianDist) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::shape(format!(
            "gaussian_kl: dimensions {} and {} disagree",
            q.dim(),
            p.dim()
        )));
    }
    let p_chol = linalg::spd_cholesky("gaussian_kl: p.cov", &p.cov)?;
    let q_chol = linalg::spd_cholesky("gaussian_kl: q.cov", &q.cov)?;
    let d = q.dim() as f64;
    let trace = p_chol.solve(&q.cov).trace();
    let diff = &p.mean - &q.mean;
    let mahalanobis = diff.dot(&p_chol.solve(&diff));
    let log_det_ratio = linalg::chol_log_det(&p_chol) - linalg::chol_log_det(&q_chol);
    Ok(0.5 * (trace + mahalanobis - d + log_det_ratio))
}

/// Schedule-weighted KL divergence
/// `∫₀ᵀ w(s)·KL(q_s ‖ p_s) ds`, `w(s) = c σ_s²/α_s`,
/// where `q_s, p_s` are the two Gaussians pushed through the diffusion
/// kernel, evaluated by the trapezoid rule on `n_nodes` equispaced nodes.
pub fn weighted_kl(
    q: &GaussianDist,
    p: &GaussianDist,
    sched: &Schedule,
    c: f64,
    n_nodes: usize,
) -> Result<f64> {
    if n_nodes < 2 {
        return Err(Error::config(format!(
            "weighted_kl: n_nodes must be at least 2, got {n_nodes}"
        )));
    }
    if !(c.is_finite() && c > 0.0 && c < 1.0) {
        return Err(Error::config(format!(
            "flow.c: must lie strictly inside (0, 1), got {c}"
        )));
    }
    if q.dim() != p.dim() {
        return Err(Error::shape(format!(
            "weighted_kl: dimensions {} and {} disagree",
            q.dim(),
            p.dim()
        )));
    }
    let t_max = sched.t_max() as f64;
    let h = t_max / (n_nodes - 1) as f64;
    let mut integral = 0.0;
    for j in 0..n_nodes {
        let tau = j as f64 / (n_nodes - 1) as f64;
        let (alpha, sigma) = sched.alpha_sigma_at(tau);
        let w = c * sigma * sigma / alpha;
        let kl = gaussian_kl(
            &q.diffused_with(alpha, sigma),
            &p.diffused_with(alpha, sigma),
        )?;
        let trapezoid = if j == 0 || j == n_nodes - 1 { 0.5 } else { 1.0 };
        integral += trapezoid * w * kl;
    }
    Ok(integral * h)
}

/// Peak signal-to-noise ratio `10·log10(peak²/MSE)` in dB, capped at
/// [`PSNR_CAP_DB`] (returned exactly for a zero-error reconstruction).
pub fn psnr(x: &DVector<f64>, x_ref: &DVector<f64>, peak: f64) -> Result<f64> {
    if x.len() != x_ref.len() {
        return Err(Error::shape(format!(
            "psnr: x has dimension {} but x_ref has dimension {}",
            x.len(),
            x_ref.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::domain("psnr: vectors must be nonempty"));
    }
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::config(format!(
            "psnr: peak must be a positive finite real, got {peak}"
        )));
    }
    let mse = (x - x_ref).norm_squared() / x.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// Ensemble mean and unbiased sample covariance. The covariance needs at
/// least two particles, so smaller ensembles are a domain error.
pub fn ensemble_stats(ensemble: &ParticleEnsemble) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = ensemble.len();
    if n < 2 {
        return Err(Error::domain(format!(
            "ensemble_stats: the unbiased covariance needs at least 2 particles, got {n}"
        )));
    }
    let dim = ensemble.dim();
    let mut mean = DVector::zeros(dim);
    for z in &ensemble.particles {
        if z.len() != dim {
            return Err(Error::shape(
                "ensemble_stats: particles have mixed dimensions".to_string(),
            ));
        }
        mean += z;
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for z in &ensemble.particles {
        let d = z - &mean;
        cov += &d * d.transpose();
    }
    cov /= (n - 1) as f64;
    Ok((mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow;
    use crate::observation::ForwardOperator;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn sched() -> Schedule {
        Schedule::new(999, 0.1, 20.0).unwrap()
    }

    fn normal_vec(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| StandardNormal.sample(rng))
    }

    fn random_spd(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
        let a: DMatrix<f64> = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
        &a * a.transpose() + DMatrix::identity(dim, dim) * 0.4
    }

    fn identity_ae(dim: usize, rho: f64) -> LinearAutoencoder {
        LinearAutoencoder::exact(
            DMatrix::identity(dim, dim),
            DVector::zeros(dim),
            rho,
            &DVector::zeros(dim),
            &DMatrix::identity(dim, dim),
        )
        .unwrap()
    }

    #[test]
    fn equal_precision_fusion_halves_the_covariance() {
        // W = A = I, b = 0, σ_y = 1, prior N(0, I): the posterior is
        // N(y/2, I/2).
        let ae = identity_ae(2, 1e-3);
        let y = DVector::from_vec(vec![2.0, -1.0]);
        let obs =
            ObservationModel::new(ForwardOperator::identity(2).unwrap(), y.clone(), 1.0).unwrap();
        let prior = GaussianDist::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let post = conjugate_posterior(&prior, &ae, &obs).unwrap();
        assert!((post.mean - &y * 0.5).abs().max() < 1e-12);
        assert!((post.cov - DMatrix::identity(2, 2) * 0.5).abs().max() < 1e-12);
    }

    #[test]
    fn uninformative_observation_returns_the_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let ae = identity_ae(2, 1e-3);
        let obs = ObservationModel::new(
            ForwardOperator::identity(2).unwrap(),
            normal_vec(&mut rng, 2),
            1e6,
        )
        .unwrap();
        let prior = GaussianDist::new(normal_vec(&mut rng, 2), random_spd(&mut rng, 2)).unwrap();
        let post = conjugate_posterior(&prior, &ae, &obs).unwrap();
        assert!((post.mean - &prior.mean).abs().max() < 1e-8);
        assert!((post.cov - &prior.cov).abs().max() < 1e-8);
    }

    #[test]
    fn conjugate_posterior_matches_dense_grid_bayes() {
        // Independent route: normalize exp(log-likelihood + log-prior) on
        // a 200×200 lattice and compare posterior means.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let w = DMatrix::from_fn(4, 2, |_, _| StandardNormal.sample(&mut rng));
        let b = normal_vec(&mut rng, 4);
        let prior = GaussianDist::new(normal_vec(&mut rng, 2), random_spd(&mut rng, 2)).unwrap();
        let ae = LinearAutoencoder::exact(w, b, 0.1, &prior.mean, &prior.cov).unwrap();
        let x_true = ae.decode_mean(&normal_vec(&mut rng, 2)).unwrap();
        let obs = ObservationModel::observe(
            ForwardOperator::mask(vec![true, true, false, true]).unwrap(),
            &x_true,
            0.5,
            &mut rng,
        )
        .unwrap();
        let post = conjugate_posterior(&prior, &ae, &obs).unwrap();

        let prior_chol = crate::linalg::spd_cholesky("test", &prior.cov).unwrap();
        let prior_logdet = crate::linalg::chol_log_det(&prior_chol);
        let n = 200;
        let half_width = 5.0;
        let stds: Vec<f64> = (0..2).map(|k| post.cov[(k, k)].sqrt()).collect();
        let mut log_weights = Vec::with_capacity(n * n);
        let mut points = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let z = DVector::from_vec(vec![
                    post.mean[0] + half_width * stds[0] * (2.0 * i as f64 / (n - 1) as f64 - 1.0),
                    post.mean[1] + half_width * stds[1] * (2.0 * j as f64 / (n - 1) as f64 - 1.0),
                ]);
                let log_prior =
                    crate::linalg::mvn_log_pdf(&prior_chol, prior_logdet, &prior.mean, &z);
                let log_lik = -obs
                    .neg_log_likelihood(&ae.decode_mean(&z).unwrap())
                    .unwrap();
                log_weights.push(log_prior + log_lik);
                points.push(z);
            }
        }
        let lse = crate::linalg::log_sum_exp(&log_weights);
        let mut grid_mean = DVector::zeros(2);
        for (lw, z) in log_weights.iter().zip(&points) {
            grid_mean += z * (lw - lse).exp();
        }
        assert!(
            (grid_mean - &post.mean).abs().max() < 1e-3,
            "grid mean disagrees with the conjugate mean"
        );
    }

    #[test]
    fn map_point_without_regularization_is_least_squares() {
        let ae = identity_ae(2, 1e-3);
        let y = DVector::from_vec(vec![0.3, 0.9]);
        let obs =
            ObservationModel::new(ForwardOperator::identity(2).unwrap(), y.clone(), 0.1).unwrap();
        let prior = GaussianDist::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let z_star = map_point(&prior, &ae, &obs, 0.0).unwrap();
        assert!((z_star - y).abs().max() < 1e-10);
    }

    #[test]
    fn map_point_agrees_with_the_flat_prior_posterior_under_masking() {
        // W = I with a mask keeping half the coordinates: as the prior
        // covariance grows both the MAP point and the conjugate mean pin
        // the observed coordinates to y and the hidden ones to the prior
        // mean.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let m = normal_vec(&mut rng, 4);
        let tau = 1e6;
        let prior = GaussianDist::new(m, DMatrix::identity(4, 4) * tau).unwrap();
        let ae = LinearAutoencoder::exact(
            DMatrix::identity(4, 4),
            DVector::zeros(4),
            1e-2,
            &prior.mean,
            &prior.cov,
        )
        .unwrap();
        let obs = ObservationModel::new(
            ForwardOperator::mask(vec![true, false, true, false]).unwrap(),
            normal_vec(&mut rng, 2),
            0.1,
        )
        .unwrap();
        let z_star = map_point(&prior, &ae, &obs, 0.1).unwrap();
        let post = conjugate_posterior(&prior, &ae, &obs).unwrap();
        assert!((z_star - post.mean).abs().max() < 1e-6);
    }

    #[test]
    fn map_point_gradient_vanishes_through_the_drift_route() {
        // Dual route: the data drift evaluated at the normal-equations
        // solution with ε = 0 must vanish.
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let w = DMatrix::from_fn(5, 2, |_, _| StandardNormal.sample(&mut rng));
        let b = normal_vec(&mut rng, 5);
        let prior_mean = normal_vec(&mut rng, 2);
        let prior_cov = random_spd(&mut rng, 2);
        let prior = GaussianDist::new(prior_mean, prior_cov).unwrap();
        let ae = LinearAutoencoder::exact(w, b, 0.05, &prior.mean, &prior.cov).unwrap();
        let x_true = ae.decode_mean(&normal_vec(&mut rng, 2)).unwrap();
        let obs = ObservationModel::observe(
            ForwardOperator::mask(vec![true, true, false, true, false]).unwrap(),
            &x_true,
            0.25,
            &mut rng,
        )
        .unwrap();
        let lambda_hat = 0.6;
        let z_star = map_point(&prior, &ae, &obs, lambda_hat).unwrap();
        let grad =
            flow::data_drift(&ae, Some(&obs), &z_star, &DVector::zeros(5), lambda_hat).unwrap();
        assert!(
            grad.abs().max() < 1e-10,
            "gradient at the MAP point: {grad:?}"
        );
    }

    #[test]
    fn map_point_at_full_bayesian_weight_matches_the_conjugate_mean() {
        // λ̂ = 1/ρ² makes the data-consistency term the exact prior score,
        // so the stationary point is the posterior mode = mean.
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let w = DMatrix::from_fn(6, 2, |_, _| StandardNormal.sample(&mut rng));
        let b = normal_vec(&mut rng, 6);
        let prior = GaussianDist::new(normal_vec(&mut rng, 2), random_spd(&mut rng, 2)).unwrap();
        let rho = 1e-3;
        let ae = LinearAutoencoder::exact(w, b, rho, &prior.mean, &prior.cov).unwrap();
        let x_true = ae.decode_mean(&normal_vec(&mut rng, 2)).unwrap();
        let obs = ObservationModel::observe(
            ForwardOperator::downsample(6, 2).unwrap(),
            &x_true,
            1e-2,
            &mut rng,
        )
        .unwrap();
        let z_star = map_point(&prior, &ae, &obs, 1.0 / (rho * rho)).unwrap();
        let post = conjugate_posterior(&prior, &ae, &obs).unwrap();
        assert!(
            (z_star - &post.mean).abs().max() < 1e-8,
            "MAP point and conjugate mean disagree"
        );
    }

    #[test]
    fn map_point_reports_rank_deficiency() {
        // Mask keeping one coordinate with W = I on two latents and
        // λ̂ = 0: the least-squares system is singular.
        let ae = identity_ae(2, 1e-3);
        let obs = ObservationModel::new(
            ForwardOperator::mask(vec![true, false]).unwrap(),
            DVector::from_vec(vec![1.0]),
            0.1,
        )
        .unwrap();
        let prior = GaussianDist::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(
            map_point(&prior, &ae, &obs, 0.0),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn gaussian_kl_closed_form_and_asymmetry() {
        let q = GaussianDist::new(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        let p = GaussianDist::new(
            DVector::from_vec(vec![1.0]),
            DMatrix::from_row_slice(1, 1, &[2.0]),
        )
        .unwrap();
        // ½[1/2 + 1/2 − 1 + ln 2]
        assert_relative_eq!(
            gaussian_kl(&q, &p).unwrap(),
            0.5 * 2.0f64.ln(),
            epsilon = 1e-14
        );
        assert_eq!(gaussian_kl(&q, &q).unwrap(), 0.0);
        assert!(
            (gaussian_kl(&q, &p).unwrap() - gaussian_kl(&p, &q).unwrap()).abs() > 1e-3,
            "KL should be asymmetric"
        );
    }

    #[test]
    fn gaussian_kl_matches_a_monte_carlo_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let q = GaussianDist::new(normal_vec(&mut rng, 2), random_spd(&mut rng, 2)).unwrap();
        let p = GaussianDist::new(normal_vec(&mut rng, 2), random_spd(&mut rng, 2)).unwrap();
        let exact = gaussian_kl(&q, &p).unwrap();

        let q_chol = crate::linalg::spd_cholesky("test", &q.cov).unwrap();
        let p_chol = crate::linalg::spd_cholesky("test", &p.cov).unwrap();
        let q_logdet = crate::linalg::chol_log_det(&q_chol);
        let p_logdet = crate::linalg::chol_log_det(&p_chol);
        let l = q_chol.l();
        let n = 500_000;
        let mut sum = 0.0;
        let mut sq_sum = 0.0;
        for _ in 0..n {
            let z = &q.mean + &l * normal_vec(&mut rng, 2);
            let diff = crate::linalg::mvn_log_pdf(&q_chol, q_logdet, &q.mean, &z)
                - crate::linalg::mvn_log_pdf(&p_chol, p_logdet, &p.mean, &z);
            sum += diff;
            sq_sum += diff * diff;
        }
        let mc = sum / n as f64;
        let se = ((sq_sum / n as f64 - mc * mc) / n as f64).sqrt();
        assert!(
            (mc - exact).abs() < 3.0 * se,
            "mc = {mc}, exact = {exact}, se = {se}"
        );
    }

    #[test]
    fn weighted_kl_vanishes_on_identical_arguments() {
        // The per-node KL is pure rounding noise (trace and log-det of a
        // solve against itself), so the integral sits at the 1e-13 level
        // rather than exactly zero.
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let q = GaussianDist::new(normal_vec(&mut rng, 2), random_spd(&mut rng, 2)).unwrap();
        assert!(weighted_kl(&q, &q, &sched(), 0.5, 200).unwrap().abs() < 1e-10);
    }

    #[test]
    fn weighted_kl_is_positive_and_linear_in_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let q = GaussianDist::new(normal_vec(&mut rng, 2), random_spd(&mut rng, 2)).unwrap();
        let p = GaussianDist::new(normal_vec(&mut rng, 2), random_spd(&mut rng, 2)).unwrap();
        let at_half = weighted_kl(&q, &p, &sched(), 0.5, 200).unwrap();
        assert!(at_half > 0.0);
        let at_quarter = weighted_kl(&q, &p, &sched(), 0.25, 200).unwrap();
        assert_relative_eq!(at_half, 2.0 * at_quarter, max_relative = 1e-12);
    }

    #[test]
    fn weighted_kl_quadrature_is_converged_at_the_default_node_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let q = GaussianDist::new(normal_vec(&mut rng, 2), random_spd(&mut rng, 2)).unwrap();
        let p = GaussianDist::new(normal_vec(&mut rng, 2), random_spd(&mut rng, 2)).unwrap();
        let coarse = weighted_kl(&q, &p, &sched(), 0.5, 100).unwrap();
        let fine = weighted_kl(&q, &p, &sched(), 0.5, 200).unwrap();
        assert!(
            ((fine - coarse) / fine).abs() < 1e-3,
            "coarse = {coarse}, fine = {fine}"
        );
    }

    #[test]
    fn psnr_arithmetic_cap_and_scale_invariance() {
        let x = DVector::from_vec(vec![1.0, 1.0]);
        let zero = DVector::zeros(2);
        // MSE = 1, peak = 1 → 0 dB; peak = 2 → 10·log10 4.
        assert_relative_eq!(psnr(&x, &zero, 1.0).unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(
            psnr(&x, &zero, 2.0).unwrap(),
            10.0 * 4.0f64.log10(),
            epsilon = 1e-12
        );
        // MSE = 0.01, peak = 1 → 20 dB.
        let tenth = DVector::from_vec(vec![0.1, 0.1]);
        assert_relative_eq!(psnr(&tenth, &zero, 1.0).unwrap(), 20.0, epsilon = 1e-12);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), PSNR_CAP_DB);
        let k = 3.7;
        assert_relative_eq!(
            psnr(&(&x * k), &(&zero * k), k).unwrap(),
            psnr(&x, &zero, 1.0).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn ensemble_stats_match_hand_computed_moments() {
        let p = DVector::from_vec(vec![1.0, 0.0]);
        let ens = ParticleEnsemble::new(vec![p.clone(), -p.clone()]);
        let (mean, cov) = ensemble_stats(&ens).unwrap();
        assert!(mean.abs().max() < 1e-15);
        // Unbiased: (1 + 1)/(2 − 1) = 2 on the first coordinate.
        assert_relative_eq!(cov[(0, 0)], 2.0, epsilon = 1e-14);
        assert_eq!(cov[(1, 1)], 0.0);
        let identical = ParticleEnsemble::new(vec![p.clone(), p.clone(), p]);
        let (_, c_same) = ensemble_stats(&identical).unwrap();
        assert_eq!(c_same.abs().max(), 0.0);
    }

    #[test]
    fn ensemble_stats_reject_fewer_than_two_particles() {
        let single = ParticleEnsemble::new(vec![DVector::from_vec(vec![0.5])]);
        let err = ensemble_stats(&single).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert!(err.to_string().contains("at least 2"));
    }

    #[test]
    fn ensemble_stats_recover_sampling_moments() {
        use crate::prior::{GaussianComponent, GaussianMixture};
        let prior = GaussianMixture::new(vec![GaussianComponent {
            weight: 1.0,
            mean: DVector::from_vec(vec![0.5, -1.0]),
            cov: DMatrix::from_row_slice(2, 2, &[1.5, -0.4, -0.4, 0.7]),
        }])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(49);
        let ens = ParticleEnsemble::new(prior.sample(100_000, &mut rng));
        let (mean, cov) = ensemble_stats(&ens).unwrap();
        assert!((mean - &prior.components()[0].mean).abs().max() < 0.02);
        assert!((cov - &prior.components()[0].cov).abs().max() < 0.03);
    }
}
