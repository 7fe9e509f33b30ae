//! Gaussian-mixture prior with closed-form diffused marginals.
//!
//! A mixture `p(z₀) = Σ_i w_i N(z₀; m_i, Σ_i)` pushed through the
//! variance-preserving kernel `N(z_s; α_s z₀, σ_s² I)` stays a Gaussian
//! mixture with the same weights and transformed components
//!
//! ```text
//! p_s(z) = Σ_i w_i N(z; α_s m_i, α_s² Σ_i + σ_s² I),
//! ```
//!
//! so the time-`s` log-density and score `∇_z log p_s` are exactly
//! computable. The score plays the role a pretrained denoiser network
//! would play at scale: it is the reference against which the particle
//! ensemble's own density estimate is compared by the regularization
//! drift.

use crate::error::{Error, Result};
use crate::linalg;
use crate::schedule::Schedule;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// One mixture component `w · N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Validated Gaussian mixture. Weights are nonnegative, sum to one within
/// 1e−12, and every covariance is symmetric positive definite.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    components: Vec<GaussianComponent>,
    /// Cholesky factor and log-determinant per component, fixed at
    /// construction.
    factors: Vec<(Cholesky<f64, Dyn>, f64)>,
    dim: usize,
}

impl GaussianMixture {
    /// Builds and validates a mixture. Zero weights are allowed (the
    /// component is simply never sampled); negative weights are not.
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::config(
                "prior.components: mixture must have at least one component",
            ));
        }
        let dim = components[0].mean.len();
        let mut weight_sum = 0.0;
        let mut factors = Vec::with_capacity(components.len());
        for (i, comp) in components.iter().enumerate() {
            if !(comp.weight.is_finite() && comp.weight >= 0.0) {
                return Err(Error::config(format!(
                    "prior.components[{i}].weight: must be finite and nonnegative, got {}",
                    comp.weight
                )));
            }
            weight_sum += comp.weight;
            if comp.mean.len() != dim {
                return Err(Error::shape(format!(
                    "prior.components[{i}].mean: dimension {} does not match component 0 dimension {dim}",
                    comp.mean.len()
                )));
            }
            linalg::check_finite(&format!("prior.components[{i}].mean"), &comp.mean)?;
            if comp.cov.nrows() != dim {
                return Err(Error::shape(format!(
                    "prior.components[{i}].cov: is {}x{} but the mixture dimension is {dim}",
                    comp.cov.nrows(),
                    comp.cov.ncols()
                )));
            }
            let chol = linalg::spd_cholesky(&format!("prior.components[{i}].cov"), &comp.cov)?;
            let log_det = linalg::chol_log_det(&chol);
            factors.push((chol, log_det));
        }
        if (weight_sum - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!(
                "prior.components: weights must sum to 1 within 1e-12, got {weight_sum}"
            )));
        }
        Ok(GaussianMixture {
            components,
            factors,
            dim,
        })
    }

    /// Latent dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Deterministically generates a mixture from a seed: equal-ish
    /// positive weights, means of scale 2, and well-conditioned random
    /// covariances. Intended for quickly writing experiment configs
    /// without spelling out matrices.
    pub fn seeded(dim: usize, components: usize, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        if dim == 0 || components == 0 {
            return Err(Error::config(format!(
                "prior.seeded: dim and components must be positive, got dim = {dim}, components = {components}"
            )));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut raw: Vec<f64> = (0..components)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g.abs() + 0.1
            })
            .collect();
        let total: f64 = raw.iter().sum();
        for w in &mut raw {
            *w /= total;
        }
        let specs = raw
            .into_iter()
            .map(|weight| {
                let mean = DVector::from_fn(dim, |_, _| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    2.0 * g
                });
                let a: DMatrix<f64> =
                    DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
                let cov = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.4;
                GaussianComponent { weight, mean, cov }
            })
            .collect();
        GaussianMixture::new(specs)
    }

    /// Mixture components.
    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// Moment-matched single Gaussian: the mixture's overall mean and
    /// covariance `Σ_i w_i (Σ_i + m_i m_iᵀ) − m̄ m̄ᵀ`.
    pub fn mean_cov(&self) -> (DVector<f64>, DMatrix<f64>) {
        let mut mean = DVector::zeros(self.dim);
        for comp in &self.components {
            mean += &comp.mean * comp.weight;
        }
        let mut cov = DMatrix::zeros(self.dim, self.dim);
        for comp in &self.components {
            cov += (&comp.cov + &comp.mean * comp.mean.transpose()) * comp.weight;
        }
        cov -= &mean * mean.transpose();
        (mean, cov)
    }

    /// The mixture diffused to grid time `s`: weights unchanged, means
    /// `α_s m_i`, covariances `α_s² Σ_i + σ_s² I`.
    pub fn diffused(&self, sched: &Schedule, s: usize) -> Result<GaussianMixture> {
        let (alpha, sigma) = sched.alpha_sigma(s)?;
        let noise = DMatrix::identity(self.dim, self.dim) * (sigma * sigma);
        let components = self
            .components
            .iter()
            .map(|comp| GaussianComponent {
                weight: comp.weight,
                mean: &comp.mean * alpha,
                cov: &comp.cov * (alpha * alpha) + &noise,
            })
            .collect();
        GaussianMixture::new(components)
    }

    /// Log-density of the mixture at `z` (time zero), via log-sum-exp.
    pub fn log_density(&self, z: &DVector<f64>) -> Result<f64> {
        linalg::check_finite("log_density: z", z)?;
        self.check_query_dim(z)?;
        Ok(linalg::log_sum_exp(&self.component_log_terms(z)))
    }

    /// Score `∇_z log p(z)` (time zero): the responsibility-weighted sum of
    /// the component scores `−Σ_i⁻¹(z − m_i)`.
    pub fn score(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        linalg::check_finite("score: z", z)?;
        self.check_query_dim(z)?;
        let log_terms = self.component_log_terms(z);
        let lse = linalg::log_sum_exp(&log_terms);
        let mut score = DVector::zeros(self.dim);
        for (i, comp) in self.components.iter().enumerate() {
            let resp = (log_terms[i] - lse).exp();
            if resp > 0.0 {
                score += linalg::mvn_score(&self.factors[i].0, &comp.mean, z) * resp;
            }
        }
        Ok(score)
    }

    /// Log-density of the diffused mixture `p_s` at `z`.
    pub fn log_density_at_time(&self, sched: &Schedule, s: usize, z: &DVector<f64>) -> Result<f64> {
        self.diffused(sched, s)?.log_density(z)
    }

    /// Score `∇_z log p_s(z)` of the diffused mixture.
    pub fn score_at_time(
        &self,
        sched: &Schedule,
        s: usize,
        z: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.diffused(sched, s)?.score(z)
    }

    /// Draws `count` independent samples: a categorical pick by weight,
    /// then `m_i + L_i ξ` with `L_i` the component's Cholesky factor.
    pub fn sample<R: Rng>(&self, count: usize, rng: &mut R) -> Vec<DVector<f64>> {
        (0..count)
            .map(|_| {
                let u: f64 = rng.random();
                let mut cum = 0.0;
                let mut idx = self.components.len() - 1;
                for (i, comp) in self.components.iter().enumerate() {
                    cum += comp.weight;
                    if u < cum {
                        idx = i;
                        break;
                    }
                }
                let xi = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng));
                &self.components[idx].mean + self.factors[idx].0.l_dirty().lower_triangle() * xi
            })
            .collect()
    }

    fn check_query_dim(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::shape(format!(
                "query point has dimension {} but the mixture has dimension {}",
                z.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `log w_i + log N(z; m_i, Σ_i)` per component; `−inf` for zero weights.
    fn component_log_terms(&self, z: &DVector<f64>) -> Vec<f64> {
        self.components
            .iter()
            .zip(&self.factors)
            .map(|(comp, (chol, log_det))| {
                comp.weight.ln() + linalg::mvn_log_pdf(chol, *log_det, &comp.mean, z)
            })
            .collect()
    }
}
