//! Variance-preserving diffusion schedule on a discrete time grid.
//!
//! The grid is `s = 0, 1, …, T`. With `τ = s/T` and the integrated rate
//! `B(τ) = β_min·τ + ½(β_max − β_min)·τ²`, the signal and noise scales are
//!
//! ```text
//! α_s = exp(−B(τ)/2),    σ_s = sqrt(1 − α_s²),
//! ```
//!
//! so `α_s² + σ_s² = 1` at every grid point (variance preserving). A clean
//! sample `z₀` diffused to time `s` is `α_s z₀ + σ_s ε` with `ε ~ N(0, I)`,
//! i.e. the marginal kernel is `N(α_s z₀, σ_s² I)`.
//!
//! The schedule also carries the scalar weight `w(s) = c·σ_s²/α_s` used to
//! scale the regularization drift of the particle flow; `w(0) = 0` and `w`
//! grows monotonically towards the noisy end of the grid.

use crate::error::{Error, Result};
use nalgebra::DVector;

/// Quadratic variance-preserving schedule over the grid `0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    t_max: usize,
    beta_min: f64,
    beta_max: f64,
}

impl Schedule {
    /// Builds a schedule over `s = 0..=t_max` with rate endpoints
    /// `(beta_min, beta_max)`.
    pub fn new(t_max: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if t_max == 0 {
            return Err(Error::config("schedule.t_max: must be at least 1"));
        }
        if !(beta_min.is_finite() && beta_min > 0.0) {
            return Err(Error::config(format!(
                "schedule.beta_min: must be a positive finite real, got {beta_min}"
            )));
        }
        if !(beta_max.is_finite() && beta_max >= beta_min) {
            return Err(Error::config(format!(
                "schedule.beta_max: must be finite and >= schedule.beta_min, got {beta_max}"
            )));
        }
        Ok(Schedule {
            t_max,
            beta_min,
            beta_max,
        })
    }

    /// Largest grid index `T`.
    pub fn t_max(&self) -> usize {
        self.t_max
    }

    /// Integrated rate `B(τ)` at fractional time `τ ∈ [0, 1]`.
    fn integrated_rate(&self, tau: f64) -> f64 {
        self.beta_min * tau + 0.5 * (self.beta_max - self.beta_min) * tau * tau
    }

    /// `(α, σ)` at fractional time `τ ∈ [0, 1]`. Continuous evaluation is
    /// used internally (e.g. by quadrature); the public surface is the
    /// integer grid.
    pub(crate) fn alpha_sigma_at(&self, tau: f64) -> (f64, f64) {
        let alpha = (-0.5 * self.integrated_rate(tau)).exp();
        let sigma = (1.0 - alpha * alpha).max(0.0).sqrt();
        (alpha, sigma)
    }

    /// `(α_s, σ_s)` at grid index `s`.
    pub fn alpha_sigma(&self, s: usize) -> Result<(f64, f64)> {
        if s > self.t_max {
            return Err(Error::domain(format!(
                "schedule index s = {s} outside grid 0..={}",
                self.t_max
            )));
        }
        Ok(self.alpha_sigma_at(s as f64 / self.t_max as f64))
    }

    /// Diffuses `z0` to time `s` with the given standard-normal draw:
    /// `α_s z0 + σ_s ε`.
    pub fn diffuse(&self, z0: &DVector<f64>, s: usize, eps: &DVector<f64>) -> Result<DVector<f64>> {
        if z0.len() != eps.len() {
            return Err(Error::shape(format!(
                "diffuse: z0 has dimension {} but eps has dimension {}",
                z0.len(),
                eps.len()
            )));
        }
        let (alpha, sigma) = self.alpha_sigma(s)?;
        Ok(z0 * alpha + eps * sigma)
    }

    /// Regularization weight `w(s) = c·σ_s²/α_s` with `c ∈ (0, 1)`.
    pub fn weight(&self, s: usize, c: f64) -> Result<f64> {
        if !(c.is_finite() && c > 0.0 && c < 1.0) {
            return Err(Error::config(format!(
                "flow.c: must lie strictly inside (0, 1), got {c}"
            )));
        }
        let (alpha, sigma) = self.alpha_sigma(s)?;
        Ok(c * sigma * sigma / alpha)
    }
}
