//! Small dense linear-algebra helpers shared by the prior, flow, and
//! oracle modules: SPD validation via Cholesky, multivariate normal
//! log-densities and scores, and a stable log-sum-exp.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Natural log of 2π.
pub(crate) const LN_2PI: f64 = 1.8378770664093453;

/// Fails unless every entry of `v` is finite.
pub(crate) fn check_finite(name: &str, v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(format!(
            "{name} contains a non-finite entry"
        )))
    }
}

/// Validates that `cov` is square, symmetric, and positive definite, and
/// returns its Cholesky factorization. `name` is used in error messages.
pub(crate) fn spd_cholesky(name: &str, cov: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if cov.nrows() != cov.ncols() {
        return Err(Error::shape(format!(
            "{name}: covariance must be square, got {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if cov.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric(format!(
            "{name}: covariance has a non-finite entry"
        )));
    }
    let scale = cov.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    for i in 0..cov.nrows() {
        for j in 0..i {
            if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::numeric(format!(
                    "{name}: covariance is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Cholesky::new(cov.clone())
        .ok_or_else(|| Error::numeric(format!("{name}: covariance is not positive definite")))
}

/// `log |Σ|` from a Cholesky factor: twice the log of the diagonal of `L`.
pub(crate) fn chol_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
        * 2.0
}

/// Log-density of `N(mean, Σ)` at `z`, given the Cholesky factor of `Σ`.
pub(crate) fn mvn_log_pdf(
    chol: &Cholesky<f64, Dyn>,
    log_det: f64,
    mean: &DVector<f64>,
    z: &DVector<f64>,
) -> f64 {
    let diff = z - mean;
    let solved = chol.solve(&diff);
    -0.5 * (mean.len() as f64 * LN_2PI + log_det + diff.dot(&solved))
}

/// Score `∇_z log N(z; mean, Σ) = −Σ⁻¹(z − mean)`.
pub(crate) fn mvn_score(
    chol: &Cholesky<f64, Dyn>,
    mean: &DVector<f64>,
    z: &DVector<f64>,
) -> DVector<f64> {
    let diff = z - mean;
    -chol.solve(&diff)
}

/// Stable `log Σ exp(x_i)`. `-inf` entries are permitted as long as at
/// least one entry is finite.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}
