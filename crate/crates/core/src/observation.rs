//! Linear forward operators and the Gaussian observation model.
//!
//! Three desk-scale operators are provided: the identity, coordinate
//! masking (dropped coordinates are removed, so the observation lives in
//! the reduced space), and block-mean downsampling. Each operator exposes
//! `apply` (`A x`), its exact adjoint (`Aᵀ u`), and a dense matrix
//! representation used by the closed-form reference posteriors.
//!
//! Observations follow `y = A x + σ_y ξ` with `ξ ~ N(0, I)`; the model
//! stores `(A, y, σ_y)` and provides the log-likelihood gradient
//! `∇_x log N(y; A x, σ_y² I) = Aᵀ(y − A x)/σ_y²`.

use crate::error::{Error, Result};
use crate::linalg;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Linear forward operator `A`.
#[derive(Debug, Clone, PartialEq)]
pub enum ForwardOperator {
    /// `A = I` on `dim` coordinates.
    Identity { dim: usize },
    /// Keeps the coordinates flagged `true`; the output is the reduced
    /// vector of kept coordinates.
    Mask { keep: Vec<bool> },
    /// Means over consecutive blocks of `factor` coordinates.
    Downsample { dim: usize, factor: usize },
}

impl ForwardOperator {
    /// Identity operator on `dim` coordinates.
    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("observation.dim: must be positive"));
        }
        Ok(ForwardOperator::Identity { dim })
    }

    /// Masking operator keeping the flagged coordinates.
    pub fn mask(keep: Vec<bool>) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::config("observation.keep: mask must not be empty"));
        }
        if !keep.iter().any(|&k| k) {
            return Err(Error::config(
                "observation.keep: mask must keep at least one coordinate",
            ));
        }
        Ok(ForwardOperator::Mask { keep })
    }

    /// Block-mean downsampling by `factor`, which must divide `dim`.
    pub fn downsample(dim: usize, factor: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("observation.dim: must be positive"));
        }
        if factor == 0 || !dim.is_multiple_of(factor) {
            return Err(Error::config(format!(
                "observation.factor: {factor} must be positive and divide the input dimension {dim}"
            )));
        }
        Ok(ForwardOperator::Downsample { dim, factor })
    }

    /// Dimension of the operator's domain.
    pub fn input_dim(&self) -> usize {
        match self {
            ForwardOperator::Identity { dim } => *dim,
            ForwardOperator::Mask { keep } => keep.len(),
            ForwardOperator::Downsample { dim, .. } => *dim,
        }
    }

    /// Dimension of the operator's range.
    pub fn output_dim(&self) -> usize {
        match self {
            ForwardOperator::Identity { dim } => *dim,
            ForwardOperator::Mask { keep } => keep.iter().filter(|&&k| k).count(),
            ForwardOperator::Downsample { dim, factor } => dim / factor,
        }
    }

    /// `A x`.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "apply: x has dimension {} but the operator input dimension is {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(match self {
            ForwardOperator::Identity { .. } => x.clone(),
            ForwardOperator::Mask { keep } => DVector::from_iterator(
                self.output_dim(),
                x.iter().zip(keep).filter(|(_, &k)| k).map(|(v, _)| *v),
            ),
            ForwardOperator::Downsample { factor, .. } => {
                let out = self.output_dim();
                DVector::from_fn(out, |k, _| {
                    (0..*factor).map(|j| x[k * factor + j]).sum::<f64>() / *factor as f64
                })
            }
        })
    }

    /// Exact adjoint `Aᵀ u`: identity passes through, masking zero-fills
    /// the dropped coordinates, downsampling replicates `u_k / factor`
    /// across each block.
    pub fn adjoint(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.output_dim() {
            return Err(Error::shape(format!(
                "adjoint: u has dimension {} but the operator output dimension is {}",
                u.len(),
                self.output_dim()
            )));
        }
        Ok(match self {
            ForwardOperator::Identity { .. } => u.clone(),
            ForwardOperator::Mask { keep } => {
                let mut full = DVector::zeros(keep.len());
                let mut next = 0;
                for (i, &k) in keep.iter().enumerate() {
                    if k {
                        full[i] = u[next];
                        next += 1;
                    }
                }
                full
            }
            ForwardOperator::Downsample { dim, factor } => {
                DVector::from_fn(*dim, |i, _| u[i / factor] / *factor as f64)
            }
        })
    }

    /// Dense matrix representation of `A` (rows are `A` applied to basis
    /// vectors), used by the closed-form posterior oracles.
    pub fn matrix(&self) -> DMatrix<f64> {
        let (rows, cols) = (self.output_dim(), self.input_dim());
        let mut a = DMatrix::zeros(rows, cols);
        for j in 0..cols {
            let mut e = DVector::zeros(cols);
            e[j] = 1.0;
            let col = self
                .apply(&e)
                .expect("basis vector has the operator input dimension");
            a.set_column(j, &col);
        }
        a
    }
}

/// Observation `y = A x_true + σ_y ξ` with known noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    pub op: ForwardOperator,
    pub y: DVector<f64>,
    pub sigma_y: f64,
}

impl ObservationModel {
    /// Wraps an existing observation vector.
    pub fn new(op: ForwardOperator, y: DVector<f64>, sigma_y: f64) -> Result<Self> {
        if y.len() != op.output_dim() {
            return Err(Error::shape(format!(
                "observation.y: has dimension {} but the operator output dimension is {}",
                y.len(),
                op.output_dim()
            )));
        }
        linalg::check_finite("observation.y", &y)?;
        if !(sigma_y.is_finite() && sigma_y > 0.0) {
            return Err(Error::config(format!(
                "observation.sigma_y: must be a positive finite real, got {sigma_y}"
            )));
        }
        Ok(ObservationModel { op, y, sigma_y })
    }

    /// Draws a synthetic observation of `x_true` through `op`.
    pub fn observe<R: Rng>(
        op: ForwardOperator,
        x_true: &DVector<f64>,
        sigma_y: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let clean = op.apply(x_true)?;
        let noise = DVector::from_fn(clean.len(), |_, _| StandardNormal.sample(rng));
        ObservationModel::new(op, clean + noise * sigma_y, sigma_y)
    }

    /// Log-likelihood gradient `Aᵀ(y − A x)/σ_y²`.
    pub fn likelihood_grad(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let residual = &self.y - self.op.apply(x)?;
        Ok(self.op.adjoint(&residual)? / (self.sigma_y * self.sigma_y))
    }

    /// Negative log-likelihood up to its constant: `‖y − A x‖²/(2σ_y²)`.
    pub fn neg_log_likelihood(&self, x: &DVector<f64>) -> Result<f64> {
        let residual = &self.y - self.op.apply(x)?;
        Ok(residual.norm_squared() / (2.0 * self.sigma_y * self.sigma_y))
    }
}
