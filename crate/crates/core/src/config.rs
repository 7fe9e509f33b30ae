//! TOML experiment descriptions.
//!
//! A config file is a handful of blocks — `[schedule]`, `[prior]`,
//! `[autoencoder]`, optional `[observation]`, `[flow]`, `[output]` — that
//! together describe one runnable problem. Parsing is strict (unknown
//! keys are rejected), every random element carries an explicit seed, and
//! [`ExperimentConfig::build`] validates all cross-block dimension
//! constraints before any computation, reporting offending field paths.
//! Configs round-trip: parse → serialize → parse yields an identical
//! value.

use crate::autoencoder::LinearAutoencoder;
use crate::error::{Error, Result};
use crate::flow::{FlowConfig, Optimizer, Problem};
use crate::observation::{ForwardOperator, ObservationModel};
use crate::prior::{GaussianComponent, GaussianMixture};
use crate::schedule::Schedule;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Top-level experiment description, one per TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub schedule: ScheduleBlock,
    pub prior: PriorBlock,
    pub autoencoder: AutoencoderBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<ObservationBlock>,
    #[serde(default)]
    pub flow: FlowBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// `[schedule]`: the variance-preserving grid and the weighting constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleBlock {
    #[serde(default = "d_t_max")]
    pub t_max: usize,
    #[serde(default = "d_beta_min")]
    pub beta_min: f64,
    #[serde(default = "d_beta_max")]
    pub beta_max: f64,
    /// Weighting constant `c` in `w(s) = c σ_s²/α_s`.
    #[serde(default = "d_c")]
    pub c: f64,
}

impl Default for ScheduleBlock {
    fn default() -> Self {
        ScheduleBlock {
            t_max: d_t_max(),
            beta_min: d_beta_min(),
            beta_max: d_beta_max(),
            c: d_c(),
        }
    }
}

/// `[prior]`: either an explicit component list or a seeded generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<ComponentSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeded: Option<SeededPriorSpec>,
}

/// One `[[prior.components]]` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major covariance.
    pub cov: Vec<Vec<f64>>,
}

/// `[prior.seeded]`: deterministic random mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeededPriorSpec {
    pub dim: usize,
    pub components: usize,
    pub seed: u64,
}

/// `[autoencoder]`: decoder, encoder choice, and noise scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencoderBlock {
    pub rho: f64,
    /// `"exact"` (conjugate posterior-mean encoder under the moment-matched
    /// prior), `"pseudoinverse"`, or an explicit `{ w, b }` table.
    #[serde(default)]
    pub encoder: EncoderSpec,
    pub decoder: DecoderSpec,
}

/// Encoder selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EncoderSpec {
    Named(EncoderKind),
    Explicit { w: Vec<Vec<f64>>, b: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Exact,
    Pseudoinverse,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec::Named(EncoderKind::Exact)
    }
}

/// `[autoencoder.decoder]`: explicit affine map or seeded generation
/// (standard-normal weights, zero bias; the latent dimension comes from
/// the prior).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecoderSpec {
    Explicit { w: Vec<Vec<f64>>, b: Vec<f64> },
    Seeded { seed: u64, d_x: usize },
}

/// `[observation]`: forward operator, noise level, data, and optional
/// ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationBlock {
    pub kind: OperatorKind,
    /// Mask pattern over observation coordinates; `kind = "mask"` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep: Option<Vec<bool>>,
    /// Averaging factor; `kind = "downsample"` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<usize>,
    pub sigma_y: f64,
    pub y: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_true: Option<VectorSource>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Identity,
    Mask,
    Downsample,
}

/// Where the observation vector comes from: inline values, a CSV file
/// (resolved relative to the config file), or generated as
/// `A x_true + σ_y ξ` with a seeded noise draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Values(Vec<f64>),
    Csv(String),
    Generate { seed: u64 },
}

/// Inline values or a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorSource {
    Values(Vec<f64>),
    Csv(String),
}

/// `[flow]`: particle-flow hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowBlock {
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_lambda_hat")]
    pub lambda_hat: f64,
    #[serde(default = "d_n_particles")]
    pub n_particles: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub shared_decode_noise: bool,
    #[serde(default)]
    pub trace: bool,
    // Last field: TOML requires key/value pairs before sub-tables, and
    // the optimizer serializes as one.
    #[serde(default)]
    pub optimizer: OptimizerSpec,
}

impl Default for FlowBlock {
    fn default() -> Self {
        FlowBlock {
            gamma: d_gamma(),
            lambda_hat: d_lambda_hat(),
            n_particles: d_n_particles(),
            seed: 0,
            shared_decode_noise: false,
            trace: false,
            optimizer: OptimizerSpec::default(),
        }
    }
}

/// `[flow.optimizer]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerSpec {
    Euler {
        step_size: f64,
    },
    Adam {
        #[serde(default = "d_lr")]
        lr: f64,
        #[serde(default = "d_beta1")]
        beta1: f64,
        #[serde(default = "d_beta2")]
        beta2: f64,
        #[serde(default = "d_eps_hat")]
        eps_hat: f64,
    },
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec::Adam {
            lr: d_lr(),
            beta1: d_beta1(),
            beta2: d_beta2(),
            eps_hat: d_eps_hat(),
        }
    }
}

/// `[output]`: artifact directory and metric selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "d_dir")]
    pub dir: String,
    /// Peak value used for PSNR.
    #[serde(default = "d_psnr_peak")]
    pub psnr_peak: f64,
    /// Which metric families to write into `metrics.csv`.
    #[serde(default = "d_metrics")]
    pub metrics: Vec<MetricKind>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            dir: d_dir(),
            psnr_peak: d_psnr_peak(),
            metrics: d_metrics(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Psnr,
    Ensemble,
}

fn d_t_max() -> usize {
    999
}
fn d_beta_min() -> f64 {
    0.1
}
fn d_beta_max() -> f64 {
    20.0
}
fn d_c() -> f64 {
    0.5
}
fn d_gamma() -> f64 {
    0.15
}
fn d_lambda_hat() -> f64 {
    0.1
}
fn d_n_particles() -> usize {
    4
}
fn d_lr() -> f64 {
    1.0
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_eps_hat() -> f64 {
    1e-8
}
fn d_dir() -> String {
    "out".to_string()
}
fn d_psnr_peak() -> f64 {
    1.0
}
fn d_metrics() -> Vec<MetricKind> {
    vec![MetricKind::Psnr, MetricKind::Ensemble]
}

/// A validated, runnable experiment built from a config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub problem: Problem,
    pub flow: FlowConfig,
    pub output: OutputBlock,
    /// Ground truth for metrics when the config provides one.
    pub x_true: Option<DVector<f64>>,
}

impl ExperimentConfig {
    /// Parses a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("config parse error: {e}")))
    }

    /// Serializes back to TOML.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("config serialize error: {e}")))
    }

    /// Reads and parses a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Validates everything and assembles the runnable problem.
    /// `base_dir` anchors relative CSV paths (use the config file's
    /// directory).
    pub fn build(&self, base_dir: &Path) -> Result<Experiment> {
        let schedule = Schedule::new(
            self.schedule.t_max,
            self.schedule.beta_min,
            self.schedule.beta_max,
        )?;
        let prior = self.build_prior()?;
        let autoencoder = self.build_autoencoder(&prior)?;
        let observation = match &self.observation {
            Some(block) => Some(self.build_observation(block, &autoencoder, base_dir)?),
            None => None,
        };
        let x_true = match self.observation.as_ref().and_then(|o| o.x_true.as_ref()) {
            Some(src) => {
                let v = resolve_vector("observation.x_true", src, base_dir)?;
                let d_x = autoencoder.dims().0;
                if v.len() != d_x {
                    return Err(Error::shape(format!(
                        "observation.x_true: has dimension {} but autoencoder.decoder produces dimension {d_x}",
                        v.len()
                    )));
                }
                Some(v)
            }
            None => None,
        };
        if !(self.output.psnr_peak.is_finite() && self.output.psnr_peak > 0.0) {
            return Err(Error::config(format!(
                "output.psnr_peak: must be a positive finite real, got {}",
                self.output.psnr_peak
            )));
        }
        let flow = FlowConfig {
            gamma: self.flow.gamma,
            lambda_hat: self.flow.lambda_hat,
            c: self.schedule.c,
            n_particles: self.flow.n_particles,
            optimizer: match self.flow.optimizer {
                OptimizerSpec::Euler { step_size } => Optimizer::Euler { step_size },
                OptimizerSpec::Adam {
                    lr,
                    beta1,
                    beta2,
                    eps_hat,
                } => Optimizer::Adam {
                    lr,
                    beta1,
                    beta2,
                    eps_hat,
                },
            },
            seed: self.flow.seed,
            shared_decode_noise: self.flow.shared_decode_noise,
            trace: self.flow.trace,
        };
        flow.validate()?;
        let problem = Problem {
            schedule,
            prior,
            autoencoder,
            observation,
        };
        problem.validate()?;
        Ok(Experiment {
            problem,
            flow,
            output: self.output.clone(),
            x_true,
        })
    }

    fn build_prior(&self) -> Result<GaussianMixture> {
        match (&self.prior.components, &self.prior.seeded) {
            (Some(components), None) => {
                let specs = components
                    .iter()
                    .enumerate()
                    .map(|(i, spec)| {
                        Ok(GaussianComponent {
                            weight: spec.weight,
                            mean: DVector::from_vec(spec.mean.clone()),
                            cov: matrix_from_rows(
                                &format!("prior.components[{i}].cov"),
                                &spec.cov,
                            )?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                GaussianMixture::new(specs)
            }
            (None, Some(seeded)) => {
                GaussianMixture::seeded(seeded.dim, seeded.components, seeded.seed)
            }
            _ => Err(Error::config(
                "prior: specify exactly one of prior.components and prior.seeded",
            )),
        }
    }

    fn build_autoencoder(&self, prior: &GaussianMixture) -> Result<LinearAutoencoder> {
        let d_z = prior.dim();
        let (w, b) = match &self.autoencoder.decoder {
            DecoderSpec::Explicit { w, b } => {
                let w = matrix_from_rows("autoencoder.decoder.w", w)?;
                if w.ncols() != d_z {
                    return Err(Error::shape(format!(
                        "autoencoder.decoder.w: has {} columns but the prior dimension is {d_z}",
                        w.ncols()
                    )));
                }
                (w, DVector::from_vec(b.clone()))
            }
            DecoderSpec::Seeded { seed, d_x } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let w: DMatrix<f64> =
                    DMatrix::from_fn(*d_x, d_z, |_, _| StandardNormal.sample(&mut rng));
                (w, DVector::zeros(*d_x))
            }
        };
        let rho = self.autoencoder.rho;
        match &self.autoencoder.encoder {
            EncoderSpec::Named(EncoderKind::Exact) => {
                let (mean, cov) = prior.mean_cov();
                LinearAutoencoder::exact(w, b, rho, &mean, &cov)
            }
            EncoderSpec::Named(EncoderKind::Pseudoinverse) => {
                LinearAutoencoder::pseudoinverse(w, b, rho)
            }
            EncoderSpec::Explicit { w: enc_w, b: enc_b } => LinearAutoencoder::new(
                w,
                b,
                rho,
                matrix_from_rows("autoencoder.encoder.w", enc_w)?,
                DVector::from_vec(enc_b.clone()),
            ),
        }
    }

    fn build_observation(
        &self,
        block: &ObservationBlock,
        ae: &LinearAutoencoder,
        base_dir: &Path,
    ) -> Result<ObservationModel> {
        let d_x = ae.dims().0;
        if block.keep.is_some() && block.kind != OperatorKind::Mask {
            return Err(Error::config(
                "observation.keep: only valid for kind = \"mask\"",
            ));
        }
        if block.factor.is_some() && block.kind != OperatorKind::Downsample {
            return Err(Error::config(
                "observation.factor: only valid for kind = \"downsample\"",
            ));
        }
        let op = match block.kind {
            OperatorKind::Identity => ForwardOperator::identity(d_x)?,
            OperatorKind::Mask => {
                let keep = block.keep.clone().ok_or_else(|| {
                    Error::config("observation.keep: required for kind = \"mask\"")
                })?;
                if keep.len() != d_x {
                    return Err(Error::shape(format!(
                        "observation.keep: has {} entries but autoencoder.decoder produces dimension {d_x}",
                        keep.len()
                    )));
                }
                ForwardOperator::mask(keep)?
            }
            OperatorKind::Downsample => {
                let factor = block.factor.ok_or_else(|| {
                    Error::config("observation.factor: required for kind = \"downsample\"")
                })?;
                ForwardOperator::downsample(d_x, factor)?
            }
        };
        match &block.y {
            DataSource::Values(values) => {
                ObservationModel::new(op, DVector::from_vec(values.clone()), block.sigma_y)
            }
            DataSource::Csv(path) => {
                let y = read_vector_csv(&base_dir.join(path))?;
                ObservationModel::new(op, y, block.sigma_y)
            }
            DataSource::Generate { seed } => {
                let src = block.x_true.as_ref().ok_or_else(|| {
                    Error::config("observation.y: generate requires observation.x_true to be set")
                })?;
                let x_true = resolve_vector("observation.x_true", src, base_dir)?;
                if x_true.len() != d_x {
                    return Err(Error::shape(format!(
                        "observation.x_true: has dimension {} but autoencoder.decoder produces dimension {d_x}",
                        x_true.len()
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                ObservationModel::observe(op, &x_true, block.sigma_y, &mut rng)
            }
        }
    }
}

fn matrix_from_rows(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::shape(format!(
            "{field}: matrix must have at least one row"
        )));
    }
    let cols = rows[0].len();
    if cols == 0 {
        return Err(Error::shape(format!("{field}: rows must be nonempty")));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::shape(format!(
                "{field}: row {i} has {} entries but row 0 has {cols}",
                row.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn resolve_vector(field: &str, src: &VectorSource, base_dir: &Path) -> Result<DVector<f64>> {
    match src {
        VectorSource::Values(values) => Ok(DVector::from_vec(values.clone())),
        VectorSource::Csv(path) => read_vector_csv(&base_dir.join(path))
            .map_err(|e| Error::config(format!("{field}: {e}"))),
    }
}

/// Reads a headerless CSV of numbers, flattening all rows and columns
/// into one vector (so both row and column layouts work).
pub fn read_vector_csv(path: &Path) -> Result<DVector<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        for field in record.iter() {
            let trimmed = field.trim();
            if trimmed.is_empty() {
                continue;
            }
            values.push(trimmed.parse::<f64>().map_err(|_| {
                Error::config(format!("{}: {trimmed:?} is not a number", path.display()))
            })?);
        }
    }
    if values.is_empty() {
        return Err(Error::config(format!(
            "{}: contains no numbers",
            path.display()
        )));
    }
    Ok(DVector::from_vec(values))
}
