//! Embedding generation from a trained model: Euler ODE integration,
//! classifier-free guidance, and local (perturb-and-denoise) sampling.
//!
//! Time convention: training interpolates `x_t = t x0 + (1-t) x1` with the
//! velocity target `v* = x1 - x0`, so noise sits at `t = 1` and data at
//! `t = 0`. Integration therefore starts from Gaussian noise at `t = 1`
//! and steps `x += dt * v` while the time input decreases to 0, matching
//! the `(x_t, t)` pairing the network saw during training.

use crate::error::{Error, Result};
use crate::flow::FlowModel;
use crate::matrix::EmbeddingMatrix;
use crate::num::{c, Mat, Real};
use crate::rng::{stream_rng, StreamDomain};
use rand::Rng;
use rand_distr::StandardNormal;

/// Inference knobs.
#[derive(Debug, Clone)]
pub struct SampleConfig {
    pub n_samples: usize,
    /// Euler steps over the full noise-to-data interval.
    pub euler_steps: usize,
    /// Classifier-free guidance scale; 1 = conditional only.
    pub guidance_scale: f64,
    /// Start time for local sampling, in [0, 1]; `None` = full generation.
    pub local_start_time: Option<f64>,
    pub seed: u64,
    /// Offset added to each sample's stream index. Sample i draws its
    /// noise from stream `offset + i`, so split runs tile one big run.
    pub stream_offset: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n_samples: 1,
            euler_steps: 10,
            guidance_scale: 1.0,
            local_start_time: None,
            seed: 0,
            stream_offset: 0,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.euler_steps == 0 {
            return Err(Error::InvalidParameter(
                "n_samples and euler_steps must be >= 1".into(),
            ));
        }
        if let Some(t0) = self.local_start_time {
            if !(0.0..=1.0).contains(&t0) {
                return Err(Error::InvalidParameter(format!(
                    "local start time {t0} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// A batched velocity field; every row integrates under the same time.
pub trait VelocityField<T: Real> {
    fn velocity(&self, x: &Mat<T>, t: T) -> Result<Mat<T>>;
}

/// Guided velocity:
/// `v_uncond(x, t, 0) + lambda (v_cond(x, t, c) - v_uncond(x, t, 0))`,
/// collapsing to exactly one forward pass at lambda = 0 or 1.
pub fn guided_velocity<T: Real>(
    model: &FlowModel<T>,
    x: &Mat<T>,
    t: T,
    cond_row: Option<&[T]>,
    lambda: f64,
) -> Result<Mat<T>> {
    let ts = vec![t; x.rows()];
    let cond = cond_row.map(|row| broadcast_rows(row, x.rows()));
    if lambda == 1.0 {
        return model.forward(x, &ts, cond.as_ref());
    }
    if lambda == 0.0 {
        return model.forward(x, &ts, None);
    }
    let v_uncond = model.forward(x, &ts, None)?;
    let v_cond = model.forward(x, &ts, cond.as_ref())?;
    let lam: T = c(lambda);
    let mut out = v_uncond.clone();
    for (o, (&vc, &vu)) in out
        .as_mut_slice()
        .iter_mut()
        .zip(v_cond.as_slice().iter().zip(v_uncond.as_slice()))
    {
        *o = vu + lam * (vc - vu);
    }
    Ok(out)
}

fn broadcast_rows<T: Real>(row: &[T], n: usize) -> Mat<T> {
    let mut m = Mat::zeros(n, row.len());
    for i in 0..n {
        m.row_mut(i).copy_from_slice(row);
    }
    m
}

struct GuidedField<'a, T: Real> {
    model: &'a FlowModel<T>,
    cond_row: Option<Vec<T>>,
    lambda: f64,
}

impl<T: Real> VelocityField<T> for GuidedField<'_, T> {
    fn velocity(&self, x: &Mat<T>, t: T) -> Result<Mat<T>> {
        guided_velocity(self.model, x, t, self.cond_row.as_deref(), self.lambda)
    }
}

/// Integrate `x += dt * v(x, t)` from `t_start` down to 0 in `steps`
/// uniform steps, feeding the current (decreasing) time to the field.
pub fn integrate_euler<T: Real, F: VelocityField<T>>(
    field: &F,
    mut x: Mat<T>,
    t_start: f64,
    steps: usize,
) -> Result<Mat<T>> {
    if steps == 0 {
        return Ok(x);
    }
    let dt: T = c(t_start / steps as f64);
    for k in 0..steps {
        let t: T = c(t_start - k as f64 * (t_start / steps as f64));
        let v = field.velocity(&x, t)?;
        for (xv, &vv) in x.as_mut_slice().iter_mut().zip(v.as_slice()) {
            *xv += dt * vv;
        }
        if !x.all_finite() {
            return Err(Error::Sampling(format!(
                "state became non-finite at step {} of {}",
                k + 1,
                steps
            )));
        }
    }
    Ok(x)
}

fn gaussian_rows<T: Real>(n: usize, d: usize, seed: u64, offset: u64) -> Mat<T> {
    let mut x = Mat::zeros(n, d);
    for i in 0..n {
        let mut rng = stream_rng(seed, StreamDomain::Sample, offset + i as u64);
        for v in x.row_mut(i) {
            let z: f64 = rng.sample(StandardNormal);
            *v = c(z);
        }
    }
    x
}

fn destandardize<T: Real>(x: &Mat<T>, model: &FlowModel<T>) -> Result<EmbeddingMatrix> {
    let stats = &model.standardize;
    let d = x.cols();
    let mut data = Vec::with_capacity(x.rows() * d);
    for i in 0..x.rows() {
        let row = x.row(i);
        for j in 0..d {
            data.push((row[j].to_f64() * stats.std[j] as f64 + stats.mean[j] as f64) as f32);
        }
    }
    EmbeddingMatrix::new(x.rows(), d, data)
}

fn check_cond_dim<T: Real>(model: &FlowModel<T>, cond_row: Option<&[T]>) -> Result<()> {
    if let Some(row) = cond_row {
        if row.len() != model.arch.cond_dim {
            return Err(Error::DimensionMismatch(format!(
                "condition has dimension {}, model expects {}",
                row.len(),
                model.arch.cond_dim
            )));
        }
    }
    Ok(())
}

/// Generate `n_samples` embeddings by integrating the guided velocity
/// field from independent Gaussian noise. Output is de-standardized into
/// the original embedding space.
pub fn euler_generate<T: Real>(
    model: &FlowModel<T>,
    cond_row: Option<&[T]>,
    cfg: &SampleConfig,
) -> Result<EmbeddingMatrix> {
    cfg.validate()?;
    check_cond_dim(model, cond_row)?;
    let field = GuidedField {
        model,
        cond_row: cond_row.map(|r| r.to_vec()),
        lambda: cfg.guidance_scale,
    };
    let x0 = gaussian_rows::<T>(cfg.n_samples, model.arch.input_dim, cfg.seed, cfg.stream_offset);
    let x = integrate_euler(&field, x0, 1.0, cfg.euler_steps)?;
    destandardize(&x, model)
}

/// Sample around an existing embedding: standardize the query, mix it
/// with fresh noise at `t0` using the training interpolation rule, and
/// integrate the remaining time down to data with `ceil(steps * t0)`
/// Euler steps (at least one). `t0 = 0` returns the query exactly.
pub fn local_sample<T: Real>(
    model: &FlowModel<T>,
    x_query: &[f32],
    cond_row: Option<&[T]>,
    cfg: &SampleConfig,
) -> Result<EmbeddingMatrix> {
    cfg.validate()?;
    check_cond_dim(model, cond_row)?;
    let t0 = cfg
        .local_start_time
        .ok_or_else(|| Error::InvalidParameter("local_sample needs a local start time".into()))?;
    let d = model.arch.input_dim;
    if x_query.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "query has dimension {}, model expects {}",
            x_query.len(),
            d
        )));
    }
    if t0 == 0.0 {
        let mut data = Vec::with_capacity(cfg.n_samples * d);
        for _ in 0..cfg.n_samples {
            data.extend_from_slice(x_query);
        }
        return EmbeddingMatrix::new(cfg.n_samples, d, data);
    }
    let stats = &model.standardize;
    let q_std: Vec<T> = (0..d)
        .map(|j| c((x_query[j] as f64 - stats.mean[j] as f64) / stats.std[j] as f64))
        .collect();
    let noise = gaussian_rows::<T>(cfg.n_samples, d, cfg.seed, cfg.stream_offset);
    let mut x = Mat::zeros(cfg.n_samples, d);
    let t0_t: T = c(t0);
    for i in 0..cfg.n_samples {
        let nrow = noise.row(i);
        let xrow = x.row_mut(i);
        for j in 0..d {
            xrow[j] = t0_t * nrow[j] + (T::ONE - t0_t) * q_std[j];
        }
    }
    let steps = ((cfg.euler_steps as f64 * t0).ceil() as usize).max(1);
    let field = GuidedField {
        model,
        cond_row: cond_row.map(|r| r.to_vec()),
        lambda: cfg.guidance_scale,
    };
    let x = integrate_euler(&field, x, t0, steps)?;
    destandardize(&x, model)
}

/// Advisory emitted when guidance is asked to extrapolate with an
/// unconditional branch the model never trained.
pub fn guidance_warning<T: Real>(
    model: &FlowModel<T>,
    lambda: f64,
    conditioned: bool,
) -> Option<String> {
    if conditioned && lambda != 1.0 && model.cond_dropout_used == 0.0 {
        Some(format!(
            "guidance scale {lambda} uses the unconditional branch, but the model \
             was trained without condition dropout; that branch is untrained"
        ))
    } else {
        None
    }
}
