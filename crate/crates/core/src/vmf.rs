//! Class-conditional von Mises-Fisher classification on the unit
//! hypersphere.
//!
//! Each class c is a single vMF component with mean direction `mu_c` and
//! concentration `kappa_c` estimated from its sample's mean resultant
//! length. Scoring uses the exponentially-scaled log-Bessel form of the
//! normalizer so large concentrations never overflow.

use crate::bessel::{bessel_i_naive, log_bessel_i};
use crate::distance::norm_f64;
use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use crate::parallel::map_indexed;

/// Mean resultant lengths are clamped below this, keeping the kappa
/// estimate finite for single-point or duplicated classes.
pub const R_BAR_CLAMP: f64 = 1.0 - 1e-6;

/// Tolerance on the unit-norm requirement for scored vectors.
pub const UNIT_NORM_TOL: f64 = 1e-4;

/// Per-class vMF parameters with a shared (by default uniform) prior.
#[derive(Debug, Clone)]
pub struct VmfModel {
    classes: Vec<String>,
    dim: usize,
    /// Row-major C×D, row c = unit mean direction of class c.
    mu: Vec<f64>,
    kappa: Vec<f64>,
    log_prior: Vec<f64>,
    /// log C_D(kappa_c), cached at fit time.
    log_norm: Vec<f64>,
}

impl VmfModel {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kappa(&self, class: usize) -> f64 {
        self.kappa[class]
    }

    pub fn mean_direction(&self, class: usize) -> &[f64] {
        &self.mu[class * self.dim..(class + 1) * self.dim]
    }

    /// Replace the uniform prior. Values are log-probabilities; they are
    /// shifted to normalize, which leaves the argmax unchanged.
    pub fn with_log_prior(mut self, log_prior: Vec<f64>) -> Result<Self> {
        if log_prior.len() != self.classes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} priors for {} classes",
                log_prior.len(),
                self.classes.len()
            )));
        }
        let max = log_prior.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let log_z = max
            + log_prior
                .iter()
                .map(|&v| (v - max).exp())
                .sum::<f64>()
                .ln();
        self.log_prior = log_prior.iter().map(|&v| v - log_z).collect();
        Ok(self)
    }
}

/// `log C_D(kappa)` via the scaled log-Bessel path; finite for any
/// `kappa > 0` and `D >= 2`.
pub fn log_normalizer(dim: usize, kappa: f64) -> f64 {
    let nu = dim as f64 / 2.0 - 1.0;
    nu * kappa.ln()
        - (dim as f64 / 2.0) * (2.0 * std::f64::consts::PI).ln()
        - log_bessel_i(nu, kappa)
}

/// Reference normalizer that computes `I_nu(kappa)` in linear space before
/// taking the log. Overflows for large kappa; used to validate the scaled
/// path where both are safe.
pub fn log_normalizer_naive(dim: usize, kappa: f64) -> f64 {
    let nu = dim as f64 / 2.0 - 1.0;
    nu * kappa.ln()
        - (dim as f64 / 2.0) * (2.0 * std::f64::consts::PI).ln()
        - bessel_i_naive(nu, kappa).ln()
}

/// Concentration from the mean resultant length:
/// `kappa = r (D - r^2) / (1 - r^2)` with `r` pre-clamped.
pub fn kappa_from_resultant(r_bar: f64, dim: usize) -> f64 {
    let r = r_bar.min(R_BAR_CLAMP);
    r * (dim as f64 - r * r) / (1.0 - r * r)
}

fn check_unit(v: &[f32], what: &str) -> Result<()> {
    let n = norm_f64(v);
    if (n - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::InvalidParameter(format!(
            "{what} must be unit-norm (|v| = {n:.6})"
        )));
    }
    Ok(())
}

/// Fit one vMF component per class from unit-norm rows. Classes keep the
/// order given. A class whose rows average to the zero vector has no mean
/// direction and is rejected.
pub fn vmf_fit(groups: &[(String, EmbeddingMatrix)]) -> Result<VmfModel> {
    if groups.is_empty() {
        return Err(Error::DegenerateInput("no classes to fit".into()));
    }
    let dim = groups[0].1.cols();
    if dim < 2 {
        return Err(Error::InvalidParameter(
            "vMF needs embedding dimension >= 2".into(),
        ));
    }
    let c = groups.len();
    let mut mu = Vec::with_capacity(c * dim);
    let mut kappa = Vec::with_capacity(c);
    let mut classes = Vec::with_capacity(c);
    for (label, x) in groups {
        if x.cols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "class {label:?} has dimension {}, expected {dim}",
                x.cols()
            )));
        }
        if x.rows() == 0 {
            return Err(Error::DegenerateInput(format!("class {label:?} is empty")));
        }
        for (i, row) in x.iter_rows().enumerate() {
            check_unit(row, &format!("row {i} of class {label:?}"))?;
        }
        let mut mean = vec![0.0f64; dim];
        for row in x.iter_rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v as f64;
            }
        }
        for m in &mut mean {
            *m /= x.rows() as f64;
        }
        let r_bar = mean.iter().map(|&v| v * v).sum::<f64>().sqrt();
        if r_bar == 0.0 {
            return Err(Error::DegenerateInput(format!(
                "class {label:?} has zero mean resultant"
            )));
        }
        kappa.push(kappa_from_resultant(r_bar, dim));
        mu.extend(mean.iter().map(|&v| v / r_bar));
        classes.push(label.clone());
    }
    let log_prior = vec![-(c as f64).ln(); c];
    let log_norm = kappa.iter().map(|&k| log_normalizer(dim, k)).collect();
    Ok(VmfModel {
        classes,
        dim,
        mu,
        kappa,
        log_prior,
        log_norm,
    })
}

/// Per-class log-posterior scores (up to a shared constant):
/// `kappa_c mu_c . x + log C_D(kappa_c) + log p(c)`.
pub fn vmf_log_posterior(model: &VmfModel, x: &[f32]) -> Result<Vec<f64>> {
    if x.len() != model.dim {
        return Err(Error::DimensionMismatch(format!(
            "vector has dimension {}, model expects {}",
            x.len(),
            model.dim
        )));
    }
    check_unit(x, "scored vector")?;
    Ok((0..model.classes.len())
        .map(|c| {
            let mu = model.mean_direction(c);
            let dot: f64 = mu.iter().zip(x).map(|(m, &v)| m * v as f64).sum();
            model.kappa[c] * dot + model.log_norm[c] + model.log_prior[c]
        })
        .collect())
}

/// Argmax class per row, ties broken toward the lowest class index.
/// Returns `(class index, per-class log scores)` for each row.
pub fn vmf_classify(model: &VmfModel, x: &EmbeddingMatrix) -> Result<Vec<(usize, Vec<f64>)>> {
    if x.cols() != model.dim {
        return Err(Error::DimensionMismatch(format!(
            "matrix has dimension {}, model expects {}",
            x.cols(),
            model.dim
        )));
    }
    for (i, row) in x.iter_rows().enumerate() {
        check_unit(row, &format!("row {i}"))?;
    }
    let results = map_indexed(x.rows(), |i| {
        let scores = vmf_log_posterior(model, x.row(i)).expect("validated above");
        let mut best = 0usize;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        (best, scores)
    });
    Ok(results)
}
