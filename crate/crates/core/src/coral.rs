//! Correlation alignment: a linear map matching the first and second
//! moments of a source distribution to a target distribution, followed by
//! re-normalization onto the unit hypersphere.

use crate::error::{Error, Result};
use crate::linalg::{mat_mul, sym_matrix_power, symmetry_defect};
use crate::matrix::EmbeddingMatrix;

/// Shrinkage added to both covariances before the matrix powers, so
/// rank-deficient sample covariances stay invertible.
pub const COV_SHRINKAGE: f64 = 1e-6;

/// Fitted alignment: `aligned = (x - mu_s) C_s^{-1/2} C_r^{1/2} + mu_r`.
#[derive(Debug, Clone)]
pub struct CoralModel {
    pub mu_source: Vec<f64>,
    pub mu_target: Vec<f64>,
    /// D×D whitening factor `C_s^{-1/2}`.
    pub whiten: Vec<f64>,
    /// D×D coloring factor `C_r^{1/2}`.
    pub color: Vec<f64>,
    pub dim: usize,
}

fn normalized_rows_f64(x: &EmbeddingMatrix) -> Result<Vec<f64>> {
    let d = x.cols();
    let mut out = Vec::with_capacity(x.rows() * d);
    for (i, row) in x.iter_rows().enumerate() {
        let norm: f64 = row
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateInput(format!("row {i} is the zero vector")));
        }
        out.extend(row.iter().map(|&v| v as f64 / norm));
    }
    Ok(out)
}

fn mean_of(rows: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut mean = vec![0.0f64; d];
    for i in 0..n {
        for j in 0..d {
            mean[j] += rows[i * d + j];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    mean
}

// Sample covariance with divisor n-1, plus shrinkage on the diagonal.
fn covariance(rows: &[f64], mean: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut cov = vec![0.0f64; d * d];
    for i in 0..n {
        for a in 0..d {
            let ca = rows[i * d + a] - mean[a];
            if ca == 0.0 {
                continue;
            }
            let crow = &mut cov[a * d..(a + 1) * d];
            for b in 0..d {
                crow[b] += ca * (rows[i * d + b] - mean[b]);
            }
        }
    }
    let denom = ((n as f64) - 1.0).max(1.0);
    for v in &mut cov {
        *v /= denom;
    }
    for a in 0..d {
        cov[a * d + a] += COV_SHRINKAGE;
    }
    cov
}

/// Fit the alignment from source rows to target rows. Both inputs are
/// row-normalized onto the unit sphere first.
pub fn coral_fit(source: &EmbeddingMatrix, target: &EmbeddingMatrix) -> Result<CoralModel> {
    if source.cols() != target.cols() {
        return Err(Error::DimensionMismatch(format!(
            "source dimension {} != target dimension {}",
            source.cols(),
            target.cols()
        )));
    }
    if source.rows() < 2 || target.rows() < 2 {
        return Err(Error::DegenerateInput(
            "coral_fit needs >= 2 rows on each side".into(),
        ));
    }
    let d = source.cols();
    let xs = normalized_rows_f64(source)?;
    let xr = normalized_rows_f64(target)?;
    let mu_source = mean_of(&xs, source.rows(), d);
    let mu_target = mean_of(&xr, target.rows(), d);
    let cov_s = covariance(&xs, &mu_source, source.rows(), d);
    let cov_r = covariance(&xr, &mu_target, target.rows(), d);
    let whiten = sym_matrix_power(&cov_s, d, -0.5)?;
    let color = sym_matrix_power(&cov_r, d, 0.5)?;
    debug_assert!(symmetry_defect(&whiten, d) < 1e-6);
    debug_assert!(symmetry_defect(&color, d) < 1e-6);
    Ok(CoralModel {
        mu_source,
        mu_target,
        whiten,
        color,
        dim: d,
    })
}

/// Aligned rows before the final normalization:
/// `(x - mu_s) C_s^{-1/2} C_r^{1/2} + mu_r` per (unit-normalized) row.
pub fn coral_apply_unnormalized(model: &CoralModel, source: &EmbeddingMatrix) -> Result<Vec<f64>> {
    if source.cols() != model.dim {
        return Err(Error::DimensionMismatch(format!(
            "matrix has dimension {}, model expects {}",
            source.cols(),
            model.dim
        )));
    }
    let d = model.dim;
    let n = source.rows();
    let mut centered = normalized_rows_f64(source)?;
    for i in 0..n {
        for j in 0..d {
            centered[i * d + j] -= model.mu_source[j];
        }
    }
    let transform = mat_mul(&model.whiten, &model.color, d, d, d);
    let mut aligned = mat_mul(&centered, &transform, n, d, d);
    for i in 0..n {
        for j in 0..d {
            aligned[i * d + j] += model.mu_target[j];
        }
    }
    Ok(aligned)
}

/// Full alignment: moment matching then row-wise L2 normalization, so the
/// output lies on the unit hypersphere. Ids carry over.
pub fn coral_apply(model: &CoralModel, source: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let aligned = coral_apply_unnormalized(model, source)?;
    let d = model.dim;
    let mut data = Vec::with_capacity(aligned.len());
    for i in 0..source.rows() {
        let row = &aligned[i * d..(i + 1) * d];
        let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateInput(format!(
                "aligned row {i} collapsed to zero"
            )));
        }
        data.extend(row.iter().map(|&v| (v / norm) as f32));
    }
    let mut out = EmbeddingMatrix::new(source.rows(), d, data)?;
    if let Some(ids) = source.explicit_ids() {
        out.set_ids(ids.to_vec())?;
    }
    Ok(out)
}
