//! Principal component analysis over embedding matrices.

use crate::error::{Error, Result};
use crate::linalg::jacobi_eigh;
use crate::matrix::EmbeddingMatrix;

/// Fitted PCA basis: top-K eigenvectors of the centered covariance
/// (divisor N-1), ordered by non-increasing explained variance.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// K×D row-major; rows are orthonormal.
    pub components: Vec<f64>,
    pub explained_variance: Vec<f64>,
    pub input_dim: usize,
    pub output_dim: usize,
}

pub fn pca_fit(x: &EmbeddingMatrix, k: usize) -> Result<PcaModel> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "pca_fit needs >= 2 rows, got {n}"
        )));
    }
    let k_max = (n - 1).min(d);
    if k == 0 || k > k_max {
        return Err(Error::InvalidParameter(format!(
            "k = {k} outside 1..={k_max} (n = {n}, d = {d})"
        )));
    }
    let mut mean = vec![0.0f64; d];
    for row in x.iter_rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![0.0f64; d * d];
    for row in x.iter_rows() {
        let centered: Vec<f64> = row.iter().zip(&mean).map(|(&v, m)| v as f64 - m).collect();
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            let crow = &mut cov[i * d..(i + 1) * d];
            for j in 0..d {
                crow[j] += ci * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for v in &mut cov {
        *v /= denom;
    }
    let eig = jacobi_eigh(&cov, d)?;
    let components = eig.vectors[..k * d].to_vec();
    let explained_variance = eig.values[..k].iter().map(|&v| v.max(0.0)).collect();
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        input_dim: d,
        output_dim: k,
    })
}

/// `(X - mean) . components^T`, an N×K matrix. Ids carry over.
pub fn pca_project(x: &EmbeddingMatrix, model: &PcaModel) -> Result<EmbeddingMatrix> {
    if x.cols() != model.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns, model expects {}",
            x.cols(),
            model.input_dim
        )));
    }
    let (d, k) = (model.input_dim, model.output_dim);
    let mut data = Vec::with_capacity(x.rows() * k);
    for row in x.iter_rows() {
        let centered: Vec<f64> = row
            .iter()
            .zip(&model.mean)
            .map(|(&v, m)| v as f64 - m)
            .collect();
        for c in 0..k {
            let comp = &model.components[c * d..(c + 1) * d];
            let s: f64 = centered.iter().zip(comp).map(|(a, b)| a * b).sum();
            data.push(s as f32);
        }
    }
    let mut out = EmbeddingMatrix::new(x.rows(), k, data)?;
    if let Some(ids) = x.explicit_ids() {
        out.set_ids(ids.to_vec())?;
    }
    Ok(out)
}

/// Map projected points back to the input space: `Z . components + mean`.
pub fn pca_reconstruct(z: &EmbeddingMatrix, model: &PcaModel) -> Result<EmbeddingMatrix> {
    if z.cols() != model.output_dim {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns, model produces {}",
            z.cols(),
            model.output_dim
        )));
    }
    let (d, k) = (model.input_dim, model.output_dim);
    let mut data = Vec::with_capacity(z.rows() * d);
    for row in z.iter_rows() {
        let mut rec = model.mean.clone();
        for c in 0..k {
            let w = row[c] as f64;
            let comp = &model.components[c * d..(c + 1) * d];
            for (r, &cv) in rec.iter_mut().zip(comp) {
                *r += w * cv;
            }
        }
        data.extend(rec.iter().map(|&v| v as f32));
    }
    EmbeddingMatrix::new(z.rows(), d, data)
}
