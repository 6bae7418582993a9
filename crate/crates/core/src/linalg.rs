//! Dense symmetric eigendecomposition and fractional matrix powers.
//!
//! Cyclic Jacobi rotations, f64 throughout. O(D^3) per sweep, which is fine
//! for the desk-scale D this crate targets; no attempt at blocked or
//! randomized algorithms.

use crate::error::{Error, Result};

/// Eigenvalue floor applied before fractional powers.
pub const EIG_FLOOR: f64 = 1e-8;

/// Eigendecomposition of a symmetric matrix, eigenvalues non-increasing.
/// `vectors` is row-major D×D with row k holding the k-th eigenvector.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

/// Check symmetry to `tol` (absolute, relative to the largest entry).
pub fn symmetry_defect(a: &[f64], d: usize) -> f64 {
    let mut defect = 0.0f64;
    for i in 0..d {
        for j in (i + 1)..d {
            defect = defect.max((a[i * d + j] - a[j * d + i]).abs());
        }
    }
    defect
}

/// Cyclic Jacobi eigendecomposition of a symmetric D×D matrix.
pub fn jacobi_eigh(a: &[f64], d: usize) -> Result<SymEig> {
    if a.len() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} entries, expected {}",
            a.len(),
            d * d
        )));
    }
    let mut m = a.to_vec();
    // Symmetrize to kill harmless f64 rounding asymmetry.
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[i * d + j] + m[j * d + i]);
            m[i * d + j] = avg;
            m[j * d + i] = avg;
        }
    }
    let mut q = vec![0.0f64; d * d];
    for i in 0..d {
        q[i * d + i] = 1.0;
    }
    let scale = max_abs(&m).max(1.0);
    let tol = 1e-14 * scale;
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..d {
            for j in (i + 1)..d {
                off = off.max(m[i * d + j].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..d {
            for r in (p + 1)..d {
                let apq = m[p * d + r];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = m[p * d + p];
                let aqq = m[r * d + r];
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..d {
                    let mkp = m[k * d + p];
                    let mkq = m[k * d + r];
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + r] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[p * d + k];
                    let mqk = m[r * d + k];
                    m[p * d + k] = c * mpk - s * mqk;
                    m[r * d + k] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let qpk = q[p * d + k];
                    let qqk = q[r * d + k];
                    q[p * d + k] = c * qpk - s * qqk;
                    q[r * d + k] = s * qpk + c * qqk;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    let diag: Vec<f64> = (0..d).map(|i| m[i * d + i]).collect();
    // Non-increasing eigenvalues; index tie-break keeps it deterministic.
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap().then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = vec![0.0f64; d * d];
    for (row, &src) in order.iter().enumerate() {
        for k in 0..d {
            vectors[row * d + k] = q[src * d + k];
        }
    }
    Ok(SymEig { values, vectors })
}

/// `C^p` for symmetric `C` via eigendecomposition, with eigenvalues clamped
/// at [`EIG_FLOOR`] before the power. Intended for p = ±0.5.
pub fn sym_matrix_power(c: &[f64], d: usize, p: f64) -> Result<Vec<f64>> {
    if c.len() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} entries, expected {}",
            c.len(),
            d * d
        )));
    }
    let defect = symmetry_defect(c, d);
    let tol = 1e-8 * max_abs(c).max(1.0);
    if defect > tol {
        return Err(Error::InvalidParameter(format!(
            "matrix is not symmetric (defect {defect:.3e} > {tol:.3e})"
        )));
    }
    let eig = jacobi_eigh(c, d)?;
    let powered: Vec<f64> = eig
        .values
        .iter()
        .map(|&l| l.max(EIG_FLOOR).powf(p))
        .collect();
    // Q diag(l^p) Q^T with eigenvectors stored as rows of `vectors`.
    let mut out = vec![0.0f64; d * d];
    for k in 0..d {
        let row = &eig.vectors[k * d..(k + 1) * d];
        let lp = powered[k];
        for i in 0..d {
            let vi = row[i] * lp;
            for j in 0..d {
                out[i * d + j] += vi * row[j];
            }
        }
    }
    // Exact symmetry by construction, up to rounding; enforce it.
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (out[i * d + j] + out[j * d + i]);
            out[i * d + j] = avg;
            out[j * d + i] = avg;
        }
    }
    Ok(out)
}

/// Row-major (n×k)·(k×m) product.
pub fn mat_mul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * k);
    assert_eq!(b.len(), k * m);
    let mut out = vec![0.0f64; n * m];
    for i in 0..n {
        for l in 0..k {
            let ail = a[i * k + l];
            if ail == 0.0 {
                continue;
            }
            let brow = &b[l * m..(l + 1) * m];
            let orow = &mut out[i * m..(i + 1) * m];
            for j in 0..m {
                orow[j] += ail * brow[j];
            }
        }
    }
    out
}
