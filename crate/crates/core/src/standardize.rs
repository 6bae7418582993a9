//! Feature-wise standardization (zero mean, unit variance per column).

use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use serde::{Deserialize, Serialize};

/// Standard deviations below this floor mark a constant column.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-column mean and standard deviation of a fitted matrix.
///
/// Population statistics (divisor N). Constant columns get their std clamped
/// to 1.0 so the transform stays invertible and maps them to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl StandardizeStats {
    /// Identity transform in `dim` dimensions.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Fit per-column statistics; requires at least two rows.
pub fn standardize_fit(x: &EmbeddingMatrix) -> Result<StandardizeStats> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::DimensionMismatch(format!(
            "standardize_fit needs >= 2 rows, got {n}"
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
    let mut var = vec![0.0f64; d];
    for row in x.iter_rows() {
        for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
            let c = v as f64 - m;
            *s += c * c;
        }
    }
    let std: Vec<f32> = var
        .iter()
        .map(|&s| {
            let sd = (s / n as f64).sqrt();
            if sd < STD_FLOOR {
                1.0
            } else {
                sd as f32
            }
        })
        .collect();
    Ok(StandardizeStats {
        mean: mean.iter().map(|&m| m as f32).collect(),
        std,
    })
}

fn check_dim(x: &EmbeddingMatrix, stats: &StandardizeStats) -> Result<()> {
    if x.cols() != stats.dim() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns, stats have {}",
            x.cols(),
            stats.dim()
        )));
    }
    Ok(())
}

/// `(x - mean) / std`, elementwise per column.
pub fn standardize_apply(x: &EmbeddingMatrix, stats: &StandardizeStats) -> Result<EmbeddingMatrix> {
    check_dim(x, stats)?;
    let mut out = x.clone();
    let d = x.cols();
    for i in 0..x.rows() {
        let row = out.row_mut(i);
        for j in 0..d {
            row[j] = (row[j] - stats.mean[j]) / stats.std[j];
        }
    }
    Ok(out)
}

/// `z * std + mean`, the inverse of [`standardize_apply`].
pub fn standardize_invert(z: &EmbeddingMatrix, stats: &StandardizeStats) -> Result<EmbeddingMatrix> {
    check_dim(z, stats)?;
    let mut out = z.clone();
    let d = z.cols();
    for i in 0..z.rows() {
        let row = out.row_mut(i);
        for j in 0..d {
            row[j] = row[j] * stats.std[j] + stats.mean[j];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, StreamDomain};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn symmetric_two_point() {
        let x = EmbeddingMatrix::new(2, 1, vec![0.0, 2.0]).unwrap();
        let s = standardize_fit(&x).unwrap();
        assert_eq!(s.mean, vec![1.0]);
        assert_eq!(s.std, vec![1.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let x = EmbeddingMatrix::new(3, 2, vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0]).unwrap();
        let s = standardize_fit(&x).unwrap();
        assert_eq!(s.std[0], 1.0);
        let z = standardize_apply(&x, &s).unwrap();
        for i in 0..3 {
            assert_eq!(z.row(i)[0], 0.0);
        }
    }

    #[test]
    fn recovers_moments_of_seeded_gaussian() {
        // 500 draws from N(3, 4) per column; oracle = the direct sample
        // statistics the fit itself reports, checked against the law of
        // large numbers bound from the spec of the generator.
        let mut rng = stream_rng(11, StreamDomain::Gaussian, 0);
        let data: Vec<f32> = (0..500 * 3)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (3.0 + 2.0 * z) as f32
            })
            .collect();
        let x = EmbeddingMatrix::new(500, 3, data).unwrap();
        let s = standardize_fit(&x).unwrap();
        for j in 0..3 {
            assert!((s.mean[j] - 3.0).abs() < 0.2, "mean {}", s.mean[j]);
            assert!((s.std[j] - 2.0).abs() < 0.2, "std {}", s.std[j]);
        }
    }

    #[test]
    fn apply_invert_trivial_cases() {
        let stats = StandardizeStats {
            mean: vec![1.0],
            std: vec![2.0],
        };
        let x = EmbeddingMatrix::new(1, 1, vec![1.0]).unwrap();
        let z = standardize_apply(&x, &stats).unwrap();
        assert_eq!(z.row(0)[0], 0.0);
        let zero = EmbeddingMatrix::new(1, 1, vec![0.0]).unwrap();
        let back = standardize_invert(&zero, &stats).unwrap();
        assert_eq!(back.row(0)[0], 1.0);
    }

    #[test]
    fn round_trip_random_matrix() {
        let mut rng = stream_rng(3, StreamDomain::Gaussian, 1);
        let data: Vec<f32> = (0..16 * 8)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (z * 5.0 + 0.7) as f32
            })
            .collect();
        let x = EmbeddingMatrix::new(16, 8, data).unwrap();
        let s = standardize_fit(&x).unwrap();
        let z = standardize_apply(&x, &s).unwrap();
        let back = standardize_invert(&z, &s).unwrap();
        let max_err = x
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err < 1e-6, "max abs error {max_err}");
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let stats = StandardizeStats::identity(3);
        let x = EmbeddingMatrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        assert!(standardize_apply(&x, &stats).is_err());
    }

    #[test]
    fn empty_matrix_is_an_error() {
        let x = EmbeddingMatrix::new(0, 2, vec![]).unwrap();
        assert!(standardize_fit(&x).is_err());
    }

    proptest::proptest! {
        // apply-then-invert recovers the input for any finite matrix
        #[test]
        fn prop_round_trip(values in proptest::collection::vec(-1e3f32..1e3, 6..60)) {
            let rows = values.len() / 3;
            let x = EmbeddingMatrix::new(rows, 3, values[..rows * 3].to_vec()).unwrap();
            let stats = standardize_fit(&x).unwrap();
            let z = standardize_apply(&x, &stats).unwrap();
            let back = standardize_invert(&z, &stats).unwrap();
            for (a, b) in x.data().iter().zip(back.data()) {
                let scale = a.abs().max(1.0);
                proptest::prop_assert!((a - b).abs() / scale < 1e-6);
            }
        }
    }
}
