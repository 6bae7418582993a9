//! Vector distances and normalization.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Distance metric for retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cosine,
    Euclidean,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(Error::InvalidParameter(format!(
                "unknown metric {other:?} (expected cosine or euclidean)"
            ))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::Cosine => write!(f, "cosine"),
            Metric::Euclidean => write!(f, "euclidean"),
        }
    }
}

pub(crate) fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum::<f64>()
}

pub(crate) fn norm_f64(v: &[f32]) -> f64 {
    dot_f64(v, v).sqrt()
}

/// Distance between two equal-length vectors.
///
/// Cosine distance is `1 - a.b / (|a||b|)`, Euclidean is the L2 norm of the
/// difference. A zero vector under the cosine metric is a degenerate input.
pub fn distance(a: &[f32], b: &[f32], metric: Metric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "distance between {}-d and {}-d vectors",
            a.len(),
            b.len()
        )));
    }
    match metric {
        Metric::Cosine => {
            let na = norm_f64(a);
            let nb = norm_f64(b);
            if na == 0.0 || nb == 0.0 {
                return Err(Error::DegenerateInput(
                    "cosine distance with a zero vector".into(),
                ));
            }
            Ok(1.0 - dot_f64(a, b) / (na * nb))
        }
        Metric::Euclidean => {
            let s: f64 = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let d = x as f64 - y as f64;
                    d * d
                })
                .sum();
            Ok(s.sqrt())
        }
    }
}

/// `v / |v|`; errors on the zero vector.
pub fn l2_normalize(v: &[f32]) -> Result<Vec<f32>> {
    let n = norm_f64(v);
    if n == 0.0 {
        return Err(Error::DegenerateInput("cannot normalize zero vector".into()));
    }
    Ok(v.iter().map(|&x| (x as f64 / n) as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basis_cases() {
        let e1 = [1.0, 0.0];
        let neg = [-1.0, 0.0];
        assert!(distance(&e1, &e1, Metric::Cosine).unwrap().abs() < 1e-12);
        assert!((distance(&e1, &neg, Metric::Cosine).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn euclidean_345() {
        let d = distance(&[0.0, 0.0], &[3.0, 4.0], Metric::Euclidean).unwrap();
        assert!((d - 5.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_345() {
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-7);
        assert!((v[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        assert!(l2_normalize(&[0.0, 0.0]).is_err());
        assert!(distance(&[0.0], &[1.0], Metric::Cosine).is_err());
    }

    #[test]
    fn length_mismatch() {
        assert!(distance(&[1.0], &[1.0, 2.0], Metric::Euclidean).is_err());
    }
}
