//! Random sampling primitives: standard Gaussian matrices and logit-normal
//! timesteps. Deterministic for a fixed seed.

use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use crate::rng::{stream_rng, StreamDomain};
use rand::Rng;
use rand_distr::StandardNormal;

/// n×d matrix of i.i.d. standard normal entries.
pub fn sample_gaussian(n: usize, d: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter(format!(
            "sample_gaussian needs n, d >= 1 (got {n}, {d})"
        )));
    }
    let mut rng = stream_rng(seed, StreamDomain::Gaussian, 0);
    let data: Vec<f32> = (0..n * d)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z as f32
        })
        .collect();
    EmbeddingMatrix::new(n, d, data)
}

/// n draws of `sigmoid(z)`, `z ~ N(0,1)`: timesteps strictly inside (0,1).
pub fn sample_logit_normal(n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample_logit_normal needs n >= 1".into()));
    }
    let mut rng = stream_rng(seed, StreamDomain::LogitNormal, 0);
    Ok((0..n).map(|_| logit_normal_draw(&mut rng)).collect())
}

/// One logit-normal(0,1) draw from the given generator.
pub(crate) fn logit_normal_draw<R: Rng>(rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sigmoid_open(z)
}

// Clamped into the open interval: sigmoid saturates to exactly 0.0/1.0 in
// f64 for |z| beyond ~36.7, which the (0,1) contract forbids.
fn sigmoid_open(z: f64) -> f64 {
    let t = 1.0 / (1.0 + (-z).exp());
    t.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_same_seed_bit_identical() {
        let a = sample_gaussian(8, 3, 42).unwrap();
        let b = sample_gaussian(8, 3, 42).unwrap();
        assert_eq!(a.data(), b.data());
        let c = sample_gaussian(8, 3, 43).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn gaussian_column_moments() {
        let x = sample_gaussian(10_000, 4, 1).unwrap();
        let n = x.rows() as f64;
        for j in 0..4 {
            let mean: f64 = x.iter_rows().map(|r| r[j] as f64).sum::<f64>() / n;
            let var: f64 = x
                .iter_rows()
                .map(|r| (r[j] as f64 - mean).powi(2))
                .sum::<f64>()
                / n;
            assert!(mean.abs() < 0.05, "column {j} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 0.05, "column {j} std {}", var.sqrt());
        }
    }

    #[test]
    fn gaussian_ks_statistic() {
        // One-sample Kolmogorov-Smirnov against the standard normal CDF.
        let x = sample_gaussian(10_000, 1, 2).unwrap();
        let mut vals: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = vals.len() as f64;
        let mut ks = 0.0f64;
        for (i, &v) in vals.iter().enumerate() {
            let cdf = 0.5 * (1.0 + libm::erf(v / std::f64::consts::SQRT_2));
            let hi = (i as f64 + 1.0) / n;
            let lo = i as f64 / n;
            ks = ks.max((cdf - lo).abs()).max((hi - cdf).abs());
        }
        assert!(ks < 0.02, "KS statistic {ks}");
    }

    #[test]
    fn logit_normal_midpoint_and_range() {
        assert_eq!(sigmoid_open(0.0), 0.5);
        let t = sample_logit_normal(10_000, 3).unwrap();
        let mut sorted = t.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        assert!((median - 0.5).abs() < 0.02, "median {median}");
        assert!(t.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn logit_normal_large_draw_stays_open() {
        let t = sample_logit_normal(1_000_000, 4).unwrap();
        assert!(t.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn sigmoid_clamp_guards_saturation() {
        assert!(sigmoid_open(1e3) < 1.0);
        assert!(sigmoid_open(-1e3) > 0.0);
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(sample_gaussian(0, 3, 0).is_err());
        assert!(sample_gaussian(3, 0, 0).is_err());
        assert!(sample_logit_normal(0, 0).is_err());
    }
}
