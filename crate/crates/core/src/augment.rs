//! Query augmentation by random linear interpolation.

use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use crate::rng::{stream_rng, StreamDomain};
use rand::Rng;

/// `n_new` rows of `w q_i + (1-w) q_j` with `i != j` uniform over rows and
/// `w ~ Uniform(0,1)`.
pub fn interpolate_queries(q: &EmbeddingMatrix, n_new: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if q.rows() < 2 {
        return Err(Error::DegenerateInput(format!(
            "interpolation needs >= 2 rows, got {}",
            q.rows()
        )));
    }
    let mut rng = stream_rng(seed, StreamDomain::Augment, 0);
    let d = q.cols();
    let mut data = Vec::with_capacity(n_new * d);
    for _ in 0..n_new {
        let i = rng.random_range(0..q.rows());
        let mut j = rng.random_range(0..q.rows() - 1);
        if j >= i {
            j += 1;
        }
        let w: f64 = rng.random_range(0.0..1.0);
        let (a, b) = (q.row(i), q.row(j));
        data.extend(
            a.iter()
                .zip(b)
                .map(|(&x, &y)| (w * x as f64 + (1.0 - w) * y as f64) as f32),
        );
    }
    EmbeddingMatrix::new(n_new, d, data)
}
