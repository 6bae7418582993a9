//! Forward pass of the velocity network, with the activation cache the
//! backward pass consumes.

use super::params::{FlowModel, GeneratorParams, HyperLinearParams, LayerNormParams};
use super::{gelu, linear_forward, NORM_EPS};
use crate::error::{Error, Result};
use crate::num::{c, Mat, Real};

/// Sinusoidal encoding of a timestep vector with base frequency 1/10000:
/// pairs `(sin(t w_i), cos(t w_i))`, `w_i = 10000^{-2i/dim}`.
pub fn sinusoidal_embedding<T: Real>(t: &[T], dim: usize) -> Mat<T> {
    debug_assert!(dim % 2 == 0);
    let half = dim / 2;
    let mut out = Mat::zeros(t.len(), dim);
    for (bi, &tv) in t.iter().enumerate() {
        let row = out.row_mut(bi);
        for i in 0..half {
            let freq = c::<T>(10000f64.powf(-2.0 * i as f64 / dim as f64));
            let angle = tv * freq;
            row[2 * i] = angle.sin();
            row[2 * i + 1] = angle.cos();
        }
    }
    out
}

pub(super) struct GeneratorCache<T> {
    /// Pre-activation of the hidden layer, B×g.
    pub z1: Mat<T>,
    /// Activated hidden layer, B×g.
    pub h1: Mat<T>,
    /// Generated output, B×out_size.
    pub out: Mat<T>,
}

pub(super) fn generator_forward<T: Real>(
    gen: &GeneratorParams<T>,
    g: &Mat<T>,
) -> GeneratorCache<T> {
    let z1 = linear_forward(g, &gen.l1.w, Some(&gen.l1.b));
    let mut h1 = z1.clone();
    h1.as_mut_slice().iter_mut().for_each(|v| *v = gelu(*v));
    let out = linear_forward(&h1, &gen.l2.w, Some(&gen.l2.b));
    GeneratorCache { z1, h1, out }
}

pub(super) struct HyperLinearCache<T> {
    pub u_gen: GeneratorCache<T>,
    pub v_gen: GeneratorCache<T>,
    pub b_gen: GeneratorCache<T>,
    pub s_gen: GeneratorCache<T>,
    /// U^T x per row, B×rank.
    pub q: Mat<T>,
    /// W x, B×out.
    pub core: Mat<T>,
    /// V (U^T x), B×out.
    pub low: Mat<T>,
    /// Layer input, B×in.
    pub input: Mat<T>,
    /// Layer output, B×out.
    pub out: Mat<T>,
}

// y = s(g) * (W x) + alpha [V(g) U(g)^T] x + b(g), everything per batch row.
pub(super) fn hyperlinear_forward<T: Real>(
    hl: &HyperLinearParams<T>,
    x: &Mat<T>,
    g: &Mat<T>,
    rank: usize,
) -> HyperLinearCache<T> {
    let (bsz, din, dout) = (x.rows(), x.cols(), hl.w.rows());
    let u_gen = generator_forward(&hl.u_gen, g);
    let v_gen = generator_forward(&hl.v_gen, g);
    let b_gen = generator_forward(&hl.b_gen, g);
    let s_gen = generator_forward(&hl.s_gen, g);
    let core = linear_forward(x, &hl.w, None);
    let alpha = hl.alpha.as_slice()[0];

    let mut q = Mat::zeros(bsz, rank);
    crate::parallel::for_each_chunk_mut(q.as_mut_slice(), rank, |bi, qrow| {
        let xrow = x.row(bi);
        let uflat = u_gen.out.row(bi); // din×rank, row-major
        for j in 0..rank {
            let mut s = T::ZERO;
            for k in 0..din {
                s += uflat[k * rank + j] * xrow[k];
            }
            qrow[j] = s;
        }
    });

    let mut low = Mat::zeros(bsz, dout);
    crate::parallel::for_each_chunk_mut(low.as_mut_slice(), dout, |bi, lrow| {
        let vflat = v_gen.out.row(bi); // dout×rank
        let qrow = q.row(bi);
        for (o, slot) in lrow.iter_mut().enumerate() {
            let mut s = T::ZERO;
            for j in 0..rank {
                s += vflat[o * rank + j] * qrow[j];
            }
            *slot = s;
        }
    });

    let mut out = Mat::zeros(bsz, dout);
    crate::parallel::for_each_chunk_mut(out.as_mut_slice(), dout, |bi, orow| {
        let crow = core.row(bi);
        let lrow = low.row(bi);
        let brow = b_gen.out.row(bi);
        let srow = s_gen.out.row(bi);
        for o in 0..dout {
            orow[o] = srow[o] * crow[o] + alpha * lrow[o] + brow[o];
        }
    });

    HyperLinearCache {
        u_gen,
        v_gen,
        b_gen,
        s_gen,
        q,
        core,
        low,
        input: x.clone(),
        out,
    }
}

pub(super) struct LayerNormCache<T> {
    /// Normalized input before the affine map, B×h.
    pub x_hat: Mat<T>,
    /// 1/sqrt(var + eps) per row.
    pub inv_std: Vec<T>,
    /// gamma * x_hat + beta, B×h.
    pub out: Mat<T>,
}

pub(super) fn layernorm_forward<T: Real>(ln: &LayerNormParams<T>, x: &Mat<T>) -> LayerNormCache<T> {
    let (bsz, h) = (x.rows(), x.cols());
    let eps: T = c(NORM_EPS);
    let mut x_hat = Mat::zeros(bsz, h);
    let mut inv_std = vec![T::ZERO; bsz];
    let mut out = Mat::zeros(bsz, h);
    for bi in 0..bsz {
        let row = x.row(bi);
        let mut mean = T::ZERO;
        for &v in row {
            mean += v;
        }
        mean /= c(h as f64);
        let mut var = T::ZERO;
        for &v in row {
            let d = v - mean;
            var += d * d;
        }
        var /= c(h as f64);
        let inv = T::ONE / (var + eps).sqrt();
        inv_std[bi] = inv;
        let xh = x_hat.row_mut(bi);
        let o = out.row_mut(bi);
        let gamma = ln.gamma.as_slice();
        let beta = ln.beta.as_slice();
        for j in 0..h {
            xh[j] = (row[j] - mean) * inv;
            o[j] = gamma[j] * xh[j] + beta[j];
        }
    }
    LayerNormCache { x_hat, inv_std, out }
}

pub(super) struct BlockCache<T> {
    pub norm: LayerNormCache<T>,
    pub hl1: HyperLinearCache<T>,
    /// GELU input (= hl1 output), B×h.
    pub act_in: Mat<T>,
    pub hl2: HyperLinearCache<T>,
}

/// Everything the backward pass needs, including the batch statistics of
/// the condition batch-norm for the running-stat update.
pub struct ForwardCache<T> {
    pub(super) cond_hat: Mat<T>,
    pub(super) cond_bn_out: Mat<T>,
    pub(super) t_sin: Mat<T>,
    pub(super) time_z1: Mat<T>,
    pub(super) time_h1: Mat<T>,
    pub(super) fused_in: Mat<T>,
    pub(super) g: Mat<T>,
    pub(super) x: Mat<T>,
    pub(super) blocks: Vec<BlockCache<T>>,
    pub(super) h_final: Mat<T>,
    /// Per-feature batch mean of the raw condition (train mode only).
    pub batch_mean: Vec<T>,
    /// Per-feature biased batch variance of the raw condition.
    pub batch_var: Vec<T>,
    pub output: Mat<T>,
}

fn check_shapes<T: Real>(
    model: &FlowModel<T>,
    x: &Mat<T>,
    t: &[T],
    cond: Option<&Mat<T>>,
) -> Result<()> {
    let arch = &model.arch;
    if x.cols() != arch.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "input has dimension {}, model expects {}",
            x.cols(),
            arch.input_dim
        )));
    }
    if t.len() != x.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} timesteps for {} rows",
            t.len(),
            x.rows()
        )));
    }
    if let Some(cm) = cond {
        if cm.cols() != arch.cond_dim {
            return Err(Error::DimensionMismatch(format!(
                "condition has dimension {}, model expects {}",
                cm.cols(),
                arch.cond_dim
            )));
        }
        if cm.rows() != x.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} condition rows for {} input rows",
                cm.rows(),
                x.rows()
            )));
        }
        if !cm.all_finite() {
            return Err(Error::NonFinite("condition batch".into()));
        }
    }
    if !x.all_finite() {
        return Err(Error::NonFinite("input batch".into()));
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("timestep batch".into()));
    }
    Ok(())
}

impl<T: Real> FlowModel<T> {
    /// Inference forward: batch-norm uses the frozen running statistics.
    /// An absent condition is the zero condition vector.
    pub fn forward(&self, x: &Mat<T>, t: &[T], cond: Option<&Mat<T>>) -> Result<Mat<T>> {
        check_shapes(self, x, t, cond)?;
        let cond = materialize_cond(self, cond, x.rows());
        let cache = self.forward_with_stats(x, t, &cond, false);
        Ok(cache.output)
    }

    /// Training forward: batch-norm uses the current batch statistics and
    /// reports them in the cache. The running buffers are not touched
    /// here; the training loop applies the momentum update.
    pub(super) fn forward_train(&self, x: &Mat<T>, t: &[T], cond: &Mat<T>) -> ForwardCache<T> {
        self.forward_with_stats(x, t, cond, true)
    }

    fn forward_with_stats(&self, x: &Mat<T>, t: &[T], cond: &Mat<T>, train: bool) -> ForwardCache<T> {
        let arch = &self.arch;
        let bsz = x.rows();
        let eps: T = c(NORM_EPS);

        // Condition batch-norm.
        let dc = arch.cond_dim;
        let (mean, var) = if train {
            let mut mean = vec![T::ZERO; dc];
            for bi in 0..bsz {
                for (m, &v) in mean.iter_mut().zip(cond.row(bi)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= c(bsz as f64));
            let mut var = vec![T::ZERO; dc];
            for bi in 0..bsz {
                for ((s, &v), m) in var.iter_mut().zip(cond.row(bi)).zip(&mean) {
                    let d = v - *m;
                    *s += d * d;
                }
            }
            var.iter_mut().for_each(|s| *s /= c(bsz as f64));
            (mean, var)
        } else {
            (
                self.cond_bn.running_mean.as_slice().to_vec(),
                self.cond_bn.running_var.as_slice().to_vec(),
            )
        };
        let mut cond_hat = Mat::zeros(bsz, dc);
        let mut cond_bn_out = Mat::zeros(bsz, dc);
        for bi in 0..bsz {
            let crow = cond.row(bi);
            let hrow = cond_hat.row_mut(bi);
            let orow = cond_bn_out.row_mut(bi);
            let gamma = self.cond_bn.gamma.as_slice();
            let beta = self.cond_bn.beta.as_slice();
            for j in 0..dc {
                hrow[j] = (crow[j] - mean[j]) / (var[j] + eps).sqrt();
                orow[j] = gamma[j] * hrow[j] + beta[j];
            }
        }
        let cond_emb = linear_forward(&cond_bn_out, &self.cond_proj.w, Some(&self.cond_proj.b));

        // Time path.
        let t_sin = sinusoidal_embedding(t, arch.time_dim);
        let time_z1 = linear_forward(&t_sin, &self.time_l1.w, Some(&self.time_l1.b));
        let mut time_h1 = time_z1.clone();
        time_h1.as_mut_slice().iter_mut().for_each(|v| *v = gelu(*v));
        let time_emb = linear_forward(&time_h1, &self.time_l2.w, Some(&self.time_l2.b));

        // Fused conditional embedding.
        let mut fused_in = Mat::zeros(bsz, arch.time_dim + dc);
        for bi in 0..bsz {
            let row = fused_in.row_mut(bi);
            row[..arch.time_dim].copy_from_slice(time_emb.row(bi));
            row[arch.time_dim..].copy_from_slice(cond_emb.row(bi));
        }
        let g = linear_forward(&fused_in, &self.fuse.w, Some(&self.fuse.b));

        // Trunk.
        let mut h = linear_forward(x, &self.input_proj.w, Some(&self.input_proj.b));
        let mut blocks = Vec::with_capacity(arch.layers);
        for blk in &self.blocks {
            let norm = layernorm_forward(&blk.norm, &h);
            let hl1 = hyperlinear_forward(&blk.hl1, &norm.out, &g, arch.rank);
            let act_in = hl1.out.clone();
            let mut act = act_in.clone();
            act.as_mut_slice().iter_mut().for_each(|v| *v = gelu(*v));
            let hl2 = hyperlinear_forward(&blk.hl2, &act, &g, arch.rank);
            for bi in 0..bsz {
                let hrow = h.row_mut(bi);
                for (hv, &dv) in hrow.iter_mut().zip(hl2.out.row(bi)) {
                    *hv += dv;
                }
            }
            blocks.push(BlockCache {
                norm,
                hl1,
                act_in,
                hl2,
            });
        }
        let output = linear_forward(&h, &self.output_proj.w, Some(&self.output_proj.b));

        ForwardCache {
            cond_hat,
            cond_bn_out,
            t_sin,
            time_z1,
            time_h1,
            fused_in,
            g,
            x: x.clone(),
            blocks,
            h_final: h,
            batch_mean: mean,
            batch_var: var,
            output,
        }
    }
}

/// The zero condition vector stands in when no condition is given.
pub(super) fn materialize_cond<T: Real>(
    model: &FlowModel<T>,
    cond: Option<&Mat<T>>,
    rows: usize,
) -> Mat<T> {
    match cond {
        Some(m) => m.clone(),
        None => Mat::zeros(rows, model.arch.cond_dim),
    }
}
