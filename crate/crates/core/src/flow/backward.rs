//! Exact reverse-mode gradients of the training objectives.
//!
//! The backward pass mirrors the forward layer by layer; every derivative
//! is written out by hand and checked against central finite differences
//! in the acceptance suite.

use super::forward::{
    materialize_cond, GeneratorCache, HyperLinearCache, LayerNormCache,
};
use super::params::{
    FlowModel, GeneratorParams, HyperLinearParams, LayerNormParams,
};
use super::train::TrainStreams;
use super::{gelu_prime, linear_backward_input, linear_backward_params, Objective};
use crate::error::{Error, Result};
use crate::num::{c, Mat, Real};
use crate::sampling::logit_normal_draw;
use rand::Rng;
use rand_distr::StandardNormal;

/// One prepared training batch: the network input, timesteps, regression
/// target, and the (possibly dropped-out) condition rows.
#[derive(Debug, Clone)]
pub struct LossBatch<T> {
    pub x_in: Mat<T>,
    pub t: Vec<T>,
    pub target: Mat<T>,
    pub cond: Mat<T>,
}

/// Loss, exact gradients, and the condition batch statistics needed for
/// the running-stat update.
pub struct LossOutput<T> {
    pub loss: f64,
    pub grads: FlowModel<T>,
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}

/// Build a flow-matching batch: per row draw noise `x0 ~ N(0,I)` and
/// `t ~ LogitNormal(0,1)`, interpolate `x_t = t x0 + (1-t) x1`, set the
/// velocity target `v* = x1 - x0`, and drop the condition to zero with the
/// configured probability. `x1` must already be standardized.
pub fn prepare_cfm_batch<T: Real>(
    model: &FlowModel<T>,
    x1_std: &Mat<T>,
    cond: Option<&Mat<T>>,
    dropout: f64,
    rngs: &mut TrainStreams,
) -> LossBatch<T> {
    let (bsz, d) = (x1_std.rows(), x1_std.cols());
    let mut x_in = Mat::zeros(bsz, d);
    let mut target = Mat::zeros(bsz, d);
    let mut t = Vec::with_capacity(bsz);
    for bi in 0..bsz {
        let tv = logit_normal_draw(&mut rngs.time);
        t.push(c::<T>(tv));
        let x1 = x1_std.row(bi);
        let xi = x_in.row_mut(bi);
        let vi = target.row_mut(bi);
        for j in 0..d {
            let noise: f64 = rngs.noise.sample(StandardNormal);
            let x0: T = c(noise);
            xi[j] = c::<T>(tv) * x0 + (T::ONE - c::<T>(tv)) * x1[j];
            vi[j] = x1[j] - x0;
        }
    }
    let mut cond = materialize_cond(model, cond, bsz);
    if dropout > 0.0 {
        for bi in 0..bsz {
            let u: f64 = rngs.dropout.random_range(0.0..1.0);
            if u < dropout {
                cond.row_mut(bi).iter_mut().for_each(|v| *v = T::ZERO);
            }
        }
    }
    LossBatch {
        x_in,
        t,
        target,
        cond,
    }
}

/// Build a regression batch: zero network input, `t = 0`, the standardized
/// target itself as the regression target. No noise, no dropout.
pub fn prepare_regression_batch<T: Real>(
    model: &FlowModel<T>,
    x_std: &Mat<T>,
    cond: Option<&Mat<T>>,
) -> LossBatch<T> {
    let bsz = x_std.rows();
    LossBatch {
        x_in: Mat::zeros(bsz, x_std.cols()),
        t: vec![T::ZERO; bsz],
        target: x_std.clone(),
        cond: materialize_cond(model, cond, bsz),
    }
}

/// Mean-over-batch squared error of the prepared batch, without gradients.
/// Used by the finite-difference verification.
pub fn loss_only<T: Real>(model: &FlowModel<T>, batch: &LossBatch<T>) -> Result<f64> {
    let cache = model.forward_train(&batch.x_in, &batch.t, &batch.cond);
    batch_loss(&cache.output, &batch.target)
}

fn batch_loss<T: Real>(output: &Mat<T>, target: &Mat<T>) -> Result<f64> {
    let bsz = output.rows();
    let mut loss = 0.0f64;
    for (o, t) in output.as_slice().iter().zip(target.as_slice()) {
        let d = o.to_f64() - t.to_f64();
        loss += d * d;
    }
    loss /= bsz as f64;
    if !loss.is_finite() {
        return Err(Error::Training(format!("non-finite loss {loss}")));
    }
    Ok(loss)
}

/// Loss plus exact gradients for a prepared batch.
pub fn loss_grad<T: Real>(model: &FlowModel<T>, batch: &LossBatch<T>) -> Result<LossOutput<T>> {
    let cache = model.forward_train(&batch.x_in, &batch.t, &batch.cond);
    let loss = batch_loss(&cache.output, &batch.target)?;
    let bsz = batch.x_in.rows();
    let mut grads = model.zero_like();

    // dL/d output
    let mut delta = Mat::zeros(bsz, cache.output.cols());
    let scale: T = c(2.0 / bsz as f64);
    for (d, (o, tg)) in delta
        .as_mut_slice()
        .iter_mut()
        .zip(cache.output.as_slice().iter().zip(batch.target.as_slice()))
    {
        *d = scale * (*o - *tg);
    }

    // Output projection.
    linear_backward_params(
        &cache.h_final,
        &delta,
        &mut grads.output_proj.w,
        Some(&mut grads.output_proj.b),
    );
    let mut dh = linear_backward_input(&delta, &model.output_proj.w);

    // Fused-embedding gradient accumulates across every HyperLinear.
    let mut dg = Mat::zeros(bsz, model.arch.cond_dim);

    for ((blk, gblk), bc) in model
        .blocks
        .iter()
        .zip(grads.blocks.iter_mut())
        .rev()
        .zip(cache.blocks.iter().rev())
    {
        // h_out = h_in + hl2(gelu(hl1(norm(h_in), g)), g)
        let da2 = dh.clone();
        let dz = hyperlinear_backward(
            &blk.hl2,
            &mut gblk.hl2,
            &bc.hl2,
            &da2,
            &cache.g,
            &mut dg,
            model.arch.rank,
        );
        let mut da1 = dz;
        for (v, &a) in da1.as_mut_slice().iter_mut().zip(bc.act_in.as_slice()) {
            *v *= gelu_prime(a);
        }
        let du = hyperlinear_backward(
            &blk.hl1,
            &mut gblk.hl1,
            &bc.hl1,
            &da1,
            &cache.g,
            &mut dg,
            model.arch.rank,
        );
        let dx_norm = layernorm_backward(&blk.norm, &mut gblk.norm, &bc.norm, &du);
        for (h, &d) in dh.as_mut_slice().iter_mut().zip(dx_norm.as_slice()) {
            *h += d;
        }
    }

    // Input projection (x is a leaf; no input gradient needed).
    linear_backward_params(
        &cache.x,
        &dh,
        &mut grads.input_proj.w,
        Some(&mut grads.input_proj.b),
    );

    // Fuse: g = W [t_emb | c_emb] + b.
    linear_backward_params(
        &cache.fused_in,
        &dg,
        &mut grads.fuse.w,
        Some(&mut grads.fuse.b),
    );
    let dfused = linear_backward_input(&dg, &model.fuse.w);
    let dt_dim = model.arch.time_dim;
    let mut dtime_emb = Mat::zeros(bsz, dt_dim);
    let mut dcond_emb = Mat::zeros(bsz, model.arch.cond_dim);
    for bi in 0..bsz {
        dtime_emb
            .row_mut(bi)
            .copy_from_slice(&dfused.row(bi)[..dt_dim]);
        dcond_emb
            .row_mut(bi)
            .copy_from_slice(&dfused.row(bi)[dt_dim..]);
    }

    // Time MLP; the sinusoidal encoding is a function of the leaf t.
    linear_backward_params(
        &cache.time_h1,
        &dtime_emb,
        &mut grads.time_l2.w,
        Some(&mut grads.time_l2.b),
    );
    let mut dz1 = linear_backward_input(&dtime_emb, &model.time_l2.w);
    for (v, &z) in dz1.as_mut_slice().iter_mut().zip(cache.time_z1.as_slice()) {
        *v *= gelu_prime(z);
    }
    linear_backward_params(
        &cache.t_sin,
        &dz1,
        &mut grads.time_l1.w,
        Some(&mut grads.time_l1.b),
    );

    // Condition path: linear projection, then batch-norm affine. The batch
    // statistics are functions of the leaf condition, so gradients stop at
    // gamma/beta.
    linear_backward_params(
        &cache.cond_bn_out,
        &dcond_emb,
        &mut grads.cond_proj.w,
        Some(&mut grads.cond_proj.b),
    );
    let dcbn = linear_backward_input(&dcond_emb, &model.cond_proj.w);
    for bi in 0..bsz {
        let drow = dcbn.row(bi);
        let hrow = cache.cond_hat.row(bi);
        let dgam = grads.cond_bn.gamma.as_mut_slice();
        let dbet = grads.cond_bn.beta.as_mut_slice();
        for j in 0..model.arch.cond_dim {
            dgam[j] += drow[j] * hrow[j];
            dbet[j] += drow[j];
        }
    }

    Ok(LossOutput {
        loss,
        grads,
        batch_mean: cache.batch_mean,
        batch_var: cache.batch_var,
    })
}

/// Flow-matching loss and gradients: draws the batch internally from the
/// provided streams, then differentiates.
pub fn cfm_loss_grad<T: Real>(
    model: &FlowModel<T>,
    x1_std: &Mat<T>,
    cond: Option<&Mat<T>>,
    dropout: f64,
    rngs: &mut TrainStreams,
) -> Result<LossOutput<T>> {
    let batch = prepare_cfm_batch(model, x1_std, cond, dropout, rngs);
    loss_grad(model, &batch)
}

/// Regression loss and gradients; fully deterministic.
pub fn regression_loss_grad<T: Real>(
    model: &FlowModel<T>,
    x_std: &Mat<T>,
    cond: Option<&Mat<T>>,
) -> Result<LossOutput<T>> {
    let batch = prepare_regression_batch(model, x_std, cond);
    loss_grad(model, &batch)
}

/// Batch selector used by the training loop.
pub(super) fn prepare_batch<T: Real>(
    model: &FlowModel<T>,
    objective: Objective,
    x_std: &Mat<T>,
    cond: Option<&Mat<T>>,
    dropout: f64,
    rngs: &mut TrainStreams,
) -> LossBatch<T> {
    match objective {
        Objective::Cfm => prepare_cfm_batch(model, x_std, cond, dropout, rngs),
        Objective::Regression => prepare_regression_batch(model, x_std, cond),
    }
}

fn generator_backward<T: Real>(
    gen: &GeneratorParams<T>,
    ggen: &mut GeneratorParams<T>,
    cache: &GeneratorCache<T>,
    dout: &Mat<T>,
    g: &Mat<T>,
    dg: &mut Mat<T>,
) {
    linear_backward_params(&cache.h1, dout, &mut ggen.l2.w, Some(&mut ggen.l2.b));
    let mut dz1 = linear_backward_input(dout, &gen.l2.w);
    for (v, &z) in dz1.as_mut_slice().iter_mut().zip(cache.z1.as_slice()) {
        *v *= gelu_prime(z);
    }
    linear_backward_params(g, &dz1, &mut ggen.l1.w, Some(&mut ggen.l1.b));
    let dg_local = linear_backward_input(&dz1, &gen.l1.w);
    for (acc, &v) in dg.as_mut_slice().iter_mut().zip(dg_local.as_slice()) {
        *acc += v;
    }
}

// Returns dL/d input of the layer; parameter gradients go into `ghl`, the
// fused-embedding gradient accumulates into `dg`.
fn hyperlinear_backward<T: Real>(
    hl: &HyperLinearParams<T>,
    ghl: &mut HyperLinearParams<T>,
    cache: &HyperLinearCache<T>,
    da: &Mat<T>,
    g: &Mat<T>,
    dg: &mut Mat<T>,
    rank: usize,
) -> Mat<T> {
    let (bsz, dout) = (da.rows(), da.cols());
    let din = cache.input.cols();
    let alpha = hl.alpha.as_slice()[0];

    // s branch: ds_out = da * core
    let mut ds_out = Mat::zeros(bsz, dout);
    for (slot, (&d, &cv)) in ds_out
        .as_mut_slice()
        .iter_mut()
        .zip(da.as_slice().iter().zip(cache.core.as_slice()))
    {
        *slot = d * cv;
    }
    generator_backward(&hl.s_gen, &mut ghl.s_gen, &cache.s_gen, &ds_out, g, dg);

    // b branch: db_out = da
    generator_backward(&hl.b_gen, &mut ghl.b_gen, &cache.b_gen, da, g, dg);

    // core branch: dcore = da * s
    let mut dcore = Mat::zeros(bsz, dout);
    for bi in 0..bsz {
        let srow = cache.s_gen.out.row(bi);
        let darow = da.row(bi);
        let drow = dcore.row_mut(bi);
        for o in 0..dout {
            drow[o] = darow[o] * srow[o];
        }
    }
    linear_backward_params(&cache.input, &dcore, &mut ghl.w, None);
    let du_core = linear_backward_input(&dcore, &hl.w);

    // alpha and the low-rank branch
    let mut dalpha = T::ZERO;
    for (&d, &l) in da.as_slice().iter().zip(cache.low.as_slice()) {
        dalpha += d * l;
    }
    ghl.alpha.as_mut_slice()[0] += dalpha;

    let mut du_out = Mat::zeros(bsz, din * rank);
    let mut dv_out = Mat::zeros(bsz, dout * rank);
    let mut du_low = Mat::zeros(bsz, din);
    for bi in 0..bsz {
        let darow = da.row(bi);
        let qrow = cache.q.row(bi);
        let xrow = cache.input.row(bi);
        let uflat = cache.u_gen.out.row(bi);
        // dlow = alpha * da; dq = V^T dlow; dV = dlow q^T; dU = x dq^T;
        // dx_low = U dq.
        let mut dq = vec![T::ZERO; rank];
        {
            let vflat = cache.v_gen.out.row(bi);
            let dvrow = dv_out.row_mut(bi);
            for o in 0..dout {
                let dl = alpha * darow[o];
                for j in 0..rank {
                    dvrow[o * rank + j] = dl * qrow[j];
                    dq[j] += vflat[o * rank + j] * dl;
                }
            }
        }
        {
            let durow = du_out.row_mut(bi);
            let dul = du_low.row_mut(bi);
            for k in 0..din {
                let mut s = T::ZERO;
                for j in 0..rank {
                    durow[k * rank + j] = xrow[k] * dq[j];
                    s += uflat[k * rank + j] * dq[j];
                }
                dul[k] = s;
            }
        }
    }
    generator_backward(&hl.u_gen, &mut ghl.u_gen, &cache.u_gen, &du_out, g, dg);
    generator_backward(&hl.v_gen, &mut ghl.v_gen, &cache.v_gen, &dv_out, g, dg);

    let mut dx = du_core;
    for (v, &d) in dx.as_mut_slice().iter_mut().zip(du_low.as_slice()) {
        *v += d;
    }
    dx
}

fn layernorm_backward<T: Real>(
    ln: &LayerNormParams<T>,
    gln: &mut LayerNormParams<T>,
    cache: &LayerNormCache<T>,
    dy: &Mat<T>,
) -> Mat<T> {
    let (bsz, h) = (dy.rows(), dy.cols());
    let hn: T = c(h as f64);
    let mut dx = Mat::zeros(bsz, h);
    let gamma = ln.gamma.as_slice();
    for bi in 0..bsz {
        let dyrow = dy.row(bi);
        let xh = cache.x_hat.row(bi);
        let inv = cache.inv_std[bi];
        {
            let dgam = gln.gamma.as_mut_slice();
            let dbet = gln.beta.as_mut_slice();
            for j in 0..h {
                dgam[j] += dyrow[j] * xh[j];
                dbet[j] += dyrow[j];
            }
        }
        let mut m1 = T::ZERO;
        let mut m2 = T::ZERO;
        let mut dxh = vec![T::ZERO; h];
        for j in 0..h {
            dxh[j] = dyrow[j] * gamma[j];
            m1 += dxh[j];
            m2 += dxh[j] * xh[j];
        }
        m1 /= hn;
        m2 /= hn;
        let dxrow = dx.row_mut(bi);
        for j in 0..h {
            dxrow[j] = inv * (dxh[j] - m1 - xh[j] * m2);
        }
    }
    dx
}
