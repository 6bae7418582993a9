//! The conditional velocity network and its training machinery.
//!
//! Architecture: the input point is projected into a hidden space and
//! refined by residual blocks of the form `x + HyperMLP(LayerNorm(x), g)`,
//! where a HyperMLP is two HyperLinear layers with a GELU between. The
//! modulation signal `g` fuses a sinusoidal-encoded timestep (passed
//! through a small MLP) with the batch-normalized, linearly projected
//! condition embedding. Each HyperLinear augments a static weight matrix
//! with condition-generated low-rank corrections, scale, and bias:
//!
//! `y = s(g) * (W x) + alpha [V(g) U(g)^T] x + b(g)`
//!
//! Gradients are exact reverse-mode derivatives written out by hand and
//! verified against central finite differences in the test suite.

mod adamw;
mod backward;
mod checkpoint;
mod forward;
mod params;
mod train;

pub use adamw::{adamw_step, lr_at_step, AdamHyper, AdamState};
pub use backward::{
    cfm_loss_grad, loss_grad, loss_only, prepare_cfm_batch, prepare_regression_batch,
    regression_loss_grad, LossBatch, LossOutput,
};
pub use checkpoint::{load_model, save_model, CHECKPOINT_VERSION};
pub use forward::{sinusoidal_embedding, ForwardCache};
pub use params::{
    init_model, BlockParams, CondBatchNormParams, FlowModel, GeneratorParams, HyperLinearParams,
    LayerNormParams, LinearParams,
};
pub use train::{train, TrainConfig, TrainReport, TrainStreams};

use crate::error::{Error, Result};
use crate::num::{c, Mat, Real};
use serde::{Deserialize, Serialize};

/// Initial value of every HyperLinear's low-rank gate `alpha`.
pub const ALPHA_INIT: f64 = 1e-2;

/// Epsilon inside LayerNorm and the condition batch-norm.
pub const NORM_EPS: f64 = 1e-5;

/// Momentum of the condition batch-norm running statistics.
pub const BN_MOMENTUM: f64 = 0.1;

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Flow matching: regress the velocity along noise-data interpolants.
    Cfm,
    /// Deterministic baseline: predict the target from `(0, c)` directly.
    Regression,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cfm" => Ok(Objective::Cfm),
            "regression" => Ok(Objective::Regression),
            other => Err(Error::InvalidParameter(format!(
                "unknown objective {other:?} (expected cfm or regression)"
            ))),
        }
    }
}

/// Architecture descriptor; fully determines every tensor shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowArch {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub time_dim: usize,
    pub cond_dim: usize,
    pub layers: usize,
    pub rank: usize,
}

impl FlowArch {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.hidden_dim == 0
            || self.time_dim == 0
            || self.cond_dim == 0
            || self.layers == 0
        {
            return Err(Error::InvalidParameter(
                "all architecture dimensions must be >= 1".into(),
            ));
        }
        if self.time_dim % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "time_dim must be even, got {}",
                self.time_dim
            )));
        }
        if self.rank == 0 || self.rank >= self.hidden_dim {
            return Err(Error::InvalidParameter(format!(
                "rank must satisfy 1 <= rank < hidden_dim ({} vs {})",
                self.rank, self.hidden_dim
            )));
        }
        Ok(())
    }
}

// Tanh form of GELU; the backward pass differentiates exactly this form.
pub(crate) fn gelu<T: Real>(x: T) -> T {
    let k: T = c(0.044715);
    let s: T = c((2.0 / std::f64::consts::PI).sqrt());
    let u = s * (x + k * x * x * x);
    c::<T>(0.5) * x * (T::ONE + u.tanh())
}

pub(crate) fn gelu_prime<T: Real>(x: T) -> T {
    let k: T = c(0.044715);
    let s: T = c((2.0 / std::f64::consts::PI).sqrt());
    let u = s * (x + k * x * x * x);
    let th = u.tanh();
    let sech2 = T::ONE - th * th;
    let du = s * (T::ONE + c::<T>(3.0) * k * x * x);
    c::<T>(0.5) * (T::ONE + th) + c::<T>(0.5) * x * sech2 * du
}

// y = x W^T (+ b): x is B×in, w is out×in, b is 1×out.
pub(crate) fn linear_forward<T: Real>(x: &Mat<T>, w: &Mat<T>, b: Option<&Mat<T>>) -> Mat<T> {
    let (bsz, din, dout) = (x.rows(), x.cols(), w.rows());
    debug_assert_eq!(w.cols(), din);
    let mut out = Mat::zeros(bsz, dout);
    crate::parallel::for_each_chunk_mut(out.as_mut_slice(), dout, |bi, orow| {
        let xrow = x.row(bi);
        for (o, slot) in orow.iter_mut().enumerate() {
            let wrow = w.row(o);
            let mut s = T::ZERO;
            for i in 0..din {
                s += wrow[i] * xrow[i];
            }
            if let Some(bias) = b {
                s += bias.as_slice()[o];
            }
            *slot = s;
        }
    });
    out
}

// dW[o][i] += sum_b delta[b][o] x[b][i]; db[o] += sum_b delta[b][o].
pub(crate) fn linear_backward_params<T: Real>(
    x: &Mat<T>,
    delta: &Mat<T>,
    dw: &mut Mat<T>,
    mut db: Option<&mut Mat<T>>,
) {
    let (bsz, din) = (x.rows(), x.cols());
    debug_assert_eq!(delta.rows(), bsz);
    crate::parallel::for_each_chunk_mut(dw.as_mut_slice(), din, |o, dwrow| {
        for bi in 0..bsz {
            let d = delta.row(bi)[o];
            let xrow = x.row(bi);
            for i in 0..din {
                dwrow[i] += d * xrow[i];
            }
        }
    });
    if let Some(db) = db.as_deref_mut() {
        for bi in 0..bsz {
            for (slot, &d) in db.as_mut_slice().iter_mut().zip(delta.row(bi)) {
                *slot += d;
            }
        }
    }
}

// dx[b][i] = sum_o delta[b][o] w[o][i].
pub(crate) fn linear_backward_input<T: Real>(delta: &Mat<T>, w: &Mat<T>) -> Mat<T> {
    let (bsz, dout, din) = (delta.rows(), delta.cols(), w.cols());
    debug_assert_eq!(w.rows(), dout);
    let mut dx = Mat::zeros(bsz, din);
    crate::parallel::for_each_chunk_mut(dx.as_mut_slice(), din, |bi, dxrow| {
        let drow = delta.row(bi);
        for o in 0..dout {
            let d = drow[o];
            let wrow = w.row(o);
            for i in 0..din {
                dxrow[i] += d * wrow[i];
            }
        }
    });
    dx
}
