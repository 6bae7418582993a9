//! Parameter containers, initialization, and tensor visitors.

use super::{FlowArch, Objective, ALPHA_INIT};
use crate::error::Result;
use crate::num::{c, Mat, Real};
use crate::rng::{stream_rng, StreamDomain};
use crate::standardize::StandardizeStats;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams<T> {
    /// out×in.
    pub w: Mat<T>,
    /// 1×out.
    pub b: Mat<T>,
}

/// One-hidden-layer perceptron (GELU activation) generating a dynamic
/// component from the fused conditional embedding; hidden width equals
/// the embedding width.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams<T> {
    pub l1: LinearParams<T>,
    pub l2: LinearParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperLinearParams<T> {
    /// Static weight, out×in.
    pub w: Mat<T>,
    /// 1×1 gate on the low-rank correction.
    pub alpha: Mat<T>,
    /// Generates U, in×rank (flattened row-major).
    pub u_gen: GeneratorParams<T>,
    /// Generates V, out×rank.
    pub v_gen: GeneratorParams<T>,
    /// Generates the bias, out.
    pub b_gen: GeneratorParams<T>,
    /// Generates the scale, out.
    pub s_gen: GeneratorParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams<T> {
    pub gamma: Mat<T>,
    pub beta: Mat<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<T> {
    pub norm: LayerNormParams<T>,
    pub hl1: HyperLinearParams<T>,
    pub hl2: HyperLinearParams<T>,
}

/// Batch norm over the raw condition; running statistics are buffers, not
/// trainable parameters, and are frozen at inference.
#[derive(Debug, Clone, PartialEq)]
pub struct CondBatchNormParams<T> {
    pub gamma: Mat<T>,
    pub beta: Mat<T>,
    pub running_mean: Mat<T>,
    pub running_var: Mat<T>,
}

/// All learnable parameters plus the stored standardization of the target
/// space and bookkeeping recorded at training time.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel<T> {
    pub arch: FlowArch,
    pub objective: Objective,
    /// Condition-dropout probability the model was trained with; 0 when
    /// untrained or trained without dropout.
    pub cond_dropout_used: f32,
    pub standardize: StandardizeStats,
    pub input_proj: LinearParams<T>,
    pub cond_bn: CondBatchNormParams<T>,
    pub cond_proj: LinearParams<T>,
    pub time_l1: LinearParams<T>,
    pub time_l2: LinearParams<T>,
    pub fuse: LinearParams<T>,
    pub blocks: Vec<BlockParams<T>>,
    pub output_proj: LinearParams<T>,
}

fn linear_zeros<T: Real>(out: usize, inp: usize) -> LinearParams<T> {
    LinearParams {
        w: Mat::zeros(out, inp),
        b: Mat::zeros(1, out),
    }
}

fn generator_zeros<T: Real>(g_dim: usize, out: usize) -> GeneratorParams<T> {
    GeneratorParams {
        l1: linear_zeros(g_dim, g_dim),
        l2: linear_zeros(out, g_dim),
    }
}

fn hyperlinear_zeros<T: Real>(dout: usize, din: usize, rank: usize, g_dim: usize) -> HyperLinearParams<T> {
    HyperLinearParams {
        w: Mat::zeros(dout, din),
        alpha: Mat::zeros(1, 1),
        u_gen: generator_zeros(g_dim, din * rank),
        v_gen: generator_zeros(g_dim, dout * rank),
        b_gen: generator_zeros(g_dim, dout),
        s_gen: generator_zeros(g_dim, dout),
    }
}

impl<T: Real> FlowModel<T> {
    /// All tensors zero; the shape donor for gradients and optimizer state.
    pub fn zeros(arch: &FlowArch) -> Result<Self> {
        arch.validate()?;
        let (dx, h, dt, dc) = (arch.input_dim, arch.hidden_dim, arch.time_dim, arch.cond_dim);
        let blocks = (0..arch.layers)
            .map(|_| BlockParams {
                norm: LayerNormParams {
                    gamma: Mat::zeros(1, h),
                    beta: Mat::zeros(1, h),
                },
                hl1: hyperlinear_zeros(h, h, arch.rank, dc),
                hl2: hyperlinear_zeros(h, h, arch.rank, dc),
            })
            .collect();
        Ok(Self {
            arch: arch.clone(),
            objective: Objective::Cfm,
            cond_dropout_used: 0.0,
            standardize: StandardizeStats::identity(dx),
            input_proj: linear_zeros(h, dx),
            cond_bn: CondBatchNormParams {
                gamma: Mat::zeros(1, dc),
                beta: Mat::zeros(1, dc),
                running_mean: Mat::zeros(1, dc),
                running_var: Mat::zeros(1, dc),
            },
            cond_proj: linear_zeros(dc, dc),
            time_l1: linear_zeros(dt, dt),
            time_l2: linear_zeros(dt, dt),
            fuse: linear_zeros(dc, dt + dc),
            blocks,
            output_proj: linear_zeros(dx, h),
        })
    }

    /// Gradient / moment buffer with the same shapes as `self`.
    pub fn zero_like(&self) -> Self {
        let mut z = Self::zeros(&self.arch).expect("shapes already validated");
        z.objective = self.objective;
        z
    }

    /// Visit `(name, tensor, trainable)` in a fixed order shared by
    /// gradients, optimizer state, and checkpoints.
    pub fn tensors(&self) -> Vec<(String, &Mat<T>, bool)> {
        let mut v: Vec<(String, &Mat<T>, bool)> = Vec::new();
        fn lin<'a, T>(v: &mut Vec<(String, &'a Mat<T>, bool)>, name: &str, l: &'a LinearParams<T>) {
            v.push((format!("{name}.w"), &l.w, true));
            v.push((format!("{name}.b"), &l.b, true));
        }
        lin(&mut v, "input_proj", &self.input_proj);
        v.push(("cond_bn.gamma".into(), &self.cond_bn.gamma, true));
        v.push(("cond_bn.beta".into(), &self.cond_bn.beta, true));
        v.push(("cond_bn.running_mean".into(), &self.cond_bn.running_mean, false));
        v.push(("cond_bn.running_var".into(), &self.cond_bn.running_var, false));
        lin(&mut v, "cond_proj", &self.cond_proj);
        lin(&mut v, "time_mlp.l1", &self.time_l1);
        lin(&mut v, "time_mlp.l2", &self.time_l2);
        lin(&mut v, "fuse", &self.fuse);
        for (i, blk) in self.blocks.iter().enumerate() {
            v.push((format!("blocks.{i}.norm.gamma"), &blk.norm.gamma, true));
            v.push((format!("blocks.{i}.norm.beta"), &blk.norm.beta, true));
            for (tag, hl) in [("hl1", &blk.hl1), ("hl2", &blk.hl2)] {
                let base = format!("blocks.{i}.{tag}");
                v.push((format!("{base}.w"), &hl.w, true));
                v.push((format!("{base}.alpha"), &hl.alpha, true));
                for (gtag, gen) in [
                    ("u_gen", &hl.u_gen),
                    ("v_gen", &hl.v_gen),
                    ("b_gen", &hl.b_gen),
                    ("s_gen", &hl.s_gen),
                ] {
                    lin(&mut v, &format!("{base}.{gtag}.l1"), &gen.l1);
                    lin(&mut v, &format!("{base}.{gtag}.l2"), &gen.l2);
                }
            }
        }
        lin(&mut v, "output_proj", &self.output_proj);
        v
    }

    /// Mutable counterpart of [`FlowModel::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Mat<T>, bool)> {
        let mut v: Vec<(String, &mut Mat<T>, bool)> = Vec::new();
        fn lin<'a, T>(v: &mut Vec<(String, &'a mut Mat<T>, bool)>, name: &str, l: &'a mut LinearParams<T>) {
            v.push((format!("{name}.w"), &mut l.w, true));
            v.push((format!("{name}.b"), &mut l.b, true));
        }
        lin(&mut v, "input_proj", &mut self.input_proj);
        v.push(("cond_bn.gamma".into(), &mut self.cond_bn.gamma, true));
        v.push(("cond_bn.beta".into(), &mut self.cond_bn.beta, true));
        v.push(("cond_bn.running_mean".into(), &mut self.cond_bn.running_mean, false));
        v.push(("cond_bn.running_var".into(), &mut self.cond_bn.running_var, false));
        lin(&mut v, "cond_proj", &mut self.cond_proj);
        lin(&mut v, "time_mlp.l1", &mut self.time_l1);
        lin(&mut v, "time_mlp.l2", &mut self.time_l2);
        lin(&mut v, "fuse", &mut self.fuse);
        for (i, blk) in self.blocks.iter_mut().enumerate() {
            v.push((format!("blocks.{i}.norm.gamma"), &mut blk.norm.gamma, true));
            v.push((format!("blocks.{i}.norm.beta"), &mut blk.norm.beta, true));
            for (tag, hl) in [("hl1", &mut blk.hl1), ("hl2", &mut blk.hl2)] {
                let base = format!("blocks.{i}.{tag}");
                v.push((format!("{base}.w"), &mut hl.w, true));
                v.push((format!("{base}.alpha"), &mut hl.alpha, true));
                for (gtag, gen) in [
                    ("u_gen", &mut hl.u_gen),
                    ("v_gen", &mut hl.v_gen),
                    ("b_gen", &mut hl.b_gen),
                    ("s_gen", &mut hl.s_gen),
                ] {
                    lin(&mut v, &format!("{base}.{gtag}.l1"), &mut gen.l1);
                    lin(&mut v, &format!("{base}.{gtag}.l2"), &mut gen.l2);
                }
            }
        }
        lin(&mut v, "output_proj", &mut self.output_proj);
        v
    }

    pub fn param_count(&self) -> usize {
        self.tensors()
            .iter()
            .filter(|(_, _, trainable)| *trainable)
            .map(|(_, m, _)| m.len())
            .sum()
    }

    /// Same model at another precision (tensor-wise value cast).
    pub fn cast_model<U: Real>(&self) -> FlowModel<U> {
        let mut out = FlowModel::<U>::zeros(&self.arch).expect("shapes already validated");
        out.objective = self.objective;
        out.cond_dropout_used = self.cond_dropout_used;
        out.standardize = self.standardize.clone();
        let src = self.tensors();
        for (i, (_, tensor, _)) in out.tensors_mut().into_iter().enumerate() {
            *tensor = src[i].1.cast();
        }
        out
    }
}

fn fan_in_init<T: Real, R: Rng>(w: &mut Mat<T>, rng: &mut R) {
    let fan_in = w.cols().max(1) as f64;
    let lim = 1.0 / fan_in.sqrt();
    for v in w.as_mut_slice() {
        *v = c(rng.random_range(-lim..lim));
    }
}

/// Fresh model. Static weights get fan-in-scaled uniform init; the dynamic
/// generators' output layers are constant (zero weights), producing
/// `V(g) = 0`, `b(g) = 0`, `s(g) = 1`, and `U(g) = [I_r; 0]` for every g,
/// so the model is exactly a static linear stack at initialization,
/// independent of the condition and the timestep.
///
/// U starts at the identity pattern rather than zero: with both low-rank
/// factors at exactly zero, each factor's gradient is proportional to the
/// other and the correction path could never leave zero.
pub fn init_model<T: Real>(arch: &FlowArch, seed: u64) -> Result<FlowModel<T>> {
    let mut model = FlowModel::<T>::zeros(arch)?;
    let mut rng = stream_rng(seed, StreamDomain::Init, 0);

    fan_in_init(&mut model.input_proj.w, &mut rng);
    fan_in_init(&mut model.cond_proj.w, &mut rng);
    fan_in_init(&mut model.time_l1.w, &mut rng);
    fan_in_init(&mut model.time_l2.w, &mut rng);
    fan_in_init(&mut model.fuse.w, &mut rng);
    fan_in_init(&mut model.output_proj.w, &mut rng);

    model.cond_bn.gamma.fill(T::ONE);
    model.cond_bn.running_var.fill(T::ONE);

    for blk in &mut model.blocks {
        blk.norm.gamma.fill(T::ONE);
        for hl in [&mut blk.hl1, &mut blk.hl2] {
            fan_in_init(&mut hl.w, &mut rng);
            hl.alpha.as_mut_slice()[0] = c(ALPHA_INIT);
            for gen in [&mut hl.u_gen, &mut hl.v_gen, &mut hl.b_gen, &mut hl.s_gen] {
                fan_in_init(&mut gen.l1.w, &mut rng);
                // l2 weights stay zero; the output is set by the bias.
            }
            hl.s_gen.l2.b.fill(T::ONE); // s(g) = 1 for every g
            // U(g) = [I_r; 0] for every g (row-major d_in x rank).
            let rank = arch.rank;
            for k in 0..rank {
                hl.u_gen.l2.b.as_mut_slice()[k * rank + k] = T::ONE;
            }
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_arch() -> FlowArch {
        FlowArch {
            input_dim: 4,
            hidden_dim: 6,
            time_dim: 4,
            cond_dim: 3,
            layers: 1,
            rank: 2,
        }
    }

    #[test]
    fn same_seed_identical_parameters() {
        let a: FlowModel<f32> = init_model(&tiny_arch(), 9).unwrap();
        let b: FlowModel<f32> = init_model(&tiny_arch(), 9).unwrap();
        assert_eq!(a, b);
        let c: FlowModel<f32> = init_model(&tiny_arch(), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn alpha_initialized_to_configured_constant() {
        let m: FlowModel<f64> = init_model(&tiny_arch(), 0).unwrap();
        for blk in &m.blocks {
            assert_eq!(blk.hl1.alpha.as_slice()[0], ALPHA_INIT);
            assert_eq!(blk.hl2.alpha.as_slice()[0], ALPHA_INIT);
        }
    }

    #[test]
    fn visitor_orders_agree() {
        let mut m: FlowModel<f32> = init_model(&tiny_arch(), 1).unwrap();
        let names: Vec<String> = m.tensors().into_iter().map(|(n, _, _)| n).collect();
        let names_mut: Vec<String> = m.tensors_mut().into_iter().map(|(n, _, _)| n).collect();
        assert_eq!(names, names_mut);
        // 16 trunk/condition/time tensors + 38 per block.
        assert_eq!(names.len(), 16 + 38);
    }

    #[test]
    fn rank_validation() {
        let mut arch = tiny_arch();
        arch.rank = 6;
        assert!(init_model::<f32>(&arch, 0).is_err());
        arch.rank = 0;
        assert!(init_model::<f32>(&arch, 0).is_err());
    }

    #[test]
    fn param_count_excludes_buffers() {
        let m: FlowModel<f64> = init_model(&tiny_arch(), 2).unwrap();
        let total: usize = m.tensors().iter().map(|(_, t, _)| t.len()).sum();
        assert_eq!(total - m.param_count(), 2 * m.arch.cond_dim);
    }
}
