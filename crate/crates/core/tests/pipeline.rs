//! Cross-module fixtures: training feeding sampling feeding retrieval.

use sthlm_core::flow::{
    cfm_loss_grad, init_model, regression_loss_grad, train, FlowArch, Objective, TrainConfig,
    TrainStreams,
};
use sthlm_core::matrix::EmbeddingMatrix;
use sthlm_core::num::Mat;
use sthlm_core::rng::{stream_rng, StreamDomain};
use sthlm_core::sampler::{euler_generate, local_sample, SampleConfig};
use rand::Rng;
use rand_distr::StandardNormal;

fn small_arch(input: usize, cond: usize) -> FlowArch {
    FlowArch {
        input_dim: input,
        hidden_dim: 48,
        time_dim: 8,
        cond_dim: cond,
        layers: 1,
        rank: 8,
    }
}

#[test]
fn repeated_point_collapses_generation() {
    // A degenerate target distribution: every target is the same point.
    // The learned flow must transport noise onto that point.
    let point = [1.5f32, -0.75];
    let n = 256;
    let mut data = Vec::with_capacity(n * 2);
    for _ in 0..n {
        data.extend_from_slice(&point);
    }
    let targets = EmbeddingMatrix::new(n, 2, data).unwrap();
    let pairs: Vec<(usize, usize)> = (0..n).map(|i| (0, i)).collect();
    let cfg = TrainConfig {
        learning_rate: 2e-3,
        warmup_steps: 50,
        batch_size: 128,
        epochs: 400,
        objective: Objective::Cfm,
        seed: 5,
        ..TrainConfig::default()
    };
    let (model, _) = train::<f32>(&targets, None, &pairs, &cfg, &small_arch(2, 1)).unwrap();
    let samples = euler_generate(
        &model,
        None,
        &SampleConfig {
            n_samples: 200,
            euler_steps: 10,
            seed: 11,
            ..SampleConfig::default()
        },
    )
    .unwrap();
    let mean_err: f64 = (0..samples.rows())
        .map(|i| {
            samples
                .row(i)
                .iter()
                .zip(&point)
                .map(|(&a, &b)| ((a - b) as f64).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / samples.rows() as f64;
    assert!(mean_err < 0.1, "mean sample error {mean_err}");
}

#[test]
fn regression_learns_conditional_means() {
    // Least squares collapses to the conditional mean: f(0, c) must land
    // near the class center.
    let d = 4;
    let n_per = 300;
    let mut rng = stream_rng(2, StreamDomain::Synth, 3);
    let mut data = Vec::new();
    let mut pairs = Vec::new();
    for i in 0..2 * n_per {
        let class = i % 2;
        let center = if class == 0 { 3.0 } else { -3.0 };
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            let mu = if j == 0 { center } else { 0.0 };
            data.push((mu + 0.5 * z) as f32);
        }
        pairs.push((class, i));
    }
    let targets = EmbeddingMatrix::new(2 * n_per, d, data).unwrap();
    let conds = EmbeddingMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let cfg = TrainConfig {
        learning_rate: 2e-3,
        warmup_steps: 50,
        batch_size: 128,
        epochs: 240,
        objective: Objective::Regression,
        seed: 7,
        ..TrainConfig::default()
    };
    let arch = small_arch(d, 2);
    let (model, report) = train::<f32>(&targets, Some(&conds), &pairs, &cfg, &arch).unwrap();
    assert!(report.epoch_loss.last().unwrap() < &report.epoch_loss[0]);

    for class in 0..2usize {
        let mut cond = Mat::<f32>::zeros(1, 2);
        cond.row_mut(0)[class] = 1.0;
        let pred = model
            .forward(&Mat::zeros(1, d), &[0.0], Some(&cond))
            .unwrap();
        let truth = if class == 0 { 3.0f64 } else { -3.0 };
        let stats = &model.standardize;
        let destd: Vec<f64> = (0..d)
            .map(|j| pred.row(0)[j] as f64 * stats.std[j] as f64 + stats.mean[j] as f64)
            .collect();
        let err = ((destd[0] - truth).powi(2)
            + destd[1].powi(2)
            + destd[2].powi(2)
            + destd[3].powi(2))
        .sqrt();
        assert!(err < 0.3, "class {class}: f(0,c) misses mean by {err}");
    }
}

#[test]
fn local_sampling_at_time_one_equals_full_generation() {
    // t0 = 1 injects pure noise, so the trajectory is identical to full
    // generation bit for bit under the same seed and streams.
    let mut model = init_model::<f32>(&small_arch(3, 1), 9).unwrap();
    let mut rng = stream_rng(9, StreamDomain::Init, 77);
    for (_, tensor, trainable) in model.tensors_mut() {
        if trainable {
            for v in tensor.as_mut_slice() {
                *v += rng.random_range(-0.1..0.1);
            }
        }
    }
    let cfg_full = SampleConfig {
        n_samples: 6,
        euler_steps: 10,
        seed: 31,
        ..SampleConfig::default()
    };
    let cfg_local = SampleConfig {
        local_start_time: Some(1.0),
        ..cfg_full.clone()
    };
    let full = euler_generate(&model, None, &cfg_full).unwrap();
    let local = local_sample(&model, &[0.4, -0.2, 0.9], None, &cfg_local).unwrap();
    assert_eq!(full.data(), local.data());
}

#[test]
fn regression_gradients_flow_through_cli_scale_model() {
    // A mid-size configuration exercised the way the CLI wires it.
    let arch = FlowArch {
        input_dim: 6,
        hidden_dim: 32,
        time_dim: 8,
        cond_dim: 3,
        layers: 2,
        rank: 4,
    };
    let model = init_model::<f64>(&arch, 17).unwrap();
    let x = Mat::from_fn(4, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.2 - 0.4);
    let cond = Mat::from_fn(4, 3, |i, j| ((i + j) % 3) as f64 * 0.5 - 0.5);
    let out = regression_loss_grad(&model, &x, Some(&cond)).unwrap();
    assert!(out.loss.is_finite());

    // On a flow-matching batch (nonzero trunk input), the low-rank path is
    // alive at init: V's output layer sees a gradient through
    // q = U^T x with U = [I_r; 0], while the generators' hidden layers
    // stay silent until their output weights move.
    let mut streams = TrainStreams::new(23);
    let cfm = cfm_loss_grad(&model, &x, Some(&cond), 0.0, &mut streams).unwrap();
    let g = &cfm.grads.blocks[0].hl1;
    assert!(g.u_gen.l1.w.as_slice().iter().all(|&v| v == 0.0));
    assert!(g.v_gen.l2.w.as_slice().iter().any(|&v| v != 0.0));
    assert!(g.s_gen.l2.b.as_slice().iter().any(|&v| v != 0.0));
}
