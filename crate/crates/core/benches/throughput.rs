//! Throughput of the data-parallel kernels, comparing thread counts.
//!
//! With the default `parallel` feature each benchmark runs once on a
//! single-thread pool and once on a pool sized to the machine; the
//! sequential fallback (`--no-default-features`) benches the plain loops.
//! Kernels reduce within one output slot only, so results are identical
//! across all of these configurations.

use criterion::{criterion_group, criterion_main, Criterion};
use sthlm_core::distance::Metric;
use sthlm_core::flow::{init_model, loss_grad, prepare_cfm_batch, FlowArch, TrainStreams};
use sthlm_core::matrix::EmbeddingMatrix;
use sthlm_core::num::Mat;
use sthlm_core::rng::{stream_rng, StreamDomain};
use sthlm_core::sampler::{euler_generate, SampleConfig};
use sthlm_core::store::build_store;
use rand::Rng;
use rand_distr::StandardNormal;
use std::hint::black_box;

fn gaussian_matrix(n: usize, d: usize, idx: u64) -> EmbeddingMatrix {
    let mut rng = stream_rng(7, StreamDomain::Gaussian, idx);
    let data: Vec<f32> = (0..n * d)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z as f32
        })
        .collect();
    EmbeddingMatrix::new(n, d, data).unwrap()
}

fn with_threads<F: Fn()>(threads: usize, f: F) {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(f);
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f();
    }
}

fn thread_counts() -> Vec<usize> {
    #[cfg(feature = "parallel")]
    {
        let max = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        if max > 1 {
            vec![1, max]
        } else {
            vec![1]
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        vec![1]
    }
}

fn label(base: &str, threads: usize) -> String {
    if cfg!(feature = "parallel") {
        format!("{base}/threads={threads}")
    } else {
        format!("{base}/sequential")
    }
}

fn bench_knn(c: &mut Criterion) {
    let docs = gaussian_matrix(10_000, 64, 0);
    let store = build_store(&docs, Metric::Cosine).unwrap();
    let q = gaussian_matrix(1, 64, 1);
    for threads in thread_counts() {
        c.bench_function(&label("knn/10k_docs_d64_k10", threads), |b| {
            with_threads(threads, || {
                b.iter(|| black_box(store.knn(q.row(0), 10).unwrap()));
            });
        });
    }
}

fn bench_sampling(c: &mut Criterion) {
    let arch = FlowArch {
        input_dim: 16,
        hidden_dim: 128,
        time_dim: 16,
        cond_dim: 8,
        layers: 1,
        rank: 8,
    };
    let model = init_model::<f32>(&arch, 3).unwrap();
    let cond = vec![0.5f32; 8];
    let cfg = SampleConfig {
        n_samples: 64,
        euler_steps: 10,
        seed: 11,
        ..SampleConfig::default()
    };
    for threads in thread_counts() {
        c.bench_function(&label("sample/n64_steps10_h128", threads), |b| {
            with_threads(threads, || {
                b.iter(|| black_box(euler_generate(&model, Some(&cond), &cfg).unwrap()));
            });
        });
    }
}

fn bench_train_step(c: &mut Criterion) {
    let arch = FlowArch {
        input_dim: 16,
        hidden_dim: 256,
        time_dim: 16,
        cond_dim: 6,
        layers: 1,
        rank: 8,
    };
    let model = init_model::<f32>(&arch, 5).unwrap();
    let mut rng = stream_rng(9, StreamDomain::Gaussian, 2);
    let x = Mat::<f32>::from_fn(96, 16, |_, _| rng.random_range(-1.0f32..1.0));
    let cond = Mat::<f32>::from_fn(96, 6, |_, _| rng.random_range(0.0f32..1.0));
    for threads in thread_counts() {
        c.bench_function(&label("train_step/b96_h256", threads), |b| {
            with_threads(threads, || {
                let mut streams = TrainStreams::new(17);
                b.iter(|| {
                    let batch = prepare_cfm_batch(&model, &x, Some(&cond), 0.1, &mut streams);
                    black_box(loss_grad(&model, &batch).unwrap());
                });
            });
        });
    }
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_knn, bench_sampling, bench_train_step
}
criterion_main!(benches);
