//! Synthetic capacity benchmark: how classification degrades when labeled
//! Gaussian clusters are squeezed into fewer PCA dimensions, comparing a
//! gradient-trained cosine prototype classifier against classification by
//! nearest generated samples from a small conditional flow model.

use crate::error::{Error, Result};
use crate::flow::{train, FlowArch, Objective, TrainConfig};
use crate::matrix::EmbeddingMatrix;
use crate::num::Mat;
use crate::pca::{pca_fit, pca_project};
use crate::rng::{stream_rng, StreamDomain};
use crate::sampler::{euler_generate, SampleConfig};
use crate::store::{build_store, VectorStore};
use crate::distance::Metric;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CapacityBenchConfig {
    pub n_classes: usize,
    /// Training points per class (a fifth is held out to stop the
    /// prototype training).
    pub points_per_class: usize,
    pub test_per_class: usize,
    pub ambient_dim: usize,
    /// PCA target dimensionalities to sweep.
    pub reduced_dims: Vec<usize>,
    /// Distance of each class direction from the origin.
    pub separation: f64,
    /// Gaussian sub-clusters per class. Classes are multi-modal, the way
    /// hierarchically labeled data is; a single prototype cannot represent
    /// them once dimensions get scarce.
    pub modes_per_class: usize,
    /// Distance of each mode center from its class direction.
    pub mode_spread: f64,
    /// Isotropic noise scale around each mode center.
    pub noise_scale: f64,
    pub seed: u64,
    /// Generated samples per class for the generative classifier.
    pub samples_per_class: usize,
    /// Optimizer steps for the conditional flow model.
    pub cfm_steps: usize,
    pub cfm_batch: usize,
}

impl Default for CapacityBenchConfig {
    fn default() -> Self {
        Self {
            n_classes: 6,
            points_per_class: 200,
            test_per_class: 50,
            ambient_dim: 24,
            reduced_dims: vec![3, 6, 16],
            separation: 1.2,
            modes_per_class: 4,
            mode_spread: 3.5,
            noise_scale: 0.45,
            seed: 0,
            samples_per_class: 256,
            cfm_steps: 1800,
            cfm_batch: 96,
        }
    }
}

impl CapacityBenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::InvalidParameter("need at least 2 classes".into()));
        }
        if self.points_per_class < 5
            || self.test_per_class == 0
            || self.samples_per_class == 0
            || self.modes_per_class == 0
            || self.cfm_steps == 0
            || self.cfm_batch == 0
        {
            return Err(Error::InvalidParameter(
                "all counts must be >= 1 (and >= 5 training points per class)".into(),
            ));
        }
        if self.reduced_dims.is_empty() {
            return Err(Error::InvalidParameter("no reduced dimensions to sweep".into()));
        }
        for &k in &self.reduced_dims {
            if k == 0 || k > self.ambient_dim {
                return Err(Error::InvalidParameter(format!(
                    "reduced dim {k} outside 1..={}",
                    self.ambient_dim
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacityRow {
    pub reduced_dim: usize,
    pub method: String,
    pub accuracy: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacityReport {
    pub config: CapacityBenchConfig,
    pub rows: Vec<CapacityRow>,
}

#[doc(hidden)]
pub fn synth_fingerprint(cfg: &CapacityBenchConfig) -> (f64, f64, usize, usize) {
    let data = synthesize(cfg).unwrap();
    let ts: f64 = data.train.data().iter().map(|&v| v as f64).sum();
    let es: f64 = data.test.data().iter().map(|&v| v as f64).sum();
    (ts, es, data.train.rows(), data.test.rows())
}

struct SynthData {
    train: EmbeddingMatrix,
    train_labels: Vec<usize>,
    test: EmbeddingMatrix,
    test_labels: Vec<usize>,
}

// Labeled isotropic Gaussian clusters with centers `separation` from the
// origin in random directions.
// Labeled Gaussian clusters: class c gets a unit direction scaled by
// `separation`, and `modes_per_class` sub-cluster centers offset from it
// by random unit directions scaled by `mode_spread`. Points cycle through
// the modes of their class, the way hierarchically labeled data spreads a
// label over several distinct clusters.
fn synthesize(cfg: &CapacityBenchConfig) -> Result<SynthData> {
    let d = cfg.ambient_dim;
    let mut centers: Vec<Vec<Vec<f64>>> = Vec::with_capacity(cfg.n_classes);
    for class in 0..cfg.n_classes {
        let mut rng = stream_rng(cfg.seed, StreamDomain::Synth, class as u64);
        let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut modes = Vec::with_capacity(cfg.modes_per_class);
        for _ in 0..cfg.modes_per_class {
            let off: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let onorm: f64 = off.iter().map(|v| v * v).sum::<f64>().sqrt();
            modes.push(
                (0..d)
                    .map(|j| dir[j] / norm * cfg.separation + off[j] / onorm * cfg.mode_spread)
                    .collect::<Vec<f64>>(),
            );
        }
        centers.push(modes);
    }
    let draw_split = |count: usize, split: u64| -> (Vec<f32>, Vec<usize>) {
        let mut data = Vec::with_capacity(count * cfg.n_classes * d);
        let mut labels = Vec::with_capacity(count * cfg.n_classes);
        for class in 0..cfg.n_classes {
            let mut rng = stream_rng(
                cfg.seed,
                StreamDomain::Synth,
                1000 + split * 100 + class as u64,
            );
            for p in 0..count {
                let mode = &centers[class][p % cfg.modes_per_class];
                for j in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    data.push((mode[j] + cfg.noise_scale * z) as f32);
                }
                labels.push(class);
            }
        }
        (data, labels)
    };
    let (train_data, train_labels) = draw_split(cfg.points_per_class, 0);
    let (test_data, test_labels) = draw_split(cfg.test_per_class, 1);
    Ok(SynthData {
        train: EmbeddingMatrix::new(train_labels.len(), d, train_data)?,
        train_labels,
        test: EmbeddingMatrix::new(test_labels.len(), d, test_data)?,
        test_labels,
    })
}

fn cos_sim(x: &[f32], p: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nx = 0.0;
    let mut np = 0.0;
    for (xv, pv) in x.iter().zip(p) {
        dot += *xv as f64 * pv;
        nx += (*xv as f64) * (*xv as f64);
        np += pv * pv;
    }
    dot / (nx.sqrt() * np.sqrt()).max(1e-12)
}

/// One learnable prototype per class, trained with class-weighted softmax
/// cross-entropy over scaled cosine similarities; training stops when
/// held-out accuracy stops improving.
pub struct PrototypeClassifier {
    pub prototypes: Vec<Vec<f64>>,
}

impl PrototypeClassifier {
    pub fn classify(&self, x: &[f32]) -> usize {
        let mut best = 0;
        let mut best_s = f64::NEG_INFINITY;
        for (ci, p) in self.prototypes.iter().enumerate() {
            let s = cos_sim(x, p);
            if s > best_s {
                best_s = s;
                best = ci;
            }
        }
        best
    }

    pub fn accuracy(&self, x: &EmbeddingMatrix, y: &[usize]) -> f64 {
        let correct = (0..x.rows())
            .filter(|&i| self.classify(x.row(i)) == y[i])
            .count();
        correct as f64 / x.rows().max(1) as f64
    }
}

const PROTO_TEMPERATURE: f64 = 10.0;

pub fn train_prototypes(
    train: &EmbeddingMatrix,
    labels: &[usize],
    val: &EmbeddingMatrix,
    val_labels: &[usize],
    n_classes: usize,
) -> PrototypeClassifier {
    let k = train.cols();
    // Class means, so training starts near a sensible solution.
    let mut prototypes = vec![vec![0.0f64; k]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for (i, &y) in labels.iter().enumerate() {
        counts[y] += 1;
        for (pv, &xv) in prototypes[y].iter_mut().zip(train.row(i)) {
            *pv += xv as f64;
        }
    }
    for (p, &n) in prototypes.iter_mut().zip(&counts) {
        let n = n.max(1) as f64;
        p.iter_mut().for_each(|v| *v /= n);
    }
    // Inverse-frequency class weights.
    let total: usize = counts.iter().sum();
    let weights: Vec<f64> = counts
        .iter()
        .map(|&n| total as f64 / (n_classes as f64 * n.max(1) as f64))
        .collect();

    let mut m = vec![vec![0.0f64; k]; n_classes];
    let mut v = vec![vec![0.0f64; k]; n_classes];
    let (b1, b2, eps, lr) = (0.9, 0.999, 1e-8, 0.05);
    let mut best = PrototypeClassifier {
        prototypes: prototypes.clone(),
    };
    let mut best_acc = best.accuracy(val, val_labels);
    let mut stale = 0usize;
    for epoch in 1..=400usize {
        let mut grads = vec![vec![0.0f64; k]; n_classes];
        let mut weight_sum = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let x = train.row(i);
            let sims: Vec<f64> = prototypes.iter().map(|p| cos_sim(x, p)).collect();
            let logits: Vec<f64> = sims.iter().map(|s| s * PROTO_TEMPERATURE).collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let w = weights[y];
            weight_sum += w;
            let nx: f64 = x.iter().map(|&a| (a as f64) * (a as f64)).sum::<f64>().sqrt();
            for ci in 0..n_classes {
                let pi = exps[ci] / z;
                let dlogit = w * (pi - if ci == y { 1.0 } else { 0.0 });
                // d cos(x,p)/dp = x/(|x||p|) - cos * p/|p|^2
                let p = &prototypes[ci];
                let np: f64 = p.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
                let g = &mut grads[ci];
                for j in 0..k {
                    let dcos = x[j] as f64 / (nx * np) - sims[ci] * p[j] / (np * np);
                    g[j] += dlogit * PROTO_TEMPERATURE * dcos;
                }
            }
        }
        let scale = 1.0 / weight_sum.max(1e-12);
        for ci in 0..n_classes {
            for j in 0..k {
                let g = grads[ci][j] * scale;
                m[ci][j] = b1 * m[ci][j] + (1.0 - b1) * g;
                v[ci][j] = b2 * v[ci][j] + (1.0 - b2) * g * g;
                let mh = m[ci][j] / (1.0 - b1.powi(epoch as i32));
                let vh = v[ci][j] / (1.0 - b2.powi(epoch as i32));
                prototypes[ci][j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        if epoch % 5 == 0 {
            let cand = PrototypeClassifier {
                prototypes: prototypes.clone(),
            };
            let acc = cand.accuracy(val, val_labels);
            if acc > best_acc {
                best_acc = acc;
                best = cand;
                stale = 0;
            } else {
                stale += 1;
                if stale >= 5 {
                    break;
                }
            }
        }
    }
    best
}

// 3-NN majority vote over a labeled store of generated samples; ties go to
// the class with smaller summed distance, then the smaller class index.
fn knn_vote_classify(
    store: &VectorStore,
    sample_labels: &[usize],
    x: &[f32],
    n_classes: usize,
) -> usize {
    let hits = store.knn_indices(x, 3).expect("validated dims");
    let mut votes = vec![0usize; n_classes];
    let mut dist_sum = vec![0.0f64; n_classes];
    for (idx, d) in hits {
        votes[sample_labels[idx]] += 1;
        dist_sum[sample_labels[idx]] += d;
    }
    let mut best = 0usize;
    for ci in 1..n_classes {
        let better = votes[ci] > votes[best]
            || (votes[ci] == votes[best] && votes[ci] > 0 && dist_sum[ci] < dist_sum[best]);
        if better {
            best = ci;
        }
    }
    best
}

/// Run the benchmark: for each reduced dimension, PCA-project the clusters
/// and score (a) the prototype baseline and (b) classification by nearest
/// generated samples from a conditional flow model (hidden width 256).
pub fn capacity_bench(cfg: &CapacityBenchConfig) -> Result<CapacityReport> {
    cfg.validate()?;
    let data = synthesize(cfg)?;
    let n_train = data.train.rows();
    // Hold out a fifth of the training points for prototype early stopping.
    let val_stride = 5;
    let fit_idx: Vec<usize> = (0..n_train).filter(|i| i % val_stride != 0).collect();
    let val_idx: Vec<usize> = (0..n_train).filter(|i| i % val_stride == 0).collect();

    let mut rows = Vec::new();
    for &k in &cfg.reduced_dims {
        let pca = pca_fit(&data.train, k)?;
        let train_p = pca_project(&data.train, &pca)?;
        let test_p = pca_project(&data.test, &pca)?;
        let fit = train_p.take_rows(&fit_idx)?;
        let fit_labels: Vec<usize> = fit_idx.iter().map(|&i| data.train_labels[i]).collect();
        let val = train_p.take_rows(&val_idx)?;
        let val_labels: Vec<usize> = val_idx.iter().map(|&i| data.train_labels[i]).collect();

        // (a) prototype baseline
        let t0 = std::time::Instant::now();
        let proto = train_prototypes(&fit, &fit_labels, &val, &val_labels, cfg.n_classes);
        let proto_acc = proto.accuracy(&test_p, &data.test_labels);
        rows.push(CapacityRow {
            reduced_dim: k,
            method: "prototype".into(),
            accuracy: proto_acc,
            runtime_s: t0.elapsed().as_secs_f64(),
        });

        // (b) generative: conditional flow model on the projected points
        let t0 = std::time::Instant::now();
        let onehot = Mat::<f32>::from_fn(cfg.n_classes, cfg.n_classes, |i, j| {
            if i == j {
                1.0
            } else {
                0.0
            }
        });
        let conditions = EmbeddingMatrix::new(
            cfg.n_classes,
            cfg.n_classes,
            onehot.as_slice().to_vec(),
        )?;
        let pairs: Vec<(usize, usize)> = (0..train_p.rows())
            .map(|i| (data.train_labels[i], i))
            .collect();
        let batches_per_epoch = pairs.len().div_ceil(cfg.cfm_batch);
        let epochs = (cfg.cfm_steps.div_ceil(batches_per_epoch)).max(1);
        let train_cfg = TrainConfig {
            learning_rate: 2e-3,
            weight_decay: 1e-5,
            warmup_steps: 100,
            batch_size: cfg.cfm_batch,
            epochs,
            cond_dropout: 0.10,
            objective: Objective::Cfm,
            seed: cfg.seed,
        };
        let arch = FlowArch {
            input_dim: k,
            hidden_dim: 256,
            time_dim: 16,
            cond_dim: cfg.n_classes,
            layers: 1,
            rank: 8,
        };
        let (model, _report) = train::<f32>(&train_p, Some(&conditions), &pairs, &train_cfg, &arch)?;

        let mut gen_rows: Vec<Vec<f32>> = Vec::new();
        let mut gen_labels = Vec::new();
        for class in 0..cfg.n_classes {
            let mut cond_row = vec![0.0f32; cfg.n_classes];
            cond_row[class] = 1.0;
            let sample_cfg = SampleConfig {
                n_samples: cfg.samples_per_class,
                euler_steps: 10,
                guidance_scale: 1.0,
                local_start_time: None,
                seed: cfg.seed,
                stream_offset: (class * cfg.samples_per_class) as u64,
            };
            let samples = euler_generate(&model, Some(&cond_row), &sample_cfg)?;
            for i in 0..samples.rows() {
                gen_rows.push(samples.row(i).to_vec());
                gen_labels.push(class);
            }
        }
        let gen_matrix = EmbeddingMatrix::from_rows(&gen_rows)?;
        let store = build_store(&gen_matrix, Metric::Euclidean)?;
        let correct = (0..test_p.rows())
            .filter(|&i| {
                knn_vote_classify(&store, &gen_labels, test_p.row(i), cfg.n_classes)
                    == data.test_labels[i]
            })
            .count();
        rows.push(CapacityRow {
            reduced_dim: k,
            method: "generative".into(),
            accuracy: correct as f64 / test_p.rows() as f64,
            runtime_s: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(CapacityReport {
        config: cfg.clone(),
        rows,
    })
}
