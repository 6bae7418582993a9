use anyhow::Context;
use clap::Args;
use sthlm_core::flow::{load_model, Objective};
use sthlm_core::io::{load_embeddings, save_embeddings};
use sthlm_core::matrix::EmbeddingMatrix;
use sthlm_core::num::Mat;
use sthlm_core::sampler::{euler_generate, guidance_warning, local_sample, SampleConfig};
use std::path::PathBuf;

#[derive(Args)]
pub struct SampleArgs {
    /// Checkpoint base name
    #[arg(long)]
    pub model: PathBuf,
    /// Output embedding file (base name)
    #[arg(long)]
    pub out: PathBuf,
    /// Number of samples to generate
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Euler ODE steps
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// Classifier-free guidance scale
    #[arg(long, default_value_t = 1.0)]
    pub guidance: f64,
    /// Local sampling start time in [0,1]; requires --query-file
    #[arg(long)]
    pub local_t: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Condition embedding file (base name)
    #[arg(long)]
    pub condition_file: Option<PathBuf>,
    /// Row of the condition file to condition on
    #[arg(long, default_value_t = 0)]
    pub condition_row: usize,
    /// Query embedding file for local sampling (base name)
    #[arg(long)]
    pub query_file: Option<PathBuf>,
    /// Row of the query file to sample around
    #[arg(long, default_value_t = 0)]
    pub query_row: usize,
}

pub fn run(args: SampleArgs) -> anyhow::Result<()> {
    let model = load_model::<f32>(&args.model)
        .with_context(|| format!("loading checkpoint {}", args.model.display()))?;

    let cond_matrix = match &args.condition_file {
        Some(base) => Some(load_embeddings(base)?),
        None => None,
    };
    let cond_row: Option<Vec<f32>> = match &cond_matrix {
        Some(m) => {
            if args.condition_row >= m.rows() {
                anyhow::bail!(sthlm_core::Error::InvalidParameter(format!(
                    "condition row {} out of range {}",
                    args.condition_row,
                    m.rows()
                )));
            }
            Some(m.row(args.condition_row).to_vec())
        }
        None => None,
    };

    if let Some(msg) = guidance_warning(&model, args.guidance, cond_row.is_some()) {
        eprintln!("warning: {msg}");
    }

    let cfg = SampleConfig {
        n_samples: args.n,
        euler_steps: args.steps,
        guidance_scale: args.guidance,
        local_start_time: args.local_t,
        seed: args.seed,
        stream_offset: 0,
    };

    let samples = if model.objective == Objective::Regression {
        // Deterministic baseline: the prediction is f(0, c), replicated.
        if args.n > 1 {
            eprintln!("warning: regression models are deterministic; all {} rows are identical", args.n);
        }
        regression_predict(&model, cond_row.as_deref(), args.n)?
    } else if let Some(t0) = args.local_t {
        let query_base = args.query_file.as_ref().ok_or_else(|| {
            sthlm_core::Error::InvalidParameter(
                "--local-t requires --query-file (the embedding to sample around)".into(),
            )
        })?;
        let queries = load_embeddings(query_base)?;
        if args.query_row >= queries.rows() {
            anyhow::bail!(sthlm_core::Error::InvalidParameter(format!(
                "query row {} out of range {}",
                args.query_row,
                queries.rows()
            )));
        }
        let _ = t0;
        local_sample(&model, queries.row(args.query_row), cond_row.as_deref(), &cfg)?
    } else {
        euler_generate(&model, cond_row.as_deref(), &cfg)?
    };

    save_embeddings(&samples, &args.out)?;
    eprintln!(
        "wrote {} samples of dimension {} to {}",
        samples.rows(),
        samples.cols(),
        args.out.display()
    );
    Ok(())
}

fn regression_predict(
    model: &sthlm_core::flow::FlowModel<f32>,
    cond_row: Option<&[f32]>,
    n: usize,
) -> anyhow::Result<EmbeddingMatrix> {
    let d = model.arch.input_dim;
    let zeros = Mat::<f32>::zeros(1, d);
    let cond = cond_row.map(|row| {
        let mut m = Mat::<f32>::zeros(1, row.len());
        m.row_mut(0).copy_from_slice(row);
        m
    });
    let out = model.forward(&zeros, &[0.0], cond.as_ref())?;
    let stats = &model.standardize;
    let row: Vec<f32> = (0..d)
        .map(|j| out.row(0)[j] * stats.std[j] + stats.mean[j])
        .collect();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        data.extend_from_slice(&row);
    }
    Ok(EmbeddingMatrix::new(n, d, data)?)
}
