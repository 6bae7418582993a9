use anyhow::Context;
use clap::Args;
use sthlm_core::io::{load_embeddings, save_embeddings};
use sthlm_core::pca::{pca_fit, pca_project};
use std::path::PathBuf;

#[derive(Args)]
pub struct PcaArgs {
    /// Input embedding file (base name)
    #[arg(long)]
    pub input: PathBuf,
    /// Number of principal components to keep
    #[arg(long)]
    pub k: usize,
    /// Output embedding file (base name)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: bool,
}

pub fn run(args: PcaArgs) -> anyhow::Result<()> {
    let x = load_embeddings(&args.input)
        .with_context(|| format!("loading {}", args.input.display()))?;
    let model = pca_fit(&x, args.k)?;
    let projected = pca_project(&x, &model)?;
    save_embeddings(&projected, &args.out)?;

    let total: f64 = model.explained_variance.iter().sum();
    if args.json {
        let payload = serde_json::json!({
            "input_dim": model.input_dim,
            "output_dim": model.output_dim,
            "count": projected.rows(),
            "explained_variance": model.explained_variance,
        });
        println!("{}", serde_json::to_string_pretty(&payload)?);
    } else {
        println!(
            "projected {} rows: {} -> {} dimensions",
            projected.rows(),
            model.input_dim,
            model.output_dim
        );
        for (i, v) in model.explained_variance.iter().enumerate() {
            println!("  component {:>3}: variance {:.6} ({:.2}% of kept)", i, v, 100.0 * v / total.max(1e-300));
        }
    }
    Ok(())
}
