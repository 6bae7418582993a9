use anyhow::Context;
use clap::Args;
use sthlm_core::coral::{coral_apply, coral_fit};
use sthlm_core::io::{load_embeddings, save_embeddings};
use std::path::PathBuf;

#[derive(Args)]
pub struct CoralArgs {
    /// Source embedding file to align (base name)
    #[arg(long)]
    pub source: PathBuf,
    /// Target embedding file providing the reference moments (base name)
    #[arg(long)]
    pub target: PathBuf,
    /// Output embedding file (base name); rows are unit-normalized
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: CoralArgs) -> anyhow::Result<()> {
    let source = load_embeddings(&args.source)
        .with_context(|| format!("loading source {}", args.source.display()))?;
    let target = load_embeddings(&args.target)
        .with_context(|| format!("loading target {}", args.target.display()))?;
    let model = coral_fit(&source, &target)?;
    let aligned = coral_apply(&model, &source)?;
    save_embeddings(&aligned, &args.out)?;
    eprintln!(
        "aligned {} rows of dimension {} to {}",
        aligned.rows(),
        aligned.cols(),
        args.out.display()
    );
    Ok(())
}
