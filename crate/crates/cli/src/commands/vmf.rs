use anyhow::Context;
use clap::Args;
use sthlm_core::io::load_embeddings;
use sthlm_core::vmf::{vmf_classify, vmf_fit};
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Args)]
pub struct VmfArgs {
    /// Directory of class-partitioned training embeddings: every
    /// `<label>.meta.json` + `<label>.f32` pair defines one class
    #[arg(long)]
    pub train_dir: PathBuf,
    /// Test embedding file (base name); rows must be unit-norm
    #[arg(long)]
    pub test: PathBuf,
    /// Output TSV: `row_id \t predicted_label \t score:<label>...`
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: VmfArgs) -> anyhow::Result<()> {
    let mut bases: Vec<(String, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(&args.train_dir)
        .with_context(|| format!("reading {}", args.train_dir.display()))?
    {
        let path = entry?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned());
        if let Some(name) = name {
            if let Some(label) = name.strip_suffix(".meta.json") {
                bases.push((label.to_string(), args.train_dir.join(label)));
            }
        }
    }
    bases.sort();
    if bases.is_empty() {
        anyhow::bail!(sthlm_core::Error::InvalidParameter(format!(
            "no embedding files (*.meta.json) in {}",
            args.train_dir.display()
        )));
    }

    let mut groups = Vec::with_capacity(bases.len());
    for (label, base) in &bases {
        let x = load_embeddings(base).with_context(|| format!("loading class {label:?}"))?;
        groups.push((label.clone(), x));
    }
    let model = vmf_fit(&groups)?;
    let test = load_embeddings(&args.test)
        .with_context(|| format!("loading test {}", args.test.display()))?;
    let predictions = vmf_classify(&model, &test)?;

    let mut out = String::new();
    for (i, (class, scores)) in predictions.iter().enumerate() {
        write!(out, "{}\t{}", test.id(i), model.classes()[*class]).unwrap();
        for (label, score) in model.classes().iter().zip(scores) {
            write!(out, "\t{label}:{score}").unwrap();
        }
        out.push('\n');
    }
    match &args.out {
        Some(path) => super::write_text(path, &out)?,
        None => print!("{out}"),
    }
    eprintln!(
        "classified {} rows into {} classes (kappa: {})",
        test.rows(),
        model.classes().len(),
        model
            .classes()
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{l}={:.2}", model.kappa(i)))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}
