use anyhow::Context;
use clap::Args;
use sthlm_core::distance::Metric;
use sthlm_core::io::load_embeddings;
use sthlm_core::store::{build_store, AggregationMode, RetrievalResult};
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Args)]
pub struct SearchArgs {
    /// Document embedding file (base name)
    #[arg(long)]
    pub store: PathBuf,
    /// Query embedding file (base name)
    #[arg(long)]
    pub query_file: PathBuf,
    /// Neighbors to return
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// `single` treats every query row independently; `min-distance` and
    /// `vote` fuse all rows as samples of one query
    #[arg(long, default_value = "single")]
    pub mode: String,
    #[arg(long, default_value = "cosine")]
    pub metric: String,
    /// Query id used in fused modes (default: query file stem)
    #[arg(long)]
    pub query_id: Option<String>,
    /// Write the TSV here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: SearchArgs) -> anyhow::Result<()> {
    let metric: Metric = args.metric.parse()?;
    let docs = load_embeddings(&args.store)
        .with_context(|| format!("loading store {}", args.store.display()))?;
    let queries = load_embeddings(&args.query_file)
        .with_context(|| format!("loading queries {}", args.query_file.display()))?;
    let store = build_store(&docs, metric)?;

    let mut out = String::new();
    let emit = |query_id: &str, result: &RetrievalResult, out: &mut String| {
        for (rank, (doc, score)) in result.entries.iter().enumerate() {
            writeln!(out, "{query_id}\t{}\t{doc}\t{score}", rank + 1).unwrap();
        }
    };

    match args.mode.as_str() {
        "single" => {
            for i in 0..queries.rows() {
                let result = store.knn(queries.row(i), args.k)?;
                emit(&queries.id(i), &result, &mut out);
            }
        }
        fused => {
            let mode: AggregationMode = fused.parse()?;
            let result = store.multi_sample_retrieve(&queries, args.k, mode)?;
            let qid = args.query_id.clone().unwrap_or_else(|| {
                args.query_file
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "query".into())
            });
            emit(&qid, &result, &mut out);
        }
    }

    match &args.out {
        Some(path) => super::write_text(path, &out)?,
        None => print!("{out}"),
    }
    Ok(())
}
