use clap::Args;
use sthlm_core::metrics::{evaluate_ndcg, QrelSet, RunFile};
use std::path::PathBuf;

#[derive(Args)]
pub struct EvaluateArgs {
    /// Qrels TSV: `query_id \t doc_id \t relevance`
    #[arg(long)]
    pub qrels: PathBuf,
    /// Run TSV: `query_id \t rank \t doc_id \t score`
    #[arg(long)]
    pub run: PathBuf,
    /// Metric to compute (only `ndcg@10`)
    #[arg(long, default_value = "ndcg@10")]
    pub metric: String,
    #[arg(long)]
    pub json: bool,
}

pub fn run(args: EvaluateArgs) -> anyhow::Result<()> {
    if args.metric != "ndcg@10" {
        anyhow::bail!(sthlm_core::Error::InvalidParameter(format!(
            "unsupported metric {:?} (only ndcg@10)",
            args.metric
        )));
    }
    let qrels = QrelSet::from_tsv(&args.qrels)?;
    let run = RunFile::from_tsv(&args.run)?;
    let report = evaluate_ndcg(&qrels, &run);

    if args.json {
        let per_query: Vec<serde_json::Value> = report
            .per_query
            .iter()
            .map(|(q, v)| {
                serde_json::json!({
                    "query": q,
                    "ndcg@10": v,
                })
            })
            .collect();
        let payload = serde_json::json!({
            "metric": "ndcg@10",
            "per_query": per_query,
            "mean": report.mean,
            "evaluated": report.evaluated,
            "skipped": report.skipped,
        });
        println!("{}", serde_json::to_string_pretty(&payload)?);
    } else {
        for (q, v) in &report.per_query {
            match v {
                Some(v) => println!("{q}\t{v:.5}"),
                None => println!("{q}\tskipped"),
            }
        }
        println!(
            "mean ndcg@10\t{:.5}\t({} evaluated, {} skipped)",
            report.mean, report.evaluated, report.skipped
        );
    }
    Ok(())
}
