use anyhow::Context;
use clap::Args;
use sthlm_core::flow::{save_model, train, FlowArch, Objective, TrainConfig};
use sthlm_core::io::{load_embeddings, load_pairs};
use std::path::PathBuf;

#[derive(Args)]
pub struct TrainArgs {
    /// Target embedding file (base name)
    #[arg(long)]
    pub targets: PathBuf,
    /// Condition embedding file; omit to train the unconditional model
    #[arg(long)]
    pub conditions: Option<PathBuf>,
    /// TSV of `condition_row \t target_row` pairs; defaults to row i -> i
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Checkpoint base name to write
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 8)]
    pub rank: usize,
    #[arg(long, default_value_t = 8)]
    pub time_dim: usize,

    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 500)]
    pub warmup: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Condition dropout probability for classifier-free guidance
    #[arg(long, default_value_t = 0.10)]
    pub dropout: f64,
    /// `cfm` or `regression`
    #[arg(long, default_value = "cfm")]
    pub objective: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mirror the report as JSON on stdout
    #[arg(long)]
    pub json: bool,
}

pub fn run(args: TrainArgs) -> anyhow::Result<()> {
    let targets = load_embeddings(&args.targets)
        .with_context(|| format!("loading targets {}", args.targets.display()))?;
    let conditions = match &args.conditions {
        Some(base) => Some(
            load_embeddings(base).with_context(|| format!("loading conditions {}", base.display()))?,
        ),
        None => None,
    };
    let pairs: Vec<(usize, usize)> = match &args.pairs {
        Some(path) => load_pairs(path)?,
        None => {
            if let Some(cm) = &conditions {
                if cm.rows() != targets.rows() {
                    anyhow::bail!(sthlm_core::Error::DimensionMismatch(format!(
                        "no pair file given and row counts differ ({} conditions vs {} targets)",
                        cm.rows(),
                        targets.rows()
                    )));
                }
            }
            (0..targets.rows()).map(|i| (i, i)).collect()
        }
    };
    let objective: Objective = args.objective.parse::<Objective>()?;
    let arch = FlowArch {
        input_dim: targets.cols(),
        hidden_dim: args.hidden,
        time_dim: args.time_dim,
        cond_dim: conditions.as_ref().map(|c| c.cols()).unwrap_or(1),
        layers: args.layers,
        rank: args.rank,
    };
    let cfg = TrainConfig {
        learning_rate: args.lr,
        weight_decay: args.weight_decay,
        warmup_steps: args.warmup,
        batch_size: args.batch,
        epochs: args.epochs,
        cond_dropout: args.dropout,
        objective,
        seed: args.seed,
    };
    let (model, report) = train::<f32>(&targets, conditions.as_ref(), &pairs, &cfg, &arch)?;
    save_model(&model, &args.out)?;

    if args.json {
        let payload = serde_json::json!({
            "checkpoint": args.out.display().to_string(),
            "steps": report.steps,
            "parameters": model.param_count(),
            "epoch_loss": report.epoch_loss,
        });
        println!("{}", serde_json::to_string_pretty(&payload)?);
    } else {
        println!(
            "trained {} parameters for {} steps ({} epochs)",
            model.param_count(),
            report.steps,
            report.epoch_loss.len()
        );
        let show = |i: usize| println!("  epoch {:>4}: loss {:.6}", i + 1, report.epoch_loss[i]);
        let n = report.epoch_loss.len();
        if n <= 10 {
            (0..n).for_each(show);
        } else {
            (0..5).for_each(show);
            println!("  ...");
            (n - 5..n).for_each(show);
        }
        println!("wrote {}.manifest.json / .params.f32", args.out.display());
    }
    Ok(())
}
