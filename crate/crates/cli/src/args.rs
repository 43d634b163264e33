use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rar_core::eval_metrics::EvalMetric;
use rar_core::rewards::RewardWeights;

#[derive(Debug, Parser)]
#[command(name = "rar", version, about = "Retrieval-augmented reasoning toolkit")]
pub struct Cli {
    /// JSON file with default settings for every subcommand.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log at debug level.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate SFT records from QA instances through a chat service.
    GenSft(GenSftArgs),
    /// Score tagged responses with the three-part reward.
    Score(ScoreArgs),
    /// Compare the analytic GRPO gradient with finite differences.
    GradCheck(GradCheckArgs),
    /// Train the tabular policy on synthetic needle tasks.
    TrainToy(TrainToyArgs),
    /// Evaluate predictions against gold records.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenSftArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub reasoner_model: Option<String>,
    #[arg(long)]
    pub injector_model: Option<String>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub parallel: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// JSONL with `id` and `response`.
    #[arg(long)]
    pub responses: PathBuf,
    /// JSONL with `id`, `answer` and `context`.
    #[arg(long)]
    pub gold: PathBuf,
    /// Comma-separated accuracy, format and retrieval weights.
    #[arg(long, value_parser = parse_weights)]
    pub weights: Option<RewardWeights>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: u64,
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(2..))]
    pub vocab: u64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Scales the analytic gradient by 1.01, to prove the check can fail.
    #[arg(long, hide = true)]
    pub corrupt_analytic: bool,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    /// JSON training config; replaces the `train` section of the global config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub easy_count: u64,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub hard_count: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, default_value = "qa_f1")]
    pub metric: EvalMetric,
    /// Also write the JSON report here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_weights(s: &str) -> Result<RewardWeights, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] => RewardWeights::new(a, b, c).map_err(|e| e.to_string()),
        _ => Err(format!("expected three comma-separated weights, got {}", parts.len())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn weights_parse() {
        let w = parse_weights("0.5, 0.25,0.25").unwrap();
        assert_eq!((w.lambda_acc(), w.lambda_fmt(), w.lambda_ret()), (0.5, 0.25, 0.25));
        assert!(parse_weights("1,2").is_err());
        assert!(parse_weights("1,-2,0").is_err());
        assert!(parse_weights("a,b,c").is_err());
    }
}
