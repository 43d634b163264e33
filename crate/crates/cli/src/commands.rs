use std::path::Path;

use log::info;
use rar_core::eval_metrics::{align, evaluate_metric, read_jsonl, EvalError, Keyed, RecordId};
use rar_core::grpo::{gradient_check, grpo_gradient};
use rar_core::model_client::{ChatClient, ChatService};
use rar_core::rewards::{total_reward, RewardBreakdown, RewardWeights, TextNormalizationPolicy};
use rar_core::sft_pipeline::{read_instances, run_pipeline, write_records, SftError};
use rar_core::toy_lab::{emit_trace, make_pools, run_curriculum_grpo};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{Cli, Command, EvalArgs, GenSftArgs, GradCheckArgs, ScoreArgs, TrainToyArgs};
use crate::config::{load_json, print_resolved, CliConfig};
use crate::Failure;

/// Largest relative error the gradient check accepts.
const GRAD_TOLERANCE: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

pub fn run(cli: Cli) -> Result<(), Failure> {
    let config: CliConfig = match &cli.config {
        Some(path) => load_json(path)?,
        None => CliConfig::default(),
    };
    match cli.command {
        Command::GenSft(args) => gen_sft(args, config),
        Command::Score(args) => score(args, config),
        Command::GradCheck(args) => grad_check(args, config, cli.seed.unwrap_or(0)),
        Command::TrainToy(args) => train_toy(args, config, cli.seed),
        Command::Eval(args) => eval(args),
    }
}

fn eval_failure(e: EvalError) -> Failure {
    Failure::Usage(e.to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn gen_sft(args: GenSftArgs, config: CliConfig) -> Result<(), Failure> {
    let CliConfig { mut client, mut pipeline, .. } = config;
    if let Some(url) = args.endpoint {
        client.endpoint_url = url;
    }
    if let Some(dir) = args.cache_dir {
        client.cache_dir = Some(dir);
    }
    if let Some(m) = args.reasoner_model {
        pipeline.reasoner_model = m;
    }
    if let Some(m) = args.injector_model {
        pipeline.injector_model = m;
    }
    if let Some(n) = args.parallel {
        pipeline.parallel = n as usize;
    }
    pipeline.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    print_resolved("gen-sft", &json!({ "client": client, "pipeline": pipeline }));

    let instances = read_instances(&args.input).map_err(|e| Failure::Usage(e.to_string()))?;
    let chat = ChatClient::new(client);
    let (records, report) = run_pipeline(&instances, &chat as &dyn ChatService, &chat, &pipeline).map_err(|e| match e {
        SftError::InvalidConfig(_) => Failure::Usage(e.to_string()),
        _ => Failure::Runtime(e.to_string()),
    })?;
    write_records(&args.output, &records).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_json(&args.report, &report)?;
    info!("network calls: {}, cache hits: {}", chat.network_calls(), chat.cache_hits());
    println!(
        "{}",
        json!({
            "generated": report.generated,
            "answer_match_kept": report.answer_match_kept,
            "containment_kept": report.containment_kept,
            "emitted": report.emitted,
            "dropped": report.drops.len(),
            "network_calls": chat.network_calls(),
        })
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ResponseRecord {
    id: RecordId,
    response: String,
}

#[derive(Debug, Deserialize)]
struct ScoreGold {
    id: RecordId,
    answer: String,
    context: String,
}

impl Keyed for ResponseRecord {
    fn id(&self) -> &RecordId {
        &self.id
    }
}

impl Keyed for ScoreGold {
    fn id(&self) -> &RecordId {
        &self.id
    }
}

#[derive(Debug, Serialize)]
struct ScoredInstance {
    id: RecordId,
    #[serde(flatten)]
    breakdown: RewardBreakdown,
}

fn score(args: ScoreArgs, config: CliConfig) -> Result<(), Failure> {
    let weights: RewardWeights = args.weights.unwrap_or(config.weights);
    print_resolved("score", &json!({ "weights": weights }));
    let responses: Vec<ResponseRecord> = read_jsonl(&args.responses).map_err(eval_failure)?;
    let golds: Vec<ScoreGold> = read_jsonl(&args.gold).map_err(eval_failure)?;
    let pairs = align(&responses, &golds).map_err(eval_failure)?;
    let policy = TextNormalizationPolicy::squad();
    let per_instance: Vec<ScoredInstance> = pairs
        .iter()
        .map(|(r, g)| ScoredInstance {
            id: g.id.clone(),
            breakdown: total_reward(&r.response, &g.answer, &g.context, &weights, &policy),
        })
        .collect();
    let n = per_instance.len().max(1) as f64;
    let mean = |f: fn(&RewardBreakdown) -> f64| per_instance.iter().map(|s| f(&s.breakdown)).sum::<f64>() / n;
    let report = json!({
        "weights": weights,
        "count": per_instance.len(),
        "mean": {
            "r_acc": mean(|b| b.r_acc),
            "r_fmt": mean(|b| b.r_fmt),
            "r_ret": mean(|b| b.r_ret),
            "r_total": mean(|b| b.r_total),
        },
        "per_instance": per_instance,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn grad_check(args: GradCheckArgs, config: CliConfig, seed: u64) -> Result<(), Failure> {
    let grpo = config.grad_check;
    grpo.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    print_resolved(
        "grad-check",
        &json!({ "seed": seed, "horizon": args.horizon, "vocab": args.vocab, "trials": args.trials, "grpo": grpo }),
    );
    let scale = if args.corrupt_analytic { 1.01 } else { 1.0 };
    let report = gradient_check(
        seed,
        args.horizon as usize,
        args.vocab as usize,
        args.trials as usize,
        &grpo,
        FD_STEP,
        |p, g, c| grpo_gradient(p, g, c).map(|v| v.into_iter().map(|x| x * scale).collect()),
    )
    .map_err(|e| Failure::Usage(e.to_string()))?;
    let pass = report.max_relative_error <= GRAD_TOLERANCE;
    println!("{}", json!({ "report": report, "tolerance": GRAD_TOLERANCE, "pass": pass }));
    if pass {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "max relative error {:e} exceeds {GRAD_TOLERANCE:e}",
            report.max_relative_error
        )))
    }
}

fn train_toy(args: TrainToyArgs, config: CliConfig, seed: Option<u64>) -> Result<(), Failure> {
    let mut train = match &args.config {
        Some(path) => load_json(path)?,
        None => config.train,
    };
    if let Some(seed) = seed {
        train.seed = seed;
    }
    train.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    print_resolved(
        "train-toy",
        &json!({ "train": train, "easy_count": args.easy_count, "hard_count": args.hard_count }),
    );
    let pools = make_pools(train.seed, args.easy_count as usize, args.hard_count as usize)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let trace = run_curriculum_grpo(&train, &pools).map_err(|e| Failure::Runtime(e.to_string()))?;
    if !trace.records.is_empty() {
        emit_trace(&trace, &args.trace).map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let window = 20.min(trace.records.len());
    println!(
        "{}",
        json!({
            "steps": trace.records.len(),
            "first_window_mean_reward": trace.head_mean(window),
            "last_window_mean_reward": trace.tail_mean(window),
            "trace": args.trace,
        })
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    print_resolved("eval", &json!({ "metric": args.metric }));
    let predictions = read_jsonl(&args.predictions).map_err(eval_failure)?;
    let golds = read_jsonl(&args.gold).map_err(eval_failure)?;
    let output = evaluate_metric(args.metric, &predictions, &golds).map_err(eval_failure)?;
    if let Some(path) = &args.output {
        write_json(path, &output)?;
    }
    println!("{}", serde_json::to_string_pretty(&output).expect("report serializes"));
    Ok(())
}
