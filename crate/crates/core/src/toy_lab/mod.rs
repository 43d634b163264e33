//! Synthetic needle-retrieval tasks and the curriculum GRPO training loop
//! at tabular scale.
//!
//! The policy never sees the task. It picks four symbols, each relative to
//! the needle, and [`NeedleTask::render`] expands them into a full tagged
//! response:
//!
//! | position | meaning | 0 | 1 | 2 | 3 |
//! |---|---|---|---|---|---|
//! | 0 | layout | well formed | quote outside think | no think | no answer prefix |
//! | 1 | quote start | one word early | exact | one late | two late |
//! | 2 | quote length | one short | exact | one long | two long |
//! | 3 | grounding | quote verbatim | embellished quote | verbatim, guessed answer | no quote |
//!
//! The action `[0, 1, 1, 0]` earns the full reward on every task.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{
    mixing_ratio, sample_batch, CurriculumError, CurriculumSchedule, DatasetPool, Source,
};
use crate::grpo::{
    grpo_gradient, grpo_objective, sample_rollouts, GrpoConfig, GrpoError, PolicySnapshots,
    RolloutTask, ToyPolicy,
};
use crate::rewards::{RewardError, RewardWeights, TextNormalizationPolicy};
use crate::structured_text::{ANSWER_PREFIX, RETRIEVAL_CLOSE, RETRIEVAL_OPEN, THINK_CLOSE, THINK_OPEN};

/// Action positions per response.
pub const HORIZON: usize = 4;
/// Choices per position.
pub const VOCAB: usize = 4;

pub const EASY_CONTEXT_WORDS: usize = 24;
pub const HARD_CONTEXT_WORDS: usize = 60;
pub const NEEDLE_WORDS: usize = 2;

const FILLER: [&str; 24] = [
    "river", "stone", "market", "window", "garden", "letter", "summer", "bridge", "candle", "forest",
    "silver", "harbor", "meadow", "pepper", "ladder", "copper", "valley", "mirror", "thunder", "velvet",
    "anchor", "basket", "cotton", "marble",
];
const NEEDLE: [&str; 16] = [
    "zorvak", "quillon", "mertash", "ulvane", "dracis", "peloru", "yentri", "ostavin", "kelmora",
    "trivak", "nashue", "bexolin", "corvani", "faldrin", "wistrel", "gomphre",
];
/// Never appears in a context, so an embellished quote is never grounded.
const EMBELLISH: &str = "reportedly";

#[derive(Debug, Error)]
pub enum ToyLabError {
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("trace is empty")]
    EmptyTrace,
    #[error("cannot write trace to {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A context of filler words with one (easy) or two (hard) needles of
/// invented words. The answer is the needles joined in context order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeedleTask {
    pub id: String,
    pub context: String,
    pub question: String,
    pub answer: String,
    /// Word offset of each needle, ascending.
    pub needle_starts: Vec<usize>,
    pub needle_len: usize,
}

impl NeedleTask {
    /// Builds a task of `context_len` words with `needles` needles placed
    /// at random, non-adjacent positions.
    pub fn generate<R: Rng + ?Sized>(id: String, context_len: usize, needles: usize, rng: &mut R) -> Self {
        let slot = NEEDLE_WORDS + 1;
        assert!(needles >= 1 && needles * slot < context_len, "context too short for needles");
        // Choose needle slots among the gaps left after reserving room.
        let free = context_len - needles * NEEDLE_WORDS;
        let mut gaps: Vec<usize> = sample(rng, free - needles + 1, needles).into_vec();
        gaps.sort_unstable();
        let needle_starts: Vec<usize> = gaps
            .iter()
            .enumerate()
            .map(|(k, &g)| g + k * (NEEDLE_WORDS + 1))
            .collect();
        let mut words: Vec<&str> = (0..context_len).map(|_| FILLER[rng.random_range(0..FILLER.len())]).collect();
        let picked = sample(rng, NEEDLE.len(), needles * NEEDLE_WORDS).into_vec();
        for (k, &start) in needle_starts.iter().enumerate() {
            for w in 0..NEEDLE_WORDS {
                words[start + w] = NEEDLE[picked[k * NEEDLE_WORDS + w]];
            }
        }
        let needle_text: Vec<String> = needle_starts
            .iter()
            .map(|&s| words[s..s + NEEDLE_WORDS].join(" "))
            .collect();
        let question = if needles == 1 {
            "What is the hidden code name in the passage?".to_string()
        } else {
            "What are the hidden code names in the passage, in order?".to_string()
        };
        Self {
            id,
            context: words.join(" "),
            question,
            answer: needle_text.join(" "),
            needle_starts,
            needle_len: NEEDLE_WORDS,
        }
    }

    pub fn context_length(&self) -> usize {
        self.context.split(' ').count()
    }

    pub fn needles(&self) -> Vec<String> {
        let words: Vec<&str> = self.context.split(' ').collect();
        self.needle_starts
            .iter()
            .map(|&s| words[s..s + self.needle_len].join(" "))
            .collect()
    }

    /// The quote for one needle after applying the start and length
    /// offsets, clamped to the context.
    fn quote(&self, words: &[&str], needle_start: usize, offset_sym: usize, len_sym: usize) -> String {
        let n = words.len();
        let start = (needle_start + offset_sym).saturating_sub(1).min(n - 1);
        let len = (self.needle_len + len_sym).saturating_sub(1).max(1);
        words[start..(start + len).min(n)].join(" ")
    }
}

impl RolloutTask for NeedleTask {
    fn query_id(&self) -> String {
        self.id.clone()
    }

    fn render(&self, actions: &[usize]) -> String {
        let [layout, offset, len, grounding] = [0, 1, 2, 3].map(|i| actions.get(i).copied().unwrap_or(0));
        let words: Vec<&str> = self.context.split(' ').collect();
        let quotes: Vec<String> = self
            .needle_starts
            .iter()
            .map(|&s| self.quote(&words, s, offset, len))
            .collect();
        let answer = match grounding {
            2 => FILLER[(offset + 4 * len) % FILLER.len()].to_string(),
            _ => quotes.join(" "),
        };
        let cited: Vec<String> = match grounding {
            0 | 2 => quotes.iter().map(|q| format!("{RETRIEVAL_OPEN}{q}{RETRIEVAL_CLOSE}")).collect(),
            1 => quotes
                .iter()
                .map(|q| format!("{RETRIEVAL_OPEN}{EMBELLISH} {q}{RETRIEVAL_CLOSE}"))
                .collect(),
            _ => quotes.clone(),
        };
        let cited = cited.join(" ");
        match layout {
            0 => format!(
                "{THINK_OPEN}\nI need the code name. {cited} So it is {answer}.\n{THINK_CLOSE}\n{ANSWER_PREFIX} {answer}"
            ),
            1 => format!("{THINK_OPEN}\nI need the code name.\n{THINK_CLOSE}\n{cited}\n{ANSWER_PREFIX} {answer}"),
            2 => format!("I need the code name. {cited} So it is {answer}.\n{ANSWER_PREFIX} {answer}"),
            _ => format!("{THINK_OPEN}\nI need the code name. {cited}\n{THINK_CLOSE}\n{answer}"),
        }
    }

    fn context(&self) -> &str {
        &self.context
    }

    fn gold_answer(&self) -> &str {
        &self.answer
    }
}

/// Easy tasks: short context, one needle. Hard tasks: longer context, two
/// needles that must both be reported.
pub fn make_pools(seed: u64, easy_count: usize, hard_count: usize) -> Result<DatasetPool<NeedleTask>, ToyLabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let easy = (0..easy_count)
        .map(|i| NeedleTask::generate(format!("easy-{i}"), EASY_CONTEXT_WORDS, 1, &mut rng))
        .collect();
    let hard = (0..hard_count)
        .map(|i| NeedleTask::generate(format!("hard-{i}"), HARD_CONTEXT_WORDS, 2, &mut rng))
        .collect();
    Ok(DatasetPool::new(easy, hard)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub schedule: CurriculumSchedule,
    pub grpo: GrpoConfig,
    pub weights: RewardWeights,
    pub learning_rate: f64,
    /// Gradient steps taken on each sampled group before re-snapshotting.
    pub updates_per_batch: usize,
    pub steps: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: CurriculumSchedule::default(),
            grpo: GrpoConfig::default(),
            weights: RewardWeights::default(),
            learning_rate: DEFAULT_LEARNING_RATE,
            updates_per_batch: 1,
            steps: 350,
            seed: 0,
        }
    }
}

pub const DEFAULT_LEARNING_RATE: f64 = 0.5;

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ToyLabError> {
        self.schedule.validate()?;
        self.grpo.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ToyLabError::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.updates_per_batch == 0 {
            return Err(ToyLabError::InvalidConfig("updates_per_batch must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub alpha: f64,
    pub source: Source,
    pub mean_reward: f64,
    pub r_acc: f64,
    pub r_fmt: f64,
    pub r_ret: f64,
    /// Objective of the sampled group before the update.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
    pub initial_policy: ToyPolicy,
    pub final_policy: ToyPolicy,
}

impl TrainingTrace {
    /// Mean of `mean_reward` over the first `n` records.
    pub fn head_mean(&self, n: usize) -> f64 {
        mean(self.records.iter().take(n).map(|r| r.mean_reward))
    }

    /// Mean of `mean_reward` over the last `n` records.
    pub fn tail_mean(&self, n: usize) -> f64 {
        mean(self.records.iter().rev().take(n).map(|r| r.mean_reward))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Curriculum GRPO from a uniform policy. Each step draws one task, samples
/// a group from the snapshot of the current policy, and takes
/// `updates_per_batch` ascent steps. The reference policy is the initial one.
pub fn run_curriculum_grpo(
    config: &TrainConfig,
    pools: &DatasetPool<NeedleTask>,
) -> Result<TrainingTrace, ToyLabError> {
    config.validate()?;
    pools.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normalization = TextNormalizationPolicy::squad();
    let reference = ToyPolicy::uniform(HORIZON, VOCAB);
    let mut policy = reference.clone();
    let mut records = Vec::with_capacity(config.steps as usize);

    for t in 0..config.steps {
        let alpha = mixing_ratio(t, &config.schedule);
        let (source, task) = sample_batch(pools, t, 1, &config.schedule, &mut rng)?[0];
        let old = policy.clone();
        let snapshots = PolicySnapshots {
            current: &policy,
            old: &old,
            reference: &reference,
        };
        let scored = sample_rollouts(
            snapshots,
            task,
            config.grpo.group_size,
            rng.random(),
            &config.weights,
            &normalization,
        )?;
        let objective = grpo_objective(&scored.group, &config.grpo)?;
        for _ in 0..config.updates_per_batch {
            let grad = grpo_gradient(&policy, &scored.group, &config.grpo)?;
            for (p, g) in policy.logits_mut().iter_mut().zip(grad) {
                *p += config.learning_rate * g;
            }
        }
        let b = &scored.breakdowns;
        records.push(TraceRecord {
            step: t,
            alpha,
            source,
            mean_reward: mean(b.iter().map(|x| x.r_total)),
            r_acc: mean(b.iter().map(|x| x.r_acc)),
            r_fmt: mean(b.iter().map(|x| x.r_fmt)),
            r_ret: mean(b.iter().map(|x| x.r_ret)),
            objective,
        });
    }
    Ok(TrainingTrace {
        records,
        initial_policy: reference,
        final_policy: policy,
    })
}

pub const TRACE_HEADER: &str = "step,alpha,source,mean_reward,r_acc,r_fmt,r_ret,objective";

/// CSV rendering; floats use the shortest round-trip form.
pub fn trace_csv(trace: &TrainingTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!(
            "{},{:?},{},{:?},{:?},{:?},{:?},{:?}\n",
            r.step, r.alpha, r.source, r.mean_reward, r.r_acc, r.r_fmt, r.r_ret, r.objective
        ));
    }
    out
}

pub fn emit_trace(trace: &TrainingTrace, path: &Path) -> Result<(), ToyLabError> {
    if trace.records.is_empty() {
        return Err(ToyLabError::EmptyTrace);
    }
    let wrap = |source| ToyLabError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(wrap)?);
    out.write_all(trace_csv(trace).as_bytes()).map_err(wrap)?;
    out.flush().map_err(wrap)
}
