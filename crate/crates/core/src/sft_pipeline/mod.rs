//! Supervised fine-tuning data generation.
//!
//! Each question runs through three stages. A reasoner model answers from
//! the context. Responses with a wrong final answer are dropped. The think
//! interior is handed to an injector model together with the supporting
//! facts, which rewrites the reasoning so that every fact is quoted.
//! Outputs missing any fact are dropped. Finally every fact occurrence is
//! wrapped in retrieval tags and the answer is re-attached.
//!
//! ```
//! use rar_core::sft_pipeline::mark_retrieval;
//! use rar_core::structured_text::check_format;
//!
//! let marked = mark_retrieval("I need X. X is blue. So blue.", &["X is blue."], "blue").unwrap();
//! assert!(marked.contains("<retrieval>X is blue.</retrieval>"));
//! assert!(check_format(&marked).ok);
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::LazyLock;

use log::{debug, info};
use rayon::prelude::*;
use regex::{NoExpand, Regex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval_metrics::{parse_jsonl, read_jsonl, EvalError};
use crate::model_client::{ChatMessage, ChatRequest, ChatService, ClientError};
use crate::rewards::{token_f1, TextNormalizationPolicy};
use crate::structured_text::{
    contains_collapsed, extract_answer, insert_retrieval_tokens, strip_tags, think_interior,
    StructureError, ANSWER_PREFIX, THINK_CLOSE, THINK_OPEN,
};

#[derive(Debug, Error)]
pub enum SftError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error("response has no closed think block")]
    MissingThink,
    #[error("instance has no supporting facts")]
    NoFacts,
    #[error(transparent)]
    Input(#[from] EvalError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAInstance {
    pub question: String,
    pub context: String,
    pub answer: String,
    #[serde(default)]
    pub supporting_facts: Option<Vec<String>>,
}

impl QAInstance {
    /// Supporting facts that do not occur in the context.
    pub fn facts_outside_context(&self) -> Vec<&str> {
        self.supporting_facts
            .iter()
            .flatten()
            .filter(|f| !contains_collapsed(&self.context, f))
            .map(String::as_str)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub question: String,
    pub context: String,
    pub answer: String,
    #[serde(rename = "response")]
    pub structured_response: String,
}

const SLOT: &str = r"\{(context|question|reasoning_content|evidence_sentence_string)\}";
static SLOT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(SLOT).unwrap());

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub reasoning_prompt: String,
    pub injection_prompt: String,
    pub model_system_prompt: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            reasoning_prompt: include_str!("prompts/reasoning.txt").to_string(),
            injection_prompt: include_str!("prompts/injection.txt").to_string(),
            model_system_prompt: include_str!("prompts/model_system.txt").trim_end().to_string(),
        }
    }
}

/// Substitutes the known `{slot}` placeholders in one pass, so text inside a
/// substituted value is never expanded again. Slots without a value are
/// left as they are.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    SLOT_RE
        .replace_all(template, |caps: &regex::Captures| {
            values
                .iter()
                .find(|(k, _)| *k == &caps[1])
                .map_or_else(|| caps[0].to_string(), |(_, v)| v.to_string())
        })
        .into_owned()
}

impl PromptTemplates {
    pub fn reasoning(&self, context: &str, question: &str) -> String {
        render(&self.reasoning_prompt, &[("context", context), ("question", question)])
    }

    pub fn injection<S: AsRef<str>>(&self, question: &str, chain: &str, facts: &[S]) -> String {
        let evidence = facts.iter().map(AsRef::as_ref).collect::<Vec<_>>().join("\n");
        render(
            &self.injection_prompt,
            &[
                ("question", question),
                ("reasoning_content", chain),
                ("evidence_sentence_string", &evidence),
            ],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Token F1 an answer must reach to count as correct.
    pub match_threshold: f64,
    /// Instances processed concurrently.
    pub parallel: usize,
    pub reasoner_model: String,
    pub injector_model: String,
    pub reasoner_temperature: f64,
    pub injector_temperature: f64,
    pub max_output_tokens: u32,
    pub templates: PromptTemplates,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            match_threshold: 1.0,
            parallel: 4,
            reasoner_model: "deepseek-reasoner".into(),
            injector_model: "deepseek-chat".into(),
            reasoner_temperature: 0.7,
            injector_temperature: 0.0,
            max_output_tokens: 8192,
            templates: PromptTemplates::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), SftError> {
        if !(0.0..=1.0).contains(&self.match_threshold) {
            return Err(SftError::InvalidConfig(format!(
                "match_threshold must lie in [0, 1], got {}",
                self.match_threshold
            )));
        }
        if self.parallel == 0 {
            return Err(SftError::InvalidConfig("parallel must be > 0".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(SftError::InvalidConfig("max_output_tokens must be > 0".into()));
        }
        Ok(())
    }

    fn request(&self, model: &str, temperature: f64, prompt: String) -> ChatRequest {
        ChatRequest {
            model_name: model.to_string(),
            messages: vec![ChatMessage::user(prompt)],
            temperature,
            max_output_tokens: self.max_output_tokens,
        }
    }
}

pub fn generate_reasoning(
    instance: &QAInstance,
    reasoner: &dyn ChatService,
    config: &PipelineConfig,
) -> Result<String, SftError> {
    let prompt = config.templates.reasoning(&instance.context, &instance.question);
    let request = config.request(&config.reasoner_model, config.reasoner_temperature, prompt);
    Ok(reasoner.complete(&request)?)
}

/// True iff the response's final answer reaches `threshold` token F1
/// against the gold answer. A response without an answer never matches.
pub fn answer_matches(raw: &str, gold: &str, threshold: f64) -> bool {
    extract_answer(raw)
        .map(|pred| token_f1(pred, gold, &TextNormalizationPolicy::squad()) >= threshold)
        .unwrap_or(false)
}

pub fn extract_reasoning_chain(raw: &str) -> Result<&str, SftError> {
    think_interior(raw).ok_or(SftError::MissingThink)
}

pub fn integrate_evidence<S: AsRef<str>>(
    question: &str,
    chain: &str,
    facts: &[S],
    injector: &dyn ChatService,
    config: &PipelineConfig,
) -> Result<String, SftError> {
    if facts.is_empty() {
        return Err(SftError::NoFacts);
    }
    let prompt = config.templates.injection(question, chain, facts);
    let request = config.request(&config.injector_model, config.injector_temperature, prompt);
    Ok(injector.complete(&request)?)
}

/// Facts not found in `integrated` under whitespace collapse.
pub fn missing_facts<'a, S: AsRef<str>>(integrated: &str, facts: &'a [S]) -> Vec<&'a str> {
    let haystack = crate::structured_text::collapse_whitespace(integrated);
    facts
        .iter()
        .map(AsRef::as_ref)
        .filter(|f| !haystack.contains(&crate::structured_text::collapse_whitespace(f)))
        .collect()
}

pub fn containment_filter<S: AsRef<str>>(integrated: &str, facts: &[S]) -> bool {
    missing_facts(integrated, facts).is_empty()
}

/// Rewrites whitespace variants of `fact` to the fact's own spelling.
fn canonicalize(text: &str, fact: &str) -> String {
    let words: Vec<String> = fact.split_whitespace().map(regex::escape).collect();
    if words.is_empty() {
        return text.to_string();
    }
    let pattern = Regex::new(&words.join(r"\s+")).expect("escaped words form a valid pattern");
    pattern.replace_all(text, NoExpand(fact)).into_owned()
}

/// Wraps each fact occurrence in retrieval tags and assembles the full
/// structured response around the reasoning.
pub fn mark_retrieval<S: AsRef<str>>(
    integrated: &str,
    facts: &[S],
    answer: &str,
) -> Result<String, SftError> {
    let mut reasoning = strip_tags(integrated).trim().to_string();
    for fact in facts {
        let fact = fact.as_ref().trim();
        if !fact.is_empty() && !reasoning.contains(fact) {
            reasoning = canonicalize(&reasoning, fact);
        }
    }
    let trimmed: Vec<&str> = facts.iter().map(|f| f.as_ref().trim()).collect();
    let marked = insert_retrieval_tokens(&reasoning, &trimmed)?;
    Ok(format!(
        "{THINK_OPEN}\n{marked}\n{THINK_CLOSE}\n\n{ANSWER_PREFIX} {}",
        strip_tags(answer).trim()
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DropReason {
    InvalidInstance { detail: String },
    ReasonerFailed { detail: String },
    WrongAnswer { predicted: Option<String> },
    MissingThink,
    InjectorFailed { detail: String },
    MissingFacts { facts: Vec<String> },
    MarkingFailed { detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drop {
    pub index: usize,
    pub reason: DropReason,
}

/// Stage counts. Every input is either emitted or has exactly one drop.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub generated: usize,
    pub answer_match_kept: usize,
    pub containment_kept: usize,
    pub emitted: usize,
    pub drops: Vec<Drop>,
}

impl PipelineReport {
    pub fn is_conserved(&self) -> bool {
        self.generated == self.emitted + self.drops.len()
            && self.emitted <= self.containment_kept
            && self.containment_kept <= self.answer_match_kept
            && self.answer_match_kept <= self.generated
    }
}

enum Outcome {
    Emitted(SftRecord),
    /// Dropped, with the number of stages passed (0 = none, 1 = answer
    /// match, 2 = containment).
    Dropped(u8, DropReason),
}

fn process(
    instance: &QAInstance,
    reasoner: &dyn ChatService,
    injector: &dyn ChatService,
    config: &PipelineConfig,
) -> Outcome {
    let facts = match &instance.supporting_facts {
        Some(f) if !f.is_empty() => f,
        _ => {
            return Outcome::Dropped(0, DropReason::InvalidInstance {
                detail: "no supporting facts".into(),
            })
        }
    };
    let outside = instance.facts_outside_context();
    if !outside.is_empty() {
        return Outcome::Dropped(0, DropReason::InvalidInstance {
            detail: format!("{} supporting fact(s) not in context", outside.len()),
        });
    }
    let raw = match generate_reasoning(instance, reasoner, config) {
        Ok(r) => r,
        Err(e) => return Outcome::Dropped(0, DropReason::ReasonerFailed { detail: e.to_string() }),
    };
    if !answer_matches(&raw, &instance.answer, config.match_threshold) {
        let predicted = extract_answer(&raw).ok().map(str::to_string);
        return Outcome::Dropped(0, DropReason::WrongAnswer { predicted });
    }
    let Ok(chain) = extract_reasoning_chain(&raw) else {
        return Outcome::Dropped(1, DropReason::MissingThink);
    };
    let integrated = match integrate_evidence(&instance.question, chain, facts, injector, config) {
        Ok(t) => t,
        Err(e) => return Outcome::Dropped(1, DropReason::InjectorFailed { detail: e.to_string() }),
    };
    let missing = missing_facts(&integrated, facts);
    if !missing.is_empty() {
        let facts = missing.into_iter().map(str::to_string).collect();
        return Outcome::Dropped(1, DropReason::MissingFacts { facts });
    }
    match mark_retrieval(&integrated, facts, &instance.answer) {
        Ok(response) => Outcome::Emitted(SftRecord {
            question: instance.question.clone(),
            context: instance.context.clone(),
            answer: instance.answer.clone(),
            structured_response: response,
        }),
        Err(e) => Outcome::Dropped(2, DropReason::MarkingFailed { detail: e.to_string() }),
    }
}

/// Runs every instance through all stages. At most `config.parallel`
/// instances are in flight; records come back in input order.
pub fn run_pipeline(
    source: &[QAInstance],
    reasoner: &dyn ChatService,
    injector: &dyn ChatService,
    config: &PipelineConfig,
) -> Result<(Vec<SftRecord>, PipelineReport), SftError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallel)
        .build()
        .map_err(|e| SftError::InvalidConfig(e.to_string()))?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        source
            .par_iter()
            .map(|inst| process(inst, reasoner, injector, config))
            .collect()
    });

    let mut records = Vec::new();
    let mut report = PipelineReport {
        generated: source.len(),
        ..PipelineReport::default()
    };
    for (index, outcome) in outcomes.into_iter().enumerate() {
        let passed = match outcome {
            Outcome::Emitted(record) => {
                records.push(record);
                3
            }
            Outcome::Dropped(passed, reason) => {
                debug!("instance {index} dropped: {reason:?}");
                report.drops.push(Drop { index, reason });
                passed
            }
        };
        report.answer_match_kept += usize::from(passed >= 1);
        report.containment_kept += usize::from(passed >= 2);
    }
    report.emitted = records.len();
    info!(
        "sft pipeline: {} in, {} answer-matched, {} contained, {} emitted",
        report.generated, report.answer_match_kept, report.containment_kept, report.emitted
    );
    Ok((records, report))
}

pub fn parse_instances(text: &str, origin: &str) -> Result<Vec<QAInstance>, SftError> {
    Ok(parse_jsonl(text, origin)?)
}

pub fn read_instances(path: &Path) -> Result<Vec<QAInstance>, SftError> {
    Ok(read_jsonl(path)?)
}

pub fn write_records(path: &Path, records: &[SftRecord]) -> Result<(), SftError> {
    let wrap = |source| SftError::Output {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(wrap)?);
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(|e| wrap(e.into()))?;
        out.write_all(b"\n").map_err(wrap)?;
    }
    out.flush().map_err(wrap)
}
