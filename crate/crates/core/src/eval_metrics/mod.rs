//! QA and retrieval evaluation metrics.

mod bleu;
mod dataset;
mod rouge;

pub use bleu::{corpus_bleu, tokenize_intl, BleuStats};
pub use dataset::{
    align, evaluate_dataset, evaluate_metric, evaluate_records, parse_jsonl, read_jsonl,
    EvalMetric, EvalOutput, GoldRecord, Keyed, PredictionRecord, RecordId,
};
pub use rouge::{lcs_len, rouge_l_f1};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rewards::{token_f1, TextNormalizationPolicy};
use crate::structured_text::extract_retrieval_spans;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("no record with id {0}")]
    MissingId(String),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("{path}:{line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Per-instance scores and their arithmetic mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_instance: Vec<f64>,
    pub aggregate: f64,
    pub count: usize,
}

impl MetricReport {
    pub fn from_scores(per_instance: Vec<f64>) -> Self {
        let count = per_instance.len();
        let aggregate = if count == 0 {
            0.0
        } else {
            per_instance.iter().sum::<f64>() / count as f64
        };
        Self {
            per_instance,
            aggregate,
            count,
        }
    }
}

/// Token F1 with the usual QA answer normalization.
pub fn qa_f1(prediction: &str, gold: &str) -> f64 {
    token_f1(prediction, gold, &TextNormalizationPolicy::squad())
}

/// Best [`qa_f1`] against any of several gold answers.
pub fn qa_f1_max<S: AsRef<str>>(prediction: &str, golds: &[S]) -> f64 {
    golds
        .iter()
        .map(|g| qa_f1(prediction, g.as_ref()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEvalPair {
    pub predicted_spans: String,
    pub gold_facts: String,
}

impl RetrievalEvalPair {
    /// Spans of `response` and `facts`, each newline-joined in order.
    pub fn new<S: AsRef<str>>(response: &str, facts: &[S]) -> Self {
        Self {
            predicted_spans: extract_retrieval_spans(response).spans.join("\n"),
            gold_facts: facts.iter().map(AsRef::as_ref).collect::<Vec<_>>().join("\n"),
        }
    }

    pub fn is_scorable(&self) -> bool {
        !self.predicted_spans.trim().is_empty() && !self.gold_facts.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEvalReport {
    pub bleu: MetricReport,
    pub rouge_l: MetricReport,
}

/// Sentence-level BLEU and ROUGE-L F1 of extracted retrieval spans against
/// gold supporting facts. Responses without spans score 0 on both.
pub fn retrieval_eval<R: AsRef<str>, F: AsRef<str>>(
    responses: &[R],
    gold_facts: &[Vec<F>],
) -> Result<RetrievalEvalReport, EvalError> {
    if responses.len() != gold_facts.len() {
        return Err(EvalError::LengthMismatch {
            left: responses.len(),
            right: gold_facts.len(),
        });
    }
    let (bleu, rouge): (Vec<f64>, Vec<f64>) = responses
        .iter()
        .zip(gold_facts)
        .map(|(response, facts)| {
            let pair = RetrievalEvalPair::new(response.as_ref(), facts);
            if !pair.is_scorable() {
                return (0.0, 0.0);
            }
            (
                BleuStats::of_pair(&pair.predicted_spans, &pair.gold_facts).score(),
                rouge_l_f1(&pair.predicted_spans, &pair.gold_facts),
            )
        })
        .unzip();
    Ok(RetrievalEvalReport {
        bleu: MetricReport::from_scores(bleu),
        rouge_l: MetricReport::from_scores(rouge),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qa_f1_examples() {
        assert_eq!(qa_f1("Talk That Talk", "talk that talk"), 1.0);
        assert_eq!(qa_f1("the Paris", "Paris"), 1.0);
        assert!((qa_f1("cat sat", "cat sat down") - 0.8).abs() < 1e-12);
        assert_eq!(qa_f1_max("Paris", &["London", "paris."]), 1.0);
        assert_eq!(qa_f1_max::<&str>("Paris", &[]), 0.0);
    }

    #[test]
    fn report_mean() {
        let r = MetricReport::from_scores(vec![1.0, 0.0, 0.5]);
        assert_eq!((r.aggregate, r.count), (0.5, 3));
        assert_eq!(MetricReport::from_scores(vec![]).aggregate, 0.0);
    }

    #[test]
    fn retrieval_eval_examples() {
        let facts = vec![vec!["The sky is blue on clear days.", "Grass is green in spring."]];
        let exact = ["<think><retrieval>The sky is blue on clear days.</retrieval> so <retrieval>Grass is green in spring.</retrieval></think>Answer: x"];
        let report = retrieval_eval(&exact, &facts).unwrap();
        assert_eq!(report.rouge_l.per_instance, vec![1.0]);
        assert!((report.bleu.per_instance[0] - 100.0).abs() < 1e-9);

        let none = ["<think>nothing quoted</think>Answer: x"];
        let report = retrieval_eval(&none, &facts).unwrap();
        assert_eq!((report.bleu.aggregate, report.rouge_l.aggregate), (0.0, 0.0));

        // One of two facts quoted: the scores are the single-pair metrics on
        // the joined strings.
        let half = ["<think><retrieval>The sky is blue on clear days.</retrieval></think>Answer: x"];
        let report = retrieval_eval(&half, &facts).unwrap();
        let joined = "The sky is blue on clear days.\nGrass is green in spring.";
        let span = "The sky is blue on clear days.";
        assert_eq!(report.rouge_l.per_instance[0], rouge_l_f1(span, joined));
        assert_eq!(report.bleu.per_instance[0], corpus_bleu(&[span], &[joined]).unwrap());
        // 7 of 7 span tokens in a 12-token reference: P=1, R=7/12.
        assert!((report.rouge_l.per_instance[0] - 2.0 * (7.0 / 12.0) / (1.0 + 7.0 / 12.0)).abs() < 1e-12);

        assert!(matches!(retrieval_eval(&half, &Vec::<Vec<&str>>::new()), Err(EvalError::LengthMismatch { .. })));
    }
}
