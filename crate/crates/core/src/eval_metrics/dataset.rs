//! JSONL-backed evaluation.
//!
//! Predictions are `{"id": ..., "prediction": "..."}` per line; gold records
//! are `{"id": ..., "answers": ["...", ...]}` with an optional
//! `supporting_facts` array used by the retrieval metric. Ids may be strings
//! or integers.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    corpus_bleu, qa_f1_max, retrieval_eval, rouge_l_f1, BleuStats, EvalError, MetricReport,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecordId {
    Text(String),
    Number(i64),
}

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordId::Text(s) => f.write_str(s),
            RecordId::Number(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: RecordId,
    pub prediction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub id: RecordId,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supporting_facts: Option<Vec<String>>,
}

/// Parses one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, EvalError> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: display.clone(),
        source,
    })?;
    parse_jsonl(&text, &display)
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<T>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Schema {
                path: origin.to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Records carrying a join key.
pub trait Keyed {
    fn id(&self) -> &RecordId;
}

impl Keyed for PredictionRecord {
    fn id(&self) -> &RecordId {
        &self.id
    }
}

impl Keyed for GoldRecord {
    fn id(&self) -> &RecordId {
        &self.id
    }
}

/// Pairs every gold record with its prediction, in gold order. Ids must be
/// unique on both sides and match one to one.
pub fn align<'a, P: Keyed, G: Keyed>(predictions: &'a [P], golds: &'a [G]) -> Result<Vec<(&'a P, &'a G)>, EvalError> {
    let mut by_id: HashMap<&RecordId, &P> = HashMap::new();
    for p in predictions {
        if by_id.insert(p.id(), p).is_some() {
            return Err(EvalError::DuplicateId(p.id().to_string()));
        }
    }
    let mut seen = HashMap::new();
    let mut pairs = Vec::with_capacity(golds.len());
    for g in golds {
        if seen.insert(g.id(), ()).is_some() {
            return Err(EvalError::DuplicateId(g.id().to_string()));
        }
        let p = by_id
            .get(g.id())
            .ok_or_else(|| EvalError::MissingId(g.id().to_string()))?;
        pairs.push((*p, g));
    }
    if let Some(extra) = predictions.iter().find(|p| !seen.contains_key(p.id())) {
        return Err(EvalError::MissingId(extra.id().to_string()));
    }
    Ok(pairs)
}

/// QA F1 per instance (max over gold answers) and its mean.
pub fn evaluate_records(
    predictions: &[PredictionRecord],
    golds: &[GoldRecord],
) -> Result<MetricReport, EvalError> {
    let pairs = align(predictions, golds)?;
    Ok(MetricReport::from_scores(
        pairs
            .iter()
            .map(|(p, g)| qa_f1_max(&p.prediction, &g.answers))
            .collect(),
    ))
}

pub fn evaluate_dataset(predictions_file: &Path, gold_file: &Path) -> Result<MetricReport, EvalError> {
    let predictions: Vec<PredictionRecord> = read_jsonl(predictions_file)?;
    let golds: Vec<GoldRecord> = read_jsonl(gold_file)?;
    evaluate_records(&predictions, &golds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMetric {
    QaF1,
    Bleu,
    RougeL,
    Retrieval,
}

impl EvalMetric {
    pub const ALL: [EvalMetric; 4] = [
        EvalMetric::QaF1,
        EvalMetric::Bleu,
        EvalMetric::RougeL,
        EvalMetric::Retrieval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EvalMetric::QaF1 => "qa_f1",
            EvalMetric::Bleu => "bleu",
            EvalMetric::RougeL => "rouge_l",
            EvalMetric::Retrieval => "retrieval",
        }
    }
}

impl FromStr for EvalMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric {s:?}; expected qa_f1, bleu, rouge_l or retrieval"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub metric: EvalMetric,
    pub count: usize,
    pub reports: BTreeMap<String, MetricReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_bleu: Option<f64>,
}

fn first_answer(g: &GoldRecord) -> Result<&str, EvalError> {
    g.answers
        .first()
        .map(String::as_str)
        .ok_or_else(|| EvalError::Schema {
            path: "gold".into(),
            line: 0,
            message: format!("record {} has no answers", g.id),
        })
}

/// Scores aligned records with one metric.
///
/// BLEU compares against the first gold answer (sentence-level per record,
/// plus corpus-level over all records). ROUGE-L and QA F1 take the best gold
/// answer. The retrieval metric reads spans from each prediction and needs
/// `supporting_facts` on every gold record.
pub fn evaluate_metric(
    metric: EvalMetric,
    predictions: &[PredictionRecord],
    golds: &[GoldRecord],
) -> Result<EvalOutput, EvalError> {
    let pairs = align(predictions, golds)?;
    let mut reports = BTreeMap::new();
    let mut corpus = None;
    match metric {
        EvalMetric::QaF1 => {
            let scores = pairs.iter().map(|(p, g)| qa_f1_max(&p.prediction, &g.answers)).collect();
            reports.insert("qa_f1".to_string(), MetricReport::from_scores(scores));
        }
        EvalMetric::RougeL => {
            let scores = pairs
                .iter()
                .map(|(p, g)| {
                    g.answers
                        .iter()
                        .map(|a| rouge_l_f1(&p.prediction, a))
                        .fold(0.0, f64::max)
                })
                .collect();
            reports.insert("rouge_l".to_string(), MetricReport::from_scores(scores));
        }
        EvalMetric::Bleu => {
            let mut hyps = Vec::with_capacity(pairs.len());
            let mut refs = Vec::with_capacity(pairs.len());
            for (p, g) in &pairs {
                hyps.push(p.prediction.as_str());
                refs.push(first_answer(g)?);
            }
            let scores = hyps
                .iter()
                .zip(&refs)
                .map(|(h, r)| BleuStats::of_pair(h, r).score())
                .collect();
            reports.insert("bleu".to_string(), MetricReport::from_scores(scores));
            if !pairs.is_empty() {
                corpus = Some(corpus_bleu(&hyps, &refs)?);
            }
        }
        EvalMetric::Retrieval => {
            let mut responses = Vec::with_capacity(pairs.len());
            let mut facts = Vec::with_capacity(pairs.len());
            for (p, g) in &pairs {
                let f = g.supporting_facts.as_ref().ok_or_else(|| EvalError::Schema {
                    path: "gold".into(),
                    line: 0,
                    message: format!("record {} has no supporting_facts", g.id),
                })?;
                responses.push(p.prediction.as_str());
                facts.push(f.clone());
            }
            let r = retrieval_eval(&responses, &facts)?;
            reports.insert("bleu".to_string(), r.bleu);
            reports.insert("rouge_l".to_string(), r.rouge_l);
        }
    }
    Ok(EvalOutput {
        metric,
        count: pairs.len(),
        reports,
        corpus_bleu: corpus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval_metrics::qa_f1;

    fn preds(text: &str) -> Vec<PredictionRecord> {
        parse_jsonl(text, "preds").unwrap()
    }

    fn golds(text: &str) -> Vec<GoldRecord> {
        parse_jsonl(text, "gold").unwrap()
    }

    #[test]
    fn all_correct_and_empty() {
        let g = golds("{\"id\":\"a\",\"answers\":[\"Paris\"]}\n{\"id\":2,\"answers\":[\"blue\",\"azure\"]}\n");
        let p = preds("{\"id\":2,\"prediction\":\"azure\"}\n\n{\"id\":\"a\",\"prediction\":\"paris\"}");
        assert_eq!(evaluate_records(&p, &g).unwrap().aggregate, 1.0);
        let empty = preds("{\"id\":2,\"prediction\":\"\"}\n{\"id\":\"a\",\"prediction\":\"\"}");
        assert_eq!(evaluate_records(&empty, &g).unwrap().aggregate, 0.0);
    }

    #[test]
    fn mixed_is_mean_of_per_instance() {
        let g = golds(
            "{\"id\":1,\"answers\":[\"cat sat down\"]}\n{\"id\":2,\"answers\":[\"Talk That Talk\"]}\n{\"id\":3,\"answers\":[\"7.2 million\"]}",
        );
        let p = preds(
            "{\"id\":1,\"prediction\":\"cat sat\"}\n{\"id\":2,\"prediction\":\"talk that talk\"}\n{\"id\":3,\"prediction\":\"7413070\"}",
        );
        let r = evaluate_records(&p, &g).unwrap();
        let expected = [qa_f1("cat sat", "cat sat down"), 1.0, 0.0];
        assert_eq!(r.per_instance, expected);
        assert!((r.aggregate - 0.6).abs() < 1e-12);
    }

    #[test]
    fn id_errors() {
        let g = golds("{\"id\":1,\"answers\":[\"x\"]}");
        assert!(matches!(evaluate_records(&preds("{\"id\":2,\"prediction\":\"x\"}"), &g), Err(EvalError::MissingId(_))));
        let two = preds("{\"id\":1,\"prediction\":\"x\"}\n{\"id\":9,\"prediction\":\"x\"}");
        assert!(matches!(evaluate_records(&two, &g), Err(EvalError::MissingId(id)) if id == "9"));
        let dup = preds("{\"id\":1,\"prediction\":\"x\"}\n{\"id\":1,\"prediction\":\"y\"}");
        assert!(matches!(evaluate_records(&dup, &g), Err(EvalError::DuplicateId(_))));
        assert!(matches!(
            parse_jsonl::<GoldRecord>("{\"id\":1}", "gold"),
            Err(EvalError::Schema { line: 1, .. })
        ));
    }

    #[test]
    fn metric_names_round_trip() {
        for m in EvalMetric::ALL {
            assert_eq!(m.name().parse::<EvalMetric>().unwrap(), m);
        }
        assert!("f1".parse::<EvalMetric>().is_err());
    }

    #[test]
    fn retrieval_metric_needs_facts() {
        let g = golds("{\"id\":1,\"answers\":[\"x\"]}");
        let p = preds("{\"id\":1,\"prediction\":\"<think><retrieval>a b</retrieval></think>Answer: x\"}");
        assert!(matches!(evaluate_metric(EvalMetric::Retrieval, &p, &g), Err(EvalError::Schema { .. })));
        let g = golds("{\"id\":1,\"answers\":[\"x\"],\"supporting_facts\":[\"a b\"]}");
        let out = evaluate_metric(EvalMetric::Retrieval, &p, &g).unwrap();
        assert_eq!(out.reports["rouge_l"].aggregate, 1.0);
    }

    #[test]
    fn bleu_metric_reports_corpus_score() {
        let g = golds("{\"id\":1,\"answers\":[\"the quick brown fox jumps\"]}");
        let p = preds("{\"id\":1,\"prediction\":\"the quick brown fox jumps\"}");
        let out = evaluate_metric(EvalMetric::Bleu, &p, &g).unwrap();
        assert!((out.corpus_bleu.unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(out.count, 1);
    }
}
