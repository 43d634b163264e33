//! Accuracy, format and retrieval rewards and their weighted sum.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::structured_text::{
    check_format, collapse_whitespace, extract_answer, extract_retrieval_spans,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("reward weights must be finite and non-negative, got ({0}, {1}, {2})")]
    InvalidWeights(f64, f64, f64),
}

/// Weights for the accuracy, format and retrieval components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct RewardWeights {
    acc: f64,
    fmt: f64,
    ret: f64,
}

impl RewardWeights {
    pub fn new(acc: f64, fmt: f64, ret: f64) -> Result<Self, RewardError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if ok(acc) && ok(fmt) && ok(ret) {
            Ok(Self { acc, fmt, ret })
        } else {
            Err(RewardError::InvalidWeights(acc, fmt, ret))
        }
    }

    pub fn lambda_acc(&self) -> f64 {
        self.acc
    }

    pub fn lambda_fmt(&self) -> f64 {
        self.fmt
    }

    pub fn lambda_ret(&self) -> f64 {
        self.ret
    }

    pub fn combine(&self, r_acc: f64, r_fmt: f64, r_ret: f64) -> f64 {
        self.acc * r_acc + self.fmt * r_fmt + self.ret * r_ret
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            acc: 0.7,
            fmt: 0.1,
            ret: 0.2,
        }
    }
}

impl TryFrom<[f64; 3]> for RewardWeights {
    type Error = RewardError;

    fn try_from(w: [f64; 3]) -> Result<Self, Self::Error> {
        Self::new(w[0], w[1], w[2])
    }
}

impl From<RewardWeights> for [f64; 3] {
    fn from(w: RewardWeights) -> Self {
        [w.acc, w.fmt, w.ret]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_acc: f64,
    pub r_fmt: f64,
    pub r_ret: f64,
    pub r_total: f64,
}

/// Answer normalization switches. [`TextNormalizationPolicy::squad`] is the
/// usual QA convention and the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextNormalizationPolicy {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub drop_articles: bool,
    pub collapse_whitespace: bool,
}

impl TextNormalizationPolicy {
    pub const fn squad() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: true,
            drop_articles: true,
            collapse_whitespace: true,
        }
    }

    pub const fn verbatim() -> Self {
        Self {
            lowercase: false,
            strip_punctuation: false,
            drop_articles: false,
            collapse_whitespace: false,
        }
    }

    pub fn normalize(&self, text: &str) -> String {
        static ARTICLES: OnceLock<Regex> = OnceLock::new();
        let mut out = if self.lowercase {
            text.to_lowercase()
        } else {
            text.to_string()
        };
        if self.strip_punctuation {
            out.retain(|c| !c.is_ascii_punctuation());
        }
        if self.drop_articles {
            let re = ARTICLES.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("static regex"));
            out = re.replace_all(&out, " ").into_owned();
        }
        if self.collapse_whitespace {
            out = collapse_whitespace(&out);
        }
        out
    }
}

impl Default for TextNormalizationPolicy {
    fn default() -> Self {
        Self::squad()
    }
}

/// Bag-of-tokens F1 after normalization. Zero when either side has no
/// tokens or nothing overlaps.
pub fn token_f1(prediction: &str, gold: &str, policy: &TextNormalizationPolicy) -> f64 {
    let pred = policy.normalize(prediction);
    let gold = policy.normalize(gold);
    let pred_tokens: Vec<&str> = pred.split_whitespace().collect();
    let gold_tokens: Vec<&str> = gold.split_whitespace().collect();
    if pred_tokens.is_empty() || gold_tokens.is_empty() {
        return 0.0;
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold_tokens {
        *gold_counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &pred_tokens {
        if let Some(c) = gold_counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred_tokens.len() as f64;
    let recall = overlap as f64 / gold_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn accuracy_reward(raw_response: &str, gold_answer: &str, policy: &TextNormalizationPolicy) -> f64 {
    match extract_answer(raw_response) {
        Ok(answer) => token_f1(answer, gold_answer, policy),
        Err(_) => 0.0,
    }
}

pub fn format_reward(raw_response: &str) -> f64 {
    if check_format(raw_response).ok {
        1.0
    } else {
        0.0
    }
}

/// 1 when at least one balanced retrieval pair exists and every span occurs
/// in the context, comparing with whitespace runs collapsed.
pub fn retrieval_reward(raw_response: &str, context: &str) -> f64 {
    let extracted = extract_retrieval_spans(raw_response);
    if extracted.spans.is_empty() {
        return 0.0;
    }
    let context = collapse_whitespace(context);
    let grounded = extracted
        .spans
        .iter()
        .all(|span| context.contains(&collapse_whitespace(span)));
    if grounded {
        1.0
    } else {
        0.0
    }
}

pub fn total_reward(
    raw_response: &str,
    gold_answer: &str,
    context: &str,
    weights: &RewardWeights,
    policy: &TextNormalizationPolicy,
) -> RewardBreakdown {
    let r_acc = accuracy_reward(raw_response, gold_answer, policy);
    let r_fmt = format_reward(raw_response);
    let r_ret = retrieval_reward(raw_response, context);
    RewardBreakdown {
        r_acc,
        r_fmt,
        r_ret,
        r_total: weights.combine(r_acc, r_fmt, r_ret),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SQUAD: TextNormalizationPolicy = TextNormalizationPolicy::squad();

    #[test]
    fn f1_examples() {
        assert_eq!(token_f1("Talk That Talk", "Talk That Talk", &SQUAD), 1.0);
        assert_eq!(token_f1("alpha beta", "gamma delta", &SQUAD), 0.0);
        // "the" is dropped: {cat, sat} vs {cat, sat, down} gives P=1, R=2/3.
        assert!((token_f1("the cat sat", "cat sat down", &SQUAD) - 0.8).abs() < 1e-12);
        // Without article dropping: overlap 2 of 3 on both sides.
        let keep_articles = TextNormalizationPolicy {
            drop_articles: false,
            ..SQUAD
        };
        assert!((token_f1("the cat sat", "cat sat down", &keep_articles) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(token_f1("", "x", &SQUAD), 0.0);
        assert_eq!(token_f1("the", "the", &SQUAD), 0.0);
    }

    #[test]
    fn normalization() {
        assert_eq!(SQUAD.normalize("  The Cat, a  dog!  "), "cat dog");
        assert_eq!(SQUAD.normalize("7.2 million"), "72 million");
        assert_eq!(TextNormalizationPolicy::verbatim().normalize(" A b "), " A b ");
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy_reward("<think>x</think>Answer: 7413070", "7.2 million", &SQUAD), 0.0);
        assert_eq!(accuracy_reward("no answer here", "x", &SQUAD), 0.0);
        assert_eq!(accuracy_reward("Answer: talk that talk.", "Talk That Talk", &SQUAD), 1.0);
    }

    #[test]
    fn format_and_retrieval_examples() {
        assert_eq!(format_reward("no think Answer: x"), 0.0);
        assert_eq!(format_reward("<retrieval>a</retrieval><think>b</think>Answer: c"), 0.0);
        let ctx = "Alpha beta gamma.\nDelta  epsilon.";
        assert_eq!(retrieval_reward("<think><retrieval>beta gamma</retrieval></think>Answer: x", ctx), 1.0);
        assert_eq!(retrieval_reward("<think><retrieval>gamma. Delta epsilon</retrieval></think>Answer: x", ctx), 1.0);
        assert_eq!(retrieval_reward("<think>none</think>Answer: x", ctx), 0.0);
        assert_eq!(
            retrieval_reward(
                "<think><retrieval>beta</retrieval><retrieval>zeta</retrieval></think>Answer: x",
                ctx
            ),
            0.0
        );
    }

    #[test]
    fn total_examples() {
        let w = RewardWeights::default();
        let ctx = "The sky is blue today.";
        let perfect = "<think>I need the color. <retrieval>The sky is blue</retrieval></think>Answer: blue";
        let b = total_reward(perfect, "blue", ctx, &w, &SQUAD);
        assert!((b.r_total - 1.0).abs() < 1e-12);
        let wrong = "<think>I need the color. <retrieval>The sky is blue</retrieval></think>Answer: red";
        let b = total_reward(wrong, "blue", ctx, &w, &SQUAD);
        assert_eq!((b.r_acc, b.r_fmt, b.r_ret), (0.0, 1.0, 1.0));
        assert!((b.r_total - 0.3).abs() < 1e-12);
        let b = total_reward("", "blue", ctx, &w, &SQUAD);
        assert_eq!((b.r_acc, b.r_fmt, b.r_ret, b.r_total), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn weights_validation() {
        assert!(RewardWeights::new(-0.1, 0.0, 0.0).is_err());
        assert!(RewardWeights::new(f64::NAN, 0.0, 0.0).is_err());
        let w: RewardWeights = serde_json::from_str("[0.5, 0.25, 0.25]").unwrap();
        assert_eq!(w.lambda_fmt(), 0.25);
        assert!(serde_json::from_str::<RewardWeights>("[1, -1, 0]").is_err());
        assert_eq!(serde_json::to_string(&RewardWeights::default()).unwrap(), "[0.7,0.1,0.2]");
    }

    proptest! {
        #[test]
        fn f1_symmetric(a in "[a-c ,.]{0,12}", b in "[a-c ,.]{0,12}") {
            prop_assert_eq!(token_f1(&a, &b, &SQUAD), token_f1(&b, &a, &SQUAD));
        }

        #[test]
        fn normalization_idempotent(s in "\\PC{0,24}") {
            let once = SQUAD.normalize(&s);
            prop_assert_eq!(SQUAD.normalize(&once), once);
        }

        #[test]
        fn total_is_monotone_and_bounded(
            acc in 0.0f64..=1.0, fmt in 0u8..2, ret in 0u8..2, bump in 0.0f64..=1.0,
        ) {
            let w = RewardWeights::default();
            let base = w.combine(acc, fmt.into(), ret.into());
            prop_assert!((0.0..=1.0 + 1e-12).contains(&base));
            prop_assert!(w.combine((acc + bump).min(1.0), fmt.into(), ret.into()) >= base);
            prop_assert!(w.combine(acc, 1.0, ret.into()) >= base);
            prop_assert!(w.combine(acc, fmt.into(), 1.0) >= base);
        }

        #[test]
        fn duplicating_a_valid_span_keeps_retrieval_reward(start in 0usize..20, len in 1usize..10) {
            let ctx = "the quick brown fox jumps over the lazy dog";
            let end = (start + len).min(ctx.len());
            let span = &ctx[start.min(end)..end];
            let one = format!("<think><retrieval>{span}</retrieval></think>Answer: x");
            let two = format!("<think><retrieval>{span}</retrieval><retrieval>{span}</retrieval></think>Answer: x");
            prop_assert_eq!(retrieval_reward(&one, ctx), retrieval_reward(&two, ctx));
        }
    }
}
