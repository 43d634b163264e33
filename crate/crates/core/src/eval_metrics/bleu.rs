//! Corpus BLEU with the international tokenizer and exponential smoothing.
//!
//! Tokenization, applied to each right-trimmed line:
//!
//! 1. `(\P{N})(\p{P})` becomes `$1 $2 ` (punctuation after a non-digit),
//! 2. `(\p{P})(\P{N})` becomes ` $1 $2` (punctuation before a non-digit),
//! 3. `(\p{S})` becomes ` $1 ` (symbols),
//!
//! then whitespace is split. Punctuation between two digits (`1,104`, `7.2`)
//! stays attached. Statistics are pooled over the corpus: clipped n-gram
//! matches and totals for n = 1..4, plus hypothesis and reference lengths.
//! A zero match count at order n is replaced by `1 / (2^k · total_n)` where k
//! counts the zero orders seen so far. The score is
//! `100 · BP · exp(mean(log p_n))` with `BP = exp(1 - ref/hyp)` when the
//! hypothesis side is shorter. A corpus without a single matching unigram
//! scores exactly 0.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

use super::EvalError;

const MAX_ORDER: usize = 4;

fn rules() -> &'static [(Regex, &'static str); 3] {
    static RULES: OnceLock<[(Regex, &'static str); 3]> = OnceLock::new();
    RULES.get_or_init(|| {
        [
            (Regex::new(r"(\P{N})(\p{P})").expect("static regex"), "${1} ${2} "),
            (Regex::new(r"(\p{P})(\P{N})").expect("static regex"), " ${1} ${2}"),
            (Regex::new(r"(\p{S})").expect("static regex"), " ${1} "),
        ]
    })
}

pub fn tokenize_intl(line: &str) -> Vec<String> {
    let mut text = line.trim_end().to_string();
    for (re, replacement) in rules() {
        text = re.replace_all(&text, *replacement).into_owned();
    }
    text.split_whitespace().map(str::to_string).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Sufficient statistics of one or more segment pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn of_pair(hypothesis: &str, reference: &str) -> Self {
        let hyp = tokenize_intl(hypothesis);
        let reference = tokenize_intl(reference);
        let mut stats = BleuStats {
            hyp_len: hyp.len(),
            ref_len: reference.len(),
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let ref_counts = ngram_counts(&reference, n);
            for (gram, count) in ngram_counts(&hyp, n) {
                stats.matches[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
            stats.totals[n - 1] = hyp.len().saturating_sub(n - 1);
        }
        stats
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// Score in [0, 100].
    pub fn score(&self) -> f64 {
        if self.matches.iter().all(|&m| m == 0) {
            return 0.0;
        }
        let bp = if self.hyp_len < self.ref_len {
            if self.hyp_len > 0 {
                (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
            } else {
                0.0
            }
        } else {
            1.0
        };
        let mut log_sum = 0.0;
        let mut smoothing = 1.0;
        for n in 0..MAX_ORDER {
            if self.totals[n] == 0 {
                // No n-grams of this order at all: precision stays 0.
                return 0.0;
            }
            let precision = if self.matches[n] == 0 {
                smoothing *= 2.0;
                1.0 / (smoothing * self.totals[n] as f64)
            } else {
                self.matches[n] as f64 / self.totals[n] as f64
            };
            log_sum += precision.ln();
        }
        100.0 * bp * (log_sum / MAX_ORDER as f64).exp()
    }
}

pub fn corpus_bleu<H: AsRef<str>, R: AsRef<str>>(
    hypotheses: &[H],
    references: &[R],
) -> Result<f64, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            left: hypotheses.len(),
            right: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut stats = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        stats.add(&BleuStats::of_pair(h.as_ref(), r.as_ref()));
    }
    Ok(stats.score())
}
