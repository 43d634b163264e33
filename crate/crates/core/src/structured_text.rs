//! Tag grammar for tagged reasoning output.
//!
//! A well-formed response looks like
//!
//! ```text
//! <think> ... <retrieval>quoted context</retrieval> ... </think>
//! optional prose
//! Answer: final answer
//! ```
//!
//! Markers are literal, case-sensitive and never nest. Retrieval pairs are
//! legal only inside the think block. All offsets in this module are byte
//! offsets into UTF-8 text, so they can be used directly for slicing.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const RETRIEVAL_OPEN: &str = "<retrieval>";
pub const RETRIEVAL_CLOSE: &str = "</retrieval>";
pub const ANSWER_PREFIX: &str = "Answer:";

const MARKERS: [&str; 4] = [THINK_OPEN, THINK_CLOSE, RETRIEVAL_OPEN, RETRIEVAL_CLOSE];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("no `{ANSWER_PREFIX}` prefix found")]
    NoAnswerFound,
    #[error("fact does not occur in the reasoning text: {0:?}")]
    FactNotFound(String),
    #[error("empty fact cannot be wrapped")]
    EmptyFact,
}

/// One of the closed set of grammar violations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    MissingThink,
    UnbalancedThink,
    RetrievalOutsideThink,
    UnbalancedRetrieval,
    MissingAnswer,
    TextBeforeThink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatViolation {
    pub kind: ViolationKind,
    /// Byte offset into the raw text; `raw.len()` for "missing at end".
    pub location: usize,
}

impl fmt::Display for FormatViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at byte {}", self.kind, self.location)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalSpan {
    /// Start of the span interior, relative to `think_text`.
    pub start: usize,
    /// End (exclusive) of the span interior, relative to `think_text`.
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredResponse {
    pub raw: String,
    pub think_text: String,
    pub retrieval_spans: Vec<RetrievalSpan>,
    pub answer_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FormatCheck {
    pub ok: bool,
    pub violations: Vec<FormatViolation>,
}

/// Inner texts of balanced retrieval pairs, plus whether any marker was left
/// unmatched.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExtractedSpans {
    pub spans: Vec<String>,
    pub unbalanced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    ThinkOpen,
    ThinkClose,
    RetrievalOpen,
    RetrievalClose,
}

impl Marker {
    fn literal(self) -> &'static str {
        match self {
            Marker::ThinkOpen => THINK_OPEN,
            Marker::ThinkClose => THINK_CLOSE,
            Marker::RetrievalOpen => RETRIEVAL_OPEN,
            Marker::RetrievalClose => RETRIEVAL_CLOSE,
        }
    }
}

fn scan_markers(raw: &str) -> Vec<(usize, Marker)> {
    let bytes = raw.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            let rest = &raw[i..];
            let hit = [
                Marker::ThinkOpen,
                Marker::ThinkClose,
                Marker::RetrievalOpen,
                Marker::RetrievalClose,
            ]
            .into_iter()
            .find(|m| rest.starts_with(m.literal()));
            if let Some(m) = hit {
                out.push((i, m));
                i += m.literal().len();
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Parses a raw response. On failure every detected violation is returned,
/// sorted by location.
pub fn parse_response(raw: &str) -> Result<StructuredResponse, Vec<FormatViolation>> {
    let markers = scan_markers(raw);
    let mut violations = Vec::new();
    let mut push = |kind, location| violations.push(FormatViolation { kind, location });

    let mut think_open: Option<usize> = None;
    let mut think_pair: Option<(usize, usize)> = None;
    let mut seen_think = false;
    let mut retrieval_open: Option<usize> = None;
    // A retrieval pair cut by `</think>` is reported once; its late close is absorbed.
    let mut crossed_pending = false;
    let mut text_before_reported = false;
    let mut cursor = 0;

    // Only text ahead of the first think marker counts; with no think marker
    // at all the response is reported as MissingThink instead.
    let has_think = markers
        .iter()
        .any(|(_, m)| matches!(m, Marker::ThinkOpen | Marker::ThinkClose));
    let check_prefix_text = |segment_start: usize, segment_end: usize, reported: &mut bool| {
        if *reported {
            return None;
        }
        let segment = &raw[segment_start..segment_end];
        let lead = segment.len() - segment.trim_start().len();
        if segment.trim().is_empty() {
            None
        } else {
            *reported = true;
            Some(segment_start + lead)
        }
    };

    for &(pos, marker) in &markers {
        if has_think && !seen_think && retrieval_open.is_none() {
            if let Some(loc) = check_prefix_text(cursor, pos, &mut text_before_reported) {
                push(ViolationKind::TextBeforeThink, loc);
            }
        }
        match marker {
            Marker::ThinkOpen => {
                seen_think = true;
                if think_open.is_some() || think_pair.is_some() {
                    push(ViolationKind::UnbalancedThink, pos);
                } else {
                    think_open = Some(pos);
                }
            }
            Marker::ThinkClose => {
                seen_think = true;
                match think_open.take() {
                    Some(open) => {
                        if let Some(r) = retrieval_open.take() {
                            push(ViolationKind::UnbalancedRetrieval, r);
                            crossed_pending = true;
                        }
                        think_pair = Some((open, pos));
                    }
                    None => push(ViolationKind::UnbalancedThink, pos),
                }
            }
            Marker::RetrievalOpen => {
                if retrieval_open.is_some() {
                    push(ViolationKind::UnbalancedRetrieval, pos);
                } else {
                    if think_open.is_none() {
                        push(ViolationKind::RetrievalOutsideThink, pos);
                    }
                    retrieval_open = Some(pos);
                }
            }
            Marker::RetrievalClose => {
                if retrieval_open.take().is_none() {
                    if crossed_pending {
                        crossed_pending = false;
                    } else {
                        push(ViolationKind::UnbalancedRetrieval, pos);
                    }
                }
            }
        }
        cursor = pos + marker.literal().len();
    }
    if let Some(open) = think_open {
        push(ViolationKind::UnbalancedThink, open);
    }
    if let Some(r) = retrieval_open {
        push(ViolationKind::UnbalancedRetrieval, r);
    }
    if !seen_think {
        push(ViolationKind::MissingThink, 0);
    }

    let answer_search_from = think_pair.map_or(0, |(_, close)| close + THINK_CLOSE.len());
    let answer_at = raw[answer_search_from..]
        .rfind(ANSWER_PREFIX)
        .map(|i| i + answer_search_from);
    if answer_at.is_none() {
        push(ViolationKind::MissingAnswer, raw.len());
    }

    if !violations.is_empty() {
        violations.sort_by_key(|v| v.location);
        return Err(violations);
    }

    // Both are present when no violation was recorded.
    let (open, close) = think_pair.expect("validated think pair");
    let answer_at = answer_at.expect("validated answer prefix");
    let think_start = open + THINK_OPEN.len();
    let think_text = &raw[think_start..close];

    let mut spans = Vec::new();
    let mut span_start = None;
    for &(pos, marker) in &markers {
        match marker {
            Marker::RetrievalOpen => span_start = Some(pos + RETRIEVAL_OPEN.len()),
            Marker::RetrievalClose => {
                let start = span_start.take().expect("validated retrieval pair");
                spans.push(RetrievalSpan {
                    start: start - think_start,
                    end: pos - think_start,
                    text: raw[start..pos].to_string(),
                });
            }
            _ => {}
        }
    }

    Ok(StructuredResponse {
        raw: raw.to_string(),
        think_text: think_text.to_string(),
        retrieval_spans: spans,
        answer_text: raw[answer_at + ANSWER_PREFIX.len()..].trim().to_string(),
    })
}

/// True iff `raw` has exactly one balanced think pair, balanced retrieval
/// pairs only inside it, and an answer prefix after the think close.
pub fn check_format(raw: &str) -> FormatCheck {
    match parse_response(raw) {
        Ok(_) => FormatCheck {
            ok: true,
            violations: Vec::new(),
        },
        Err(violations) => FormatCheck {
            ok: false,
            violations,
        },
    }
}

/// Text after the last answer prefix, trimmed.
pub fn extract_answer(raw: &str) -> Result<&str, StructureError> {
    raw.rfind(ANSWER_PREFIX)
        .map(|i| raw[i + ANSWER_PREFIX.len()..].trim())
        .ok_or(StructureError::NoAnswerFound)
}

/// Inner texts of all balanced retrieval pairs in document order. Stray or
/// nested markers set `unbalanced`; a nested open restarts the pending span.
pub fn extract_retrieval_spans(raw: &str) -> ExtractedSpans {
    let mut out = ExtractedSpans::default();
    let mut open: Option<usize> = None;
    for (pos, marker) in scan_markers(raw) {
        match marker {
            Marker::RetrievalOpen => {
                if open.is_some() {
                    out.unbalanced = true;
                }
                open = Some(pos + RETRIEVAL_OPEN.len());
            }
            Marker::RetrievalClose => match open.take() {
                Some(start) => out.spans.push(raw[start..pos].to_string()),
                None => out.unbalanced = true,
            },
            _ => {}
        }
    }
    if open.is_some() {
        out.unbalanced = true;
    }
    out
}

/// Interior of the first think block, if it is closed.
pub fn think_interior(raw: &str) -> Option<&str> {
    let open = raw.find(THINK_OPEN)? + THINK_OPEN.len();
    let close = raw[open..].find(THINK_CLOSE)? + open;
    Some(&raw[open..close])
}

/// Wraps every occurrence of every fact in a retrieval pair.
///
/// Facts are placed longest first; an occurrence overlapping an already
/// wrapped region is skipped, so a shorter fact inside a longer one is
/// swallowed. Each fact must occur at least once.
pub fn insert_retrieval_tokens<S: AsRef<str>>(
    reasoning: &str,
    facts: &[S],
) -> Result<String, StructureError> {
    let mut order: Vec<&str> = facts.iter().map(AsRef::as_ref).collect();
    if order.iter().any(|f| f.is_empty()) {
        return Err(StructureError::EmptyFact);
    }
    if let Some(missing) = order.iter().find(|f| !reasoning.contains(**f)) {
        return Err(StructureError::FactNotFound((*missing).to_string()));
    }
    // Stable: equal-length facts keep caller order.
    order.sort_by_key(|f| std::cmp::Reverse(f.len()));

    let mut claimed: Vec<(usize, usize)> = Vec::new();
    for fact in order {
        for (start, _) in reasoning.match_indices(fact) {
            let end = start + fact.len();
            if claimed.iter().all(|&(s, e)| end <= s || start >= e) {
                claimed.push((start, end));
            }
        }
    }
    claimed.sort_unstable();

    let extra = claimed.len() * (RETRIEVAL_OPEN.len() + RETRIEVAL_CLOSE.len());
    let mut out = String::with_capacity(reasoning.len() + extra);
    let mut cursor = 0;
    for (start, end) in claimed {
        out.push_str(&reasoning[cursor..start]);
        out.push_str(RETRIEVAL_OPEN);
        out.push_str(&reasoning[start..end]);
        out.push_str(RETRIEVAL_CLOSE);
        cursor = end;
    }
    out.push_str(&reasoning[cursor..]);
    Ok(out)
}

/// Removes every grammar marker. Repeats until no marker remains, so the
/// result is a fixed point even when removal splices a new marker together.
pub fn strip_tags(raw: &str) -> String {
    let mut current = raw.to_string();
    loop {
        let mut next = current.clone();
        for marker in MARKERS {
            next = next.replace(marker, "");
        }
        if next == current {
            return next;
        }
        current = next;
    }
}

/// Collapses every run of whitespace to one space and trims both ends.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whitespace-insensitive substring test.
pub fn contains_collapsed(haystack: &str, needle: &str) -> bool {
    collapse_whitespace(haystack).contains(&collapse_whitespace(needle))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(raw: &str) -> Vec<ViolationKind> {
        check_format(raw).violations.iter().map(|v| v.kind).collect()
    }

    #[test]
    fn minimal_well_formed() {
        let parsed = parse_response("<think>x</think>Answer: y").unwrap();
        assert_eq!(parsed.think_text, "x");
        assert!(parsed.retrieval_spans.is_empty());
        assert_eq!(parsed.answer_text, "y");
    }

    #[test]
    fn retrieval_before_think_is_rejected() {
        let errs = parse_response("<retrieval>a</retrieval><think>b</think>Answer: c").unwrap_err();
        assert!(errs
            .iter()
            .any(|v| v.kind == ViolationKind::RetrievalOutsideThink && v.location == 0));
    }

    #[test]
    fn crossed_tags_are_unbalanced_retrieval() {
        assert_eq!(
            kinds("<think>a<retrieval>b</think></retrieval>Answer: c"),
            vec![ViolationKind::UnbalancedRetrieval]
        );
    }

    #[test]
    fn empty_input_reports_think_and_answer() {
        let check = check_format("");
        assert!(!check.ok);
        assert_eq!(
            kinds(""),
            vec![ViolationKind::MissingThink, ViolationKind::MissingAnswer]
        );
    }

    #[test]
    fn other_violation_kinds() {
        assert_eq!(
            kinds("hello <think>a</think>Answer: b"),
            vec![ViolationKind::TextBeforeThink]
        );
        assert_eq!(
            kinds("<think>a</think><think>b</think>Answer: c"),
            vec![ViolationKind::UnbalancedThink, ViolationKind::UnbalancedThink]
        );
        assert_eq!(kinds("<think>a Answer: b"), vec![
            ViolationKind::UnbalancedThink
        ]);
        assert_eq!(
            kinds("<think>Answer: inside</think>"),
            vec![ViolationKind::MissingAnswer]
        );
        assert_eq!(
            kinds("<think>a</think><retrieval>b</retrieval>Answer: c"),
            vec![ViolationKind::RetrievalOutsideThink]
        );
        assert_eq!(
            kinds("<think><retrieval>a<retrieval>b</retrieval></think>Answer: c"),
            vec![ViolationKind::UnbalancedRetrieval]
        );
        assert_eq!(
            kinds("<THINK>a</THINK>Answer: b"),
            vec![ViolationKind::MissingThink]
        );
    }

    #[test]
    fn violation_locations_are_within_raw() {
        for raw in ["", "x", "<think>", "</retrieval>", "<think>a</think>"] {
            for v in check_format(raw).violations {
                assert!(v.location <= raw.len(), "{raw:?} {v}");
            }
        }
    }

    #[test]
    fn spans_index_think_text() {
        let raw = "<think>one <retrieval>two</retrieval> three <retrieval>four</retrieval></think>\n\nAnswer:  five ";
        let parsed = parse_response(raw).unwrap();
        assert_eq!(parsed.retrieval_spans.len(), 2);
        for span in &parsed.retrieval_spans {
            assert_eq!(&parsed.think_text[span.start..span.end], span.text);
        }
        assert_eq!(parsed.retrieval_spans[1].text, "four");
        assert_eq!(parsed.answer_text, "five");
    }

    #[test]
    fn prose_between_think_and_answer_is_allowed() {
        let parsed = parse_response("<think>a</think>\nSome summary.\nAnswer: 1").unwrap();
        assert_eq!(parsed.answer_text, "1");
    }

    #[test]
    fn extract_answer_uses_last_prefix() {
        assert_eq!(extract_answer("Answer: Answer: x").unwrap(), "x");
        assert_eq!(
            extract_answer("no prefix here"),
            Err(StructureError::NoAnswerFound)
        );
    }

    #[test]
    fn span_extraction() {
        assert!(extract_retrieval_spans("<think>plain</think>Answer: a").spans.is_empty());
        let dup = extract_retrieval_spans("<retrieval>a</retrieval><retrieval>a</retrieval>");
        assert_eq!(dup.spans, vec!["a", "a"]);
        assert!(!dup.unbalanced);
        let broken = extract_retrieval_spans("<retrieval>a</retrieval><retrieval>b");
        assert_eq!(broken.spans, vec!["a"]);
        assert!(broken.unbalanced);
        let stray = extract_retrieval_spans("</retrieval><retrieval>c</retrieval>");
        assert_eq!(stray.spans, vec!["c"]);
        assert!(stray.unbalanced);
    }

    #[test]
    fn insertion_examples() {
        assert_eq!(
            insert_retrieval_tokens("AB", &["B"]).unwrap(),
            "A<retrieval>B</retrieval>"
        );
        assert_eq!(
            insert_retrieval_tokens("xyx", &["x"]).unwrap(),
            "<retrieval>x</retrieval>y<retrieval>x</retrieval>"
        );
        assert_eq!(
            insert_retrieval_tokens("abcd", &["bc", "abcd"]).unwrap(),
            "<retrieval>abcd</retrieval>"
        );
        assert_eq!(
            insert_retrieval_tokens("abc", &["zz"]),
            Err(StructureError::FactNotFound("zz".into()))
        );
        assert_eq!(
            insert_retrieval_tokens("abc", &[""]),
            Err(StructureError::EmptyFact)
        );
    }

    /// Brute-force oracle for the longest-first rule: enumerate every set of
    /// non-overlapping occurrence intervals, keep those that are maximal under
    /// the greedy priority order, and check the implementation picks it.
    #[test]
    fn insertion_matches_enumeration_oracle() {
        let cases: &[(&str, &[&str])] = &[
            ("abcd", &["bc", "abcd"]),
            ("aaaa", &["aa"]),
            ("abab", &["ab", "bab"]),
            ("xbcyabc", &["bc", "abc"]),
        ];
        for (text, facts) in cases {
            let mut ranked: Vec<&str> = facts.to_vec();
            ranked.sort_by_key(|f| std::cmp::Reverse(f.len()));
            let mut intervals = Vec::new();
            for f in &ranked {
                for s in 0..=text.len() - f.len() {
                    if &text[s..s + f.len()] == *f {
                        intervals.push((s, s + f.len()));
                    }
                }
            }
            // Walk intervals in (priority, start) order; accept if disjoint.
            let mut accepted: Vec<(usize, usize)> = Vec::new();
            for &(s, e) in &intervals {
                if accepted.iter().all(|&(a, b)| e <= a || s >= b) {
                    accepted.push((s, e));
                }
            }
            accepted.sort();
            let mut expected = String::new();
            let mut cur = 0;
            for (s, e) in accepted {
                expected.push_str(&text[cur..s]);
                expected.push_str("<retrieval>");
                expected.push_str(&text[s..e]);
                expected.push_str("</retrieval>");
                cur = e;
            }
            expected.push_str(&text[cur..]);
            assert_eq!(insert_retrieval_tokens(text, facts).unwrap(), expected);
        }
    }

    #[test]
    fn strip_tags_examples() {
        assert_eq!(strip_tags("<think>a</think>"), "a");
        assert_eq!(strip_tags("plain"), "plain");
        let once = strip_tags("<thi<think>nk>x");
        assert_eq!(strip_tags(&once), once);
        let r = "some reasoning about facts";
        let wrapped = insert_retrieval_tokens(r, &["reasoning", "facts"]).unwrap();
        assert_eq!(strip_tags(&wrapped), r);
    }

    #[test]
    fn think_interior_requires_close() {
        assert_eq!(think_interior("<think>abc</think>Answer: x"), Some("abc"));
        assert_eq!(think_interior("<think>abc"), None);
        assert_eq!(think_interior("abc"), None);
    }

    #[test]
    fn collapsed_containment() {
        assert!(contains_collapsed("a  b\n c", "b c"));
        assert!(!contains_collapsed("a b c", "a c"));
    }
}
