//! Semantic step quantification: trigger counting, step segmentation, and
//! steps-per-token density.
//!
//! A semantic step is the content generated since the previous trigger token;
//! the step count of a sequence is `1 + number of trigger occurrences`, the
//! `1` covering the final segment that carries the answer. The empty sequence
//! counts as one step so degenerate rollouts still have a defined reward.

use alloc::vec::Vec;

use crate::toylang::TokenId;

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum StepsegError {
    #[error("token_count must be positive")]
    ZeroTokens,
}

/// Ordered spans partitioning a token sequence; every span after the first
/// begins at a trigger token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepSegmentation {
    pub spans: Vec<(usize, usize)>,
    pub trigger_count: usize,
}

impl StepSegmentation {
    pub fn step_count(&self) -> usize {
        self.spans.len()
    }
}

/// Number of positions holding a trigger token.
pub fn count_triggers(tokens: &[TokenId], triggers: &[TokenId]) -> usize {
    tokens.iter().filter(|t| triggers.contains(t)).count()
}

/// `1 + count_triggers(..)`.
pub fn step_count(tokens: &[TokenId], triggers: &[TokenId]) -> usize {
    1 + count_triggers(tokens, triggers)
}

/// Splits immediately before each trigger occurrence.
pub fn segment_steps(tokens: &[TokenId], triggers: &[TokenId]) -> StepSegmentation {
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if triggers.contains(t) {
            spans.push((start, i));
            start = i;
        }
    }
    spans.push((start, tokens.len()));
    StepSegmentation {
        trigger_count: spans.len() - 1,
        spans,
    }
}

/// Steps per token.
pub fn semantic_density(step_count: usize, token_count: usize) -> Result<f64, StepsegError> {
    if token_count == 0 {
        return Err(StepsegError::ZeroTokens);
    }
    Ok(step_count as f64 / token_count as f64)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Byte offsets of whole-word, case-sensitive occurrences of any trigger
/// word. A word is a maximal run of alphanumeric/underscore characters, so
/// `"Wait,"` matches `Wait` but `"await"` does not.
pub fn text_trigger_offsets(text: &str, triggers: &[&str]) -> Vec<usize> {
    let mut offsets = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        if !is_word_char(c) {
            chars.next();
            continue;
        }
        let mut end = start;
        while let Some(&(i, c)) = chars.peek() {
            if is_word_char(c) {
                end = i + c.len_utf8();
                chars.next();
            } else {
                break;
            }
        }
        if triggers.contains(&&text[start..end]) {
            offsets.push(start);
        }
    }
    offsets
}

/// Whole-word trigger count over plain text.
pub fn count_text_triggers(text: &str, triggers: &[&str]) -> usize {
    text_trigger_offsets(text, triggers).len()
}

/// Splits the text immediately before each whole-word trigger occurrence.
pub fn segment_text<'a>(text: &'a str, triggers: &[&str]) -> Vec<&'a str> {
    let mut segments = Vec::new();
    let mut start = 0;
    for off in text_trigger_offsets(text, triggers) {
        segments.push(&text[start..off]);
        start = off;
    }
    segments.push(&text[start..]);
    segments
}

/// Number of words (maximal alphanumeric/underscore runs) in plain text.
pub fn count_words(text: &str) -> usize {
    let mut n = 0;
    let mut in_word = false;
    for c in text.chars() {
        if is_word_char(c) {
            if !in_word {
                n += 1;
            }
            in_word = true;
        } else {
            in_word = false;
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toylang::build_vocab;
    use alloc::vec;

    #[test]
    fn count_no_triggers() {
        let v = build_vocab(1, 10).unwrap();
        let trig = v.trigger_tokens();
        let tokens = vec![v.digit(1), v.digit(2)];
        assert_eq!(count_triggers(&tokens, &trig), 0);
        assert_eq!(step_count(&tokens, &trig), 1);
    }

    #[test]
    fn count_multiple_triggers() {
        let v = build_vocab(1, 10).unwrap();
        let t = v.trigger_tokens()[0];
        let w = v.digit(0);
        let tokens = vec![w, t, w, t, t, w];
        assert_eq!(count_triggers(&tokens, &[t]), 3);
        assert_eq!(step_count(&tokens, &[t]), 4);
    }

    #[test]
    fn empty_sequence_is_one_step() {
        let v = build_vocab(1, 10).unwrap();
        let trig = v.trigger_tokens();
        assert_eq!(step_count(&[], &trig), 1);
        let seg = segment_steps(&[], &trig);
        assert_eq!(seg.spans, vec![(0, 0)]);
        assert_eq!(seg.step_count(), 1);
    }

    #[test]
    fn segment_single_split() {
        let v = build_vocab(1, 10).unwrap();
        let t = v.trigger_tokens()[0];
        let a = v.digit(1);
        let b = v.digit(2);
        let c = v.digit(3);
        let seg = segment_steps(&[a, b, t, c], &[t]);
        assert_eq!(seg.spans, vec![(0, 2), (2, 4)]);
        assert_eq!(seg.trigger_count, 1);
    }

    #[test]
    fn segment_spans_partition_and_match_step_count() {
        let v = build_vocab(2, 10).unwrap();
        let trig = v.trigger_tokens();
        // pseudo-random token soup
        let tokens: Vec<TokenId> = (0..200u16)
            .map(|i| TokenId((i * 7 + 3) % v.len() as u16))
            .collect();
        let seg = segment_steps(&tokens, &trig);
        assert_eq!(seg.step_count(), step_count(&tokens, &trig));
        // exact partition
        let mut cursor = 0;
        for &(s, e) in &seg.spans {
            assert_eq!(s, cursor);
            assert!(e >= s);
            cursor = e;
        }
        assert_eq!(cursor, tokens.len());
        // spans after the first begin at a trigger
        for &(s, _) in &seg.spans[1..] {
            assert!(trig.contains(&tokens[s]));
        }
    }

    #[test]
    fn leading_trigger_yields_empty_first_span() {
        let v = build_vocab(1, 10).unwrap();
        let t = v.trigger_tokens()[0];
        let seg = segment_steps(&[t, v.digit(1)], &[t]);
        assert_eq!(seg.spans, vec![(0, 0), (0, 2)]);
    }

    #[test]
    fn density_values() {
        assert_eq!(semantic_density(4, 100).unwrap(), 0.04);
        assert_eq!(semantic_density(1, 1).unwrap(), 1.0);
        assert_eq!(semantic_density(1, 0), Err(StepsegError::ZeroTokens));
    }

    #[test]
    fn text_matching_is_whole_word_and_case_sensitive() {
        let triggers = ["Wait", "Alternatively"];
        assert_eq!(
            count_text_triggers("Wait, what? await Waiting wait", &triggers),
            1
        );
        assert_eq!(
            count_text_triggers("Alternatively: Wait. Wait!", &triggers),
            3
        );
        assert_eq!(count_text_triggers("", &triggers), 0);
    }

    #[test]
    fn text_segments_split_before_triggers() {
        let triggers = ["Wait"];
        let segs = segment_text("a b. Wait c. Wait d", &triggers);
        assert_eq!(segs, vec!["a b. ", "Wait c. ", "Wait d"]);
        assert_eq!(count_words("a b. Wait c."), 4);
    }
}
