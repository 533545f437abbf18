//! Word-level text primitives shared by every metric and filter.
//!
//! Tokenization lowercases its output, so edit distances, length ratios and
//! all n-gram metrics built on top of it are case-insensitive.

use std::collections::HashSet;
use std::ops::{Deref, Range};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{self, WordSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TextError {
    #[error("undefined ratio: source has no tokens")]
    EmptySource,
}

/// Lowercased word tokens with the byte ranges they came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    tokens: Vec<String>,
    spans: Vec<Range<usize>>,
}

impl TokenSeq {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn spans(&self) -> &[Range<usize>] {
        &self.spans
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.tokens
    }
}

impl AsRef<[String]> for TokenSeq {
    fn as_ref(&self) -> &[String] {
        &self.tokens
    }
}

fn is_combining_mark(c: char) -> bool {
    matches!(c as u32,
        0x0300..=0x036F | 0x1AB0..=0x1AFF | 0x1DC0..=0x1DFF | 0x20D0..=0x20FF | 0xFE20..=0xFE2F)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

/// Whether `mid` joins its neighbours into one token: apostrophes and hyphens
/// between word characters ("don't", "well-known"), and periods or commas
/// between digits ("3.14", "1,000").
fn joins(prev: char, mid: char, next: char) -> bool {
    match mid {
        '\'' | '\u{2019}' | '-' => is_word_char(prev) && is_word_char(next),
        '.' | ',' => prev.is_numeric() && next.is_numeric(),
        _ => false,
    }
}

/// Splits on whitespace and separates punctuation into single-character
/// tokens, then lowercases. Every non-whitespace character that is not part
/// of a word becomes its own token.
pub fn tokenize(text: &str) -> TokenSeq {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if is_word_char(c) {
            i += 1;
            while i < chars.len() {
                let cur = chars[i].1;
                if is_word_char(cur) {
                    i += 1;
                } else if i + 1 < chars.len() && joins(chars[i - 1].1, cur, chars[i + 1].1) {
                    i += 2;
                } else {
                    break;
                }
            }
        } else {
            i += 1;
        }
        let span = byte_at(start)..byte_at(i);
        tokens.push(text[span.clone()].to_lowercase());
        spans.push(span);
    }
    TokenSeq { tokens, spans }
}

/// Sentences as trimmed slices of the input plus their normalized forms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentenceSeq {
    pub sentences: Vec<String>,
    pub spans: Vec<Range<usize>>,
    pub normalized: Vec<String>,
}

impl SentenceSeq {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Whitespace-collapsed, lowercased form used for sentence identity.
pub fn normalize_sentence(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn default_abbreviations() -> &'static HashSet<String> {
    static ABBREVIATIONS: OnceLock<HashSet<String>> = OnceLock::new();
    ABBREVIATIONS.get_or_init(|| parse_abbreviations(lexicon::DEFAULT_ABBREVIATIONS))
}

pub fn parse_abbreviations(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

fn blank_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\n[ \t\r\f\v]*\n").unwrap())
}

const TERMINATORS: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 7] = ['"', '\'', '\u{201D}', '\u{2019}', ')', ']', '\u{BB}'];
const OPENERS: [char; 6] = ['"', '\'', '\u{201C}', '\u{2018}', '(', '['];

/// Rule-based sentence splitter using the shipped abbreviation list.
pub fn split_sentences(text: &str) -> SentenceSeq {
    split_sentences_with(text, default_abbreviations())
}

/// Splits at `.`, `!` or `?` (plus trailing closing quotes or brackets) when
/// followed by whitespace and then an uppercase letter or digit, and at blank
/// lines. A period ending a listed abbreviation never splits.
pub fn split_sentences_with(text: &str, abbreviations: &HashSet<String>) -> SentenceSeq {
    let mut out = SentenceSeq::default();
    let mut push = |start: usize, end: usize| {
        let slice = &text[start..end];
        let trimmed = slice.trim();
        if trimmed.is_empty() {
            return;
        }
        let lead = slice.len() - slice.trim_start().len();
        let s = start + lead;
        out.spans.push(s..s + trimmed.len());
        out.normalized.push(normalize_sentence(trimmed));
        out.sentences.push(trimmed.to_string());
    };

    let mut para_start = 0;
    let mut paragraphs = Vec::new();
    for m in blank_line().find_iter(text) {
        paragraphs.push(para_start..m.start());
        para_start = m.end();
    }
    paragraphs.push(para_start..text.len());

    for para in paragraphs {
        let chars: Vec<(usize, char)> = text[para.clone()]
            .char_indices()
            .map(|(b, c)| (b + para.start, c))
            .collect();
        let mut sent_start = para.start;
        let mut i = 0;
        while i < chars.len() {
            if !TERMINATORS.contains(&chars[i].1) {
                i += 1;
                continue;
            }
            let term_start = i;
            let mut j = i;
            while j < chars.len() && TERMINATORS.contains(&chars[j].1) {
                j += 1;
            }
            while j < chars.len() && CLOSERS.contains(&chars[j].1) {
                j += 1;
            }
            let end_byte = chars.get(j).map_or(para.end, |&(b, _)| b);
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let has_space = k > j;
            let mut n = k;
            while n < chars.len() && OPENERS.contains(&chars[n].1) {
                n += 1;
            }
            let next_ok = chars
                .get(n)
                .is_some_and(|&(_, c)| c.is_uppercase() || c.is_numeric());
            let is_abbrev = chars[term_start].1 == '.' && {
                let word_start = chars[..term_start]
                    .iter()
                    .rposition(|&(_, c)| c.is_whitespace())
                    .map_or(0, |p| p + 1);
                let w: String = chars[word_start..=term_start]
                    .iter()
                    .map(|&(_, c)| c)
                    .collect::<String>()
                    .trim_start_matches(|c| OPENERS.contains(&c))
                    .to_lowercase();
                abbreviations.contains(&w)
            };
            if has_space && next_ok && !is_abbrev {
                push(sent_start, end_byte);
                sent_start = end_byte;
            }
            i = j.max(i + 1);
        }
        push(sent_start, para.end);
    }
    out
}

/// Levenshtein distance with unit costs, O(len(a)·len(b)) time and
/// O(min(len(a), len(b))) space.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (i, x) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in short.iter().enumerate() {
            let sub = diag + usize::from(x != y);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[short.len()]
}

/// `edit_distance(source, other) / len(source)`.
pub fn edit_ratio<T: PartialEq>(source: &[T], other: &[T]) -> Result<f64, TextError> {
    if source.is_empty() {
        return Err(TextError::EmptySource);
    }
    Ok(edit_distance(source, other) as f64 / source.len() as f64)
}

/// `len(other) / len(source)`.
pub fn length_ratio<T>(source: &[T], other: &[T]) -> Result<f64, TextError> {
    if source.is_empty() {
        return Err(TextError::EmptySource);
    }
    Ok(other.len() as f64 / source.len() as f64)
}

/// Distinct tokens with at least one alphanumeric character that are not
/// stopwords.
pub fn content_words(tokens: &[String], stopwords: &WordSet) -> HashSet<String> {
    tokens
        .iter()
        .filter(|t| t.chars().any(char::is_alphanumeric) && !stopwords.contains(t))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s).into_tokens()
    }

    fn seq(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(toks("The cat sat."), seq(&["the", "cat", "sat", "."]));
        assert!(toks("").is_empty());
        assert_eq!(toks("don't stop—now"), seq(&["don't", "stop", "—", "now"]));
        assert_eq!(
            toks("(Well-known) 3.14, 1,000!"),
            seq(&["(", "well-known", ")", "3.14", ",", "1,000", "!"])
        );
        assert_eq!(toks("end-"), seq(&["end", "-"]));
    }

    #[test]
    fn spans_point_into_source() {
        let text = "  Hello,  World!";
        let t = tokenize(text);
        let raw: Vec<&str> = t.spans().iter().map(|r| &text[r.clone()]).collect();
        assert_eq!(raw, vec!["Hello", ",", "World", "!"]);
    }

    #[test]
    fn sentence_examples() {
        assert_eq!(split_sentences("A. B? C!").len(), 3);
        assert_eq!(split_sentences("").len(), 0);
        assert_eq!(split_sentences("   \n\n ").len(), 0);
        let s = split_sentences("See e.g. the dog. It ran.");
        assert_eq!(s.sentences, vec!["See e.g. the dog.", "It ran."]);
        assert_eq!(split_sentences("Dr. Smith arrived. He sat.").len(), 2);
        assert_eq!(
            split_sentences("It cost 3.5 dollars. Then 4 more.").len(),
            2
        );
        assert_eq!(split_sentences("first line\n\nsecond line").len(), 2);
        assert_eq!(split_sentences("no split. here lowercase").len(), 1);
        let q = split_sentences("He said \"Stop.\" Then he left.");
        assert_eq!(q.sentences, vec!["He said \"Stop.\"", "Then he left."]);
    }

    #[test]
    fn normalized_forms() {
        let s = split_sentences("The  Cat\nsat. Dogs RUN.");
        assert_eq!(s.normalized, vec!["the cat sat.", "dogs run."]);
    }

    #[test]
    fn edit_distance_examples() {
        assert_eq!(
            edit_distance(&seq(&["a", "b", "c"]), &seq(&["a", "b", "c"])),
            0
        );
        assert_eq!(edit_distance(&seq(&[]), &seq(&["x", "y"])), 2);
        assert_eq!(
            edit_distance(
                &seq(&["the", "cat", "sat"]),
                &seq(&["the", "dog", "sat", "down"])
            ),
            2
        );
    }

    #[test]
    fn ratios() {
        let a = seq(&["a", "b", "c"]);
        assert_eq!(edit_ratio(&a, &a).unwrap(), 0.0);
        let r = edit_ratio(
            &seq(&["the", "cat", "sat"]),
            &seq(&["the", "dog", "sat", "down"]),
        )
        .unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-9);
        assert_eq!(
            edit_ratio(&seq(&["a", "b", "c", "d"]), &seq(&[])).unwrap(),
            1.0
        );
        assert_eq!(edit_ratio::<String>(&[], &a), Err(TextError::EmptySource));
        assert_eq!(length_ratio(&a, &a).unwrap(), 1.0);
        assert_eq!(
            length_ratio(&a, &seq(&["1", "2", "3", "4", "5", "6"])).unwrap(),
            2.0
        );
        assert_eq!(
            length_ratio(&seq(&["1", "2", "3", "4", "5"]), &seq(&[])).unwrap(),
            0.0
        );
        assert!(length_ratio::<String>(&[], &a).is_err());
    }

    /// Exhaustive minimum over all edit scripts, by plain recursion.
    fn brute_distance(a: &[u8], b: &[u8]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ar)), Some((y, br))) => {
                let sub = brute_distance(ar, br) + usize::from(x != y);
                sub.min(brute_distance(ar, b) + 1)
                    .min(brute_distance(a, br) + 1)
            }
        }
    }

    fn small_seq() -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..4, 0..7)
    }

    proptest! {
        #[test]
        fn distance_matches_recursion(a in small_seq(), b in small_seq()) {
            prop_assert_eq!(edit_distance(&a, &b), brute_distance(&a, &b));
        }

        #[test]
        fn distance_is_a_metric(a in small_seq(), b in small_seq(), c in small_seq()) {
            let ab = edit_distance(&a, &b);
            prop_assert_eq!(ab, edit_distance(&b, &a));
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(edit_distance(&a, &c) <= ab + edit_distance(&b, &c));
            prop_assert!(ab <= a.len().max(b.len()));
            prop_assert!(a.len().abs_diff(b.len()) <= ab);
        }

        #[test]
        fn tokenize_is_stable_under_lowercased_join(s in "\\PC{0,40}") {
            let first = tokenize(&s).into_tokens();
            let joined = first.join(" ").to_lowercase();
            prop_assert_eq!(tokenize(&joined).into_tokens(), first.clone());
            prop_assert!(first.iter().all(|t| !t.chars().any(char::is_whitespace) && !t.is_empty()));
        }

        #[test]
        fn spans_increase(s in "\\PC{0,40}") {
            let t = tokenize(&s);
            prop_assert_eq!(t.spans().len(), t.tokens().len());
            for w in t.spans().windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
        }

        #[test]
        fn period_count_matches(words in prop::collection::vec("[A-Z][a-z]{1,6}", 1..8)) {
            let text = words.iter().map(|w| format!("{w}.")).collect::<Vec<_>>().join(" ");
            let abbrev = default_abbreviations();
            prop_assume!(words.iter().all(|w| !abbrev.contains(&format!("{}.", w.to_lowercase()))));
            prop_assert_eq!(split_sentences(&text).len(), words.len());
        }

        #[test]
        fn sentences_reconstruct_input(s in "[A-Za-z .!?\n]{0,60}") {
            let seq = split_sentences(&s);
            let mut rebuilt = String::new();
            let mut prev = 0;
            for span in &seq.spans {
                prop_assert!(s[prev..span.start].trim().is_empty());
                rebuilt.push_str(&s[span.clone()]);
                prev = span.end;
            }
            prop_assert!(s[prev..].trim().is_empty());
            let squeezed: String = s.chars().filter(|c| !c.is_whitespace()).collect();
            let rebuilt: String = rebuilt.chars().filter(|c| !c.is_whitespace()).collect();
            prop_assert_eq!(squeezed, rebuilt);
            for (sent, norm) in seq.sentences.iter().zip(&seq.normalized) {
                prop_assert_eq!(&normalize_sentence(sent), norm);
            }
        }
    }
}
