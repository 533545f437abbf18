//! Keyword lists and word sets shipped as editable config files.
//!
//! List files hold one entry per line. Blank lines and lines starting with
//! `#` are ignored. A trailing `*` on a word makes it a prefix match, and an
//! entry with several words matches those words consecutively.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

pub const DEFAULT_LOW_QUALITY: &str = include_str!("../config/low_quality.txt");
pub const DEFAULT_FORMAT_ONLY: &str = include_str!("../config/format_only.txt");
pub const DEFAULT_EDIT_VERBS: &str = include_str!("../config/edit_verbs.txt");
pub const DEFAULT_SHORTEN: &str = include_str!("../config/shorten.txt");
pub const DEFAULT_ELABORATE: &str = include_str!("../config/elaborate.txt");
pub const DEFAULT_STOPWORDS: &str = include_str!("../config/stopwords.txt");
pub const DEFAULT_ABBREVIATIONS: &str = include_str!("../config/abbreviations.txt");
pub const DEFAULT_COT_SHOTS: &str = include_str!("../config/cot_shots.json");

fn entries(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Lowercased alphanumeric word runs, the unit keyword lists match against.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Pattern {
    Exact(String),
    Prefix(String),
}

impl Pattern {
    fn matches(&self, word: &str) -> bool {
        match self {
            Pattern::Exact(w) => word == w,
            Pattern::Prefix(p) => word.starts_with(p.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Keyword {
    source: String,
    parts: Vec<Pattern>,
}

/// An ordered keyword list. Matching reports the first entry, in list
/// order, found anywhere in the text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeywordList {
    keywords: Vec<Keyword>,
}

impl KeywordList {
    pub fn parse(text: &str) -> Self {
        let keywords = entries(text)
            .filter_map(|line| {
                let parts: Vec<Pattern> = line
                    .split_whitespace()
                    .map(|w| {
                        let w = w.to_lowercase();
                        match w.strip_suffix('*') {
                            Some(p) => Pattern::Prefix(p.to_string()),
                            None => Pattern::Exact(w),
                        }
                    })
                    .collect();
                (!parts.is_empty()).then(|| Keyword {
                    source: line.to_lowercase(),
                    parts,
                })
            })
            .collect();
        Self { keywords }
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    /// Returns the matching entry as written in the list.
    pub fn find(&self, text: &str) -> Option<&str> {
        let words = words(text);
        self.find_in_words(&words)
    }

    pub fn find_in_words(&self, words: &[String]) -> Option<&str> {
        self.keywords.iter().find_map(|kw| {
            let n = kw.parts.len();
            let hit = words.len() >= n
                && words
                    .windows(n)
                    .any(|win| win.iter().zip(&kw.parts).all(|(w, p)| p.matches(w)));
            hit.then_some(kw.source.as_str())
        })
    }

    /// Whether a single word matches a one-word entry.
    pub fn contains_word(&self, word: &str) -> bool {
        self.keywords
            .iter()
            .any(|kw| kw.parts.len() == 1 && kw.parts[0].matches(word))
    }
}

/// A plain set of lowercase words.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordSet {
    words: HashSet<String>,
}

impl WordSet {
    pub fn parse(text: &str) -> Self {
        Self {
            words: entries(text).map(str::to_lowercase).collect(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Every keyword list the pipelines use, loadable from a directory in which
/// any missing file falls back to the shipped default.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub low_quality: KeywordList,
    pub format_only: KeywordList,
    pub edit_verbs: KeywordList,
    pub shorten: KeywordList,
    pub elaborate: KeywordList,
    pub stopwords: WordSet,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self {
            low_quality: KeywordList::parse(DEFAULT_LOW_QUALITY),
            format_only: KeywordList::parse(DEFAULT_FORMAT_ONLY),
            edit_verbs: KeywordList::parse(DEFAULT_EDIT_VERBS),
            shorten: KeywordList::parse(DEFAULT_SHORTEN),
            elaborate: KeywordList::parse(DEFAULT_ELABORATE),
            stopwords: WordSet::parse(DEFAULT_STOPWORDS),
        }
    }
}

impl Lexicon {
    pub fn from_dir(dir: &Path) -> io::Result<Self> {
        let read = |name: &str, default: &'static str| -> io::Result<String> {
            let path = dir.join(name);
            if path.exists() {
                fs::read_to_string(path)
            } else {
                Ok(default.to_string())
            }
        };
        Ok(Self {
            low_quality: KeywordList::parse(&read("low_quality.txt", DEFAULT_LOW_QUALITY)?),
            format_only: KeywordList::parse(&read("format_only.txt", DEFAULT_FORMAT_ONLY)?),
            edit_verbs: KeywordList::parse(&read("edit_verbs.txt", DEFAULT_EDIT_VERBS)?),
            shorten: KeywordList::parse(&read("shorten.txt", DEFAULT_SHORTEN)?),
            elaborate: KeywordList::parse(&read("elaborate.txt", DEFAULT_ELABORATE)?),
            stopwords: WordSet::parse(&read("stopwords.txt", DEFAULT_STOPWORDS)?),
        })
    }
}
