//! Shipped fixture files.

use rewritekit::textops::{normalize_sentence, split_sentences, tokenize};
use serde::Deserialize;

use super::oracle;

#[derive(Debug, Clone, Deserialize)]
pub struct Expected {
    pub sari: f64,
    pub sari_all_f1: f64,
    pub gleu: f64,
    pub bleu: f64,
    pub rouge1: f64,
    pub rougel: f64,
    pub update_rouge: f64,
}

/// A (source, prediction, reference) triple with frozen metric values.
#[derive(Debug, Clone, Deserialize)]
pub struct Triple {
    pub id: String,
    pub source: String,
    pub prediction: String,
    pub reference: String,
    pub expected: Expected,
}

pub const METRIC_TRIPLES: &str = include_str!("../fixtures/metric_triples.jsonl");
pub const WIKI_DUMP: &str = include_str!("../fixtures/wiki_history.xml");

pub fn triples() -> Vec<Triple> {
    METRIC_TRIPLES
        .lines()
        .map(|l| serde_json::from_str(l).expect("fixture line"))
        .collect()
}

pub fn words(s: &str) -> Vec<String> {
    tokenize(s).into_tokens()
}

fn updated(source: &str, text: &str) -> (Vec<String>, usize) {
    let src: Vec<String> = split_sentences(source)
        .sentences
        .iter()
        .map(|s| normalize_sentence(s))
        .collect();
    let mut toks = Vec::new();
    let mut n = 0;
    for s in split_sentences(text).sentences {
        if !src.contains(&normalize_sentence(&s)) {
            toks.extend(words(&s));
            n += 1;
        }
    }
    (toks, n)
}

/// ROUGE-L over changed sentences; zero when only the reference changed.
pub fn update_rouge(source: &str, prediction: &str, reference: &str) -> f64 {
    let (p, pn) = updated(source, prediction);
    let (r, rn) = updated(source, reference);
    if pn == 0 && rn > 0 {
        0.0
    } else {
        oracle::rouge(&p, &r, true)
    }
}
