//! Reference-based rewrite metrics over lowercased word tokens.
//!
//! All scores are on a 0–100 scale. N-gram counts live in ordered maps so
//! every floating-point sum runs in a fixed order and results are
//! bit-reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textops::{split_sentences, tokenize};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("at least one reference is required")]
    NoReferences,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MetricName {
    Sari,
    Gleu,
    Bleu,
    Rouge1,
    RougeL,
    UpdateRouge,
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricName::Sari => "SARI",
            MetricName::Gleu => "GLEU",
            MetricName::Bleu => "BLEU",
            MetricName::Rouge1 => "ROUGE-1",
            MetricName::RougeL => "ROUGE-L",
            MetricName::UpdateRouge => "Update-R",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MetricFlag {
    /// The prediction changed no source sentence while the reference did.
    EmptyUpdate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub name: MetricName,
    pub value: f64,
    pub components: BTreeMap<String, f64>,
    pub flags: BTreeSet<MetricFlag>,
}

impl MetricScore {
    fn new(name: MetricName, value: f64) -> Self {
        Self {
            name,
            value: value.clamp(0.0, 100.0),
            components: BTreeMap::new(),
            flags: BTreeSet::new(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.components.insert(key.to_string(), value);
        self
    }

    pub fn component(&self, key: &str) -> Option<f64> {
        self.components.get(key).copied()
    }
}

/// Multiset of the order-`n` n-grams of a token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramCounts<'a> {
    order: usize,
    counts: BTreeMap<&'a [String], usize>,
}

impl<'a> NGramCounts<'a> {
    pub fn new(tokens: &'a [String], order: usize) -> Self {
        assert!(order >= 1, "n-gram order must be positive");
        let mut counts = BTreeMap::new();
        if tokens.len() >= order {
            for w in tokens.windows(order) {
                *counts.entry(w).or_insert(0) += 1;
            }
        }
        Self { order, counts }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'a [String], usize)> + '_ {
        self.counts.iter().map(|(g, c)| (*g, *c))
    }

    /// Sum over shared n-grams of the smaller count.
    pub fn clipped_matches(&self, other: &NGramCounts<'_>) -> usize {
        self.iter().map(|(g, c)| c.min(other.get(g))).sum()
    }
}

type Counts<'a> = BTreeMap<&'a [String], usize>;

fn scaled<'a>(c: &NGramCounts<'a>, k: usize) -> Counts<'a> {
    c.iter().map(|(g, n)| (g, n * k)).collect()
}

fn intersect<'a>(a: &Counts<'a>, b: &Counts<'a>) -> Counts<'a> {
    a.iter()
        .filter_map(|(g, &n)| {
            let m = n.min(b.get(g).copied().unwrap_or(0));
            (m > 0).then_some((*g, m))
        })
        .collect()
}

fn subtract<'a>(a: &Counts<'a>, b: &Counts<'a>) -> Counts<'a> {
    a.iter()
        .filter_map(|(g, &n)| {
            let m = n.saturating_sub(b.get(g).copied().unwrap_or(0));
            (m > 0).then_some((*g, m))
        })
        .collect()
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Ratio with the 0/0 = 1 convention, so an exact match scores fully.
fn ratio_or_one(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SariMode {
    /// Keep and add use F1, delete uses precision only.
    #[default]
    Canonical,
    /// F1 for all three operations.
    AllF1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SariOrder {
    keep: f64,
    delete_precision: f64,
    delete_f1: f64,
    add: f64,
}

fn sari_order<R: AsRef<[String]>>(
    source: &[String],
    prediction: &[String],
    references: &[R],
    n: usize,
) -> SariOrder {
    let k = references.len();
    let s = scaled(&NGramCounts::new(source, n), k);
    let c = scaled(&NGramCounts::new(prediction, n), k);
    let mut r: Counts = BTreeMap::new();
    for reference in references {
        for (g, cnt) in NGramCounts::new(reference.as_ref(), n).iter() {
            *r.entry(g).or_insert(0) += cnt;
        }
    }

    let keep = intersect(&s, &c);
    let keep_good = intersect(&keep, &r);
    let keep_all = intersect(&s, &r);
    let keep_p = if keep.is_empty() {
        1.0
    } else {
        keep.iter()
            .map(|(g, &n)| keep_good.get(g).copied().unwrap_or(0) as f64 / n as f64)
            .sum::<f64>()
            / keep.len() as f64
    };
    let keep_r = ratio_or_one(
        keep_good.values().sum::<usize>() as f64,
        keep_all.values().sum::<usize>() as f64,
    );

    let del = subtract(&s, &c);
    let del_good = subtract(&del, &r);
    let del_all = subtract(&s, &r);
    let del_p = if del.is_empty() {
        1.0
    } else {
        del.iter()
            .map(|(g, &n)| del_good.get(g).copied().unwrap_or(0) as f64 / n as f64)
            .sum::<f64>()
            / del.len() as f64
    };
    let del_r = ratio_or_one(
        del_good.values().sum::<usize>() as f64,
        del_all.values().sum::<usize>() as f64,
    );

    let added: BTreeSet<&[String]> = c.keys().filter(|g| !s.contains_key(*g)).copied().collect();
    let added_all = r.keys().filter(|g| !s.contains_key(*g)).count();
    let added_good = added.iter().filter(|g| r.contains_key(*g)).count();
    let add_p = ratio_or_one(added_good as f64, added.len() as f64);
    let add_r = ratio_or_one(added_good as f64, added_all as f64);

    SariOrder {
        keep: f1(keep_p, keep_r),
        delete_precision: del_p,
        delete_f1: f1(del_p, del_r),
        add: f1(add_p, add_r),
    }
}

/// SARI: add/keep/delete operation scores averaged over n = 1..4 and over
/// the three operations. Components `keep`, `delete` and `add` are the
/// per-operation averages in [0, 1].
pub fn sari<R: AsRef<[String]>>(
    source: &[String],
    prediction: &[String],
    references: &[R],
    mode: SariMode,
) -> Result<MetricScore, MetricError> {
    if references.is_empty() {
        return Err(MetricError::NoReferences);
    }
    let (mut keep, mut del, mut add) = (0.0, 0.0, 0.0);
    for n in 1..=MAX_ORDER {
        let o = sari_order(source, prediction, references, n);
        keep += o.keep;
        del += match mode {
            SariMode::Canonical => o.delete_precision,
            SariMode::AllF1 => o.delete_f1,
        };
        add += o.add;
    }
    let orders = MAX_ORDER as f64;
    let (keep, del, add) = (keep / orders, del / orders, add / orders);
    Ok(
        MetricScore::new(MetricName::Sari, 100.0 * (keep + del + add) / 3.0)
            .with("keep", keep)
            .with("delete", del)
            .with("add", add),
    )
}

fn brevity_penalty(pred_len: usize, ref_len: usize) -> f64 {
    if pred_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / pred_len as f64).exp()
    }
}

/// Highest order scored: orders longer than the prediction carry no n-grams
/// and are left out of the geometric mean.
fn effective_order(pred_len: usize) -> usize {
    pred_len.min(MAX_ORDER)
}

/// Add-one smoothing for an order with no (net) matches.
fn smoothed(matches: f64, total: usize) -> f64 {
    if matches > 0.0 {
        matches / total as f64
    } else {
        1.0 / (total as f64 + 1.0)
    }
}

fn geometric_mean(ps: &[f64]) -> f64 {
    (ps.iter().map(|p| p.ln()).sum::<f64>() / ps.len() as f64).exp()
}

/// Sorted before summing so the mean does not depend on reference order.
fn order_free_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

struct GleuSingle {
    score: f64,
    bp: f64,
    precisions: [f64; MAX_ORDER],
}

fn gleu_single(source: &[String], prediction: &[String], reference: &[String]) -> GleuSingle {
    let max_n = effective_order(prediction.len());
    let mut precisions = [0.0; MAX_ORDER];
    if max_n == 0 {
        return GleuSingle {
            score: 0.0,
            bp: 0.0,
            precisions,
        };
    }
    for n in 1..=max_n {
        let c = NGramCounts::new(prediction, n);
        let m_ref = c.clipped_matches(&NGramCounts::new(reference, n)) as i64;
        let m_src = c.clipped_matches(&NGramCounts::new(source, n)) as i64;
        let net = (m_ref - (m_src - m_ref).max(0)).max(0);
        precisions[n - 1] = smoothed(net as f64, c.total());
    }
    let bp = brevity_penalty(prediction.len(), reference.len());
    GleuSingle {
        score: 100.0 * bp * geometric_mean(&precisions[..max_n]),
        bp,
        precisions,
    }
}

/// GLEU with a source penalty: per order, reference matches minus the excess
/// of source matches over reference matches, clipped at zero, over the
/// prediction's n-gram count. Scored per reference and averaged.
/// Components: `bp` and `p1`..`p4`, each averaged over references.
pub fn gleu<R: AsRef<[String]>>(
    source: &[String],
    prediction: &[String],
    references: &[R],
) -> Result<MetricScore, MetricError> {
    if references.is_empty() {
        return Err(MetricError::NoReferences);
    }
    let singles: Vec<GleuSingle> = references
        .iter()
        .map(|r| gleu_single(source, prediction, r.as_ref()))
        .collect();
    let mut score = MetricScore::new(
        MetricName::Gleu,
        order_free_mean(singles.iter().map(|s| s.score).collect()),
    )
    .with(
        "bp",
        order_free_mean(singles.iter().map(|s| s.bp).collect()),
    );
    for n in 0..MAX_ORDER {
        let p = order_free_mean(singles.iter().map(|s| s.precisions[n]).collect());
        score = score.with(&format!("p{}", n + 1), p);
    }
    Ok(score)
}

/// BLEU-4 with clipped counts against the per-n-gram maximum over
/// references and the closest reference length (shorter on ties).
pub fn bleu<R: AsRef<[String]>>(
    prediction: &[String],
    references: &[R],
) -> Result<MetricScore, MetricError> {
    if references.is_empty() {
        return Err(MetricError::NoReferences);
    }
    let max_n = effective_order(prediction.len());
    let mut score = MetricScore::new(MetricName::Bleu, 0.0);
    if max_n == 0 {
        return Ok(score.with("bp", 0.0));
    }
    let mut precisions = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let c = NGramCounts::new(prediction, n);
        let refs: Vec<NGramCounts> = references
            .iter()
            .map(|r| NGramCounts::new(r.as_ref(), n))
            .collect();
        let clipped: usize = c
            .iter()
            .map(|(g, cnt)| cnt.min(refs.iter().map(|r| r.get(g)).max().unwrap_or(0)))
            .sum();
        precisions.push(smoothed(clipped as f64, c.total()));
    }
    let c = prediction.len();
    let r = references
        .iter()
        .map(|r| r.as_ref().len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let bp = brevity_penalty(c, r);
    score.value = (100.0 * bp * geometric_mean(&precisions)).clamp(0.0, 100.0);
    score = score.with("bp", bp);
    for (i, p) in precisions.iter().enumerate() {
        score = score.with(&format!("p{}", i + 1), *p);
    }
    Ok(score)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RougeVariant {
    Rouge1,
    RougeL,
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE F1 (unigram overlap or LCS). Two empty sides score 100, one
/// empty side scores 0. Components: `precision`, `recall`, `f1`.
pub fn rouge(prediction: &[String], reference: &[String], variant: RougeVariant) -> MetricScore {
    let name = match variant {
        RougeVariant::Rouge1 => MetricName::Rouge1,
        RougeVariant::RougeL => MetricName::RougeL,
    };
    if prediction.is_empty() && reference.is_empty() {
        return MetricScore::new(name, 100.0)
            .with("precision", 1.0)
            .with("recall", 1.0)
            .with("f1", 1.0);
    }
    let overlap = match variant {
        RougeVariant::Rouge1 => {
            NGramCounts::new(prediction, 1).clipped_matches(&NGramCounts::new(reference, 1))
        }
        RougeVariant::RougeL => lcs_len(prediction, reference),
    } as f64;
    let p = if prediction.is_empty() {
        0.0
    } else {
        overlap / prediction.len() as f64
    };
    let r = if reference.is_empty() {
        0.0
    } else {
        overlap / reference.len() as f64
    };
    let f = f1(p, r);
    MetricScore::new(name, 100.0 * f)
        .with("precision", p)
        .with("recall", r)
        .with("f1", f)
}

/// Maximum ROUGE over several references.
pub fn rouge_multi<R: AsRef<[String]>>(
    prediction: &[String],
    references: &[R],
    variant: RougeVariant,
) -> Result<MetricScore, MetricError> {
    references
        .iter()
        .map(|r| rouge(prediction, r.as_ref(), variant))
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or(MetricError::NoReferences)
}

/// Tokens of the sentences of `text` whose normalized form is not a source
/// sentence, concatenated in order, plus how many such sentences there were.
pub fn updated_tokens(source: &str, text: &str) -> (Vec<String>, usize) {
    let source_sentences: BTreeSet<String> =
        split_sentences(source).normalized.into_iter().collect();
    let seq = split_sentences(text);
    let mut tokens = Vec::new();
    let mut count = 0;
    for (sentence, norm) in seq.sentences.iter().zip(&seq.normalized) {
        if !source_sentences.contains(norm) {
            tokens.extend(tokenize(sentence).into_tokens());
            count += 1;
        }
    }
    (tokens, count)
}

/// ROUGE-L restricted to sentences that differ from the source on both the
/// prediction and the reference side.
pub fn update_rouge(source: &str, prediction: &str, reference: &str) -> MetricScore {
    let (pred, pred_n) = updated_tokens(source, prediction);
    let (refr, ref_n) = updated_tokens(source, reference);
    let mut score = MetricScore {
        name: MetricName::UpdateRouge,
        ..rouge(&pred, &refr, RougeVariant::RougeL)
    };
    if pred_n == 0 && ref_n > 0 {
        score.value = 0.0;
        score.flags.insert(MetricFlag::EmptyUpdate);
    }
    score
}
