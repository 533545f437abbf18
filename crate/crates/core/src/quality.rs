//! Binary rewrite-quality function and the post-processing filter for
//! generated training data.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpusio::RewriteRecord;
use crate::lexicon::Lexicon;
use crate::nli::{NliClient, NliError};
use crate::textops::{edit_ratio, length_ratio, split_sentences, tokenize, TextError};

#[derive(Debug, Error)]
pub enum QualityError {
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Nli(#[from] NliError),
    #[error("record has no target")]
    MissingTarget,
    #[error("invalid thresholds: {0}")]
    Thresholds(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityThresholds {
    /// Minimum edit ratio.
    pub a: f64,
    /// Minimum NLI(source → candidate).
    pub b: f64,
    /// Minimum NLI(candidate → source).
    pub c: f64,
    /// Maximum length ratio for shorten tasks.
    pub d1: f64,
    /// Minimum length ratio for elaborate tasks.
    pub d2: f64,
    /// Minimum edit ratio for a generated record to be kept.
    pub min_diff: f64,
    /// Per-sentence entailment below which a target sentence is removable.
    pub sentence_threshold: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            a: 1.2,
            b: 0.7,
            c: 0.7,
            d1: 0.6,
            d2: 2.0,
            min_diff: 0.05,
            sentence_threshold: 0.5,
        }
    }
}

impl QualityThresholds {
    pub fn validate(&self) -> Result<(), QualityError> {
        let fields = [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("d1", self.d1),
            ("d2", self.d2),
            ("min_diff", self.min_diff),
            ("sentence_threshold", self.sentence_threshold),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(QualityError::Thresholds(format!(
                    "{name} must be a non-negative number, got {v}"
                )));
            }
        }
        if self.d2 <= self.d1 {
            return Err(QualityError::Thresholds(format!(
                "d2 ({}) must exceed d1 ({})",
                self.d2, self.d1
            )));
        }
        Ok(())
    }

    /// Reads a JSON object; absent keys keep their defaults.
    pub fn from_json(text: &str) -> Result<Self, QualityError> {
        let t: Self =
            serde_json::from_str(text).map_err(|e| QualityError::Thresholds(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, QualityError> {
        let text = fs::read_to_string(path)
            .map_err(|e| QualityError::Thresholds(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskKind {
    Shorten,
    Elaborate,
    Generic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskType {
    pub kind: TaskKind,
    pub matched_keyword: Option<String>,
}

/// Keyword scan of the instruction; the shorten list is checked first.
pub fn classify_task_type(instruction: &str, lexicon: &Lexicon) -> TaskType {
    for (kind, list) in [
        (TaskKind::Shorten, &lexicon.shorten),
        (TaskKind::Elaborate, &lexicon.elaborate),
    ] {
        if let Some(kw) = list.find(instruction) {
            return TaskType {
                kind,
                matched_keyword: Some(kw.to_string()),
            };
        }
    }
    TaskType {
        kind: TaskKind::Generic,
        matched_keyword: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailedRule {
    EditRatio,
    NliFwd,
    NliRev,
    ShortenLen,
    ElaborateLen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurements {
    pub edit_ratio: f64,
    pub nli_fwd: f64,
    pub nli_rev: f64,
    pub len_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityVerdict {
    pub score: u8,
    pub failed_rule: Option<FailedRule>,
    pub measurements: Measurements,
}

/// Applies the thresholds to precomputed measurements. A value equal to its
/// threshold passes.
pub fn evaluate_quality(m: Measurements, task: TaskKind, t: &QualityThresholds) -> QualityVerdict {
    let failed_rule = if m.edit_ratio < t.a {
        Some(FailedRule::EditRatio)
    } else if m.nli_fwd < t.b {
        Some(FailedRule::NliFwd)
    } else if m.nli_rev < t.c {
        Some(FailedRule::NliRev)
    } else if task == TaskKind::Shorten && m.len_ratio > t.d1 {
        Some(FailedRule::ShortenLen)
    } else if task == TaskKind::Elaborate && m.len_ratio < t.d2 {
        Some(FailedRule::ElaborateLen)
    } else {
        None
    };
    QualityVerdict {
        score: u8::from(failed_rule.is_none()),
        failed_rule,
        measurements: m,
    }
}

/// Edit ratio, both NLI directions and length ratio of a candidate against
/// its source. The instruction plays no part.
pub fn measure(
    source: &str,
    candidate: &str,
    nli: &NliClient,
) -> Result<Measurements, QualityError> {
    let x = tokenize(source);
    let t = tokenize(candidate);
    let edit_ratio = edit_ratio(&x, &t)?;
    let len_ratio = length_ratio(&x, &t)?;
    let scores = nli.score_pairs(&[(source, candidate), (candidate, source)])?;
    Ok(Measurements {
        edit_ratio,
        nli_fwd: scores[0].score,
        nli_rev: scores[1].score,
        len_ratio,
    })
}

pub fn quality_score(
    source: &str,
    candidate: &str,
    task: &TaskType,
    thresholds: &QualityThresholds,
    nli: &NliClient,
) -> Result<QualityVerdict, QualityError> {
    Ok(evaluate_quality(
        measure(source, candidate, nli)?,
        task.kind,
        thresholds,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallucinationFix {
    pub fixed_target: Option<String>,
    pub removed: Vec<String>,
}

/// Drops target sentences the source does not entail. The fix holds only
/// if at least half of the sentences survive and the source still entails
/// the shortened target at threshold `b`.
pub fn fix_hallucination(
    source: &str,
    target: &str,
    nli: &NliClient,
    thresholds: &QualityThresholds,
) -> Result<HallucinationFix, QualityError> {
    let sentences = split_sentences(target).sentences;
    let pairs: Vec<(&str, &str)> = sentences.iter().map(|s| (source, s.as_str())).collect();
    let scores = nli.score_pairs(&pairs)?;
    let (kept, removed): (Vec<_>, Vec<_>) = sentences
        .iter()
        .zip(&scores)
        .partition(|(_, s)| s.score >= thresholds.sentence_threshold);
    let removed: Vec<String> = removed.into_iter().map(|(s, _)| s.clone()).collect();
    if removed.is_empty() {
        return Ok(HallucinationFix {
            fixed_target: Some(target.to_string()),
            removed,
        });
    }
    if kept.is_empty() || kept.len() * 2 < sentences.len() {
        return Ok(HallucinationFix {
            fixed_target: None,
            removed,
        });
    }
    let fixed = kept
        .iter()
        .map(|(s, _)| s.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    let whole = nli.score(source, &fixed)?.score;
    Ok(HallucinationFix {
        fixed_target: (whole >= thresholds.b).then_some(fixed),
        removed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FilterReason {
    Ok,
    UnfixableHallucination,
    DiffTooSmall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub keep: bool,
    pub reason: FilterReason,
    /// The record to emit, with the possibly fixed target; present iff kept.
    pub fixed: Option<RewriteRecord>,
    pub removed: Vec<String>,
}

pub fn filter_record(
    r: &RewriteRecord,
    thresholds: &QualityThresholds,
    nli: &NliClient,
) -> Result<FilterOutcome, QualityError> {
    let target = r.target.as_deref().ok_or(QualityError::MissingTarget)?;
    let fix = fix_hallucination(&r.source, target, nli, thresholds)?;
    let drop = |reason| FilterOutcome {
        keep: false,
        reason,
        fixed: None,
        removed: fix.removed.clone(),
    };
    let Some(fixed_target) = fix.fixed_target.clone() else {
        return Ok(drop(FilterReason::UnfixableHallucination));
    };
    if edit_ratio(&tokenize(&r.source), &tokenize(&fixed_target))? < thresholds.min_diff {
        return Ok(drop(FilterReason::DiffTooSmall));
    }
    let mut out = r.clone();
    if !fix.removed.is_empty() {
        out.meta.insert(
            "removed_sentences".to_string(),
            fix.removed.len().to_string(),
        );
    }
    out.target = Some(fixed_target);
    Ok(FilterOutcome {
        keep: true,
        reason: FilterReason::Ok,
        fixed: Some(out),
        removed: fix.removed,
    })
}
