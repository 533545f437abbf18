//! Per-record and aggregate metrics for the `evaluate` subcommand.

use anyhow::{anyhow, Context};
use rewritekit::corpusio::RewriteRecord;
use rewritekit::metrics::{
    bleu, gleu, rouge, sari, update_rouge, MetricFlag, RougeVariant, SariMode,
};
use rewritekit::nli::NliClient;
use rewritekit::stats::{fmt2, Table};
use rewritekit::textops::{edit_ratio, length_ratio, tokenize};
use serde::{Deserialize, Serialize};

/// Reference-based scores, absent in no-reference mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMetrics {
    pub sari: f64,
    pub gleu: f64,
    pub update_rouge: f64,
    pub empty_update: bool,
    pub bleu: f64,
    pub rouge1: f64,
    pub rougel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetrics {
    pub id: String,
    pub edit_ratio: f64,
    pub len_ratio: f64,
    pub nli_sp: f64,
    pub nli_ps: f64,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceMetrics>,
}

pub fn evaluate_record(
    r: &RewriteRecord,
    nli: &NliClient,
    mode: SariMode,
    no_reference: bool,
) -> anyhow::Result<RecordMetrics> {
    let prediction = r
        .prediction
        .as_deref()
        .ok_or_else(|| anyhow!("record {}: no prediction", r.id))?;
    let x = tokenize(&r.source);
    let p = tokenize(prediction);
    let ctx = || format!("record {}", r.id);
    let nli_scores = nli
        .score_pairs(&[(&r.source, prediction), (prediction, &r.source)])
        .with_context(ctx)?;
    let reference = if no_reference {
        None
    } else {
        let target = r
            .target
            .as_deref()
            .ok_or_else(|| anyhow!("record {}: no target (use --no-reference)", r.id))?;
        let t = tokenize(target);
        let refs = [&t];
        let upd = update_rouge(&r.source, prediction, target);
        Some(ReferenceMetrics {
            sari: sari(&x, &p, &refs, mode)?.value,
            gleu: gleu(&x, &p, &refs)?.value,
            update_rouge: upd.value,
            empty_update: upd.flags.contains(&MetricFlag::EmptyUpdate),
            bleu: bleu(&p, &refs)?.value,
            rouge1: rouge(&p, &t, RougeVariant::Rouge1).value,
            rougel: rouge(&p, &t, RougeVariant::RougeL).value,
        })
    };
    Ok(RecordMetrics {
        id: r.id.clone(),
        edit_ratio: edit_ratio(&x, &p).with_context(ctx)?,
        len_ratio: length_ratio(&x, &p).with_context(ctx)?,
        nli_sp: nli_scores[0].score,
        nli_ps: nli_scores[1].score,
        reference,
    })
}

/// Macro averages over records, summed in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub size: usize,
    pub edit_ratio: f64,
    pub len_ratio: f64,
    pub nli_sp: f64,
    pub nli_ps: f64,
    pub reference: Option<ReferenceMetrics>,
    /// Records whose prediction changed nothing while the target did.
    pub empty_updates: usize,
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

pub fn summarize(rows: &[RecordMetrics]) -> EvalSummary {
    let n = rows.len();
    let refs: Vec<&ReferenceMetrics> = rows.iter().filter_map(|r| r.reference.as_ref()).collect();
    let reference = (!refs.is_empty() && refs.len() == n).then(|| {
        let m = |f: fn(&ReferenceMetrics) -> f64| mean(refs.iter().map(|r| f(r)), n);
        ReferenceMetrics {
            sari: m(|r| r.sari),
            gleu: m(|r| r.gleu),
            update_rouge: m(|r| r.update_rouge),
            empty_update: false,
            bleu: m(|r| r.bleu),
            rouge1: m(|r| r.rouge1),
            rougel: m(|r| r.rougel),
        }
    });
    EvalSummary {
        size: n,
        edit_ratio: mean(rows.iter().map(|r| r.edit_ratio), n),
        len_ratio: mean(rows.iter().map(|r| r.len_ratio), n),
        nli_sp: mean(rows.iter().map(|r| r.nli_sp), n),
        nli_ps: mean(rows.iter().map(|r| r.nli_ps), n),
        empty_updates: refs.iter().filter(|r| r.empty_update).count(),
        reference,
    }
}

impl EvalSummary {
    pub fn to_table(&self) -> Table {
        let headers = [
            "Size",
            "Edit Ratio",
            "Len Ratio",
            "NLI s-p",
            "NLI p-s",
            "SARI",
            "GLEU",
            "Update-R",
            "BLEU",
            "ROUGE-1",
            "ROUGE-L",
        ]
        .map(String::from)
        .to_vec();
        let mut row = vec![
            self.size.to_string(),
            fmt2(self.edit_ratio),
            fmt2(self.len_ratio),
            fmt2(self.nli_sp),
            fmt2(self.nli_ps),
        ];
        match &self.reference {
            Some(r) => {
                row.extend([r.sari, r.gleu, r.update_rouge, r.bleu, r.rouge1, r.rougel].map(fmt2))
            }
            None => row.extend(std::iter::repeat_n("-".to_string(), 6)),
        }
        Table {
            headers,
            rows: vec![row],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(source: &str, target: Option<&str>, prediction: Option<&str>) -> RewriteRecord {
        RewriteRecord {
            id: "r".into(),
            instruction: "Rewrite".into(),
            source: source.into(),
            target: target.map(String::from),
            prediction: prediction.map(String::from),
            ..Default::default()
        }
    }

    #[test]
    fn copy_prediction() {
        let r = rec(
            "It rained. We stayed in.",
            Some("It poured. We stayed in."),
            Some("It rained. We stayed in."),
        );
        let m = evaluate_record(&r, &NliClient::stub(), SariMode::Canonical, false).unwrap();
        assert_eq!((m.edit_ratio, m.len_ratio, m.nli_sp), (0.0, 1.0, 1.0));
        let reference = m.reference.unwrap();
        assert_eq!(reference.update_rouge, 0.0);
        assert!(reference.empty_update);
    }

    #[test]
    fn no_reference_mode_ignores_target() {
        let r = rec("a b c", None, Some("a b d"));
        let m = evaluate_record(&r, &NliClient::stub(), SariMode::Canonical, true).unwrap();
        assert!(m.reference.is_none());
        assert!(evaluate_record(&r, &NliClient::stub(), SariMode::Canonical, false).is_err());
        let table = summarize(&[m]).to_table();
        assert_eq!(table.rows[0][5..], ["-", "-", "-", "-", "-", "-"]);
    }

    #[test]
    fn missing_prediction_is_an_error() {
        let r = rec("a b", Some("a"), None);
        assert!(evaluate_record(&r, &NliClient::stub(), SariMode::Canonical, false).is_err());
    }

    #[test]
    fn summary_means() {
        let a = evaluate_record(
            &rec("a b", Some("a b"), Some("a b")),
            &NliClient::stub(),
            SariMode::Canonical,
            false,
        )
        .unwrap();
        let b = evaluate_record(
            &rec("a b", Some("a c"), Some("c d")),
            &NliClient::stub(),
            SariMode::Canonical,
            false,
        )
        .unwrap();
        let s = summarize(&[a.clone(), b.clone()]);
        assert_eq!(s.size, 2);
        assert_eq!(s.edit_ratio, (a.edit_ratio + b.edit_ratio) / 2.0);
        let (ra, rb) = (a.reference.unwrap(), b.reference.unwrap());
        assert_eq!(s.reference.unwrap().sari, (ra.sari + rb.sari) / 2.0);
    }
}
