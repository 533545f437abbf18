//! Corpus statistics, Likert summaries, Fleiss' kappa and table rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpusio::RewriteRecord;
use crate::metrics::{rouge, RougeVariant};
use crate::nli::{NliClient, NliError};
use crate::textops::{edit_distance, tokenize};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("rating {value} outside the 0..=2 scale ({item} / {rater})")]
    OutOfScale {
        item: String,
        rater: String,
        value: u8,
    },
    #[error("duplicate rating for {0}")]
    Duplicate(String),
    #[error("incomplete rating matrix; missing: {}", .0.join(", "))]
    Incomplete(Vec<String>),
    #[error("need at least two raters, found {0}")]
    TooFewRaters(usize),
    #[error("no rated items for {0}")]
    NoItems(String),
    #[error(transparent)]
    Nli(#[from] NliError),
}

/// Word-level measurements of one (instruction, source, target) record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordStats {
    pub inst_len: usize,
    pub src_len: usize,
    pub tar_len: usize,
    pub edit_dist: usize,
    pub rouge1: f64,
    pub nli_src_tar: Option<f64>,
    pub nli_tar_src: Option<f64>,
}

impl RecordStats {
    pub fn len_ratio(&self) -> f64 {
        self.tar_len as f64 / self.src_len as f64
    }

    pub fn edit_ratio(&self) -> f64 {
        self.edit_dist as f64 / self.src_len as f64
    }
}

/// `None` when the record has no target or an empty source.
pub fn record_stats(
    r: &RewriteRecord,
    nli: Option<&NliClient>,
) -> Result<Option<RecordStats>, NliError> {
    let Some(target) = r.target.as_deref() else {
        return Ok(None);
    };
    let x = tokenize(&r.source);
    if x.is_empty() {
        return Ok(None);
    }
    let t = tokenize(target);
    let (fwd, rev) = match nli {
        Some(c) => {
            let s = c.score_pairs(&[(&r.source, target), (target, &r.source)])?;
            (Some(s[0].score), Some(s[1].score))
        }
        None => (None, None),
    };
    Ok(Some(RecordStats {
        inst_len: tokenize(&r.instruction).len(),
        src_len: x.len(),
        tar_len: t.len(),
        edit_dist: edit_distance(&x, &t),
        rouge1: rouge(&t, &x, RougeVariant::Rouge1).value,
        nli_src_tar: fwd,
        nli_tar_src: rev,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub size: usize,
    pub inst_len: f64,
    pub src_len: f64,
    pub tar_len: f64,
    pub len_ratio: f64,
    pub edit_dist: f64,
    pub edit_ratio: f64,
    pub rouge1: f64,
    pub nli_src_tar: Option<f64>,
    pub nli_tar_src: Option<f64>,
    /// Records without a target or with an empty source.
    pub skipped: usize,
}

/// Running sums for macro averages. Values are added in input order, so
/// the result equals summing a full list front to back.
#[derive(Debug, Clone, Default)]
pub struct StatsAccumulator {
    n: usize,
    skipped: usize,
    sums: [f64; 7],
    nli: Option<(f64, f64)>,
    nli_missing: bool,
}

impl StatsAccumulator {
    pub fn add(&mut self, r: &RecordStats) {
        let vals = [
            r.inst_len as f64,
            r.src_len as f64,
            r.tar_len as f64,
            r.len_ratio(),
            r.edit_dist as f64,
            r.edit_ratio(),
            r.rouge1,
        ];
        for (s, v) in self.sums.iter_mut().zip(vals) {
            *s += v;
        }
        match (r.nli_src_tar, r.nli_tar_src) {
            (Some(f), Some(b)) => {
                let (sf, sb) = self.nli.get_or_insert((0.0, 0.0));
                *sf += f;
                *sb += b;
            }
            _ => self.nli_missing = true,
        }
        self.n += 1;
    }

    pub fn skip(&mut self) {
        self.skipped += 1;
    }

    pub fn finish(&self) -> DatasetStats {
        let n = self.n as f64;
        let mean = |i: usize| if self.n == 0 { 0.0 } else { self.sums[i] / n };
        let nli = self.nli.filter(|_| !self.nli_missing);
        DatasetStats {
            size: self.n,
            inst_len: mean(0),
            src_len: mean(1),
            tar_len: mean(2),
            len_ratio: mean(3),
            edit_dist: mean(4),
            edit_ratio: mean(5),
            rouge1: mean(6),
            nli_src_tar: nli.map(|(f, _)| f / n),
            nli_tar_src: nli.map(|(_, b)| b / n),
            skipped: self.skipped,
        }
    }
}

/// Macro averages over per-record values, summed in input order.
pub fn aggregate(per_record: &[RecordStats], skipped: usize) -> DatasetStats {
    let mut acc = StatsAccumulator::default();
    per_record.iter().for_each(|r| acc.add(r));
    acc.skipped = skipped;
    acc.finish()
}

const STATS_CHUNK: usize = 1024;

/// Streams records, measuring each chunk in parallel. Memory is bounded by
/// the chunk size and results do not depend on the number of workers.
pub fn dataset_stats<I>(records: I, nli: Option<&NliClient>) -> Result<DatasetStats, NliError>
where
    I: IntoIterator<Item = RewriteRecord>,
{
    let mut acc = StatsAccumulator::default();
    let mut iter = records.into_iter().peekable();
    while iter.peek().is_some() {
        let chunk: Vec<RewriteRecord> = iter.by_ref().take(STATS_CHUNK).collect();
        let measured: Vec<Option<RecordStats>> = chunk
            .par_iter()
            .map(|r| record_stats(r, nli))
            .collect::<Result<_, _>>()?;
        for m in measured {
            match m {
                Some(s) => acc.add(&s),
                None => acc.skip(),
            }
        }
    }
    if acc.skipped > 0 {
        log::warn!(
            "skipped {} records without a target or with an empty source",
            acc.skipped
        );
    }
    Ok(acc.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Dimension {
    #[serde(alias = "instruction_success")]
    InstructionSuccess,
    #[serde(alias = "content_preservation")]
    ContentPreservation,
    #[serde(alias = "factuality")]
    Factuality,
    #[serde(alias = "coherence")]
    Coherence,
    #[serde(alias = "fluency")]
    Fluency,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::InstructionSuccess,
        Dimension::ContentPreservation,
        Dimension::Factuality,
        Dimension::Coherence,
        Dimension::Fluency,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Dimension::InstructionSuccess => "Instruction Success",
            Dimension::ContentPreservation => "Content Preservation",
            Dimension::Factuality => "Factuality",
            Dimension::Coherence => "Coherence",
            Dimension::Fluency => "Fluency",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("serializes");
        f.write_str(s.as_str().expect("string"))
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown dimension {s:?}"))
    }
}

fn default_system() -> String {
    "default".to_string()
}

/// One line of a ratings file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub item_id: String,
    pub rater_id: String,
    #[serde(default = "default_system")]
    pub system: String,
    pub dimension: Dimension,
    pub rating: u8,
}

pub const SCALE: usize = 3;

type RaterRow = BTreeMap<String, u8>;
type Cells = BTreeMap<Dimension, BTreeMap<(String, String), RaterRow>>;

/// Ratings indexed by dimension, then (system, item), then rater.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RatingMatrix {
    cells: Cells,
}

impl RatingMatrix {
    pub fn from_ratings<I: IntoIterator<Item = Rating>>(ratings: I) -> Result<Self, StatsError> {
        let mut cells = Cells::new();
        for r in ratings {
            if usize::from(r.rating) >= SCALE {
                return Err(StatsError::OutOfScale {
                    item: r.item_id,
                    rater: r.rater_id,
                    value: r.rating,
                });
            }
            let slot = cells
                .entry(r.dimension)
                .or_default()
                .entry((r.system.clone(), r.item_id.clone()))
                .or_default();
            if slot.insert(r.rater_id.clone(), r.rating).is_some() {
                return Err(StatsError::Duplicate(format!(
                    "{} {}/{} by {}",
                    r.dimension, r.system, r.item_id, r.rater_id
                )));
            }
        }
        Ok(Self { cells })
    }

    pub fn dimensions(&self) -> Vec<Dimension> {
        self.cells.keys().copied().collect()
    }

    pub fn systems(&self) -> BTreeSet<String> {
        self.cells
            .values()
            .flat_map(|m| m.keys().map(|(s, _)| s.clone()))
            .collect()
    }

    /// Subjects of one dimension with their complete rater rows.
    fn complete(&self, dim: Dimension) -> Result<(Vec<&RaterRow>, usize), StatsError> {
        let subjects = self
            .cells
            .get(&dim)
            .filter(|m| !m.is_empty())
            .ok_or_else(|| StatsError::NoItems(dim.to_string()))?;
        let raters: BTreeSet<&String> = subjects.values().flat_map(|m| m.keys()).collect();
        if raters.len() < 2 {
            return Err(StatsError::TooFewRaters(raters.len()));
        }
        let mut missing = Vec::new();
        for ((system, item), row) in subjects {
            for r in &raters {
                if !row.contains_key(*r) {
                    missing.push(format!("{dim} {system}/{item} by {r}"));
                }
            }
        }
        if !missing.is_empty() {
            return Err(StatsError::Incomplete(missing));
        }
        Ok((subjects.values().collect(), raters.len()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Kappa {
    Value {
        kappa: f64,
    },
    /// Expected agreement is 1 (every rating in one category).
    Degenerate,
}

/// Fleiss' kappa over the three-point scale. Counts are accumulated as
/// integers, so item and rater order cannot change the result.
pub fn fleiss_kappa(matrix: &RatingMatrix, dim: Dimension) -> Result<Kappa, StatsError> {
    let (subjects, n) = matrix.complete(dim)?;
    let big_n = subjects.len() as u128;
    let n = n as u128;
    let mut agreement: u128 = 0;
    let mut totals = [0u128; SCALE];
    for row in subjects {
        let mut counts = [0u128; SCALE];
        for &v in row.values() {
            counts[usize::from(v)] += 1;
        }
        agreement += counts.iter().map(|c| c * c).sum::<u128>() - n;
        for (t, c) in totals.iter_mut().zip(counts) {
            *t += c;
        }
    }
    let p_bar = agreement as f64 / (big_n * n * (n - 1)) as f64;
    let all = big_n * n;
    let pe_num: u128 = totals.iter().map(|t| t * t).sum();
    let pe_den = all * all;
    if pe_num == pe_den {
        return Ok(Kappa::Degenerate);
    }
    let p_e = pe_num as f64 / pe_den as f64;
    Ok(Kappa::Value {
        kappa: (p_bar - p_e) / (1.0 - p_e),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikertRow {
    pub system: String,
    pub means: BTreeMap<Dimension, f64>,
    /// Mean of the dimension means.
    pub avg: f64,
}

/// Mean rating per system and dimension plus the cross-dimension average.
pub fn likert_summary(matrix: &RatingMatrix) -> Result<Vec<LikertRow>, StatsError> {
    let mut sums: BTreeMap<String, BTreeMap<Dimension, (u64, u64)>> = BTreeMap::new();
    for dim in matrix.dimensions() {
        let _ = matrix.complete(dim)?;
        for ((system, _), row) in &matrix.cells[&dim] {
            let e = sums
                .entry(system.clone())
                .or_default()
                .entry(dim)
                .or_default();
            e.0 += row.values().map(|&v| u64::from(v)).sum::<u64>();
            e.1 += row.len() as u64;
        }
    }
    Ok(sums
        .into_iter()
        .map(|(system, dims)| {
            let means: BTreeMap<Dimension, f64> = dims
                .into_iter()
                .map(|(d, (s, c))| (d, s as f64 / c as f64))
                .collect();
            let avg = means.values().sum::<f64>() / means.len() as f64;
            LikertRow { system, means, avg }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Markdown,
    Tsv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(Self::Markdown),
            "tsv" => Ok(Self::Tsv),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

/// Rounds half away from zero on the decimal expansion, so `64.765`
/// becomes `64.77` although its binary value lies just below.
pub fn round_half_up(x: f64, places: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let text = format!("{:.12}", x.abs());
    let (int, frac) = text.split_once('.').expect("fixed-point format");
    let mut digits: Vec<u8> = int
        .bytes()
        .chain(frac.bytes().take(places))
        .map(|b| b - b'0')
        .collect();
    if frac.as_bytes()[places] >= b'5' {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - places;
    let s: String = digits.iter().map(|d| char::from(b'0' + d)).collect();
    let body = if places == 0 {
        s
    } else {
        format!("{}.{}", &s[..split], &s[split..])
    };
    if x < 0.0 && body.bytes().any(|b| matches!(b, b'1'..=b'9')) {
        format!("-{body}")
    } else {
        body
    }
}

/// A header row plus data rows, already formatted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn render(&self, format: ReportFormat) -> String {
        let mut out = String::new();
        match format {
            ReportFormat::Markdown => {
                let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
                out.push_str(&line(&self.headers));
                out.push_str(&format!("|{}\n", "---|".repeat(self.headers.len())));
                for r in &self.rows {
                    out.push_str(&line(r));
                }
            }
            ReportFormat::Tsv => {
                for r in std::iter::once(&self.headers).chain(&self.rows) {
                    out.push_str(&r.join("\t"));
                    out.push('\n');
                }
            }
        }
        out
    }
}

pub fn fmt2(x: f64) -> String {
    round_half_up(x, 2)
}

fn opt2(x: Option<f64>) -> String {
    x.map(fmt2).unwrap_or_else(|| "-".to_string())
}

impl DatasetStats {
    pub fn to_table(&self) -> Table {
        let mut headers: Vec<String> = [
            "Size",
            "Inst Len",
            "Src Len",
            "Tar Len",
            "Len Ratio",
            "Edit Dist",
            "Edit Ratio",
            "Rouge1",
        ]
        .map(String::from)
        .to_vec();
        let mut row = vec![
            self.size.to_string(),
            fmt2(self.inst_len),
            fmt2(self.src_len),
            fmt2(self.tar_len),
            fmt2(self.len_ratio),
            fmt2(self.edit_dist),
            fmt2(self.edit_ratio),
            fmt2(self.rouge1),
        ];
        if self.nli_src_tar.is_some() || self.nli_tar_src.is_some() {
            headers.extend(["NLI s-t", "NLI t-s"].map(String::from));
            row.extend([opt2(self.nli_src_tar), opt2(self.nli_tar_src)]);
        }
        Table {
            headers,
            rows: vec![row],
        }
    }
}

/// Likert means use three decimals, as human-evaluation tables usually do.
pub fn likert_table(rows: &[LikertRow]) -> Table {
    let dims: BTreeSet<Dimension> = rows.iter().flat_map(|r| r.means.keys().copied()).collect();
    let mut headers = vec!["System".to_string()];
    headers.extend(dims.iter().map(|d| d.label().to_string()));
    headers.push("AVG".to_string());
    let rows = rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.system.clone()];
            cells.extend(dims.iter().map(|d| {
                r.means
                    .get(d)
                    .map(|m| round_half_up(*m, 3))
                    .unwrap_or_else(|| "-".into())
            }));
            cells.push(round_half_up(r.avg, 3));
            cells
        })
        .collect();
    Table { headers, rows }
}

pub fn kappa_table(results: &[(Dimension, Kappa)]) -> Table {
    Table {
        headers: vec!["Dimension".into(), "Fleiss kappa".into()],
        rows: results
            .iter()
            .map(|(d, k)| {
                let v = match k {
                    Kappa::Value { kappa } => round_half_up(*kappa, 3),
                    Kappa::Degenerate => "DEGENERATE".into(),
                };
                vec![d.label().to_string(), v]
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(inst: &str, src: &str, tar: Option<&str>) -> RewriteRecord {
        RewriteRecord {
            id: "x".into(),
            instruction: inst.into(),
            source: src.into(),
            target: tar.map(String::from),
            ..Default::default()
        }
    }

    #[test]
    fn mean_source_length() {
        let s = dataset_stats(
            vec![
                rec("i", "a b c d", Some("a")),
                rec("i", "a b c d e f", Some("a")),
            ],
            None,
        )
        .unwrap();
        assert_eq!(s.size, 2);
        assert_eq!(s.src_len, 5.0);
        assert_eq!(s.nli_src_tar, None);
    }

    #[test]
    fn copy_record() {
        let s = dataset_stats(
            vec![rec("i", "one two three", Some("one two three"))],
            Some(&NliClient::stub()),
        )
        .unwrap();
        assert_eq!((s.edit_ratio, s.rouge1, s.len_ratio), (0.0, 100.0, 1.0));
        assert_eq!(s.nli_src_tar, Some(1.0));
    }

    #[test]
    fn skips_unusable_records() {
        let s = dataset_stats(
            vec![
                rec("i", "a", None),
                rec("i", "", Some("b")),
                rec("i", "a", Some("a")),
            ],
            None,
        )
        .unwrap();
        assert_eq!((s.size, s.skipped), (1, 2));
    }

    #[test]
    fn five_record_fixture() {
        // Hand-tabulated per record: (inst, src, tar, edit distance, rouge1 F1).
        let records = vec![
            rec("Shorten it.", "the cat sat on the mat", Some("the cat sat")),
            rec("Make formal", "hi there", Some("hello there")),
            rec("Expand", "rain fell", Some("heavy rain fell all night")),
            rec("Fix", "a b c", Some("a b c")),
            rec("Reword this text", "x y", Some("y x")),
        ];
        // tokens: inst 3,2,1,1,3; src 6,2,2,3,2; tar 3,2,5,3,2
        // edit distance 3,1,3,0,2; rouge1 F1: 2*3/9, 2*1/4, 2*2/7, 1, 1
        let s = dataset_stats(records, None).unwrap();
        let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        close(s.inst_len, 10.0 / 5.0);
        close(s.src_len, 15.0 / 5.0);
        close(s.tar_len, 15.0 / 5.0);
        close(s.len_ratio, (0.5 + 1.0 + 2.5 + 1.0 + 1.0) / 5.0);
        close(s.edit_dist, 9.0 / 5.0);
        close(s.edit_ratio, (0.5 + 0.5 + 1.5 + 0.0 + 1.0) / 5.0);
        close(
            s.rouge1,
            100.0 * (6.0 / 9.0 + 0.5 + 4.0 / 7.0 + 1.0 + 1.0) / 5.0,
        );
    }

    #[test]
    fn duplication_keeps_means() {
        let base = vec![
            rec("Shorten it.", "the cat sat on the mat", Some("the cat sat")),
            rec("Expand", "rain fell", Some("heavy rain fell all night")),
        ];
        let once = dataset_stats(base.clone(), None).unwrap();
        let twice = dataset_stats(base.iter().chain(&base).cloned(), None).unwrap();
        assert_eq!(twice.size, 2 * once.size);
        for (a, b) in [
            (once.len_ratio, twice.len_ratio),
            (once.rouge1, twice.rouge1),
            (once.edit_ratio, twice.edit_ratio),
        ] {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn r(item: &str, rater: &str, dim: Dimension, rating: u8) -> Rating {
        Rating {
            item_id: item.into(),
            rater_id: rater.into(),
            system: "sys".into(),
            dimension: dim,
            rating,
        }
    }

    const F: Dimension = Dimension::Fluency;

    #[test]
    fn kappa_perfect_and_degenerate() {
        let perfect = RatingMatrix::from_ratings(vec![
            r("1", "a", F, 0),
            r("1", "b", F, 0),
            r("2", "a", F, 2),
            r("2", "b", F, 2),
            r("3", "a", F, 1),
            r("3", "b", F, 1),
        ])
        .unwrap();
        assert_eq!(
            fleiss_kappa(&perfect, F).unwrap(),
            Kappa::Value { kappa: 1.0 }
        );
        let single = RatingMatrix::from_ratings(vec![
            r("1", "a", F, 2),
            r("1", "b", F, 2),
            r("2", "a", F, 2),
            r("2", "b", F, 2),
        ])
        .unwrap();
        assert_eq!(fleiss_kappa(&single, F).unwrap(), Kappa::Degenerate);
    }

    #[test]
    fn kappa_two_by_two() {
        // P_i = 0 for both items, p_0 = p_2 = 1/2, Pe = 1/2: (0 - 1/2) / (1 - 1/2).
        let m = RatingMatrix::from_ratings(vec![
            r("1", "a", F, 0),
            r("1", "b", F, 2),
            r("2", "a", F, 2),
            r("2", "b", F, 0),
        ])
        .unwrap();
        let Kappa::Value { kappa } = fleiss_kappa(&m, F).unwrap() else {
            panic!()
        };
        assert!((kappa - -1.0).abs() < 1e-9);
    }

    #[test]
    fn kappa_not_one_when_any_disagreement() {
        let m = RatingMatrix::from_ratings(vec![
            r("1", "a", F, 0),
            r("1", "b", F, 0),
            r("2", "a", F, 2),
            r("2", "b", F, 1),
        ])
        .unwrap();
        assert!(matches!(fleiss_kappa(&m, F).unwrap(), Kappa::Value { kappa } if kappa < 1.0));
    }

    #[test]
    fn kappa_relabel_and_reorder() {
        let ratings = vec![
            r("1", "a", F, 0),
            r("1", "b", F, 1),
            r("1", "c", F, 1),
            r("2", "a", F, 2),
            r("2", "b", F, 2),
            r("2", "c", F, 1),
            r("3", "a", F, 0),
            r("3", "b", F, 0),
            r("3", "c", F, 0),
        ];
        let k = fleiss_kappa(&RatingMatrix::from_ratings(ratings.clone()).unwrap(), F).unwrap();
        let relabeled: Vec<Rating> = ratings
            .iter()
            .rev()
            .map(|x| Rating {
                rater_id: format!("z{}", x.rater_id),
                item_id: format!("q{}", x.item_id),
                ..x.clone()
            })
            .collect();
        assert_eq!(
            fleiss_kappa(&RatingMatrix::from_ratings(relabeled).unwrap(), F).unwrap(),
            k
        );
    }

    #[test]
    fn matrix_errors() {
        assert!(matches!(
            RatingMatrix::from_ratings(vec![r("1", "a", F, 3)]),
            Err(StatsError::OutOfScale { .. })
        ));
        assert!(matches!(
            RatingMatrix::from_ratings(vec![r("1", "a", F, 1), r("1", "a", F, 2)]),
            Err(StatsError::Duplicate(_))
        ));
        let m = RatingMatrix::from_ratings(vec![
            r("1", "a", F, 1),
            r("1", "b", F, 1),
            r("2", "a", F, 1),
        ])
        .unwrap();
        match fleiss_kappa(&m, F) {
            Err(StatsError::Incomplete(missing)) => assert_eq!(missing, ["FLUENCY sys/2 by b"]),
            other => panic!("{other:?}"),
        }
        let one = RatingMatrix::from_ratings(vec![r("1", "a", F, 1)]).unwrap();
        assert!(matches!(
            fleiss_kappa(&one, F),
            Err(StatsError::TooFewRaters(1))
        ));
        assert!(matches!(
            fleiss_kappa(&one, Dimension::Coherence),
            Err(StatsError::NoItems(_))
        ));
    }

    #[test]
    fn likert_means() {
        let all_two: Vec<Rating> = Dimension::ALL
            .iter()
            .flat_map(|&d| [r("1", "a", d, 2), r("1", "b", d, 2)])
            .collect();
        let rows = likert_summary(&RatingMatrix::from_ratings(all_two).unwrap()).unwrap();
        assert_eq!(rows[0].avg, 2.0);
        assert!(rows[0].means.values().all(|&m| m == 2.0));

        let split = RatingMatrix::from_ratings(vec![r("1", "a", F, 0), r("1", "b", F, 2)]).unwrap();
        assert_eq!(likert_summary(&split).unwrap()[0].means[&F], 1.0);
    }

    #[test]
    fn likert_avg_is_mean_of_means() {
        let scores = [[2, 2, 1], [1, 2, 2], [2, 2, 2], [0, 1, 2], [2, 1, 1]];
        let ratings: Vec<Rating> = Dimension::ALL
            .iter()
            .zip(scores)
            .flat_map(|(&d, s)| {
                s.into_iter().enumerate().flat_map(move |(i, v)| {
                    [
                        r(&i.to_string(), "a", d, v),
                        r(&i.to_string(), "b", d, 2 - v / 2),
                    ]
                })
            })
            .collect();
        let row = &likert_summary(&RatingMatrix::from_ratings(ratings).unwrap()).unwrap()[0];
        let expected = row.means.values().sum::<f64>() / 5.0;
        assert!((row.avg - expected).abs() < 1e-9);
        assert_eq!(row.means.len(), 5);
    }

    #[test]
    fn rounding() {
        assert_eq!(round_half_up(64.768, 2), "64.77");
        assert_eq!(round_half_up(64.765, 2), "64.77");
        assert_eq!(round_half_up(0.125, 2), "0.13");
        assert_eq!(round_half_up(9.999, 2), "10.00");
        assert_eq!(round_half_up(-1.005, 2), "-1.01");
        assert_eq!(round_half_up(-0.001, 2), "0.00");
        assert_eq!(round_half_up(1629.0, 0), "1629");
    }

    #[test]
    fn report_layout() {
        let s = dataset_stats(vec![rec("i", "a b", Some("a b c"))], None).unwrap();
        let md = s.to_table().render(ReportFormat::Markdown);
        assert_eq!(
            md,
            "| Size | Inst Len | Src Len | Tar Len | Len Ratio | Edit Dist | Edit Ratio | Rouge1 |\n\
             |---|---|---|---|---|---|---|---|\n\
             | 1 | 1.00 | 2.00 | 3.00 | 1.50 | 1.00 | 0.50 | 80.00 |\n"
        );
        let tsv = s.to_table().render(ReportFormat::Tsv);
        assert_eq!(
            tsv.lines().nth(1).unwrap(),
            "1\t1.00\t2.00\t3.00\t1.50\t1.00\t0.50\t80.00"
        );
    }
}
