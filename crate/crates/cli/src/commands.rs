//! Subcommand implementations.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use rewritekit::corpusio::{
    duplicate_ids, read_records, CandidateSet, CorpusError, RecordWriter, RewriteRecord,
};
use rewritekit::lexicon::Lexicon;
use rewritekit::preference::{
    build_pairs, check_gradient, pair_differences, train_on_differences, ComparisonPair,
    TrainConfig,
};
use rewritekit::quality::{
    classify_task_type, filter_record, quality_score, FailedRule, FilterReason, Measurements,
    QualityThresholds, QualityVerdict, TaskKind,
};
use rewritekit::stats::{
    dataset_stats, fleiss_kappa, kappa_table, likert_summary, likert_table, Dimension,
    RatingMatrix, StatsError,
};
use rewritekit::synthgen::{
    default_shots, load_shots, prompt_record, synthesize, Generated, LlmConfig, PromptRecord,
    RemoteLlm,
};
use rewritekit::wikiedits::{extract, HistoryReader};
use serde::{Deserialize, Serialize};

use crate::evaluate::{evaluate_record, summarize, RecordMetrics};
use crate::{
    emit, load, nli_client, require_dir, require_file, require_nli, usage, CliError, CliResult,
    Command, Global,
};

pub(crate) fn dispatch(global: &Global, command: Command) -> CliResult {
    match command {
        Command::Evaluate {
            input,
            out,
            per_record,
            sari_mode,
            no_reference,
            format,
        } => {
            require_file("--in", &input)?;
            let nli = require_nli(global)?;
            let records: Vec<RewriteRecord> = load(&input, global.strict)?;
            let rows: Vec<RecordMetrics> = records
                .par_iter()
                .map(|r| evaluate_record(r, &nli, sari_mode.into(), no_reference))
                .collect::<anyhow::Result<_>>()?;
            if let Some(path) = per_record {
                write_jsonl(&path, &rows)?;
            }
            let summary = summarize(&rows);
            if summary.empty_updates > 0 {
                log::info!(
                    "{} predictions left every updated sentence unchanged",
                    summary.empty_updates
                );
            }
            emit(&summary.to_table().render(format.into()), out.as_deref())
        }
        Command::Score {
            input,
            thresholds,
            out,
            keywords,
        } => {
            require_file("--in", &input)?;
            let t = thresholds_from(thresholds.as_deref())?;
            let lexicon = lexicon_from(keywords.as_deref())?;
            let nli = require_nli(global)?;
            let sets: Vec<CandidateSet> = load::<ScoreInput>(&input, global.strict)?
                .into_iter()
                .map(ScoreInput::into_set)
                .collect::<anyhow::Result<_>>()?;
            let jobs: Vec<(&CandidateSet, usize)> = sets
                .iter()
                .flat_map(|s| (0..s.candidates.len()).map(move |i| (s, i)))
                .collect();
            let lines: Vec<VerdictLine> = jobs
                .par_iter()
                .map(|&(s, i)| {
                    let c = &s.candidates[i];
                    let task = classify_task_type(&s.instruction, &lexicon);
                    let v = quality_score(&s.source, &c.text, &task, &t, &nli)
                        .with_context(|| format!("{} rank {}", s.id, c.rank))?;
                    Ok(VerdictLine {
                        id: s.id.clone(),
                        rank: c.rank,
                        task: task.kind,
                        matched_keyword: task.matched_keyword,
                        score: v.score,
                        failed_rule: v.failed_rule,
                        measurements: v.measurements,
                    })
                })
                .collect::<anyhow::Result<_>>()?;
            let good = lines.iter().filter(|l| l.score == 1).count();
            log::info!("{good} of {} candidates pass", lines.len());
            write_jsonl(&out, &lines)
        }
        Command::Filter {
            input,
            out,
            rejects,
            thresholds,
        } => {
            require_file("--in", &input)?;
            let t = thresholds_from(thresholds.as_deref())?;
            let nli = require_nli(global)?;
            let records: Vec<RewriteRecord> = load(&input, global.strict)?;
            let outcomes: Vec<_> = records
                .par_iter()
                .map(|r| filter_record(r, &t, &nli).with_context(|| format!("record {}", r.id)))
                .collect::<anyhow::Result<_>>()?;
            let mut kept = RecordWriter::create(&out)?;
            let mut dropped = Vec::new();
            for (r, o) in records.iter().zip(outcomes) {
                match o.fixed {
                    Some(fixed) => kept.write(&fixed)?,
                    None => dropped.push(Reject {
                        id: r.id.clone(),
                        reason: o.reason,
                        removed: o.removed,
                    }),
                }
            }
            let n = kept.finish()?;
            log::info!("kept {n}, dropped {}", dropped.len());
            if let Some(path) = rejects {
                write_jsonl(&path, &dropped)?;
            }
            Ok(())
        }
        Command::Pairs {
            input,
            verdicts,
            out,
            all_pairs,
        } => {
            require_file("--in", &input)?;
            require_file("--verdicts", &verdicts)?;
            let sets: Vec<CandidateSet> = load(&input, global.strict)?;
            let dups = duplicate_ids(sets.iter().map(|s| s.id.as_str()));
            if !dups.is_empty() {
                return Err(anyhow!("duplicate candidate-set ids: {}", dups.join(", ")).into());
            }
            let mut by_key: HashMap<(String, u32), QualityVerdict> = HashMap::new();
            for v in load::<VerdictLine>(&verdicts, global.strict)? {
                let (id, rank) = (v.id.clone(), v.rank);
                if by_key
                    .insert((id.clone(), rank), v.into_verdict())
                    .is_some()
                {
                    return Err(anyhow!("duplicate verdict for {id} rank {rank}").into());
                }
            }
            let mut pairs: Vec<ComparisonPair> = Vec::new();
            for s in &sets {
                let aligned: Vec<QualityVerdict> = s
                    .candidates
                    .iter()
                    .map(|c| {
                        by_key
                            .get(&(s.id.clone(), c.rank))
                            .cloned()
                            .ok_or_else(|| anyhow!("no verdict for {} rank {}", s.id, c.rank))
                    })
                    .collect::<anyhow::Result<_>>()?;
                pairs.extend(build_pairs(s, &aligned, all_pairs)?);
            }
            log::info!("{} pairs from {} candidate sets", pairs.len(), sets.len());
            write_jsonl(&out, &pairs)
        }
        Command::RewardTrain {
            pairs,
            out,
            lr,
            epochs,
            seed,
            check_gradient: check,
        } => {
            require_file("--pairs", &pairs)?;
            if !(lr.is_finite() && lr > 0.0) {
                return Err(usage("--lr must be a positive number"));
            }
            let nli = require_nli(global)?;
            let pairs: Vec<ComparisonPair> = load(&pairs, global.strict)?;
            let diffs = pair_differences(&pairs, &nli)?;
            let outcome = train_on_differences(&diffs, &TrainConfig { lr, epochs, seed })?;
            log::info!(
                "loss {:.6} -> {:.6} over {epochs} epochs",
                outcome.initial_loss,
                outcome.final_loss
            );
            let json = serde_json::to_string_pretty(&outcome.model)? + "\n";
            emit(&json, Some(&out))?;
            if check {
                let g = check_gradient(&outcome.model.weights, &diffs);
                println!("{}", serde_json::to_string_pretty(&g)?);
            }
            Ok(())
        }
        Command::ExtractWiki {
            dump,
            out,
            keywords,
            instructions_out,
            report,
        } => {
            require_file("--dump", &dump)?;
            let lexicon = lexicon_from(keywords.as_deref())?;
            let extraction = extract(HistoryReader::open(&dump)?, &lexicon)?;
            write_jsonl(&out, &extraction.records)?;
            if let Some(path) = instructions_out {
                write_jsonl(&path, &extraction.instructions)?;
            }
            let summary = serde_json::to_string_pretty(&extraction.report)? + "\n";
            match report {
                Some(path) => emit(&summary, Some(&path))?,
                None => log::info!("{summary}"),
            }
            Ok(())
        }
        Command::SynthPrompt { input, shots, out } => {
            require_file("--in", &input)?;
            let shots = match shots {
                Some(p) => {
                    require_file("--shots", &p)?;
                    load_shots(&p)?
                }
                None => default_shots(),
            };
            let texts: Vec<CorpusText> = load(&input, global.strict)?;
            let prompts: Vec<PromptRecord> = texts
                .iter()
                .map(|t| {
                    let mut p = prompt_record(&t.id, &t.source, &shots)
                        .with_context(|| format!("text {}", t.id))?;
                    p.instruction = t.instruction.clone().filter(|i| !i.trim().is_empty());
                    Ok(p)
                })
                .collect::<anyhow::Result<_>>()?;
            write_jsonl(&out, &prompts)
        }
        Command::SynthGenerate {
            input,
            llm_endpoint,
            out,
            skipped,
            concurrency,
            max_tokens,
            temperature,
            top_k,
        } => {
            require_file("--in", &input)?;
            if concurrency == 0 {
                return Err(usage("--concurrency must be at least 1"));
            }
            let prompts: Vec<PromptRecord> = load(&input, global.strict)?;
            let client = RemoteLlm::new(LlmConfig {
                max_tokens,
                temperature,
                top_k,
                ..LlmConfig::new(llm_endpoint)
            });
            let mut records = Vec::new();
            let mut skips = Vec::new();
            for g in synthesize(&prompts, &client, concurrency) {
                match g {
                    Generated::Record(r) => records.push(r),
                    Generated::Skipped(s) => skips.push(s),
                }
            }
            write_jsonl(&out, &records)?;
            if let Some(path) = skipped {
                write_jsonl(&path, &skips)?;
            }
            if records.is_empty() && !skips.is_empty() {
                return Err(anyhow!("all {} prompts were skipped", skips.len()).into());
            }
            Ok(())
        }
        Command::Stats { input, format, out } => {
            if !input.exists() {
                return Err(usage(format!(
                    "--in {}: no such file or directory",
                    input.display()
                )));
            }
            let nli = nli_client(global)?;
            let files = input_files(&input)?;
            let mut failure: Option<anyhow::Error> = None;
            let mut sources = files.iter();
            let mut current: Option<Box<dyn Iterator<Item = anyhow::Result<RewriteRecord>>>> = None;
            let strict = global.strict;
            let records = std::iter::from_fn(|| loop {
                if failure.is_some() {
                    return None;
                }
                if current.is_none() {
                    match open_records(sources.next()?, strict) {
                        Ok(it) => current = Some(it),
                        Err(e) => {
                            failure = Some(e);
                            return None;
                        }
                    }
                }
                match current.as_mut().and_then(Iterator::next) {
                    Some(Ok(r)) => return Some(r),
                    Some(Err(e)) => {
                        failure = Some(e);
                        return None;
                    }
                    None => current = None,
                }
            });
            let stats = dataset_stats(records, nli.as_ref())?;
            if let Some(e) = failure {
                return Err(CliError::Data(e));
            }
            emit(&stats.to_table().render(format.into()), out.as_deref())
        }
        Command::Kappa {
            ratings,
            dimension,
            format,
            out,
        } => {
            require_file("--ratings", &ratings)?;
            let dims: Option<Vec<Dimension>> = if dimension.eq_ignore_ascii_case("all") {
                None
            } else {
                Some(vec![dimension.parse().map_err(usage)?])
            };
            let matrix = RatingMatrix::from_ratings(load(&ratings, global.strict)?)?;
            let dims = dims.unwrap_or_else(|| matrix.dimensions());
            let mut results = Vec::new();
            for d in dims {
                let k = fleiss_kappa(&matrix, d).map_err(|e| match e {
                    StatsError::Incomplete(m) if m.len() > 20 => {
                        anyhow!(
                            "incomplete rating matrix; {} missing cells, first: {}",
                            m.len(),
                            m[..20].join(", ")
                        )
                    }
                    e => e.into(),
                })?;
                results.push((d, k));
            }
            let fmt = format.into();
            let text = format!(
                "{}\n{}",
                kappa_table(&results).render(fmt),
                likert_table(&likert_summary(&matrix)?).render(fmt)
            );
            emit(&text, out.as_deref())
        }
    }
}

/// One line of `score` output and `pairs` verdict input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictLine {
    pub id: String,
    pub rank: u32,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_keyword: Option<String>,
    pub score: u8,
    pub failed_rule: Option<FailedRule>,
    pub measurements: Measurements,
}

impl VerdictLine {
    fn into_verdict(self) -> QualityVerdict {
        QualityVerdict {
            score: self.score,
            failed_rule: self.failed_rule,
            measurements: self.measurements,
        }
    }
}

#[derive(Debug, Serialize)]
struct Reject {
    id: String,
    reason: FilterReason,
    removed: Vec<String>,
}

/// A candidate set, or a record whose target is the single candidate.
#[derive(Deserialize)]
#[serde(untagged)]
enum ScoreInput {
    Set(CandidateSet),
    Record(RewriteRecord),
}

impl ScoreInput {
    fn into_set(self) -> anyhow::Result<CandidateSet> {
        match self {
            ScoreInput::Set(s) => Ok(s),
            ScoreInput::Record(r) => {
                let text = r
                    .target
                    .ok_or_else(|| anyhow!("record {}: no target or candidates", r.id))?;
                Ok(CandidateSet {
                    id: r.id,
                    instruction: r.instruction,
                    source: r.source,
                    candidates: vec![rewritekit::corpusio::Candidate {
                        text,
                        rank: 0,
                        logprob: None,
                    }],
                })
            }
        }
    }
}

/// Input line of `synth-prompt`.
#[derive(Deserialize)]
struct CorpusText {
    id: String,
    #[serde(alias = "text")]
    source: String,
    #[serde(default)]
    instruction: Option<String>,
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> CliResult {
    let mut w = RecordWriter::create(path)?;
    for item in items {
        w.write(item)?;
    }
    w.finish()?;
    Ok(())
}

fn thresholds_from(path: Option<&Path>) -> CliResult<QualityThresholds> {
    match path {
        Some(p) => {
            require_file("--thresholds", p)?;
            QualityThresholds::load(p).map_err(|e| usage(e.to_string()))
        }
        None => Ok(QualityThresholds::default()),
    }
}

fn lexicon_from(dir: Option<&Path>) -> CliResult<Lexicon> {
    match dir {
        Some(d) => {
            require_dir("--keywords", d)?;
            Ok(Lexicon::from_dir(d).with_context(|| d.display().to_string())?)
        }
        None => Ok(Lexicon::default()),
    }
}

const TABLE_EXTENSIONS: [&str; 3] = ["jsonl", "tsv", "csv"];

/// The file itself, or the record files of a directory sorted by name.
fn input_files(path: &Path) -> CliResult<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| path.display().to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| TABLE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(usage(format!(
            "{}: no .jsonl, .tsv or .csv files",
            path.display()
        )));
    }
    Ok(files)
}

type RecordIter = Box<dyn Iterator<Item = anyhow::Result<RewriteRecord>>>;

fn open_records(path: &Path, strict: bool) -> anyhow::Result<RecordIter> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "tsv" | "csv" => delimited_records(path, if ext == "tsv" { b'\t' } else { b',' }, strict),
        _ => {
            let label = path.display().to_string();
            let reader = read_records::<RewriteRecord>(path)?;
            Ok(Box::new(reader.filter_map(move |item| match item {
                Ok(r) => Some(Ok(r)),
                Err(e) if e.is_fatal() || strict => {
                    Some(Err(anyhow::Error::new(e).context(label.clone())))
                }
                Err(CorpusError::Malformed { line, message }) => {
                    log::warn!("{label}:{line}: skipped: {message}");
                    None
                }
                Err(e) => Some(Err(e.into())),
            })))
        }
    }
}

const INSTRUCTION_COLUMNS: [&str; 4] = ["instruction", "instructions", "comment", "prompt"];
const SOURCE_COLUMNS: [&str; 4] = ["source", "source_text", "input", "src"];
const TARGET_COLUMNS: [&str; 5] = ["target", "target_text", "output", "rewrite", "tgt"];

fn column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.contains(&h.trim().to_ascii_lowercase().as_str()))
}

/// Delimited files with a header row naming instruction, source and target
/// columns.
fn delimited_records(path: &Path, delimiter: u8, strict: bool) -> anyhow::Result<RecordIter> {
    let file = File::open(path).with_context(|| path.display().to_string())?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let headers = reader.headers()?.clone();
    let label = path.display().to_string();
    let missing = |what: &str| {
        anyhow!(
            "{label}: no {what} column in header {:?}",
            headers.iter().collect::<Vec<_>>()
        )
    };
    let src = column(&headers, &SOURCE_COLUMNS).ok_or_else(|| missing("source"))?;
    let tar = column(&headers, &TARGET_COLUMNS).ok_or_else(|| missing("target"))?;
    let inst = column(&headers, &INSTRUCTION_COLUMNS);
    let id = column(&headers, &["id"]);
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("row")
        .to_string();
    Ok(Box::new(reader.into_records().enumerate().filter_map(
        move |(i, row)| {
            let row = match row {
                Ok(r) => r,
                Err(e) if strict => return Some(Err(anyhow!("{label}: row {}: {e}", i + 2))),
                Err(e) => {
                    log::warn!("{label}: row {}: skipped: {e}", i + 2);
                    return None;
                }
            };
            let get = |c: usize| row.get(c).unwrap_or("").to_string();
            Some(Ok(RewriteRecord {
                id: id.map(get).unwrap_or_else(|| format!("{stem}-{}", i + 1)),
                instruction: inst.map(get).unwrap_or_default(),
                source: get(src),
                target: Some(get(tar)),
                prediction: None,
                meta: BTreeMap::new(),
            }))
        },
    )))
}
