//! Instruction-tuning records mined from MediaWiki revision histories.
//!
//! A history export is streamed page by page, wikitext is reduced to plain
//! text, consecutive revisions are diffed at paragraph level, and each
//! changed block is filtered on its edit summary and sentence count.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use quick_xml::events::Event;
use quick_xml::Reader;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpusio::RewriteRecord;
use crate::lexicon::{words, KeywordList, Lexicon, WordSet};
use crate::textops::{content_words, split_sentences, tokenize};

#[derive(Debug, Error)]
pub enum WikiError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
}

/// Counts of stripped wikitext constructs, keyed by construct name.
pub type MarkupReport = BTreeMap<String, usize>;

fn bump(report: &mut MarkupReport, key: &str, n: usize) {
    if n > 0 {
        *report.entry(key.to_string()).or_insert(0) += n;
    }
}

fn merge(into: &mut MarkupReport, from: &MarkupReport) {
    for (k, v) in from {
        *into.entry(k.clone()).or_insert(0) += v;
    }
}

struct Patterns {
    comment: Regex,
    ref_self: Regex,
    ref_pair: Regex,
    external: Regex,
    emphasis: Regex,
    heading: Regex,
    list: Regex,
    rule: Regex,
    magic: Regex,
    tag: Regex,
    spaces: Regex,
    blank_runs: Regex,
    section: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        comment: Regex::new(r"(?s)<!--.*?(?:-->|\z)").unwrap(),
        ref_self: Regex::new(r"(?i)<ref\b[^>]*/>").unwrap(),
        ref_pair: Regex::new(r"(?is)<ref\b[^>]*>.*?(?:</ref\s*>|\z)").unwrap(),
        external: Regex::new(r"\[(?:https?|ftp)://[^\s\]]+(?:\s+([^\]]*))?\]").unwrap(),
        emphasis: Regex::new(r"'{2,5}").unwrap(),
        heading: Regex::new(r"(?m)^[ \t]*=+[^\n]*?=+[ \t]*$").unwrap(),
        list: Regex::new(r"(?m)^[ \t]*[*#:;]+[ \t]*").unwrap(),
        rule: Regex::new(r"(?m)^[ \t]*-{4,}[ \t]*$").unwrap(),
        magic: Regex::new(r"__[A-Z]+__").unwrap(),
        tag: Regex::new(r"</?[a-zA-Z][a-zA-Z0-9]*\b[^<>]*/?>").unwrap(),
        spaces: Regex::new(r"[ \t\u{a0}]+").unwrap(),
        blank_runs: Regex::new(r"\n(?:[ \t]*\n)+").unwrap(),
        section: Regex::new(r"/\*.*?\*/").unwrap(),
    })
}

fn replace_counting(
    re: &Regex,
    text: &str,
    with: &str,
    report: &mut MarkupReport,
    key: &str,
) -> String {
    bump(report, key, re.find_iter(text).count());
    re.replace_all(text, with).into_owned()
}

/// Removes balanced `open … close` spans, nested ones included. An
/// unterminated span runs to the end of the text. Returns the number of
/// outermost spans removed.
fn remove_nested(text: &str, open: &str, close: &str) -> (String, usize) {
    let mut out = String::with_capacity(text.len());
    let mut depth = 0usize;
    let mut removed = 0;
    let mut rest = text;
    while !rest.is_empty() {
        if rest.starts_with(open) {
            if depth == 0 {
                removed += 1;
            }
            depth += 1;
            rest = &rest[open.len()..];
        } else if depth > 0 && rest.starts_with(close) {
            depth -= 1;
            rest = &rest[close.len()..];
        } else {
            let ch = rest.chars().next().unwrap();
            if depth == 0 {
                out.push(ch);
            }
            rest = &rest[ch.len_utf8()..];
        }
    }
    (out, removed)
}

const DROPPED_NAMESPACES: [(&str, &str); 3] = [
    ("file:", "file_link"),
    ("image:", "file_link"),
    ("category:", "category_link"),
];

/// Unwraps `[[target|label]]` to `label` and `[[target]]` to `target`; drops
/// file and category links, whose captions may hold nested links.
fn unwrap_links(text: &str, report: &mut MarkupReport) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("[[") {
        out.push_str(&rest[..start]);
        let body = &rest[start + 2..];
        let mut depth = 1;
        let mut i = 0;
        while i < body.len() && depth > 0 {
            if body[i..].starts_with("[[") {
                depth += 1;
                i += 2;
            } else if body[i..].starts_with("]]") {
                depth -= 1;
                i += 2;
            } else {
                i += body[i..].chars().next().unwrap().len_utf8();
            }
        }
        let inner = if depth == 0 { &body[..i - 2] } else { body };
        rest = if depth == 0 { &body[i..] } else { "" };

        let lower = inner.trim_start().to_lowercase();
        if let Some((_, key)) = DROPPED_NAMESPACES
            .iter()
            .find(|(ns, _)| lower.starts_with(ns))
        {
            bump(report, key, 1);
            continue;
        }
        bump(report, "wikilink", 1);
        let inner = inner.trim_start_matches(':');
        let surface = match inner.split_once('|') {
            Some((_, label)) => label,
            None => inner,
        };
        out.push_str(surface);
    }
    out.push_str(rest);
    out
}

fn decode_entities(text: &str, report: &mut MarkupReport) -> String {
    const ENTITIES: [(&str, &str); 7] = [
        ("&nbsp;", " "),
        ("&ndash;", "–"),
        ("&mdash;", "—"),
        ("&lt;", "<"),
        ("&gt;", ">"),
        ("&quot;", "\""),
        ("&amp;", "&"),
    ];
    let mut out = text.to_string();
    for (entity, ch) in ENTITIES {
        let n = out.matches(entity).count();
        if n > 0 {
            bump(report, "entity", n);
            out = out.replace(entity, ch);
        }
    }
    out
}

/// Reduces wikitext to plain paragraphs separated by blank lines.
pub fn strip_markup(wikitext: &str) -> (String, MarkupReport) {
    let p = patterns();
    let mut report = MarkupReport::new();
    let mut text = replace_counting(&p.comment, wikitext, "", &mut report, "comment");
    text = replace_counting(&p.ref_self, &text, "", &mut report, "ref");
    text = replace_counting(&p.ref_pair, &text, "", &mut report, "ref");

    let (t, n) = remove_nested(&text, "{|", "|}");
    bump(&mut report, "table", n);
    let (t, n) = remove_nested(&t, "{{", "}}");
    bump(&mut report, "template", n);
    text = unwrap_links(&t, &mut report);

    bump(
        &mut report,
        "external_link",
        p.external.find_iter(&text).count(),
    );
    text = p.external.replace_all(&text, "$1").into_owned();
    text = replace_counting(&p.emphasis, &text, "", &mut report, "emphasis");
    text = replace_counting(&p.heading, &text, "\n", &mut report, "heading");
    text = replace_counting(&p.rule, &text, "\n", &mut report, "horizontal_rule");
    text = replace_counting(&p.list, &text, "", &mut report, "list_marker");
    text = replace_counting(&p.magic, &text, "", &mut report, "magic_word");
    text = replace_counting(&p.tag, &text, "", &mut report, "html_tag");
    text = decode_entities(&text, &mut report);

    let lines: Vec<String> = text
        .lines()
        .map(|l| p.spaces.replace_all(l, " ").trim().to_string())
        .collect();
    let joined = lines.join("\n");
    let collapsed = p.blank_runs.replace_all(&joined, "\n\n");
    (collapsed.trim().to_string(), report)
}

/// Removes `/* section */` markers MediaWiki adds to edit summaries.
pub fn clean_comment(comment: &str) -> String {
    let stripped = patterns().section.replace_all(comment, " ");
    patterns()
        .spaces
        .replace_all(stripped.trim(), " ")
        .into_owned()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub timestamp: String,
    pub comment: String,
    /// Plain text after markup stripping.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub page_id: String,
    pub title: String,
    /// Ascending by timestamp, then revision id.
    pub revisions: Vec<Revision>,
}

/// Orders purely numeric ids by value and everything else as text, numbers
/// first.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[derive(Default)]
struct RevisionDraft {
    id: String,
    parent_id: Option<String>,
    timestamp: String,
    comment: String,
    text: String,
}

#[derive(Default)]
struct PageDraft {
    id: String,
    title: String,
    revisions: Vec<RevisionDraft>,
}

/// Streaming reader over a pages-meta-history export. Yields one page at a
/// time; a structural XML error ends the stream with [`WikiError::Xml`].
pub struct HistoryReader<R: BufRead> {
    xml: Reader<R>,
    buf: Vec<u8>,
    stack: Vec<String>,
    report: MarkupReport,
    done: bool,
}

impl HistoryReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, WikiError> {
        let file = File::open(path).map_err(|source| WikiError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::new(BufReader::new(file)))
    }
}

impl<R: BufRead> HistoryReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            xml: Reader::from_reader(reader),
            buf: Vec::new(),
            stack: Vec::new(),
            report: MarkupReport::new(),
            done: false,
        }
    }

    /// Stripped-markup counts for every page yielded so far.
    pub fn report(&self) -> &MarkupReport {
        &self.report
    }

    fn error(&self, message: impl Into<String>) -> WikiError {
        WikiError::Xml {
            offset: self.xml.buffer_position(),
            message: message.into(),
        }
    }

    fn finish_page(&mut self, draft: PageDraft) -> Page {
        let mut revisions: Vec<Revision> = draft
            .revisions
            .into_iter()
            .map(|r| {
                let (text, report) = strip_markup(&r.text);
                merge(&mut self.report, &report);
                Revision {
                    id: r.id.trim().to_string(),
                    parent_id: r
                        .parent_id
                        .map(|p| p.trim().to_string())
                        .filter(|p| !p.is_empty()),
                    timestamp: r.timestamp.trim().to_string(),
                    comment: r.comment,
                    text,
                }
            })
            .collect();
        revisions.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| compare_ids(&a.id, &b.id))
        });
        Page {
            page_id: draft.id.trim().to_string(),
            title: draft.title.trim().to_string(),
            revisions,
        }
    }

    fn next_page(&mut self) -> Result<Option<Page>, WikiError> {
        let mut page: Option<PageDraft> = None;
        loop {
            self.buf.clear();
            let event = match self.xml.read_event_into(&mut self.buf) {
                Ok(e) => e,
                Err(e) => {
                    return Err(WikiError::Xml {
                        offset: self.xml.error_position(),
                        message: e.to_string(),
                    })
                }
            };
            match event {
                Event::Start(e) => {
                    let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                    match name.as_str() {
                        "page" => page = Some(PageDraft::default()),
                        "revision" => {
                            if let Some(p) = page.as_mut() {
                                p.revisions.push(RevisionDraft::default());
                            }
                        }
                        _ => {}
                    }
                    self.stack.push(name);
                }
                Event::End(_) => {
                    let name = self.stack.pop().unwrap_or_default();
                    if name == "page" {
                        if let Some(draft) = page.take() {
                            return Ok(Some(self.finish_page(draft)));
                        }
                    }
                }
                Event::Text(t) => {
                    let text = t.unescape().map(|c| c.into_owned());
                    let text = text.map_err(|e| self.error(e.to_string()))?;
                    route(&self.stack, &mut page, &text);
                }
                Event::CData(c) => {
                    let text = String::from_utf8_lossy(&c.into_inner()).into_owned();
                    route(&self.stack, &mut page, &text);
                }
                Event::Eof => {
                    if !self.stack.is_empty() {
                        return Err(self.error(format!(
                            "unexpected end of file inside <{}>",
                            self.stack.join("><")
                        )));
                    }
                    return Ok(None);
                }
                _ => {}
            }
        }
    }
}

/// Appends element text to the page field addressed by the innermost two
/// open elements.
fn route(stack: &[String], page: &mut Option<PageDraft>, text: &str) {
    let Some(page) = page.as_mut() else { return };
    let n = stack.len();
    let (Some(field), Some(parent)) = (stack.last(), n.checked_sub(2).and_then(|i| stack.get(i)))
    else {
        return;
    };
    match (parent.as_str(), field.as_str()) {
        ("page", "id") => page.id.push_str(text),
        ("page", "title") => page.title.push_str(text),
        ("revision", f) => {
            let Some(rev) = page.revisions.last_mut() else {
                return;
            };
            match f {
                "id" => rev.id.push_str(text),
                "parentid" => rev.parent_id.get_or_insert_with(String::new).push_str(text),
                "timestamp" => rev.timestamp.push_str(text),
                "comment" => rev.comment.push_str(text),
                "text" => rev.text.push_str(text),
                _ => {}
            }
        }
        _ => {}
    }
}

impl<R: BufRead> Iterator for HistoryReader<R> {
    type Item = Result<Page, WikiError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_page() {
            Ok(Some(p)) => Some(Ok(p)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// One maximal run of changed paragraphs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockEdit {
    pub source_block: String,
    pub target_block: String,
}

fn paragraphs(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut end = 0;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let content = line.trim_end_matches(['\n', '\r']);
        if content.trim().is_empty() {
            if let Some(s) = start.take() {
                out.push(text[s..end].trim());
            }
        } else {
            start.get_or_insert(offset);
            end = offset + content.len();
        }
        offset += line.len();
    }
    if let Some(s) = start {
        out.push(text[s..end].trim());
    }
    out
}

fn block_key(block: &str) -> String {
    block.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Aligns blank-line-delimited paragraphs by longest common subsequence of
/// their whitespace-normalized forms and returns each maximal run of
/// unmatched paragraphs as one edit.
pub fn diff_revisions(before: &str, after: &str) -> Vec<BlockEdit> {
    let a = paragraphs(before);
    let b = paragraphs(after);
    let ka: Vec<String> = a.iter().map(|p| block_key(p)).collect();
    let kb: Vec<String> = b.iter().map(|p| block_key(p)).collect();

    let mut lo = 0;
    while lo < ka.len() && lo < kb.len() && ka[lo] == kb[lo] {
        lo += 1;
    }
    let (mut hi_a, mut hi_b) = (ka.len(), kb.len());
    while hi_a > lo && hi_b > lo && ka[hi_a - 1] == kb[hi_b - 1] {
        hi_a -= 1;
        hi_b -= 1;
    }
    let (ma, mb) = (&ka[lo..hi_a], &kb[lo..hi_b]);

    // Suffix LCS table over the differing middle.
    let w = mb.len() + 1;
    let mut table = vec![0u32; (ma.len() + 1) * w];
    for i in (0..ma.len()).rev() {
        for j in (0..mb.len()).rev() {
            table[i * w + j] = if ma[i] == mb[j] {
                table[(i + 1) * w + j + 1] + 1
            } else {
                table[(i + 1) * w + j].max(table[i * w + j + 1])
            };
        }
    }

    let mut edits = Vec::new();
    let (mut i, mut j) = (0, 0);
    let (mut run_a, mut run_b): (Vec<&str>, Vec<&str>) = (Vec::new(), Vec::new());
    let mut flush = |run_a: &mut Vec<&str>, run_b: &mut Vec<&str>| {
        if run_a.is_empty() && run_b.is_empty() {
            return;
        }
        let edit = BlockEdit {
            source_block: run_a.join("\n\n"),
            target_block: run_b.join("\n\n"),
        };
        run_a.clear();
        run_b.clear();
        if edit.source_block != edit.target_block {
            edits.push(edit);
        }
    };
    while i < ma.len() || j < mb.len() {
        if i < ma.len() && j < mb.len() && ma[i] == mb[j] {
            flush(&mut run_a, &mut run_b);
            i += 1;
            j += 1;
        } else if j == mb.len() || (i < ma.len() && table[(i + 1) * w + j] >= table[i * w + j + 1])
        {
            run_a.push(a[lo + i]);
            i += 1;
        } else {
            run_b.push(b[lo + j]);
            j += 1;
        }
    }
    flush(&mut run_a, &mut run_b);
    edits
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionRecord {
    pub page_id: String,
    pub rev_id: String,
    pub parent_rev_id: String,
    pub source_block: String,
    pub target_block: String,
    pub comment: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FilterRule {
    None,
    LowQualityKeyword,
    FormatOnlyKeyword,
    TooFewSentences,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub kept: bool,
    pub rule: FilterRule,
    pub matched_term: Option<String>,
}

impl FilterDecision {
    fn keep() -> Self {
        Self {
            kept: true,
            rule: FilterRule::None,
            matched_term: None,
        }
    }

    fn drop(rule: FilterRule, term: Option<&str>) -> Self {
        Self {
            kept: false,
            rule,
            matched_term: term.map(str::to_string),
        }
    }
}

/// Minimum source sentences for a record to survive filtering.
pub const MIN_SOURCE_SENTENCES: usize = 3;

/// First failing rule wins: low-quality summary, format-only summary, then
/// too few source sentences.
pub fn filter_revision(r: &RevisionRecord, lexicon: &Lexicon) -> FilterDecision {
    let comment = words(&clean_comment(&r.comment));
    if let Some(term) = lexicon.low_quality.find_in_words(&comment) {
        return FilterDecision::drop(FilterRule::LowQualityKeyword, Some(term));
    }
    if let Some(term) = lexicon.format_only.find_in_words(&comment) {
        return FilterDecision::drop(FilterRule::FormatOnlyKeyword, Some(term));
    }
    if split_sentences(&r.source_block).len() < MIN_SOURCE_SENTENCES {
        return FilterDecision::drop(FilterRule::TooFewSentences, None);
    }
    FilterDecision::keep()
}

/// True when a content word of the summary is among the tokens the edit
/// added or removed.
pub fn is_detailed_instruction(
    comment: &str,
    source: &str,
    target: &str,
    stopwords: &WordSet,
) -> bool {
    let comment_words = content_words(&tokenize(&clean_comment(comment)), stopwords);
    if comment_words.is_empty() {
        return false;
    }
    let mut balance: HashMap<String, i64> = HashMap::new();
    for t in tokenize(source).into_tokens() {
        *balance.entry(t).or_insert(0) += 1;
    }
    for t in tokenize(target).into_tokens() {
        *balance.entry(t).or_insert(0) -= 1;
    }
    comment_words
        .iter()
        .any(|w| balance.get(w).is_some_and(|&n| n != 0))
}

pub fn starts_with_edit_verb(comment: &str, edit_verbs: &KeywordList) -> bool {
    words(&clean_comment(comment))
        .first()
        .is_some_and(|w| edit_verbs.contains_word(w))
}

/// Block edits between each revision and its predecessor in time order.
pub fn page_records(page: &Page) -> Vec<RevisionRecord> {
    page.revisions
        .windows(2)
        .flat_map(|pair| {
            let (prev, rev) = (&pair[0], &pair[1]);
            diff_revisions(&prev.text, &rev.text)
                .into_iter()
                .map(move |edit| RevisionRecord {
                    page_id: page.page_id.clone(),
                    rev_id: rev.id.clone(),
                    parent_rev_id: prev.id.clone(),
                    source_block: edit.source_block,
                    target_block: edit.target_block,
                    comment: clean_comment(&rev.comment),
                    timestamp: rev.timestamp.clone(),
                })
        })
        .collect()
}

/// Summary of one extraction run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub pages: usize,
    pub revisions: usize,
    pub blocks: usize,
    pub kept: usize,
    pub dropped: BTreeMap<FilterRule, usize>,
    pub instructions: usize,
    pub markup: MarkupReport,
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    /// Kept records sorted by (page_id, rev_id).
    pub records: Vec<RevisionRecord>,
    /// Kept records whose summary is verb-initial and detailed.
    pub instructions: Vec<RewriteRecord>,
    pub report: ExtractionReport,
}

fn instruction_record(r: &RevisionRecord, block: usize) -> RewriteRecord {
    let mut meta = BTreeMap::new();
    meta.insert("page_id".to_string(), r.page_id.clone());
    meta.insert("rev_id".to_string(), r.rev_id.clone());
    meta.insert("origin".to_string(), "wiki".to_string());
    RewriteRecord {
        id: format!("wiki-{}-{}-{}", r.page_id, r.rev_id, block),
        instruction: r.comment.clone(),
        source: r.source_block.clone(),
        target: Some(r.target_block.clone()),
        prediction: None,
        meta,
    }
}

const PAGE_CHUNK: usize = 64;

/// Runs the whole mining pipeline over a history stream. Pages are
/// processed in parallel chunks on the current rayon pool; the output order
/// depends only on the input.
pub fn extract<R: BufRead>(
    mut reader: HistoryReader<R>,
    lexicon: &Lexicon,
) -> Result<Extraction, WikiError> {
    let mut report = ExtractionReport::default();
    let mut scored: Vec<(RevisionRecord, FilterDecision)> = Vec::new();
    loop {
        let mut chunk = Vec::with_capacity(PAGE_CHUNK);
        for page in reader.by_ref().take(PAGE_CHUNK) {
            chunk.push(page?);
        }
        if chunk.is_empty() {
            break;
        }
        report.pages += chunk.len();
        report.revisions += chunk.iter().map(|p| p.revisions.len()).sum::<usize>();
        let results: Vec<Vec<(RevisionRecord, FilterDecision)>> = chunk
            .par_iter()
            .map(|page| {
                page_records(page)
                    .into_iter()
                    .map(|r| {
                        let d = filter_revision(&r, lexicon);
                        (r, d)
                    })
                    .collect()
            })
            .collect();
        scored.extend(results.into_iter().flatten());
    }
    report.markup = reader.report().clone();
    report.blocks = scored.len();

    // Stable: block order within one revision is preserved.
    scored.sort_by(|(a, _), (b, _)| {
        compare_ids(&a.page_id, &b.page_id).then_with(|| compare_ids(&a.rev_id, &b.rev_id))
    });

    let mut records = Vec::new();
    let mut instructions = Vec::new();
    let mut block_index: (String, String, usize) = Default::default();
    for (r, d) in scored {
        if (block_index.0.as_str(), block_index.1.as_str())
            == (r.page_id.as_str(), r.rev_id.as_str())
        {
            block_index.2 += 1;
        } else {
            block_index = (r.page_id.clone(), r.rev_id.clone(), 0);
        }
        if !d.kept {
            *report.dropped.entry(d.rule).or_insert(0) += 1;
            continue;
        }
        if starts_with_edit_verb(&r.comment, &lexicon.edit_verbs)
            && is_detailed_instruction(
                &r.comment,
                &r.source_block,
                &r.target_block,
                &lexicon.stopwords,
            )
        {
            instructions.push(instruction_record(&r, block_index.2));
        }
        records.push(r);
    }
    report.kept = records.len();
    report.instructions = instructions.len();
    Ok(Extraction {
        records,
        instructions,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dump(pages: &str) -> String {
        format!("<mediawiki xmlns=\"http://www.mediawiki.org/xml/export-0.10/\">\n{pages}\n</mediawiki>")
    }

    fn rev(id: u32, ts: &str, comment: &str, text: &str) -> String {
        format!(
            "<revision><id>{id}</id><parentid>{}</parentid><timestamp>{ts}</timestamp>\
             <contributor><username>U</username><id>99</id></contributor>\
             <comment>{comment}</comment><text bytes=\"1\" xml:space=\"preserve\">{text}</text></revision>",
            id.saturating_sub(1)
        )
    }

    fn parse(xml: &str) -> Vec<Page> {
        HistoryReader::new(xml.as_bytes())
            .collect::<Result<_, _>>()
            .unwrap()
    }

    #[test]
    fn pages_and_ordered_revisions() {
        let xml = dump(&format!(
            "<page><title>T</title><ns>0</ns><id>7</id>{}{}{}</page>",
            rev(3, "2020-03-01T00:00:00Z", "c", "three"),
            rev(1, "2020-01-01T00:00:00Z", "a", "one"),
            rev(2, "2020-02-01T00:00:00Z", "b", "two &amp; more"),
        ));
        let pages = parse(&xml);
        assert_eq!(pages.len(), 1);
        assert_eq!(pages[0].page_id, "7");
        let ids: Vec<&str> = pages[0].revisions.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["1", "2", "3"]);
        assert_eq!(pages[0].revisions[1].text, "two & more");
    }

    #[test]
    fn malformed_xml_reports_offset() {
        let xml = "<mediawiki><page><title>T</titl></page></mediawiki>";
        let err = HistoryReader::new(xml.as_bytes())
            .find_map(Result::err)
            .unwrap();
        match err {
            WikiError::Xml { offset, .. } => assert!(offset > 0),
            other => panic!("{other}"),
        }
        let truncated = "<mediawiki><page><title>T</title>";
        assert!(HistoryReader::new(truncated.as_bytes()).any(|r| r.is_err()));
    }

    #[test]
    fn link_unwrapping() {
        assert_eq!(
            strip_markup("We saw [[Paris|the city]].").0,
            "We saw the city."
        );
        assert_eq!(strip_markup("In [[Paris]]s.").0, "In Pariss.");
        let (text, report) = strip_markup("A [[File:x.png|thumb|A [[cat]] here]] b [[Category:Z]]");
        assert_eq!(text, "A b");
        assert_eq!(report["file_link"], 1);
        assert_eq!(report["category_link"], 1);
    }

    #[test]
    fn markup_constructs() {
        let src = "== History ==\n'''Bold''' text{{cite|a={{b}}}}.<ref name=\"x\">R</ref><ref name=y/> \
                   See [http://e.org the site].<!-- hidden -->\n\n* item <span>one</span>\n{|\n| cell\n|}\n__NOTOC__";
        let (text, report) = strip_markup(src);
        assert_eq!(text, "Bold text. See the site.\n\nitem one");
        for (k, n) in [
            ("heading", 1),
            ("emphasis", 2),
            ("template", 1),
            ("ref", 2),
            ("external_link", 1),
            ("comment", 1),
            ("list_marker", 1),
            ("html_tag", 2),
            ("table", 1),
            ("magic_word", 1),
        ] {
            assert_eq!(report.get(k), Some(&n), "{k}");
        }
    }

    #[test]
    fn diff_cases() {
        assert!(diff_revisions("a\n\nb", "a\n\nb").is_empty());
        let before = "P1.\n\nP2.\n\nP3.\n\nP4.\n\nP5.";
        let after = "P1.\n\nP2.\n\nP3 changed.\n\nP4.\n\nP5.";
        assert_eq!(
            diff_revisions(before, after),
            vec![BlockEdit {
                source_block: "P3.".into(),
                target_block: "P3 changed.".into()
            }]
        );
        let inserted = diff_revisions("A.\n\nB.", "A.\n\nNew.\n\nB.");
        assert_eq!(
            inserted,
            vec![BlockEdit {
                source_block: String::new(),
                target_block: "New.".into()
            }]
        );
        // Whitespace-only reflow is not an edit.
        assert!(diff_revisions("a  b\nc", "a b c").is_empty());
    }

    #[test]
    fn diff_groups_adjacent_changes() {
        let edits = diff_revisions("A\n\nB\n\nC\n\nD", "A\n\nB2\n\nC2\n\nD\n\nE");
        assert_eq!(edits.len(), 2);
        assert_eq!(edits[0].source_block, "B\n\nC");
        assert_eq!(edits[0].target_block, "B2\n\nC2");
        assert_eq!(edits[1].source_block, "");
    }

    fn record(comment: &str, source: &str) -> RevisionRecord {
        RevisionRecord {
            page_id: "1".into(),
            rev_id: "2".into(),
            parent_rev_id: "1".into(),
            source_block: source.into(),
            target_block: "changed".into(),
            comment: comment.into(),
            timestamp: String::new(),
        }
    }

    #[test]
    fn filter_rules_in_order() {
        let lex = Lexicon::default();
        let three = "One here. Two here. Three here.";
        let d = filter_revision(&record("revert vandalism by IP", three), &lex);
        assert_eq!(
            (d.kept, d.rule, d.matched_term.as_deref()),
            (false, FilterRule::LowQualityKeyword, Some("revert*"))
        );
        let d = filter_revision(&record("fixed bold facing", three), &lex);
        assert_eq!(d.rule, FilterRule::FormatOnlyKeyword);
        let d = filter_revision(&record("clarify", "One here. Two here."), &lex);
        assert_eq!(d.rule, FilterRule::TooFewSentences);
        let d = filter_revision(&record("/* Links */ clarify", three), &lex);
        assert!(d.kept);
        assert_eq!(d.rule, FilterRule::None);
    }

    #[test]
    fn detail_heuristic() {
        let sw = Lexicon::default().stopwords;
        assert!(is_detailed_instruction(
            "fix spelling of receive",
            "I recieve mail.",
            "I receive mail.",
            &sw
        ));
        assert!(!is_detailed_instruction(
            "copyedit",
            "The cat sat.",
            "The dog sat.",
            &sw
        ));
        assert!(!is_detailed_instruction("", "a", "b", &sw));
    }

    #[test]
    fn edit_verbs() {
        let verbs = Lexicon::default().edit_verbs;
        assert!(starts_with_edit_verb(
            "make the text easier to read",
            &verbs
        ));
        assert!(starts_with_edit_verb(
            "/* Early life */ expand section",
            &verbs
        ));
        assert!(!starts_with_edit_verb("grammar", &verbs));
        assert!(!starts_with_edit_verb("", &verbs));
    }

    #[test]
    fn id_ordering() {
        assert_eq!(compare_ids("9", "10"), Ordering::Less);
        assert_eq!(compare_ids("10", "a"), Ordering::Less);
        assert_eq!(compare_ids("b", "a"), Ordering::Greater);
    }

    #[test]
    fn extraction_pipeline() {
        let base = "Alpha is first. Beta is second. Gamma is third.\n\nOther paragraph stays.";
        let edited =
            "Alpha is first. Beta is the second one. Gamma is third.\n\nOther paragraph stays.";
        let xml = dump(&format!(
            "<page><title>T</title><id>5</id>{}{}{}</page>",
            rev(10, "2021-01-01T00:00:00Z", "create", base),
            rev(
                11,
                "2021-01-02T00:00:00Z",
                "/* Intro */ clarify which one is second",
                edited
            ),
            rev(12, "2021-01-03T00:00:00Z", "rv vandalism", base),
        ));
        let out = extract(HistoryReader::new(xml.as_bytes()), &Lexicon::default()).unwrap();
        assert_eq!(out.report.pages, 1);
        assert_eq!(out.report.revisions, 3);
        assert_eq!(out.report.blocks, 2);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].rev_id, "11");
        assert_eq!(out.records[0].parent_rev_id, "10");
        assert_eq!(out.records[0].comment, "clarify which one is second");
        assert_eq!(out.report.dropped[&FilterRule::LowQualityKeyword], 1);
        assert_eq!(out.instructions.len(), 1);
        assert_eq!(out.instructions[0].id, "wiki-5-11-0");
    }
}
