//! Corpus ingest: entities, labelled link annotations and mention groups.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{lemma_key, Body, TokenSpan};

pub type EntityId = u64;

/// Default number of words each side of an annotation must exceed.
pub const N_CONTEXT: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub title: String,
    pub body: Body,
    pub is_redirect: bool,
    pub redirect_target: Option<EntityId>,
}

/// Where an annotation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum ExtractionFlag {
    /// An original hyperlink.
    Link = 0,
    /// An unlinked phrase matched against one of the article's link pairs.
    Extended = 1,
    /// An unlinked occurrence of the containing article's own title.
    SelfTitle = 2,
}

impl ExtractionFlag {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub containing_id: EntityId,
    pub mention: String,
    pub sense: EntityId,
    pub context: Vec<String>,
    pub extraction_flag: ExtractionFlag,
    pub position: TokenSpan,
}

impl Annotation {
    /// Location key used when comparing gold and predicted annotations.
    pub fn location(&self) -> (EntityId, TokenSpan) {
        (self.containing_id, self.position)
    }
}

/// A redirect title with its transitively resolved target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Redirect {
    pub id: EntityId,
    pub title: String,
    pub target: EntityId,
}

/// The non-redirect entities of a corpus plus its resolved redirects.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub entities: BTreeMap<EntityId, Entity>,
    pub redirects: Vec<Redirect>,
}

impl Corpus {
    pub fn get(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(&id)
    }

    pub fn title(&self, id: EntityId) -> Option<&str> {
        self.entities.get(&id).map(|e| e.title.as_str())
    }

    /// Lemmatized redirect title → resolved target. On collisions the
    /// lowest redirect id wins.
    pub fn redirect_map(&self) -> BTreeMap<String, EntityId> {
        let mut out = BTreeMap::new();
        for r in &self.redirects {
            let key = lemma_key(&r.title);
            if !key.is_empty() {
                out.entry(key).or_insert(r.target);
            }
        }
        out
    }
}

/// One line of the JSON-lines corpus input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawArticle {
    pub id: EntityId,
    pub title: String,
    #[serde(default)]
    pub redirect_to: Option<String>,
    #[serde(default)]
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub errors: Vec<LineError>,
    pub unknown_targets: usize,
    pub empty_links: usize,
}

#[derive(Debug, Clone)]
pub struct ParsedCorpus {
    pub corpus: Corpus,
    pub annotations: Vec<Annotation>,
    pub report: ParseReport,
}

/// Canonical form used to match link targets to titles: underscores become
/// spaces, whitespace collapses and the first letter is upper-cased.
pub fn normalize_title(title: &str) -> String {
    let t = title.replace('_', " ");
    let mut words = t.split_whitespace();
    let mut out = String::new();
    if let Some(first) = words.next() {
        let mut cs = first.chars();
        if let Some(c) = cs.next() {
            out.extend(c.to_uppercase());
            out.push_str(cs.as_str());
        }
        for w in words {
            out.push(' ');
            out.push_str(w);
        }
    }
    out
}

/// An inline link found in a raw body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLink {
    pub target: String,
    /// Byte range of the surface text inside the stripped text.
    pub start: usize,
    pub end: usize,
}

/// Removes `[[Target|surface]]` / `[[Target]]` markup, returning the plain
/// text and the surface ranges of every link.
pub fn strip_links(raw: &str) -> (String, Vec<RawLink>) {
    let mut text = String::with_capacity(raw.len());
    let mut links = Vec::new();
    let mut rest = raw;
    while let Some(open) = rest.find("[[") {
        let after = &rest[open + 2..];
        let Some(close) = after.find("]]") else {
            break;
        };
        let inner = &after[..close];
        if inner.contains("[[") {
            // unbalanced opener: keep it as text and continue after it
            text.push_str(&rest[..open + 2]);
            rest = after;
            continue;
        }
        text.push_str(&rest[..open]);
        let (target, surface) = match inner.split_once('|') {
            Some((t, s)) => (t, s),
            None => (inner, inner),
        };
        let target = target.split('#').next().unwrap_or("").trim();
        let start = text.len();
        text.push_str(surface);
        links.push(RawLink {
            target: target.to_string(),
            start,
            end: text.len(),
        });
        rest = &after[close + 2..];
    }
    text.push_str(rest);
    (text, links)
}

struct ParsedLine {
    line: usize,
    raw: RawArticle,
    body: Body,
    links: Vec<(String, TokenSpan)>,
    empty_links: usize,
}

fn parse_line(line_no: usize, line: &str) -> std::result::Result<ParsedLine, LineError> {
    let raw: RawArticle = serde_json::from_str(line).map_err(|e| LineError {
        line: line_no,
        message: e.to_string(),
    })?;
    if raw.title.trim().is_empty() {
        return Err(LineError {
            line: line_no,
            message: "empty title".into(),
        });
    }
    let (plain, raw_links) = strip_links(&raw.body);
    let marks: Vec<(usize, usize)> = raw_links.iter().map(|l| (l.start, l.end)).collect();
    let (body, spans) = Body::from_marked_text(&plain, &marks);
    let mut links = Vec::new();
    let mut empty_links = 0;
    for (l, span) in raw_links.into_iter().zip(spans) {
        match span {
            Some(span) => links.push((l.target, span)),
            None => empty_links += 1,
        }
    }
    Ok(ParsedLine {
        line: line_no,
        raw,
        body,
        links,
        empty_links,
    })
}

/// Follows redirects from `start` to a non-redirect entity.
fn resolve(
    start: EntityId,
    redirect_of: &HashMap<EntityId, Option<EntityId>>,
    titles: &HashMap<EntityId, String>,
) -> Result<Option<EntityId>> {
    let mut cur = start;
    let mut path = vec![cur];
    while let Some(next) = redirect_of.get(&cur) {
        let Some(next) = *next else {
            return Ok(None);
        };
        if let Some(pos) = path.iter().position(|&p| p == next) {
            let mut cycle: Vec<String> = path[pos..]
                .iter()
                .map(|id| titles.get(id).cloned().unwrap_or_else(|| id.to_string()))
                .collect();
            cycle.push(titles.get(&next).cloned().unwrap_or_default());
            return Err(Error::RedirectCycle(cycle));
        }
        path.push(next);
        cur = next;
    }
    Ok(Some(cur))
}

/// Parses a JSON-lines corpus.
///
/// Malformed lines are reported with their line number and skipped; links
/// to unknown titles are counted and dropped. A redirect cycle fails the
/// whole corpus.
pub fn parse_corpus<R: BufRead>(reader: R, n_context: usize) -> Result<ParsedCorpus> {
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }
    let results: Vec<_> = lines.par_iter().map(|(n, l)| parse_line(*n, l)).collect();

    let mut report = ParseReport::default();
    let mut parsed: Vec<ParsedLine> = Vec::with_capacity(results.len());
    let mut seen = HashMap::new();
    for r in results {
        match r {
            Ok(p) => {
                if let Some(prev) = seen.insert(p.raw.id, p.line) {
                    report.errors.push(LineError {
                        line: p.line,
                        message: format!("duplicate id {} (first on line {prev})", p.raw.id),
                    });
                    seen.insert(p.raw.id, prev);
                    continue;
                }
                parsed.push(p);
            }
            Err(e) => report.errors.push(e),
        }
    }
    parsed.sort_by_key(|p| p.raw.id);

    let mut by_title: HashMap<String, EntityId> = HashMap::new();
    let mut titles = HashMap::new();
    for p in &parsed {
        by_title.entry(normalize_title(&p.raw.title)).or_insert(p.raw.id);
        titles.insert(p.raw.id, p.raw.title.clone());
    }
    let mut redirect_of: HashMap<EntityId, Option<EntityId>> = HashMap::new();
    for p in &parsed {
        if let Some(target) = &p.raw.redirect_to {
            let t = by_title.get(&normalize_title(target)).copied();
            if t.is_none() {
                warn!("redirect {:?} points to unknown title {target:?}", p.raw.title);
            }
            redirect_of.insert(p.raw.id, t);
        }
    }
    let mut resolved: HashMap<EntityId, Option<EntityId>> = HashMap::new();
    for p in &parsed {
        resolved.insert(p.raw.id, resolve(p.raw.id, &redirect_of, &titles)?);
    }

    let mut corpus = Corpus::default();
    let mut annotations = Vec::new();
    for p in parsed {
        report.empty_links += p.empty_links;
        let id = p.raw.id;
        if p.raw.redirect_to.is_some() {
            if let Some(Some(target)) = resolved.get(&id) {
                corpus.redirects.push(Redirect {
                    id,
                    title: p.raw.title.clone(),
                    target: *target,
                });
            }
            continue;
        }
        for (target, span) in &p.links {
            let sense = by_title
                .get(&normalize_title(target))
                .and_then(|t| resolved.get(t).copied().flatten());
            let Some(sense) = sense else {
                report.unknown_targets += 1;
                continue;
            };
            annotations.push(Annotation {
                containing_id: id,
                mention: p.body.tokens[span.start..span.end()].join(" "),
                sense,
                context: extract_context(&p.body, *span, n_context),
                extraction_flag: ExtractionFlag::Link,
                position: *span,
            });
        }
        corpus.entities.insert(
            id,
            Entity {
                id,
                title: p.raw.title,
                body: p.body,
                is_redirect: false,
                redirect_target: None,
            },
        );
    }
    if report.unknown_targets > 0 {
        warn!("dropped {} links to unknown titles", report.unknown_targets);
    }
    for e in &report.errors {
        warn!("line {}: {}", e.line, e.message);
    }
    Ok(ParsedCorpus {
        corpus,
        annotations,
        report,
    })
}

/// Whole sentences around `span`: each side grows one sentence at a time
/// until its word count exceeds `n_context` or the body ends. The sentence
/// holding the annotation is always included and counts toward neither side.
pub fn extract_context(body: &Body, span: TokenSpan, n_context: usize) -> Vec<String> {
    if body.is_empty() {
        return Vec::new();
    }
    let first = body.sentence_of(span.start);
    let last = body.sentence_of(span.end().saturating_sub(1).max(span.start));

    let mut left = first;
    let mut count = 0;
    while count <= n_context && left > 0 {
        left -= 1;
        let (s, e) = body.sentence_range(left);
        count += e - s;
    }
    let mut right = last;
    count = 0;
    while count <= n_context && right + 1 < body.sentence_count() {
        right += 1;
        let (s, e) = body.sentence_range(right);
        count += e - s;
    }
    let start = body.sentence_range(left).0;
    let end = body.sentence_range(right).1;
    body.tokens[start..end].to_vec()
}

/// All annotations sharing one lemmatized mention with more than one sense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionGroup {
    pub mention: String,
    /// Distinct senses in ascending id order; class `i` is `candidates[i]`.
    pub candidates: Vec<EntityId>,
    pub annotations: Vec<Annotation>,
}

impl MentionGroup {
    pub fn class_of(&self, sense: EntityId) -> Option<usize> {
        self.candidates.binary_search(&sense).ok()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Grouping {
    /// Ambiguous mentions, sorted by mention.
    pub groups: Vec<MentionGroup>,
    /// Mentions with exactly one observed sense.
    pub direct: BTreeMap<String, EntityId>,
}

pub fn group_by_mention(annotations: impl IntoIterator<Item = Annotation>) -> Grouping {
    let mut by_mention: BTreeMap<String, Vec<Annotation>> = BTreeMap::new();
    for a in annotations {
        by_mention.entry(a.mention.clone()).or_default().push(a);
    }
    let mut out = Grouping::default();
    for (mention, anns) in by_mention {
        let mut candidates: Vec<EntityId> = anns.iter().map(|a| a.sense).collect();
        candidates.sort_unstable();
        candidates.dedup();
        if candidates.len() == 1 {
            out.direct.insert(mention, candidates[0]);
        } else {
            out.groups.push(MentionGroup {
                mention,
                candidates,
                annotations: anns,
            });
        }
    }
    out
}
