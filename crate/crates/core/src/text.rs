//! Tokenization, lemmatization and sentence segmentation.
//!
//! Everything downstream (mentions, bodies, contexts) is compared on the
//! output of a [`Lemmatizer`], so the default implementation here is
//! deterministic and rule based: lower-casing, punctuation stripping and a
//! small table of suffix rules applied until a fixed point is reached.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

/// Turns raw text into normalized word tokens.
pub trait Lemmatizer: Send + Sync {
    fn name(&self) -> &'static str;

    /// Normalizes a single lower-cased alphanumeric word.
    fn lemma(&self, word: &str) -> String;

    fn lemmatize(&self, phrase: &str) -> Vec<String> {
        tokenize(phrase)
            .into_iter()
            .map(|w| self.lemma(&w))
            .filter(|w| !w.is_empty())
            .collect()
    }
}

/// Splits raw text into lower-cased alphanumeric words.
///
/// Possessive `'s` is dropped, other apostrophes are removed inside a word
/// and every other non-alphanumeric character is a separator.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase().filter(|l| l.is_alphanumeric()));
        } else if (c == '\'' || c == '\u{2019}') && !cur.is_empty() {
            let next = chars.get(i + 1).copied();
            let after = chars.get(i + 2).copied();
            if matches!(next, Some('s') | Some('S')) && !after.map(char::is_alphanumeric).unwrap_or(false) {
                i += 2;
                continue;
            }
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        i += 1;
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

const IRREGULAR: &[(&str, &str)] = &[
    ("am", "be"),
    ("are", "be"),
    ("is", "be"),
    ("was", "be"),
    ("were", "be"),
    ("been", "be"),
    ("being", "be"),
    ("has", "have"),
    ("had", "have"),
    ("having", "have"),
    ("does", "do"),
    ("did", "do"),
    ("done", "do"),
    ("went", "go"),
    ("gone", "go"),
    ("goes", "go"),
    ("ran", "run"),
    ("made", "make"),
    ("making", "make"),
    ("took", "take"),
    ("taken", "take"),
    ("taking", "take"),
    ("gave", "give"),
    ("given", "give"),
    ("came", "come"),
    ("coming", "come"),
    ("saw", "see"),
    ("seen", "see"),
    ("said", "say"),
    ("got", "get"),
    ("wrote", "write"),
    ("written", "write"),
    ("writing", "write"),
    ("began", "begin"),
    ("begun", "begin"),
    ("knew", "know"),
    ("known", "know"),
    ("found", "find"),
    ("built", "build"),
    ("left", "leave"),
    ("children", "child"),
    ("men", "man"),
    ("women", "woman"),
    ("people", "person"),
    ("mice", "mouse"),
    ("geese", "goose"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("data", "datum"),
    ("criteria", "criterion"),
    ("phenomena", "phenomenon"),
    ("lives", "life"),
    ("wives", "wife"),
    ("knives", "knife"),
    ("leaves", "leaf"),
    ("wolves", "wolf"),
];

/// Words that look inflected but are left alone.
const PROTECTED: &[&str] = &[
    "engineering",
    "building",
    "morning",
    "evening",
    "nothing",
    "something",
    "everything",
    "anything",
    "ceiling",
    "wedding",
    "meeting",
    "painting",
    "feeling",
    "during",
    "ring",
    "king",
    "thing",
    "spring",
    "string",
    "wing",
    "swing",
    "sing",
    "bring",
    "news",
    "series",
    "species",
    "physics",
    "mathematics",
    "economics",
    "politics",
    "always",
    "perhaps",
    "thus",
    "this",
    "his",
    "its",
    "yes",
    "less",
    "unless",
    "bed",
    "red",
    "need",
    "seed",
    "speed",
    "feed",
    "united",
    "limited",
    "hundred",
    "sacred",
];

fn irregular() -> &'static HashMap<&'static str, &'static str> {
    static MAP: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    MAP.get_or_init(|| IRREGULAR.iter().copied().collect())
}

fn protected() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| PROTECTED.iter().copied().collect())
}

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u' | b'y')
}

fn has_vowel(s: &str) -> bool {
    s.bytes().any(is_vowel)
}

/// Drops a doubled final consonant left behind by `-ing`/`-ed` removal
/// (`runn` → `run`), except for `l`, `s` and `z` which are often doubled
/// in the base form.
fn undouble(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 3 && b[n - 1] == b[n - 2] && !is_vowel(b[n - 1]) && !matches!(b[n - 1], b'l' | b's' | b'z') {
        stem[..n - 1].to_string()
    } else {
        stem.to_string()
    }
}

/// One application of the first matching suffix rule, or `None`.
fn strip_once(w: &str) -> Option<String> {
    if protected().contains(w) {
        return None;
    }
    if let Some(&base) = irregular().get(w) {
        return Some(base.to_string());
    }
    if !w.bytes().all(|c| c.is_ascii_lowercase()) {
        return None;
    }
    let n = w.len();
    if n >= 5 && w.ends_with("ies") {
        return Some(format!("{}y", &w[..n - 3]));
    }
    if n >= 5
        && (w.ends_with("sses")
            || w.ends_with("xes")
            || w.ends_with("zes")
            || w.ends_with("ches")
            || w.ends_with("shes"))
    {
        return Some(w[..n - 2].to_string());
    }
    if n >= 4
        && w.ends_with('s')
        && !w.ends_with("ss")
        && !w.ends_with("us")
        && !w.ends_with("is")
        && !w.ends_with("ous")
    {
        return Some(w[..n - 1].to_string());
    }
    if n >= 6 && w.ends_with("ing") {
        let stem = &w[..n - 3];
        if has_vowel(stem) {
            return Some(undouble(stem));
        }
    }
    if n >= 6 && w.ends_with("ed") && !w.ends_with("eed") {
        let stem = &w[..n - 2];
        if has_vowel(stem) {
            return Some(undouble(stem));
        }
    }
    None
}

/// The default rule-based English lemmatizer.
#[derive(Debug, Default, Clone, Copy)]
pub struct RuleLemmatizer;

impl Lemmatizer for RuleLemmatizer {
    fn name(&self) -> &'static str {
        "rules"
    }

    fn lemma(&self, word: &str) -> String {
        let mut cur = word.to_string();
        // every rule shortens the word or maps to a fixed point, so this ends
        while let Some(next) = strip_once(&cur) {
            if next == cur || next.is_empty() {
                break;
            }
            cur = next;
        }
        cur
    }
}

/// Lemmatizes with the default [`RuleLemmatizer`].
pub fn lemmatize(phrase: &str) -> Vec<String> {
    RuleLemmatizer.lemmatize(phrase)
}

/// Lemmatizes and joins with single spaces; the canonical mention key.
pub fn lemma_key(phrase: &str) -> String {
    lemmatize(phrase).join(" ")
}

/// Strips a trailing disambiguation parenthetical: `Java (island)` → `Java`.
pub fn strip_parenthetical(title: &str) -> &str {
    let t = title.trim_end();
    if t.ends_with(')') {
        if let Some(open) = t.rfind('(') {
            let head = t[..open].trim_end();
            if !head.is_empty() {
                return head;
            }
        }
    }
    t
}

/// Lemmatized title tokens with the disambiguation parenthetical removed.
pub fn title_tokens(title: &str) -> Vec<String> {
    lemmatize(strip_parenthetical(title))
}

pub const STOPWORDS: &str = include_str!("../data/stopwords.txt");
pub const STOP_VERBS: &str = include_str!("../data/stop_verbs.txt");

fn word_list(raw: &str) -> impl Iterator<Item = &str> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

pub fn stopwords() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| word_list(STOPWORDS).map(str::to_string).collect())
}

/// Lemmatized common verbs that the annotation service never links.
pub fn stop_verbs() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| word_list(STOP_VERBS).map(lemma_key).filter(|k| !k.is_empty()).collect())
}

/// A lemmatized token sequence with sentence boundaries.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Body {
    pub tokens: Vec<String>,
    /// Token index at which each sentence starts; always begins with 0 when
    /// the body is non-empty.
    pub sentence_starts: Vec<usize>,
}

/// Half-open token range `[start, start + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub len: usize,
}

impl TokenSpan {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn overlaps(&self, other: &TokenSpan) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

impl Body {
    pub fn from_text(text: &str) -> Body {
        Body::from_marked_text(text, &[]).0
    }

    /// Segments `text` into sentences and lemmatized tokens while keeping
    /// each marked byte range `[start, end)` atomic: a mark is never split
    /// across sentences and its tokens are reported as a [`TokenSpan`].
    ///
    /// Marks must be sorted and non-overlapping and lie on char boundaries.
    /// A mark whose text lemmatizes to nothing gets `None`.
    pub fn from_marked_text(text: &str, marks: &[(usize, usize)]) -> (Body, Vec<Option<TokenSpan>>) {
        let mut body = Body::default();
        let mut spans = Vec::with_capacity(marks.len());
        let mut pending_break = true;
        let mut cursor = 0;
        for &(start, end) in marks {
            debug_assert!(start >= cursor && end >= start);
            body.push_plain(&text[cursor..start], &mut pending_break);
            let toks = lemmatize(&text[start..end]);
            if toks.is_empty() {
                spans.push(None);
            } else {
                body.start_sentence_if(&mut pending_break);
                let s = body.tokens.len();
                spans.push(Some(TokenSpan {
                    start: s,
                    len: toks.len(),
                }));
                body.tokens.extend(toks);
            }
            cursor = end;
        }
        body.push_plain(&text[cursor..], &mut pending_break);
        (body, spans)
    }

    fn start_sentence_if(&mut self, pending: &mut bool) {
        if *pending {
            if self.sentence_starts.last() != Some(&self.tokens.len()) {
                self.sentence_starts.push(self.tokens.len());
            }
            *pending = false;
        }
    }

    fn push_plain(&mut self, text: &str, pending_break: &mut bool) {
        for (piece, ends_sentence) in split_sentences(text) {
            let toks = lemmatize(piece);
            if !toks.is_empty() {
                self.start_sentence_if(pending_break);
                self.tokens.extend(toks);
            }
            if ends_sentence {
                *pending_break = true;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of the sentence containing token `pos`.
    pub fn sentence_of(&self, pos: usize) -> usize {
        match self.sentence_starts.binary_search(&pos) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    /// Token range `[start, end)` of sentence `idx`.
    pub fn sentence_range(&self, idx: usize) -> (usize, usize) {
        let start = self.sentence_starts[idx];
        let end = self.sentence_starts.get(idx + 1).copied().unwrap_or(self.tokens.len());
        (start, end)
    }

    pub fn sentence_count(&self) -> usize {
        self.sentence_starts.len()
    }
}

/// Splits on `.`, `!` or `?` followed by whitespace. The flag marks pieces
/// that end a sentence.
fn split_sentences(text: &str) -> Vec<(&str, bool)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(_, next)) = iter.peek() {
                if next.is_whitespace() {
                    let end = i + c.len_utf8();
                    out.push((&text[start..end], true));
                    start = end;
                }
            }
        }
    }
    out.push((&text[start..], false));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_phrase() {
        assert!(lemmatize("").is_empty());
        assert!(lemmatize("  ,.; ").is_empty());
    }

    #[test]
    fn engineering_is_kept() {
        assert_eq!(lemmatize("Engineering"), vec!["engineering"]);
        assert_eq!(lemmatize("Biomedical engineering"), vec!["biomedical", "engineering"]);
    }

    #[test]
    fn running_dogs() {
        // "running" -> strip -ing -> "runn" -> undouble -> "run"
        // "dogs" -> strip plural s -> "dog"
        assert_eq!(lemmatize("running Dogs"), vec!["run", "dog"]);
    }

    #[test]
    fn suffix_rules() {
        assert_eq!(lemmatize("classes boxes cities"), vec!["class", "box", "city"]);
        assert_eq!(lemmatize("played walked"), vec!["play", "walk"]);
        assert_eq!(lemmatize("bus glass famous"), vec!["bus", "glass", "famous"]);
        assert_eq!(lemmatize("Java's islands"), vec!["java", "island"]);
        assert_eq!(lemmatize("children went"), vec!["child", "go"]);
        assert_eq!(lemmatize("St. Louis, 1998!"), vec!["st", "louis", "1998"]);
    }

    #[test]
    fn irregular_targets_are_fixed_points() {
        for (_, base) in IRREGULAR {
            assert_eq!(RuleLemmatizer.lemma(base), *base, "{base}");
        }
        for w in PROTECTED {
            assert_eq!(RuleLemmatizer.lemma(w), *w);
        }
    }

    #[test]
    fn parenthetical() {
        assert_eq!(strip_parenthetical("Java (programming language)"), "Java");
        assert_eq!(strip_parenthetical("Java"), "Java");
        assert_eq!(strip_parenthetical("(disambiguation)"), "(disambiguation)");
        assert_eq!(title_tokens("Java Sea (sea)"), vec!["java", "sea"]);
    }

    #[test]
    fn word_lists_load() {
        assert!(stopwords().len() >= 140);
        assert!(stopwords().contains("the"));
        assert!(stop_verbs().len() >= 150);
        assert!(stop_verbs().contains("run"));
    }

    #[test]
    fn sentences_and_marks() {
        let text = "The cat sat. A dog ran! Then St.Louis? End";
        let b = Body::from_text(text);
        assert_eq!(b.sentence_starts, vec![0, 3, 6, 9]);
        assert_eq!(b.tokens[6..9], ["then", "st", "louis"]);

        let text = "I like Mr. Java. Yes";
        let start = text.find("Mr. Java").unwrap();
        let (b, spans) = Body::from_marked_text(text, &[(start, start + 8)]);
        assert_eq!(spans, vec![Some(TokenSpan { start: 2, len: 2 })]);
        // the mark is atomic, so the first sentence break is after "Java."
        assert_eq!(b.sentence_starts, vec![0, 4]);
    }

    #[test]
    fn empty_mark() {
        let (b, spans) = Body::from_marked_text("a ?? b", &[(2, 4)]);
        assert_eq!(spans, vec![None]);
        assert_eq!(b.tokens, vec!["a", "b"]);
    }

    proptest! {
        #[test]
        fn lemmatize_is_idempotent(s in "[a-zA-Z' .,!?-]{0,60}") {
            let once = lemmatize(&s);
            let twice = lemmatize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn tokens_are_lowercase_nonempty(s in "\\PC{0,40}") {
            for t in lemmatize(&s) {
                prop_assert!(!t.is_empty());
                prop_assert!(t.chars().all(char::is_alphanumeric));
                prop_assert_eq!(lemmatize(&t), vec![t.clone()]);
            }
        }
    }
}
