//! Lexical hypernym patterns ("X is a Y that ...") as a concept extraction
//! baseline.
//!
//! A template is a whitespace-separated list of elements:
//!
//! * `X` matches the entity surface name or one of its aliases,
//! * `Y` captures the concept noun phrase,
//! * `*` skips up to [`MAX_GAP`] tokens,
//! * anything else is a literal, with `/` separating alternatives.
//!
//! There is no chunker. The Y phrase is a run of content tokens (not function
//! words, not punctuation) after optional leading function words; the capture
//! is the run's last token plus up to `max_leading_modifiers` tokens before it.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{concept_key, detokenize, token_key, tokenize, EntityRecord, LanguageMode};
use crate::error::{Error, Result};
use crate::lexicon::{default_function_words, function_token_set};

pub const MAX_GAP: usize = 8;

fn default_leading() -> usize {
    3
}

fn default_trailing() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HearstPattern {
    pub id: String,
    pub template: String,
    pub language_mode: LanguageMode,
    #[serde(default = "default_leading")]
    pub max_leading_modifiers: usize,
    /// Longest content run scanned for the Y phrase.
    #[serde(default = "default_trailing")]
    pub max_trailing_tokens: usize,
}

impl HearstPattern {
    pub fn new(id: &str, template: &str, language_mode: LanguageMode) -> Self {
        HearstPattern {
            id: id.into(),
            template: template.into(),
            language_mode,
            max_leading_modifiers: default_leading(),
            max_trailing_tokens: default_trailing(),
        }
    }
}

const ENGLISH: &[(&str, &str)] = &[
    ("en-is-a", "X is/was a/an Y that/which/who"),
    ("en-one-of", "X is/was one of Y"),
    ("en-member-of", "X is/was a/an member/part/form/type/kind of Y"),
    ("en-refers-to", "X refers/referred to Y"),
    ("en-as", "As a/an Y , X is/was"),
];

const CHINESE: &[(&str, &str)] = &[
    ("zh-is", "X 是 Y"),
    ("zh-type-of", "X 是 一种/一个/一类 Y"),
    ("zh-one-of", "X 是 Y 之一"),
    ("zh-belongs-to", "X 属于 Y"),
    ("zh-located", "X 位于/成立于 * 的 Y"),
];

/// The shipped pattern set for a language.
pub fn default_patterns(mode: LanguageMode) -> Vec<HearstPattern> {
    let table = match mode {
        LanguageMode::Word => ENGLISH,
        LanguageMode::Character => CHINESE,
    };
    table
        .iter()
        .map(|(id, t)| HearstPattern::new(id, t, mode))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
enum Element {
    X,
    Y,
    Gap,
    Literal(Vec<Vec<String>>),
}

#[derive(Debug, Clone)]
pub struct Matcher {
    pattern: HearstPattern,
    elements: Vec<Element>,
    function_tokens: HashSet<String>,
    function_seqs: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HearstMatch {
    pub concept: String,
    pub pattern_id: String,
    /// Inclusive token range of the capture.
    pub start: usize,
    pub end: usize,
}

fn keyed(text: &str, mode: LanguageMode) -> Vec<String> {
    tokenize(text, mode)
        .map(|t| t.iter().map(|s| token_key(s, mode)).collect())
        .unwrap_or_default()
}

fn compile_one(pattern: &HearstPattern) -> Result<Matcher> {
    let err = |message: String| Error::Pattern {
        id: pattern.id.clone(),
        message,
    };
    let mode = pattern.language_mode;
    let mut elements = Vec::new();
    for raw in pattern.template.split_whitespace() {
        elements.push(match raw {
            "X" => Element::X,
            "Y" => Element::Y,
            "*" => Element::Gap,
            lit => {
                let alts: Vec<Vec<String>> = lit
                    .split('/')
                    .map(|a| keyed(a, mode))
                    .filter(|a| !a.is_empty())
                    .collect();
                if alts.is_empty() {
                    return Err(err(format!("empty literal {lit:?}")));
                }
                Element::Literal(alts)
            }
        });
    }
    let count = |e: &Element| elements.iter().filter(|x| *x == e).count();
    if count(&Element::X) != 1 || count(&Element::Y) != 1 {
        return Err(err("template needs exactly one X and one Y".into()));
    }
    if !elements.iter().any(|e| matches!(e, Element::Literal(_))) {
        return Err(err("template has no literal anchor".into()));
    }
    if pattern.max_trailing_tokens == 0 {
        return Err(err("max_trailing_tokens must be at least 1".into()));
    }
    let words = default_function_words(mode);
    let mut function_seqs: Vec<Vec<String>> = words.iter().map(|w| keyed(w, mode)).collect();
    function_seqs.retain(|s| !s.is_empty());
    // longest first so multi-token entries win over their prefixes
    function_seqs.sort_by_key(|s| std::cmp::Reverse(s.len()));
    Ok(Matcher {
        pattern: pattern.clone(),
        elements,
        function_tokens: function_token_set(&words, mode),
        function_seqs,
    })
}

pub fn compile_patterns(patterns: &[HearstPattern]) -> Result<Vec<Matcher>> {
    patterns.iter().map(compile_one).collect()
}

struct Ctx<'a> {
    keys: &'a [String],
    names: &'a [Vec<String>],
}

impl Matcher {
    pub fn pattern(&self) -> &HearstPattern {
        &self.pattern
    }

    fn is_content(&self, key: &str) -> bool {
        !self.function_tokens.contains(key) && key.chars().any(char::is_alphanumeric)
    }

    fn skip_function_words(&self, keys: &[String], mut pos: usize) -> usize {
        'outer: loop {
            for seq in &self.function_seqs {
                if keys[pos..].starts_with(seq) {
                    pos += seq.len();
                    continue 'outer;
                }
            }
            return pos;
        }
    }

    /// Capture for a content run `c..e`.
    fn capture(&self, c: usize, e: usize) -> (usize, usize) {
        let width = self.pattern.max_leading_modifiers + 1;
        (c.max(e.saturating_sub(width)), e - 1)
    }

    fn match_at(&self, ctx: &Ctx, el: usize, pos: usize, y: &mut Option<(usize, usize)>) -> bool {
        let keys = ctx.keys;
        let Some(element) = self.elements.get(el) else {
            return true;
        };
        match element {
            Element::Literal(alts) => alts.iter().any(|alt| {
                keys[pos..].starts_with(alt) && self.match_at(ctx, el + 1, pos + alt.len(), y)
            }),
            Element::X => ctx.names.iter().any(|name| {
                keys[pos..].starts_with(name) && self.match_at(ctx, el + 1, pos + name.len(), y)
            }),
            Element::Gap => (0..=MAX_GAP)
                .take_while(|g| pos + g <= keys.len())
                .any(|g| self.match_at(ctx, el + 1, pos + g, y)),
            Element::Y => {
                let c = self.skip_function_words(keys, pos);
                let limit = keys.len().min(c + self.pattern.max_trailing_tokens);
                let mut e = c;
                while e < limit && self.is_content(&keys[e]) {
                    e += 1;
                }
                if e == c {
                    return false;
                }
                if el + 1 == self.elements.len() {
                    *y = Some(self.capture(c, e));
                    return true;
                }
                // shortest phrase that lets the rest of the template match
                for end in c + 1..=e {
                    if self.match_at(ctx, el + 1, end, y) {
                        *y = Some(self.capture(c, end));
                        return true;
                    }
                }
                false
            }
        }
    }

    /// All matches in `record`, in token order.
    pub fn find(&self, record: &EntityRecord, aliases: &[String]) -> Vec<HearstMatch> {
        let mode = self.pattern.language_mode;
        if record.language_mode != mode {
            return Vec::new();
        }
        let keys: Vec<String> = record.tokens.iter().map(|t| token_key(t, mode)).collect();
        let mut names: Vec<Vec<String>> = std::iter::once(record.surface_name.as_str())
            .chain(aliases.iter().map(String::as_str))
            .map(|n| keyed(n, mode))
            .filter(|n| !n.is_empty())
            .collect();
        names.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        names.dedup();
        let ctx = Ctx {
            keys: &keys,
            names: &names,
        };
        let mut out = Vec::new();
        for start in 0..keys.len() {
            let mut y = None;
            if self.match_at(&ctx, 0, start, &mut y) {
                if let Some((i, j)) = y {
                    out.push(HearstMatch {
                        concept: detokenize(&record.tokens[i..=j], mode),
                        pattern_id: self.pattern.id.clone(),
                        start: i,
                        end: j,
                    });
                }
            }
        }
        out
    }
}

/// Runs every matcher over `record` and returns distinct concepts, first
/// occurrence wins.
pub fn extract(record: &EntityRecord, matchers: &[Matcher], aliases: &[String]) -> Vec<HearstMatch> {
    let mut seen = HashSet::new();
    matchers
        .iter()
        .flat_map(|m| m.find(record, aliases))
        .filter(|m| seen.insert(concept_key(&m.concept, record.language_mode)))
        .collect()
}

pub fn extract_concepts(record: &EntityRecord, matchers: &[Matcher]) -> Vec<String> {
    extract(record, matchers, &[])
        .into_iter()
        .map(|m| m.concept)
        .collect()
}
