//! Corpus ingestion: KG dumps, tokenized entity abstracts, weak span labels
//! and reproducible dataset splits.

mod kg;
mod split;
mod text;

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

pub use kg::{load_kg_dump, write_kg_tsv, KgFormat, KgStore};
pub use split::{split_dataset, DatasetSplit, SplitManifest};
pub use text::{
    concept_key, detokenize, normalize_whitespace, token_key, tokenize, tokenize_with_offsets,
    utf16_offset, LanguageMode, TokenSpan,
};

use crate::error::Result;

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRow {
    pub entity_id: String,
    pub name: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub language_mode: LanguageMode,
    #[serde(default)]
    pub gold_concepts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityRecord {
    pub entity_id: String,
    pub surface_name: String,
    pub abstract_text: String,
    pub tokens: Vec<String>,
    pub language_mode: LanguageMode,
    pub gold_concepts: BTreeSet<String>,
}

impl EntityRecord {
    pub fn new(
        entity_id: impl Into<String>,
        surface_name: impl Into<String>,
        abstract_text: impl Into<String>,
        language_mode: LanguageMode,
        gold_concepts: impl IntoIterator<Item = String>,
    ) -> Result<Self> {
        let abstract_text = abstract_text.into();
        let tokens = tokenize(&abstract_text, language_mode)?;
        Ok(EntityRecord {
            entity_id: entity_id.into(),
            surface_name: surface_name.into(),
            abstract_text,
            tokens,
            language_mode,
            gold_concepts: gold_concepts
                .into_iter()
                .map(|c| normalize_whitespace(&c))
                .filter(|c| !c.is_empty())
                .collect(),
        })
    }

    pub fn from_row(row: CorpusRow) -> Result<Self> {
        Self::new(
            row.entity_id,
            row.name,
            row.abstract_text,
            row.language_mode,
            row.gold_concepts,
        )
    }

    pub fn to_row(&self) -> CorpusRow {
        CorpusRow {
            entity_id: self.entity_id.clone(),
            name: self.surface_name.clone(),
            abstract_text: self.abstract_text.clone(),
            language_mode: self.language_mode,
            gold_concepts: self.gold_concepts.iter().cloned().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Surface string of tokens `start..=end`.
    pub fn surface(&self, start: usize, end: usize) -> String {
        detokenize(&self.tokens[start..=end], self.language_mode)
    }
}

/// Start/end/span supervision derived from KG concepts found in an abstract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeakLabels {
    pub start_flags: Vec<bool>,
    pub end_flags: Vec<bool>,
    pub span_flags: BTreeSet<(usize, usize)>,
}

impl WeakLabels {
    pub fn empty(n: usize) -> Self {
        WeakLabels {
            start_flags: vec![false; n],
            end_flags: vec![false; n],
            span_flags: BTreeSet::new(),
        }
    }

    pub fn from_spans(n: usize, spans: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut labels = Self::empty(n);
        for (i, j) in spans {
            labels.start_flags[i] = true;
            labels.end_flags[j] = true;
            labels.span_flags.insert((i, j));
        }
        labels
    }

    pub fn len(&self) -> usize {
        self.start_flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.span_flags.is_empty()
    }
}

/// Labels every occurrence of every gold concept (plus any KG concept of the
/// entity) that appears as a contiguous token run of the abstract.
pub fn build_weak_labels(record: &EntityRecord, kg: &KgStore) -> WeakLabels {
    let mode = record.language_mode;
    let mut concepts: BTreeSet<&str> = record.gold_concepts.iter().map(String::as_str).collect();
    if let Some(kg_concepts) = kg.concepts_of(&record.entity_id) {
        concepts.extend(kg_concepts.iter().map(String::as_str));
    }
    let haystack: Vec<String> = record.tokens.iter().map(|t| token_key(t, mode)).collect();
    let mut spans = Vec::new();
    let mut seen = HashSet::new();
    for concept in concepts {
        let Ok(needle) = tokenize(concept, mode) else {
            continue;
        };
        let needle: Vec<String> = needle.iter().map(|t| token_key(t, mode)).collect();
        if !seen.insert(needle.clone()) || needle.len() > haystack.len() {
            continue;
        }
        for i in 0..=haystack.len() - needle.len() {
            if haystack[i..i + needle.len()] == needle[..] {
                spans.push((i, i + needle.len() - 1));
            }
        }
    }
    WeakLabels::from_spans(record.len(), spans)
}
