use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;

use serde::Deserialize;

use super::text::{concept_key, normalize_whitespace, LanguageMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgFormat {
    Tsv,
    Jsonl,
}

impl KgFormat {
    /// Guesses the format from a file extension, defaulting to TSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => KgFormat::Jsonl,
            _ => KgFormat::Tsv,
        }
    }
}

/// Entity → concept map with the derived concept vocabulary.
///
/// Immutable once built; lookups that compare surfaces go through
/// [`concept_key`] so that word-mode matching is case-insensitive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KgStore {
    entity_to_concepts: BTreeMap<String, BTreeSet<String>>,
    concept_vocabulary: BTreeSet<String>,
    word_keys: HashSet<String>,
    char_keys: HashSet<String>,
}

impl KgStore {
    /// Builds a store from `(entity, concept)` pairs. Pairs whose concept is
    /// blank after whitespace normalization are skipped.
    pub fn from_pairs<I, E, C>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (E, C)>,
        E: AsRef<str>,
        C: AsRef<str>,
    {
        let mut entity_to_concepts: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (entity, concept) in pairs {
            let concept = normalize_whitespace(concept.as_ref());
            if concept.is_empty() {
                continue;
            }
            entity_to_concepts
                .entry(entity.as_ref().trim().to_string())
                .or_default()
                .insert(concept);
        }
        let concept_vocabulary: BTreeSet<String> =
            entity_to_concepts.values().flatten().cloned().collect();
        let word_keys = concept_vocabulary
            .iter()
            .map(|c| concept_key(c, LanguageMode::Word))
            .collect();
        let char_keys = concept_vocabulary
            .iter()
            .map(|c| concept_key(c, LanguageMode::Character))
            .collect();
        KgStore {
            entity_to_concepts,
            concept_vocabulary,
            word_keys,
            char_keys,
        }
    }

    pub fn entity_to_concepts(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.entity_to_concepts
    }

    pub fn concept_vocabulary(&self) -> &BTreeSet<String> {
        &self.concept_vocabulary
    }

    pub fn entity_count(&self) -> usize {
        self.entity_to_concepts.len()
    }

    pub fn concepts_of(&self, entity: &str) -> Option<&BTreeSet<String>> {
        self.entity_to_concepts.get(entity)
    }

    /// Whether `surface` is any entity's concept.
    pub fn contains_concept(&self, surface: &str, mode: LanguageMode) -> bool {
        let key = concept_key(surface, mode);
        match mode {
            LanguageMode::Word => self.word_keys.contains(&key),
            LanguageMode::Character => self.char_keys.contains(&key),
        }
    }

    /// Whether `concept` is already linked to `entity`.
    pub fn entity_has_concept(&self, entity: &str, concept: &str, mode: LanguageMode) -> bool {
        let key = concept_key(concept, mode);
        self.entity_to_concepts
            .get(entity)
            .is_some_and(|set| set.iter().any(|c| concept_key(c, mode) == key))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entity_to_concepts
            .iter()
            .flat_map(|(e, cs)| cs.iter().map(move |c| (e.as_str(), c.as_str())))
    }
}

#[derive(Deserialize)]
struct JsonKgLine {
    entity: String,
    concepts: Vec<String>,
}

/// Reads a KG dump: `entity<TAB>concept` lines or JSONL
/// `{"entity": ..., "concepts": [...]}`. Blank lines are ignored.
pub fn load_kg_dump<R: BufRead>(source: R, format: KgFormat) -> Result<KgStore> {
    let context = match format {
        KgFormat::Tsv => "kg tsv",
        KgFormat::Jsonl => "kg jsonl",
    };
    let mut pairs = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::malformed(context, lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        match format {
            KgFormat::Tsv => {
                let mut fields = line.split('\t');
                let (entity, concept) = match (fields.next(), fields.next(), fields.next()) {
                    (Some(e), Some(c), None) => (e.trim(), normalize_whitespace(c)),
                    _ => {
                        return Err(Error::malformed(
                            context,
                            lineno,
                            "expected exactly two tab-separated fields",
                        ))
                    }
                };
                if entity.is_empty() || concept.is_empty() {
                    return Err(Error::malformed(context, lineno, "empty entity or concept"));
                }
                pairs.push((entity.to_string(), concept));
            }
            KgFormat::Jsonl => {
                let parsed: JsonKgLine = serde_json::from_str(&line)
                    .map_err(|e| Error::malformed(context, lineno, e.to_string()))?;
                if parsed.entity.trim().is_empty() {
                    return Err(Error::malformed(context, lineno, "empty entity"));
                }
                for concept in parsed.concepts {
                    let concept = normalize_whitespace(&concept);
                    if concept.is_empty() {
                        return Err(Error::malformed(context, lineno, "empty concept"));
                    }
                    pairs.push((parsed.entity.clone(), concept));
                }
            }
        }
    }
    Ok(KgStore::from_pairs(pairs))
}

/// Writes the store as TSV, entities and concepts in sorted order.
pub fn write_kg_tsv<W: std::io::Write>(kg: &KgStore, mut out: W) -> std::io::Result<()> {
    for (entity, concept) in kg.pairs() {
        writeln!(out, "{entity}\t{concept}")?;
    }
    Ok(())
}
