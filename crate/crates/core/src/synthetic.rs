//! Templated corpus with known gold concepts, for running the whole pipeline
//! without external data.
//!
//! Concepts are built from disjoint word lists: single-token heads, two-token
//! phrases (modifier + head) and three-token phrases (outer modifier + a
//! two-token phrase), so the vocabulary is closed under token suffixes. A
//! nested entity gets a multi-token phrase and all of its suffixes as gold; a
//! flat entity gets a single head. The KG only holds part of each gold set.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_kg_tsv, CorpusRow, KgStore, LanguageMode};
use crate::error::{Error, Result};
use crate::io;

const HEADS: &[&str] = &[
    "company", "station", "river", "politician", "drama", "school", "city", "bridge", "museum",
    "festival", "hospital", "library", "airport", "temple", "stadium", "orchestra", "journal",
    "vessel", "mountain", "painter",
];

const MODIFIERS: &[&str] = &[
    "technology", "railway", "costume", "public", "national", "art", "music", "medical",
    "research", "regional", "coastal", "historic", "municipal", "maritime", "classical", "modern",
    "private", "military", "football", "science", "literary", "rural", "urban", "folk", "royal",
    "theater", "steam", "naval", "botanical", "university",
];

const OUTER: &[&str] = &[
    "multinational", "ancient", "famous", "small", "large", "former", "independent",
    "international", "major", "local", "northern", "southern", "eastern", "western", "central",
    "prestigious", "popular", "leading", "renowned", "remote",
];

const FILLER: &[&str] = &[
    "annual meeting", "main archive", "old warehouse", "visitor center", "garden", "market",
    "harbor", "square", "tower", "plaza", "workshop", "gallery hall",
];

const MONTHS: &[&str] = &["January", "March", "May", "July", "September", "November"];

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "gl", "sk"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ae", "ou"];
const CODAS: &[&str] = &["", "n", "r", "th", "x", "l", "m", "s"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub entities: usize,
    pub vocab_size: usize,
    pub nesting_rate: f64,
    /// Probability that a gold concept is missing from the KG (each entity
    /// keeps at least one).
    pub kg_drop_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            entities: 200,
            vocab_size: 50,
            nesting_rate: 0.5,
            kg_drop_rate: 0.2,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    fn shape(&self) -> Result<(usize, usize, usize)> {
        let bad = |m: String| Err(Error::Config(m));
        if self.entities == 0 {
            return bad("entities must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.nesting_rate) || !(0.0..1.0).contains(&self.kg_drop_rate) {
            return bad("nesting_rate must be in [0,1] and kg_drop_rate in [0,1)".into());
        }
        let heads = ((self.vocab_size as f64 / 5.0).round() as usize).max(1);
        if self.vocab_size < heads || heads > HEADS.len() {
            return bad(format!("vocab_size {} is out of range", self.vocab_size));
        }
        let rest = self.vocab_size - heads;
        let two = ((rest as f64) * 0.6).round() as usize;
        let three = rest - two;
        if two > heads * MODIFIERS.len() || three > two * OUTER.len() {
            return bad(format!("vocab_size {} is too large", self.vocab_size));
        }
        if self.nesting_rate > 0.0 && two == 0 {
            return bad("nesting needs a vocabulary of at least 2 concepts".into());
        }
        Ok((heads, two, three))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRow {
    pub entity_id: String,
    pub gold_concepts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAudit {
    pub entities: usize,
    pub vocab_size: usize,
    pub nested_entities: usize,
    pub nested_fraction: f64,
    pub gold_pairs: usize,
    pub kg_pairs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Vec<CorpusRow>,
    pub truth: Vec<TruthRow>,
    pub kg: KgStore,
    pub vocabulary: Vec<String>,
    pub audit: SyntheticAudit,
}

impl SyntheticCorpus {
    pub fn truth_map(&self) -> BTreeMap<String, BTreeSet<String>> {
        truth_map(&self.truth)
    }
}

pub fn truth_map(rows: &[TruthRow]) -> BTreeMap<String, BTreeSet<String>> {
    rows.iter()
        .map(|r| (r.entity_id.clone(), r.gold_concepts.iter().cloned().collect()))
        .collect()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(rng).expect("non-empty"));
        w.push_str(VOWELS.choose(rng).expect("non-empty"));
    }
    w.push_str(CODAS.choose(rng).expect("non-empty"));
    capitalize(&w)
}

fn article(next: &str) -> &'static str {
    if next.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

/// Phrase and all its proper token suffixes, longest first.
fn with_suffixes(phrase: &str) -> Vec<String> {
    let toks: Vec<&str> = phrase.split(' ').collect();
    (0..toks.len()).map(|k| toks[k..].join(" ")).collect()
}

fn build_vocabulary(rng: &mut ChaCha8Rng, heads: usize, two: usize, three: usize) -> (Vec<String>, Vec<String>) {
    let mut head_words: Vec<&str> = HEADS.to_vec();
    head_words.shuffle(rng);
    head_words.truncate(heads);
    let mut pairs: Vec<String> = head_words
        .iter()
        .flat_map(|h| MODIFIERS.iter().map(move |m| format!("{m} {h}")))
        .collect();
    pairs.shuffle(rng);
    pairs.truncate(two);
    let mut triples: Vec<String> = pairs
        .iter()
        .flat_map(|p| OUTER.iter().map(move |o| format!("{o} {p}")))
        .collect();
    triples.shuffle(rng);
    triples.truncate(three);
    let flat: Vec<String> = head_words.iter().map(|h| h.to_string()).collect();
    let multi: Vec<String> = pairs.into_iter().chain(triples).collect();
    (flat, multi)
}

fn abstract_text(rng: &mut ChaCha8Rng, name: &str, phrase: &str) -> String {
    let place = pseudo_word(rng);
    let year = rng.random_range(1850..2020);
    let art = article(phrase);
    let mut sentences = vec![match rng.random_range(0..4) {
        0 => format!("{name} is {art} {phrase} based in {place} ."),
        1 => format!("{name} was {art} {phrase} that operated in {place} ."),
        2 => format!("Founded in {year} , {name} is {art} {phrase} ."),
        _ => format!("{name} is {art} {phrase} in the region of {place} ."),
    }];
    let extra = rng.random_range(1..=3);
    for _ in 0..extra {
        let person = format!("{} {}", pseudo_word(rng), pseudo_word(rng));
        let filler = FILLER.choose(rng).expect("non-empty");
        let s = match rng.random_range(0..5) {
            0 => format!("It was established in {year} by {person} ."),
            1 => format!("{place} hosts its {filler} every {} .", MONTHS.choose(rng).expect("non-empty")),
            2 => format!("The {filler} near {place} opened in {} .", year + rng.random_range(1..30)),
            3 => format!("{person} led it for {} years .", rng.random_range(2..40)),
            _ => format!("Visitors often describe the {filler} as quiet ."),
        };
        sentences.push(s);
    }
    sentences.join(" ")
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    let (heads, two, three) = config.shape()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (flat, multi) = build_vocabulary(&mut rng, heads, two, three);

    let n = config.entities;
    let nested_target = (config.nesting_rate * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let nested: BTreeSet<usize> = order[..nested_target].iter().copied().collect();

    let mut names = BTreeSet::new();
    let mut corpus = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut kg_pairs: Vec<(String, String)> = Vec::new();
    for idx in 0..n {
        let name = loop {
            let candidate = format!("{} {}", pseudo_word(&mut rng), pseudo_word(&mut rng));
            if names.insert(candidate.clone()) {
                break candidate;
            }
        };
        let entity_id = format!("E{idx:05}");
        let phrase = if nested.contains(&idx) {
            multi.choose(&mut rng).expect("checked by shape").clone()
        } else {
            flat.choose(&mut rng).expect("at least one head").clone()
        };
        let gold = with_suffixes(&phrase);
        let mut known: Vec<String> = gold
            .iter()
            .filter(|_| rng.random::<f64>() >= config.kg_drop_rate)
            .cloned()
            .collect();
        if known.is_empty() {
            known.push(gold.choose(&mut rng).expect("non-empty").clone());
        }
        for c in &known {
            kg_pairs.push((entity_id.clone(), c.clone()));
        }
        let text = abstract_text(&mut rng, &name, &phrase);
        corpus.push(CorpusRow {
            entity_id: entity_id.clone(),
            name,
            abstract_text: text,
            language_mode: LanguageMode::Word,
            gold_concepts: known,
        });
        truth.push(TruthRow {
            entity_id,
            gold_concepts: gold,
        });
    }

    let kg = KgStore::from_pairs(kg_pairs);
    let nested_entities = truth.iter().filter(|t| t.gold_concepts.len() >= 2).count();
    let mut vocabulary: Vec<String> = flat.into_iter().chain(multi).collect();
    vocabulary.sort();
    let audit = SyntheticAudit {
        entities: n,
        vocab_size: vocabulary.len(),
        nested_entities,
        nested_fraction: nested_entities as f64 / n as f64,
        gold_pairs: truth.iter().map(|t| t.gold_concepts.len()).sum(),
        kg_pairs: kg.pairs().count(),
        seed: config.seed,
    };
    Ok(SyntheticCorpus {
        corpus,
        truth,
        kg,
        vocabulary,
        audit,
    })
}

/// Writes `corpus.jsonl`, `kg.tsv`, `truth.jsonl` and `audit.json` into `dir`.
pub fn write_synthetic(corpus: &SyntheticCorpus, dir: &Path) -> Result<()> {
    io::write_jsonl_file(&dir.join("corpus.jsonl"), &corpus.corpus)?;
    io::write_jsonl_file(&dir.join("truth.jsonl"), &corpus.truth)?;
    io::write_json_file(&dir.join("audit.json"), &corpus.audit)?;
    let kg_path = dir.join("kg.tsv");
    let mut out = io::create(&kg_path)?;
    write_kg_tsv(&corpus.kg, &mut out).map_err(|e| Error::io(&kg_path, e))?;
    std::io::Write::flush(&mut out).map_err(|e| Error::io(&kg_path, e))
}
