use std::collections::HashSet;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::EmbeddingMatrix;
use crate::corpus::{token_key, tokenize, EntityRecord, LanguageMode};
use crate::error::{Error, Result};

pub const ENTITY_PLACEHOLDER: &str = "[entity]";

/// Question wrapped around the entity name, e.g. "What is the concept for
/// [entity]?".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct QuestionTemplate {
    template: String,
}

impl QuestionTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        let count = template.matches(ENTITY_PLACEHOLDER).count();
        if count != 1 {
            return Err(Error::Config(format!(
                "question template must contain {ENTITY_PLACEHOLDER} exactly once, found {count}"
            )));
        }
        Ok(QuestionTemplate { template })
    }

    pub fn instantiate(&self, entity: &str) -> String {
        self.template.replace(ENTITY_PLACEHOLDER, entity)
    }

    pub fn as_str(&self) -> &str {
        &self.template
    }
}

impl Default for QuestionTemplate {
    fn default() -> Self {
        QuestionTemplate {
            template: "What is the concept for [entity]?".into(),
        }
    }
}

impl TryFrom<String> for QuestionTemplate {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        QuestionTemplate::new(value)
    }
}

impl From<QuestionTemplate> for String {
    fn from(value: QuestionTemplate) -> Self {
        value.template
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub dim: usize,
    pub window: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig { dim: 256, window: 2 }
    }
}

/// Source of per-token embeddings for the head.
pub trait EmbeddingProvider: Sync {
    fn dim(&self) -> usize;
    fn embed(&self, record: &EntityRecord, question: &QuestionTemplate) -> Result<EmbeddingMatrix>;
}

/// Feature-hashing embedder: each token row sums signed one-hot buckets of
/// its surface, shape, suffix, neighbours within `window`, neighbour bigrams,
/// overlap with the question, and the full question string.
#[derive(Debug, Clone)]
pub struct HashedEmbedder {
    config: EmbedderConfig,
}

impl HashedEmbedder {
    pub fn new(config: EmbedderConfig) -> Result<Self> {
        if config.dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(HashedEmbedder { config })
    }

    pub fn config(&self) -> EmbedderConfig {
        self.config
    }
}

impl EmbeddingProvider for HashedEmbedder {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed(&self, record: &EntityRecord, question: &QuestionTemplate) -> Result<EmbeddingMatrix> {
        embed_tokens(record, question, &self.config)
    }
}

fn hash_feature(feature: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(feature.as_bytes());
    h.finish()
}

fn shape(token: &str) -> &'static str {
    let mut chars = token.chars();
    let Some(first) = chars.next() else {
        return "empty";
    };
    if token.chars().all(|c| !c.is_alphanumeric()) {
        "punct"
    } else if token.chars().all(|c| c.is_numeric()) {
        "digit"
    } else if first.is_uppercase() {
        if chars.all(|c| !c.is_alphabetic() || c.is_uppercase()) {
            "upper"
        } else {
            "title"
        }
    } else {
        "lower"
    }
}

fn suffix(token: &str, len: usize) -> String {
    let chars: Vec<char> = token.chars().collect();
    chars[chars.len().saturating_sub(len)..].iter().collect()
}

pub fn embed_tokens(
    record: &EntityRecord,
    question: &QuestionTemplate,
    config: &EmbedderConfig,
) -> Result<EmbeddingMatrix> {
    if config.dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    let mode = record.language_mode;
    let question_text = question.instantiate(&record.surface_name);
    let question_tokens: HashSet<String> = tokenize(&question_text, mode)
        .unwrap_or_default()
        .iter()
        .map(|t| token_key(t, mode))
        .collect();
    let keys: Vec<String> = record.tokens.iter().map(|t| token_key(t, mode)).collect();
    let n = keys.len();
    let at = |i: isize| -> &str {
        if i < 0 {
            "<s>"
        } else if i as usize >= n {
            "</s>"
        } else {
            &keys[i as usize]
        }
    };
    let in_question = |i: isize| i >= 0 && (i as usize) < n && question_tokens.contains(&keys[i as usize]);

    let dim = config.dim;
    let mut values = vec![0.0; n * dim];
    let mut features = Vec::new();
    for i in 0..n {
        let ii = i as isize;
        features.clear();
        features.push("bias".to_string());
        features.push(format!("w={}", keys[i]));
        features.push(format!("shape={}", shape(&record.tokens[i])));
        if mode == LanguageMode::Word {
            features.push(format!("suf3={}", suffix(&keys[i], 3)));
        }
        for k in 1..=config.window as isize {
            features.push(format!("L{k}={}", at(ii - k)));
            features.push(format!("R{k}={}", at(ii + k)));
        }
        features.push(format!("LB={}|{}", at(ii - 1), keys[i]));
        features.push(format!("RB={}|{}", keys[i], at(ii + 1)));
        if in_question(ii) {
            features.push("inq".into());
        }
        if in_question(ii - 1) {
            features.push("L1inq".into());
        }
        if in_question(ii + 1) {
            features.push("R1inq".into());
        }
        features.push(format!("q={question_text}"));

        let scale = 1.0 / (features.len() as f64).sqrt();
        let row = &mut values[i * dim..(i + 1) * dim];
        for f in &features {
            let h = hash_feature(f);
            let bucket = (h % dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            row[bucket] += sign * scale;
        }
    }
    EmbeddingMatrix::new(n, dim, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(name: &str, text: &str) -> EntityRecord {
        EntityRecord::new("e", name, text, LanguageMode::Word, std::iter::empty()).unwrap()
    }

    #[test]
    fn deterministic() {
        let r = record("Google", "Google is a technology company .");
        let q = QuestionTemplate::default();
        let a = embed_tokens(&r, &q, &EmbedderConfig::default()).unwrap();
        let b = embed_tokens(&r, &q, &EmbedderConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows(), 6);
        assert_eq!(a.dim(), 256);
    }

    #[test]
    fn entity_name_salts_rows() {
        let q = QuestionTemplate::default();
        let a = embed_tokens(&record("Google", "it is a company"), &q, &EmbedderConfig::default()).unwrap();
        let b = embed_tokens(&record("Bing", "it is a company"), &q, &EmbedderConfig::default()).unwrap();
        assert!((0..a.rows()).any(|i| a.row(i) != b.row(i)));
    }

    #[test]
    fn single_token_shape() {
        let m = embed_tokens(
            &record("x", "company"),
            &QuestionTemplate::default(),
            &EmbedderConfig { dim: 32, window: 2 },
        )
        .unwrap();
        assert_eq!((m.rows(), m.dim()), (1, 32));
    }

    #[test]
    fn zero_dim_is_config_error() {
        let err = embed_tokens(
            &record("x", "company"),
            &QuestionTemplate::default(),
            &EmbedderConfig { dim: 0, window: 2 },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn template_needs_one_placeholder() {
        assert!(QuestionTemplate::new("What is it?").is_err());
        assert!(QuestionTemplate::new("[entity] and [entity]").is_err());
        let q = QuestionTemplate::new("Concept of [entity]?").unwrap();
        assert_eq!(q.instantiate("Google"), "Concept of Google?");
    }
}
