//! Span enumeration and ranking over a start/end probability profile.
//!
//! A span `(i, j)` scores `cs = p_start[i] + p_end[j]`. Every span up to
//! `max_span_length` tokens is kept, including overlapping and nested ones, so
//! one token may belong to several extracted concepts of different
//! granularity. Threshold truncation compares raw `cs` values in `[0, 2]`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::EntityRecord;
use crate::error::{Error, Result};
use crate::pointer_head::ProbabilityProfile;

pub const DEFAULT_MAX_SPAN_LENGTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSpan {
    #[serde(rename = "i")]
    pub start: usize,
    #[serde(rename = "j")]
    pub end: usize,
    pub surface: String,
    #[serde(rename = "cs")]
    pub confidence: f64,
    pub p_start: f64,
    pub p_end: f64,
}

impl CandidateSpan {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Whether `other` lies inside this span and is not the same span.
    pub fn strictly_contains(&self, other: &CandidateSpan) -> bool {
        other.start >= self.start
            && other.end <= self.end
            && (other.start, other.end) != (self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub threshold: f64,
    pub max_span_length: usize,
    pub top_k: Option<usize>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            threshold: 0.85,
            max_span_length: DEFAULT_MAX_SPAN_LENGTH,
            top_k: None,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_span_length == 0 {
            return Err(Error::Config("max_span_length must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold must lie in [0, 2], got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// All `(i, j)` with `i <= j < n` and `j - i < max_span_length`, in row order.
pub fn span_indices(n: usize, max_span_length: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i..n.min(i + max_span_length)).map(move |j| (i, j)))
}

pub fn span_count(n: usize, max_span_length: usize) -> usize {
    (0..n).map(|i| max_span_length.min(n - i)).sum()
}

/// Ranking order: higher confidence, then shorter span, then leftmost start.
pub fn rank_order(a: &CandidateSpan, b: &CandidateSpan) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.len().cmp(&b.len()))
        .then_with(|| a.start.cmp(&b.start))
}

pub fn enumerate_spans(
    profile: &ProbabilityProfile,
    record: &EntityRecord,
    config: &DecodeConfig,
) -> Result<Vec<CandidateSpan>> {
    if profile.is_empty() {
        return Ok(Vec::new());
    }
    if profile.len() != record.len() {
        return Err(Error::LengthMismatch {
            what: "probability profile",
            left: profile.len(),
            right: record.len(),
        });
    }
    let mut spans: Vec<CandidateSpan> = span_indices(profile.len(), config.max_span_length)
        .map(|(i, j)| {
            let p_start = profile.p_start[i];
            let p_end = profile.p_end[j];
            CandidateSpan {
                start: i,
                end: j,
                surface: record.surface(i, j),
                confidence: p_start + p_end,
                p_start,
                p_end,
            }
        })
        .collect();
    spans.sort_by(rank_order);
    if let Some(k) = config.top_k {
        spans.truncate(k);
    }
    Ok(spans)
}

/// Keeps candidates with `cs > threshold`, preserving order.
pub fn fixed_threshold_truncate(candidates: &[CandidateSpan], threshold: f64) -> Vec<CandidateSpan> {
    candidates
        .iter()
        .filter(|c| c.confidence > threshold)
        .cloned()
        .collect()
}

/// Enumerate, rank and truncate at `config.threshold`.
pub fn decode(
    profile: &ProbabilityProfile,
    record: &EntityRecord,
    config: &DecodeConfig,
) -> Result<Vec<CandidateSpan>> {
    config.validate()?;
    let ranked = enumerate_spans(profile, record, config)?;
    Ok(fixed_threshold_truncate(&ranked, config.threshold))
}

/// One line of the candidate dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub entity_id: String,
    pub spans: Vec<CandidateSpan>,
}
