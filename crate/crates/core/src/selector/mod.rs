//! Candidate selection with a random forest over five span features:
//!
//! | feature | meaning |
//! |---|---|
//! | A | span confidence `cs` |
//! | B | start probability at the span's first token |
//! | C | end probability at the span's last token |
//! | D | 1 if the surface is already a concept somewhere in the KG |
//! | E | 1 if the span strictly contains another candidate span |

mod forest;
mod tree;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub use forest::{
    feature_importance, train_forest, ForestCheckpoint, ForestConfig, ImportanceReport,
    Prediction, RandomForest,
};
pub use tree::{DecisionTree, TreeConfig, TreeNode};

use crate::corpus::{KgStore, LanguageMode};
use crate::decoder::CandidateSpan;
use crate::error::{Error, Result};

pub const FEATURE_COUNT: usize = 5;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["A", "B", "C", "D", "E"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl FeatureVector {
    pub fn to_array(self) -> [f64; FEATURE_COUNT] {
        [self.a, self.b, self.c, self.d, self.e]
    }

    pub fn from_array(v: [f64; FEATURE_COUNT]) -> Self {
        FeatureVector {
            a: v[0],
            b: v[1],
            c: v[2],
            d: v[3],
            e: v[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Keep,
    Drop,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Keep => "keep",
            Label::Drop => "drop",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub label: Label,
    pub provenance: String,
}

pub fn extract_features(
    candidate: &CandidateSpan,
    all_candidates: &[CandidateSpan],
    kg: &KgStore,
    mode: LanguageMode,
) -> Result<FeatureVector> {
    if !all_candidates
        .iter()
        .any(|c| (c.start, c.end) == (candidate.start, candidate.end))
    {
        return Err(Error::CandidateNotFound {
            start: candidate.start,
            end: candidate.end,
        });
    }
    let in_kg = kg.contains_concept(&candidate.surface, mode);
    let contains_other = all_candidates.iter().any(|c| candidate.strictly_contains(c));
    Ok(FeatureVector {
        a: candidate.confidence,
        b: candidate.p_start,
        c: candidate.p_end,
        d: if in_kg { 1.0 } else { 0.0 },
        e: if contains_other { 1.0 } else { 0.0 },
    })
}

/// Features for every candidate of one entity, in input order.
pub fn extract_all(candidates: &[CandidateSpan], kg: &KgStore, mode: LanguageMode) -> Vec<FeatureVector> {
    candidates
        .iter()
        .map(|c| extract_features(c, candidates, kg, mode).expect("candidate drawn from list"))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "B")]
    b: f64,
    #[serde(rename = "C")]
    c: f64,
    #[serde(rename = "D")]
    d: f64,
    #[serde(rename = "E")]
    e: f64,
    label: Label,
    provenance: String,
}

/// Writes `A,B,C,D,E,label,provenance` with a header row.
pub fn write_examples_csv<W: Write>(examples: &[LabeledExample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for ex in examples {
        let f = ex.features;
        w.serialize(CsvRow {
            a: f.a,
            b: f.b,
            c: f.c,
            d: f.d,
            e: f.e,
            label: ex.label,
            provenance: ex.provenance.clone(),
        })
        .map_err(|e| Error::malformed("selector csv", 0, e.to_string()))?;
    }
    w.flush()
        .map_err(|e| Error::malformed("selector csv", 0, e.to_string()))
}

pub fn read_examples_csv<R: Read>(input: R) -> Result<Vec<LabeledExample>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (idx, row) in r.deserialize::<CsvRow>().enumerate() {
        // header is line 1
        let row = row.map_err(|e| Error::malformed("selector csv", idx + 2, e.to_string()))?;
        out.push(LabeledExample {
            features: FeatureVector {
                a: row.a,
                b: row.b,
                c: row.c,
                d: row.d,
                e: row.e,
            },
            label: row.label,
            provenance: row.provenance,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn span(start: usize, end: usize, surface: &str, ps: f64, pe: f64) -> CandidateSpan {
        CandidateSpan {
            start,
            end,
            surface: surface.into(),
            confidence: ps + pe,
            p_start: ps,
            p_end: pe,
        }
    }

    #[test]
    fn containment_flag_follows_nesting() {
        let all = vec![
            span(3, 5, "multinational technology company", 0.9, 0.9),
            span(4, 5, "technology company", 0.8, 0.9),
            span(5, 5, "company", 0.7, 0.9),
        ];
        let kg = KgStore::default();
        assert_eq!(extract_features(&all[0], &all, &kg, LanguageMode::Word).unwrap().e, 1.0);
        assert_eq!(extract_features(&all[2], &all, &kg, LanguageMode::Word).unwrap().e, 0.0);
    }

    #[test]
    fn kg_membership_sets_d() {
        let all = vec![span(5, 5, "company", 0.7, 0.9)];
        let kg = KgStore::from_pairs([("Google", "company")]);
        assert_eq!(extract_features(&all[0], &all, &kg, LanguageMode::Word).unwrap().d, 1.0);
        let empty = KgStore::default();
        assert_eq!(extract_features(&all[0], &all, &empty, LanguageMode::Word).unwrap().d, 0.0);
    }

    #[test]
    fn a_is_b_plus_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let all: Vec<CandidateSpan> = (0..100)
            .map(|k| span(k, k, "x", rng.random(), rng.random()))
            .collect();
        let kg = KgStore::default();
        for c in &all {
            let f = extract_features(c, &all, &kg, LanguageMode::Word).unwrap();
            // recompute from the profile values
            assert!((f.a - (c.p_start + c.p_end)).abs() <= 1e-12);
            assert!((f.a - (f.b + f.c)).abs() <= 1e-12);
        }
    }

    #[test]
    fn absent_candidate_is_an_error() {
        let all = vec![span(0, 0, "a", 0.5, 0.5)];
        let other = span(1, 1, "b", 0.5, 0.5);
        assert!(matches!(
            extract_features(&other, &all, &KgStore::default(), LanguageMode::Word),
            Err(Error::CandidateNotFound { start: 1, end: 1 })
        ));
    }

    #[test]
    fn csv_header_and_round_trip() {
        let examples = vec![
            LabeledExample {
                features: FeatureVector::from_array([1.5, 0.75, 0.75, 1.0, 0.0]),
                label: Label::Keep,
                provenance: "task-1".into(),
            },
            LabeledExample {
                features: FeatureVector::from_array([0.25, 0.125, 0.125, 0.0, 1.0]),
                label: Label::Drop,
                provenance: "task-2".into(),
            },
        ];
        let mut buf = Vec::new();
        write_examples_csv(&examples, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("A,B,C,D,E,label,provenance\n"));
        assert_eq!(read_examples_csv(&buf[..]).unwrap(), examples);
    }

    #[test]
    fn bad_label_reports_line() {
        let text = "A,B,C,D,E,label,provenance\n1,0.5,0.5,1,0,maybe,t\n";
        assert!(matches!(
            read_examples_csv(text.as_bytes()),
            Err(Error::Malformed { line: 2, .. })
        ));
    }
}
