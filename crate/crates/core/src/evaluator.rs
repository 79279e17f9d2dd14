//! Evaluation against a KG and human judgments.
//!
//! Every extracted concept is an existing concept (EC, already linked to the
//! entity in the KG), a new concept (NC, judged correct but absent from the
//! KG), or wrong. Relative recall pools the (entity, NC) pairs of all compared
//! systems. Metrics with a zero denominator are `None`, never 0.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{concept_key, tokenize, KgStore, LanguageMode};
use crate::error::{Error, Result};

/// One line of a system output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemOutputRow {
    pub entity_id: String,
    pub concepts: Vec<String>,
    pub system_id: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemOutput {
    pub system_id: String,
    pub entities: BTreeMap<String, Vec<String>>,
}

impl SystemOutput {
    pub fn new(system_id: impl Into<String>) -> Self {
        SystemOutput {
            system_id: system_id.into(),
            entities: BTreeMap::new(),
        }
    }

    /// Appends concepts for an entity, skipping ones already present under the
    /// same normalized key.
    pub fn add(&mut self, entity_id: &str, concepts: impl IntoIterator<Item = String>, mode: LanguageMode) {
        let list = self.entities.entry(entity_id.to_string()).or_default();
        let mut seen: HashSet<String> = list.iter().map(|c| concept_key(c, mode)).collect();
        for c in concepts {
            let key = concept_key(&c, mode);
            if !key.is_empty() && seen.insert(key) {
                list.push(c);
            }
        }
    }

    pub fn concept_count(&self) -> usize {
        self.entities.values().map(Vec::len).sum()
    }

    /// Groups rows by system id, in order of first appearance.
    pub fn from_rows(rows: Vec<SystemOutputRow>, mode: LanguageMode) -> Vec<SystemOutput> {
        let mut systems: Vec<SystemOutput> = Vec::new();
        for row in rows {
            let idx = match systems.iter().position(|s| s.system_id == row.system_id) {
                Some(i) => i,
                None => {
                    systems.push(SystemOutput::new(row.system_id.clone()));
                    systems.len() - 1
                }
            };
            systems[idx].add(&row.entity_id, row.concepts, mode);
        }
        systems
    }

    pub fn to_rows(&self) -> Vec<SystemOutputRow> {
        self.entities
            .iter()
            .map(|(entity_id, concepts)| SystemOutputRow {
                entity_id: entity_id.clone(),
                concepts: concepts.clone(),
                system_id: self.system_id.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgmentStore {
    mode: LanguageMode,
    verdicts: BTreeMap<(String, String), Verdict>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JudgmentRow {
    entity_id: String,
    concept: String,
    verdict: Verdict,
}

impl JudgmentStore {
    pub fn new(mode: LanguageMode) -> Self {
        JudgmentStore {
            mode,
            verdicts: BTreeMap::new(),
        }
    }

    /// Records a verdict; a later verdict for the same pair replaces the
    /// earlier one.
    pub fn insert(&mut self, entity_id: &str, concept: &str, verdict: Verdict) {
        self.verdicts.insert(
            (entity_id.to_string(), concept_key(concept, self.mode)),
            verdict,
        );
    }

    pub fn get(&self, entity_id: &str, concept: &str) -> Option<Verdict> {
        self.verdicts
            .get(&(entity_id.to_string(), concept_key(concept, self.mode)))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.verdicts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verdicts.is_empty()
    }

    pub fn read_csv<R: Read>(input: R, mode: LanguageMode) -> Result<Self> {
        let mut store = JudgmentStore::new(mode);
        let mut reader = csv::Reader::from_reader(input);
        for (idx, row) in reader.deserialize::<JudgmentRow>().enumerate() {
            let row = row.map_err(|e| Error::malformed("judgments csv", idx + 2, e.to_string()))?;
            store.insert(&row.entity_id, &row.concept, row.verdict);
        }
        Ok(store)
    }

    /// Writes `entity_id,concept,verdict` using normalized concept keys.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for ((entity_id, concept), verdict) in &self.verdicts {
            w.serialize(JudgmentRow {
                entity_id: entity_id.clone(),
                concept: concept.clone(),
                verdict: *verdict,
            })
            .map_err(|e| Error::malformed("judgments csv", 0, e.to_string()))?;
        }
        w.flush()
            .map_err(|e| Error::malformed("judgments csv", 0, e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConceptClass {
    #[serde(rename = "EC")]
    Existing,
    #[serde(rename = "NC")]
    New,
    #[serde(rename = "wrong")]
    Wrong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedConcept {
    pub entity_id: String,
    pub concept: String,
    pub class: ConceptClass,
}

/// EC when the KG already links the concept to the entity; otherwise the
/// judgment decides between NC and wrong. Only non-EC concepts need a
/// judgment.
pub fn classify_concepts(
    output: &SystemOutput,
    kg: &KgStore,
    judgments: &JudgmentStore,
    mode: LanguageMode,
) -> Result<Vec<ClassifiedConcept>> {
    let mut out = Vec::with_capacity(output.concept_count());
    for (entity_id, concepts) in &output.entities {
        for concept in concepts {
            let class = if kg.entity_has_concept(entity_id, concept, mode) {
                ConceptClass::Existing
            } else {
                match judgments.get(entity_id, concept) {
                    Some(Verdict::Correct) => ConceptClass::New,
                    Some(Verdict::Incorrect) => ConceptClass::Wrong,
                    None => {
                        return Err(Error::MissingJudgment {
                            entity_id: entity_id.clone(),
                            concept: concept.clone(),
                        })
                    }
                }
            };
            out.push(ClassifiedConcept {
                entity_id: entity_id.clone(),
                concept: concept.clone(),
                class,
            });
        }
    }
    Ok(out)
}

/// Graphemes in character mode, whitespace-separated words in word mode.
pub fn concept_length(concept: &str, mode: LanguageMode) -> Result<usize> {
    match mode {
        LanguageMode::Word => match concept.split_whitespace().count() {
            0 => Err(Error::EmptyConcept),
            n => Ok(n),
        },
        LanguageMode::Character => tokenize(concept, mode)
            .map(|t| t.len())
            .map_err(|_| Error::EmptyConcept),
    }
}

pub fn mean_length<'a>(concepts: impl IntoIterator<Item = &'a str>, mode: LanguageMode) -> Result<Option<f64>> {
    let mut total = 0usize;
    let mut count = 0usize;
    for c in concepts {
        total += concept_length(c, mode)?;
        count += 1;
    }
    Ok((count > 0).then(|| total as f64 / count as f64))
}

fn is_contiguous_subsequence(needle: &[String], hay: &[String]) -> bool {
    needle.len() <= hay.len() && hay.windows(needle.len()).any(|w| w == needle)
}

/// Fraction of concepts that contain, or are contained in, another concept
/// of the same entity as a contiguous token run. Duplicate surfaces within
/// an entity are counted once.
pub fn oc_ratio<'a, I, C>(per_entity: I, mode: LanguageMode) -> f64
where
    I: IntoIterator<Item = C>,
    C: IntoIterator<Item = &'a String>,
{
    let mut total = 0usize;
    let mut overlapped = 0usize;
    for concepts in per_entity {
        let mut seen = HashSet::new();
        let seqs: Vec<Vec<String>> = concepts
            .into_iter()
            .map(|c| concept_key(c, mode))
            .filter(|k| !k.is_empty() && seen.insert(k.clone()))
            .map(|k| tokenize(&k, mode).unwrap_or_default())
            .collect();
        total += seqs.len();
        for (a, sa) in seqs.iter().enumerate() {
            let hit = seqs.iter().enumerate().any(|(b, sb)| {
                a != b && (is_contiguous_subsequence(sa, sb) || is_contiguous_subsequence(sb, sa))
            });
            overlapped += hit as usize;
        }
    }
    if total == 0 {
        0.0
    } else {
        overlapped as f64 / total as f64
    }
}

pub fn precision(classified: &[ClassifiedConcept]) -> Option<f64> {
    if classified.is_empty() {
        return None;
    }
    let correct = classified
        .iter()
        .filter(|c| c.class != ConceptClass::Wrong)
        .count();
    Some(correct as f64 / classified.len() as f64)
}

fn nc_pairs(classified: &[ClassifiedConcept], mode: LanguageMode) -> BTreeSet<(String, String)> {
    classified
        .iter()
        .filter(|c| c.class == ConceptClass::New)
        .map(|c| (c.entity_id.clone(), concept_key(&c.concept, mode)))
        .collect()
}

/// Per-system share of the pooled (entity, NC) pairs, plus the pool size.
pub fn relative_recall(systems: &[Vec<ClassifiedConcept>], mode: LanguageMode) -> (Vec<Option<f64>>, usize) {
    let sets: Vec<_> = systems.iter().map(|s| nc_pairs(s, mode)).collect();
    let pool: BTreeSet<&(String, String)> = sets.iter().flatten().collect();
    let size = pool.len();
    let recalls = sets
        .iter()
        .map(|s| (size > 0).then(|| s.len() as f64 / size as f64))
        .collect();
    (recalls, size)
}

/// Harmonic mean; `None` if either input is. Equal inputs return that value
/// unchanged, so two zeros give 0.
pub fn relative_f1(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    let (p, r) = (precision?, recall?);
    if p == r {
        return Some(p);
    }
    Some(2.0 * p * r / (p + r))
}

/// Share of gold (entity, concept) pairs that a system extracted, over the
/// entities present in `gold`.
pub fn gold_recall(
    output: &SystemOutput,
    gold: &BTreeMap<String, BTreeSet<String>>,
    mode: LanguageMode,
) -> Option<f64> {
    let mut total = 0usize;
    let mut hit = 0usize;
    for (entity, concepts) in gold {
        let extracted: HashSet<String> = output
            .entities
            .get(entity)
            .map(|cs| cs.iter().map(|c| concept_key(c, mode)).collect())
            .unwrap_or_default();
        for c in concepts {
            total += 1;
            hit += extracted.contains(&concept_key(c, mode)) as usize;
        }
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system_id: String,
    pub total: usize,
    pub ec_count: usize,
    pub nc_count: usize,
    pub wrong_count: usize,
    pub ec_length: Option<f64>,
    pub nc_length: Option<f64>,
    pub oc_ratio: f64,
    pub precision: Option<f64>,
    pub relative_recall: Option<f64>,
    pub relative_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub language_mode: LanguageMode,
    pub nc_pool_size: usize,
    pub reports: Vec<EvalReport>,
}

fn lengths(classified: &[ClassifiedConcept], class: ConceptClass, mode: LanguageMode) -> Result<Option<f64>> {
    mean_length(
        classified
            .iter()
            .filter(|c| c.class == class)
            .map(|c| c.concept.as_str()),
        mode,
    )
}

/// Builds one report per system. Classification runs per system in
/// parallel; recall needs the pooled NC set of all of them.
pub fn evaluate_systems(
    outputs: &[SystemOutput],
    kg: &KgStore,
    judgments: &JudgmentStore,
    mode: LanguageMode,
) -> Result<Comparison> {
    let classified: Vec<Vec<ClassifiedConcept>> = outputs
        .par_iter()
        .map(|o| classify_concepts(o, kg, judgments, mode))
        .collect::<Result<_>>()?;
    let (recalls, pool) = relative_recall(&classified, mode);
    let mut reports = Vec::with_capacity(outputs.len());
    for ((output, cls), recall) in outputs.iter().zip(&classified).zip(recalls) {
        let count = |k| cls.iter().filter(|c| c.class == k).count();
        let p = precision(cls);
        reports.push(EvalReport {
            system_id: output.system_id.clone(),
            total: cls.len(),
            ec_count: count(ConceptClass::Existing),
            nc_count: count(ConceptClass::New),
            wrong_count: count(ConceptClass::Wrong),
            ec_length: lengths(cls, ConceptClass::Existing, mode)?,
            nc_length: lengths(cls, ConceptClass::New, mode)?,
            oc_ratio: oc_ratio(output.entities.values(), mode),
            precision: p,
            relative_recall: recall,
            relative_f1: relative_f1(p, recall),
        });
    }
    Ok(Comparison {
        language_mode: mode,
        nc_pool_size: pool,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const W: LanguageMode = LanguageMode::Word;

    fn output(system: &str, items: &[(&str, &[&str])]) -> SystemOutput {
        let mut o = SystemOutput::new(system);
        for (e, cs) in items {
            o.add(e, cs.iter().map(|s| s.to_string()), W);
        }
        o
    }

    #[test]
    fn ec_nc_wrong() {
        let kg = KgStore::from_pairs([("Prince Station", "location"), ("Prince Station", "station")]);
        let mut j = JudgmentStore::new(W);
        j.insert("Prince Station", "the railway station of JR East Japan", Verdict::Correct);
        j.insert("Prince Station", "metro", Verdict::Incorrect);
        let o = output(
            "s",
            &[("Prince Station", &["station", "the railway station of JR East Japan", "metro"])],
        );
        let c = classify_concepts(&o, &kg, &j, W).unwrap();
        let classes: Vec<ConceptClass> = c.iter().map(|x| x.class).collect();
        assert_eq!(classes, [ConceptClass::Existing, ConceptClass::New, ConceptClass::Wrong]);
    }

    #[test]
    fn missing_judgment_names_the_pair() {
        let o = output("s", &[("Google", &["search engine"])]);
        let err = classify_concepts(&o, &KgStore::default(), &JudgmentStore::new(W), W).unwrap_err();
        assert!(err.to_string().contains("Google") && err.to_string().contains("search engine"));
    }

    #[test]
    fn lengths_by_mode() {
        assert_eq!(concept_length("American politician", W).unwrap(), 2);
        assert_eq!(concept_length("科技公司", LanguageMode::Character).unwrap(), 4);
        assert!(concept_length("  ", W).is_err());
        let ncs = ["a b c", "d", "e f"];
        // (3 + 1 + 2) / 3
        assert_eq!(mean_length(ncs, W).unwrap(), Some(2.0));
        assert_eq!(mean_length([], W).unwrap(), None);
    }

    #[test]
    fn oc_ratio_cases() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(oc_ratio([&s(&["station", "railway station"])], W), 1.0);
        assert_eq!(oc_ratio([&s(&["station", "politician"])], W), 0.0);
        assert_eq!(oc_ratio(Vec::<&Vec<String>>::new(), W), 0.0);
        // overlap across entities does not count
        assert_eq!(oc_ratio([&s(&["station"]), &s(&["railway station"])], W), 0.0);
        // "way station" is not a contiguous run of "railway station" tokens
        assert_eq!(oc_ratio([&s(&["way station", "railway station", "rail"])], W), 0.0);
    }

    #[test]
    fn precision_identity() {
        let mk = |class| ClassifiedConcept {
            entity_id: "e".into(),
            concept: "c".into(),
            class,
        };
        let mut v = vec![mk(ConceptClass::New); 9];
        v.push(mk(ConceptClass::Wrong));
        assert_eq!(precision(&v), Some(0.9));
        assert_eq!(precision(&[mk(ConceptClass::Wrong)]), Some(0.0));
        assert_eq!(precision(&[]), None);
    }

    #[test]
    fn f1_anchors() {
        let f = relative_f1(Some(0.9222), Some(0.3963)).unwrap();
        assert!((f - 0.5544).abs() <= 5e-4, "{f}");
        let f = relative_f1(Some(0.7635), Some(0.3067)).unwrap();
        assert!((f - 0.4377).abs() <= 5e-4, "{f}");
        assert_eq!(relative_f1(Some(0.4), Some(0.4)), Some(0.4));
        assert_eq!(relative_f1(None, Some(0.4)), None);
        assert!((323.0f64 / 815.0 - 0.3963).abs() < 5e-5);
    }

    #[test]
    fn relative_recall_pools_pairs() {
        let mk = |e: &str, c: &str| ClassifiedConcept {
            entity_id: e.into(),
            concept: c.into(),
            class: ConceptClass::New,
        };
        let a = vec![mk("e1", "x"), mk("e1", "y")];
        let b = vec![mk("e1", "y"), mk("e2", "x")];
        let c = vec![mk("e2", "z")];
        let (r, pool) = relative_recall(&[a.clone(), b, c], W);
        // pool {(e1,x),(e1,y),(e2,x),(e2,z)}
        assert_eq!(pool, 4);
        assert_eq!(r, [Some(0.5), Some(0.5), Some(0.25)]);
        assert_eq!(relative_recall(&[a], W).0, [Some(1.0)]);
        assert_eq!(relative_recall(&[vec![]], W).0, [None]);
    }

    #[test]
    fn judgments_csv_round_trip_and_overwrite() {
        let text = "entity_id,concept,verdict\ne1,Tech  Company,correct\ne1,tech company,incorrect\n";
        let j = JudgmentStore::read_csv(text.as_bytes(), W).unwrap();
        assert_eq!(j.len(), 1);
        assert_eq!(j.get("e1", "tech company"), Some(Verdict::Incorrect));
        let mut buf = Vec::new();
        j.write_csv(&mut buf).unwrap();
        assert_eq!(JudgmentStore::read_csv(&buf[..], W).unwrap(), j);
        let bad = "entity_id,concept,verdict\ne1,x,maybe\n";
        assert!(matches!(
            JudgmentStore::read_csv(bad.as_bytes(), W),
            Err(Error::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn report_counts_add_up() {
        let kg = KgStore::from_pairs([("e1", "station")]);
        let mut j = JudgmentStore::new(W);
        j.insert("e1", "railway station", Verdict::Correct);
        j.insert("e1", "rail", Verdict::Incorrect);
        j.insert("e2", "politician", Verdict::Correct);
        let a = output("a", &[("e1", &["station", "railway station", "rail"])]);
        let b = output("b", &[("e2", &["politician"])]);
        let cmp = evaluate_systems(&[a, b], &kg, &j, W).unwrap();
        assert_eq!(cmp.nc_pool_size, 2);
        let ra = &cmp.reports[0];
        assert_eq!((ra.ec_count, ra.nc_count, ra.wrong_count, ra.total), (1, 1, 1, 3));
        assert_eq!(ra.precision, Some(2.0 / 3.0));
        assert_eq!(ra.relative_recall, Some(0.5));
        // "rail" is not a token of "railway station"
        assert_eq!(ra.oc_ratio, 2.0 / 3.0);
        assert_eq!(ra.nc_length, Some(2.0));
        let rb = &cmp.reports[1];
        assert_eq!(rb.ec_length, None);
        assert_eq!(rb.precision, Some(1.0));
    }

    #[test]
    fn gold_recall_counts_pairs() {
        let o = output("s", &[("e1", &["Station", "rail"])]);
        let gold = BTreeMap::from([
            ("e1".to_string(), BTreeSet::from(["station".to_string(), "railway station".to_string()])),
            ("e2".to_string(), BTreeSet::from(["city".to_string()])),
        ]);
        assert_eq!(gold_recall(&o, &gold, W), Some(1.0 / 3.0));
        assert_eq!(gold_recall(&o, &BTreeMap::new(), W), None);
    }

    const POOL: &[&str] = &["station", "railway station", "railway", "east japan", "japan", "city", "old city"];

    fn brute_oc(concepts: &[Vec<String>]) -> f64 {
        let mut total = 0;
        let mut hit = 0;
        for cs in concepts {
            let uniq: Vec<&String> = cs.iter().collect::<BTreeSet<_>>().into_iter().collect();
            total += uniq.len();
            for a in &uniq {
                let ta: Vec<&str> = a.split(' ').collect();
                let found = uniq.iter().any(|b| {
                    if a == b {
                        return false;
                    }
                    let tb: Vec<&str> = b.split(' ').collect();
                    let sub = |x: &[&str], y: &[&str]| {
                        (0..=y.len().saturating_sub(x.len())).any(|i| y.len() >= x.len() && y[i..i + x.len()] == *x)
                    };
                    sub(&ta, &tb) || sub(&tb, &ta)
                });
                hit += found as usize;
            }
        }
        if total == 0 { 0.0 } else { hit as f64 / total as f64 }
    }

    proptest! {
        #[test]
        fn oc_ratio_matches_pair_scan(
            ents in proptest::collection::vec(proptest::collection::vec(0..POOL.len(), 0..6), 0..5)
        ) {
            let concepts: Vec<Vec<String>> = ents
                .iter()
                .map(|e| e.iter().map(|&i| POOL[i].to_string()).collect())
                .collect();
            prop_assert_eq!(oc_ratio(&concepts, W), brute_oc(&concepts));
        }

        #[test]
        fn partition_and_precision_identity(verdicts in proptest::collection::vec((0..POOL.len(), any::<bool>()), 1..20)) {
            let kg = KgStore::from_pairs([("e", "station"), ("e", "city")]);
            let mut j = JudgmentStore::new(W);
            let mut o = SystemOutput::new("s");
            for (i, ok) in &verdicts {
                if j.get("e", POOL[*i]).is_none() {
                    j.insert("e", POOL[*i], if *ok { Verdict::Correct } else { Verdict::Incorrect });
                }
                o.add("e", [POOL[*i].to_string()], W);
            }
            let c = classify_concepts(&o, &kg, &j, W).unwrap();
            prop_assert_eq!(c.len(), o.concept_count());
            let ec = c.iter().filter(|x| x.class == ConceptClass::Existing).count();
            let nc = c.iter().filter(|x| x.class == ConceptClass::New).count();
            let p = precision(&c).unwrap();
            prop_assert!((p * c.len() as f64 - (ec + nc) as f64).abs() < 1e-9);
        }
    }
}
