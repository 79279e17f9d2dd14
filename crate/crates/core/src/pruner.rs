//! Rule-based cleanup of selected concepts for one entity.
//!
//! Rules run in a fixed order, each logged to an audit trail:
//!
//! 1. `strip_function_words` removes leading function words ("is ancient
//!    costume drama" becomes "ancient costume drama"); a rewrite that lands on
//!    an existing concept is dropped.
//! 2. `modifier_prefix` drops a concept that is a strict token prefix, but not
//!    a suffix, of another surviving concept and is unknown to the KG
//!    ("railway" next to "railway station").
//! 3. `exclusive_group` keeps one member of each configured group of mutually
//!    exclusive concepts: highest vote fraction, then longer surface, then
//!    lexicographically smaller.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{concept_key, detokenize, token_key, tokenize, KgStore, LanguageMode};
use crate::error::{Error, Result};
use crate::lexicon::default_function_words;

pub const RULE_STRIP: &str = "strip_function_words";
pub const RULE_MODIFIER: &str = "modifier_prefix";
pub const RULE_EXCLUSIVE: &str = "exclusive_group";
pub const RULE_DUPLICATE: &str = "duplicate";
pub const RULE_NONE: &str = "none";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionWords {
    #[serde(default)]
    pub word: Vec<String>,
    #[serde(default)]
    pub character: Vec<String>,
}

impl FunctionWords {
    pub fn for_mode(&self, mode: LanguageMode) -> &[String] {
        match mode {
            LanguageMode::Word => &self.word,
            LanguageMode::Character => &self.character,
        }
    }
}

impl Default for FunctionWords {
    fn default() -> Self {
        FunctionWords {
            word: default_function_words(LanguageMode::Word),
            character: default_function_words(LanguageMode::Character),
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    #[serde(default)]
    pub exclusive_groups: Vec<Vec<String>>,
    #[serde(default)]
    pub function_words: FunctionWords,
    #[serde(default = "yes")]
    pub strip_enabled: bool,
    #[serde(default = "yes")]
    pub modifier_rule_enabled: bool,
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet {
            exclusive_groups: Vec::new(),
            function_words: FunctionWords::default(),
            strip_enabled: true,
            modifier_rule_enabled: true,
        }
    }
}

impl RuleSet {
    pub fn validate(&self, mode: LanguageMode) -> Result<()> {
        for group in &self.exclusive_groups {
            if group.len() < 2 {
                return Err(Error::Config(format!(
                    "exclusive group {group:?} needs at least two members"
                )));
            }
        }
        if self.strip_enabled && self.function_words.for_mode(mode).is_empty() {
            return Err(Error::Config(format!(
                "function word list for {} mode is empty while stripping is enabled",
                mode.as_str()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredConcept {
    pub surface: String,
    pub vote_fraction: f64,
}

impl ScoredConcept {
    pub fn new(surface: impl Into<String>, vote_fraction: f64) -> Self {
        ScoredConcept {
            surface: surface.into(),
            vote_fraction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneAction {
    Kept,
    Dropped,
    Rewritten,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneDecision {
    pub concept: String,
    pub action: PruneAction,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rewritten_to: Option<String>,
    pub rule_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PruneOutcome {
    pub kept: Vec<ScoredConcept>,
    pub decisions: Vec<PruneDecision>,
}

struct Working {
    original: String,
    surface: String,
    keys: Vec<String>,
    vote: f64,
    alive: bool,
}

fn log(decisions: &mut Vec<PruneDecision>, concept: &str, action: PruneAction, rule: &str, reason: String) {
    decisions.push(PruneDecision {
        concept: concept.to_string(),
        action,
        rewritten_to: None,
        rule_id: rule.to_string(),
        reason,
    });
}

pub fn prune(concepts: &[ScoredConcept], rules: &RuleSet, kg: &KgStore, mode: LanguageMode) -> PruneOutcome {
    let mut decisions = Vec::new();

    // canonical order makes the result independent of input order
    let mut items: Vec<&ScoredConcept> = concepts.iter().collect();
    items.sort_by(|a, b| {
        concept_key(&a.surface, mode)
            .cmp(&concept_key(&b.surface, mode))
            .then(b.vote_fraction.total_cmp(&a.vote_fraction))
            .then(a.surface.cmp(&b.surface))
    });

    let function_seqs: Vec<Vec<String>> = if rules.strip_enabled {
        rules
            .function_words
            .for_mode(mode)
            .iter()
            .filter_map(|w| tokenize(w, mode).ok())
            .map(|toks| toks.iter().map(|t| token_key(t, mode)).collect())
            .collect()
    } else {
        Vec::new()
    };

    let mut work: Vec<Working> = Vec::new();
    let mut rewrites: Vec<Working> = Vec::new();
    for c in items {
        let tokens = tokenize(&c.surface, mode).unwrap_or_default();
        let mut keys: Vec<String> = tokens.iter().map(|t| token_key(t, mode)).collect();
        let mut cut = 0;
        'strip: loop {
            for seq in &function_seqs {
                if !seq.is_empty() && keys[cut..].starts_with(seq) {
                    cut += seq.len();
                    continue 'strip;
                }
            }
            break;
        }
        if tokens.is_empty() {
            log(&mut decisions, &c.surface, PruneAction::Dropped, RULE_STRIP, "empty concept".into());
            continue;
        }
        if cut == keys.len() {
            log(
                &mut decisions,
                &c.surface,
                PruneAction::Dropped,
                RULE_STRIP,
                "consists only of function words".into(),
            );
            continue;
        }
        let w = Working {
            original: c.surface.clone(),
            surface: detokenize(&tokens[cut..], mode),
            keys: keys.split_off(cut),
            vote: c.vote_fraction,
            alive: true,
        };
        if cut > 0 {
            decisions.push(PruneDecision {
                concept: c.surface.clone(),
                action: PruneAction::Rewritten,
                rewritten_to: Some(w.surface.clone()),
                rule_id: RULE_STRIP.into(),
                reason: "leading function word removed".into(),
            });
            rewrites.push(w);
        } else {
            work.push(w);
        }
    }

    // unchanged concepts claim their surface first; rewrites that collide drop
    let mut by_key: HashMap<Vec<String>, usize> = HashMap::new();
    let mut survivors: Vec<Working> = Vec::new();
    for (w, rewritten) in work
        .into_iter()
        .map(|w| (w, false))
        .chain(rewrites.into_iter().map(|w| (w, true)))
    {
        if let Some(&idx) = by_key.get(&w.keys) {
            let existing = &mut survivors[idx];
            existing.vote = existing.vote.max(w.vote);
            let rule = if rewritten { RULE_STRIP } else { RULE_DUPLICATE };
            log(
                &mut decisions,
                &w.original,
                PruneAction::Dropped,
                rule,
                format!("duplicates {:?}", existing.surface),
            );
            continue;
        }
        by_key.insert(w.keys.clone(), survivors.len());
        survivors.push(w);
    }

    if rules.modifier_rule_enabled {
        let drop: Vec<Option<usize>> = survivors
            .iter()
            .map(|p| {
                if kg.contains_concept(&p.surface, mode) {
                    return None;
                }
                survivors.iter().position(|x| {
                    x.keys.len() > p.keys.len()
                        && x.keys.starts_with(&p.keys)
                        && !x.keys.ends_with(&p.keys)
                })
            })
            .collect();
        for (i, host) in drop.into_iter().enumerate() {
            if let Some(h) = host {
                let reason = format!(
                    "modifier of {:?} and not a known concept",
                    survivors[h].surface
                );
                log(&mut decisions, &survivors[i].original, PruneAction::Dropped, RULE_MODIFIER, reason);
                survivors[i].alive = false;
            }
        }
    }

    for group in &rules.exclusive_groups {
        let group_keys: Vec<Vec<String>> = group
            .iter()
            .map(|g| {
                tokenize(g, mode)
                    .unwrap_or_default()
                    .iter()
                    .map(|t| token_key(t, mode))
                    .collect()
            })
            .collect();
        let members: Vec<usize> = (0..survivors.len())
            .filter(|&i| survivors[i].alive && group_keys.contains(&survivors[i].keys))
            .collect();
        if members.len() < 2 {
            continue;
        }
        let winner = *members
            .iter()
            .max_by(|&&a, &&b| {
                let (x, y) = (&survivors[a], &survivors[b]);
                x.vote
                    .total_cmp(&y.vote)
                    .then(x.surface.chars().count().cmp(&y.surface.chars().count()))
                    .then(y.surface.cmp(&x.surface))
            })
            .expect("non-empty");
        for &m in &members {
            if m != winner {
                let reason = format!("exclusive with {:?}", survivors[winner].surface);
                log(&mut decisions, &survivors[m].original, PruneAction::Dropped, RULE_EXCLUSIVE, reason);
                survivors[m].alive = false;
            }
        }
    }

    let mut kept: Vec<ScoredConcept> = Vec::new();
    for w in survivors.into_iter().filter(|w| w.alive) {
        log(&mut decisions, &w.original, PruneAction::Kept, RULE_NONE, String::new());
        if let Some(last) = decisions.last_mut() {
            if w.original != w.surface {
                last.rewritten_to = Some(w.surface.clone());
            }
        }
        kept.push(ScoredConcept::new(w.surface, w.vote));
    }
    kept.sort_by(|a, b| {
        b.vote_fraction
            .total_cmp(&a.vote_fraction)
            .then_with(|| concept_key(&a.surface, mode).cmp(&concept_key(&b.surface, mode)))
    });
    PruneOutcome { kept, decisions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn surfaces(outcome: &PruneOutcome) -> BTreeSet<String> {
        outcome.kept.iter().map(|c| c.surface.clone()).collect()
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn find<'a>(outcome: &'a PruneOutcome, concept: &str, action: PruneAction) -> &'a PruneDecision {
        outcome
            .decisions
            .iter()
            .find(|d| d.concept == concept && d.action == action)
            .unwrap_or_else(|| panic!("no {action:?} decision for {concept}"))
    }

    #[test]
    fn president_and_vice_president_are_exclusive() {
        let rules = RuleSet {
            exclusive_groups: vec![vec!["president".into(), "vice president".into()]],
            ..RuleSet::default()
        };
        let input = [ScoredConcept::new("president", 0.8), ScoredConcept::new("vice president", 0.8)];
        let out = prune(&input, &rules, &KgStore::default(), LanguageMode::Word);
        assert_eq!(surfaces(&out), set(&["vice president"]));
        assert_eq!(find(&out, "president", PruneAction::Dropped).rule_id, RULE_EXCLUSIVE);
    }

    #[test]
    fn higher_vote_wins_the_group() {
        let rules = RuleSet {
            exclusive_groups: vec![vec!["president".into(), "vice president".into()]],
            ..RuleSet::default()
        };
        let input = [ScoredConcept::new("president", 0.9), ScoredConcept::new("vice president", 0.6)];
        let out = prune(&input, &rules, &KgStore::default(), LanguageMode::Word);
        assert_eq!(surfaces(&out), set(&["president"]));
    }

    #[test]
    fn modifier_prefix_is_dropped_head_suffix_kept() {
        let input = [
            ScoredConcept::new("railway", 0.7),
            ScoredConcept::new("railway station", 0.9),
            ScoredConcept::new("station", 0.9),
        ];
        let kg = KgStore::from_pairs([("Prince Station", "station")]);
        let out = prune(&input, &RuleSet::default(), &kg, LanguageMode::Word);
        assert_eq!(surfaces(&out), set(&["railway station", "station"]));
        assert_eq!(find(&out, "railway", PruneAction::Dropped).rule_id, RULE_MODIFIER);
    }

    #[test]
    fn modifier_rule_spares_kg_concepts() {
        let input = [ScoredConcept::new("railway", 0.7), ScoredConcept::new("railway station", 0.9)];
        let kg = KgStore::from_pairs([("x", "railway")]);
        let out = prune(&input, &RuleSet::default(), &kg, LanguageMode::Word);
        assert_eq!(surfaces(&out), set(&["railway", "railway station"]));
    }

    #[test]
    fn leading_copula_is_stripped() {
        let input = [ScoredConcept::new("is ancient costume drama", 0.8)];
        let out = prune(&input, &RuleSet::default(), &KgStore::default(), LanguageMode::Word);
        assert_eq!(surfaces(&out), set(&["ancient costume drama"]));
        let d = find(&out, "is ancient costume drama", PruneAction::Rewritten);
        assert_eq!(d.rewritten_to.as_deref(), Some("ancient costume drama"));
        assert_eq!(d.rule_id, RULE_STRIP);
    }

    #[test]
    fn stripped_duplicate_is_dropped() {
        let alone = prune(
            &[ScoredConcept::new("in high school", 0.8)],
            &RuleSet::default(),
            &KgStore::default(),
            LanguageMode::Word,
        );
        assert_eq!(surfaces(&alone), set(&["high school"]));

        let both = prune(
            &[ScoredConcept::new("in high school", 0.8), ScoredConcept::new("high school", 0.6)],
            &RuleSet::default(),
            &KgStore::default(),
            LanguageMode::Word,
        );
        assert_eq!(surfaces(&both), set(&["high school"]));
        assert_eq!(find(&both, "in high school", PruneAction::Dropped).rule_id, RULE_STRIP);
        // merged vote keeps the stronger evidence
        assert_eq!(both.kept[0].vote_fraction, 0.8);
    }

    #[test]
    fn character_mode_strips_multi_char_function_words() {
        let input = [ScoredConcept::new("是一种古装剧", 0.9)];
        let out = prune(&input, &RuleSet::default(), &KgStore::default(), LanguageMode::Character);
        assert_eq!(surfaces(&out), set(&["古装剧"]));
    }

    #[test]
    fn empty_input() {
        let out = prune(&[], &RuleSet::default(), &KgStore::default(), LanguageMode::Word);
        assert!(out.kept.is_empty() && out.decisions.is_empty());
    }

    #[test]
    fn rule_set_json_shape() {
        let json = r#"{"exclusive_groups": [["president", "vice president"]],
                       "function_words": {"word": ["is", "in"], "character": ["是"]}}"#;
        let rules: RuleSet = serde_json::from_str(json).unwrap();
        assert!(rules.validate(LanguageMode::Word).is_ok());
        assert!(rules.modifier_rule_enabled);
        let bad = RuleSet {
            exclusive_groups: vec![vec!["solo".into()]],
            ..RuleSet::default()
        };
        assert!(bad.validate(LanguageMode::Word).is_err());
    }

    const WORDS: &[&str] = &[
        "is", "in", "a", "the", "railway", "station", "president", "vice", "high", "school",
        "company", "technology",
    ];

    fn concept_strategy() -> impl Strategy<Value = Vec<ScoredConcept>> {
        proptest::collection::vec(
            (proptest::collection::vec(0..WORDS.len(), 1..4), 0u8..5),
            0..8,
        )
        .prop_map(|items| {
            items
                .into_iter()
                .map(|(ws, v)| {
                    let surface = ws.iter().map(|&i| WORDS[i]).collect::<Vec<_>>().join(" ");
                    ScoredConcept::new(surface, v as f64 / 4.0)
                })
                .collect()
        })
    }

    fn prop_rules() -> RuleSet {
        RuleSet {
            exclusive_groups: vec![
                vec!["president".into(), "vice president".into()],
                vec!["station".into(), "railway station".into(), "school".into()],
            ],
            ..RuleSet::default()
        }
    }

    proptest! {
        #[test]
        fn idempotent(input in concept_strategy()) {
            let kg = KgStore::from_pairs([("x", "station"), ("y", "technology")]);
            let once = prune(&input, &prop_rules(), &kg, LanguageMode::Word);
            let twice = prune(&once.kept, &prop_rules(), &kg, LanguageMode::Word);
            prop_assert_eq!(&once.kept, &twice.kept);
        }

        #[test]
        fn order_independent_and_conserving(input in concept_strategy(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let kg = KgStore::from_pairs([("x", "station")]);
            let a = prune(&input, &prop_rules(), &kg, LanguageMode::Word);
            let mut shuffled = input.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = prune(&shuffled, &prop_rules(), &kg, LanguageMode::Word);
            prop_assert_eq!(&a.kept, &b.kept);

            let kept = a.decisions.iter().filter(|d| d.action == PruneAction::Kept).count();
            let dropped = a.decisions.iter().filter(|d| d.action == PruneAction::Dropped).count();
            prop_assert_eq!(kept + dropped, input.len());
            prop_assert_eq!(kept, a.kept.len());
            for d in &a.decisions {
                if d.action == PruneAction::Rewritten {
                    prop_assert!(d.rewritten_to.is_some());
                }
                if d.rule_id == RULE_MODIFIER {
                    prop_assert!(!kg.contains_concept(&d.concept, LanguageMode::Word));
                }
            }
        }
    }
}
