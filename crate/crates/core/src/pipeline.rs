//! File-based pipeline stages. Each stage reads the artifacts of the previous
//! one from the work directory, so any stage can be rerun on its own.
//!
//! | stage | reads | writes |
//! |---|---|---|
//! | build-dataset | corpus | `split.json` |
//! | train-head | corpus, KG, split | `head.json`, `train_log.jsonl` |
//! | decode | corpus, split, head | `candidates_<split>.jsonl` |
//! | label | train candidates, truth | `labels.csv` |
//! | select | labels, test candidates, KG | `forest.json`, `importance.json`, `selected.jsonl` |
//! | prune | selected, rules, KG | `output.jsonl`, `prune_audit.jsonl` |
//! | ftt | test candidates | `ftt_output.jsonl` |
//! | hearst | corpus, split, patterns | `hearst_output.jsonl` |
//! | evaluate | system outputs, KG, judgments or truth | `report.json` |
//! | batch-complete | corpus, head, forest, KG | `new_relations.tsv` |

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotation::{sample_tasks, AnnotationStore};
use crate::corpus::{
    concept_key, load_kg_dump, split_dataset, CorpusRow, DatasetSplit, EntityRecord, KgFormat,
    KgStore, LanguageMode, SplitManifest,
};
use crate::decoder::{decode, fixed_threshold_truncate, CandidateRecord, CandidateSpan, DecodeConfig};
use crate::error::{Error, Result};
use crate::evaluator::{
    evaluate_systems, gold_recall, Comparison, JudgmentStore, SystemOutput, SystemOutputRow, Verdict,
};
use crate::hearst::{compile_patterns, default_patterns, extract, HearstPattern};
use crate::io;
use crate::pointer_head::{
    forward, train_head, EmbedderConfig, EmbeddingProvider, EpochLog, HashedEmbedder, HeadCheckpoint,
    QuestionTemplate, TrainConfig,
};
use crate::pruner::{prune, PruneDecision, RuleSet, ScoredConcept};
use crate::selector::{
    extract_all, feature_importance, read_examples_csv, train_forest, write_examples_csv,
    ForestCheckpoint, ForestConfig, Label, LabeledExample, RandomForest,
};
use crate::synthetic::{truth_map, TruthRow};

pub const SYSTEM_ID: &str = "granule";
pub const FTT_SYSTEM_ID: &str = "ftt";
pub const HEARST_SYSTEM_ID: &str = "hearst";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub corpus: PathBuf,
    pub kg: PathBuf,
    pub work_dir: PathBuf,
    pub truth: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub patterns: Option<PathBuf>,
    pub judgments: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: "corpus.jsonl".into(),
            kg: "kg.tsv".into(),
            work_dir: "run".into(),
            truth: None,
            rules: None,
            patterns: None,
            judgments: None,
            labels: None,
        }
    }
}

/// Seeds for every random choice in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub split: u64,
    pub train: u64,
    pub forest: u64,
    pub sample: u64,
}

impl Seeds {
    pub fn uniform(seed: u64) -> Self {
        Seeds {
            split: seed,
            train: seed,
            forest: seed,
            sample: seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSettings {
    pub test_count: usize,
    pub train_val_ratio: f64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            test_count: 500,
            train_val_ratio: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectSettings {
    /// Candidates sampled for labeling.
    pub label_sample: usize,
}

impl Default for SelectSettings {
    fn default() -> Self {
        SelectSettings { label_sample: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FttSettings {
    pub threshold: f64,
}

impl Default for FttSettings {
    fn default() -> Self {
        FttSettings { threshold: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationSettings {
    pub sample_size: usize,
    /// Candidate dump the tasks are sampled from.
    pub split: SplitName,
}

impl Default for AnnotationSettings {
    fn default() -> Self {
        AnnotationSettings {
            sample_size: 1000,
            split: SplitName::Train,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub language_mode: LanguageMode,
    pub question: QuestionTemplate,
    pub paths: Paths,
    pub seeds: Seeds,
    pub split: SplitSettings,
    pub embedder: EmbedderConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub forest: ForestConfig,
    pub select: SelectSettings,
    pub ftt: FttSettings,
    pub annotation: AnnotationSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            language_mode: LanguageMode::Word,
            question: QuestionTemplate::default(),
            paths: Paths::default(),
            seeds: Seeds::default(),
            split: SplitSettings::default(),
            embedder: EmbedderConfig::default(),
            train: TrainConfig::default(),
            decode: DecodeConfig::default(),
            forest: ForestConfig::default(),
            select: SelectSettings::default(),
            ftt: FttSettings::default(),
            annotation: AnnotationSettings::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Parses TOML; relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path, context: &str) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::malformed(context, line, e.message().to_string())
        })?;
        let p = &mut cfg.paths;
        for path in [&mut p.corpus, &mut p.kg, &mut p.work_dir] {
            resolve(base, path);
        }
        for path in [&mut p.truth, &mut p.rules, &mut p.patterns, &mut p.judgments, &mut p.labels]
            .into_iter()
            .flatten()
        {
            resolve(base, path);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = Seeds::uniform(seed);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split.train_val_ratio > 0.0 && self.split.train_val_ratio < 1.0) {
            return Err(Error::Config("split.train_val_ratio must lie in (0, 1)".into()));
        }
        self.train_config().validate()?;
        self.decode.validate()?;
        if self.forest.tree_count == 0 {
            return Err(Error::Config("forest.tree_count must be at least 1".into()));
        }
        if self.embedder.dim == 0 {
            return Err(Error::Config("embedder.dim must be positive".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seeds.train,
            ..self.train.clone()
        }
    }

    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            seed: self.seeds.forest,
            ..self.forest.clone()
        }
    }

    pub fn artifacts(&self) -> Artifacts {
        Artifacts {
            dir: self.paths.work_dir.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
    All,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
            SplitName::All => "all",
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "train" => SplitName::Train,
            "validation" | "val" => SplitName::Validation,
            "test" => SplitName::Test,
            "all" => SplitName::All,
            other => return Err(Error::Config(format!("unknown split {other:?}"))),
        })
    }
}

/// Artifact locations inside the work directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    fn at(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
    pub fn split(&self) -> PathBuf {
        self.at("split.json")
    }
    pub fn head(&self) -> PathBuf {
        self.at("head.json")
    }
    pub fn train_log(&self) -> PathBuf {
        self.at("train_log.jsonl")
    }
    pub fn candidates(&self, split: SplitName) -> PathBuf {
        self.at(&format!("candidates_{}.jsonl", split.as_str()))
    }
    pub fn labels(&self) -> PathBuf {
        self.at("labels.csv")
    }
    pub fn forest(&self) -> PathBuf {
        self.at("forest.json")
    }
    pub fn importance(&self) -> PathBuf {
        self.at("importance.json")
    }
    pub fn selected(&self) -> PathBuf {
        self.at("selected.jsonl")
    }
    pub fn output(&self) -> PathBuf {
        self.at("output.jsonl")
    }
    pub fn prune_audit(&self) -> PathBuf {
        self.at("prune_audit.jsonl")
    }
    pub fn ftt_output(&self) -> PathBuf {
        self.at("ftt_output.jsonl")
    }
    pub fn hearst_output(&self) -> PathBuf {
        self.at("hearst_output.jsonl")
    }
    pub fn judgments(&self) -> PathBuf {
        self.at("judgments.csv")
    }
    pub fn report(&self) -> PathBuf {
        self.at("report.json")
    }
    pub fn new_relations(&self) -> PathBuf {
        self.at("new_relations.tsv")
    }
    pub fn annotation_dir(&self) -> PathBuf {
        self.at("annotation")
    }
}

/// What a stage wrote, printed by the CLI as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub artifacts: Vec<PathBuf>,
    pub stats: BTreeMap<String, serde_json::Value>,
}

impl StageSummary {
    fn new(stage: &str, artifacts: Vec<PathBuf>) -> Self {
        StageSummary {
            stage: stage.into(),
            artifacts,
            stats: BTreeMap::new(),
        }
    }

    fn stat(mut self, key: &str, value: impl Serialize) -> Self {
        self.stats.insert(
            key.into(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
        self
    }
}

pub fn load_records(path: &Path) -> Result<Vec<EntityRecord>> {
    let rows: Vec<CorpusRow> = io::read_jsonl_file(path)?;
    rows.into_iter()
        .enumerate()
        .map(|(idx, row)| {
            EntityRecord::from_row(row)
                .map_err(|e| Error::malformed(path.display().to_string(), idx + 1, e.to_string()))
        })
        .collect()
}

pub fn load_kg(path: &Path) -> Result<KgStore> {
    let reader = io::open(path)?;
    load_kg_dump(reader, KgFormat::from_path(path)).map_err(|e| match e {
        Error::Malformed { line, message, .. } => Error::malformed(path.display().to_string(), line, message),
        other => other,
    })
}

pub fn load_truth(path: &Path) -> Result<BTreeMap<String, BTreeSet<String>>> {
    let rows: Vec<TruthRow> = io::read_jsonl_file(path)?;
    Ok(truth_map(&rows))
}

fn require_truth(cfg: &PipelineConfig) -> Result<&Path> {
    cfg.paths
        .truth
        .as_deref()
        .ok_or_else(|| Error::Config("paths.truth is required for this stage".into()))
}

pub fn build_dataset(cfg: &PipelineConfig) -> Result<StageSummary> {
    cfg.validate()?;
    let records = load_records(&cfg.paths.corpus)?;
    let split = split_dataset(
        records,
        cfg.seeds.split,
        cfg.split.test_count,
        cfg.split.train_val_ratio,
    )?;
    let manifest = split.manifest(cfg.split.test_count, cfg.split.train_val_ratio);
    let path = cfg.artifacts().split();
    io::write_json_file(&path, &manifest)?;
    Ok(StageSummary::new("build-dataset", vec![path])
        .stat("train", manifest.train.len())
        .stat("validation", manifest.validation.len())
        .stat("test", manifest.test.len()))
}

fn check_seed(artifact: &Path, recorded: u64, requested: u64) -> Result<()> {
    if recorded != requested {
        return Err(Error::SeedConflict {
            artifact: artifact.display().to_string(),
            recorded,
            requested,
        });
    }
    Ok(())
}

/// Rebuilds the split from the manifest written by [`build_dataset`].
pub fn load_split(cfg: &PipelineConfig) -> Result<DatasetSplit> {
    let path = cfg.artifacts().split();
    let manifest: SplitManifest = io::read_json_file(&path)?;
    check_seed(&path, manifest.seed, cfg.seeds.split)?;
    let mut by_id: HashMap<String, EntityRecord> = load_records(&cfg.paths.corpus)?
        .into_iter()
        .map(|r| (r.entity_id.clone(), r))
        .collect();
    let mut take = |ids: &[String]| -> Result<Vec<EntityRecord>> {
        ids.iter()
            .map(|id| by_id.remove(id).ok_or_else(|| Error::UnknownEntity(id.clone())))
            .collect()
    };
    Ok(DatasetSplit {
        train: take(&manifest.train)?,
        validation: take(&manifest.validation)?,
        test: take(&manifest.test)?,
        seed: manifest.seed,
    })
}

fn records_of(split: DatasetSplit, name: SplitName) -> Vec<EntityRecord> {
    match name {
        SplitName::Train => split.train,
        SplitName::Validation => split.validation,
        SplitName::Test => split.test,
        SplitName::All => {
            let mut all = split.train;
            all.extend(split.validation);
            all.extend(split.test);
            all
        }
    }
}

pub fn train_head_stage(cfg: &PipelineConfig) -> Result<StageSummary> {
    cfg.validate()?;
    let split = load_split(cfg)?;
    let kg = load_kg(&cfg.paths.kg)?;
    let embedder = HashedEmbedder::new(cfg.embedder)?;
    let train_config = cfg.train_config();
    let outcome = train_head(&split, &kg, &embedder, &cfg.question, &train_config)?;
    let artifacts = cfg.artifacts();
    let checkpoint = HeadCheckpoint {
        format_version: HeadCheckpoint::FORMAT_VERSION,
        dim: embedder.dim(),
        embedder: cfg.embedder,
        question: cfg.question.clone(),
        train_config,
        best_epoch: outcome.best_epoch,
        params: outcome.params,
    };
    io::write_json_file(&artifacts.head(), &checkpoint)?;
    io::write_jsonl_file(&artifacts.train_log(), &outcome.log)?;
    let last: Option<&EpochLog> = outcome.log.last();
    Ok(
        StageSummary::new("train-head", vec![artifacts.head(), artifacts.train_log()])
            .stat("best_epoch", outcome.best_epoch)
            .stat("final_train_loss", last.map(|l| l.train_loss.total)),
    )
}

pub fn load_head(cfg: &PipelineConfig) -> Result<HeadCheckpoint> {
    let path = cfg.artifacts().head();
    let head: HeadCheckpoint = io::read_json_file(&path)?;
    if head.format_version != HeadCheckpoint::FORMAT_VERSION {
        return Err(Error::malformed(
            path.display().to_string(),
            0,
            format!("unsupported format_version {}", head.format_version),
        ));
    }
    check_seed(&path, head.train_config.seed, cfg.seeds.train)?;
    if head.dim != head.params.dim() || head.dim != head.embedder.dim {
        return Err(Error::DimensionMismatch {
            embedding: head.embedder.dim,
            head: head.params.dim(),
        });
    }
    Ok(head)
}

/// Runs the head over `records` and keeps spans above the threshold.
/// Records without any such span are omitted.
pub fn decode_records(
    head: &HeadCheckpoint,
    records: &[EntityRecord],
    config: &DecodeConfig,
) -> Result<Vec<CandidateRecord>> {
    config.validate()?;
    let embedder = HashedEmbedder::new(head.embedder)?;
    let decoded: Vec<CandidateRecord> = records
        .par_iter()
        .map(|r| {
            let e = embedder.embed(r, &head.question)?;
            let profile = forward(&e, &head.params)?;
            Ok(CandidateRecord {
                entity_id: r.entity_id.clone(),
                spans: decode(&profile, r, config)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(decoded.into_iter().filter(|c| !c.spans.is_empty()).collect())
}

pub fn decode_stage(cfg: &PipelineConfig, split: SplitName) -> Result<StageSummary> {
    cfg.validate()?;
    let records = records_of(load_split(cfg)?, split);
    let head = load_head(cfg)?;
    let candidates = decode_records(&head, &records, &cfg.decode)?;
    let path = cfg.artifacts().candidates(split);
    io::write_jsonl_file(&path, &candidates)?;
    Ok(StageSummary::new("decode", vec![path])
        .stat("split", split.as_str())
        .stat("entities", records.len())
        .stat("candidates", candidates.iter().map(|c| c.spans.len()).sum::<usize>()))
}

/// Decodes every record of an arbitrary corpus file with the trained head,
/// bypassing the split.
pub fn decode_file(cfg: &PipelineConfig, input: &Path, output: &Path) -> Result<StageSummary> {
    cfg.validate()?;
    let records = load_records(input)?;
    let head = load_head(cfg)?;
    let candidates = decode_records(&head, &records, &cfg.decode)?;
    io::write_jsonl_file(output, &candidates)?;
    Ok(StageSummary::new("decode", vec![output.to_path_buf()])
        .stat("entities", records.len())
        .stat("candidates", candidates.iter().map(|c| c.spans.len()).sum::<usize>()))
}

/// Samples up to `count` candidates uniformly and labels each keep when its
/// surface is a gold concept of its entity.
pub fn auto_label(
    candidates: &[CandidateRecord],
    truth: &BTreeMap<String, BTreeSet<String>>,
    kg: &KgStore,
    mode: LanguageMode,
    count: usize,
    seed: u64,
) -> Vec<LabeledExample> {
    let flat: Vec<(&CandidateRecord, usize)> = candidates
        .iter()
        .flat_map(|rec| (0..rec.spans.len()).map(move |k| (rec, k)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, flat.len(), count.min(flat.len())).into_vec();
    picks.sort_unstable();
    picks
        .into_iter()
        .map(|idx| {
            let (rec, k) = flat[idx];
            let span = &rec.spans[k];
            let features = extract_all(&rec.spans, kg, mode)[k];
            let gold = truth.get(&rec.entity_id).is_some_and(|g| {
                g.iter()
                    .any(|c| concept_key(c, mode) == concept_key(&span.surface, mode))
            });
            LabeledExample {
                features,
                label: if gold { Label::Keep } else { Label::Drop },
                provenance: format!("{}:{}-{}", rec.entity_id, span.start, span.end),
            }
        })
        .collect()
}

pub fn label_stage(cfg: &PipelineConfig) -> Result<StageSummary> {
    let artifacts = cfg.artifacts();
    let candidates: Vec<CandidateRecord> = io::read_jsonl_file(&artifacts.candidates(SplitName::Train))?;
    let truth = load_truth(require_truth(cfg)?)?;
    let kg = load_kg(&cfg.paths.kg)?;
    let examples = auto_label(
        &candidates,
        &truth,
        &kg,
        cfg.language_mode,
        cfg.select.label_sample,
        cfg.seeds.sample,
    );
    let path = artifacts.labels();
    let mut out = io::create(&path)?;
    write_examples_csv(&examples, &mut out)?;
    out.flush().map_err(|e| Error::io(&path, e))?;
    let keep = examples.iter().filter(|e| e.label == Label::Keep).count();
    Ok(StageSummary::new("label", vec![path])
        .stat("examples", examples.len())
        .stat("keep", keep))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedConcept {
    pub surface: String,
    pub i: usize,
    pub j: usize,
    pub cs: f64,
    pub vote_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedRecord {
    pub entity_id: String,
    pub concepts: Vec<SelectedConcept>,
}

/// Applies the forest to every candidate, keeping candidate order.
pub fn select_records(
    forest: &RandomForest,
    candidates: &[CandidateRecord],
    kg: &KgStore,
    mode: LanguageMode,
) -> Result<Vec<SelectedRecord>> {
    candidates
        .par_iter()
        .map(|rec| {
            let features = extract_all(&rec.spans, kg, mode);
            let mut concepts = Vec::new();
            for (span, f) in rec.spans.iter().zip(features) {
                let p = forest.predict(&f)?;
                if p.label == Label::Keep {
                    concepts.push(SelectedConcept {
                        surface: span.surface.clone(),
                        i: span.start,
                        j: span.end,
                        cs: span.confidence,
                        vote_fraction: p.vote_fraction,
                    });
                }
            }
            Ok(SelectedRecord {
                entity_id: rec.entity_id.clone(),
                concepts,
            })
        })
        .collect()
}

fn read_labels(path: &Path) -> Result<Vec<LabeledExample>> {
    read_examples_csv(io::open(path)?).map_err(|e| match e {
        Error::Malformed { line, message, .. } => Error::malformed(path.display().to_string(), line, message),
        other => other,
    })
}

pub fn select_stage(cfg: &PipelineConfig) -> Result<StageSummary> {
    cfg.validate()?;
    let artifacts = cfg.artifacts();
    let labels_path = cfg.paths.labels.clone().unwrap_or_else(|| artifacts.labels());
    let examples = read_labels(&labels_path)?;
    let forest = train_forest(&examples, &cfg.forest_config())?;
    let importance = feature_importance(&forest)?;
    io::write_json_file(&artifacts.forest(), &ForestCheckpoint::new(forest.clone()))?;
    io::write_json_file(&artifacts.importance(), &importance)?;

    let kg = load_kg(&cfg.paths.kg)?;
    let candidates: Vec<CandidateRecord> = io::read_jsonl_file(&artifacts.candidates(SplitName::Test))?;
    let selected = select_records(&forest, &candidates, &kg, cfg.language_mode)?;
    io::write_jsonl_file(&artifacts.selected(), &selected)?;
    Ok(StageSummary::new(
        "select",
        vec![artifacts.forest(), artifacts.importance(), artifacts.selected()],
    )
    .stat("training_examples", examples.len())
    .stat("ranking", importance.ranking())
    .stat("selected", selected.iter().map(|s| s.concepts.len()).sum::<usize>()))
}

pub fn load_forest(path: &Path) -> Result<RandomForest> {
    let cp: ForestCheckpoint = io::read_json_file(path)?;
    if cp.format_version != ForestCheckpoint::FORMAT_VERSION {
        return Err(Error::malformed(
            path.display().to_string(),
            0,
            format!("unsupported format_version {}", cp.format_version),
        ));
    }
    Ok(cp.forest)
}

pub fn load_rules(cfg: &PipelineConfig) -> Result<RuleSet> {
    let rules = match &cfg.paths.rules {
        Some(p) => io::read_json_file(p)?,
        None => RuleSet::default(),
    };
    rules.validate(cfg.language_mode)?;
    Ok(rules)
}

/// One line of the prune audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub entity_id: String,
    #[serde(flatten)]
    pub decision: PruneDecision,
}

pub fn prune_records(
    selected: &[SelectedRecord],
    rules: &RuleSet,
    kg: &KgStore,
    mode: LanguageMode,
    system_id: &str,
) -> (SystemOutput, Vec<AuditRow>) {
    let pruned: Vec<_> = selected
        .par_iter()
        .map(|rec| {
            let scored: Vec<ScoredConcept> = rec
                .concepts
                .iter()
                .map(|c| ScoredConcept::new(c.surface.clone(), c.vote_fraction))
                .collect();
            (rec.entity_id.clone(), prune(&scored, rules, kg, mode))
        })
        .collect();
    let mut output = SystemOutput::new(system_id);
    let mut audit = Vec::new();
    for (entity_id, outcome) in pruned {
        output.add(&entity_id, outcome.kept.into_iter().map(|c| c.surface), mode);
        audit.extend(outcome.decisions.into_iter().map(|decision| AuditRow {
            entity_id: entity_id.clone(),
            decision,
        }));
    }
    (output, audit)
}

pub fn prune_stage(cfg: &PipelineConfig) -> Result<StageSummary> {
    let artifacts = cfg.artifacts();
    let selected: Vec<SelectedRecord> = io::read_jsonl_file(&artifacts.selected())?;
    let rules = load_rules(cfg)?;
    let kg = load_kg(&cfg.paths.kg)?;
    let (output, audit) = prune_records(&selected, &rules, &kg, cfg.language_mode, SYSTEM_ID);
    io::write_jsonl_file(&artifacts.output(), &output.to_rows())?;
    io::write_jsonl_file(&artifacts.prune_audit(), &audit)?;
    Ok(
        StageSummary::new("prune", vec![artifacts.output(), artifacts.prune_audit()])
            .stat("kept", output.concept_count())
            .stat("decisions", audit.len()),
    )
}

/// Fixed-threshold output straight from the candidate dump, no selector or
/// pruner.
pub fn ftt_output(candidates: &[CandidateRecord], threshold: f64, mode: LanguageMode) -> SystemOutput {
    let mut out = SystemOutput::new(FTT_SYSTEM_ID);
    for rec in candidates {
        let kept: Vec<CandidateSpan> = fixed_threshold_truncate(&rec.spans, threshold);
        if !kept.is_empty() {
            out.add(&rec.entity_id, kept.into_iter().map(|s| s.surface), mode);
        }
    }
    out
}

pub fn ftt_stage(cfg: &PipelineConfig) -> Result<StageSummary> {
    let artifacts = cfg.artifacts();
    let candidates: Vec<CandidateRecord> = io::read_jsonl_file(&artifacts.candidates(SplitName::Test))?;
    let out = ftt_output(&candidates, cfg.ftt.threshold, cfg.language_mode);
    io::write_jsonl_file(&artifacts.ftt_output(), &out.to_rows())?;
    Ok(StageSummary::new("ftt", vec![artifacts.ftt_output()]).stat("concepts", out.concept_count()))
}

pub fn hearst_stage(cfg: &PipelineConfig, split: SplitName) -> Result<StageSummary> {
    let patterns: Vec<HearstPattern> = match &cfg.paths.patterns {
        Some(p) => io::read_json_file(p)?,
        None => default_patterns(cfg.language_mode),
    };
    let matchers = compile_patterns(&patterns)?;
    let records = records_of(load_split(cfg)?, split);
    let mut out = SystemOutput::new(HEARST_SYSTEM_ID);
    for r in &records {
        let found = extract(r, &matchers, &[]);
        if !found.is_empty() {
            out.add(&r.entity_id, found.into_iter().map(|m| m.concept), r.language_mode);
        }
    }
    let path = cfg.artifacts().hearst_output();
    io::write_jsonl_file(&path, &out.to_rows())?;
    Ok(StageSummary::new("hearst", vec![path])
        .stat("patterns", matchers.len())
        .stat("concepts", out.concept_count()))
}

/// Judges every non-EC concept of `outputs` against the gold sets.
pub fn judge_from_truth(
    outputs: &[SystemOutput],
    truth: &BTreeMap<String, BTreeSet<String>>,
    kg: &KgStore,
    mode: LanguageMode,
) -> JudgmentStore {
    let mut store = JudgmentStore::new(mode);
    for out in outputs {
        for (entity, concepts) in &out.entities {
            let gold: BTreeSet<String> = truth
                .get(entity)
                .map(|g| g.iter().map(|c| concept_key(c, mode)).collect())
                .unwrap_or_default();
            for c in concepts {
                if kg.entity_has_concept(entity, c, mode) {
                    continue;
                }
                let verdict = if gold.contains(&concept_key(c, mode)) {
                    Verdict::Correct
                } else {
                    Verdict::Incorrect
                };
                store.insert(entity, c, verdict);
            }
        }
    }
    store
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    #[serde(flatten)]
    pub comparison: Comparison,
    /// Share of gold pairs of the test entities recovered, per system; only
    /// present when gold sets are available.
    pub gold_recall: BTreeMap<String, Option<f64>>,
}

pub fn read_outputs(paths: &[PathBuf], mode: LanguageMode) -> Result<Vec<SystemOutput>> {
    let mut rows: Vec<SystemOutputRow> = Vec::new();
    for p in paths {
        rows.extend(io::read_jsonl_file::<SystemOutputRow>(p)?);
    }
    Ok(SystemOutput::from_rows(rows, mode))
}

pub fn evaluate_outputs(cfg: &PipelineConfig, outputs: &[SystemOutput]) -> Result<EvaluationSummary> {
    let mode = cfg.language_mode;
    let kg = load_kg(&cfg.paths.kg)?;
    let truth = match &cfg.paths.truth {
        Some(p) => Some(load_truth(p)?),
        None => None,
    };
    let judgments = match (&cfg.paths.judgments, &truth) {
        (Some(p), _) => JudgmentStore::read_csv(io::open(p)?, mode).map_err(|e| match e {
            Error::Malformed { line, message, .. } => Error::malformed(p.display().to_string(), line, message),
            other => other,
        })?,
        (None, Some(t)) => {
            let store = judge_from_truth(outputs, t, &kg, mode);
            let path = cfg.artifacts().judgments();
            let mut out = io::create(&path)?;
            store.write_csv(&mut out)?;
            out.flush().map_err(|e| Error::io(&path, e))?;
            store
        }
        (None, None) => {
            return Err(Error::Config(
                "evaluation needs paths.judgments or paths.truth".into(),
            ))
        }
    };
    let comparison = evaluate_systems(outputs, &kg, &judgments, mode)?;
    let mut recall = BTreeMap::new();
    if let Some(t) = &truth {
        let test_ids: Option<BTreeSet<String>> = io::read_json_file::<SplitManifest>(&cfg.artifacts().split())
            .ok()
            .map(|m| m.test.into_iter().collect());
        let scoped: BTreeMap<String, BTreeSet<String>> = t
            .iter()
            .filter(|(id, _)| test_ids.as_ref().is_none_or(|ids| ids.contains(*id)))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        for o in outputs {
            recall.insert(o.system_id.clone(), gold_recall(o, &scoped, mode));
        }
    }
    Ok(EvaluationSummary {
        comparison,
        gold_recall: recall,
    })
}

pub fn evaluate_stage(cfg: &PipelineConfig, output_paths: &[PathBuf]) -> Result<StageSummary> {
    let outputs = read_outputs(output_paths, cfg.language_mode)?;
    let summary = evaluate_outputs(cfg, &outputs)?;
    let path = cfg.artifacts().report();
    io::write_json_file(&path, &summary)?;
    let mut s = StageSummary::new("evaluate", vec![path]);
    for r in &summary.comparison.reports {
        s = s.stat(&format!("{}.precision", r.system_id), r.precision);
        s = s.stat(&format!("{}.relative_f1", r.system_id), r.relative_f1);
    }
    Ok(s)
}

/// Runs head, selector and pruner over every corpus entity and writes the
/// concepts missing from the KG as `entity<TAB>concept` lines.
pub fn batch_complete(cfg: &PipelineConfig) -> Result<StageSummary> {
    cfg.validate()?;
    let artifacts = cfg.artifacts();
    let records = load_records(&cfg.paths.corpus)?;
    let head = load_head(cfg)?;
    let forest = load_forest(&artifacts.forest())?;
    let kg = load_kg(&cfg.paths.kg)?;
    let rules = load_rules(cfg)?;
    let candidates = decode_records(&head, &records, &cfg.decode)?;
    let selected = select_records(&forest, &candidates, &kg, cfg.language_mode)?;
    let (output, _) = prune_records(&selected, &rules, &kg, cfg.language_mode, SYSTEM_ID);
    let path = artifacts.new_relations();
    let mut out = io::create(&path)?;
    let mut new = 0usize;
    for (entity, concepts) in &output.entities {
        for c in concepts {
            if !kg.entity_has_concept(entity, c, cfg.language_mode) {
                writeln!(out, "{entity}\t{c}").map_err(|e| Error::io(&path, e))?;
                new += 1;
            }
        }
    }
    out.flush().map_err(|e| Error::io(&path, e))?;
    Ok(StageSummary::new("batch-complete", vec![path])
        .stat("entities", records.len())
        .stat("new_relations", new))
}

/// Every stage in order, auto-labeling from the gold file. Returns the
/// evaluation summary.
pub fn run_all(cfg: &PipelineConfig) -> Result<EvaluationSummary> {
    build_dataset(cfg)?;
    train_head_stage(cfg)?;
    decode_stage(cfg, SplitName::Train)?;
    decode_stage(cfg, SplitName::Test)?;
    label_stage(cfg)?;
    select_stage(cfg)?;
    prune_stage(cfg)?;
    ftt_stage(cfg)?;
    hearst_stage(cfg, SplitName::Test)?;
    let a = cfg.artifacts();
    evaluate_stage(cfg, &[a.output(), a.ftt_output(), a.hearst_output()])?;
    io::read_json_file(&a.report())
}

/// Opens the annotation store under the work directory, sampling tasks from
/// the configured candidate dump on first use.
pub fn open_annotation_store(cfg: &PipelineConfig) -> Result<AnnotationStore> {
    let artifacts = cfg.artifacts();
    AnnotationStore::open(&artifacts.annotation_dir(), cfg.seeds.sample, cfg.language_mode, || {
        let candidates: Vec<CandidateRecord> =
            io::read_jsonl_file(&artifacts.candidates(cfg.annotation.split))?;
        let records = load_records(&cfg.paths.corpus)?;
        let kg = load_kg(&cfg.paths.kg)?;
        sample_tasks(
            &candidates,
            &records,
            &kg,
            cfg.language_mode,
            cfg.annotation.sample_size,
            cfg.seeds.sample,
        )
    })
}

/// Pipeline settings for a generated corpus in `dir` (paths relative to it).
pub fn synthetic_pipeline_config(entities: usize, seed: u64) -> PipelineConfig {
    PipelineConfig {
        paths: Paths {
            truth: Some("truth.jsonl".into()),
            ..Paths::default()
        },
        seeds: Seeds::uniform(seed),
        split: SplitSettings {
            test_count: (entities / 5).max(1),
            train_val_ratio: 0.9,
        },
        embedder: EmbedderConfig { dim: 1024, window: 2 },
        train: TrainConfig {
            epochs: 10,
            learning_rate: 5e-2,
            ..TrainConfig::default()
        },
        select: SelectSettings { label_sample: 200 },
        ..PipelineConfig::default()
    }
}
