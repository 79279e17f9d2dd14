use std::path::Path;

use granule_core::pipeline::{
    batch_complete, build_dataset, decode_stage, evaluate_stage, label_stage, load_split,
    select_stage, synthetic_pipeline_config, train_head_stage, PipelineConfig, SplitName,
};
use granule_core::synthetic::{generate, write_synthetic, SyntheticConfig};
use granule_core::Error;

fn setup(dir: &Path, entities: usize) -> PipelineConfig {
    let corpus = generate(&SyntheticConfig {
        entities,
        seed: 3,
        ..SyntheticConfig::default()
    })
    .unwrap();
    write_synthetic(&corpus, dir).unwrap();
    let text = synthetic_pipeline_config(entities, 3).to_toml().unwrap();
    std::fs::write(dir.join("pipeline.toml"), text).unwrap();
    PipelineConfig::load(&dir.join("pipeline.toml")).unwrap()
}

fn through_decode(cfg: &PipelineConfig) {
    build_dataset(cfg).unwrap();
    train_head_stage(cfg).unwrap();
    decode_stage(cfg, SplitName::Train).unwrap();
    decode_stage(cfg, SplitName::Test).unwrap();
}

#[test]
fn threshold_two_writes_an_empty_candidate_file() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = setup(tmp.path(), 60);
    build_dataset(&cfg).unwrap();
    train_head_stage(&cfg).unwrap();
    cfg.decode.threshold = 2.0;
    let summary = decode_stage(&cfg, SplitName::Test).unwrap();
    let path = &summary.artifacts[0];
    assert_eq!(std::fs::read_to_string(path).unwrap(), "");
}

#[test]
fn reseeding_after_split_is_a_conflict() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), 40);
    build_dataset(&cfg).unwrap();
    let other = cfg.clone().with_seed(99);
    let err = train_head_stage(&other).unwrap_err();
    assert!(matches!(err, Error::SeedConflict { recorded: 3, requested: 99, .. }), "{err}");
}

#[test]
fn manifest_ids_must_exist_in_the_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), 40);
    build_dataset(&cfg).unwrap();
    let path = cfg.artifacts().split();
    let text = std::fs::read_to_string(&path).unwrap().replacen("E000", "X000", 1);
    std::fs::write(&path, text).unwrap();
    assert!(matches!(load_split(&cfg), Err(Error::UnknownEntity(_))));
}

#[test]
fn missing_judgment_names_the_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = setup(tmp.path(), 20);
    let empty = tmp.path().join("judgments.csv");
    std::fs::write(&empty, "entity_id,concept,verdict\n").unwrap();
    cfg.paths.judgments = Some(empty);
    let output = tmp.path().join("output.jsonl");
    std::fs::write(
        &output,
        "{\"entity_id\":\"E00001\",\"concepts\":[\"unheard of thing\"],\"system_id\":\"s\"}\n",
    )
    .unwrap();
    std::fs::create_dir_all(&cfg.paths.work_dir).unwrap();
    match evaluate_stage(&cfg, &[output]) {
        Err(Error::MissingJudgment { entity_id, concept }) => {
            assert_eq!((entity_id.as_str(), concept.as_str()), ("E00001", "unheard of thing"));
        }
        other => panic!("expected a missing judgment, got {other:?}"),
    }
}

#[test]
fn stages_rerun_from_artifacts_and_batch_completion_adds_only_new_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), 80);
    through_decode(&cfg);
    label_stage(&cfg).unwrap();
    select_stage(&cfg).unwrap();
    let first = std::fs::read(cfg.artifacts().selected()).unwrap();
    select_stage(&cfg).unwrap();
    assert_eq!(std::fs::read(cfg.artifacts().selected()).unwrap(), first);

    batch_complete(&cfg).unwrap();
    let kg = std::fs::read_to_string(tmp.path().join("kg.tsv")).unwrap();
    let existing: std::collections::HashSet<&str> = kg.lines().collect();
    let added = std::fs::read_to_string(cfg.artifacts().new_relations()).unwrap();
    assert!(!added.is_empty());
    for line in added.lines() {
        assert_eq!(line.split('\t').count(), 2);
        assert!(!existing.contains(line), "{line} already in the KG");
    }
}

#[test]
fn missing_corpus_is_reported_as_missing_input() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = setup(tmp.path(), 20);
    cfg.paths.corpus = tmp.path().join("absent.jsonl");
    assert!(matches!(build_dataset(&cfg), Err(Error::MissingInput(_))));
}
