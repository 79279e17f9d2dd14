//! Human labeling of sampled candidates.
//!
//! A task set is sampled once from a candidate dump and frozen in
//! `tasks.json`; verdicts are appended to `log.jsonl` and the in-memory
//! state is always the task set with the log replayed over it. Exports turn
//! labeled tasks into selector training rows and evaluator judgments.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize_with_offsets, utf16_offset, EntityRecord, KgStore, LanguageMode};
use crate::decoder::CandidateRecord;
use crate::error::{Error, Result};
use crate::evaluator::{JudgmentStore, Verdict};
use crate::io;
use crate::selector::{extract_all, write_examples_csv, FeatureVector, Label, LabeledExample};

/// Version stamped on every task file, log line and HTTP payload.
pub const SCHEMA_VERSION: u32 = 1;

pub const TASKS_FILE: &str = "tasks.json";
pub const LOG_FILE: &str = "log.jsonl";

/// The candidate as shown to an annotator. `char_start..char_end` is in
/// UTF-16 code units of the abstract, ready for browser highlighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightSpan {
    pub i: usize,
    pub j: usize,
    pub surface: String,
    pub cs: f64,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Pending,
    Labeled,
}

impl std::str::FromStr for TaskStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pending" => Ok(TaskStatus::Pending),
            "labeled" => Ok(TaskStatus::Labeled),
            other => Err(Error::Config(format!("unknown task status {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub entity_id: String,
    pub entity_name: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub span: HighlightSpan,
    pub features: FeatureVector,
    pub status: TaskStatus,
    pub verdict: Option<Verdict>,
    pub annotator: Option<String>,
    /// Milliseconds since the epoch of the latest verdict.
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    pub schema_version: u32,
    pub seed: u64,
    pub tasks: Vec<AnnotationTask>,
}

/// One appended verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub schema_version: u32,
    pub seq: u64,
    pub task_id: String,
    pub verdict: Verdict,
    pub annotator: Option<String>,
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub schema_version: u32,
    pub total: usize,
    pub labeled: usize,
    pub pending: usize,
    pub correct: usize,
    pub incorrect: usize,
}

/// Uniformly samples `size` candidates (all of them if fewer) and builds one
/// task per sampled span, in dump order.
pub fn sample_tasks(
    candidates: &[CandidateRecord],
    records: &[EntityRecord],
    kg: &KgStore,
    mode: LanguageMode,
    size: usize,
    seed: u64,
) -> Result<TaskSet> {
    let by_id: HashMap<&str, &EntityRecord> = records.iter().map(|r| (r.entity_id.as_str(), r)).collect();
    let flat: Vec<(usize, usize)> = candidates
        .iter()
        .enumerate()
        .flat_map(|(r, rec)| (0..rec.spans.len()).map(move |k| (r, k)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, flat.len(), size.min(flat.len())).into_vec();
    picks.sort_unstable();

    let mut features: HashMap<usize, Vec<FeatureVector>> = HashMap::new();
    let mut tasks = Vec::with_capacity(picks.len());
    for (n, idx) in picks.into_iter().enumerate() {
        let (r, k) = flat[idx];
        let cand = &candidates[r];
        let record = by_id
            .get(cand.entity_id.as_str())
            .ok_or_else(|| Error::UnknownEntity(cand.entity_id.clone()))?;
        let span = &cand.spans[k];
        let offsets = tokenize_with_offsets(&record.abstract_text, record.language_mode)?;
        if span.end >= offsets.len() || span.start > span.end {
            return Err(Error::LengthMismatch {
                what: "candidate span",
                left: span.end + 1,
                right: offsets.len(),
            });
        }
        let fv = features
            .entry(r)
            .or_insert_with(|| extract_all(&cand.spans, kg, mode))[k];
        let text = &record.abstract_text;
        tasks.push(AnnotationTask {
            task_id: format!("T{:05}", n + 1),
            entity_id: cand.entity_id.clone(),
            entity_name: record.surface_name.clone(),
            abstract_text: text.clone(),
            span: HighlightSpan {
                i: span.start,
                j: span.end,
                surface: span.surface.clone(),
                cs: span.confidence,
                char_start: utf16_offset(text, offsets[span.start].start),
                char_end: utf16_offset(text, offsets[span.end].end),
            },
            features: fv,
            status: TaskStatus::Pending,
            verdict: None,
            annotator: None,
            timestamp: None,
        });
    }
    Ok(TaskSet {
        schema_version: SCHEMA_VERSION,
        seed,
        tasks,
    })
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Task state plus its append-only verdict log. Not thread-safe; callers
/// serialize access (the HTTP service holds it behind a mutex).
pub struct AnnotationStore {
    dir: PathBuf,
    seed: u64,
    mode: LanguageMode,
    tasks: Vec<AnnotationTask>,
    index: HashMap<String, usize>,
    history: Vec<LogEntry>,
    log: File,
    clock: fn() -> u64,
}

impl std::fmt::Debug for AnnotationStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnnotationStore")
            .field("dir", &self.dir)
            .field("tasks", &self.tasks.len())
            .field("log_entries", &self.history.len())
            .finish()
    }
}

impl AnnotationStore {
    /// Opens the store in `dir`. The task set is loaded if present and
    /// otherwise created with `init` and written; either way the log is then
    /// replayed.
    pub fn open(
        dir: &Path,
        seed: u64,
        mode: LanguageMode,
        init: impl FnOnce() -> Result<TaskSet>,
    ) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tasks_path = dir.join(TASKS_FILE);
        let set: TaskSet = if tasks_path.exists() {
            let set: TaskSet = io::read_json_file(&tasks_path)?;
            if set.seed != seed {
                return Err(Error::SeedConflict {
                    artifact: tasks_path.display().to_string(),
                    recorded: set.seed,
                    requested: seed,
                });
            }
            set
        } else {
            let set = init()?;
            io::write_json_file(&tasks_path, &set)?;
            set
        };
        if set.schema_version != SCHEMA_VERSION {
            return Err(Error::malformed(
                tasks_path.display().to_string(),
                0,
                format!("unsupported schema_version {}", set.schema_version),
            ));
        }
        let log_path = dir.join(LOG_FILE);
        let mut log = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        let history = replay_log(&mut log, &log_path)?;
        let index = set
            .tasks
            .iter()
            .enumerate()
            .map(|(k, t)| (t.task_id.clone(), k))
            .collect();
        let mut store = AnnotationStore {
            dir: dir.to_path_buf(),
            seed,
            mode,
            tasks: set.tasks,
            index,
            history: Vec::new(),
            log,
            clock: now_ms,
        };
        for (line, entry) in history.into_iter().enumerate() {
            if !store.index.contains_key(&entry.task_id) {
                return Err(Error::malformed(
                    log_path.display().to_string(),
                    line + 1,
                    format!("unknown task {:?}", entry.task_id),
                ));
            }
            store.apply(entry);
        }
        Ok(store)
    }

    /// Replaces the timestamp source (tests use a fixed clock).
    pub fn with_clock(mut self, clock: fn() -> u64) -> Self {
        self.clock = clock;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn apply(&mut self, entry: LogEntry) {
        let k = self.index[&entry.task_id];
        let task = &mut self.tasks[k];
        task.status = TaskStatus::Labeled;
        task.verdict = Some(entry.verdict);
        task.annotator = entry.annotator.clone();
        task.timestamp = Some(entry.timestamp);
        self.history.push(entry);
    }

    /// Records a verdict. Re-submitting overwrites the task state; the log
    /// keeps every submission.
    pub fn submit(&mut self, task_id: &str, verdict: Verdict, annotator: Option<String>) -> Result<&AnnotationTask> {
        if !self.index.contains_key(task_id) {
            return Err(Error::UnknownTask(task_id.to_string()));
        }
        let entry = LogEntry {
            schema_version: SCHEMA_VERSION,
            seq: self.history.len() as u64 + 1,
            task_id: task_id.to_string(),
            verdict,
            annotator,
            timestamp: (self.clock)(),
        };
        let mut line = serde_json::to_string(&entry).map_err(|e| Error::Config(e.to_string()))?;
        line.push('\n');
        let path = self.dir.join(LOG_FILE);
        self.log
            .write_all(line.as_bytes())
            .and_then(|_| self.log.sync_data())
            .map_err(|e| Error::io(&path, e))?;
        self.apply(entry);
        Ok(&self.tasks[self.index[task_id]])
    }

    pub fn get(&self, task_id: &str) -> Result<&AnnotationTask> {
        self.index
            .get(task_id)
            .map(|&k| &self.tasks[k])
            .ok_or_else(|| Error::UnknownTask(task_id.to_string()))
    }

    /// Tasks in sampling order, optionally filtered by status.
    pub fn list(&self, status: Option<TaskStatus>, limit: usize) -> Vec<&AnnotationTask> {
        self.tasks
            .iter()
            .filter(|t| status.is_none_or(|s| t.status == s))
            .take(limit)
            .collect()
    }

    pub fn tasks(&self) -> &[AnnotationTask] {
        &self.tasks
    }

    /// Every logged submission, oldest first.
    pub fn history(&self) -> &[LogEntry] {
        &self.history
    }

    pub fn progress(&self) -> Progress {
        let mut p = Progress {
            schema_version: SCHEMA_VERSION,
            total: self.tasks.len(),
            labeled: 0,
            pending: 0,
            correct: 0,
            incorrect: 0,
        };
        for t in &self.tasks {
            match t.verdict {
                Some(Verdict::Correct) => p.correct += 1,
                Some(Verdict::Incorrect) => p.incorrect += 1,
                None => {}
            }
            match t.status {
                TaskStatus::Labeled => p.labeled += 1,
                TaskStatus::Pending => p.pending += 1,
            }
        }
        p
    }

    /// Labeled tasks as selector rows: correct means keep.
    pub fn selector_examples(&self) -> Vec<LabeledExample> {
        self.tasks
            .iter()
            .filter_map(|t| {
                t.verdict.map(|v| LabeledExample {
                    features: t.features,
                    label: if v == Verdict::Correct { Label::Keep } else { Label::Drop },
                    provenance: t.task_id.clone(),
                })
            })
            .collect()
    }

    /// Labeled tasks as (entity, concept) judgments. When two tasks of one
    /// entity carry the same concept the later task wins.
    pub fn judgments(&self) -> JudgmentStore {
        let mut store = JudgmentStore::new(self.mode);
        for t in &self.tasks {
            if let Some(v) = t.verdict {
                store.insert(&t.entity_id, &t.span.surface, v);
            }
        }
        store
    }

    pub fn export(&self, kind: ExportKind) -> Result<Export> {
        let mut buf = Vec::new();
        let rows = match kind {
            ExportKind::Selector => {
                let examples = self.selector_examples();
                write_examples_csv(&examples, &mut buf)?;
                examples.len()
            }
            ExportKind::Judgments => {
                let store = self.judgments();
                store.write_csv(&mut buf)?;
                store.len()
            }
        };
        let path = self.dir.join(kind.file_name());
        std::fs::write(&path, &buf).map_err(|e| Error::io(&path, e))?;
        Ok(Export {
            schema_version: SCHEMA_VERSION,
            kind,
            rows,
            path,
            csv: String::from_utf8_lossy(&buf).into_owned(),
        })
    }
}

/// Reads every complete log line. A trailing line without a newline is a
/// write torn by a crash: it is cut off so the next append starts clean.
fn replay_log(log: &mut File, path: &Path) -> Result<Vec<LogEntry>> {
    log.seek(SeekFrom::Start(0)).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(&*log);
    let mut entries = Vec::new();
    let mut good_len = 0u64;
    let mut line = String::new();
    let mut line_no = 0;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if !line.ends_with('\n') {
            break;
        }
        if !line.trim().is_empty() {
            let entry: LogEntry = serde_json::from_str(&line)
                .map_err(|e| Error::malformed(path.display().to_string(), line_no, e.to_string()))?;
            entries.push(entry);
        }
        good_len += n as u64;
    }
    let len = log.metadata().map_err(|e| Error::io(path, e))?.len();
    if good_len < len {
        log.set_len(good_len).map_err(|e| Error::io(path, e))?;
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportKind {
    Selector,
    Judgments,
}

impl ExportKind {
    pub fn file_name(self) -> &'static str {
        match self {
            ExportKind::Selector => "selector.csv",
            ExportKind::Judgments => "judgments.csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Export {
    pub schema_version: u32,
    pub kind: ExportKind,
    pub rows: usize,
    pub path: PathBuf,
    pub csv: String,
}
