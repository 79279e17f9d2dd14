//! Python bindings: tokenization, decoding, pruning, the pattern baseline,
//! metric helpers, the staged pipeline and the annotation store.

use std::path::PathBuf;
use std::sync::Mutex;

use granule_core::annotation::{AnnotationStore as CoreStore, ExportKind, TaskStatus};
use granule_core::corpus::{tokenize as core_tokenize, EntityRecord, KgStore, LanguageMode};
use granule_core::decoder::{self, DecodeConfig};
use granule_core::error::ErrorClass;
use granule_core::evaluator::{self, Verdict};
use granule_core::hearst::{compile_patterns, default_patterns, extract_concepts};
use granule_core::pipeline::{self, PipelineConfig, SplitName};
use granule_core::pointer_head::{two_way_softmax as core_softmax, ProbabilityProfile};
use granule_core::pruner::{self, RuleSet, ScoredConcept};
use granule_core::synthetic::{generate, write_synthetic, SyntheticConfig};
use granule_core::Error;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(granule, GranuleError, PyException);
create_exception!(granule, IoError, GranuleError);
create_exception!(granule, MissingInputError, GranuleError);
create_exception!(granule, SchemaError, GranuleError);
create_exception!(granule, ConfigError, GranuleError);
create_exception!(granule, SeedConflictError, GranuleError);
create_exception!(granule, DataError, GranuleError);

fn err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.class() {
        ErrorClass::Io => IoError::new_err(msg),
        ErrorClass::MissingInput => MissingInputError::new_err(msg),
        ErrorClass::Schema => SchemaError::new_err(msg),
        ErrorClass::Config => ConfigError::new_err(msg),
        ErrorClass::SeedConflict => SeedConflictError::new_err(msg),
        ErrorClass::Data => DataError::new_err(msg),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

/// Plain Python objects (dicts, lists) through a JSON round trip.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| GranuleError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_name<T: serde::de::DeserializeOwned>(what: &str, name: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| ConfigError::new_err(format!("unknown {what} {name:?}")))
}

#[pyfunction]
#[pyo3(signature = (text, mode = "word"))]
fn tokenize(text: &str, mode: &str) -> PyResult<Vec<String>> {
    core_tokenize(text, parse(mode)?).map_err(err)
}

#[pyfunction]
fn two_way_softmax(pos: f64, neg: f64) -> f64 {
    core_softmax(pos, neg)
}

#[pyfunction]
#[pyo3(signature = (precision, recall))]
fn relative_f1(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    evaluator::relative_f1(precision, recall)
}

/// Ranked spans with `p_start[i] + p_end[j] > threshold`.
#[pyfunction]
#[pyo3(signature = (text, p_start, p_end, threshold = 0.85, max_span_length = None, mode = "word"))]
fn decode<'py>(
    py: Python<'py>,
    text: &str,
    p_start: Vec<f64>,
    p_end: Vec<f64>,
    threshold: f64,
    max_span_length: Option<usize>,
    mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let record = EntityRecord::new("", "", text, parse(mode)?, std::iter::empty()).map_err(err)?;
    let mut config = DecodeConfig {
        threshold,
        ..DecodeConfig::default()
    };
    if let Some(m) = max_span_length {
        config.max_span_length = m;
    }
    let spans = decoder::decode(&ProbabilityProfile { p_start, p_end }, &record, &config).map_err(err)?;
    to_py(py, &spans)
}

type Scored = (String, f64);

/// Returns `(kept, decisions)`; `kept` is a list of `(surface, vote_fraction)`.
#[pyfunction]
#[pyo3(signature = (concepts, kg_pairs = Vec::new(), exclusive_groups = Vec::new(), mode = "word"))]
fn prune<'py>(
    py: Python<'py>,
    concepts: Vec<(String, f64)>,
    kg_pairs: Vec<(String, String)>,
    exclusive_groups: Vec<Vec<String>>,
    mode: &str,
) -> PyResult<(Vec<Scored>, Bound<'py, PyAny>)> {
    let mode: LanguageMode = parse(mode)?;
    let rules = RuleSet {
        exclusive_groups,
        ..RuleSet::default()
    };
    rules.validate(mode).map_err(err)?;
    let kg = KgStore::from_pairs(kg_pairs);
    let scored: Vec<ScoredConcept> = concepts.into_iter().map(|(s, v)| ScoredConcept::new(s, v)).collect();
    let outcome = pruner::prune(&scored, &rules, &kg, mode);
    let kept = outcome.kept.into_iter().map(|c| (c.surface, c.vote_fraction)).collect();
    Ok((kept, to_py(py, &outcome.decisions)?))
}

/// Concepts matched by the built-in patterns.
#[pyfunction]
#[pyo3(signature = (name, text, mode = "word"))]
fn hearst(name: &str, text: &str, mode: &str) -> PyResult<Vec<String>> {
    let mode: LanguageMode = parse(mode)?;
    let record = EntityRecord::new("", name, text, mode, std::iter::empty()).map_err(err)?;
    let matchers = compile_patterns(&default_patterns(mode)).map_err(err)?;
    Ok(extract_concepts(&record, &matchers))
}

/// Writes a synthetic corpus next to `config_path` and returns the audit.
#[pyfunction]
#[pyo3(signature = (config_path, entities = 200, seed = 0, vocab_size = 50, nesting_rate = 0.5, kg_drop_rate = 0.2))]
fn gen_synthetic<'py>(
    py: Python<'py>,
    config_path: PathBuf,
    entities: usize,
    seed: u64,
    vocab_size: usize,
    nesting_rate: f64,
    kg_drop_rate: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let dir = match config_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| err(Error::io(&dir, e)))?;
    let corpus = generate(&SyntheticConfig {
        entities,
        vocab_size,
        nesting_rate,
        kg_drop_rate,
        seed,
    })
    .map_err(err)?;
    write_synthetic(&corpus, &dir).map_err(err)?;
    let text = pipeline::synthetic_pipeline_config(entities, seed).to_toml().map_err(err)?;
    std::fs::write(&config_path, text).map_err(|e| err(Error::io(&config_path, e)))?;
    to_py(py, &corpus.audit)
}

/// A loaded pipeline configuration. Each stage returns its summary dict.
#[pyclass(frozen)]
struct Pipeline {
    cfg: PipelineConfig,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (config_path, seed = None))]
    fn new(config_path: PathBuf, seed: Option<u64>) -> PyResult<Self> {
        let cfg = PipelineConfig::load(&config_path).map_err(err)?;
        Ok(Pipeline {
            cfg: match seed {
                Some(s) => cfg.with_seed(s),
                None => cfg,
            },
        })
    }

    #[getter]
    fn work_dir(&self) -> PathBuf {
        self.cfg.paths.work_dir.clone()
    }

    fn build_dataset<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &py.detach(|| pipeline::build_dataset(&self.cfg)).map_err(err)?)
    }

    fn train_head<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &py.detach(|| pipeline::train_head_stage(&self.cfg)).map_err(err)?)
    }

    #[pyo3(signature = (split = "test"))]
    fn decode<'py>(&self, py: Python<'py>, split: &str) -> PyResult<Bound<'py, PyAny>> {
        let split: SplitName = parse(split)?;
        to_py(py, &py.detach(|| pipeline::decode_stage(&self.cfg, split)).map_err(err)?)
    }

    fn label<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &py.detach(|| pipeline::label_stage(&self.cfg)).map_err(err)?)
    }

    fn select<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &py.detach(|| pipeline::select_stage(&self.cfg)).map_err(err)?)
    }

    fn prune<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &py.detach(|| pipeline::prune_stage(&self.cfg)).map_err(err)?)
    }

    fn ftt<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &py.detach(|| pipeline::ftt_stage(&self.cfg)).map_err(err)?)
    }

    #[pyo3(signature = (split = "test"))]
    fn hearst<'py>(&self, py: Python<'py>, split: &str) -> PyResult<Bound<'py, PyAny>> {
        let split: SplitName = parse(split)?;
        to_py(py, &py.detach(|| pipeline::hearst_stage(&self.cfg, split)).map_err(err)?)
    }

    #[pyo3(signature = (outputs = None))]
    fn evaluate<'py>(&self, py: Python<'py>, outputs: Option<Vec<PathBuf>>) -> PyResult<Bound<'py, PyAny>> {
        let outputs = outputs.unwrap_or_else(|| {
            let a = self.cfg.artifacts();
            [a.output(), a.ftt_output(), a.hearst_output()]
                .into_iter()
                .filter(|p| p.exists())
                .collect()
        });
        to_py(py, &py.detach(|| pipeline::evaluate_stage(&self.cfg, &outputs)).map_err(err)?)
    }

    fn batch_complete<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &py.detach(|| pipeline::batch_complete(&self.cfg)).map_err(err)?)
    }

    fn run_all<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &py.detach(|| pipeline::run_all(&self.cfg)).map_err(err)?)
    }

    #[pyo3(signature = (sample_size = None))]
    fn annotation_store(&self, py: Python<'_>, sample_size: Option<usize>) -> PyResult<AnnotationStore> {
        let mut cfg = self.cfg.clone();
        if let Some(n) = sample_size {
            cfg.annotation.sample_size = n;
        }
        let store = py.detach(|| pipeline::open_annotation_store(&cfg)).map_err(err)?;
        Ok(AnnotationStore {
            inner: Mutex::new(store),
        })
    }
}

/// Durable annotation tasks with an append-only verdict log.
#[pyclass(frozen)]
struct AnnotationStore {
    inner: Mutex<CoreStore>,
}

impl AnnotationStore {
    fn lock(&self) -> std::sync::MutexGuard<'_, CoreStore> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }
}

#[pymethods]
impl AnnotationStore {
    #[pyo3(signature = (status = None, limit = 20))]
    fn list<'py>(&self, py: Python<'py>, status: Option<&str>, limit: usize) -> PyResult<Bound<'py, PyAny>> {
        let status: Option<TaskStatus> = status.map(parse).transpose()?;
        to_py(py, &self.lock().list(status, limit))
    }

    fn get<'py>(&self, py: Python<'py>, task_id: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.lock().get(task_id).map_err(err)?)
    }

    #[pyo3(signature = (task_id, verdict, annotator = None))]
    fn submit<'py>(
        &self,
        py: Python<'py>,
        task_id: &str,
        verdict: &str,
        annotator: Option<String>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let verdict: Verdict = from_name("verdict", verdict)?;
        let mut store = self.lock();
        to_py(py, store.submit(task_id, verdict, annotator).map_err(err)?)
    }

    fn progress<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.lock().progress())
    }

    fn export<'py>(&self, py: Python<'py>, kind: &str) -> PyResult<Bound<'py, PyAny>> {
        let kind: ExportKind = from_name("export kind", kind)?;
        to_py(py, &self.lock().export(kind).map_err(err)?)
    }

    fn __len__(&self) -> usize {
        self.lock().tasks().len()
    }
}

#[pymodule]
fn granule(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(two_way_softmax, m)?)?;
    m.add_function(wrap_pyfunction!(relative_f1, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(prune, m)?)?;
    m.add_function(wrap_pyfunction!(hearst, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_class::<Pipeline>()?;
    m.add_class::<AnnotationStore>()?;
    m.add("GranuleError", py.get_type::<GranuleError>())?;
    m.add("IoError", py.get_type::<IoError>())?;
    m.add("MissingInputError", py.get_type::<MissingInputError>())?;
    m.add("SchemaError", py.get_type::<SchemaError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("SeedConflictError", py.get_type::<SeedConflictError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    Ok(())
}
