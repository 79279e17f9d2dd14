use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use granule_core::pipeline::{
    self, PipelineConfig, SplitName, StageSummary,
};
use granule_core::synthetic::{generate, write_synthetic, SyntheticConfig};
use granule_core::{Error, Result};
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "granule", version, about = "Multi-granular concept extraction pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let cfg = PipelineConfig::load(&self.config)?;
        Ok(match self.seed {
            Some(s) => cfg.with_seed(s),
            None => cfg,
        })
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split the corpus into train, validation and test sets.
    BuildDataset {
        #[command(flatten)]
        common: Common,
    },
    /// Train the boundary head on the training split.
    TrainHead {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Write ranked candidate spans above the threshold.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "test")]
        split: SplitName,
        #[arg(long)]
        threshold: Option<f64>,
        /// Decode this corpus file instead of a split.
        #[arg(long, requires = "out")]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label sampled training candidates from the gold file.
    Label {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sample: Option<usize>,
    },
    /// Train the forest and keep or drop test candidates.
    Select {
        #[command(flatten)]
        common: Common,
        /// Selector CSV (A,B,C,D,E,label,provenance).
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Apply the pruning rules to the selected concepts.
    Prune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Fixed-threshold baseline over the test candidates.
    Ftt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Pattern baseline.
    Hearst {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "test")]
        split: SplitName,
        #[arg(long)]
        patterns: Option<PathBuf>,
    },
    /// Compare system outputs.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// System output files; defaults to every output in the work directory.
        #[arg(long = "output", num_args = 1..)]
        outputs: Vec<PathBuf>,
        #[arg(long)]
        judgments: Option<PathBuf>,
    },
    /// Extract concepts for every entity and list the pairs missing from the KG.
    BatchComplete {
        #[command(flatten)]
        common: Common,
    },
    /// Every stage in order, labeling from the gold file.
    RunAll {
        #[command(flatten)]
        common: Common,
    },
    /// Generate a templated corpus with known gold concepts plus a config.
    GenSynthetic {
        /// Where to write the generated config; the data goes next to it.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 200)]
        entities: usize,
        #[arg(long, default_value_t = 50)]
        vocab_size: usize,
        #[arg(long, default_value_t = 0.5)]
        nesting_rate: f64,
        #[arg(long, default_value_t = 0.2)]
        kg_drop_rate: f64,
    },
    /// Serve the annotation API.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sample_size: Option<usize>,
        #[arg(long)]
        split: Option<SplitName>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Defaults to $GRANULE_PORT, then 8080.
        #[arg(long)]
        port: Option<u16>,
    },
}

fn summary(s: StageSummary) -> Value {
    serde_json::to_value(s).unwrap_or(Value::Null)
}

pub fn run(command: Command) -> Result<Value> {
    match command {
        Command::BuildDataset { common } => Ok(summary(pipeline::build_dataset(&common.load()?)?)),
        Command::TrainHead {
            common,
            epochs,
            learning_rate,
        } => {
            let mut cfg = common.load()?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(lr) = learning_rate {
                cfg.train.learning_rate = lr;
            }
            Ok(summary(pipeline::train_head_stage(&cfg)?))
        }
        Command::Decode {
            common,
            split,
            threshold,
            corpus,
            out,
        } => {
            let mut cfg = common.load()?;
            if let Some(t) = threshold {
                cfg.decode.threshold = t;
            }
            match (corpus, out) {
                (Some(input), Some(out)) => Ok(summary(pipeline::decode_file(&cfg, &input, &out)?)),
                _ => Ok(summary(pipeline::decode_stage(&cfg, split)?)),
            }
        }
        Command::Label { common, sample } => {
            let mut cfg = common.load()?;
            if let Some(n) = sample {
                cfg.select.label_sample = n;
            }
            Ok(summary(pipeline::label_stage(&cfg)?))
        }
        Command::Select { common, labels } => {
            let mut cfg = common.load()?;
            if labels.is_some() {
                cfg.paths.labels = labels;
            }
            Ok(summary(pipeline::select_stage(&cfg)?))
        }
        Command::Prune { common, rules } => {
            let mut cfg = common.load()?;
            if rules.is_some() {
                cfg.paths.rules = rules;
            }
            Ok(summary(pipeline::prune_stage(&cfg)?))
        }
        Command::Ftt { common, threshold } => {
            let mut cfg = common.load()?;
            if let Some(t) = threshold {
                cfg.ftt.threshold = t;
            }
            Ok(summary(pipeline::ftt_stage(&cfg)?))
        }
        Command::Hearst {
            common,
            split,
            patterns,
        } => {
            let mut cfg = common.load()?;
            if patterns.is_some() {
                cfg.paths.patterns = patterns;
            }
            Ok(summary(pipeline::hearst_stage(&cfg, split)?))
        }
        Command::Evaluate {
            common,
            outputs,
            judgments,
        } => {
            let mut cfg = common.load()?;
            if judgments.is_some() {
                cfg.paths.judgments = judgments;
            }
            let outputs = if outputs.is_empty() {
                let a = cfg.artifacts();
                let found: Vec<PathBuf> = [a.output(), a.ftt_output(), a.hearst_output()]
                    .into_iter()
                    .filter(|p| p.exists())
                    .collect();
                if found.is_empty() {
                    return Err(Error::MissingInput(a.output()));
                }
                found
            } else {
                outputs
            };
            Ok(summary(pipeline::evaluate_stage(&cfg, &outputs)?))
        }
        Command::BatchComplete { common } => Ok(summary(pipeline::batch_complete(&common.load()?)?)),
        Command::RunAll { common } => {
            let cfg = common.load()?;
            let report = pipeline::run_all(&cfg)?;
            Ok(json!({"stage": "run-all", "report": report}))
        }
        Command::GenSynthetic {
            config,
            seed,
            entities,
            vocab_size,
            nesting_rate,
            kg_drop_rate,
        } => gen_synthetic(config, seed.unwrap_or(0), entities, vocab_size, nesting_rate, kg_drop_rate),
        Command::Serve {
            common,
            sample_size,
            split,
            host,
            port,
        } => {
            let mut cfg = common.load()?;
            if let Some(n) = sample_size {
                cfg.annotation.sample_size = n;
            }
            if let Some(s) = split {
                cfg.annotation.split = s;
            }
            let port = match port {
                Some(p) => p,
                None => crate::server::port_from_env()?,
            };
            let store = pipeline::open_annotation_store(&cfg)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            runtime
                .block_on(crate::server::serve(store, &host, port))
                .map_err(|e| Error::io(format!("{host}:{port}"), e))?;
            Ok(json!({"stage": "serve", "stopped": true}))
        }
    }
}

fn gen_synthetic(
    config_path: PathBuf,
    seed: u64,
    entities: usize,
    vocab_size: usize,
    nesting_rate: f64,
    kg_drop_rate: f64,
) -> Result<Value> {
    let dir = match config_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let corpus = generate(&SyntheticConfig {
        entities,
        vocab_size,
        nesting_rate,
        kg_drop_rate,
        seed,
    })?;
    write_synthetic(&corpus, &dir)?;
    let text = pipeline::synthetic_pipeline_config(entities, seed).to_toml()?;
    std::fs::write(&config_path, text).map_err(|e| Error::io(&config_path, e))?;
    Ok(json!({
        "stage": "gen-synthetic",
        "config": config_path,
        "audit": corpus.audit,
    }))
}
