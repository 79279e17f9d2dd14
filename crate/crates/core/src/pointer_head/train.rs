use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    compute_loss, forward, gradients, EmbedderConfig, EmbeddingMatrix, EmbeddingProvider,
    HeadParams, LossConfig, QuestionTemplate,
};
use crate::corpus::{build_weak_labels, DatasetSplit, EntityRecord, KgStore, WeakLabels};
use crate::decoder::DEFAULT_MAX_SPAN_LENGTH;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub max_span_length: usize,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.3,
            beta: 0.25,
            learning_rate: 1e-2,
            batch_size: 4,
            epochs: 2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            max_span_length: DEFAULT_MAX_SPAN_LENGTH,
            init_scale: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            alpha: self.alpha,
            beta: self.beta,
            max_span_length: self.max_span_length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss_config().validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("Adam decay rates must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// A record's embeddings paired with its weak labels.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub entity_id: String,
    pub embeddings: EmbeddingMatrix,
    pub labels: WeakLabels,
}

/// Embeds and labels `records`; records without any matched concept are
/// dropped because they carry no span supervision.
pub fn prepare_examples(
    records: &[EntityRecord],
    kg: &KgStore,
    embedder: &dyn EmbeddingProvider,
    question: &QuestionTemplate,
) -> Result<Vec<TrainExample>> {
    records
        .par_iter()
        .filter_map(|r| {
            let labels = build_weak_labels(r, kg);
            if labels.is_empty() {
                return None;
            }
            Some(embedder.embed(r, question).map(|embeddings| TrainExample {
                entity_id: r.entity_id.clone(),
                embeddings,
                labels,
            }))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub loss_start: f64,
    pub loss_end: f64,
    pub loss_span: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: LossSummary,
    pub val_loss: Option<LossSummary>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: HeadParams,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Versioned on-disk form of a trained head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadCheckpoint {
    pub format_version: u32,
    pub dim: usize,
    pub embedder: EmbedderConfig,
    pub question: QuestionTemplate,
    pub train_config: TrainConfig,
    pub best_epoch: usize,
    pub params: HeadParams,
}

impl HeadCheckpoint {
    pub const FORMAT_VERSION: u32 = 1;
}

fn mean_loss(examples: &[TrainExample], params: &HeadParams, loss: &LossConfig) -> Result<Option<LossSummary>> {
    if examples.is_empty() {
        return Ok(None);
    }
    let parts: Vec<_> = examples
        .par_iter()
        .map(|ex| compute_loss(&forward(&ex.embeddings, params)?, &ex.labels, loss))
        .collect::<Result<_>>()?;
    let n = parts.len() as f64;
    let mut s = LossSummary {
        loss_start: 0.0,
        loss_end: 0.0,
        loss_span: 0.0,
        total: 0.0,
    };
    for p in &parts {
        s.loss_start += p.loss_start;
        s.loss_end += p.loss_end;
        s.loss_span += p.loss_span;
        s.total += p.total;
    }
    s.loss_start /= n;
    s.loss_end /= n;
    s.loss_span /= n;
    s.total /= n;
    Ok(Some(s))
}

pub fn initial_params(dim: usize, config: &TrainConfig) -> HeadParams {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let flat: Vec<f64> = (0..4 * dim + 4)
        .map(|_| {
            if config.init_scale > 0.0 {
                rng.random_range(-config.init_scale..config.init_scale)
            } else {
                0.0
            }
        })
        .collect();
    HeadParams::from_flat(dim, &flat).expect("length matches")
}

fn diverged(err: Error, last_finite_loss: f64) -> Error {
    match err {
        Error::NonFinite(_) => Error::Diverged { last_finite_loss },
        other => other,
    }
}

/// Mini-batch Adam over precomputed examples. Returns the checkpoint
/// (including the initialization) with the lowest validation loss, or the
/// lowest training loss when there is no validation data.
pub fn train_on_examples(
    train: &[TrainExample],
    validation: &[TrainExample],
    dim: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InsufficientRecords {
            required: 1,
            available: 0,
        });
    }
    let loss_cfg = config.loss_config();
    let mut params = initial_params(dim, config);
    let mut flat = params.to_flat();
    let mut adam = Adam::new(
        flat.len(),
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_epsilon,
    );
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));

    let evaluate = |params: &HeadParams, epoch: usize| -> Result<EpochLog> {
        let train_loss = mean_loss(train, params, &loss_cfg)?.expect("train non-empty");
        let val_loss = mean_loss(validation, params, &loss_cfg)?;
        Ok(EpochLog {
            epoch,
            train_loss,
            val_loss,
        })
    };
    let score = |log: &EpochLog| log.val_loss.unwrap_or(log.train_loss).total;

    let first = evaluate(&params, 0)?;
    let mut last_finite = score(&first);
    if !last_finite.is_finite() {
        return Err(Error::Diverged {
            last_finite_loss: f64::NAN,
        });
    }
    let mut best = (params.clone(), 0usize, last_finite);
    let mut log = vec![first];

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            let per_example: Vec<Vec<f64>> = batch
                .par_iter()
                .map(|&idx| {
                    let ex = &train[idx];
                    gradients(&ex.embeddings, &params, &ex.labels, &loss_cfg).map(|(_, g)| g.to_flat())
                })
                .collect::<Result<_>>()
                .map_err(|e| diverged(e, last_finite))?;
            let mut sum = vec![0.0; flat.len()];
            for g in &per_example {
                for (s, x) in sum.iter_mut().zip(g) {
                    *s += x;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            sum.iter_mut().for_each(|s| *s *= scale);
            adam.step(&mut flat, &sum);
            params = HeadParams::from_flat(dim, &flat)?;
            if !params.is_finite() {
                return Err(Error::Diverged {
                    last_finite_loss: last_finite,
                });
            }
        }
        let entry = evaluate(&params, epoch).map_err(|e| diverged(e, last_finite))?;
        let s = score(&entry);
        if !s.is_finite() || !entry.train_loss.total.is_finite() {
            return Err(Error::Diverged {
                last_finite_loss: last_finite,
            });
        }
        last_finite = s;
        if s < best.2 {
            best = (params.clone(), epoch, s);
        }
        log.push(entry);
    }
    Ok(TrainOutcome {
        params: best.0,
        best_epoch: best.1,
        log,
    })
}

/// Embeds the split, derives weak labels from `kg` and trains the head.
pub fn train_head(
    split: &DatasetSplit,
    kg: &KgStore,
    embedder: &dyn EmbeddingProvider,
    question: &QuestionTemplate,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let train = prepare_examples(&split.train, kg, embedder, question)?;
    let validation = prepare_examples(&split.validation, kg, embedder, question)?;
    train_on_examples(&train, &validation, embedder.dim(), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LanguageMode;
    use crate::pointer_head::{EmbedderConfig, HashedEmbedder};

    fn toy_examples() -> Vec<TrainExample> {
        let texts = [
            ("Acme", "Acme is a chemical company based in Ohio .", "chemical company"),
            ("Borex", "Borex is a railway station in Kent .", "railway station"),
            ("Celto", "Celto is a river in Peru .", "river"),
            ("Dunmo", "Dunmo is a software company based in Oslo .", "software company"),
            ("Elka", "Elka is a bus station in Rome .", "bus station"),
            ("Ferro", "Ferro is a mountain river in Chile .", "mountain river"),
        ];
        let embedder = HashedEmbedder::new(EmbedderConfig { dim: 64, window: 2 }).unwrap();
        let records: Vec<EntityRecord> = texts
            .iter()
            .map(|(name, text, gold)| {
                EntityRecord::new(*name, *name, *text, LanguageMode::Word, [gold.to_string()]).unwrap()
            })
            .collect();
        prepare_examples(&records, &KgStore::default(), &embedder, &QuestionTemplate::default()).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ex = toy_examples();
        let config = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train_on_examples(&ex, &[], 64, &config).unwrap();
        assert_eq!(out.params, initial_params(64, &config));
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn training_reduces_start_loss() {
        let ex = toy_examples();
        let config = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        let out = train_on_examples(&ex[..4], &ex[4..], 64, &config).unwrap();
        let first = out.log[0].val_loss.unwrap().loss_start;
        let best = out.log[out.best_epoch].val_loss.unwrap().loss_start;
        assert!(best < first, "{best} !< {first}");
    }

    #[test]
    fn same_seed_same_params() {
        let ex = toy_examples();
        let config = TrainConfig {
            epochs: 3,
            seed: 7,
            ..TrainConfig::default()
        };
        let a = train_on_examples(&ex, &[], 64, &config).unwrap();
        let b = train_on_examples(&ex, &[], 64, &config).unwrap();
        let bits = |p: &HeadParams| p.to_flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.params), bits(&b.params));
    }

    #[test]
    fn empty_train_split_is_an_error() {
        assert!(train_on_examples(&[], &[], 8, &TrainConfig::default()).is_err());
    }

    #[test]
    fn divergence_reports_last_finite_loss() {
        let ex = toy_examples();
        let config = TrainConfig {
            epochs: 2,
            learning_rate: f64::MAX,
            ..TrainConfig::default()
        };
        match train_on_examples(&ex, &[], 64, &config) {
            Err(Error::Diverged { last_finite_loss }) => assert!(last_finite_loss.is_finite()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(2, 0.1, 0.9, 0.999, 1e-8);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[2.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }
}
