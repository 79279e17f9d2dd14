//! Start/end pointer head over token embeddings.
//!
//! Each token gets two independent two-way softmaxes, one deciding whether
//! it starts a concept and one whether it ends one. Both are
//! length-independent linear scorers over the embedding dimension, so several
//! positions can carry high probability at once.
//!
//! Training minimises
//! `alpha * L_start + beta * L_end + (1 - alpha - beta) * L_span`,
//! where the first two are per-token binary cross-entropies and `L_span` is a
//! binary cross-entropy over every span up to `max_span_length` tokens with
//! the span confidence halved into `[0, 1]`.

mod embed;
mod train;

use serde::{Deserialize, Serialize};

pub use embed::{embed_tokens, EmbedderConfig, EmbeddingProvider, HashedEmbedder, QuestionTemplate};
pub use train::{
    prepare_examples, train_head, train_on_examples, Adam, EpochLog, HeadCheckpoint, LossSummary,
    TrainConfig, TrainExample, TrainOutcome,
};

use crate::corpus::WeakLabels;
use crate::decoder::{span_indices, DEFAULT_MAX_SPAN_LENGTH};
use crate::error::{Error, Result};

/// Clipping bound applied to probabilities inside every cross-entropy term.
pub const EPSILON: f64 = 1e-7;

/// Row-major `n × d` matrix of token embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if values.len() != rows * dim {
            return Err(Error::LengthMismatch {
                what: "embedding values",
                left: values.len(),
                right: rows * dim,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding matrix"));
        }
        Ok(EmbeddingMatrix { rows, dim, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One two-way softmax scorer: a positive and a complementary negative logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerParams {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub neg_weights: Vec<f64>,
    pub neg_bias: f64,
}

impl ScorerParams {
    pub fn zeros(dim: usize) -> Self {
        ScorerParams {
            weights: vec![0.0; dim],
            bias: 0.0,
            neg_weights: vec![0.0; dim],
            neg_bias: 0.0,
        }
    }

    fn logits(&self, row: &[f64]) -> (f64, f64) {
        (
            dot(&self.weights, row) + self.bias,
            dot(&self.neg_weights, row) + self.neg_bias,
        )
    }

    fn is_finite(&self) -> bool {
        self.bias.is_finite()
            && self.neg_bias.is_finite()
            && self.weights.iter().chain(&self.neg_weights).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub start: ScorerParams,
    pub end: ScorerParams,
}

impl HeadParams {
    pub fn zeros(dim: usize) -> Self {
        HeadParams {
            start: ScorerParams::zeros(dim),
            end: ScorerParams::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.start.weights.len()
    }

    pub fn param_count(&self) -> usize {
        4 * self.dim() + 4
    }

    /// Flattened view: start (w, b, w_neg, b_neg) then end (w, b, w_neg, b_neg).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for s in [&self.start, &self.end] {
            out.extend_from_slice(&s.weights);
            out.push(s.bias);
            out.extend_from_slice(&s.neg_weights);
            out.push(s.neg_bias);
        }
        out
    }

    pub fn from_flat(dim: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != 4 * dim + 4 {
            return Err(Error::LengthMismatch {
                what: "flat parameters",
                left: flat.len(),
                right: 4 * dim + 4,
            });
        }
        let scorer = |chunk: &[f64]| ScorerParams {
            weights: chunk[..dim].to_vec(),
            bias: chunk[dim],
            neg_weights: chunk[dim + 1..2 * dim + 1].to_vec(),
            neg_bias: chunk[2 * dim + 1],
        };
        Ok(HeadParams {
            start: scorer(&flat[..2 * dim + 2]),
            end: scorer(&flat[2 * dim + 2..]),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.start.is_finite() && self.end.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityProfile {
    pub p_start: Vec<f64>,
    pub p_end: Vec<f64>,
}

impl ProbabilityProfile {
    pub fn len(&self) -> usize {
        self.p_start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_start.is_empty()
    }
}

/// Positive component of `softmax([pos, neg])`.
pub fn two_way_softmax(pos: f64, neg: f64) -> f64 {
    let m = pos.max(neg);
    let a = (pos - m).exp();
    let b = (neg - m).exp();
    a / (a + b)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn forward(embeddings: &EmbeddingMatrix, params: &HeadParams) -> Result<ProbabilityProfile> {
    if embeddings.dim() != params.dim() || params.end.weights.len() != params.dim() {
        return Err(Error::DimensionMismatch {
            embedding: embeddings.dim(),
            head: params.dim(),
        });
    }
    let mut p_start = Vec::with_capacity(embeddings.rows());
    let mut p_end = Vec::with_capacity(embeddings.rows());
    for i in 0..embeddings.rows() {
        let row = embeddings.row(i);
        let (a, b) = params.start.logits(row);
        p_start.push(two_way_softmax(a, b));
        let (a, b) = params.end.logits(row);
        p_end.push(two_way_softmax(a, b));
    }
    Ok(ProbabilityProfile { p_start, p_end })
}

/// Mixing weights and span cap for the combined loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub max_span_length: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.3,
            beta: 0.25,
            max_span_length: DEFAULT_MAX_SPAN_LENGTH,
        }
    }
}

impl LossConfig {
    pub fn span_weight(&self) -> f64 {
        1.0 - self.alpha - self.beta
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.alpha + self.beta < 1.0) {
            return Err(Error::Config(format!(
                "need alpha, beta > 0 and alpha + beta < 1, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if self.max_span_length == 0 {
            return Err(Error::Config("max_span_length must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loss_start: f64,
    pub loss_end: f64,
    pub loss_span: f64,
    pub total: f64,
    pub alpha: f64,
    pub beta: f64,
}

fn clip(p: f64) -> f64 {
    p.clamp(EPSILON, 1.0 - EPSILON)
}

fn bce(p: f64, label: bool) -> f64 {
    let q = clip(p);
    if label {
        -q.ln()
    } else {
        -(1.0 - q).ln()
    }
}

/// d bce / d p; zero where the clip is active.
fn bce_grad(p: f64, label: bool) -> f64 {
    if !(EPSILON..=1.0 - EPSILON).contains(&p) {
        return 0.0;
    }
    if label {
        -1.0 / p
    } else {
        1.0 / (1.0 - p)
    }
}

fn check_inputs(profile: &ProbabilityProfile, labels: &WeakLabels) -> Result<()> {
    if profile.p_end.len() != profile.p_start.len() {
        return Err(Error::LengthMismatch {
            what: "p_end",
            left: profile.p_end.len(),
            right: profile.p_start.len(),
        });
    }
    if labels.len() != profile.len() || labels.end_flags.len() != profile.len() {
        return Err(Error::LengthMismatch {
            what: "labels",
            left: labels.len(),
            right: profile.len(),
        });
    }
    if profile.p_start.iter().chain(&profile.p_end).any(|p| p.is_nan()) {
        return Err(Error::NonFinite("probability profile"));
    }
    Ok(())
}

pub fn compute_loss(
    profile: &ProbabilityProfile,
    labels: &WeakLabels,
    config: &LossConfig,
) -> Result<LossBreakdown> {
    config.validate()?;
    check_inputs(profile, labels)?;
    let n = profile.len();
    if n == 0 {
        return Ok(LossBreakdown {
            loss_start: 0.0,
            loss_end: 0.0,
            loss_span: 0.0,
            total: 0.0,
            alpha: config.alpha,
            beta: config.beta,
        });
    }
    let loss_start = (0..n)
        .map(|i| bce(profile.p_start[i], labels.start_flags[i]))
        .sum::<f64>()
        / n as f64;
    let loss_end = (0..n)
        .map(|i| bce(profile.p_end[i], labels.end_flags[i]))
        .sum::<f64>()
        / n as f64;
    let mut span_sum = 0.0;
    let mut span_count = 0usize;
    for (i, j) in span_indices(n, config.max_span_length) {
        let q = (profile.p_start[i] + profile.p_end[j]) / 2.0;
        span_sum += bce(q, labels.span_flags.contains(&(i, j)));
        span_count += 1;
    }
    let loss_span = span_sum / span_count as f64;
    let total =
        config.alpha * loss_start + config.beta * loss_end + config.span_weight() * loss_span;
    Ok(LossBreakdown {
        loss_start,
        loss_end,
        loss_span,
        total,
        alpha: config.alpha,
        beta: config.beta,
    })
}

/// Which loss terms to differentiate, with their weights.
#[derive(Debug, Clone, Copy)]
pub struct TermWeights {
    pub start: f64,
    pub end: f64,
    pub span: f64,
}

impl TermWeights {
    pub fn from_config(config: &LossConfig) -> Self {
        TermWeights {
            start: config.alpha,
            end: config.beta,
            span: config.span_weight(),
        }
    }
}

/// Loss and its analytic gradient with respect to every head parameter.
pub fn gradients(
    embeddings: &EmbeddingMatrix,
    params: &HeadParams,
    labels: &WeakLabels,
    config: &LossConfig,
) -> Result<(LossBreakdown, HeadParams)> {
    config.validate()?;
    let profile = forward(embeddings, params)?;
    let loss = compute_loss(&profile, labels, config)?;
    let grads = weighted_gradients(
        embeddings,
        &profile,
        labels,
        config.max_span_length,
        TermWeights::from_config(config),
    )?;
    Ok((loss, grads))
}

/// Gradient of `w.start * L_start + w.end * L_end + w.span * L_span`.
pub fn weighted_gradients(
    embeddings: &EmbeddingMatrix,
    profile: &ProbabilityProfile,
    labels: &WeakLabels,
    max_span_length: usize,
    weights: TermWeights,
) -> Result<HeadParams> {
    check_inputs(profile, labels)?;
    let n = profile.len();
    let dim = embeddings.dim();
    let mut grads = HeadParams::zeros(dim);
    if n == 0 {
        return Ok(grads);
    }
    let mut d_pstart = vec![0.0; n];
    let mut d_pend = vec![0.0; n];
    for i in 0..n {
        d_pstart[i] = weights.start / n as f64 * bce_grad(profile.p_start[i], labels.start_flags[i]);
        d_pend[i] = weights.end / n as f64 * bce_grad(profile.p_end[i], labels.end_flags[i]);
    }
    if weights.span != 0.0 {
        let count = crate::decoder::span_count(n, max_span_length) as f64;
        for (i, j) in span_indices(n, max_span_length) {
            let q = (profile.p_start[i] + profile.p_end[j]) / 2.0;
            let g = weights.span / count * bce_grad(q, labels.span_flags.contains(&(i, j))) * 0.5;
            d_pstart[i] += g;
            d_pend[j] += g;
        }
    }
    for i in 0..n {
        let row = embeddings.row(i);
        accumulate(&mut grads.start, row, d_pstart[i], profile.p_start[i]);
        accumulate(&mut grads.end, row, d_pend[i], profile.p_end[i]);
    }
    Ok(grads)
}

/// Chains `dL/dp` through the two-way softmax: `dp/d(pos - neg) = p (1 - p)`.
fn accumulate(grad: &mut ScorerParams, row: &[f64], d_prob: f64, p: f64) {
    if d_prob == 0.0 {
        return;
    }
    let d_logit = d_prob * p * (1.0 - p);
    for (k, x) in row.iter().enumerate() {
        grad.weights[k] += d_logit * x;
        grad.neg_weights[k] -= d_logit * x;
    }
    grad.bias += d_logit;
    grad.neg_bias -= d_logit;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingMatrix {
        EmbeddingMatrix::new(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_params(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> HeadParams {
        let flat: Vec<f64> = (0..4 * d + 4).map(|_| rng.random_range(-scale..scale)).collect();
        HeadParams::from_flat(d, &flat).unwrap()
    }

    fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> WeakLabels {
        let mut spans = BTreeSet::new();
        for _ in 0..rng.random_range(0..3) {
            let i = rng.random_range(0..n);
            let j = rng.random_range(i..n.min(i + 3));
            spans.insert((i, j));
        }
        WeakLabels::from_spans(n, spans)
    }

    #[test]
    fn zero_params_give_one_half() {
        let e = EmbeddingMatrix::new(3, 2, vec![0.3, -1.0, 2.0, 0.5, 0.0, 1.0]).unwrap();
        let p = forward(&e, &HeadParams::zeros(2)).unwrap();
        assert!(p.p_start.iter().chain(&p.p_end).all(|&x| x == 0.5));
    }

    #[test]
    fn saturated_logit_difference() {
        let e = EmbeddingMatrix::new(1, 1, vec![0.0]).unwrap();
        let mut params = HeadParams::zeros(1);
        params.start.bias = 50.0;
        params.end.neg_bias = 50.0;
        let p = forward(&e, &params).unwrap();
        assert!((p.p_start[0] - 1.0).abs() < 1e-9);
        assert!(p.p_end[0].abs() < 1e-9);
    }

    #[test]
    fn forward_matches_naive_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = random_matrix(&mut rng, 3, 4);
        let params = random_params(&mut rng, 4, 1.0);
        let p = forward(&e, &params).unwrap();
        for i in 0..3 {
            let row = e.row(i);
            let logit = |w: &[f64], b: f64| w.iter().zip(row).map(|(a, x)| a * x).sum::<f64>() + b;
            let naive = |s: &ScorerParams| {
                let a = logit(&s.weights, s.bias).exp();
                let b = logit(&s.neg_weights, s.neg_bias).exp();
                a / (a + b)
            };
            assert!((p.p_start[i] - naive(&params.start)).abs() < 1e-12);
            assert!((p.p_end[i] - naive(&params.end)).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_names_both_sides() {
        let e = EmbeddingMatrix::new(1, 3, vec![0.0; 3]).unwrap();
        let err = forward(&e, &HeadParams::zeros(4)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('3') && msg.contains('4'), "{msg}");
    }

    #[test]
    fn shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = random_matrix(&mut rng, 4, 3);
        let params = random_params(&mut rng, 3, 1.0);
        let mut shifted = params.clone();
        shifted.start.bias += 7.5;
        shifted.start.neg_bias += 7.5;
        let a = forward(&e, &params).unwrap();
        let b = forward(&e, &shifted).unwrap();
        for i in 0..4 {
            assert!((a.p_start[i] - b.p_start[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_half_gives_ln2_start_loss() {
        let profile = ProbabilityProfile {
            p_start: vec![0.5; 5],
            p_end: vec![0.5; 5],
        };
        let labels = WeakLabels::from_spans(5, [(1, 2), (4, 4)]);
        let loss = compute_loss(&profile, &labels, &LossConfig::default()).unwrap();
        assert!((loss.loss_start - std::f64::consts::LN_2).abs() < 1e-9);
        assert!((loss.loss_end - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn perfect_predictions_have_near_zero_loss() {
        let bound = -2.0 * (1.0 - EPSILON).ln();
        // a single-token concept
        let labels = WeakLabels::from_spans(1, [(0, 0)]);
        let profile = ProbabilityProfile {
            p_start: vec![1.0 - EPSILON],
            p_end: vec![1.0 - EPSILON],
        };
        let loss = compute_loss(&profile, &labels, &LossConfig::default()).unwrap();
        for c in [loss.loss_start, loss.loss_end, loss.loss_span, loss.total] {
            assert!(c <= bound, "{c} > {bound}");
        }
        // a longer abstract with no concept
        let labels = WeakLabels::empty(6);
        let profile = ProbabilityProfile {
            p_start: vec![EPSILON; 6],
            p_end: vec![EPSILON; 6],
        };
        let loss = compute_loss(&profile, &labels, &LossConfig::default()).unwrap();
        for c in [loss.loss_start, loss.loss_end, loss.loss_span, loss.total] {
            assert!(c <= bound, "{c} > {bound}");
        }
        // boundary terms are also at the minimum when concepts exist
        let labels = WeakLabels::from_spans(6, [(1, 3), (4, 5)]);
        let on = |flags: &Vec<bool>| {
            flags
                .iter()
                .map(|&f| if f { 1.0 - EPSILON } else { EPSILON })
                .collect::<Vec<_>>()
        };
        let profile = ProbabilityProfile {
            p_start: on(&labels.start_flags),
            p_end: on(&labels.end_flags),
        };
        let loss = compute_loss(&profile, &labels, &LossConfig::default()).unwrap();
        assert!(loss.loss_start <= bound && loss.loss_end <= bound);
    }

    fn loop_oracle(profile: &ProbabilityProfile, labels: &WeakLabels, alpha: f64, beta: f64, max_len: usize) -> f64 {
        let n = profile.p_start.len();
        let xent = |p: f64, y: f64| {
            let p = p.max(EPSILON).min(1.0 - EPSILON);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        };
        let mut ls = 0.0;
        let mut le = 0.0;
        for i in 0..n {
            ls += xent(profile.p_start[i], if labels.start_flags[i] { 1.0 } else { 0.0 });
            le += xent(profile.p_end[i], if labels.end_flags[i] { 1.0 } else { 0.0 });
        }
        let mut lspan = 0.0;
        let mut count = 0.0;
        for i in 0..n {
            for j in i..n {
                if j - i >= max_len {
                    continue;
                }
                let y = if labels.span_flags.contains(&(i, j)) { 1.0 } else { 0.0 };
                lspan += xent((profile.p_start[i] + profile.p_end[j]) * 0.5, y);
                count += 1.0;
            }
        }
        alpha * ls / n as f64 + beta * le / n as f64 + (1.0 - alpha - beta) * lspan / count
    }

    #[test]
    fn loss_matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let profile = ProbabilityProfile {
                p_start: (0..4).map(|_| rng.random::<f64>()).collect(),
                p_end: (0..4).map(|_| rng.random::<f64>()).collect(),
            };
            let labels = random_labels(&mut rng, 4);
            let config = LossConfig {
                max_span_length: 3,
                ..LossConfig::default()
            };
            let loss = compute_loss(&profile, &labels, &config).unwrap();
            let want = loop_oracle(&profile, &labels, 0.3, 0.25, 3);
            assert!((loss.total - want).abs() < 1e-10);
        }
    }

    #[test]
    fn loss_errors() {
        let profile = ProbabilityProfile {
            p_start: vec![0.5, f64::NAN],
            p_end: vec![0.5, 0.5],
        };
        assert!(matches!(
            compute_loss(&profile, &WeakLabels::empty(2), &LossConfig::default()),
            Err(Error::NonFinite(_))
        ));
        let profile = ProbabilityProfile {
            p_start: vec![0.5; 3],
            p_end: vec![0.5; 3],
        };
        assert!(matches!(
            compute_loss(&profile, &WeakLabels::empty(2), &LossConfig::default()),
            Err(Error::LengthMismatch { .. })
        ));
        let bad = LossConfig {
            alpha: 0.6,
            beta: 0.5,
            ..LossConfig::default()
        };
        assert!(compute_loss(&profile, &WeakLabels::empty(3), &bad).is_err());
    }

    fn finite_difference(
        e: &EmbeddingMatrix,
        params: &HeadParams,
        labels: &WeakLabels,
        config: &LossConfig,
        h: f64,
    ) -> Vec<f64> {
        let base = params.to_flat();
        let total = |flat: &[f64]| {
            let p = HeadParams::from_flat(params.dim(), flat).unwrap();
            compute_loss(&forward(e, &p).unwrap(), labels, config).unwrap().total
        };
        (0..base.len())
            .map(|k| {
                let mut plus = base.clone();
                let mut minus = base.clone();
                plus[k] += h;
                minus[k] -= h;
                (total(&plus) - total(&minus)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let e = random_matrix(&mut rng, 5, 8);
        let params = random_params(&mut rng, 8, 0.5);
        let labels = random_labels(&mut rng, 5);
        let config = LossConfig::default();
        let (_, grads) = gradients(&e, &params, &labels, &config).unwrap();
        let fd = finite_difference(&e, &params, &labels, &config, 1e-5);
        for (a, b) in grads.to_flat().iter().zip(&fd) {
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
            assert!(rel < 1e-4, "analytic {a} vs fd {b}");
        }
    }

    #[test]
    fn saturated_empty_labels_give_vanishing_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = random_matrix(&mut rng, 4, 3);
        let mut params = HeadParams::zeros(3);
        params.start.neg_bias = 30.0;
        params.end.neg_bias = 30.0;
        let (_, grads) = gradients(&e, &params, &WeakLabels::empty(4), &LossConfig::default()).unwrap();
        let norm: f64 = grads.to_flat().iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "{norm}");
    }

    #[test]
    fn start_loss_gradient_ignores_end_scorer() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = random_matrix(&mut rng, 5, 4);
        let params = random_params(&mut rng, 4, 1.0);
        let labels = random_labels(&mut rng, 5);
        let profile = forward(&e, &params).unwrap();
        let only_start = TermWeights {
            start: 1.0,
            end: 0.0,
            span: 0.0,
        };
        let g = weighted_gradients(&e, &profile, &labels, 16, only_start).unwrap();
        assert!(g.end.weights.iter().chain(&g.end.neg_weights).all(|&x| x == 0.0));
        assert_eq!(g.end.bias, 0.0);
        assert_eq!(g.end.neg_bias, 0.0);
        assert!(g.start.weights.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = random_params(&mut rng, 5, 1.0);
        assert_eq!(HeadParams::from_flat(5, &params.to_flat()).unwrap(), params);
    }
}
