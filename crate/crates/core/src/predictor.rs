//! Dropout classifier trained with a margin ranking loss.
//!
//! A feed-forward network (hidden sizes 100, 50, 25 with rectifiers and a
//! single sigmoid output) scores each week. Training pairs a user's dropout
//! week with every non-dropout week of the same user and minimizes
//! `max(0, margin - (p_pos - p_neg))` with Adam.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sigmoid, Block, Matrix};
use crate::metrics::f1_score;
use crate::miner::ActionRepresentation;

pub const HIDDEN_SIZES: [usize; 3] = [100, 50, 25];

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorParams {
    pub layers: Vec<Dense>,
}

impl PredictorParams {
    /// Layer widths `input -> 100 -> 50 -> 25 -> 1`.
    pub fn init(input_dim: usize, seed: u64) -> Self {
        Self::init_with_hidden(input_dim, &HIDDEN_SIZES, seed)
    }

    pub fn init_with_hidden(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Dense {
                    weights: Matrix::uniform(w[1], w[0], bound, &mut rng),
                    bias: Matrix::uniform(1, w[1], bound, &mut rng).data,
                }
            })
            .collect();
        PredictorParams { layers }
    }

    pub fn zeros(input_dim: usize) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(&HIDDEN_SIZES);
        sizes.push(1);
        PredictorParams {
            layers: sizes
                .windows(2)
                .map(|w| Dense {
                    weights: Matrix::zeros(w[1], w[0]),
                    bias: vec![0.0; w[1]],
                })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols
    }

    fn zeros_like(&self) -> Self {
        PredictorParams {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Matrix::zeros(l.weights.rows, l.weights.cols),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.data.iter_mut().chain(l.bias.iter_mut()))
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.data.iter().chain(l.bias.iter()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }
}

impl Serialize for PredictorParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(1 + 2 * self.layers.len()))?;
        map.serialize_entry("input_dim", &self.input_dim())?;
        for (i, layer) in self.layers.iter().enumerate() {
            map.serialize_entry(&format!("W{}", i + 1), &Block::from_matrix(&layer.weights))?;
            map.serialize_entry(&format!("b{}", i + 1), &Block::from_vector(&layer.bias))?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for PredictorParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut raw: BTreeMap<String, serde_json::Value> = BTreeMap::deserialize(d)?;
        let input_dim: usize = raw
            .remove("input_dim")
            .ok_or_else(|| D::Error::missing_field("input_dim"))
            .and_then(|v| serde_json::from_value(v).map_err(D::Error::custom))?;
        let mut layers = Vec::new();
        let mut fan_in = input_dim;
        for i in 1.. {
            let (Some(w), Some(b)) = (raw.remove(&format!("W{i}")), raw.remove(&format!("b{i}"))) else {
                break;
            };
            let w: Block = serde_json::from_value(w).map_err(D::Error::custom)?;
            let b: Block = serde_json::from_value(b).map_err(D::Error::custom)?;
            let rows = w.shape.first().copied().unwrap_or(0);
            let weights = w
                .into_matrix(&format!("W{i}"), rows, fan_in)
                .map_err(D::Error::custom)?;
            let bias = b.into_vector(&format!("b{i}"), rows).map_err(D::Error::custom)?;
            fan_in = rows;
            layers.push(Dense { weights, bias });
        }
        if let Some(extra) = raw.keys().next() {
            return Err(D::Error::custom(format!("unexpected key `{extra}`")));
        }
        if layers.is_empty() || fan_in != 1 {
            return Err(D::Error::custom("predictor must end in a single output unit"));
        }
        Ok(PredictorParams { layers })
    }
}

/// Activations of every layer; `activations[0]` is the input and the last
/// entry holds the output probability.
struct Trace {
    activations: Vec<Vec<f64>>,
}

fn forward_trace(params: &PredictorParams, x: &[f64]) -> Trace {
    let last = params.layers.len() - 1;
    let mut activations = vec![x.to_vec()];
    for (i, layer) in params.layers.iter().enumerate() {
        let z = layer.weights.affine(activations.last().expect("input"), &layer.bias);
        let a = if i == last {
            z.into_iter().map(sigmoid).collect()
        } else {
            z.into_iter().map(|v| v.max(0.0)).collect()
        };
        activations.push(a);
    }
    Trace { activations }
}

impl Trace {
    fn output(&self) -> f64 {
        self.activations.last().expect("output layer")[0]
    }

    /// Accumulates `d_output * dp/dparams` into `grads`.
    fn backward(&self, params: &PredictorParams, d_output: f64, grads: &mut PredictorParams) {
        let p = self.output();
        let mut delta = vec![d_output * p * (1.0 - p)];
        for l in (0..params.layers.len()).rev() {
            let input = &self.activations[l];
            grads.layers[l].weights.add_outer(&delta, input, 1.0);
            for (g, d) in grads.layers[l].bias.iter_mut().zip(&delta) {
                *g += d;
            }
            if l == 0 {
                break;
            }
            let mut back = params.layers[l].weights.transpose_mul(&delta);
            for (b, &a) in back.iter_mut().zip(input) {
                if a <= 0.0 {
                    *b = 0.0;
                }
            }
            delta = back;
        }
    }
}

fn check_input(params: &PredictorParams, x: &[f64]) -> Result<()> {
    if x.len() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "predictor input",
            expected: params.input_dim(),
            found: x.len(),
        });
    }
    Ok(())
}

/// Dropout probability of one week representation.
pub fn predict(params: &PredictorParams, rep: &[f64]) -> Result<f64> {
    check_input(params, rep)?;
    Ok(forward_trace(params, rep).output())
}

/// Widths of every layer output along the forward pass.
pub fn layer_widths(params: &PredictorParams) -> Vec<usize> {
    params.layers.iter().map(|l| l.bias.len()).collect()
}

pub fn margin_pair_loss(p_pos: f64, p_neg: f64, margin: f64) -> f64 {
    (margin - (p_pos - p_neg)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainPair<'a> {
    pub pos: &'a ActionRepresentation,
    pub neg: &'a ActionRepresentation,
}

/// Pairs each positive week of one user with each of that user's negative
/// weeks, in seeded random order. Weeks of other users are ignored.
pub fn sample_pairs(user_weeks: &[ActionRepresentation], seed: u64) -> Vec<TrainPair<'_>> {
    let mut pairs = Vec::new();
    if let Some(first) = user_weeks.first() {
        let same_user = |w: &&ActionRepresentation| w.user_id == first.user_id;
        for pos in user_weeks.iter().filter(same_user).filter(|w| w.dropout_label) {
            for neg in user_weeks.iter().filter(same_user).filter(|w| !w.dropout_label) {
                pairs.push(TrainPair { pos, neg });
            }
        }
    }
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    pairs
}

/// Mean margin loss over `pairs` and its gradient.
pub fn pair_batch_loss_and_grads(
    params: &PredictorParams,
    pairs: &[TrainPair<'_>],
    margin: f64,
) -> Result<(f64, PredictorParams)> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair batch"));
    }
    let mut grads = params.zeros_like();
    let scale = 1.0 / pairs.len() as f64;
    let mut loss = 0.0;
    for pair in pairs {
        check_input(params, &pair.pos.scores)?;
        check_input(params, &pair.neg.scores)?;
        let pos = forward_trace(params, &pair.pos.scores);
        let neg = forward_trace(params, &pair.neg.scores);
        let l = margin_pair_loss(pos.output(), neg.output(), margin);
        loss += l * scale;
        if l > 0.0 {
            pos.backward(params, -scale, &mut grads);
            neg.backward(params, scale, &mut grads);
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite { term: "margin loss" });
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorHyper {
    pub margin: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Pairs per mini-batch.
    pub batch: usize,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Consecutive epochs whose mean loss improves by less than
    /// `min_improvement` before training stops.
    pub patience: usize,
    pub min_improvement: f64,
    pub seed: u64,
}

impl Default for PredictorHyper {
    fn default() -> Self {
        PredictorHyper {
            margin: 0.5,
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch: 10,
            weight_decay: 0.0,
            max_epochs: 500,
            patience: 5,
            min_improvement: 1e-6,
            seed: 0,
        }
    }
}

impl PredictorHyper {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.margin > 0.0) {
            problems.push("margin must be positive".to_string());
        }
        if !(self.lr > 0.0) {
            problems.push("lr must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            problems.push("Adam betas must lie in [0, 1)".into());
        }
        if self.batch == 0 {
            problems.push("batch must be positive".into());
        }
        if self.weight_decay < 0.0 {
            problems.push("weight_decay must be non-negative".into());
        }
        if self.patience == 0 {
            problems.push("patience must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(params: &PredictorParams) -> Self {
        let len = params.values().count();
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut PredictorParams, grads: &PredictorParams, hyper: &PredictorHyper) {
        self.step += 1;
        let c1 = 1.0 - hyper.beta1.powi(self.step);
        let c2 = 1.0 - hyper.beta2.powi(self.step);
        for (((p, g), m), v) in params
            .values_mut()
            .zip(grads.values())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            let g = g + hyper.weight_decay * *p;
            *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
            *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
            *p -= hyper.lr * (*m / c1) / ((*v / c2).sqrt() + hyper.epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictorLog {
    pub pairs: usize,
    /// Mean margin loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub converged: bool,
}

/// Builds training pairs per user, in user-id order.
pub fn collect_pairs(reps: &[ActionRepresentation]) -> Vec<TrainPair<'_>> {
    let mut by_user: BTreeMap<&str, Vec<&ActionRepresentation>> = BTreeMap::new();
    for r in reps {
        by_user.entry(&r.user_id).or_default().push(r);
    }
    let mut pairs = Vec::new();
    for weeks in by_user.values() {
        let mut sorted = weeks.clone();
        sorted.sort_by_key(|w| w.week_index);
        for pos in sorted.iter().filter(|w| w.dropout_label) {
            for neg in sorted.iter().filter(|w| !w.dropout_label) {
                pairs.push(TrainPair { pos, neg });
            }
        }
    }
    pairs
}

pub fn train_predictor(
    reps: &[ActionRepresentation],
    hyper: &PredictorHyper,
) -> Result<(PredictorParams, PredictorLog)> {
    hyper.validate()?;
    let mut pairs = collect_pairs(reps);
    if pairs.is_empty() {
        return Err(Error::NoTrainablePairs);
    }
    let dim = pairs[0].pos.scores.len();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut params = PredictorParams::init(dim, rng.random());
    let mut adam = Adam::new(&params);
    let mut log = PredictorLog {
        pairs: pairs.len(),
        epoch_losses: Vec::new(),
        converged: false,
    };
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..hyper.max_epochs {
        pairs.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in pairs.chunks(hyper.batch) {
            let (loss, grads) = pair_batch_loss_and_grads(&params, batch, hyper.margin)?;
            adam.update(&mut params, &grads, hyper);
            total += loss * batch.len() as f64;
        }
        if !params.is_finite() {
            return Err(Error::NonFinite {
                term: "predictor parameters",
            });
        }
        let epoch_loss = total / pairs.len() as f64;
        log.epoch_losses.push(epoch_loss);
        if best - epoch_loss < hyper.min_improvement {
            stalled += 1;
        } else {
            stalled = 0;
        }
        best = best.min(epoch_loss);
        if stalled >= hyper.patience {
            log.converged = true;
            break;
        }
    }
    Ok((params, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    Fixed(f64),
    Tune,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::Tune
    }
}

impl FromStr for ThresholdPolicy {
    type Err = String;

    /// `tune` or `fixed:<tau>`.
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "tune" {
            return Ok(ThresholdPolicy::Tune);
        }
        s.strip_prefix("fixed:")
            .and_then(|v| v.parse::<f64>().ok())
            .map(ThresholdPolicy::Fixed)
            .ok_or_else(|| format!("threshold must be `tune` or `fixed:<value>`, got `{s}`"))
    }
}

/// Threshold from the score grid maximizing F1 on `(scores, labels)`; ties
/// go to the smaller threshold.
pub fn tune_threshold(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("threshold tuning"));
    }
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: scores.len(),
            found: labels.len(),
        });
    }
    let mut grid = scores.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for &tau in &grid {
        let preds: Vec<bool> = scores.iter().map(|&s| s >= tau).collect();
        let f1 = f1_score(labels, &preds)?;
        if f1 > best.0 {
            best = (f1, tau);
        }
    }
    Ok(best.1)
}

/// Binary predictions and the threshold used. With `Tune` the threshold is
/// fit on the same scores and labels.
pub fn classify(scores: &[f64], labels: &[bool], policy: ThresholdPolicy) -> Result<(Vec<bool>, f64)> {
    if scores.is_empty() {
        return Err(Error::Empty("classification input"));
    }
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: scores.len(),
            found: labels.len(),
        });
    }
    let tau = match policy {
        ThresholdPolicy::Fixed(t) => t,
        ThresholdPolicy::Tune => tune_threshold(scores, labels)?,
    };
    Ok((scores.iter().map(|&s| s >= tau).collect(), tau))
}
