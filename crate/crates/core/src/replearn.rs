//! Week-level representation learning on top of mined action scores.
//!
//! A linear encoder maps the action-score vector `x_t` (length M) to a hidden
//! code `u_t` (length m) and a sigmoid decoder maps it back to `y_hat_t`, which
//! keeps one entry per mined action. Training combines two terms:
//!
//! * context: `y_hat_t` should reconstruct the neighbouring weeks
//!   `x_{t+i}`, `0 < |i| <= w`, of the same user;
//! * co-occurrence: the representative actions of a week (top R% scores)
//!   should predict each other through a softmax over encoder columns.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sigmoid, Block, Matrix};
use crate::miner::ActionRepresentation;

#[derive(Debug, Clone, PartialEq)]
pub struct LfrParams {
    /// Encoder, m x M.
    pub w_a: Matrix,
    pub b_a: Vec<f64>,
    /// Decoder, M x m.
    pub w_o: Matrix,
    pub b_o: Vec<f64>,
}

impl LfrParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LfrParams {
            w_a: Matrix::zeros(hidden, input_dim),
            b_a: vec![0.0; hidden],
            w_o: Matrix::zeros(input_dim, hidden),
            b_o: vec![0.0; input_dim],
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn init(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = 1.0 / (input_dim as f64).sqrt();
        let dec = 1.0 / (hidden as f64).sqrt();
        let w_a = Matrix::uniform(hidden, input_dim, enc, &mut rng);
        let b_a = Matrix::uniform(1, hidden, enc, &mut rng).data;
        let w_o = Matrix::uniform(input_dim, hidden, dec, &mut rng);
        let b_o = Matrix::uniform(1, input_dim, dec, &mut rng).data;
        LfrParams { w_a, b_a, w_o, b_o }
    }

    pub fn input_dim(&self) -> usize {
        self.w_a.cols
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_a.rows
    }

    pub fn is_finite(&self) -> bool {
        self.w_a.is_finite() && self.w_o.is_finite() && self.b_a.iter().chain(&self.b_o).all(|v| v.is_finite())
    }

    fn blocks_mut(&mut self) -> [(&mut [f64], bool); 4] {
        [
            (&mut self.w_a.data, true),
            (&mut self.b_a, false),
            (&mut self.w_o.data, true),
            (&mut self.b_o, false),
        ]
    }

    fn blocks(&self) -> [&[f64]; 4] {
        [&self.w_a.data, &self.b_a, &self.w_o.data, &self.b_o]
    }
}

#[derive(Serialize, Deserialize)]
struct LfrParamsFile {
    #[serde(rename = "M")]
    input_dim: usize,
    m: usize,
    #[serde(rename = "W_a")]
    w_a: Block,
    b_a: Block,
    #[serde(rename = "W_o")]
    w_o: Block,
    b_o: Block,
}

impl Serialize for LfrParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LfrParamsFile {
            input_dim: self.input_dim(),
            m: self.hidden_dim(),
            w_a: Block::from_matrix(&self.w_a),
            b_a: Block::from_vector(&self.b_a),
            w_o: Block::from_matrix(&self.w_o),
            b_o: Block::from_vector(&self.b_o),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LfrParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = LfrParamsFile::deserialize(d)?;
        let (big, small) = (f.input_dim, f.m);
        let build = || -> Result<LfrParams> {
            Ok(LfrParams {
                w_a: f.w_a.into_matrix("W_a", small, big)?,
                b_a: f.b_a.into_vector("b_a", small)?,
                w_o: f.w_o.into_matrix("W_o", big, small)?,
                b_o: f.b_o.into_vector("b_o", big)?,
            })
        };
        build().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LfrHyper {
    pub hidden: usize,
    pub window: usize,
    /// Percentage of a week's actions treated as representative.
    pub rep_pct: f64,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Target number of weeks per mini-batch; users are never split.
    pub batch: usize,
    pub max_epochs: usize,
    pub early_stop: f64,
    pub val_frac: f64,
    pub seed: u64,
}

impl Default for LfrHyper {
    fn default() -> Self {
        LfrHyper {
            hidden: 20,
            window: 1,
            rep_pct: 20.0,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0001,
            batch: 200,
            max_epochs: 1000,
            early_stop: 1e-6,
            val_frac: 0.15,
            seed: 0,
        }
    }
}

impl LfrHyper {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.hidden == 0 {
            problems.push("hidden must be positive".to_string());
        }
        if self.window == 0 {
            problems.push("window must be positive".into());
        }
        if !(self.rep_pct > 0.0 && self.rep_pct <= 100.0) {
            problems.push(format!("rep_pct must lie in (0, 100], got {}", self.rep_pct));
        }
        if !(self.lr > 0.0) {
            problems.push("lr must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            problems.push("momentum must lie in [0, 1)".into());
        }
        if self.weight_decay < 0.0 {
            problems.push("weight_decay must be non-negative".into());
        }
        if self.batch == 0 {
            problems.push("batch must be positive".into());
        }
        if !(0.0..1.0).contains(&self.val_frac) {
            problems.push("val_frac must lie in [0, 1)".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub u: Vec<f64>,
    pub y_hat: Vec<f64>,
}

fn check_dim(params: &LfrParams, x: &[f64]) -> Result<()> {
    if x.len() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "representation input",
            expected: params.input_dim(),
            found: x.len(),
        });
    }
    Ok(())
}

pub fn lfr_forward(params: &LfrParams, x: &[f64]) -> Result<Forward> {
    check_dim(params, x)?;
    let u = params.w_a.affine(x, &params.b_a);
    let y_hat = params.w_o.affine(&u, &params.b_o).into_iter().map(sigmoid).collect();
    Ok(Forward { u, y_hat })
}

/// Final week representation fed to the dropout model.
pub fn encode(params: &LfrParams, x: &[f64]) -> Result<Vec<f64>> {
    lfr_forward(params, x).map(|f| f.y_hat)
}

/// Neighbour pairs `(t, t + i)` with `0 < |i| <= w` that fall inside the user's history.
fn context_pairs(len: usize, window: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..len).flat_map(move |t| {
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(len.saturating_sub(1));
        (lo..=hi).filter(move |&s| s != t).map(move |s| (t, s))
    })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean over realized neighbour pairs of `||y_hat_t - x_{t+i}||^2` for one
/// user's time-ordered weeks. Neighbours are taken by list position.
pub fn context_loss<X: AsRef<[f64]>>(params: &LfrParams, weeks: &[X], window: usize) -> Result<f64> {
    if weeks.len() < 2 {
        return Err(Error::Empty("context loss needs at least two weeks"));
    }
    let y: Vec<Vec<f64>> = weeks
        .iter()
        .map(|x| encode(params, x.as_ref()))
        .collect::<Result<_>>()?;
    let (mut total, mut count) = (0.0, 0usize);
    for (t, s) in context_pairs(weeks.len(), window) {
        total += squared_distance(&y[t], weeks[s].as_ref());
        count += 1;
    }
    Ok(total / count as f64)
}

/// Indices of the `ceil(R * M / 100)` largest entries, ties at the cut going
/// to the smaller index. Returned in ascending index order.
pub fn representative_actions(x: &[f64], rep_pct: f64) -> Vec<usize> {
    let keep = ((rep_pct * x.len() as f64 / 100.0).ceil() as usize).min(x.len());
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    order.truncate(keep);
    order.sort_unstable();
    order
}

/// `p(c_j | c_i)` for every `j`: softmax over `W_a[:, h]^T W_a[:, i]`.
pub fn cooccurrence_probs(w_a: &Matrix, i: usize) -> Vec<f64> {
    let column = |h: usize| (0..w_a.rows).map(move |r| w_a.get(r, h));
    let logits: Vec<f64> = (0..w_a.cols)
        .map(|h| column(h).zip(column(i)).map(|(a, b)| a * b).sum())
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Negative log-likelihood of every ordered pair of distinct representative
/// actions of `x` predicting each other.
pub fn cooccurrence_loss(w_a: &Matrix, x: &[f64], rep_pct: f64) -> f64 {
    let reps = representative_actions(x, rep_pct);
    if reps.len() < 2 {
        return 0.0;
    }
    let mut loss = 0.0;
    for &i in &reps {
        let p = cooccurrence_probs(w_a, i);
        for &j in &reps {
            if j != i {
                loss -= p[j].ln();
            }
        }
    }
    loss
}

/// Softmax statistics of the Gram matrix `G = W_a^T W_a`, shared by every
/// week in a batch.
struct GramSoftmax {
    gram: Vec<f64>,
    probs: Vec<f64>,
    log_norm: Vec<f64>,
    dim: usize,
}

impl GramSoftmax {
    fn new(w_a: &Matrix) -> Self {
        let dim = w_a.cols;
        let mut gram = vec![0.0; dim * dim];
        for r in 0..w_a.rows {
            let row = w_a.row(r);
            for i in 0..dim {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                for h in 0..dim {
                    gram[i * dim + h] += ri * row[h];
                }
            }
        }
        let mut probs = vec![0.0; dim * dim];
        let mut log_norm = vec![0.0; dim];
        for i in 0..dim {
            let logits = &gram[i * dim..(i + 1) * dim];
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            log_norm[i] = max + z.ln();
            for h in 0..dim {
                probs[i * dim + h] = (logits[h] - log_norm[i]).exp();
            }
        }
        GramSoftmax {
            gram,
            probs,
            log_norm,
            dim,
        }
    }

    /// Adds `scale * dLoss/dG` for one week's representative set to `d_gram`
    /// and returns the week's loss.
    fn week(&self, reps: &[usize], scale: f64, d_gram: &mut [f64]) -> f64 {
        if reps.len() < 2 {
            return 0.0;
        }
        let others = (reps.len() - 1) as f64;
        let dim = self.dim;
        let mut loss = 0.0;
        for &i in reps {
            loss += others * self.log_norm[i];
            let row = &mut d_gram[i * dim..(i + 1) * dim];
            for (h, g) in row.iter_mut().enumerate() {
                *g += scale * others * self.probs[i * dim + h];
            }
            for &j in reps {
                if j != i {
                    loss -= self.gram[i * dim + j];
                    row[j] -= scale;
                }
            }
        }
        loss
    }
}

/// Unified objective on a batch of users, each a time-ordered list of `x_t`.
///
/// `loss = (1/T) sum_t cooc(x_t) + (1/P) sum_{(t,s)} ||y_hat_t - x_s||^2`
/// with `T` the batch's weeks and `P` its realized neighbour pairs. Users
/// with a single week contribute only the co-occurrence term. The
/// co-occurrence term depends on the encoder weights alone.
pub fn unified_loss_and_grads<U, X>(params: &LfrParams, batch: &[U], hyper: &LfrHyper) -> Result<(f64, LfrParams)>
where
    U: AsRef<[X]>,
    X: AsRef<[f64]>,
{
    let dim = params.input_dim();
    let total_weeks: usize = batch.iter().map(|u| u.as_ref().len()).sum();
    if total_weeks == 0 {
        return Err(Error::Empty("representation batch"));
    }
    let total_pairs: usize = batch
        .iter()
        .map(|u| context_pairs(u.as_ref().len(), hyper.window).count())
        .sum();

    let mut grads = LfrParams::zeros(dim, params.hidden_dim());

    let softmax = GramSoftmax::new(&params.w_a);
    let mut d_gram = vec![0.0; dim * dim];
    let week_scale = 1.0 / total_weeks as f64;
    let mut cooc = 0.0;
    for user in batch {
        for x in user.as_ref() {
            check_dim(params, x.as_ref())?;
            let reps = representative_actions(x.as_ref(), hyper.rep_pct);
            cooc += softmax.week(&reps, week_scale, &mut d_gram);
        }
    }
    cooc *= week_scale;
    if !cooc.is_finite() {
        return Err(Error::NonFinite {
            term: "co-occurrence loss",
        });
    }
    // dL/dW_a[:, k] = sum_h (dG[k][h] + dG[h][k]) W_a[:, h]
    for r in 0..params.w_a.rows {
        let row = params.w_a.row(r);
        for k in 0..dim {
            let mut acc = 0.0;
            for h in 0..dim {
                acc += (d_gram[k * dim + h] + d_gram[h * dim + k]) * row[h];
            }
            grads.w_a.data[r * dim + k] += acc;
        }
    }

    let mut context = 0.0;
    if total_pairs > 0 {
        let pair_scale = 1.0 / total_pairs as f64;
        for user in batch {
            let weeks = user.as_ref();
            if weeks.len() < 2 {
                continue;
            }
            let forwards: Vec<Forward> = weeks
                .iter()
                .map(|x| lfr_forward(params, x.as_ref()))
                .collect::<Result<_>>()?;
            let mut d_y: Vec<Vec<f64>> = vec![vec![0.0; dim]; weeks.len()];
            for (t, s) in context_pairs(weeks.len(), hyper.window) {
                let target = weeks[s].as_ref();
                context += squared_distance(&forwards[t].y_hat, target);
                for ((d, y), x) in d_y[t].iter_mut().zip(&forwards[t].y_hat).zip(target) {
                    *d += 2.0 * (y - x) * pair_scale;
                }
            }
            for (t, f) in forwards.iter().enumerate() {
                let d_z: Vec<f64> = d_y[t].iter().zip(&f.y_hat).map(|(d, y)| d * y * (1.0 - y)).collect();
                grads.w_o.add_outer(&d_z, &f.u, 1.0);
                for (g, d) in grads.b_o.iter_mut().zip(&d_z) {
                    *g += d;
                }
                let d_u = params.w_o.transpose_mul(&d_z);
                grads.w_a.add_outer(&d_u, weeks[t].as_ref(), 1.0);
                for (g, d) in grads.b_a.iter_mut().zip(&d_u) {
                    *g += d;
                }
            }
        }
        context *= pair_scale;
        if !context.is_finite() {
            return Err(Error::NonFinite { term: "context loss" });
        }
    }
    Ok((cooc + context, grads))
}

/// Loss only, for validation passes.
pub fn unified_loss<U, X>(params: &LfrParams, batch: &[U], hyper: &LfrHyper) -> Result<f64>
where
    U: AsRef<[X]>,
    X: AsRef<[f64]>,
{
    let total_weeks: usize = batch.iter().map(|u| u.as_ref().len()).sum();
    if total_weeks == 0 {
        return Err(Error::Empty("representation batch"));
    }
    let mut cooc = 0.0;
    let mut context = 0.0;
    let mut pairs = 0usize;
    let softmax = GramSoftmax::new(&params.w_a);
    let mut scratch = vec![0.0; params.input_dim() * params.input_dim()];
    for user in batch {
        let weeks = user.as_ref();
        for x in weeks {
            check_dim(params, x.as_ref())?;
            cooc += softmax.week(&representative_actions(x.as_ref(), hyper.rep_pct), 0.0, &mut scratch);
        }
        if weeks.len() >= 2 {
            let y: Vec<Vec<f64>> = weeks
                .iter()
                .map(|x| encode(params, x.as_ref()))
                .collect::<Result<_>>()?;
            for (t, s) in context_pairs(weeks.len(), hyper.window) {
                context += squared_distance(&y[t], weeks[s].as_ref());
                pairs += 1;
            }
        }
    }
    let loss = cooc / total_weeks as f64 + if pairs > 0 { context / pairs as f64 } else { 0.0 };
    if !loss.is_finite() {
        return Err(Error::NonFinite { term: "unified loss" });
    }
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingLog {
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
    pub train_users: usize,
    pub val_users: usize,
}

/// Groups representations by user (sorted by id) with weeks in course order.
pub fn group_by_user(reps: &[ActionRepresentation]) -> Vec<(String, Vec<Vec<f64>>)> {
    let mut users: BTreeMap<&str, Vec<(u32, &[f64])>> = BTreeMap::new();
    for r in reps {
        users.entry(&r.user_id).or_default().push((r.week_index, &r.scores));
    }
    users
        .into_iter()
        .map(|(id, mut weeks)| {
            weeks.sort_by_key(|(w, _)| *w);
            (id.to_string(), weeks.into_iter().map(|(_, x)| x.to_vec()).collect())
        })
        .collect()
}

struct Momentum {
    velocity: LfrParams,
}

impl Momentum {
    fn step(&mut self, params: &mut LfrParams, grads: &LfrParams, hyper: &LfrHyper) {
        let grad_blocks = grads.blocks();
        for ((param, decays), (vel, g)) in params
            .blocks_mut()
            .into_iter()
            .zip(self.velocity.blocks_mut().into_iter().map(|(v, _)| v).zip(grad_blocks))
        {
            for ((p, v), &g) in param.iter_mut().zip(vel.iter_mut()).zip(g) {
                let g = if decays { g + hyper.weight_decay * *p } else { g };
                *v = hyper.momentum * *v + g;
                *p -= hyper.lr * *v;
            }
        }
    }
}

/// Mini-batch SGD with momentum on the unified objective.
///
/// Users are split into training and validation sets with the seeded
/// generator; training stops at `max_epochs` or once the validation loss
/// changes by less than `early_stop` between consecutive epochs. With no
/// validation users the training loss drives the stopping rule.
pub fn train_lfr(reps: &[ActionRepresentation], hyper: &LfrHyper) -> Result<(LfrParams, TrainingLog)> {
    hyper.validate()?;
    if reps.is_empty() {
        return Err(Error::Empty("no representations to train on"));
    }
    let dim = reps[0].scores.len();
    if let Some(bad) = reps.iter().find(|r| r.scores.len() != dim) {
        return Err(Error::DimensionMismatch {
            what: "representation",
            expected: dim,
            found: bad.scores.len(),
        });
    }
    let users: Vec<Vec<Vec<f64>>> = group_by_user(reps).into_iter().map(|(_, w)| w).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..users.len()).collect();
    order.shuffle(&mut rng);
    let mut n_val = (hyper.val_frac * users.len() as f64).round() as usize;
    if n_val >= users.len() {
        n_val = users.len() - 1;
    }
    let val: Vec<&Vec<Vec<f64>>> = order[..n_val].iter().map(|&i| &users[i]).collect();
    let mut train: Vec<&Vec<Vec<f64>>> = order[n_val..].iter().map(|&i| &users[i]).collect();

    let mut params = LfrParams::init(dim, hyper.hidden, rng.random());
    let mut optimizer = Momentum {
        velocity: LfrParams::zeros(dim, hyper.hidden),
    };

    let initial_train_loss = unified_loss(&params, &train, hyper)?;
    let initial_val_loss = if val.is_empty() {
        initial_train_loss
    } else {
        unified_loss(&params, &val, hyper)?
    };
    let mut log = TrainingLog {
        initial_train_loss,
        initial_val_loss,
        epochs: Vec::new(),
        stopped_early: false,
        train_users: train.len(),
        val_users: val.len(),
    };

    let mut previous = initial_val_loss;
    for epoch in 1..=hyper.max_epochs {
        train.shuffle(&mut rng);
        let mut weighted = 0.0;
        let mut seen = 0usize;
        let mut start = 0;
        while start < train.len() {
            let mut end = start;
            let mut weeks = 0;
            while end < train.len() && (weeks == 0 || weeks + train[end].len() <= hyper.batch) {
                weeks += train[end].len();
                end += 1;
            }
            let batch = &train[start..end];
            let (loss, grads) = unified_loss_and_grads(&params, batch, hyper)?;
            optimizer.step(&mut params, &grads, hyper);
            weighted += loss * weeks as f64;
            seen += weeks;
            start = end;
        }
        if !params.is_finite() {
            return Err(Error::NonFinite {
                term: "representation parameters",
            });
        }
        let train_loss = weighted / seen as f64;
        let val_loss = if val.is_empty() {
            unified_loss(&params, &train, hyper)?
        } else {
            unified_loss(&params, &val, hyper)?
        };
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if (val_loss - previous).abs() < hyper.early_stop {
            log.stopped_early = true;
            break;
        }
        previous = val_loss;
    }
    Ok((params, log))
}
