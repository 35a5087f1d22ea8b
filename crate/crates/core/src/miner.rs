//! n-gram action scoring and top-M action search.
//!
//! An action is an n-gram of click types. Its score against a click sequence
//! sums `n - hamming(action, window)` over every length-n window, and is
//! normalized by `n * (L - n + 1)` so that it lands in `[0, 1]`. Actions are
//! ranked by the population standard deviation ("spread") of their normalized
//! score across week sequences. The search walks the prefix tree depth first
//! and skips every subtree whose spread bound cannot beat the current M-th
//! best action.
//!
//! The search core works on `u8` symbols over an alphabet of size `C` so that
//! small alphabets can be tested against brute force; [`ClickType`] wrappers
//! sit on top.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clickstream::{ClickType, WeekSequence};
use crate::error::{Error, Result};

pub const DEFAULT_ACTION_SIZE: usize = 4;
pub const DEFAULT_TOP_M: usize = 100;
pub const DEFAULT_EXHAUSTIVE_LIMIT: u128 = 1 << 24;

/// Slack on the pruning comparison. Covers rounding in the bound so that a
/// subtree is only skipped when its bound is clearly below the M-th best.
const PRUNE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action(pub Vec<ClickType>);

impl Action {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn codes(&self) -> Vec<u8> {
        self.0.iter().map(|c| c.code()).collect()
    }

    fn from_codes(codes: &[u8]) -> Action {
        Action(
            codes
                .iter()
                .map(|&c| ClickType::from_code(c).expect("click code in range"))
                .collect(),
        )
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            f.write_str(c.name())?;
        }
        Ok(())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(['-', ' '])
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()
            .map(Action)
    }
}

impl Serialize for Action {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredAction {
    pub action: Action,
    pub spread: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub raw: u64,
    pub normalized: f64,
}

/// Bounds on the normalized score reachable by any completion of a prefix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefixInterval {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStrategy {
    /// Standard deviation of the upper endpoints, i.e. every free position is
    /// assumed to match. Not admissible: it can skip subtrees holding top-M
    /// actions.
    Optimistic,
    /// Exact maximum of the population standard deviation over the box of
    /// per-sequence intervals. The search tightens each interval to the exact
    /// positional range and also applies the seminorm bound, keeping the
    /// smaller of the two.
    #[default]
    Admissible,
}

impl FromStr for BoundStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "admissible" => Ok(BoundStrategy::Admissible),
            "optimistic" => Ok(BoundStrategy::Optimistic),
            other => Err(format!("unknown bound `{other}` (expected admissible or optimistic)")),
        }
    }
}

pub fn hamming<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

fn normalizer(n: usize, len: usize) -> u64 {
    (n * (len - n + 1)) as u64
}

/// Sliding-window score of `action` against `sequence`.
pub fn action_score<T: PartialEq>(action: &[T], sequence: &[T]) -> Result<Score> {
    let n = action.len();
    if n == 0 {
        return Err(Error::InvalidConfig(vec!["action size must be positive".into()]));
    }
    if sequence.len() < n {
        return Err(Error::SequenceTooShort { len: sequence.len(), n });
    }
    let raw: u64 = sequence.windows(n).map(|w| (n - hamming(action, w)) as u64).sum();
    Ok(Score {
        raw,
        normalized: raw as f64 / normalizer(n, sequence.len()) as f64,
    })
}

/// Score interval of all length-`n` completions of `prefix` on `sequence`:
/// per window the matched prefix positions are fixed and each of the `n - k`
/// free positions may or may not match.
pub fn prefix_interval<T: PartialEq>(prefix: &[T], sequence: &[T], n: usize) -> Result<PrefixInterval> {
    let k = prefix.len();
    if k > n {
        return Err(Error::PrefixTooLong { k, n });
    }
    if sequence.len() < n {
        return Err(Error::SequenceTooShort { len: sequence.len(), n });
    }
    let windows = sequence.len() - n + 1;
    let fixed: u64 = sequence.windows(n).map(|w| (k - hamming(prefix, &w[..k])) as u64).sum();
    let free = ((n - k) * windows) as u64;
    let norm = normalizer(n, sequence.len()) as f64;
    Ok(PrefixInterval {
        lower: fixed as f64 / norm,
        upper: (fixed + free) as f64 / norm,
    })
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    // offsets from the first value keep constant inputs at exactly zero
    let origin = values[0];
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v - origin).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|v| {
            let d = v - origin - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    var.sqrt()
}

/// Upper bound on the spread of any leaf below a prefix, given that leaf's
/// per-sequence score intervals.
pub fn spread_upper_bound(intervals: &[PrefixInterval], strategy: BoundStrategy) -> f64 {
    match strategy {
        BoundStrategy::Optimistic => {
            let uppers: Vec<f64> = intervals.iter().map(|iv| iv.upper).collect();
            population_std(&uppers)
        }
        BoundStrategy::Admissible => max_box_std(intervals),
    }
}

/// Variance is convex, so its maximum over a box sits at a vertex; at the
/// optimum each coordinate takes the endpoint farther from the mean, which
/// makes the optimal vertex a threshold split of the intervals sorted by
/// midpoint. All `N + 1` splits are scanned with prefix sums.
fn max_box_std(intervals: &[PrefixInterval]) -> f64 {
    let n = intervals.len();
    if n == 0 {
        return 0.0;
    }
    let mut sorted: Vec<(f64, f64)> = intervals.iter().map(|iv| (iv.lower, iv.upper)).collect();
    sorted.sort_by(|a, b| (a.0 + a.1).total_cmp(&(b.0 + b.1)));
    // shift to reduce cancellation in E[x^2] - E[x]^2
    let shift = sorted.iter().map(|(l, u)| 0.5 * (l + u)).sum::<f64>() / n as f64;

    let mut suffix_sum = vec![0.0; n + 1];
    let mut suffix_sq = vec![0.0; n + 1];
    for i in (0..n).rev() {
        let u = sorted[i].1 - shift;
        suffix_sum[i] = suffix_sum[i + 1] + u;
        suffix_sq[i] = suffix_sq[i + 1] + u * u;
    }
    let nf = n as f64;
    let mut best = 0.0f64;
    let (mut low_sum, mut low_sq) = (0.0, 0.0);
    for split in 0..=n {
        if split > 0 {
            let l = sorted[split - 1].0 - shift;
            low_sum += l;
            low_sq += l * l;
        }
        let sum = low_sum + suffix_sum[split];
        let sq = low_sq + suffix_sq[split];
        let mean = sum / nf;
        best = best.max(sq / nf - mean * mean);
    }
    best.max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    /// Prefix-tree nodes entered, the root excluded.
    pub nodes_visited: u64,
    pub leaf_evaluations: u64,
    pub pruned_subtrees: u64,
    /// `C^n`, the leaf count of the full tree.
    pub total_leaves: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// `(symbols, spread)` sorted by spread descending, then symbols ascending.
    pub actions: Vec<(Vec<u8>, f64)>,
    pub stats: SearchStats,
}

/// `a` ranks ahead of `b`: larger spread, ties to the lexicographically smaller action.
fn ranks_ahead(a: (&[u8], f64), b: (&[u8], f64)) -> bool {
    a.1 > b.1 || (a.1 == b.1 && a.0 < b.0)
}

struct TopList {
    cap: usize,
    items: Vec<(Vec<u8>, f64)>,
}

impl TopList {
    fn new(cap: usize) -> Self {
        TopList {
            cap,
            items: Vec::with_capacity(cap + 1),
        }
    }

    fn offer(&mut self, symbols: &[u8], spread: f64) {
        if self.items.len() == self.cap {
            let worst = self.items.last().expect("cap > 0");
            if !ranks_ahead((symbols, spread), (&worst.0, worst.1)) {
                return;
            }
        }
        let pos = self
            .items
            .partition_point(|(s, v)| ranks_ahead((s, *v), (symbols, spread)));
        self.items.insert(pos, (symbols.to_vec(), spread));
        self.items.truncate(self.cap);
    }

    fn threshold(&self) -> Option<f64> {
        (self.items.len() == self.cap).then(|| self.items.last().expect("full").1)
    }
}

fn check_inputs<S: AsRef<[u8]>>(sequences: &[S], alphabet: usize, n: usize, m: usize) -> Result<u128> {
    if n == 0 || alphabet == 0 {
        return Err(Error::InvalidConfig(vec![
            "action size and alphabet size must be positive".into(),
        ]));
    }
    if sequences.is_empty() {
        return Err(Error::Empty("no sequences to mine"));
    }
    if let Some(short) = sequences.iter().find(|s| s.as_ref().len() < n) {
        return Err(Error::SequenceTooShort {
            len: short.as_ref().len(),
            n,
        });
    }
    let total = (alphabet as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if m as u128 > total {
        return Err(Error::TooManyActions {
            requested: m,
            available: total.min(usize::MAX as u128) as usize,
        });
    }
    if m == 0 {
        return Err(Error::InvalidConfig(vec!["M must be positive".into()]));
    }
    Ok(total)
}

/// Per-sequence count of windows whose position `p` holds symbol `c`, stored
/// at `p * alphabet + c`. A window's matches against an action decompose by
/// position, so the raw score of an action is the sum of one entry per position.
struct PositionCounts {
    alphabet: usize,
    counts: Vec<u32>,
    norm: u64,
    /// `tail_min[k]` and `tail_max[k]`: smallest and largest raw score the
    /// positions `k..n` can add to a prefix of length `k`.
    tail_min: Vec<u64>,
    tail_max: Vec<u64>,
}

impl PositionCounts {
    fn new(seq: &[u8], alphabet: usize, n: usize) -> Self {
        let windows = seq.len() - n + 1;
        let mut counts = vec![0u32; n * alphabet];
        for p in 0..n {
            for &c in &seq[p..p + windows] {
                counts[p * alphabet + c as usize] += 1;
            }
        }
        let mut tail_min = vec![0u64; n + 1];
        let mut tail_max = vec![0u64; n + 1];
        for p in (0..n).rev() {
            let row = &counts[p * alphabet..(p + 1) * alphabet];
            tail_min[p] = tail_min[p + 1] + *row.iter().min().expect("alphabet > 0") as u64;
            tail_max[p] = tail_max[p + 1] + *row.iter().max().expect("alphabet > 0") as u64;
        }
        PositionCounts {
            alphabet,
            counts,
            norm: normalizer(n, seq.len()),
            tail_min,
            tail_max,
        }
    }

    fn at(&self, position: usize, symbol: u8) -> u64 {
        self.counts[position * self.alphabet + symbol as usize] as u64
    }
}

/// Branch-and-bound search for the `m` actions of size `n` with the largest
/// spread across `sequences`.
pub fn mine_top_symbols<S: AsRef<[u8]> + Sync>(
    sequences: &[S],
    alphabet: usize,
    n: usize,
    m: usize,
    strategy: BoundStrategy,
) -> Result<SearchOutcome> {
    let total = check_inputs(sequences, alphabet, n, m)?;
    if let Some(bad) = sequences
        .iter()
        .flat_map(|s| s.as_ref().iter())
        .find(|&&c| c as usize >= alphabet)
    {
        return Err(Error::InvalidConfig(vec![format!(
            "symbol {bad} outside alphabet of size {alphabet}"
        )]));
    }
    let tables: Vec<PositionCounts> = sequences
        .par_iter()
        .map(|s| PositionCounts::new(s.as_ref(), alphabet, n))
        .collect();

    let tail_spread = tail_spreads(&tables, alphabet, n);
    let mut search = Search {
        tables: &tables,
        tail_spread,
        alphabet,
        n,
        strategy,
        top: TopList::new(m),
        stats: SearchStats {
            total_leaves: total,
            ..SearchStats::default()
        },
        prefix: Vec::with_capacity(n),
        scratch: Vec::with_capacity(tables.len()),
    };
    let root = vec![0u64; tables.len()];
    search.descend(&root);
    Ok(SearchOutcome {
        actions: search.top.items,
        stats: search.stats,
    })
}

/// `out[k]` bounds the spread that positions `k..n` can add to any prefix
/// of length `k`: population std is a seminorm, so the spread of a sum is at
/// most the sum of the spreads of its per-position terms.
fn tail_spreads(tables: &[PositionCounts], alphabet: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    let mut column = Vec::with_capacity(tables.len());
    for p in (0..n).rev() {
        let mut widest = 0.0f64;
        for c in 0..alphabet as u8 {
            column.clear();
            column.extend(tables.iter().map(|t| t.at(p, c) as f64 / t.norm as f64));
            widest = widest.max(population_std(&column));
        }
        out[p] = out[p + 1] + widest;
    }
    out
}

struct Search<'a> {
    tables: &'a [PositionCounts],
    tail_spread: Vec<f64>,
    alphabet: usize,
    n: usize,
    strategy: BoundStrategy,
    top: TopList,
    stats: SearchStats,
    prefix: Vec<u8>,
    scratch: Vec<PrefixInterval>,
}

impl Search<'_> {
    /// `fixed[i]` holds the matched count of the current prefix on sequence `i`.
    fn descend(&mut self, fixed: &[u64]) {
        let depth = self.prefix.len();
        for symbol in 0..self.alphabet as u8 {
            self.stats.nodes_visited += 1;
            let child: Vec<u64> = fixed
                .iter()
                .zip(self.tables)
                .map(|(f, t)| f + t.at(depth, symbol))
                .collect();
            self.prefix.push(symbol);
            if depth + 1 == self.n {
                self.stats.leaf_evaluations += 1;
                let scores: Vec<f64> = child
                    .iter()
                    .zip(self.tables)
                    .map(|(&raw, t)| raw as f64 / t.norm as f64)
                    .collect();
                let spread = population_std(&scores);
                self.top.offer(&self.prefix, spread);
            } else if self.should_prune(&child) {
                self.stats.pruned_subtrees += 1;
            } else {
                self.descend(&child);
            }
            self.prefix.pop();
        }
    }

    fn should_prune(&mut self, fixed: &[u64]) -> bool {
        let Some(threshold) = self.top.threshold() else {
            return false;
        };
        let depth = self.prefix.len();
        let bound = match self.strategy {
            BoundStrategy::Optimistic => {
                let free = (self.n - depth) as u64;
                self.scratch.clear();
                self.scratch.extend(fixed.iter().zip(self.tables).map(|(&f, t)| {
                    let windows = t.norm / self.n as u64;
                    PrefixInterval {
                        lower: f as f64 / t.norm as f64,
                        upper: (f + free * windows) as f64 / t.norm as f64,
                    }
                }));
                spread_upper_bound(&self.scratch, BoundStrategy::Optimistic)
            }
            BoundStrategy::Admissible => {
                // Both bounds hold for every leaf below the prefix; the per-sequence
                // intervals use the exact positional range, not `(n - k) * W`.
                self.scratch.clear();
                self.scratch
                    .extend(fixed.iter().zip(self.tables).map(|(&f, t)| PrefixInterval {
                        lower: (f + t.tail_min[depth]) as f64 / t.norm as f64,
                        upper: (f + t.tail_max[depth]) as f64 / t.norm as f64,
                    }));
                let fixed_scores: Vec<f64> = fixed
                    .iter()
                    .zip(self.tables)
                    .map(|(&f, t)| f as f64 / t.norm as f64)
                    .collect();
                let seminorm = population_std(&fixed_scores) + self.tail_spread[depth];
                max_box_std(&self.scratch).min(seminorm)
            }
        };
        bound + PRUNE_SLACK <= threshold
    }
}

/// Scores every one of the `C^n` actions with [`action_score`] and keeps the
/// best `m`. Serves as the reference for [`mine_top_symbols`].
pub fn exhaustive_top_symbols<S: AsRef<[u8]> + Sync>(
    sequences: &[S],
    alphabet: usize,
    n: usize,
    m: usize,
    limit: u128,
) -> Result<SearchOutcome> {
    let total = check_inputs(sequences, alphabet, n, m)?;
    if total > limit {
        return Err(Error::SearchSpaceTooLarge { size: total, limit });
    }
    let all: Vec<(Vec<u8>, f64)> = (0..total as u64)
        .into_par_iter()
        .map(|index| {
            let mut symbols = vec![0u8; n];
            let mut rest = index;
            for slot in symbols.iter_mut().rev() {
                *slot = (rest % alphabet as u64) as u8;
                rest /= alphabet as u64;
            }
            let scores: Vec<f64> = sequences
                .iter()
                .map(|s| action_score(&symbols, s.as_ref()).map(|sc| sc.normalized))
                .collect::<Result<_>>()?;
            Ok((symbols, population_std(&scores)))
        })
        .collect::<Result<_>>()?;
    let mut top = TopList::new(m);
    for (symbols, spread) in &all {
        top.offer(symbols, *spread);
    }
    Ok(SearchOutcome {
        actions: top.items,
        stats: SearchStats {
            nodes_visited: (1..=n as u32).map(|d| (alphabet as u64).pow(d)).sum(),
            leaf_evaluations: total as u64,
            pruned_subtrees: 0,
            total_leaves: total,
        },
    })
}

fn to_codes<S: AsRef<[ClickType]>>(sequences: &[S]) -> Vec<Vec<u8>> {
    sequences
        .iter()
        .map(|s| s.as_ref().iter().map(|c| c.code()).collect())
        .collect()
}

fn to_scored(outcome: SearchOutcome) -> (Vec<ScoredAction>, SearchStats) {
    let actions = outcome
        .actions
        .into_iter()
        .map(|(codes, spread)| ScoredAction {
            action: Action::from_codes(&codes),
            spread,
        })
        .collect();
    (actions, outcome.stats)
}

/// Top-`m` click-type actions by spread, found by branch and bound.
pub fn mine_top_actions<S: AsRef<[ClickType]>>(
    sequences: &[S],
    n: usize,
    m: usize,
    strategy: BoundStrategy,
) -> Result<(Vec<ScoredAction>, SearchStats)> {
    let codes = to_codes(sequences);
    mine_top_symbols(&codes, ClickType::COUNT, n, m, strategy).map(to_scored)
}

pub fn exhaustive_top_actions<S: AsRef<[ClickType]>>(
    sequences: &[S],
    n: usize,
    m: usize,
) -> Result<(Vec<ScoredAction>, SearchStats)> {
    let codes = to_codes(sequences);
    exhaustive_top_symbols(&codes, ClickType::COUNT, n, m, DEFAULT_EXHAUSTIVE_LIMIT).map(to_scored)
}

/// Normalized scores of one week against the mined actions (`x_t`).
#[derive(Debug, Clone, PartialEq)]
pub struct ActionRepresentation {
    pub user_id: String,
    pub week_index: u32,
    pub dropout_label: bool,
    pub scores: Vec<f64>,
}

pub fn build_representation(week: &WeekSequence, actions: &[Action]) -> Result<ActionRepresentation> {
    let n = match actions.first() {
        Some(a) => a.len(),
        None => {
            return Ok(ActionRepresentation {
                user_id: week.user_id.clone(),
                week_index: week.week_index,
                dropout_label: week.dropout_label,
                scores: Vec::new(),
            })
        }
    };
    if let Some(bad) = actions.iter().find(|a| a.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "action size",
            expected: n,
            found: bad.len(),
        });
    }
    if week.clicks.len() < n || n == 0 {
        return Err(Error::SequenceTooShort {
            len: week.clicks.len(),
            n,
        });
    }
    let codes: Vec<u8> = week.clicks.iter().map(|c| c.code()).collect();
    let table = PositionCounts::new(&codes, ClickType::COUNT, n);
    let scores = actions
        .iter()
        .map(|a| {
            let raw: u64 = a.0.iter().enumerate().map(|(p, c)| table.at(p, c.code())).sum();
            raw as f64 / table.norm as f64
        })
        .collect();
    Ok(ActionRepresentation {
        user_id: week.user_id.clone(),
        week_index: week.week_index,
        dropout_label: week.dropout_label,
        scores,
    })
}

/// Representations for every week, in input order.
pub fn build_representations<'a, I>(weeks: I, actions: &[Action]) -> Result<Vec<ActionRepresentation>>
where
    I: IntoIterator<Item = &'a WeekSequence>,
{
    let weeks: Vec<&WeekSequence> = weeks.into_iter().collect();
    weeks.par_iter().map(|w| build_representation(w, actions)).collect()
}

pub fn write_actions_csv<W: Write>(out: W, actions: &[ScoredAction]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["action", "spread"])?;
    for a in actions {
        writer.write_record([a.action.to_string(), a.spread.to_string()])?;
    }
    writer.flush().map_err(|e| Error::io("<actions>", e))?;
    Ok(())
}

pub fn read_actions_csv<R: Read>(input: R) -> Result<Vec<ScoredAction>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut actions = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse_err = |message: String| Error::Parse { line, message };
        let action: Action = record
            .get(0)
            .ok_or_else(|| parse_err("missing action column".into()))?
            .parse()
            .map_err(parse_err)?;
        let spread: f64 = record
            .get(1)
            .ok_or_else(|| parse_err("missing spread column".into()))?
            .parse()
            .map_err(|e| parse_err(format!("bad spread: {e}")))?;
        actions.push(ScoredAction { action, spread });
    }
    Ok(actions)
}

pub fn write_representations_csv<W: Write>(out: W, reps: &[ActionRepresentation], dim: usize) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["user_id".to_string(), "week_index".into(), "label".into()];
    header.extend((1..=dim).map(|j| format!("a{j}")));
    writer.write_record(&header)?;
    for rep in reps {
        if rep.scores.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "representation",
                expected: dim,
                found: rep.scores.len(),
            });
        }
        let mut row = vec![
            rep.user_id.clone(),
            rep.week_index.to_string(),
            (rep.dropout_label as u8).to_string(),
        ];
        row.extend(rep.scores.iter().map(|s| s.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io("<representations>", e))?;
    Ok(())
}

pub fn read_representations_csv<R: Read>(input: R) -> Result<Vec<ActionRepresentation>> {
    let mut reader = csv::Reader::from_reader(input);
    let dim = reader.headers()?.len().saturating_sub(3);
    let mut reps = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse_err = |message: String| Error::Parse { line, message };
        if record.len() != dim + 3 {
            return Err(parse_err(format!(
                "expected {} columns, found {}",
                dim + 3,
                record.len()
            )));
        }
        let week_index = record[1]
            .parse()
            .map_err(|e| parse_err(format!("bad week_index: {e}")))?;
        let dropout_label = match &record[2] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(format!("label must be 0 or 1, got `{other}`"))),
        };
        let scores = (3..record.len())
            .map(|j| record[j].parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse_err(format!("bad score: {e}")))?;
        reps.push(ActionRepresentation {
            user_id: record[0].to_string(),
            week_index,
            dropout_label,
            scores,
        });
    }
    Ok(reps)
}
