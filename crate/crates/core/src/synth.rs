//! Synthetic raw click logs with planted behavioral structure.
//!
//! Each user belongs to an archetype with its own weekly dropout hazard and
//! planted actions. Weekly click sequences come from a first-order Markov
//! chain with planted n-grams inserted and per-click noise applied, then are
//! rendered as raw events, including `Stalled` and zero-delta seeks that
//! preprocessing discards.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clickstream::{ClickEvent, ClickType, RawCategory, DEFAULT_COURSE_LENGTH_WEEKS, SECONDS_PER_WEEK};
use crate::error::{Error, Result};
use crate::miner::Action;

const NUM_TYPES: usize = ClickType::ALL.len();

/// 2024-01-01T00:00:00Z
pub const DEFAULT_COURSE_START: i64 = 1_704_067_200;

const RATES: [f64; 6] = [0.5, 0.75, 1.0, 1.25, 1.5, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedPattern {
    pub action: Action,
    /// Expected insertions per 100 base clicks.
    pub rate_per_100: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Archetype {
    pub name: String,
    pub fraction: f64,
    /// Probability of leaving at the end of each eligible week.
    pub hazard: f64,
    /// Planted in every active week.
    #[serde(default)]
    pub patterns: Vec<PlantedPattern>,
    /// Planted only in the week before the last active week of users who drop.
    #[serde(default)]
    pub dropout_signal: Vec<PlantedPattern>,
    /// Replaces the shared transition matrix for this archetype.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub n_users: usize,
    pub course_length_weeks: u32,
    pub course_start: i64,
    pub archetypes: Vec<Archetype>,
    /// Earliest week at whose end a user may leave. Must be at least 2 so
    /// that every leaver has a labeled week.
    pub hazard_start_week: u32,
    /// Row-stochastic transition matrix over the seven click types.
    pub transitions: Vec<Vec<f64>>,
    pub clicks_per_week_mean: f64,
    /// Gamma shape of the click-count mixture; smaller is more dispersed.
    pub clicks_per_week_dispersion: f64,
    pub min_clicks_per_week: usize,
    /// Per-click probability of replacement by a uniformly drawn type.
    pub noise_rate: f64,
    /// Per-click probability of an extra event that preprocessing drops.
    pub null_event_rate: f64,
    /// Share of seek clicks rendered as playback-rate changes.
    pub rate_change_share: f64,
    pub seed: u64,
}

pub fn default_transitions() -> Vec<Vec<f64>> {
    vec![
        vec![0.30, 0.10, 0.10, 0.35, 0.05, 0.05, 0.05],
        vec![0.30, 0.40, 0.05, 0.15, 0.04, 0.03, 0.03],
        vec![0.35, 0.05, 0.40, 0.10, 0.04, 0.03, 0.03],
        vec![0.10, 0.02, 0.02, 0.10, 0.50, 0.13, 0.13],
        vec![0.10, 0.02, 0.02, 0.55, 0.05, 0.13, 0.13],
        vec![0.05, 0.02, 0.01, 0.40, 0.12, 0.25, 0.15],
        vec![0.05, 0.02, 0.01, 0.40, 0.12, 0.15, 0.25],
    ]
}

fn pattern(action: &str, rate_per_100: f64) -> PlantedPattern {
    PlantedPattern {
        action: action.parse().expect("valid built-in action"),
        rate_per_100,
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_users: 200,
            course_length_weeks: DEFAULT_COURSE_LENGTH_WEEKS,
            course_start: DEFAULT_COURSE_START,
            archetypes: vec![
                Archetype {
                    name: "engaged".into(),
                    fraction: 0.6,
                    hazard: 0.03,
                    patterns: vec![pattern("Quiz-Pageview-Quiz-Pageview", 4.0)],
                    dropout_signal: vec![pattern("SeekFw-SeekFw-SeekFw-SeekFw", 6.0)],
                    transitions: None,
                },
                Archetype {
                    name: "struggler".into(),
                    fraction: 0.4,
                    hazard: 0.2,
                    patterns: vec![pattern("SeekBw-SeekBw-Play-Pause", 4.0)],
                    dropout_signal: vec![pattern("SeekFw-SeekFw-SeekFw-SeekFw", 6.0)],
                    transitions: None,
                },
            ],
            hazard_start_week: 2,
            transitions: default_transitions(),
            clicks_per_week_mean: 80.0,
            clicks_per_week_dispersion: 4.0,
            min_clicks_per_week: 8,
            noise_rate: 0.05,
            null_event_rate: 0.02,
            rate_change_share: 0.2,
            seed: 0,
        }
    }
}

fn unit_interval(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

fn check_transitions(name: &str, t: &[Vec<f64>], v: &mut Vec<String>) {
    if t.len() != NUM_TYPES || t.iter().any(|r| r.len() != NUM_TYPES) {
        v.push(format!("{name} must be a {NUM_TYPES}x{NUM_TYPES} matrix"));
        return;
    }
    for (i, row) in t.iter().enumerate() {
        if row.iter().any(|&p| !unit_interval(p)) {
            v.push(format!("{name} row {i}: entries must lie in [0, 1]"));
        } else if (row.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            v.push(format!("{name} row {i} does not sum to 1"));
        }
    }
}

impl GeneratorConfig {
    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.course_length_weeks < 2 {
            v.push("course_length_weeks must be at least 2".to_string());
        }
        if self.archetypes.is_empty() {
            v.push("at least one archetype is required".into());
        }
        let total: f64 = self.archetypes.iter().map(|a| a.fraction).sum();
        if !self.archetypes.is_empty() && (total - 1.0).abs() > 1e-9 {
            v.push(format!("archetype fractions sum to {total}, expected 1"));
        }
        for a in &self.archetypes {
            if !unit_interval(a.fraction) {
                v.push(format!("archetype `{}`: fraction must lie in [0, 1]", a.name));
            }
            if !unit_interval(a.hazard) {
                v.push(format!("archetype `{}`: hazard must lie in [0, 1]", a.name));
            }
            for p in a.patterns.iter().chain(&a.dropout_signal) {
                if !(p.rate_per_100 >= 0.0) || !p.rate_per_100.is_finite() {
                    v.push(format!(
                        "archetype `{}`: insertion rate of {} must be non-negative",
                        a.name, p.action
                    ));
                }
                if p.action.is_empty() {
                    v.push(format!("archetype `{}`: planted action is empty", a.name));
                }
            }
        }
        if self.hazard_start_week < 2 {
            v.push("hazard_start_week must be at least 2".into());
        }
        check_transitions("transitions", &self.transitions, &mut v);
        for a in &self.archetypes {
            if let Some(t) = &a.transitions {
                check_transitions(&format!("archetype `{}`: transitions", a.name), t, &mut v);
            }
        }
        if !(self.clicks_per_week_mean > 0.0) {
            v.push("clicks_per_week_mean must be positive".into());
        }
        if !(self.clicks_per_week_dispersion > 0.0) {
            v.push("clicks_per_week_dispersion must be positive".into());
        }
        for (name, p) in [
            ("noise_rate", self.noise_rate),
            ("null_event_rate", self.null_event_rate),
            ("rate_change_share", self.rate_change_share),
        ] {
            if !unit_interval(p) {
                v.push(format!("{name} must lie in [0, 1]"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub user_id: String,
    pub archetype: String,
    /// Last active week of users who leave before the course ends.
    pub drop_week: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub events: Vec<ClickEvent>,
    pub truth: Vec<GroundTruth>,
}

pub fn user_id(index: usize) -> String {
    format!("u{:05}", index + 1)
}

fn sample_index<R: Rng>(rng: &mut R, weights: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
        last = i;
    }
    last
}

/// One week of canonical clicks: `base_len` Markov-chain clicks with
/// planted actions inserted at uniform positions, then noise applied.
pub fn generate_clicks<R: Rng>(
    rng: &mut R,
    base_len: usize,
    transitions: &[Vec<f64>],
    planted: &[&PlantedPattern],
    noise_rate: f64,
) -> Vec<ClickType> {
    let mut clicks = Vec::with_capacity(base_len + 16);
    let mut state = rng.random_range(0..NUM_TYPES);
    for _ in 0..base_len {
        clicks.push(ClickType::ALL[state]);
        state = sample_index(rng, transitions[state].iter().copied());
    }
    for p in planted {
        let lambda = p.rate_per_100 * base_len as f64 / 100.0;
        let count = if lambda > 0.0 {
            Poisson::new(lambda).map(|d| d.sample(rng) as usize).unwrap_or(0)
        } else {
            0
        };
        for _ in 0..count {
            let at = rng.random_range(0..=clicks.len());
            clicks.splice(at..at, p.action.0.iter().copied());
        }
    }
    for c in clicks.iter_mut() {
        if rng.random::<f64>() < noise_rate {
            *c = ClickType::ALL[rng.random_range(0..NUM_TYPES)];
        }
    }
    clicks
}

/// Video position and playback rate carried across a user's events so that
/// seek and rate-change records are mutually consistent.
struct Player {
    position: f64,
    rate_idx: usize,
}

impl Player {
    fn render<R: Rng>(&mut self, rng: &mut R, user: &str, ts: i64, click: ClickType, rate_share: f64) -> ClickEvent {
        match click {
            ClickType::Pageview => ClickEvent::new(user, ts, RawCategory::Pageview),
            ClickType::Quiz => ClickEvent::new(user, ts, RawCategory::Quiz),
            ClickType::Forum => ClickEvent::new(user, ts, RawCategory::Forum),
            ClickType::Play => {
                self.position += rng.random_range(10..=60) as f64;
                ClickEvent::new(user, ts, RawCategory::Play)
            }
            ClickType::Pause => ClickEvent::new(user, ts, RawCategory::Pause),
            ClickType::SeekFw => {
                if self.rate_idx + 1 < RATES.len() && rng.random::<f64>() < rate_share {
                    let before = RATES[self.rate_idx];
                    self.rate_idx = rng.random_range(self.rate_idx + 1..RATES.len());
                    ClickEvent::rate_change(user, ts, before, RATES[self.rate_idx])
                } else {
                    let before = self.position;
                    self.position += rng.random_range(5..=120) as f64;
                    ClickEvent::seek(user, ts, before, self.position)
                }
            }
            ClickType::SeekBw => {
                if self.rate_idx > 0 && rng.random::<f64>() < rate_share {
                    let before = RATES[self.rate_idx];
                    self.rate_idx = rng.random_range(0..self.rate_idx);
                    ClickEvent::rate_change(user, ts, before, RATES[self.rate_idx])
                } else {
                    let before = self.position.max(30.0);
                    self.position = rng.random_range(0..before as i64) as f64;
                    ClickEvent::seek(user, ts, before, self.position)
                }
            }
        }
    }

    fn null_event<R: Rng>(&self, rng: &mut R, user: &str, ts: i64) -> ClickEvent {
        match rng.random_range(0..3) {
            0 => ClickEvent::new(user, ts, RawCategory::Stalled),
            1 => ClickEvent::seek(user, ts, self.position, self.position),
            _ => ClickEvent::rate_change(user, ts, RATES[self.rate_idx], RATES[self.rate_idx]),
        }
    }
}

fn week_length<R: Rng>(rng: &mut R, config: &GeneratorConfig) -> usize {
    let shape = config.clicks_per_week_dispersion;
    let gamma = Gamma::new(shape, config.clicks_per_week_mean / shape).expect("validated gamma parameters");
    let lambda: f64 = gamma.sample(rng);
    let count = if lambda > 0.0 {
        Poisson::new(lambda).map(|d| d.sample(rng) as usize).unwrap_or(0)
    } else {
        0
    };
    count.max(config.min_clicks_per_week)
}

fn generate_user(config: &GeneratorConfig, index: usize) -> (Vec<ClickEvent>, GroundTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let id = user_id(index);
    let archetype = &config.archetypes[sample_index(&mut rng, config.archetypes.iter().map(|a| a.fraction))];

    let last_week = config.course_length_weeks;
    let mut drop_week = None;
    for week in config.hazard_start_week..last_week {
        if rng.random::<f64>() < archetype.hazard {
            drop_week = Some(week);
            break;
        }
    }
    let active_weeks = drop_week.unwrap_or(last_week);
    let transitions = archetype.transitions.as_ref().unwrap_or(&config.transitions);

    let mut player = Player {
        position: 60.0,
        rate_idx: 2,
    };
    let mut events = Vec::new();
    for week in 1..=active_weeks {
        let base_len = week_length(&mut rng, config);
        let mut planted: Vec<&PlantedPattern> = archetype.patterns.iter().collect();
        if drop_week.is_some_and(|d| week + 1 == d) {
            planted.extend(&archetype.dropout_signal);
        }
        let clicks = generate_clicks(&mut rng, base_len, transitions, &planted, config.noise_rate);

        let mut rendered = Vec::with_capacity(clicks.len() + 4);
        for &click in &clicks {
            rendered.push(Some(click));
            if rng.random::<f64>() < config.null_event_rate {
                rendered.push(None);
            }
        }
        let week_start = config.course_start + (week as i64 - 1) * SECONDS_PER_WEEK;
        let mut offsets: Vec<i64> = (0..rendered.len())
            .map(|_| rng.random_range(0..SECONDS_PER_WEEK))
            .collect();
        offsets.sort_unstable();
        for (item, offset) in rendered.into_iter().zip(offsets) {
            let ts = week_start + offset;
            events.push(match item {
                Some(click) => player.render(&mut rng, &id, ts, click, config.rate_change_share),
                None => player.null_event(&mut rng, &id, ts),
            });
        }
    }
    let truth = GroundTruth {
        user_id: id,
        archetype: archetype.name.clone(),
        drop_week,
    };
    (events, truth)
}

/// Deterministic in `config.seed`; each user draws from its own stream so the
/// result does not depend on thread count. Events are ordered by user id, then
/// time.
pub fn generate(config: &GeneratorConfig) -> Result<SynthOutput> {
    config.validate()?;
    let per_user: Vec<_> = (0..config.n_users)
        .into_par_iter()
        .map(|i| generate_user(config, i))
        .collect();
    let mut out = SynthOutput {
        events: Vec::new(),
        truth: Vec::with_capacity(per_user.len()),
    };
    for (events, truth) in per_user {
        out.events.extend(events);
        out.truth.push(truth);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct TruthRow {
    user_id: String,
    archetype: String,
    drop_week: Option<u32>,
}

pub fn write_ground_truth_csv<W: Write>(out: W, truth: &[GroundTruth]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in truth {
        w.serialize(TruthRow {
            user_id: t.user_id.clone(),
            archetype: t.archetype.clone(),
            drop_week: t.drop_week,
        })?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_ground_truth_csv<R: Read>(input: R) -> Result<Vec<GroundTruth>> {
    csv::Reader::from_reader(input)
        .deserialize::<TruthRow>()
        .map(|row| {
            let row = row?;
            Ok(GroundTruth {
                user_id: row.user_id,
                archetype: row.archetype,
                drop_week: row.drop_week,
            })
        })
        .collect()
}
