//! File-level pipeline stages driven by one JSON configuration.
//!
//! Every stage reads its inputs from the output directory (raw events may
//! live elsewhere), writes its artifacts through a temporary file that is
//! renamed into place, and places a `<artifact>.meta.json` sidecar holding
//! the effective configuration next to each artifact. Stages return a JSON
//! summary for the caller to print.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::clickstream::{
    build_dataset, dataset_stats, filter_dataset, parse_course_start, parse_events, read_dataset_jsonl,
    write_dataset_jsonl, write_events_jsonl, Dataset, EventFormat, Variant, DEFAULT_COURSE_LENGTH_WEEKS,
};
use crate::error::{Error, Result};
use crate::metrics::{characterize_actions, evaluate, write_characterization_csv, MetricsReport};
use crate::miner::{
    build_representations, mine_top_actions, read_actions_csv, read_representations_csv, write_actions_csv,
    write_representations_csv, Action, ActionRepresentation, BoundStrategy, DEFAULT_ACTION_SIZE, DEFAULT_TOP_M,
};
use crate::predictor::{predict, train_predictor, tune_threshold, PredictorHyper, PredictorParams, ThresholdPolicy};
use crate::replearn::{encode, train_lfr, LfrHyper, LfrParams};
use crate::synth::{generate, write_ground_truth_csv, GeneratorConfig};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const SPLIT_FILE: &str = "split.csv";
pub const ACTIONS_FILE: &str = "actions.csv";
pub const REPRESENTATIONS_FILE: &str = "representations.csv";
pub const LFR_PARAMS_FILE: &str = "lfr_params.json";
pub const ENCODED_FILE: &str = "encoded.csv";
pub const PREDICTOR_PARAMS_FILE: &str = "predictor_params.json";
pub const THRESHOLD_FILE: &str = "threshold.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const CHARACTERIZE_NONDROPOUT_FILE: &str = "characterize_nondropout.csv";
pub const CHARACTERIZE_DROPOUT_FILE: &str = "characterize_dropout.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub variant: Variant,
    /// `YYYY-MM-DD` or RFC 3339. Defaults to midnight UTC of the earliest
    /// event, or to the generator's start when events are synthesized.
    pub course_start: Option<String>,
    pub course_length_weeks: u32,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            variant: Variant::TypeA,
            course_start: None,
            course_length_weeks: DEFAULT_COURSE_LENGTH_WEEKS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Share of users held out for testing.
    pub test_frac: f64,
    /// Share of the remaining users held out for threshold tuning.
    pub val_frac: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_frac: 0.2,
            val_frac: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinerConfig {
    pub action_size: usize,
    pub top_m: usize,
    pub bound: BoundStrategy,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            action_size: DEFAULT_ACTION_SIZE,
            top_m: DEFAULT_TOP_M,
            bound: BoundStrategy::Admissible,
        }
    }
}

/// Which week representation the classifier consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorInput {
    /// Mined action scores.
    #[default]
    Bb,
    /// Scores passed through the trained representation learner.
    Lfr,
}

impl std::str::FromStr for PredictorInput {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bb" => Ok(PredictorInput::Bb),
            "lfr" => Ok(PredictorInput::Lfr),
            other => Err(format!("unknown predictor input `{other}` (expected bb or lfr)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    pub input: PredictorInput,
    pub threshold: ThresholdPolicy,
    pub train: PredictorHyper,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            input: PredictorInput::Bb,
            threshold: ThresholdPolicy::Tune,
            train: PredictorHyper::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CharacterizeConfig {
    pub k: usize,
}

impl Default for CharacterizeConfig {
    fn default() -> Self {
        CharacterizeConfig { k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    /// Raw event log. When absent, `pipeline` synthesizes one into `out_dir`.
    pub events: Option<PathBuf>,
    pub events_format: EventFormat,
    /// Source of every stage seed; the module-level seeds are derived from it.
    pub seed: u64,
    pub synth: GeneratorConfig,
    pub preprocess: PreprocessConfig,
    pub split: SplitConfig,
    pub miner: MinerConfig,
    pub lfr: LfrHyper,
    pub predictor: PredictorConfig,
    pub characterize: CharacterizeConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            out_dir: PathBuf::from("out"),
            events: None,
            events_format: EventFormat::Jsonl,
            seed: 0,
            synth: GeneratorConfig::default(),
            preprocess: PreprocessConfig::default(),
            split: SplitConfig::default(),
            miner: MinerConfig::default(),
            lfr: LfrHyper::default(),
            predictor: PredictorConfig::default(),
            characterize: CharacterizeConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let file = open_input(path)?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Copies the global seed into every module.
    pub fn with_derived_seeds(mut self) -> Self {
        self.synth.seed = self.seed;
        self.lfr.seed = self.seed.wrapping_add(1);
        self.predictor.train.seed = self.seed.wrapping_add(2);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut absorb = |r: Result<()>| {
            if let Err(Error::InvalidConfig(v)) = r {
                problems.extend(v);
            }
        };
        absorb(self.synth.validate());
        absorb(self.lfr.validate());
        absorb(self.predictor.train.validate());
        if !(0.0..1.0).contains(&self.split.test_frac) {
            problems.push("split.test_frac must lie in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.split.val_frac) {
            problems.push("split.val_frac must lie in [0, 1)".into());
        }
        if self.miner.action_size == 0 {
            problems.push("miner.action_size must be positive".into());
        }
        if self.miner.top_m == 0 {
            problems.push("miner.top_m must be positive".into());
        }
        if self.preprocess.course_length_weeks < 2 {
            problems.push("preprocess.course_length_weeks must be at least 2".into());
        }
        if let Some(s) = &self.preprocess.course_start {
            if let Err(e) = parse_course_start(s) {
                problems.push(format!("preprocess.course_start: {e}"));
            }
        }
        if self.characterize.k == 0 {
            problems.push("characterize.k must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn events_path(&self) -> PathBuf {
        self.events.clone().unwrap_or_else(|| self.artifact(EVENTS_FILE))
    }
}

fn open_input(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Attaches the file path to parse errors raised while reading `path`.
fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { .. } | Error::UnknownCategory { .. } | Error::Csv(_) | Error::Json(_) => {
            Error::format(path, e.to_string())
        }
        other => other,
    })
}

/// Writes `path` via a temporary file in the same directory, then renames it.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Writes an artifact plus its `.meta.json` sidecar.
fn write_artifact(
    config: &PipelineConfig,
    stage: &str,
    name: &str,
    body: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<PathBuf> {
    let path = config.artifact(name);
    write_atomic(&path, body)?;
    let meta_path = config.artifact(&format!("{name}.meta.json"));
    let meta = json!({ "stage": stage, "artifact": name, "config": config });
    write_atomic(&meta_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &meta)?;
        w.write_all(b"\n").map_err(|e| Error::io(&meta_path, e))
    })?;
    Ok(path)
}

fn write_json(config: &PipelineConfig, stage: &str, name: &str, value: &impl Serialize) -> Result<PathBuf> {
    let path = config.artifact(name);
    write_artifact(config, stage, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = open_input(path)?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::format(path, e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Seeded user-level split of sorted ids: test first, then validation out of
/// the remainder.
pub fn split_users(user_ids: &[String], config: &SplitConfig, seed: u64) -> BTreeMap<String, Split> {
    let mut ids: Vec<&String> = user_ids.iter().collect();
    ids.sort();
    ids.dedup();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (config.test_frac * ids.len() as f64).round() as usize;
    let n_val = (config.val_frac * (ids.len() - n_test) as f64).round() as usize;
    ids.iter()
        .enumerate()
        .map(|(i, id)| {
            let split = if i < n_test {
                Split::Test
            } else if i < n_test + n_val {
                Split::Val
            } else {
                Split::Train
            };
            ((*id).clone(), split)
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct SplitRow {
    user_id: String,
    split: Split,
}

fn read_split(path: &Path) -> Result<BTreeMap<String, Split>> {
    let file = open_input(path)?;
    let rows: Result<Vec<SplitRow>> = csv::Reader::from_reader(BufReader::new(file))
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect();
    Ok(in_file(path, rows)?.into_iter().map(|r| (r.user_id, r.split)).collect())
}

fn split_of(splits: &BTreeMap<String, Split>, user: &str) -> Split {
    // users absent from the split file never reach training
    splits.get(user).copied().unwrap_or(Split::Test)
}

fn load_dataset(config: &PipelineConfig) -> Result<Dataset> {
    let path = config.artifact(DATASET_FILE);
    let file = open_input(&path)?;
    in_file(
        &path,
        read_dataset_jsonl(
            BufReader::new(file),
            config.preprocess.course_length_weeks,
            config.preprocess.variant,
        ),
    )
}

fn load_representations(path: &Path) -> Result<Vec<ActionRepresentation>> {
    let file = open_input(path)?;
    in_file(path, read_representations_csv(BufReader::new(file)))
}

fn load_actions(config: &PipelineConfig) -> Result<Vec<Action>> {
    let path = config.artifact(ACTIONS_FILE);
    let file = open_input(&path)?;
    Ok(in_file(&path, read_actions_csv(BufReader::new(file)))?
        .into_iter()
        .map(|a| a.action)
        .collect())
}

pub fn run_synth(config: &PipelineConfig) -> Result<Value> {
    let out = generate(&config.synth)?;
    let events = write_artifact(config, "synth", EVENTS_FILE, |w| write_events_jsonl(w, &out.events))?;
    let truth = write_artifact(config, "synth", GROUND_TRUTH_FILE, |w| {
        write_ground_truth_csv(w, &out.truth)
    })?;
    let dropped = out.truth.iter().filter(|t| t.drop_week.is_some()).count();
    Ok(json!({
        "stage": "synth",
        "users": out.truth.len(),
        "events": out.events.len(),
        "dropped_users": dropped,
        "outputs": [events, truth],
    }))
}

pub fn run_preprocess(config: &PipelineConfig) -> Result<Value> {
    let path = config.events_path();
    let events = in_file(
        &path,
        parse_events(BufReader::new(open_input(&path)?), config.events_format),
    )?;
    let course_start = match (&config.preprocess.course_start, &config.events) {
        (Some(s), _) => Some(parse_course_start(s).map_err(|e| Error::InvalidConfig(vec![e]))?),
        (None, None) => Some(config.synth.course_start),
        (None, Some(_)) => None,
    };
    let raw = build_dataset(&events, course_start, config.preprocess.course_length_weeks)?;
    let dataset = filter_dataset(&raw, config.preprocess.variant, config.miner.action_size);
    let ids: Vec<String> = dataset.users.iter().map(|u| u.user_id.clone()).collect();
    let splits = split_users(&ids, &config.split, config.seed);

    let dataset_path = write_artifact(config, "preprocess", DATASET_FILE, |w| write_dataset_jsonl(w, &dataset))?;
    let split_path = write_artifact(config, "preprocess", SPLIT_FILE, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for (user_id, split) in &splits {
            csv.serialize(SplitRow {
                user_id: user_id.clone(),
                split: *split,
            })?;
        }
        csv.flush().map_err(|e| Error::Csv(e.into()))
    })?;
    let stats = dataset_stats(&dataset);
    let count = |s: Split| splits.values().filter(|&&v| v == s).count();
    Ok(json!({
        "stage": "preprocess",
        "events": events.len(),
        "variant": config.preprocess.variant,
        "users": stats.users,
        "weeks": stats.weeks,
        "positive_labels": stats.positive_labels,
        "mean_weeks_per_user": stats.mean_weeks_per_user,
        "train_users": count(Split::Train),
        "val_users": count(Split::Val),
        "test_users": count(Split::Test),
        "outputs": [dataset_path, split_path],
    }))
}

pub fn run_mine(config: &PipelineConfig) -> Result<Value> {
    let dataset = load_dataset(config)?;
    let splits = read_split(&config.artifact(SPLIT_FILE))?;
    let sequences: Vec<&[_]> = dataset
        .weeks()
        .filter(|w| split_of(&splits, &w.user_id) != Split::Test)
        .map(|w| w.clicks.as_slice())
        .collect();
    let (actions, stats) = mine_top_actions(
        &sequences,
        config.miner.action_size,
        config.miner.top_m,
        config.miner.bound,
    )?;
    let path = write_artifact(config, "mine", ACTIONS_FILE, |w| write_actions_csv(w, &actions))?;
    Ok(json!({
        "stage": "mine",
        "sequences": sequences.len(),
        "actions": actions.len(),
        "top_action": actions.first().map(|a| a.action.to_string()),
        "nodes_visited": stats.nodes_visited,
        "leaf_evaluations": stats.leaf_evaluations,
        "pruned_subtrees": stats.pruned_subtrees,
        "total_leaves": stats.total_leaves.to_string(),
        "outputs": [path],
    }))
}

pub fn run_represent(config: &PipelineConfig) -> Result<Value> {
    let dataset = load_dataset(config)?;
    let actions = load_actions(config)?;
    let reps = build_representations(dataset.weeks(), &actions)?;
    let path = write_artifact(config, "represent", REPRESENTATIONS_FILE, |w| {
        write_representations_csv(w, &reps, actions.len())
    })?;
    Ok(json!({
        "stage": "represent",
        "weeks": reps.len(),
        "dim": actions.len(),
        "outputs": [path],
    }))
}

pub fn run_train_lfr(config: &PipelineConfig) -> Result<Value> {
    let reps = load_representations(&config.artifact(REPRESENTATIONS_FILE))?;
    let splits = read_split(&config.artifact(SPLIT_FILE))?;
    let train: Vec<ActionRepresentation> = reps
        .into_iter()
        .filter(|r| split_of(&splits, &r.user_id) != Split::Test)
        .collect();
    let (params, log) = train_lfr(&train, &config.lfr)?;
    let path = write_json(config, "train-lfr", LFR_PARAMS_FILE, &params)?;
    let last = log.epochs.last();
    Ok(json!({
        "stage": "train-lfr",
        "weeks": train.len(),
        "train_users": log.train_users,
        "val_users": log.val_users,
        "epochs": log.epochs.len(),
        "stopped_early": log.stopped_early,
        "initial_train_loss": log.initial_train_loss,
        "final_train_loss": last.map(|e| e.train_loss),
        "final_val_loss": last.map(|e| e.val_loss),
        "outputs": [path],
    }))
}

pub fn run_encode(config: &PipelineConfig) -> Result<Value> {
    let reps = load_representations(&config.artifact(REPRESENTATIONS_FILE))?;
    let params: LfrParams = read_json(&config.artifact(LFR_PARAMS_FILE))?;
    let encoded = reps
        .iter()
        .map(|r| {
            Ok(ActionRepresentation {
                scores: encode(&params, &r.scores)?,
                ..r.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dim = params.input_dim();
    let path = write_artifact(config, "encode", ENCODED_FILE, |w| {
        write_representations_csv(w, &encoded, dim)
    })?;
    Ok(json!({
        "stage": "encode",
        "weeks": encoded.len(),
        "dim": dim,
        "outputs": [path],
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub threshold: f64,
    pub policy: ThresholdPolicy,
}

#[derive(Serialize, Deserialize)]
struct PredictionRow {
    user_id: String,
    week_index: u32,
    label: u8,
    score: f64,
    prediction: u8,
}

fn predictor_input_path(config: &PipelineConfig) -> PathBuf {
    match config.predictor.input {
        PredictorInput::Bb => config.artifact(REPRESENTATIONS_FILE),
        PredictorInput::Lfr => config.artifact(ENCODED_FILE),
    }
}

fn scores_of(params: &PredictorParams, reps: &[&ActionRepresentation]) -> Result<Vec<f64>> {
    reps.iter().map(|r| predict(params, &r.scores)).collect()
}

pub fn run_train_predict(config: &PipelineConfig) -> Result<Value> {
    let reps = load_representations(&predictor_input_path(config))?;
    let splits = read_split(&config.artifact(SPLIT_FILE))?;
    let part = |s: Split| -> Vec<&ActionRepresentation> {
        reps.iter().filter(|r| split_of(&splits, &r.user_id) == s).collect()
    };
    let (train, val, test) = (part(Split::Train), part(Split::Val), part(Split::Test));
    let train_owned: Vec<ActionRepresentation> = train.iter().map(|&r| r.clone()).collect();
    let (params, log) = train_predictor(&train_owned, &config.predictor.train)?;

    let threshold = match config.predictor.threshold {
        ThresholdPolicy::Fixed(t) => t,
        ThresholdPolicy::Tune => {
            // without validation users the threshold is tuned on training weeks
            let tune_on = if val.is_empty() { &train } else { &val };
            let scores = scores_of(&params, tune_on)?;
            let labels: Vec<bool> = tune_on.iter().map(|r| r.dropout_label).collect();
            tune_threshold(&scores, &labels)?
        }
    };
    let test_scores = scores_of(&params, &test)?;
    let rows: Vec<PredictionRow> = test
        .iter()
        .zip(&test_scores)
        .map(|(r, &score)| PredictionRow {
            user_id: r.user_id.clone(),
            week_index: r.week_index,
            label: r.dropout_label as u8,
            score,
            prediction: (score >= threshold) as u8,
        })
        .collect();

    let params_path = write_json(config, "train-predict", PREDICTOR_PARAMS_FILE, &params)?;
    let record = ThresholdRecord {
        threshold,
        policy: config.predictor.threshold,
    };
    let threshold_path = write_json(config, "train-predict", THRESHOLD_FILE, &record)?;
    let predictions_path = write_artifact(config, "train-predict", PREDICTIONS_FILE, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for row in &rows {
            csv.serialize(row)?;
        }
        csv.flush().map_err(|e| Error::Csv(e.into()))
    })?;
    Ok(json!({
        "stage": "train-predict",
        "input": config.predictor.input,
        "train_weeks": train.len(),
        "val_weeks": val.len(),
        "test_weeks": test.len(),
        "pairs": log.pairs,
        "epochs": log.epoch_losses.len(),
        "converged": log.converged,
        "final_loss": log.epoch_losses.last(),
        "threshold": threshold,
        "outputs": [params_path, threshold_path, predictions_path],
    }))
}

pub fn run_evaluate(config: &PipelineConfig) -> Result<Value> {
    let path = config.artifact(PREDICTIONS_FILE);
    let file = open_input(&path)?;
    let rows: Result<Vec<PredictionRow>> = csv::Reader::from_reader(BufReader::new(file))
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect();
    let rows = in_file(&path, rows)?;
    let record: ThresholdRecord = read_json(&config.artifact(THRESHOLD_FILE))?;
    let labels: Vec<bool> = rows.iter().map(|r| r.label == 1).collect();
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let report: MetricsReport = evaluate(&labels, &scores, record.threshold)?;
    let out = write_json(config, "evaluate", METRICS_FILE, &report)?;
    Ok(json!({
        "stage": "evaluate",
        "f1": report.f1,
        "auc": report.auc,
        "n_pos": report.n_pos,
        "n_neg": report.n_neg,
        "threshold": report.threshold,
        "outputs": [out],
    }))
}

pub fn run_characterize(config: &PipelineConfig) -> Result<Value> {
    let reps = load_representations(&config.artifact(REPRESENTATIONS_FILE))?;
    let actions = load_actions(config)?;
    let (nondropout, dropout) = characterize_actions(&reps, &actions, config.characterize.k)?;
    let nd_path = write_artifact(config, "characterize", CHARACTERIZE_NONDROPOUT_FILE, |w| {
        write_characterization_csv(w, &nondropout)
    })?;
    let d_path = write_artifact(config, "characterize", CHARACTERIZE_DROPOUT_FILE, |w| {
        write_characterization_csv(w, &dropout)
    })?;
    Ok(json!({
        "stage": "characterize",
        "k": nondropout.len(),
        "top_nondropout": nondropout.first().map(|r| json!({"action": r.action, "t_score": r.t_score})),
        "top_dropout": dropout.first().map(|r| json!({"action": r.action, "t_score": r.t_score})),
        "outputs": [nd_path, d_path],
    }))
}

/// Every stage in order; synthesizes events first when no event log is
/// configured. The LFR stages always run so both representations exist.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Value> {
    let mut stages = Vec::new();
    if config.events.is_none() {
        stages.push(run_synth(config)?);
    }
    for stage in [
        run_preprocess,
        run_mine,
        run_represent,
        run_train_lfr,
        run_encode,
        run_train_predict,
        run_evaluate,
        run_characterize,
    ] {
        stages.push(stage(config)?);
    }
    let metrics = stages
        .iter()
        .find(|s| s["stage"] == "evaluate")
        .map(|s| json!({"f1": s["f1"], "auc": s["auc"]}))
        .unwrap_or(Value::Null);
    Ok(json!({
        "stage": "pipeline",
        "stages": stages.len(),
        "metrics": metrics,
        "out_dir": config.out_dir,
    }))
}
