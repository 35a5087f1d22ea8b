use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use clickbb::clickstream::{EventFormat, Variant};
use clickbb::miner::BoundStrategy;
use clickbb::pipeline::{self, PipelineConfig, PredictorInput};
use clickbb::predictor::ThresholdPolicy;

/// Dropout prediction from MOOC clickstreams.
///
/// Each subcommand reads its inputs from the output directory and writes its
/// artifacts there. Flags override the JSON config; the effective config is
/// stored next to every artifact as `<artifact>.meta.json`.
#[derive(Parser, Debug)]
#[command(name = "clickbb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic raw event log and its ground truth.
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Map, bucket, label and filter raw events; split users.
    Preprocess {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pre: PreprocessArgs,
    },
    /// Mine the top-M actions on training weeks.
    Mine {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        mine: MineArgs,
    },
    /// Score every week against the mined actions.
    Represent {
        #[command(flatten)]
        common: Common,
    },
    /// Train the representation learner.
    TrainLfr {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        lfr: LfrArgs,
    },
    /// Encode week representations with the trained learner.
    Encode {
        #[command(flatten)]
        common: Common,
    },
    /// Train the dropout classifier and predict test weeks.
    TrainPredict {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        predict: PredictArgs,
    },
    /// Compute F1 and AUC of the test predictions.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Rank actions by two-sample t-score between dropout and other weeks.
    Characterize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        characterize: CharacterizeArgs,
    },
    /// Run every stage in order.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        pre: PreprocessArgs,
        #[command(flatten)]
        mine: MineArgs,
        #[command(flatten)]
        lfr: LfrArgs,
        #[command(flatten)]
        predict: PredictArgs,
        #[command(flatten)]
        characterize: CharacterizeArgs,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// JSON pipeline config; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding every artifact (`out_dir`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Global seed (`seed`); module seeds derive from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this. Defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Number of synthetic users (`synth.n_users`).
    #[arg(long)]
    users: Option<usize>,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    /// Raw event log (`events`).
    #[arg(long)]
    events: Option<PathBuf>,
    /// Event log format (`events_format`): jsonl or csv.
    #[arg(long, value_parser = parse_format)]
    format: Option<EventFormat>,
    /// Dataset variant (`preprocess.variant`): raw, typeA or typeB.
    #[arg(long)]
    variant: Option<Variant>,
    /// Course start as YYYY-MM-DD or RFC 3339 (`preprocess.course_start`).
    #[arg(long)]
    course_start: Option<String>,
    /// Course length in weeks (`preprocess.course_length_weeks`).
    #[arg(long)]
    weeks: Option<u32>,
}

#[derive(Args, Debug)]
struct MineArgs {
    /// Action size (`miner.action_size`).
    #[arg(long)]
    action_size: Option<usize>,
    /// Number of actions kept (`miner.top_m`).
    #[arg(long)]
    top_m: Option<usize>,
    /// Pruning bound (`miner.bound`): admissible or optimistic.
    #[arg(long)]
    bound: Option<BoundStrategy>,
}

#[derive(Args, Debug)]
struct LfrArgs {
    /// Hidden width (`lfr.hidden`).
    #[arg(long)]
    lfr_hidden: Option<usize>,
    /// Context window (`lfr.window`).
    #[arg(long)]
    lfr_window: Option<usize>,
    /// Representative-action percentage (`lfr.rep_pct`).
    #[arg(long)]
    lfr_rep_pct: Option<f64>,
    /// Learning rate (`lfr.lr`).
    #[arg(long)]
    lfr_lr: Option<f64>,
    /// Weeks per batch (`lfr.batch`).
    #[arg(long)]
    lfr_batch: Option<usize>,
    /// Epoch cap (`lfr.max_epochs`).
    #[arg(long)]
    lfr_max_epochs: Option<usize>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Classifier input (`predictor.input`): bb or lfr.
    #[arg(long)]
    input: Option<PredictorInput>,
    /// Ranking margin (`predictor.train.margin`).
    #[arg(long)]
    margin: Option<f64>,
    /// Adam learning rate (`predictor.train.lr`).
    #[arg(long)]
    lr: Option<f64>,
    /// Pairs per batch (`predictor.train.batch`).
    #[arg(long)]
    batch: Option<usize>,
    /// Epoch cap (`predictor.train.max_epochs`).
    #[arg(long)]
    max_epochs: Option<usize>,
    /// `tune` or `fixed:<tau>` (`predictor.threshold`).
    #[arg(long)]
    threshold: Option<ThresholdPolicy>,
}

#[derive(Args, Debug)]
struct CharacterizeArgs {
    /// Rows per table (`characterize.k`).
    #[arg(long)]
    k: Option<usize>,
}

fn parse_format(s: &str) -> Result<EventFormat, String> {
    match s {
        "jsonl" => Ok(EventFormat::Jsonl),
        "csv" => Ok(EventFormat::Csv),
        other => Err(format!("unknown format `{other}` (expected jsonl or csv)")),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl SynthArgs {
    fn apply(self, c: &mut PipelineConfig) {
        set(&mut c.synth.n_users, self.users);
    }
}

impl PreprocessArgs {
    fn apply(self, c: &mut PipelineConfig) {
        if self.events.is_some() {
            c.events = self.events;
        }
        set(&mut c.events_format, self.format);
        set(&mut c.preprocess.variant, self.variant);
        if self.course_start.is_some() {
            c.preprocess.course_start = self.course_start;
        }
        set(&mut c.preprocess.course_length_weeks, self.weeks);
    }
}

impl MineArgs {
    fn apply(self, c: &mut PipelineConfig) {
        set(&mut c.miner.action_size, self.action_size);
        set(&mut c.miner.top_m, self.top_m);
        set(&mut c.miner.bound, self.bound);
    }
}

impl LfrArgs {
    fn apply(self, c: &mut PipelineConfig) {
        set(&mut c.lfr.hidden, self.lfr_hidden);
        set(&mut c.lfr.window, self.lfr_window);
        set(&mut c.lfr.rep_pct, self.lfr_rep_pct);
        set(&mut c.lfr.lr, self.lfr_lr);
        set(&mut c.lfr.batch, self.lfr_batch);
        set(&mut c.lfr.max_epochs, self.lfr_max_epochs);
    }
}

impl PredictArgs {
    fn apply(self, c: &mut PipelineConfig) {
        set(&mut c.predictor.input, self.input);
        set(&mut c.predictor.train.margin, self.margin);
        set(&mut c.predictor.train.lr, self.lr);
        set(&mut c.predictor.train.batch, self.batch);
        set(&mut c.predictor.train.max_epochs, self.max_epochs);
        set(&mut c.predictor.threshold, self.threshold);
    }
}

impl CharacterizeArgs {
    fn apply(self, c: &mut PipelineConfig) {
        set(&mut c.characterize.k, self.k);
    }
}

type Stage = fn(&PipelineConfig) -> clickbb::Result<serde_json::Value>;

fn load(common: &Common) -> anyhow::Result<PipelineConfig> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::from_json_file(path)?,
        None => PipelineConfig::default(),
    };
    if common.out_dir.is_some() {
        config.out_dir = common.out_dir.clone().expect("checked");
    }
    set(&mut config.seed, common.seed);
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("failed to start the worker pool")?;
    }
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<serde_json::Value> {
    let (common, stage, config): (Common, Stage, Box<dyn FnOnce(&mut PipelineConfig)>) = match cli.command {
        Command::Synth { common, synth } => (common, pipeline::run_synth, Box::new(|c| synth.apply(c))),
        Command::Preprocess { common, pre } => (common, pipeline::run_preprocess, Box::new(|c| pre.apply(c))),
        Command::Mine { common, mine } => (common, pipeline::run_mine, Box::new(|c| mine.apply(c))),
        Command::Represent { common } => (common, pipeline::run_represent, Box::new(|_| {})),
        Command::TrainLfr { common, lfr } => (common, pipeline::run_train_lfr, Box::new(|c| lfr.apply(c))),
        Command::Encode { common } => (common, pipeline::run_encode, Box::new(|_| {})),
        Command::TrainPredict { common, predict } => {
            (common, pipeline::run_train_predict, Box::new(|c| predict.apply(c)))
        }
        Command::Evaluate { common } => (common, pipeline::run_evaluate, Box::new(|_| {})),
        Command::Characterize { common, characterize } => {
            (common, pipeline::run_characterize, Box::new(|c| characterize.apply(c)))
        }
        Command::Pipeline {
            common,
            synth,
            pre,
            mine,
            lfr,
            predict,
            characterize,
        } => (
            common,
            pipeline::run_pipeline,
            Box::new(|c| {
                synth.apply(c);
                pre.apply(c);
                mine.apply(c);
                lfr.apply(c);
                predict.apply(c);
                characterize.apply(c);
            }),
        ),
    };
    let mut cfg = load(&common)?;
    config(&mut cfg);
    let cfg = cfg.with_derived_seeds();
    cfg.validate()?;
    Ok(stage(&cfg)?)
}

fn error_object(err: &anyhow::Error) -> (serde_json::Value, u8) {
    use clickbb::Error;
    let Some(e) = err.downcast_ref::<Error>() else {
        return (json!({ "kind": "internal", "message": format!("{err:#}") }), 1);
    };
    let kind = match e {
        Error::Io { .. } => "io",
        Error::InvalidConfig(_) => "invalid_config",
        Error::NonFinite { .. } => "non_finite",
        Error::Parse { .. } | Error::UnknownCategory { .. } | Error::Format { .. } | Error::Json(_) | Error::Csv(_) => {
            "malformed_input"
        }
        _ => "invalid_input",
    };
    let mut obj = json!({ "kind": kind, "message": e.to_string() });
    match e {
        Error::Io { path, .. } | Error::Format { path, .. } => obj["path"] = json!(path),
        Error::InvalidConfig(problems) => obj["problems"] = json!(problems),
        _ => {}
    }
    (obj, if e.is_input_error() { 2 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            let (obj, code) = error_object(&err);
            eprintln!("{}", json!({ "error": obj }));
            ExitCode::from(code)
        }
    }
}
