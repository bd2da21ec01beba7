//! `kp`: generate anchors, synthesize data, train, evaluate, predict, inspect.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use kp_core::anchors::{
    parse_anchor_file, pseudo_anchor_set, save_anchor_file, AnchorSpec, NumericRange,
    PromptTemplate, PseudoMode, TaskKind,
};
use kp_core::data::{
    last_window, parse_cmapss_table, parse_har_csv, sliding_window, synth_records, DatasetFiles, EvalMode,
    SynthConfig, TimeSeriesRecord, Window,
};
use kp_core::exec::Execution;
use kp_core::trainer::{
    count_params, estimate_macs, evaluate_with, load_checkpoint, predict, save_checkpoint, train_observed,
    AnchorSource, Checkpoint, Encoder, InferenceMode, Prediction, TrainConfig, CHECKPOINT_MAGIC,
};
use kp_core::{KpError, Result};

#[derive(Parser, Debug)]
#[command(name = "kp", version, about = "Knowledge-anchor distillation for time-series models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Embed a prompt set into an anchor file.
    GenAnchors(GenAnchorsArgs),
    /// Write a synthetic dataset in the on-disk formats.
    SynthData(SynthDataArgs),
    /// Train a model; prints one JSON record per epoch.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset's test split.
    Eval(EvalArgs),
    /// Predict every window of an input table.
    Predict(PredictArgs),
    /// Summarize a checkpoint or anchor file.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    PseudoGaussian,
    PseudoStructured,
}

#[derive(Args, Debug)]
struct GenAnchorsArgs {
    /// Prompt template containing `{num}` or `{action}`.
    #[arg(long)]
    template: Option<String>,
    /// Comma-separated class names.
    #[arg(long, value_delimiter = ',', conflicts_with = "range", required_unless_present = "range")]
    classes: Option<Vec<String>>,
    /// Numeric anchors as MIN:MAX:STEP.
    #[arg(long)]
    range: Option<String>,
    /// Embedding mode [default: pseudo-structured for --range, pseudo-gaussian for --classes].
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Embedding dimension.
    #[arg(long, default_value_t = 512)]
    dim: usize,
    /// Embedding seed.
    #[arg(long, env = "KP_SEED", default_value_t = 0)]
    seed: u64,
    /// Output anchor file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TaskArg {
    Regression,
    Classification,
}

#[derive(Args, Debug)]
struct SynthDataArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Regression units, or series per class [default: 200 or 24].
    #[arg(long)]
    units: Option<usize>,
    /// Number of classes (classification).
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Generator seed.
    #[arg(long, env = "KP_SEED", default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// TOML training config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory or training file.
    #[arg(long)]
    data: PathBuf,
    /// Anchor file; overrides the config's anchor source.
    #[arg(long)]
    anchors: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Training seed; overrides the config.
    #[arg(long, env = "KP_SEED")]
    seed: Option<u64>,
    /// Maximum epochs; overrides the config.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Debug)]
struct InferenceArgs {
    /// Voting threshold [default: the checkpoint's].
    #[arg(long)]
    theta: Option<f64>,
    /// Use the single most probable anchor instead of voting.
    #[arg(long, conflicts_with = "theta")]
    argmax: bool,
}

impl InferenceArgs {
    fn mode(&self, ckpt: &Checkpoint) -> InferenceMode {
        match (self.argmax, self.theta) {
            (true, _) => InferenceMode::Argmax,
            (false, Some(theta)) => InferenceMode::Avs {
                theta,
                rule: ckpt.config.prefix_rule,
            },
            (false, None) => ckpt.default_inference(),
        }
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory or training file.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    inference: InferenceArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Run-to-failure table (regression) or activity CSV (classification).
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    inference: InferenceArgs,
    /// Print the voting set behind each regression prediction.
    #[arg(long)]
    explain: bool,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Checkpoint or anchor file.
    path: PathBuf,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| KpError::Data(format!("cannot read {}: {e}", path.display())))
}

fn emit(v: Value) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = writeln!(out, "{v}") {
        // A closed pipe (`kp predict ... | head`) is a normal way to stop reading.
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("kp: cannot write output: {e}");
        std::process::exit(2);
    }
}

fn gen_anchors(a: GenAnchorsArgs) -> Result<()> {
    let (spec, kind) = match (&a.range, &a.classes) {
        (Some(r), None) => (AnchorSpec::Range(NumericRange::parse(r)?), TaskKind::Regression),
        (None, Some(c)) => (AnchorSpec::classes(c)?, TaskKind::Classification),
        _ => return Err(KpError::Usage("give exactly one of --classes and --range".into())),
    };
    let template = match a.template {
        Some(t) => PromptTemplate::new(t, kind)?,
        None if kind == TaskKind::Regression => PromptTemplate::regression(),
        None => PromptTemplate::classification(),
    };
    let mode = match a.mode {
        Some(ModeArg::PseudoGaussian) => PseudoMode::Gaussian,
        Some(ModeArg::PseudoStructured) => PseudoMode::Structured,
        None if kind == TaskKind::Regression => PseudoMode::Structured,
        None => PseudoMode::Gaussian,
    };
    let set = pseudo_anchor_set(&template, &spec, a.dim, a.seed, mode)?;
    save_anchor_file(&set, &a.out)?;
    emit(json!({"anchors": set.len(), "dim": set.dim(), "out": a.out}));
    Ok(())
}

fn synth_data(a: SynthDataArgs) -> Result<()> {
    let cfg = match a.task {
        TaskArg::Regression => SynthConfig::regression(a.seed, a.units.unwrap_or(200)),
        TaskArg::Classification => SynthConfig {
            units: a.units.unwrap_or(24),
            ..SynthConfig::classification(a.seed, a.classes)
        },
    };
    let min_len = match a.task {
        TaskArg::Regression => 30,
        TaskArg::Classification => 128,
    };
    let files = synth_records(&cfg, min_len)?.write(&a.out)?;
    emit(json!({"files": files}));
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::from_toml_str(&read_text(p)?),
        None => Ok(TrainConfig::default()),
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = a.epochs {
        cfg.epochs = epochs;
    }
    if let Some(path) = a.anchors {
        cfg.anchors = AnchorSource::File { path };
    }
    cfg.validate()?;
    let files = DatasetFiles::detect(&a.data)?;
    let task = files.task();
    let split = files.load(&cfg.window.window_config(task, cfg.seed), cfg.r_max)?;
    let anchors = cfg.anchors.resolve(task, split.meta.classes.as_deref(), cfg.r_max)?;
    let ckpt = train_observed(&cfg, &split, &anchors, |r| {
        emit(json!({"event": "epoch", "epoch": r.epoch, "train_loss": r.train_loss, "val_metric": r.val_metric}))
    })?;
    save_checkpoint(&ckpt, &a.out)?;
    let report = evaluate_with(&ckpt, &split.test, ckpt.default_inference(), Execution::default())?;
    let mut line = json!({"event": "done", "checkpoint": a.out, "best_epoch": ckpt.history.best_epoch,
        "stopped_early": ckpt.history.stopped_early});
    line["test"] = serde_json::to_value(&report).expect("report serializes");
    emit(line);
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let files = DatasetFiles::detect(&a.data)?;
    if files.task() != ckpt.task {
        return Err(KpError::Usage(format!(
            "{:?} checkpoint cannot evaluate a {:?} dataset",
            ckpt.task,
            files.task()
        )));
    }
    let cfg = &ckpt.config;
    let mut wcfg = cfg.window.window_config(ckpt.task, cfg.seed);
    wcfg.len = ckpt.window_len;
    let split = files.load(&wcfg, ckpt.r_max.unwrap_or(cfg.r_max))?;
    let report = evaluate_with(&ckpt, &split.test, a.inference.mode(&ckpt), Execution::default())?;
    emit(serde_json::to_value(&report).expect("report serializes"));
    Ok(())
}

/// Unlabelled records from a prediction input file.
fn input_records(path: &Path, ckpt: &Checkpoint) -> Result<Vec<TimeSeriesRecord>> {
    let text = read_text(path)?;
    match ckpt.task {
        TaskKind::Regression => parse_cmapss_table(&text)?
            .into_iter()
            .map(|(unit, _, rows)| TimeSeriesRecord::from_rows(unit, &rows, None))
            .collect(),
        TaskKind::Classification => {
            let table = parse_har_csv(&text)?;
            if table.channel_names != ckpt.channel_names {
                return Err(KpError::Dimension(format!(
                    "input channels {:?} differ from the checkpoint's {:?}",
                    table.channel_names, ckpt.channel_names
                )));
            }
            Ok(table.records)
        }
    }
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let records = input_records(&a.input, &ckpt)?;
    let len = ckpt.window_len;
    let eval_mode = match ckpt.task {
        TaskKind::Regression => ckpt.config.window.eval_mode.unwrap_or(EvalMode::LastWindow),
        TaskKind::Classification => EvalMode::AllWindows,
    };
    let stride = ckpt.config.window.window_config(ckpt.task, 0).stride;
    let mut windows: Vec<Window> = Vec::new();
    for r in &records {
        match eval_mode {
            EvalMode::LastWindow => windows.push(last_window(r, len)?),
            EvalMode::AllWindows => windows.extend(sliding_window(r, len, stride)?),
        }
    }
    let mode = a.inference.mode(&ckpt);
    let preds = predict(&ckpt, &windows, mode, Execution::default())?;
    for (w, p) in windows.iter().zip(preds) {
        let mut line = json!({"unit": w.unit, "start": w.start});
        match p {
            Prediction::Regression { value, voting_set } => {
                line["value"] = json!(value);
                if let (true, Some(vs)) = (a.explain, voting_set) {
                    line["voting_weight"] = json!(vs.total_weight());
                    line["voting_set"] = vs
                        .members
                        .iter()
                        .map(|v| json!({"value": v.value, "weight": v.weight}))
                        .collect();
                }
            }
            Prediction::Class {
                label,
                anchor,
                probability,
            } => {
                line["label"] = json!(label);
                line["probability"] = json!(probability);
                if a.explain {
                    line["anchor"] = json!(anchor);
                }
            }
        }
        emit(line);
    }
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<()> {
    let bytes = std::fs::read(&a.path).map_err(|e| KpError::Data(format!("cannot read {}: {e}", a.path.display())))?;
    if bytes.starts_with(CHECKPOINT_MAGIC) {
        let ckpt = Checkpoint::from_bytes(&bytes)?;
        let encoder = match &ckpt.encoder {
            Encoder::Mlp { .. } => "mlp",
            Encoder::Conv1d { .. } => "conv1d",
        };
        emit(json!({
            "kind": "checkpoint",
            "version": ckpt.version,
            "task": ckpt.task,
            "encoder": encoder,
            "feature_dim": ckpt.encoder.feature_dim(),
            "anchors": ckpt.payloads.len(),
            "anchor_dim": ckpt.alignment.anchor_dim(),
            "anchor_source": ckpt.anchor_provenance,
            "window_len": ckpt.window_len,
            "channels": ckpt.normalization.output_channels(),
            "dropped_channels": ckpt.normalization.dropped,
            "classes": ckpt.classes,
            "r_max": ckpt.r_max,
            "params": count_params(&ckpt),
            "macs": estimate_macs(&ckpt, ckpt.window_len),
            "epochs": ckpt.history.epochs.len(),
            "best_epoch": ckpt.history.best_epoch,
            "config": serde_json::to_value(&ckpt.config).expect("config serializes"),
        }));
    } else {
        let text = String::from_utf8(bytes).map_err(|_| KpError::Data("not a checkpoint or anchor file".into()))?;
        let set = parse_anchor_file(&text)?;
        let payloads = set.payloads();
        emit(json!({
            "kind": "anchors",
            "task": set.kind(),
            "anchors": set.len(),
            "dim": set.dim(),
            "provenance": set.provenance(),
            "template": set.template(),
            "first": payloads.first(),
            "last": payloads.last(),
        }));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenAnchors(a) => gen_anchors(a),
        Command::SynthData(a) => synth_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Inspect(a) => inspect(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
