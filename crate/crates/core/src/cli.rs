//! Command-line surface.
//!
//! Every command is a pure function of its input files, config and seed.
//! Exit codes: 0 success, 1 usage or config error, 2 data error, 3
//! numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::{json, Map, Value};

use crate::bayes::BayesError;
use crate::config::{ConfigError, RunConfig};
use crate::dsp::{self, DspError, Label, RawRecording, TrialEpoch};
use crate::io::{self, FormatError, ModelFile, TrainingProvenance};
use crate::models::{
    labels_of, train_model, ConstantClassModel, ConversionPrior, EvidenceModel, ModelError, ModelKind, OracleModel,
    UninformativeModel,
};
use crate::report::{fixed, PriorColumn, Report, ReportRow};
use crate::rng::derive_seed;
use crate::sim::{balanced_accuracy, evaluate_splits, EvaluationReport, SimError};
use crate::synth::{self, LabeledDataset, Split, SynthError};

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::usage(format!("config: {e}"))
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<DspError> for CliError {
    fn from(e: DspError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidConfig(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

fn bayes_code(e: &BayesError) -> i32 {
    match e {
        BayesError::DegenerateEvidence | BayesError::InvalidLikelihood(_) => EXIT_NUMERICAL,
        BayesError::ModeMismatch { .. } | BayesError::MixedModes => EXIT_DATA,
        _ => EXIT_USAGE,
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let code = match &e {
            ModelError::Numerical(_) => EXIT_NUMERICAL,
            ModelError::Bayes(b) => bayes_code(b),
            ModelError::InvalidParameter(_) | ModelError::UnknownKind(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let code = match &e {
            SimError::Bayes(b) => bayes_code(b),
            SimError::InvalidConfig(_) | SimError::QueryTooLarge { .. } => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        match e {
            SimError::Model(m) => CliError::from(m),
            other => CliError {
                code,
                message: other.to_string(),
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "rsvp-bayes",
    version,
    about = "Recursive Bayesian symbol inference and simulated RSVP typing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat `key = value` config file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Control {
    Oracle,
    Uninformative,
    #[value(name = "always-0")]
    Always0,
    #[value(name = "always-1")]
    Always1,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labeled ERP dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Write a continuous recording with an onset table instead of epochs.
        #[arg(long)]
        raw: bool,
    },
    /// Train one model on the training portion of a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset file; synthesized from the config when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Overrides `model.kind` (logreg, gen-logr, gen-lda).
        #[arg(long)]
        kind: Option<String>,
    },
    /// Simulated typing with a stored model, a freshly trained kind, or a control.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Model file written by `train`, scored on its own held-out split.
        #[arg(long, conflicts_with_all = ["kind", "control"])]
        model: Option<PathBuf>,
        /// Retrain this kind on every split.
        #[arg(long, conflicts_with = "control")]
        kind: Option<String>,
        #[arg(long, value_enum)]
        control: Option<Control>,
        /// Overrides `eval.splits`.
        #[arg(long)]
        splits: Option<usize>,
    },
    /// Notch, bandpass, downsample and epoch a continuous recording.
    Preprocess {
        #[command(flatten)]
        common: Common,
        /// Raw recording container.
        #[arg(long)]
        raw: PathBuf,
    },
    /// Evaluate every model kind and both controls; writes JSON and CSV.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        splits: Option<usize>,
    },
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    match run(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
            RunConfig::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::parse("")?,
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
        config.resolve()?;
    }
    Ok(config)
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    io::write_file(path, bytes).map_err(|e| CliError::data(format!("cannot write output: {e}")))
}

fn load_dataset(path: Option<&Path>, config: &RunConfig) -> Result<LabeledDataset, CliError> {
    match path {
        Some(p) => Ok(io::decode_dataset(&io::read_file(p)?)?),
        None => {
            info!("synthesizing {} epochs from the config", config.synth.n_epochs);
            Ok(synth::generate(&config.synth)?)
        }
    }
}

fn parse_kind(cli: Option<&str>, config: &RunConfig) -> Result<ModelKind, CliError> {
    match cli {
        Some(k) => k.parse().map_err(|e: ModelError| CliError::usage(e.to_string())),
        None => Ok(config.model_kind),
    }
}

fn first_split(dataset: &LabeledDataset, config: &RunConfig, seed: u64) -> Result<Split, CliError> {
    let labels: Vec<Label> = dataset.epochs.iter().map(|e| e.label).collect();
    let mut s = synth::split(&labels, 1, config.eval.test_fraction, seed)?;
    Ok(s.remove(0))
}

/// Training and validation portions of `train`, indices into the dataset.
fn validation_split(dataset: &LabeledDataset, train: &[usize], fraction: f64, seed: u64) -> Result<Split, CliError> {
    let labels: Vec<Label> = train.iter().map(|&i| dataset.epochs[i].label).collect();
    let inner = synth::split(&labels, 1, fraction, derive_seed(seed, 1))?.remove(0);
    Ok(Split {
        train: inner.train.iter().map(|&i| train[i]).collect(),
        test: inner.test.iter().map(|&i| train[i]).collect(),
    })
}

fn positive_fraction(epochs: &[TrialEpoch]) -> f64 {
    epochs.iter().filter(|e| e.label.is_positive()).count() as f64 / epochs.len().max(1) as f64
}

fn run(command: Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Synth { common, raw } => cmd_synth(&common, raw, stdout),
        Command::Train { common, data, kind } => cmd_train(&common, data.as_deref(), kind.as_deref(), stdout),
        Command::Simulate {
            common,
            data,
            model,
            kind,
            control,
            splits,
        } => cmd_simulate(
            &common,
            data.as_deref(),
            model.as_deref(),
            kind.as_deref(),
            control,
            splits,
            stdout,
        ),
        Command::Preprocess { common, raw } => cmd_preprocess(&common, &raw, stdout),
        Command::Report { common, data, splits } => cmd_report(&common, data.as_deref(), splits, stdout),
    }
}

fn say(stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::data(format!("cannot write to stdout: {e}")))
}

/// Lay epochs end to end as one continuous recording.
pub fn dataset_to_raw(dataset: &LabeledDataset) -> Result<RawRecording, DspError> {
    let channels = dataset.epochs.first().map_or(0, |e| e.channels);
    let mut data = Vec::new();
    for c in 0..channels {
        for e in &dataset.epochs {
            data.extend_from_slice(e.channel(c));
        }
    }
    let mut onsets = Vec::with_capacity(dataset.epochs.len());
    let mut at = 0;
    for e in &dataset.epochs {
        onsets.push((at, e.label));
        at += e.samples;
    }
    RawRecording::new(channels, data, dataset.rate, onsets)
}

fn cmd_synth(common: &Common, raw: bool, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(common)?;
    let dataset = synth::generate(&config.synth)?;
    let bytes = if raw {
        io::encode_raw(&dataset_to_raw(&dataset)?)
    } else {
        io::encode_dataset(&dataset)?
    };
    write_out(&common.out, &bytes)?;
    let n = dataset.epochs.len();
    let pos = dataset.positive_count();
    say(
        stdout,
        &format!(
            "wrote {} ({}): {n} epochs, {pos} positive, {} negative, label fraction {:.6}, {} channels x {} samples at {} Hz\n",
            common.out.display(),
            if raw { "raw" } else { "dataset" },
            n - pos,
            pos as f64 / n as f64,
            config.synth.channels,
            config.synth.samples_per_epoch(),
            config.synth.rate
        ),
    )
}

fn cmd_train(common: &Common, data: Option<&Path>, kind: Option<&str>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(common)?;
    let kind = parse_kind(kind, &config)?;
    let dataset = load_dataset(data, &config)?;
    let outer = first_split(&dataset, &config, config.split_seed())?;
    let inner = validation_split(
        &dataset,
        &outer.train,
        config.eval.validation_fraction,
        config.split_seed(),
    )?;
    let fit = dataset.select(&inner.train);
    let validation = dataset.select(&inner.test);

    info!("training {kind} on {} epochs", fit.len());
    let (model, trace) = train_model(kind, &fit, &config.model)?;
    let predictions = validation
        .iter()
        .map(|e| model.classify(e, ConversionPrior::Empirical(positive_fraction(&fit))))
        .collect::<Result<Vec<_>, _>>()?;
    let val_ba = balanced_accuracy(&predictions, &labels_of(&validation))?;

    let first = &fit[0];
    let file = ModelFile {
        model,
        channels: first.channels,
        samples: first.samples,
        provenance: TrainingProvenance {
            seed: config.seed,
            test_fraction: config.eval.test_fraction,
            validation_fraction: config.eval.validation_fraction,
        },
    };
    write_out(&common.out, &io::encode_model(&file))?;

    let mut text = format!(
        "wrote {} ({kind}, {} parameters)\ntrain epochs {}, validation epochs {}, held-out test epochs {}\n",
        common.out.display(),
        file.model.parameter_count(),
        fit.len(),
        validation.len(),
        outer.test.len()
    );
    if let Some(t) = trace {
        let tail: Vec<String> = t.losses.iter().rev().take(5).rev().map(|l| format!("{l:.6}")).collect();
        text.push_str(&format!(
            "gradient descent: {} iterations, converged {}, final gradient norm {:.3e}, loss tail [{}]\n",
            t.iterations,
            t.converged,
            t.final_grad_norm,
            tail.join(", ")
        ));
    }
    text.push_str(&format!("validation balanced accuracy {val_ba:.6}\n"));
    say(stdout, &text)
}

fn control_factory(
    control: Control,
    config: &RunConfig,
) -> impl Fn(&[TrialEpoch]) -> Result<Box<dyn EvidenceModel>, ModelError> + Sync {
    let label_prior = config.typing.label_prior;
    move |_train: &[TrialEpoch]| -> Result<Box<dyn EvidenceModel>, ModelError> {
        Ok(match control {
            Control::Oracle => Box::new(OracleModel),
            Control::Uninformative => Box::new(UninformativeModel { label_prior }),
            Control::Always0 => Box::new(ConstantClassModel {
                class: Label::Negative,
                label_prior,
            }),
            Control::Always1 => Box::new(ConstantClassModel {
                class: Label::Positive,
                label_prior,
            }),
        })
    }
}

fn control_name(c: Control) -> (&'static str, &'static str) {
    match c {
        Control::Oracle => ("Oracle", "oracle"),
        Control::Uninformative => ("Uninformative", "uninformative"),
        Control::Always0 => ("Always Class 0", "always-0"),
        Control::Always1 => ("Always Class 1", "always-1"),
    }
}

fn kind_rows(kind: ModelKind, evaluation: EvaluationReport) -> Vec<ReportRow> {
    match kind {
        ModelKind::LogReg => vec![ReportRow {
            name: "Disc LogR".into(),
            kind: kind.as_str().into(),
            prior: PriorColumn::Empirical,
            evaluation,
        }],
        ModelKind::GenLogR | ModelKind::GenLda => {
            let base = if kind == ModelKind::GenLogR {
                "Gen LogR"
            } else {
                "Gen LDA"
            };
            vec![
                ReportRow {
                    name: format!("{base} (Emp)"),
                    kind: kind.as_str().into(),
                    prior: PriorColumn::Empirical,
                    evaluation: evaluation.clone(),
                },
                ReportRow {
                    name: format!("{base} (Unif)"),
                    kind: kind.as_str().into(),
                    prior: PriorColumn::Uniform,
                    evaluation,
                },
            ]
        }
    }
}

fn eval_kind(
    kind: ModelKind,
    dataset: &LabeledDataset,
    splits: &[Split],
    config: &RunConfig,
) -> Result<EvaluationReport, CliError> {
    info!("evaluating {kind} on {} splits", splits.len());
    let hyper = config.model;
    let factory = move |train: &[TrialEpoch]| -> Result<Box<dyn EvidenceModel>, ModelError> {
        Ok(Box::new(train_model(kind, train, &hyper)?.0))
    };
    Ok(evaluate_splits(factory, dataset, splits, &config.typing)?)
}

fn eval_control(
    control: Control,
    dataset: &LabeledDataset,
    splits: &[Split],
    config: &RunConfig,
) -> Result<ReportRow, CliError> {
    let (name, kind) = control_name(control);
    Ok(ReportRow {
        name: name.into(),
        kind: kind.into(),
        prior: PriorColumn::Empirical,
        evaluation: evaluate_splits(control_factory(control, config), dataset, splits, &config.typing)?,
    })
}

fn config_with_splits(common: &Common, splits: Option<usize>) -> Result<RunConfig, CliError> {
    let mut config = load_config(common)?;
    if let Some(n) = splits {
        config.eval.splits = n;
        config.resolve()?;
    }
    Ok(config)
}

fn all_splits(dataset: &LabeledDataset, config: &RunConfig) -> Result<Vec<Split>, CliError> {
    let labels: Vec<Label> = dataset.epochs.iter().map(|e| e.label).collect();
    Ok(synth::split(
        &labels,
        config.eval.splits,
        config.eval.test_fraction,
        config.split_seed(),
    )?)
}

fn input_paths(data: Option<&Path>) -> Map<String, Value> {
    let mut inputs = Map::new();
    inputs.insert(
        "data".into(),
        match data {
            Some(p) => Value::String(p.display().to_string()),
            None => Value::String("synthesized from config".into()),
        },
    );
    inputs
}

fn write_report(common: &Common, report: &Report, stdout: &mut dyn Write) -> Result<(), CliError> {
    let csv_path = common.out.with_extension("csv");
    write_out(&common.out, report.to_json().as_bytes())?;
    write_out(&csv_path, report.to_csv().as_bytes())?;
    say(stdout, &report.to_table())?;
    say(
        stdout,
        &format!("wrote {} and {}\n", common.out.display(), csv_path.display()),
    )
}

fn cmd_simulate(
    common: &Common,
    data: Option<&Path>,
    model_path: Option<&Path>,
    kind: Option<&str>,
    control: Option<Control>,
    splits: Option<usize>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let config = config_with_splits(common, splits)?;
    let dataset = load_dataset(data, &config)?;
    let mut inputs = input_paths(data);

    let rows = if let Some(path) = model_path {
        let file = io::decode_model(&io::read_file(path)?)?;
        let shape = dataset.epochs.first().map(|e| (e.channels, e.samples));
        if shape != Some((file.channels, file.samples)) {
            return Err(CliError::data(format!(
                "model expects {} channels x {} samples, dataset has {:?}",
                file.channels, file.samples, shape
            )));
        }
        let p = &file.provenance;
        let split_config = RunConfig {
            seed: p.seed,
            eval: crate::config::EvalConfig {
                test_fraction: p.test_fraction,
                ..config.eval.clone()
            },
            ..config.clone()
        };
        let outer = first_split(&dataset, &split_config, split_config.split_seed())?;
        let train = dataset.select(&outer.train);
        let metrics =
            crate::sim::eval::score_split(&file.model, &train, dataset.select(&outer.test), &config.typing, 0)?;
        inputs.insert("model".into(), Value::String(path.display().to_string()));
        inputs.insert(
            "model_training".into(),
            json!({ "seed": p.seed, "test_fraction": fixed(p.test_fraction), "validation_fraction": fixed(p.validation_fraction) }),
        );
        let evaluation = EvaluationReport::from_rows(file.model.mode(), vec![metrics]);
        kind_rows(file.model.kind(), evaluation)
    } else {
        let all = all_splits(&dataset, &config)?;
        match control {
            Some(c) => vec![eval_control(c, &dataset, &all, &config)?],
            None => {
                let kind = parse_kind(kind, &config)?;
                kind_rows(kind, eval_kind(kind, &dataset, &all, &config)?)
            }
        }
    };
    let report = Report {
        command: "simulate",
        config: &config,
        rows,
        inputs,
    };
    write_report(common, &report, stdout)
}

fn cmd_report(
    common: &Common,
    data: Option<&Path>,
    splits: Option<usize>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let config = config_with_splits(common, splits)?;
    let dataset = load_dataset(data, &config)?;
    let all = all_splits(&dataset, &config)?;
    let mut rows = Vec::new();
    for kind in ModelKind::ALL {
        rows.extend(kind_rows(kind, eval_kind(kind, &dataset, &all, &config)?));
    }
    for c in [Control::Always0, Control::Always1] {
        rows.push(eval_control(c, &dataset, &all, &config)?);
    }
    let report = Report {
        command: "report",
        config: &config,
        rows,
        inputs: input_paths(data),
    };
    write_report(common, &report, stdout)
}

fn cmd_preprocess(common: &Common, raw_path: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(common)?;
    let d = &config.dsp;
    let raw = io::decode_raw(&io::read_file(raw_path)?)?;
    let mut rec = raw.without_channels(&d.exclude_channels)?;
    if d.notch_hz > 0.0 {
        rec = rec.filtered(&[dsp::design_notch(rec.rate(), d.notch_hz, d.notch_q)?]);
    }
    rec = rec.filtered(&dsp::design_bandpass(
        rec.rate(),
        d.band_low,
        d.band_high,
        d.band_order,
    )?);
    let rec = dsp::downsample(&rec, d.downsample)?;
    let (epochs, dropped) = dsp::epoch(&rec, d.window_ms);
    if epochs.is_empty() {
        return Err(CliError::data("no complete epochs in the recording"));
    }
    let dataset = LabeledDataset {
        rate: rec.rate(),
        epochs,
        splits: Vec::new(),
    };
    write_out(&common.out, &io::encode_dataset(&dataset)?)?;
    let first = &dataset.epochs[0];
    say(
        stdout,
        &format!(
            "wrote {}: {} epochs ({} dropped at the recording end), {} positive, {} channels x {} samples at {} Hz\n",
            common.out.display(),
            dataset.epochs.len(),
            dropped,
            dataset.positive_count(),
            first.channels,
            first.samples,
            dataset.rate
        ),
    )
}
