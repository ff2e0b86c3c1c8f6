//! `logsig`: signatures, log-signatures, gradient checks and Logsig-RNN
//! training from the command line. Every command prints one JSON report.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or input error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use logsig_core::data::{
    digit_nine, gen_synthetic, load_streams, missing_data_study, save_streams, LabeledStreamSet,
    PerturbMode, SyntheticSpec,
};
use logsig_core::experiments::{
    baseline_config, bench, layer_gradcheck, logsig_config, robustness, GradcheckSettings,
};
use logsig_core::neural::checkpoint;
use logsig_core::neural::train::confusion_matrix;
use logsig_core::neural::{accuracy, train, Example, Model, ModelConfig, RunConfig, TrainSettings};
use logsig_core::report::{RunReport, Table};
use logsig_core::tensor_algebra::Word;
use logsig_core::{
    logsig_dim, logsig_sequence, sig_dim, signature, Error, LyndonBasis, SegmentPartition,
};

#[derive(Parser)]
#[command(
    name = "logsig",
    version,
    about = "Log-signature features and Logsig-RNN models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-segment log-signatures of every stream in a file.
    Logsig {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        #[arg(long, default_value_t = 1)]
        segments: usize,
        /// Also list the basis words and their bracket expansions.
        #[arg(long)]
        basis_list: bool,
    },
    /// Truncated signatures of every stream in a file.
    Sig {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        degree: usize,
    },
    /// Signature and log-signature dimensions per degree.
    Dims {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        degree: usize,
    },
    /// Finite-difference check of the log-signature layer; exits 1 above 1e-5.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Path dimension; random in 1..=4 when omitted.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        segments: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Writes the synthetic four-class set.
    Gen {
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
    },
    /// Log-signature and signature error after dropping points of a digit-like polyline.
    Mape {
        #[arg(long, default_value_t = 3)]
        degree: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 16)]
        max_drop: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Trains a model and writes a checkpoint.
    Train {
        /// Flat `key = value` config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Held-out set scored after every epoch.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Accuracy and confusion matrix of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Accuracy under frame dropping or interpolated insertion, against a baseline.
    Robustness {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Frame-level baseline checkpoint.
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6")]
        rates: Vec<f64>,
        #[arg(long, default_value = "drop")]
        mode: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Epoch time and accuracy of Logsig-RNN and a frame LSTM on upsampled data.
    Bench {
        #[arg(long)]
        data: PathBuf,
        /// Test set; the last fifth of `data` when omitted.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        upsample: Vec<usize>,
        /// Logsig-RNN config; the baseline reuses its widths.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
}

enum Failure {
    Check(String),
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CmdResult = Result<RunReport, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    match run(cli.command) {
        Ok(mut report) => {
            report.timing("total_seconds", start.elapsed().as_secs_f64());
            emit(&report);
            ExitCode::SUCCESS
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Writes the report to stdout; a reader that closed the pipe early is not an error.
fn emit(report: &RunReport) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", report.to_json()).and_then(|_| out.flush());
}

fn run(command: Command) -> CmdResult {
    match command {
        Command::Logsig {
            input,
            degree,
            segments,
            basis_list,
        } => cmd_logsig(input, degree, segments, basis_list),
        Command::Sig { input, degree } => cmd_sig(input, degree),
        Command::Dims { d, degree } => cmd_dims(d, degree),
        Command::Gradcheck {
            trials,
            d,
            degree,
            segments,
            seed,
        } => cmd_gradcheck(GradcheckSettings {
            trials,
            width: d,
            degree,
            segments,
            seed,
        }),
        Command::Gen {
            count,
            seed,
            out,
            noise,
        } => cmd_gen(count, seed, out, noise),
        Command::Mape {
            degree,
            trials,
            max_drop,
            seed,
        } => cmd_mape(degree, trials, max_drop, seed),
        Command::Train {
            config,
            data,
            checkpoint,
            test,
            seed,
            epochs,
            threads,
        } => cmd_train(config, data, checkpoint, test, seed, epochs, threads),
        Command::Eval {
            checkpoint,
            data,
            threads,
        } => cmd_eval(checkpoint, data, threads),
        Command::Robustness {
            checkpoint,
            baseline,
            data,
            rates,
            mode,
            seed,
            threads,
        } => cmd_robustness(checkpoint, baseline, data, rates, mode, seed, threads),
        Command::Bench {
            data,
            test,
            upsample,
            config,
            epochs,
            seed,
            threads,
        } => cmd_bench(data, test, upsample, config, epochs, seed, threads),
    }
}

fn path_text(p: &std::path::Path) -> String {
    p.display().to_string()
}

fn cmd_logsig(input: PathBuf, degree: usize, segments: usize, basis_list: bool) -> CmdResult {
    if degree < 1 || segments < 1 {
        return Err(Failure::Input(
            "degree and segments must be at least 1".into(),
        ));
    }
    let set = load_streams(&input)?;
    let mut report = RunReport::new("logsig");
    report
        .config("input", path_text(&input))
        .config("degree", degree)
        .config("segments", segments);
    let mut basis: Option<LyndonBasis> = None;
    for (i, sample) in set.samples.iter().enumerate() {
        let path = sample.stream.to_path()?;
        if basis.as_ref().is_none_or(|b| b.width() != path.dim()) {
            basis = Some(LyndonBasis::new(path.dim(), degree)?);
        }
        let b = basis.as_ref().expect("basis set above");
        let partition = SegmentPartition::for_path(&path, segments)?;
        let seq = logsig_sequence(&path, &partition, degree, b)?;
        let mut columns = vec![
            "segment".to_string(),
            "start".to_string(),
            "end".to_string(),
        ];
        columns.extend(b.labels());
        let mut table = Table {
            name: format!("sample {i}"),
            columns,
            rows: Vec::new(),
        };
        let bounds = partition.boundaries();
        for (k, row) in seq.values().rows().into_iter().enumerate() {
            let mut cells = vec![json!(k), json!(bounds[k]), json!(bounds[k + 1])];
            cells.extend(row.iter().map(|v| json!(v)));
            table.rows.push(cells);
        }
        report.tables.push(table);
    }
    if basis_list {
        let width = basis.as_ref().map_or(1, |b| b.width());
        let b = LyndonBasis::new(width, degree)?;
        let mut table = Table::new("basis", &["index", "word", "expansion"]);
        for (i, e) in b.elements().iter().enumerate() {
            let len = e.word.len();
            let terms: Vec<String> = e
                .expansion
                .iter()
                .map(|&(idx, c)| {
                    format!("{c:+} {}", Word::from_index(idx, len, width).label(width))
                })
                .collect();
            table.push(vec![
                json!(i),
                json!(e.word.label(width)),
                json!(terms.join(" ")),
            ]);
        }
        report.tables.push(table);
    }
    report.metric("samples", set.len() as f64);
    Ok(report)
}

fn word_labels(width: usize, depth: usize) -> Vec<String> {
    let mut labels = vec!["()".to_string()];
    for k in 1..=depth {
        for idx in 0..width.pow(k as u32) {
            labels.push(Word::from_index(idx, k, width).label(width));
        }
    }
    labels
}

fn cmd_sig(input: PathBuf, degree: usize) -> CmdResult {
    if degree < 1 {
        return Err(Failure::Input("degree must be at least 1".into()));
    }
    let set = load_streams(&input)?;
    let mut report = RunReport::new("sig");
    report
        .config("input", path_text(&input))
        .config("degree", degree);
    for (i, sample) in set.samples.iter().enumerate() {
        let path = sample.stream.to_path()?;
        let sig = signature(&path, degree)?;
        let mut table = Table {
            name: format!("sample {i}"),
            columns: word_labels(path.dim(), degree),
            rows: Vec::new(),
        };
        table
            .rows
            .push(sig.as_slice().iter().map(|v| json!(v)).collect());
        report.tables.push(table);
    }
    report.metric("samples", set.len() as f64);
    Ok(report)
}

fn cmd_dims(d: usize, degree: usize) -> CmdResult {
    if d < 1 || degree < 1 {
        return Err(Failure::Input("d and degree must be at least 1".into()));
    }
    let mut report = RunReport::new("dims");
    report.config("d", d).config("degree", degree);
    let mut table = Table::new("dims", &["degree", "sig_dim", "logsig_dim", "gap"]);
    for m in 1..=degree {
        let (s, l) = (sig_dim(d, m), logsig_dim(d, m));
        table.push(vec![json!(m), json!(s), json!(l), json!(s - l)]);
    }
    report.tables.push(table);
    report
        .metric("sig_dim", sig_dim(d, degree) as f64)
        .metric("logsig_dim", logsig_dim(d, degree) as f64);
    Ok(report)
}

const GRADCHECK_TOL: f64 = 1e-5;

fn cmd_gradcheck(settings: GradcheckSettings) -> CmdResult {
    let result = layer_gradcheck(&settings)?;
    let mut report = RunReport::new("gradcheck");
    report
        .config("trials", settings.trials)
        .config("d", settings.width)
        .config("degree", settings.degree)
        .config("segments", settings.segments)
        .config("tolerance", GRADCHECK_TOL);
    report.seed = Some(settings.seed);
    report.metric("max_rel_err", result.max_rel_err);
    let mut table = Table::new("cases", &["d", "degree", "segments", "samples", "rel_err"]);
    for c in &result.cases {
        table.push(vec![
            json!(c.width),
            json!(c.degree),
            json!(c.segments),
            json!(c.samples),
            json!(c.rel_err),
        ]);
    }
    report.tables.push(table);
    if !(result.max_rel_err <= GRADCHECK_TOL) {
        emit(&report);
        return Err(Failure::Check(format!(
            "max relative error {:e} exceeds {GRADCHECK_TOL:e}",
            result.max_rel_err
        )));
    }
    Ok(report)
}

fn cmd_gen(count: usize, seed: u64, out: PathBuf, noise: f64) -> CmdResult {
    let spec = SyntheticSpec {
        noise,
        ..SyntheticSpec::default()
    };
    let set = gen_synthetic(&spec, count, seed)?;
    save_streams(&out, &set)?;
    let mut report = RunReport::new("gen");
    report
        .config("count", count)
        .config("out", path_text(&out))
        .config("noise", noise);
    report.seed = Some(seed);
    report.metric("samples", set.len() as f64);
    Ok(report)
}

fn cmd_mape(degree: usize, trials: usize, max_drop: usize, seed: u64) -> CmdResult {
    let study = missing_data_study(&digit_nine(), degree, trials, max_drop, seed)?;
    let mut report = RunReport::new("mape");
    report
        .config("degree", degree)
        .config("trials", trials)
        .config("max_drop", max_drop)
        .config("path", "digit-nine polyline, 53 points");
    report.seed = Some(seed);
    report
        .metric("mean_logsig_mape", study.mean_logsig_mape)
        .metric("mean_sig_mape", study.mean_sig_mape)
        .metric("max_logsig_mape", study.max_logsig_mape);
    Ok(report)
}

/// Fills `joints`, `coords` and `classes` left at zero from the data.
fn infer_shape(
    config: &mut ModelConfig,
    set: &LabeledStreamSet,
    examples: &[Example],
) -> Result<(), Failure> {
    let Some((first, _)) = examples.first() else {
        return Err(Failure::Input("training set is empty".into()));
    };
    if config.joints == 0 {
        config.joints = first.joints();
    }
    if config.coords == 0 {
        config.coords = first.coords();
    }
    if config.classes == 0 {
        config.classes = set.class_count();
    }
    Ok(())
}

fn load_examples(path: &std::path::Path) -> Result<(LabeledStreamSet, Vec<Example>), Failure> {
    let set = load_streams(path)?;
    let examples = set.examples()?;
    Ok((set, examples))
}

fn epoch_table(trace: &logsig_core::neural::TrainTrace) -> Table {
    let mut table = Table::new(
        "epochs",
        &[
            "epoch",
            "loss",
            "train_accuracy",
            "test_accuracy",
            "seconds",
        ],
    );
    for e in &trace.epochs {
        table.push(vec![
            json!(e.epoch),
            json!(e.loss),
            json!(e.train_accuracy),
            e.eval_accuracy.map_or(Value::Null, |a| json!(a)),
            json!(e.seconds),
        ]);
    }
    table
}

fn cmd_train(
    config: Option<PathBuf>,
    data: PathBuf,
    checkpoint_path: PathBuf,
    test: Option<PathBuf>,
    seed: Option<u64>,
    epochs: Option<usize>,
    threads: Option<usize>,
) -> CmdResult {
    let mut run = match &config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        run.train.seed = s;
    }
    if let Some(e) = epochs {
        run.train.epochs = e;
    }
    if let Some(t) = threads {
        run.train.threads = t;
    }
    let (set, examples) = load_examples(&data)?;
    infer_shape(&mut run.model, &set, &examples)?;
    let adjacency = examples[0].0.adjacency().map(|a| a.to_owned());
    let test_examples = match &test {
        Some(p) => Some(load_examples(p)?.1),
        None => None,
    };
    let mut model = Model::new(run.model.clone(), adjacency, run.train.seed)?;
    let trace = train(&mut model, &examples, &run.train, test_examples.as_deref())?;
    checkpoint::save(&checkpoint_path, &model, &run.train)?;

    let mut report = RunReport::new("train");
    report
        .config("data", path_text(&data))
        .config("checkpoint", path_text(&checkpoint_path))
        .config("model", &run.model)
        .config("train", &run.train);
    if let Some(p) = &test {
        report.config("test", path_text(p));
    }
    report.seed = Some(run.train.seed);
    if let Some(last) = trace.epochs.last() {
        report.metric("final_loss", last.loss);
        report.metric("final_train_accuracy", last.train_accuracy);
        if let Some(a) = last.eval_accuracy {
            report.metric("final_test_accuracy", a);
        }
    }
    report.metric("parameters", model.params().scalar_count() as f64);
    report.timing(
        "train_seconds",
        trace.epochs.iter().map(|e| e.seconds).sum(),
    );
    report.tables.push(epoch_table(&trace));
    Ok(report)
}

fn cmd_eval(checkpoint_path: PathBuf, data: PathBuf, threads: usize) -> CmdResult {
    let (model, settings) = checkpoint::load(&checkpoint_path)?;
    let (set, examples) = load_examples(&data)?;
    let classes = model.config().classes;
    let acc = accuracy(&model, &examples, threads)?;
    let confusion = confusion_matrix(&model, &examples, classes, threads)?;
    let mut report = RunReport::new("eval");
    report
        .config("checkpoint", path_text(&checkpoint_path))
        .config("data", path_text(&data))
        .config("model", model.config());
    report.seed = Some(settings.seed);
    report
        .metric("accuracy", acc)
        .metric("samples", examples.len() as f64);
    let names: Vec<String> = (0..classes)
        .map(|c| {
            set.class_names
                .get(c)
                .cloned()
                .unwrap_or_else(|| c.to_string())
        })
        .collect();
    let mut columns = vec!["true".to_string()];
    columns.extend(names.iter().cloned());
    let mut table = Table {
        name: "confusion".into(),
        columns,
        rows: Vec::new(),
    };
    for (c, row) in confusion.rows().into_iter().enumerate() {
        let mut cells = vec![json!(names[c])];
        cells.extend(row.iter().map(|v| json!(v)));
        table.rows.push(cells);
    }
    report.tables.push(table);
    Ok(report)
}

fn cmd_robustness(
    checkpoint_path: PathBuf,
    baseline_path: PathBuf,
    data: PathBuf,
    rates: Vec<f64>,
    mode: String,
    seed: u64,
    threads: usize,
) -> CmdResult {
    let mode: PerturbMode = mode.parse()?;
    let (model, _) = checkpoint::load(&checkpoint_path)?;
    let (baseline, _) = checkpoint::load(&baseline_path)?;
    let (_, examples) = load_examples(&data)?;
    let rows = robustness(&[&model, &baseline], &examples, mode, &rates, seed, threads)?;
    let mut report = RunReport::new("robustness");
    report
        .config("checkpoint", path_text(&checkpoint_path))
        .config("baseline", path_text(&baseline_path))
        .config("data", path_text(&data))
        .config("mode", mode.to_string())
        .config("rates", &rates);
    report.seed = Some(seed);
    let mut table = Table::new("accuracy", &["rate", "logsig_rnn", "baseline"]);
    for r in &rows {
        table.push(vec![
            json!(r.rate),
            json!(r.accuracy[0]),
            json!(r.accuracy[1]),
        ]);
    }
    report.tables.push(table);
    if let (Some(first), Some(_)) = (rows.first(), rows.last()) {
        let worst = |k: usize| {
            rows.iter()
                .map(|r| first.accuracy[k] - r.accuracy[k])
                .fold(f64::NEG_INFINITY, f64::max)
        };
        report
            .metric("logsig_rnn_max_degradation", worst(0))
            .metric("baseline_max_degradation", worst(1));
    }
    Ok(report)
}

fn cmd_bench(
    data: PathBuf,
    test: Option<PathBuf>,
    factors: Vec<usize>,
    config: Option<PathBuf>,
    epochs: usize,
    seed: u64,
    threads: usize,
) -> CmdResult {
    if factors.iter().any(|&k| k < 1) || epochs < 1 {
        return Err(Failure::Input(
            "upsample factors and epochs must be at least 1".into(),
        ));
    }
    let (set, mut train_set) = load_examples(&data)?;
    let test_set = match &test {
        Some(p) => load_examples(p)?.1,
        None => {
            let cut = train_set.len() - train_set.len() / 5;
            train_set.split_off(cut)
        }
    };
    let (mut logsig, settings) = match &config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
            let run = RunConfig::parse(&text)?;
            (run.model, run.train)
        }
        None => (logsig_config(0, 0, 0), TrainSettings::default()),
    };
    infer_shape(&mut logsig, &set, &train_set)?;
    let baseline = ModelConfig {
        variant: baseline_config(0, 0, 0).variant,
        ..logsig.clone()
    };
    let settings = TrainSettings {
        seed,
        threads,
        ..settings
    };
    let rows = bench(
        &[logsig.clone(), baseline],
        &train_set,
        &test_set,
        &factors,
        &settings,
        epochs,
    )?;
    let mut report = RunReport::new("bench");
    report
        .config("data", path_text(&data))
        .config("upsample", &factors)
        .config("timed_epochs", epochs)
        .config("model", &logsig)
        .config("train", &settings)
        .config("timing", "median of timed epochs after one warm-up epoch");
    report.seed = Some(seed);
    let mut table = Table::new(
        "bench",
        &[
            "factor",
            "mean_len",
            "logsig_epoch_seconds",
            "lstm_epoch_seconds",
            "logsig_accuracy",
            "lstm_accuracy",
        ],
    );
    for r in &rows {
        table.push(vec![
            json!(r.factor),
            json!(r.mean_len),
            json!(r.epoch_seconds[0]),
            json!(r.epoch_seconds[1]),
            json!(r.accuracy[0]),
            json!(r.accuracy[1]),
        ]);
    }
    report.tables.push(table);
    if let (Some(a), Some(b)) = (rows.first(), rows.last()) {
        report
            .metric("logsig_time_ratio", b.epoch_seconds[0] / a.epoch_seconds[0])
            .metric("lstm_time_ratio", b.epoch_seconds[1] / a.epoch_seconds[1]);
    }
    Ok(report)
}
