//! Argument handling and command implementations for the `qbr` binary.
//!
//! Exit codes: 0 success, 2 input error, 3 acceptance failure, 4 training failure.

use std::fs;
use std::io::Write;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use qbr_core::dataset::{encode, load_dataset, Dataset, EncodedMatrix, Label};
use qbr_core::evaluation::{confusion, metrics, stratified_split, write_roc_csv, Metrics};
use qbr_core::experiment::{
    self, render_checks, render_table, reproduce, tuned_config, CvMode, ReproduceOptions,
};
use qbr_core::features::{correlation_filter, rank_features, render_feature_table, summarize, write_feature_csv};
use qbr_core::persistence::{
    dataset_hash, error_percent, export_predictions, load_model_file, save_model_file, unix_now,
    ModelArtifact, PredictionRow, TrainingInfo,
};
use qbr_core::svm::{grid_search, write_grid_csv, SvmConfig, DEFAULT_C_GRID, DEFAULT_GAMMA_GRID};
use qbr_core::{Algorithm, Classifier, ClassifierConfig, Execution};
use qbr_service::{AppState, ServiceConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_ACCEPTANCE: i32 = 3;
pub const EXIT_TRAINING: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "qbr", version, about = "Qualitative bankruptcy risk models")]
pub struct Cli {
    /// TOML file supplying defaults for the flags below; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmArg {
    Logistic,
    Nb,
    Forest,
    Mlp,
    Svm,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Logistic => Algorithm::Logistic,
            AlgorithmArg::Nb => Algorithm::NaiveBayes,
            AlgorithmArg::Forest => Algorithm::Forest,
            AlgorithmArg::Mlp => Algorithm::Mlp,
            AlgorithmArg::Svm => Algorithm::Svm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvModeArg {
    Full,
    Heldout,
}

impl From<CvModeArg> for CvMode {
    fn from(m: CvModeArg) -> Self {
        match m {
            CvModeArg::Full => CvMode::Full,
            CvModeArg::Heldout => CvMode::Heldout,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Dataset CSV; the bundled corpus when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Correlation screen and information-gain ranking.
    Features {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        threshold: Option<f64>,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit on the stratified 2/3 split, report held-out metrics, save the model.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        algorithm: Option<AlgorithmArg>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// SVM box constraint; skips the grid search together with --gamma.
        #[arg(long, requires = "gamma")]
        c: Option<f64>,
        #[arg(long, requires = "c")]
        gamma: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Cross-validate one algorithm.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        algorithm: Option<AlgorithmArg>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum)]
        cv_mode: Option<CvModeArg>,
        /// Write the ROC points here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full benchmark: screening, SVM grid search, CV of all five algorithms.
    Reproduce {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum)]
        cv_mode: Option<CvModeArg>,
        /// Directory for ROC, grid and feature CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a CSV with a saved model.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        /// Prediction CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP prediction service.
    Serve {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

/// Defaults read from `--config`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub algorithm: Option<AlgorithmArg>,
    pub cv_mode: Option<CvModeArg>,
    pub model: Option<PathBuf>,
    pub port: Option<u16>,
    pub threshold: Option<f64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Acceptance(String),
    Training(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Acceptance(_) => EXIT_ACCEPTANCE,
            CliError::Training(_) => EXIT_TRAINING,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Acceptance(m) | CliError::Training(m) => m,
        }
    }
}

type CmdResult = Result<(), CliError>;

fn io_err(e: std::io::Error) -> CliError {
    CliError::Input(format!("write failed: {e}"))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn read_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
}

/// Dataset plus the raw bytes it was parsed from.
fn load_data(path: Option<&Path>) -> Result<(Dataset, Vec<u8>), CliError> {
    match path {
        None => Ok((Dataset::bundled(), Dataset::bundled_bytes().to_vec())),
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| CliError::Input(format!("cannot read {}: {e}", p.display())))?;
            let d = load_dataset(bytes.as_slice())
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
                .with_source(p.display().to_string());
            Ok((d, bytes))
        }
    }
}

fn encode_labeled(d: &Dataset) -> Result<EncodedMatrix, CliError> {
    encode(d).map_err(|e| CliError::Input(format!("{}: {e}", d.source)))
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let file = read_file_config(cli.config.as_deref())?;
    let data_of = |c: &Common| c.data.clone().or_else(|| file.data.clone());
    let seed_of = |c: &Common| c.seed.or(file.seed).unwrap_or(0);
    let k_of = |k: Option<usize>| k.or(file.k).unwrap_or(10);
    let mode_of = |m: Option<CvModeArg>| m.or(file.cv_mode).map(CvMode::from).unwrap_or_default();
    let algorithm_of = |a: Option<AlgorithmArg>| {
        a.or(file.algorithm)
            .map(Algorithm::from)
            .ok_or_else(|| CliError::Input("--algorithm is required".into()))
    };
    let model_of = |m: Option<PathBuf>| {
        m.or_else(|| file.model.clone())
            .ok_or_else(|| CliError::Input("--model is required".into()))
    };

    match cli.command {
        Command::Features { common, threshold, out: csv } => cmd_features(
            data_of(&common).as_deref(),
            threshold.or(file.threshold).unwrap_or(0.7),
            csv.as_deref(),
            out,
        ),
        Command::Train {
            common,
            algorithm,
            model,
            c,
            gamma,
            k,
        } => cmd_train(
            data_of(&common).as_deref(),
            algorithm_of(algorithm)?,
            seed_of(&common),
            &model_of(model)?,
            c.zip(gamma),
            k_of(k),
            out,
        ),
        Command::Evaluate {
            common,
            algorithm,
            k,
            cv_mode,
            out: roc_path,
        } => cmd_evaluate(
            data_of(&common).as_deref(),
            algorithm_of(algorithm)?,
            &ReproduceOptions {
                seed: seed_of(&common),
                k: k_of(k),
                cv_mode: mode_of(cv_mode),
                ..Default::default()
            },
            roc_path.as_deref(),
            out,
        ),
        Command::Reproduce {
            common,
            k,
            cv_mode,
            out: dir,
        } => cmd_reproduce(
            data_of(&common).as_deref(),
            &ReproduceOptions {
                seed: seed_of(&common),
                k: k_of(k),
                cv_mode: mode_of(cv_mode),
                ..Default::default()
            },
            dir.or_else(|| file.out.clone()).as_deref(),
            out,
        ),
        Command::Predict {
            model,
            input,
            out: dest,
        } => cmd_predict(&model_of(model)?, &input, dest.as_deref(), out, err),
        Command::Serve {
            model,
            port,
            static_dir,
            cors_origin,
        } => cmd_serve(
            &model_of(model)?,
            port.or(file.port).unwrap_or(8080),
            ServiceConfig {
                cors_origin,
                static_dir,
            },
            out,
        ),
    }
}

pub fn cmd_features(data: Option<&Path>, threshold: f64, csv: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    let (d, _) = load_data(data)?;
    let m = encode_labeled(&d)?;
    let corr = correlation_filter(&m, threshold).map_err(|e| CliError::Input(e.to_string()))?;
    let gains = rank_features(&m);
    let rows = summarize(&corr, &gains);
    write!(out, "{}", render_feature_table(&rows)).map_err(io_err)?;
    writeln!(out, "label entropy: {:.6} bits", gains.label_entropy).map_err(io_err)?;
    for (dropped, kept) in &corr.dropped {
        writeln!(
            out,
            "dropped {} (|r| > {threshold} with {})",
            corr.feature_names[*dropped], corr.feature_names[*kept]
        )
        .map_err(io_err)?;
    }
    if let Some(p) = csv {
        let f = fs::File::create(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        write_feature_csv(&rows, f).map_err(io_err)?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn write_metrics(out: &mut dyn Write, m: &Metrics) -> std::io::Result<()> {
    writeln!(out, "accuracy:  {:.4}", m.accuracy)?;
    writeln!(out, "tpr:       {}", fmt_opt(m.tpr))?;
    writeln!(out, "fpr:       {}", fmt_opt(m.fpr))?;
    writeln!(out, "precision: {}", fmt_opt(m.precision))
}

/// Artifact timestamp; `SOURCE_DATE_EPOCH` pins it for reproducible builds.
fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(unix_now)
}

pub fn cmd_train(
    data: Option<&Path>,
    algorithm: Algorithm,
    seed: u64,
    model_path: &Path,
    svm_params: Option<(f64, f64)>,
    k: usize,
    out: &mut dyn Write,
) -> CmdResult {
    let (d, bytes) = load_data(data)?;
    let (train, test) = stratified_split(&d, 2.0 / 3.0, seed).map_err(|e| CliError::Input(e.to_string()))?;
    let train_m = encode_labeled(&train)?;
    let test_m = encode_labeled(&test)?;

    let corr = correlation_filter(&train_m, 0.7).map_err(|e| CliError::Input(e.to_string()))?;
    let mut kept = corr.kept.clone();
    kept.sort_unstable();
    let train_m = train_m.select_columns(&kept);
    let test_m = test_m.select_columns(&kept);

    let config = match (algorithm, svm_params) {
        (Algorithm::Svm, Some((c, gamma))) => ClassifierConfig::Svm(SvmConfig::with(c, gamma)),
        (Algorithm::Svm, None) => {
            let grid = grid_search(&train_m, &DEFAULT_C_GRID, &DEFAULT_GAMMA_GRID, k, seed, Execution::default())
                .map_err(|e| CliError::Training(e.to_string()))?;
            writeln!(out, "grid search: c = {}, gamma = {}", grid.best_c, grid.best_gamma).map_err(io_err)?;
            tuned_config(Algorithm::Svm, &grid)
        }
        (a, _) => ClassifierConfig::default_for(a),
    }
    .seeded(seed);

    let model = config
        .fit_with(&train_m, seed, Execution::default())
        .map_err(|e| CliError::Training(e.to_string()))?;
    let truth: Vec<Label> = (0..test_m.n_rows()).map(|i| test_m.label(i)).collect();
    let pred: Vec<Label> = (0..test_m.n_rows()).map(|i| model.predict(test_m.row(i))).collect();
    let cm = confusion(&truth, &pred).map_err(|e| CliError::Input(e.to_string()))?;
    let test_metrics = metrics(&cm);

    writeln!(
        out,
        "{}: trained on {} rows, tested on {} rows",
        algorithm.display_name(),
        train.len(),
        test.len()
    )
    .map_err(io_err)?;
    write_metrics(out, &test_metrics).map_err(io_err)?;

    let artifact = ModelArtifact::new(
        config,
        train_m.feature_names().to_vec(),
        model,
        TrainingInfo {
            dataset_hash: dataset_hash(&bytes),
            seed,
            timestamp: timestamp(),
        },
        Some(test_metrics),
    );
    save_model_file(&artifact, model_path).map_err(|e| CliError::Input(format!("{}: {e}", model_path.display())))?;
    writeln!(out, "model written to {}", model_path.display()).map_err(io_err)?;
    Ok(())
}

pub fn cmd_evaluate(
    data: Option<&Path>,
    algorithm: Algorithm,
    opts: &ReproduceOptions,
    roc_path: Option<&Path>,
    out: &mut dyn Write,
) -> CmdResult {
    let (d, _) = load_data(data)?;
    let m = encode_labeled(&d)?;
    let config = if algorithm == Algorithm::Svm {
        let grid = grid_search(&m, &opts.c_grid, &opts.gamma_grid, opts.k, opts.seed, opts.exec)
            .map_err(|e| CliError::Training(e.to_string()))?;
        writeln!(out, "grid search: c = {}, gamma = {}", grid.best_c, grid.best_gamma).map_err(io_err)?;
        tuned_config(algorithm, &grid)
    } else {
        ClassifierConfig::default_for(algorithm)
    };
    let cv = match opts.cv_mode {
        CvMode::Full => qbr_core::evaluation::k_fold_cv(&m, &config, opts.k, opts.seed, opts.exec),
        CvMode::Heldout => {
            qbr_core::evaluation::heldout_cv(&m, &config, opts.train_fraction, opts.k, opts.seed, opts.exec)
        }
    }
    .map_err(|e| match e {
        qbr_core::EvalError::Training { .. } => CliError::Training(e.to_string()),
        other => CliError::Input(other.to_string()),
    })?;
    writeln!(out, "{} ({}-fold, seed {})", algorithm.display_name(), opts.k, opts.seed).map_err(io_err)?;
    write_metrics(out, &cv.mean).map_err(io_err)?;
    writeln!(out, "accuracy std: {:.4}", cv.std.accuracy).map_err(io_err)?;
    let roc = cv.roc().map_err(|e| CliError::Input(e.to_string()))?;
    writeln!(out, "auc:       {:.4}", roc.auc).map_err(io_err)?;
    if let Some(p) = roc_path {
        let f = fs::File::create(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        write_roc_csv(&roc, f).map_err(io_err)?;
    }
    Ok(())
}

pub fn cmd_reproduce(
    data: Option<&Path>,
    opts: &ReproduceOptions,
    dir: Option<&Path>,
    out: &mut dyn Write,
) -> CmdResult {
    let (d, _) = load_data(data)?;
    let report = reproduce(&d, opts).map_err(|e| match e {
        experiment::ExperimentError::Eval(qbr_core::EvalError::Training { .. }) => CliError::Training(e.to_string()),
        other => CliError::Input(other.to_string()),
    })?;

    writeln!(out, "kept features: {}", report.kept_names().join(", ")).map_err(io_err)?;
    writeln!(out, "svm grid: c = {}, gamma = {}", report.grid.best_c, report.grid.best_gamma).map_err(io_err)?;
    write!(out, "{}", render_table(&report)).map_err(io_err)?;
    write!(out, "{}", render_checks(&report)).map_err(io_err)?;

    if let Some(dir) = dir {
        let create = |name: &str| {
            fs::File::create(dir.join(name)).map_err(|e| CliError::Input(format!("{}: {e}", dir.join(name).display())))
        };
        fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
        for run in &report.runs {
            write_roc_csv(&run.roc, create(&format!("roc_{}.csv", run.algorithm.tag()))?).map_err(io_err)?;
        }
        write_grid_csv(&report.grid, create("svm_grid.csv")?).map_err(io_err)?;
        write_feature_csv(&report.features, create("features.csv")?).map_err(io_err)?;
    }

    if report.all_passed() {
        Ok(())
    } else {
        let failing: Vec<String> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} ({})", c.name, c.detail))
            .collect();
        Err(CliError::Acceptance(format!("targets missed: {}", failing.join("; "))))
    }
}

/// Prediction CSV goes to `dest` or `out`; the error rate of labeled input goes
/// to `out` when the CSV went to a file and to `diag` otherwise.
pub fn cmd_predict(
    model_path: &Path,
    input: &Path,
    dest: Option<&Path>,
    out: &mut dyn Write,
    diag: &mut dyn Write,
) -> CmdResult {
    let artifact =
        load_model_file(model_path).map_err(|e| CliError::Input(format!("{}: {e}", model_path.display())))?;
    let bytes = fs::read(input).map_err(|e| CliError::Input(format!("cannot read {}: {e}", input.display())))?;
    let d = load_dataset(bytes.as_slice()).map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    let rows: Vec<PredictionRow> = d.records.iter().map(|r| PredictionRow::assess(&artifact, r)).collect();

    let mut csv = Vec::new();
    export_predictions(&rows, &mut csv).map_err(|e| CliError::Input(e.to_string()))?;
    match dest {
        Some(p) => fs::write(p, &csv).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => out.write_all(&csv).map_err(io_err)?,
    }
    if let Some(p) = error_percent(&rows) {
        let line = format!("error: {p:.2}% ({} rows)", rows.len());
        if dest.is_some() {
            writeln!(out, "{line}").map_err(io_err)?;
        } else {
            writeln!(diag, "{line}").map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn cmd_serve(model_path: &Path, port: u16, config: ServiceConfig, out: &mut dyn Write) -> CmdResult {
    let artifact =
        load_model_file(model_path).map_err(|e| CliError::Input(format!("{}: {e}", model_path.display())))?;
    let addr = SocketAddr::from((Ipv4Addr::UNSPECIFIED, port));
    writeln!(
        out,
        "serving {} model on http://{addr}",
        artifact.algorithm().tag()
    )
    .map_err(io_err)?;
    out.flush().map_err(io_err)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Input(e.to_string()))?;
    runtime
        .block_on(qbr_service::serve(addr, AppState::with_model(artifact), config))
        .map_err(|e| CliError::Input(format!("cannot serve on {addr}: {e}")))
}
