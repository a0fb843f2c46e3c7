//! `alimony`: the pipeline from synthetic data to a served model.

mod config;
mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alimony_client::AlimonyClient;
use alimony_core::api::{predict_response, request_from_cells, PredictResponse};
use alimony_core::audit::{render_audit, run_audit};
use alimony_core::data::{
    filter_cases, generate_synthetic, load_dataset, read_feature_rows, save_dataset, train_test_split, Dataset,
    DatasetSchema, Subset,
};
use alimony_core::eval::{compare_with_classifier, pca_csv, regression_pca, render_comparison};
use alimony_core::hurdle::{import_model, train_hurdle, CombinationMode, HurdleModel};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "alimony", version, about = "Grant/amount hurdle model for compensatory allowance cases")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Overrides for the config file; flags win.
#[derive(Args)]
struct Common {
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    schema: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    subset: Option<Subset>,
    #[arg(long, global = true)]
    mode: Option<CombinationMode>,
    /// Comma-separated features removed from both submodels.
    #[arg(long, global = true, value_delimiter = ',')]
    exclude: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic case file, its schema and the generating parameters.
    Generate,
    /// Fit the model on the training split and write the artifact.
    Train,
    /// Compare the four amount predictors on the held-out split.
    Evaluate,
    /// Rank features, flag extra-legal ones and retrain without them.
    Audit,
    /// Predict cases from a CSV of feature columns.
    Predict {
        /// Defaults to the data file.
        #[arg(long)]
        cases: Option<PathBuf>,
        /// Query a running service instead of the local artifact.
        #[arg(long)]
        server: Option<String>,
    },
    /// Write the first principal component of the regressors against amounts.
    ExportPlot,
    /// Serve the artifact over HTTP.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        port: Option<u16>,
    },
}

fn resolve(common: &Common) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let paths = &mut config.paths;
    for (slot, flag) in [
        (&mut paths.data, &common.data),
        (&mut paths.schema, &common.schema),
        (&mut paths.model, &common.model),
        (&mut paths.out, &common.out),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if common.seed.is_some() {
        config.seed = common.seed;
    }
    if let Some(subset) = common.subset {
        config.split.subset = subset;
    }
    if let Some(mode) = common.mode {
        config.model.combination_mode = mode;
    }
    for name in &common.exclude {
        if !config.model.excluded_features.contains(name) {
            config.model.excluded_features.push(name.clone());
        }
    }
    Ok(config)
}

struct Outputs {
    dir: PathBuf,
}

impl Outputs {
    fn new(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::output(&dir, e))?;
        Ok(Self { dir })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::output(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::output(&self.path(name), e))?;
        text.push('\n');
        self.write(name, text)
    }
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::InputNotFound {
            path: path.display().to_string(),
        })
    }
}

fn load_model(config: &RunConfig) -> Result<HurdleModel, CliError> {
    let path = config.model_path();
    if !path.is_file() {
        return Err(CliError::ModelNotFound {
            path: path.display().to_string(),
        });
    }
    Ok(import_model(&path)?)
}

/// The configured cases with monthly-payment decisions and other subsets
/// removed.
fn load_cases(config: &RunConfig) -> Result<Dataset, CliError> {
    let (data, schema) = (config.data_path(), config.schema_path());
    require(&data)?;
    require(&schema)?;
    let dataset = load_dataset(&data, &schema)?;
    let outcome = filter_cases(&dataset, config.split.exclude_monthly, config.split.subset);
    tracing::info!(
        kept = outcome.dataset.len(),
        removed_monthly = outcome.removed_monthly,
        removed_by_subset = outcome.removed_by_subset,
        "filtered cases"
    );
    Ok(outcome.dataset)
}

fn split(config: &RunConfig, cases: &Dataset) -> Result<(Dataset, Dataset), CliError> {
    Ok(train_test_split(cases, config.split.test_fraction, config.seed()?)?)
}

fn generate(config: &RunConfig) -> Result<(), CliError> {
    let synth = config.synthetic()?;
    let dataset = generate_synthetic(&synth)?;
    let out = Outputs::new(config.out_dir())?;
    let (data, schema) = (config.data_path(), config.schema_path());
    for path in [&data, &schema] {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| CliError::output(parent, e))?;
        }
    }
    save_dataset(&dataset, &data)?;
    println!("wrote {}", data.display());
    dataset.schema.save(&schema)?;
    println!("wrote {}", schema.display());
    out.write_json("ground_truth.json", &synth)
}

#[derive(Serialize)]
struct TrainingReport<'a> {
    model_fingerprint: String,
    schema_fingerprint: &'a str,
    n_train: usize,
    n_test: usize,
    summary: &'a alimony_core::hurdle::TrainingSummary,
}

fn train(config: &RunConfig) -> Result<(), CliError> {
    let cases = load_cases(config)?;
    let (train, test) = split(config, &cases)?;
    let model = train_hurdle(&train, &config.hurdle()?)?;
    let out = Outputs::new(config.out_dir())?;
    let path = config.model_path();
    fs::write(&path, model.to_artifact_bytes()).map_err(|e| CliError::output(&path, e))?;
    println!("wrote {}", path.display());
    out.write_json(
        "training_summary.json",
        &TrainingReport {
            model_fingerprint: model.fingerprint(),
            schema_fingerprint: &model.schema_fingerprint,
            n_train: train.len(),
            n_test: test.len(),
            summary: &model.summary,
        },
    )
}

/// `mode` overrides the artifact's combination mode.
fn evaluate(config: &RunConfig, mode: Option<CombinationMode>) -> Result<(), CliError> {
    let model = load_model(config)?;
    let cases = load_cases(config)?;
    model.check_schema(&cases.schema)?;
    let (train, test) = split(config, &cases)?;
    let mut hurdle = model.config.clone();
    if let Some(mode) = mode {
        hurdle.combination_mode = mode;
    }
    let report = compare_with_classifier(&model.classifier, &train, &test, &hurdle)?;
    let out = Outputs::new(config.out_dir())?;
    out.write("comparison.txt", render_comparison(&report))?;
    out.write_json("comparison.json", &report)
}

fn audit(config: &RunConfig) -> Result<(), CliError> {
    let cases = load_cases(config)?;
    let report = run_audit(&cases, &config.hurdle()?, &config.audit()?)?;
    let out = Outputs::new(config.out_dir())?;
    out.write("audit.txt", render_audit(&report))?;
    out.write_json("audit.json", &report)
}

fn read_cases(path: &Path, schema: &DatasetSchema) -> Result<Vec<Vec<alimony_core::data::Cell>>, CliError> {
    require(path)?;
    let file = fs::File::open(path).map_err(|e| CliError::input_missing(path, e))?;
    Ok(read_feature_rows(file, schema)?)
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Runtime::new().map_err(|e| CliError::Service(e.to_string()))
}

/// `mode` overrides the artifact's combination mode.
fn predict(config: &RunConfig, mode: Option<CombinationMode>, cases: Option<&Path>, server: Option<&str>) -> Result<(), CliError> {
    let cases = cases.map_or_else(|| config.data_path(), Path::to_path_buf);
    let responses: Vec<PredictResponse> = match server {
        None => {
            let model = load_model(config)?;
            let fingerprint = model.fingerprint();
            read_cases(&cases, &model.schema)?
                .iter()
                .map(|cells| Ok(predict_response(&model.predict_case(cells, mode)?, &fingerprint)))
                .collect::<Result<_, CliError>>()?
        }
        Some(url) => {
            let client = AlimonyClient::new(url);
            runtime()?.block_on(async {
                let schema = client.schema().await.map_err(|e| CliError::Service(e.to_string()))?.schema;
                let mut responses = Vec::new();
                for cells in read_cases(&cases, &schema)? {
                    let request = request_from_cells(&schema, &cells, mode);
                    responses.push(client.predict(&request).await.map_err(|e| CliError::Service(e.to_string()))?);
                }
                Ok::<_, CliError>(responses)
            })?
        }
    };
    Outputs::new(config.out_dir())?.write_json("predictions.json", &responses)
}

fn export_plot(config: &RunConfig) -> Result<(), CliError> {
    let model = load_model(config)?;
    let cases = load_cases(config)?;
    model.check_schema(&cases.schema)?;
    let projection = regression_pca(&model.regressor, &cases)?;
    for dropped in &projection.dropped {
        tracing::warn!(column = %dropped, "zero-variance column left out of the projection");
    }
    Outputs::new(config.out_dir())?.write("pca.csv", pca_csv(&projection))
}

fn serve(config: &RunConfig, bind: Option<String>, port: Option<u16>) -> Result<(), CliError> {
    let model = load_model(config)?;
    let mut service = config.service.clone();
    if let Some(bind) = bind {
        service.bind = bind;
    }
    if let Some(port) = port {
        service.port = port;
    }
    runtime()?
        .block_on(alimony_service::run(&service, model))
        .map_err(|e| CliError::Service(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = resolve(&cli.common)?;
    match cli.command {
        Command::Generate => generate(&config),
        Command::Train => train(&config),
        Command::Evaluate => evaluate(&config, cli.common.mode),
        Command::Audit => audit(&config),
        Command::Predict { cases, server } => predict(&config, cli.common.mode, cases.as_deref(), server.as_deref()),
        Command::ExportPlot => export_plot(&config),
        Command::Serve { bind, port } => serve(&config, bind, port),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.json_line());
            ExitCode::from(e.code().1 as u8)
        }
    }
}
