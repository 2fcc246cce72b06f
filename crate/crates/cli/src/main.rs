//! `dpm`: scripted access to ingest, training, decoding, querying and
//! summaries, plus a launcher for the HTTP service.
//!
//! Every command reads and writes the same JSON documents the library and
//! the service produce. Exit status is 0 on success, 1 when an input fails
//! validation and 2 on a usage error; failures print one JSON object on
//! stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use dpm_core::hmm::{self, DecodingSet, HmmModel, TrainConfig};
use dpm_core::ingest::{parse_dataset, Dataset, IngestConfig};
use dpm_core::query::{self, CohortStore};
use dpm_core::summarize;
use dpm_core::json;
use dpm_service::workspace::DEFAULT_GRID_POINTS;
use dpm_service::{ApiError, ServiceConfig, DEFAULT_BIND, DEFAULT_DATA_DIR};
use serde_json::json;

#[derive(Parser)]
#[command(name = "dpm", version, about = "Latent-state models for longitudinal cohort data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a visit CSV into a dataset document.
    Ingest {
        csv: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a K-state model by Baum-Welch with random restarts.
    Train {
        dataset: PathBuf,
        #[arg(long)]
        states: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-visit posteriors, inferred states and Viterbi paths.
    Decode {
        model: PathBuf,
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the ids of subjects matching a state-sequence query.
    Query {
        decoding: PathBuf,
        query: String,
        /// Save the result as a named cohort in the data directory.
        #[arg(long)]
        save: Option<String>,
        #[arg(long, env = "DPM_DATA_DIR", default_value = DEFAULT_DATA_DIR)]
        data_dir: PathBuf,
    },
    /// Print one summary document as JSON.
    #[command(group(ArgGroup::new("kind").required(true).args(["feature_matrix", "transitions", "density"])))]
    Summary {
        model: PathBuf,
        dataset: PathBuf,
        #[arg(long)]
        feature_matrix: bool,
        #[arg(long)]
        transitions: bool,
        #[arg(long, value_name = "OUTCOME")]
        density: Option<String>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "DPM_DATA_DIR", default_value = DEFAULT_DATA_DIR)]
        data_dir: PathBuf,
        #[arg(long, env = "DPM_BIND", default_value = DEFAULT_BIND)]
        bind: String,
    },
}

fn read(path: &Path) -> Result<String, ApiError> {
    fs::read_to_string(path).map_err(|e| {
        ApiError::validation(format!("cannot read {}: {e}", path.display()))
            .with_detail(json!({ "path": path.display().to_string() }))
    })
}

fn write(path: &Path, contents: &str) -> Result<(), ApiError> {
    fs::write(path, contents).map_err(|e| ApiError::internal(format!("cannot write {}: {e}", path.display())))
}

fn load_dataset(path: &Path) -> Result<Dataset, ApiError> {
    json::from_str(&read(path)?).map_err(|e| ApiError::validation(format!("invalid dataset {}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<HmmModel, ApiError> {
    Ok(HmmModel::from_json(&read(path)?)?)
}

fn load_decoding(path: &Path) -> Result<DecodingSet, ApiError> {
    DecodingSet::from_json(&read(path)?)
        .map_err(|e| ApiError::validation(format!("invalid decoding {}: {e}", path.display())))
}

fn run(command: Command) -> Result<(), ApiError> {
    match command {
        Command::Ingest { csv, config, out } => {
            let config = IngestConfig::from_json(&read(&config)?)?;
            let dataset = parse_dataset(&read(&csv)?, &config)?;
            write(&out, &json::to_string(&dataset))
        }
        Command::Train { dataset, states, seed, max_iter, restarts, out } => {
            let dataset = load_dataset(&dataset)?;
            let mut config = TrainConfig::new(states, seed);
            if let Some(m) = max_iter {
                config.max_iter = m;
            }
            if let Some(r) = restarts {
                config.n_restarts = r;
            }
            write(&out, &hmm::train(&dataset, &config)?.to_json())
        }
        Command::Decode { model, dataset, out } => {
            let decodings = hmm::decode(&load_model(&model)?, &load_dataset(&dataset)?)?;
            write(&out, &decodings.to_json())
        }
        Command::Query { decoding, query: text, save, data_dir } => {
            let decodings = load_decoding(&decoding)?;
            let parsed = query::parse_query(&text)?;
            let members = query::evaluate(&parsed, &decodings)?;
            let mut stdout = String::new();
            for id in &members {
                stdout.push_str(id);
                stdout.push('\n');
            }
            if let Some(name) = save {
                let store = CohortStore::open(&data_dir)?;
                let cohort = store.save(&name, &text, members, &decodings.model_id)?;
                eprintln!("saved cohort {}", cohort.cohort_id);
            }
            print!("{stdout}");
            Ok(())
        }
        Command::Summary { model, dataset, feature_matrix, transitions, density } => {
            let model = load_model(&model)?;
            let dataset = load_dataset(&dataset)?;
            let body = if let Some(outcome) = density {
                let ages = summarize::outcome_ages(&dataset, &outcome, None)?;
                if ages.is_empty() {
                    return Err(ApiError::validation(format!("no subject has outcome {outcome:?}"))
                        .with_detail(json!({ "reason": "empty_samples" })));
                }
                json::to_string(&summarize::kde(&ages, DEFAULT_GRID_POINTS)?.with_outcome(outcome))
            } else {
                let decodings = hmm::decode(&model, &dataset)?;
                if feature_matrix {
                    let variables: Vec<String> = model
                        .variables()
                        .map(str::to_owned)
                        .chain(dataset.extra_variables().iter().cloned())
                        .collect();
                    json::to_string(&summarize::feature_matrix(&model, &decodings, &dataset, &variables)?)
                } else {
                    debug_assert!(transitions);
                    json::to_string(&summarize::transition_summary(&decodings, &dataset, None)?)
                }
            };
            print!("{body}");
            Ok(())
        }
        Command::Serve { data_dir, bind } => {
            let bind = bind
                .parse()
                .map_err(|e| ApiError::validation(format!("invalid bind address {bind:?}: {e}")))?;
            tracing_subscriber::fmt()
                .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
                .with_writer(std::io::stderr)
                .init();
            let runtime = tokio::runtime::Runtime::new().map_err(ApiError::from)?;
            runtime
                .block_on(dpm_service::serve(ServiceConfig { data_dir, bind }))
                .map_err(|e| ApiError::internal(e.to_string()))
        }
    }
}

fn fail(code: &str, message: String, status: u8) -> ExitCode {
    eprintln!("{}", serde_json::to_string(&json!({ "code": code, "message": message })).unwrap_or_default());
    ExitCode::from(status)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            return fail("usage_error", message.trim_end().to_owned(), 2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e).unwrap_or_default());
            ExitCode::from(1)
        }
    }
}
