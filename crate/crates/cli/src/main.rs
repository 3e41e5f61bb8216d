use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use qrc_cli::config::ExperimentConfig;
use qrc_cli::pipeline::{self, Stage, StageError, StageExt};
use qrc_cli::{run_pipeline, run_table1_task, EvaluationReport, WORKERS_ENV};
use qrc_core::embedding::embed_features;
use qrc_core::{fit_scaler, generate_synthetic, load_csv, summarize, CsvSchema, EmbeddingMatrix, Relation};

#[derive(Parser)]
#[command(name = "qrc", version, about = "Quantum reservoir embeddings for molecular activity regression")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SchemaArgs {
    #[arg(long, default_value = "MOLECULE")]
    id_column: String,
    #[arg(long, default_value = "Act")]
    target_column: String,
    /// Only columns starting with this prefix are features.
    #[arg(long)]
    feature_prefix: Option<String>,
}

impl SchemaArgs {
    fn schema(&self) -> CsvSchema {
        CsvSchema {
            id_column: self.id_column.clone(),
            target_column: self.target_column.clone(),
            feature_prefix: self.feature_prefix.clone(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RelationArg {
    Linear,
    Nonlinear,
}

#[derive(Subcommand)]
enum Command {
    /// Load a descriptor CSV, impute missing cells and write a clean copy.
    Ingest {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
    },
    /// Per-feature statistics as JSON.
    Summarize {
        input: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Candidate model tournament on the full standardized data.
    Tournament { config: PathBuf },
    /// Tournament plus Kernel SHAP top-k selection.
    SelectFeatures { config: PathBuf },
    /// Everything up to the k-means subsample plans.
    Subsample { config: PathBuf },
    /// Reservoir embeddings of the whole dataset on the selected features.
    Embed { config: PathBuf },
    /// Full regression workflow and report.
    Evaluate { config: PathBuf },
    /// Median-cut classification task on 2D projections.
    Table1 { config: PathBuf },
    /// Write a synthetic descriptor CSV.
    Synth {
        #[arg(long, default_value_t = 500)]
        records: usize,
        #[arg(long, default_value_t = 8)]
        features: usize,
        #[arg(long, value_enum, default_value = "nonlinear")]
        relation: RelationArg,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print a finished run's report as a table.
    Report { run_dir: PathBuf },
}

fn load_config(path: &Path, workers: Option<usize>) -> Result<ExperimentConfig, StageError> {
    let mut config = ExperimentConfig::load(path).stage(Stage::Config)?;
    if let Some(w) = workers {
        config.workers = w;
    }
    Ok(config)
}

fn pooled<T: Send>(config: &ExperimentConfig, job: impl FnOnce() -> Result<T, StageError> + Send) -> Result<T, StageError> {
    pipeline::with_workers(config.workers, job).stage(Stage::Config).and_then(|r| r)
}

fn print_report(report: &EvaluationReport) {
    println!(
        "{:<14} {:<14} {:>6} {:>4} {:>12} {:>12}",
        "mode", "model", "size", "n", "mse_mean", "mse_std"
    );
    for r in &report.rows {
        println!(
            "{:<14} {:<14} {:>6} {:>4} {:>12.6} {:>12.6}",
            r.embedding_mode.to_string(),
            r.model_kind,
            r.subsample_size,
            r.n_subsamples,
            r.mse_mean,
            r.mse_std
        );
    }
}

fn run(cli: Cli) -> Result<(), StageError> {
    match cli.command {
        Command::Ingest { input, output, schema } => {
            let ds = load_csv(&input, &schema.schema()).stage(Stage::Load)?;
            ds.write_csv(&output, &schema.schema()).stage(Stage::Write)?;
            let imputed: usize = ds.imputed_counts.iter().sum();
            println!(
                "{} records, {} features, {imputed} cells imputed -> {}",
                ds.n_records(),
                ds.n_features(),
                output.display()
            );
        }
        Command::Summarize { input, schema, output } => {
            let ds = load_csv(&input, &schema.schema()).stage(Stage::Load)?;
            let text = serde_json::to_string_pretty(&summarize(&ds)).stage(Stage::Write)?;
            match output {
                Some(p) => std::fs::write(p, text).stage(Stage::Write)?,
                None => println!("{text}"),
            }
        }
        Command::Tournament { config } => {
            let config = load_config(&config, cli.workers)?;
            let result = pooled(&config, || qrc_cli::run_candidate_tournament(&config))?;
            for (i, e) in result.entries.iter().enumerate() {
                let mark = if i == result.winner { "*" } else { " " };
                println!("{mark} {:<14} {:.6}", e.model_kind, e.mse);
            }
        }
        Command::SelectFeatures { config } | Command::Subsample { config } => {
            let config = load_config(&config, cli.workers)?;
            let prepared = pooled(&config, || pipeline::prepare(&config))?;
            println!("selected: {}", prepared.selection.selected_names.join(", "));
            println!("artifacts: {}", prepared.run_dir.display());
        }
        Command::Embed { config } => {
            let config = load_config(&config, cli.workers)?;
            let dir = pooled(&config, || {
                let prepared = pipeline::prepare(&config)?;
                let x = prepared.standardized.features.select_columns(&prepared.selection.selected);
                let scaler = fit_scaler(&x).stage(Stage::Embed)?;
                let reservoir = config.reservoir.chain(prepared.selection.selected.len());
                let out = prepared.run_dir.join("embeddings");
                std::fs::create_dir_all(&out).stage(Stage::Write)?;
                for mode in &config.embedding.modes {
                    let Some(emb) = mode.embedding() else { continue };
                    let values = embed_features(&reservoir, &scaler, &x, emb, 0).stage(Stage::Embed)?;
                    let m = EmbeddingMatrix {
                        record_ids: prepared.dataset.record_ids.clone(),
                        values,
                        column_labels: qrc_core::embedding::column_labels(
                            reservoir.n_atoms(),
                            &reservoir.snapshot_times(),
                            emb,
                        ),
                        mode: emb,
                    };
                    m.write_csv(&out.join(format!("full_{mode}.csv"))).stage(Stage::Write)?;
                    m.write_sidecar(&out.join(format!("full_{mode}.json")), &reservoir, &scaler)
                        .stage(Stage::Write)?;
                }
                Ok(out)
            })?;
            println!("embeddings: {}", dir.display());
        }
        Command::Evaluate { config } => {
            let config = load_config(&config, cli.workers)?;
            let (report, _) = run_pipeline(&config)?;
            print_report(&report);
            println!("artifacts: {}", config.run_dir().display());
        }
        Command::Table1 { config } => {
            let config = load_config(&config, cli.workers)?;
            let report = run_table1_task(&config)?;
            println!("{:<14} {:<10} {:>8} {:>8}", "mode", "metric", "mean", "std");
            for r in &report.rows {
                println!("{:<14} {:<10} {:>8.4} {:>8.4}", r.embedding_mode.to_string(), r.metric, r.mean, r.std);
            }
        }
        Command::Synth {
            records,
            features,
            relation,
            noise,
            seed,
            output,
        } => {
            let relation = match relation {
                RelationArg::Linear => Relation::Linear,
                RelationArg::Nonlinear => Relation::Nonlinear,
            };
            let ds = generate_synthetic(records, features, relation, noise, seed).stage(Stage::Load)?;
            ds.write_csv(&output, &CsvSchema::default()).stage(Stage::Write)?;
            println!("{} records -> {}", records, output.display());
        }
        Command::Report { run_dir } => {
            let path = run_dir.join("report.json");
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))
                .stage(Stage::Load)?;
            let report: EvaluationReport = serde_json::from_str(&text).stage(Stage::Load)?;
            print_report(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
