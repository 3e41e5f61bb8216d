//! End-to-end workflow: load → standardize → tournament → SHAP top-k →
//! k-means subsample plans → per subsample: split, features per embedding
//! mode, models, test MSE → aggregate.
//!
//! The tournament, SHAP selection and clustering see the full standardized
//! dataset, in that order, before any subsampling, so the feature choice is
//! not blind to the records later used for testing. Inside each subsample
//! the standardization and the reservoir scaler are refit on the training
//! indices only.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use qrc_core::dataset::{apply_standardization, split_indices, SplitIndices};
use qrc_core::embedding::{column_labels, embed_features};
use qrc_core::feature_select::{explain_rows, kmeans_background};
use qrc_core::subsample::make_subsamples_in_rounds;
use qrc_core::{
    fit_scaler, generate_synthetic, kmeans, load_csv, make_subsamples, mse, rank_features, select_top_k,
    stratified_split, summarize, train, ClusterModel, EmbeddingMatrix, FeatureRanking, FeatureScaler, Matrix,
    MolecularDataset, RegressorSpec, ShapConfig, StandardizationParams, SubsamplePlan, TrainedModel,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, DataSource, ExperimentConfig, Mode, OnExhaustion};

pub const REPORT_FORMAT: &str = "qrc-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Load,
    Standardize,
    Tournament,
    Shap,
    Cluster,
    Subsample,
    Embed,
    Train,
    Aggregate,
    Classify,
    Write,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Standardize => "standardize",
            Stage::Tournament => "tournament",
            Stage::Shap => "shap",
            Stage::Cluster => "cluster",
            Stage::Subsample => "subsample",
            Stage::Embed => "embed",
            Stage::Train => "train",
            Stage::Aggregate => "aggregate",
            Stage::Classify => "classify",
            Stage::Write => "write",
        }
    }

    /// Process exit code for a failure in this stage.
    pub fn exit_code(self) -> i32 {
        10 + self as i32
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: anyhow::Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {:#}", self.stage.name(), self.source)
    }
}

impl std::error::Error for StageError {}

pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, StageError>;
}

impl<T, E: Into<anyhow::Error>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|e| StageError {
            stage,
            source: e.into(),
        })
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StageError> {
    let text = serde_json::to_string_pretty(value).stage(Stage::Write)?;
    fs::write(path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))
        .stage(Stage::Write)
}

fn mkdir(path: &Path) -> Result<(), StageError> {
    fs::create_dir_all(path)
        .with_context(|| format!("creating {}", path.display()))
        .stage(Stage::Write)
}

/// Runs `job` on a pool of `workers` threads (0 = rayon default).
pub fn with_workers<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    Ok(pool.install(job))
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<MolecularDataset, StageError> {
    match &config.data {
        DataSource::Csv { path, schema } => load_csv(path, schema).stage(Stage::Load),
        DataSource::Synthetic {
            n_records,
            n_features,
            relation,
            noise_sd,
            seed,
        } => generate_synthetic(
            *n_records,
            *n_features,
            *relation,
            *noise_sd,
            seed.unwrap_or_else(|| derive_seed(config.master_seed, "data")),
        )
        .stage(Stage::Load),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentEntry {
    pub model_kind: String,
    pub spec: RegressorSpec,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentResult {
    pub entries: Vec<TournamentEntry>,
    /// Index into `entries`; the lowest MSE, earliest entry on ties.
    pub winner: usize,
    pub split: SplitIndices,
    #[serde(skip)]
    pub winner_model: Option<TrainedModel>,
}

impl TournamentResult {
    pub fn best_spec(&self) -> &RegressorSpec {
        &self.entries[self.winner].spec
    }
}

/// Trains every candidate on one split of `standardized` and picks the
/// lowest test MSE.
pub fn tournament_on(
    standardized: &MolecularDataset,
    candidates: &[RegressorSpec],
    test_fraction: f64,
    master_seed: u64,
) -> Result<TournamentResult, StageError> {
    let split = split_indices(
        standardized.n_records(),
        test_fraction,
        None,
        derive_seed(master_seed, "tournament/split"),
    )
    .stage(Stage::Tournament)?;
    let tr = standardized.select_rows(&split.train);
    let te = standardized.select_rows(&split.test);
    let fitted: Vec<(TrainedModel, f64)> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, spec)| -> anyhow::Result<(TrainedModel, f64)> {
            let seed = derive_seed(master_seed, &format!("tournament/model/{i}"));
            let model = train(spec, &tr.features, &tr.target, seed)
                .with_context(|| format!("training {}", spec.kind()))?;
            let err = mse(&model.predict(&te.features)?, &te.target)?;
            Ok((model, err))
        })
        .collect::<anyhow::Result<_>>()
        .stage(Stage::Tournament)?;
    let mut winner = 0;
    for (i, (_, err)) in fitted.iter().enumerate() {
        if *err < fitted[winner].1 {
            winner = i;
        }
    }
    let entries = candidates
        .iter()
        .zip(&fitted)
        .map(|(spec, (_, err))| TournamentEntry {
            model_kind: spec.kind().name().into(),
            spec: spec.clone(),
            mse: *err,
        })
        .collect();
    Ok(TournamentResult {
        entries,
        winner,
        split,
        winner_model: Some(fitted.into_iter().nth(winner).expect("winner exists").0),
    })
}

/// Loads and standardizes the configured data, then runs the tournament.
pub fn run_candidate_tournament(config: &ExperimentConfig) -> Result<TournamentResult, StageError> {
    let dataset = load_dataset(config)?;
    let (standardized, _) = qrc_core::dataset::standardize(&dataset).stage(Stage::Standardize)?;
    let specs: Vec<RegressorSpec> = config.tournament.iter().map(|e| e.spec()).collect();
    tournament_on(&standardized, &specs, config.subsample.test_fraction, config.master_seed)
}

/// Evenly spaced positions, all of them when `max >= len`.
fn spread(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    (0..max).map(|i| i * len / max).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub ranking: FeatureRanking,
    /// Selected feature indices, ascending.
    pub selected: Vec<usize>,
    pub selected_names: Vec<String>,
    pub explained_rows: usize,
    pub background_rows: usize,
    pub n_coalitions: usize,
    pub method: String,
}

/// Kernel SHAP on the tournament winner over (up to `max_explained`)
/// training records, ranked by mean |φ|.
pub fn select_features(
    config: &ExperimentConfig,
    standardized: &MolecularDataset,
    tournament: &TournamentResult,
) -> Result<FeatureSelection, StageError> {
    let model = tournament
        .winner_model
        .as_ref()
        .ok_or_else(|| anyhow!("tournament result carries no fitted winner"))
        .stage(Stage::Shap)?;
    let train_x = standardized.features.select_rows(&tournament.split.train);
    let background = kmeans_background(
        &train_x,
        config.shap.background_size,
        derive_seed(config.master_seed, "shap/background"),
    )
    .stage(Stage::Shap)?;
    let rows = spread(train_x.nrows(), config.shap.max_explained);
    let explain = train_x.select_rows(&rows);
    let mut shap = ShapConfig::new(background, derive_seed(config.master_seed, "shap"));
    if let Some(n) = config.shap.n_coalitions {
        shap.n_coalitions = n;
    }
    let attributions = explain_rows(model, &explain, &shap).stage(Stage::Shap)?;
    let ranking = rank_features(&attributions).stage(Stage::Shap)?;
    let k = config.shap.top_k.min(standardized.n_features());
    let selected = select_top_k(&ranking, k).stage(Stage::Shap)?;
    Ok(FeatureSelection {
        selected_names: selected.iter().map(|&i| standardized.feature_names[i].clone()).collect(),
        ranking,
        selected,
        explained_rows: rows.len(),
        background_rows: shap.background.nrows(),
        n_coalitions: shap.n_coalitions,
        method: "kernel".into(),
    })
}

/// Everything computed on the full dataset before subsampling.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset_tag: String,
    pub run_dir: PathBuf,
    /// Raw (imputed) records.
    pub dataset: MolecularDataset,
    pub standardized: MolecularDataset,
    pub standardization: StandardizationParams,
    pub tournament: TournamentResult,
    pub selection: FeatureSelection,
    pub clusters: ClusterModel,
    pub assignments: Vec<usize>,
    /// One plan per configured size, same order.
    pub plans: Vec<SubsamplePlan>,
}

#[derive(Serialize)]
struct ClusterDoc<'a> {
    model: &'a ClusterModel,
    assignments: &'a [usize],
}

/// Front half of the workflow, writing its artifacts into the run directory.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, StageError> {
    config.validate().stage(Stage::Config)?;
    let run_dir = config.run_dir();
    mkdir(&run_dir)?;
    fs::write(
        run_dir.join("config.toml"),
        toml::to_string(config).context("serializing config").stage(Stage::Write)?,
    )
    .stage(Stage::Write)?;

    let dataset = load_dataset(config)?;
    config.validate_for(dataset.n_records()).stage(Stage::Config)?;
    write_json(&run_dir.join("dataset_summary.json"), &summarize(&dataset))?;

    let (standardized, standardization) = qrc_core::dataset::standardize(&dataset).stage(Stage::Standardize)?;
    write_json(&run_dir.join("standardization.json"), &standardization)?;

    let specs: Vec<RegressorSpec> = config.tournament.iter().map(|e| e.spec()).collect();
    let tournament = tournament_on(&standardized, &specs, config.subsample.test_fraction, config.master_seed)?;
    {
        let mut w = csv::Writer::from_path(run_dir.join("tournament.csv")).stage(Stage::Write)?;
        w.write_record(["model_kind", "mse", "winner"]).stage(Stage::Write)?;
        for (i, e) in tournament.entries.iter().enumerate() {
            w.write_record([e.model_kind.clone(), format!("{}", e.mse), (i == tournament.winner).to_string()])
                .stage(Stage::Write)?;
        }
        w.flush().stage(Stage::Write)?;
    }
    if let Some(m) = &tournament.winner_model {
        fs::write(run_dir.join("tournament_winner.json"), m.to_json().stage(Stage::Write)?).stage(Stage::Write)?;
    }

    let selection = select_features(config, &standardized, &tournament)?;
    selection
        .ranking
        .write_csv(
            &standardized.feature_names,
            fs::File::create(run_dir.join("shap_ranking.csv")).stage(Stage::Write)?,
        )
        .stage(Stage::Write)?;
    write_json(&run_dir.join("selected_features.json"), &selection)?;

    let selected_x = standardized.features.select_columns(&selection.selected);
    let k = config.subsample.n_clusters.min(dataset.n_records());
    let (clusters, assignments) =
        kmeans(&selected_x, k, derive_seed(config.master_seed, "kmeans")).stage(Stage::Cluster)?;
    write_json(
        &run_dir.join("clusters.json"),
        &ClusterDoc {
            model: &clusters,
            assignments: &assignments,
        },
    )?;

    let plan_dir = run_dir.join("plans");
    mkdir(&plan_dir)?;
    let mut plans = Vec::new();
    for &size in &config.subsample.sizes {
        let seed = derive_seed(config.master_seed, &format!("subsample/{size}"));
        let plan = match config.subsample.on_exhaustion {
            OnExhaustion::Fail => make_subsamples(&assignments, config.subsample.count, size, seed),
            OnExhaustion::Rounds => make_subsamples_in_rounds(&assignments, config.subsample.count, size, seed),
        }
        .stage(Stage::Subsample)?;
        fs::write(
            plan_dir.join(format!("subsamples_{size}.json")),
            plan.to_id_json(&dataset.record_ids).stage(Stage::Write)?,
        )
        .stage(Stage::Write)?;
        write_json(&plan_dir.join(format!("plan_{size}.json")), &plan)?;
        plans.push(plan);
    }

    Ok(Prepared {
        dataset_tag: config.data.tag(),
        run_dir,
        dataset,
        standardized,
        standardization,
        tournament,
        selection,
        clusters,
        assignments,
        plans,
    })
}

/// Which rows each fitted transform saw; lets tests assert that nothing
/// was fit on test records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleTrace {
    pub subsample_size: usize,
    pub index: usize,
    pub members: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub standardization_fit_rows: Vec<usize>,
    pub scaler_fit_rows: Option<Vec<usize>>,
    pub split_fallback: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub subsamples: Vec<SubsampleTrace>,
}

/// Per-mode train/test matrices of one subsample.
pub struct SubsampleFeatures {
    pub trace: SubsampleTrace,
    pub y_train: Vec<f64>,
    pub y_test: Vec<f64>,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    /// `(mode, train, test)` in the requested order.
    pub modes: Vec<(Mode, Matrix, Matrix)>,
    pub scaler: Option<FeatureScaler>,
    pub standardization: StandardizationParams,
}

/// Splits one subsample and builds the requested feature views, fitting
/// the standardization and the reservoir scaler on its training rows.
pub fn subsample_features(
    config: &ExperimentConfig,
    prepared: &Prepared,
    size: usize,
    index: usize,
    members: &[usize],
    modes: &[Mode],
) -> Result<SubsampleFeatures, StageError> {
    let split = stratified_split(
        members,
        &prepared.assignments,
        config.subsample.test_fraction,
        derive_seed(config.master_seed, &format!("split/{size}/{index}")),
    )
    .stage(Stage::Subsample)?;
    let selected = prepared.dataset.select_features(&prepared.selection.selected);

    let fit_rows = split.train.clone();
    let params = StandardizationParams::fit(&selected.select_rows(&fit_rows)).stage(Stage::Standardize)?;
    let train = apply_standardization(&params, &selected.select_rows(&split.train)).stage(Stage::Standardize)?;
    let test = apply_standardization(&params, &selected.select_rows(&split.test)).stage(Stage::Standardize)?;

    let wants_qrc = modes.iter().any(|m| m.embedding().is_some());
    let (scaler, scaler_rows) = if wants_qrc {
        // Rows of `train.features` are exactly the records in `split.train`.
        (Some(fit_scaler(&train.features).stage(Stage::Embed)?), Some(split.train.clone()))
    } else {
        (None, None)
    };

    let mut embedded: Option<(Matrix, Matrix)> = None;
    let reservoir = config.reservoir.chain(prepared.selection.selected.len());
    let two_body = modes.contains(&Mode::QrcTwoBody);
    let mut out = Vec::new();
    for &mode in modes {
        let (tr, te) = match mode.embedding() {
            None => (train.features.clone(), test.features.clone()),
            Some(_) => {
                if embedded.is_none() {
                    let emb = if two_body {
                        qrc_core::EmbeddingMode::TwoBody
                    } else {
                        qrc_core::EmbeddingMode::OneBody
                    };
                    let sc = scaler.as_ref().expect("scaler fit for reservoir modes");
                    embedded = Some((
                        embed_features(&reservoir, sc, &train.features, emb, 0).stage(Stage::Embed)?,
                        embed_features(&reservoir, sc, &test.features, emb, 0).stage(Stage::Embed)?,
                    ));
                }
                let (a, b) = embedded.as_ref().expect("just computed");
                let width = mode
                    .embedding()
                    .expect("reservoir mode")
                    .width(reservoir.n_atoms(), reservoir.snapshot_times().len());
                (a.columns(0, width).into_owned(), b.columns(0, width).into_owned())
            }
        };
        out.push((mode, tr, te));
    }

    let ids = |rows: &[usize]| rows.iter().map(|&i| prepared.dataset.record_ids[i].clone()).collect();
    Ok(SubsampleFeatures {
        trace: SubsampleTrace {
            subsample_size: size,
            index,
            members: members.to_vec(),
            train: split.train.clone(),
            test: split.test.clone(),
            standardization_fit_rows: fit_rows,
            scaler_fit_rows: scaler_rows,
            split_fallback: split.fallback.clone(),
        },
        y_train: train.target,
        y_test: test.target,
        train_ids: ids(&split.train),
        test_ids: ids(&split.test),
        modes: out,
        scaler,
        standardization: params,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset_tag: String,
    pub embedding_mode: Mode,
    pub model_kind: String,
    /// Position in the configured model list.
    pub model_index: usize,
    pub subsample_size: usize,
    pub n_subsamples: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub mses: Vec<f64>,
    /// Training plus prediction time summed over subsamples. Kept out of the
    /// serialized report so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format: String,
    pub dataset_tag: String,
    pub master_seed: u64,
    pub config_hash: String,
    pub shap_method: String,
    pub std_convention: String,
    pub tournament: Vec<TournamentEntry>,
    pub tournament_winner: String,
    pub selected_features: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl EvaluationReport {
    pub fn write_csv(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "dataset_tag",
            "embedding_mode",
            "model_kind",
            "subsample_size",
            "n_subsamples",
            "mse_mean",
            "mse_std",
            "mses",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.dataset_tag.clone(),
                r.embedding_mode.to_string(),
                r.model_kind.clone(),
                r.subsample_size.to_string(),
                r.n_subsamples.to_string(),
                format!("{}", r.mse_mean),
                format!("{}", r.mse_std),
                r.mses.iter().map(|m| format!("{m}")).collect::<Vec<_>>().join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_timings(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["embedding_mode", "model_kind", "model_index", "subsample_size", "wall_time_s"])?;
        for r in &self.rows {
            w.write_record([
                r.embedding_mode.to_string(),
                r.model_kind.clone(),
                r.model_index.to_string(),
                r.subsample_size.to_string(),
                format!("{:.3}", r.wall_time_s),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean and population standard deviation.
pub fn aggregate(values: &[f64]) -> anyhow::Result<(f64, f64)> {
    if values.is_empty() {
        return Err(anyhow!("cannot aggregate an empty list"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// `(mode, model index, mse, seconds)` for one subsample.
type Scores = Vec<(Mode, usize, f64, f64)>;

fn evaluate_subsample(
    config: &ExperimentConfig,
    prepared: &Prepared,
    size: usize,
    index: usize,
    members: &[usize],
) -> Result<(Scores, SubsampleTrace), StageError> {
    let dir = prepared
        .run_dir
        .join("subsamples")
        .join(format!("size{size}"))
        .join(format!("sub{index}"));
    mkdir(&dir)?;
    let f = subsample_features(config, prepared, size, index, members, &config.embedding.modes)?;
    write_json(&dir.join("split.json"), &(&f.trace.train, &f.trace.test))?;
    write_json(&dir.join("standardization.json"), &f.standardization)?;
    if let Some(sc) = &f.scaler {
        write_json(&dir.join("scaler.json"), sc)?;
    }

    let reservoir = config.reservoir.chain(prepared.selection.selected.len());
    let mut scores = Vec::new();
    for (mode, x_train, x_test) in &f.modes {
        if let Some(emb) = mode.embedding() {
            let matrix = EmbeddingMatrix {
                record_ids: f.train_ids.iter().chain(&f.test_ids).cloned().collect(),
                values: stack(x_train, x_test),
                column_labels: column_labels(reservoir.n_atoms(), &reservoir.snapshot_times(), emb),
                mode: emb,
            };
            matrix.write_csv(&dir.join(format!("embedding_{mode}.csv"))).stage(Stage::Write)?;
            matrix
                .write_sidecar(
                    &dir.join(format!("embedding_{mode}.json")),
                    &reservoir,
                    f.scaler.as_ref().expect("scaler for reservoir modes"),
                )
                .stage(Stage::Write)?;
        }
        for (m, entry) in config.models.iter().enumerate() {
            let spec = entry.spec();
            let label = format!("model/{size}/{index}/{mode}/{m}");
            let start = Instant::now();
            let model = train(&spec, x_train, &f.y_train, derive_seed(config.master_seed, &label))
                .with_context(|| format!("{label} ({})", spec.kind()))
                .stage(Stage::Train)?;
            let err = mse(&model.predict(x_test).stage(Stage::Train)?, &f.y_test).stage(Stage::Train)?;
            let secs = start.elapsed().as_secs_f64();
            fs::write(
                dir.join(format!("model_{mode}_{m}_{}.json", spec.kind())),
                model.to_json().stage(Stage::Write)?,
            )
            .stage(Stage::Write)?;
            scores.push((*mode, m, err, secs));
        }
    }
    Ok((scores, f.trace))
}

fn stack(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

fn run_pipeline_inner(config: &ExperimentConfig) -> Result<(EvaluationReport, PipelineTrace), StageError> {
    let prepared = prepare(config)?;
    let jobs: Vec<(usize, usize, &[usize])> = config
        .subsample
        .sizes
        .iter()
        .zip(&prepared.plans)
        .flat_map(|(&size, plan)| plan.subsamples.iter().enumerate().map(move |(i, s)| (size, i, s.as_slice())))
        .collect();
    let outcomes: Vec<(Scores, SubsampleTrace)> = jobs
        .par_iter()
        .map(|&(size, i, members)| evaluate_subsample(config, &prepared, size, i, members))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for &size in &config.subsample.sizes {
        for &mode in &config.embedding.modes {
            for (m, entry) in config.models.iter().enumerate() {
                let hits: Vec<(f64, f64)> = outcomes
                    .iter()
                    .filter(|(_, t)| t.subsample_size == size)
                    .flat_map(|(s, _)| s.iter())
                    .filter(|(md, mi, _, _)| *md == mode && *mi == m)
                    .map(|&(_, _, e, t)| (e, t))
                    .collect();
                let mses: Vec<f64> = hits.iter().map(|h| h.0).collect();
                let (mse_mean, mse_std) = aggregate(&mses).stage(Stage::Aggregate)?;
                rows.push(ReportRow {
                    dataset_tag: prepared.dataset_tag.clone(),
                    embedding_mode: mode,
                    model_kind: entry.spec().kind().name().into(),
                    model_index: m,
                    subsample_size: size,
                    n_subsamples: mses.len(),
                    mse_mean,
                    mse_std,
                    mses,
                    wall_time_s: hits.iter().map(|h| h.1).sum(),
                });
            }
        }
    }

    let report = EvaluationReport {
        format: REPORT_FORMAT.into(),
        dataset_tag: prepared.dataset_tag.clone(),
        master_seed: config.master_seed,
        config_hash: config.hash(),
        shap_method: prepared.selection.method.clone(),
        std_convention: "population".into(),
        tournament: prepared.tournament.entries.clone(),
        tournament_winner: prepared.tournament.entries[prepared.tournament.winner].model_kind.clone(),
        selected_features: prepared.selection.selected_names.clone(),
        rows,
    };
    let trace = PipelineTrace {
        subsamples: outcomes.into_iter().map(|(_, t)| t).collect(),
    };
    let dir = &prepared.run_dir;
    report.write_csv(&dir.join("report.csv")).stage(Stage::Write)?;
    write_json(&dir.join("report.json"), &report)?;
    report.write_timings(&dir.join("timings.csv")).stage(Stage::Write)?;
    write_json(&dir.join("trace.json"), &trace)?;
    Ok((report, trace))
}

/// Records a failure next to whatever artifacts were already written.
pub(crate) fn record_failure(config: &ExperimentConfig, err: &StageError) {
    let dir = config.run_dir();
    if dir.is_dir() {
        let doc = serde_json::json!({ "stage": err.stage.name(), "error": format!("{:#}", err.source) });
        let _ = fs::write(dir.join("error.json"), doc.to_string());
    }
}

/// Full workflow; artifacts land in `config.run_dir()`.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<(EvaluationReport, PipelineTrace), StageError> {
    let result = with_workers(crate::effective_workers(config), || run_pipeline_inner(config))
        .stage(Stage::Config)
        .and_then(|r| r);
    if let Err(e) = &result {
        record_failure(config, e);
    }
    result
}
