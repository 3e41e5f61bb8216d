//! Median-cut binary classification on 2D projections.
//!
//! For every subsample and for the classical and two-body reservoir
//! features: project to 2D with PCA fit on the training rows, label records
//! by the training-target median, train an RBF SVM on the training
//! projection and score it on the test projection.

use std::path::Path;

use anyhow::Context;
use qrc_core::analysis::ClassificationMetrics;
use qrc_core::{
    classification_metrics, export_for_projection, median_binarize, pca_project, svm_train, BinaryLabels, SvmKernel,
    SvmParams,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, ExperimentConfig, Mode};
use crate::pipeline::{aggregate, prepare, subsample_features, with_workers, write_json, Stage, StageError, StageExt};

pub const TABLE1_MODES: [Mode; 2] = [Mode::ClassicalRaw, Mode::QrcTwoBody];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub embedding_mode: Mode,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub format: String,
    pub dataset_tag: String,
    pub projection: String,
    pub classifier: String,
    /// Mode-major, metrics in accuracy / precision / recall / f1 order.
    pub rows: Vec<Table1Row>,
    /// `(subsample size, index, mode, metrics)` for every run.
    pub runs: Vec<(usize, usize, Mode, ClassificationMetrics)>,
}

impl Table1Report {
    pub fn row(&self, mode: Mode, metric: &str) -> Option<&Table1Row> {
        self.rows.iter().find(|r| r.embedding_mode == mode && r.metric == metric)
    }

    pub fn write_csv(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["embedding_mode", "metric", "mean", "std"])?;
        for r in &self.rows {
            w.write_record([r.embedding_mode.to_string(), r.metric.clone(), format!("{}", r.mean), format!("{}", r.std)])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn classify(
    config: &ExperimentConfig,
    prepared: &crate::pipeline::Prepared,
    size: usize,
    index: usize,
    members: &[usize],
) -> Result<Vec<(usize, usize, Mode, ClassificationMetrics)>, StageError> {
    let f = subsample_features(config, prepared, size, index, members, &TABLE1_MODES)?;
    let labels = median_binarize(&f.y_train).stage(Stage::Classify)?;
    let test_labels = BinaryLabels::with_threshold(&f.y_test, labels.threshold);
    let dir = prepared.run_dir.join("table1");
    let mut out = Vec::new();
    for (mode, x_train, x_test) in &f.modes {
        let ctx = || format!("size {size} subsample {index} {mode}");
        let proj = pca_project(x_train, 2).with_context(ctx).stage(Stage::Classify)?;
        let test_2d = proj.transform(x_test).stage(Stage::Classify)?;
        let ids: Vec<String> = f.train_ids.iter().chain(&f.test_ids).cloned().collect();
        let all_targets: Vec<f64> = f.y_train.iter().chain(&f.y_test).copied().collect();
        let mut all = qrc_core::Matrix::zeros(ids.len(), x_train.ncols());
        all.rows_mut(0, x_train.nrows()).copy_from(x_train);
        all.rows_mut(x_train.nrows(), x_test.nrows()).copy_from(x_test);
        export_for_projection(
            &all,
            &ids,
            Some(&all_targets),
            &dir.join(format!("projection_input_size{size}_sub{index}_{mode}.csv")),
        )
        .stage(Stage::Write)?;

        let mut params = SvmParams::new(SvmKernel::rbf_median_heuristic(&proj.coordinates));
        params.seed = derive_seed(config.master_seed, &format!("svm/{size}/{index}/{mode}"));
        let svm = svm_train(&proj.coordinates, &labels, &params).with_context(ctx).stage(Stage::Classify)?;
        let predicted = svm.predict(&test_2d);
        let metrics = classification_metrics(&predicted, &test_labels.labels).stage(Stage::Classify)?;
        out.push((size, index, *mode, metrics));
    }
    Ok(out)
}

fn run_table1_inner(config: &ExperimentConfig) -> Result<Table1Report, StageError> {
    let prepared = prepare(config)?;
    let dir = prepared.run_dir.join("table1");
    std::fs::create_dir_all(&dir).stage(Stage::Write)?;
    let jobs: Vec<(usize, usize, &[usize])> = config
        .subsample
        .sizes
        .iter()
        .zip(&prepared.plans)
        .flat_map(|(&size, plan)| plan.subsamples.iter().enumerate().map(move |(i, s)| (size, i, s.as_slice())))
        .collect();
    let runs: Vec<_> = jobs
        .par_iter()
        .map(|&(size, i, members)| classify(config, &prepared, size, i, members))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut rows = Vec::new();
    for mode in TABLE1_MODES {
        for (k, name) in ClassificationMetrics::NAMES.iter().enumerate() {
            let values: Vec<f64> = runs.iter().filter(|r| r.2 == mode).map(|r| r.3.values()[k]).collect();
            let (mean, std) = aggregate(&values).stage(Stage::Aggregate)?;
            rows.push(Table1Row {
                embedding_mode: mode,
                metric: (*name).into(),
                mean,
                std,
                values,
            });
        }
    }
    let report = Table1Report {
        format: "qrc-table1/1".into(),
        dataset_tag: prepared.dataset_tag.clone(),
        projection: "pca".into(),
        classifier: "svm_rbf_median_gamma_c1".into(),
        rows,
        runs,
    };
    report.write_csv(&dir.join("table1.csv")).stage(Stage::Write)?;
    write_json(&dir.join("table1.json"), &report)?;
    Ok(report)
}

pub fn run_table1_task(config: &ExperimentConfig) -> Result<Table1Report, StageError> {
    let result = with_workers(crate::effective_workers(config), || run_table1_inner(config))
        .stage(Stage::Config)
        .and_then(|r| r);
    if let Err(e) = &result {
        crate::pipeline::record_failure(config, e);
    }
    result
}
