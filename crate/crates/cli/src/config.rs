//! Versioned experiment configuration (TOML).
//!
//! ```toml
//! version = 1
//! master_seed = 7
//! output_dir = "runs"
//!
//! [data]
//! source = "synthetic"        # or "csv" with path / id_column / target_column / feature_prefix
//! n_records = 500
//! n_features = 8
//! relation = "nonlinear"
//! noise_sd = 0.1
//!
//! [embedding]
//! modes = ["classical_raw", "qrc_one_body", "qrc_two_body"]
//!
//! models = ["random_forest", "gp_rbf"]   # kind names or full spec tables
//!
//! [subsample]
//! sizes = [100, 200]
//! count = 5
//! ```

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use qrc_core::reservoir::DEFAULT_C6;
use qrc_core::{CsvSchema, EmbeddingMode, RegressorKind, RegressorSpec, Relation, ReservoirConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub data: DataSource,
    #[serde(default)]
    pub reservoir: ReservoirSettings,
    #[serde(default)]
    pub embedding: EmbeddingSettings,
    /// Candidates of the model tournament, in tie-break precedence order.
    #[serde(default = "default_tournament")]
    pub tournament: Vec<ModelEntry>,
    /// Models trained on every subsample and embedding mode.
    #[serde(default = "default_models")]
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub shap: ShapSettings,
    #[serde(default)]
    pub subsample: SubsampleSettings,
    /// Worker threads; 0 uses every core. `QRC_WORKERS` overrides it.
    #[serde(default)]
    pub workers: usize,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_tournament() -> Vec<ModelEntry> {
    RegressorKind::ALL.iter().map(|&k| ModelEntry::Kind(k)).collect()
}

fn default_models() -> Vec<ModelEntry> {
    vec![ModelEntry::Kind(RegressorKind::RandomForest), ModelEntry::Kind(RegressorKind::GpRbf)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(flatten)]
        schema: CsvSchema,
    },
    Synthetic {
        n_records: usize,
        n_features: usize,
        relation: Relation,
        #[serde(default)]
        noise_sd: f64,
        /// Generator seed; derived from the master seed when absent.
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl DataSource {
    pub fn tag(&self) -> String {
        match self {
            DataSource::Csv { path, .. } => path
                .file_stem()
                .map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned()),
            DataSource::Synthetic {
                n_records,
                n_features,
                relation,
                ..
            } => {
                let r = match relation {
                    Relation::Linear => "linear",
                    Relation::Nonlinear => "nonlinear",
                };
                format!("synthetic-{r}-{n_records}x{n_features}")
            }
        }
    }
}

/// A model given either by kind name (default hyperparameters) or in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelEntry {
    Kind(RegressorKind),
    Spec(RegressorSpec),
}

impl ModelEntry {
    pub fn spec(&self) -> RegressorSpec {
        match self {
            ModelEntry::Kind(k) => RegressorSpec::default_for(*k),
            ModelEntry::Spec(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ClassicalRaw,
    QrcOneBody,
    QrcTwoBody,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::ClassicalRaw => "classical_raw",
            Mode::QrcOneBody => "qrc_one_body",
            Mode::QrcTwoBody => "qrc_two_body",
        }
    }

    pub fn embedding(self) -> Option<EmbeddingMode> {
        match self {
            Mode::ClassicalRaw => None,
            Mode::QrcOneBody => Some(EmbeddingMode::OneBody),
            Mode::QrcTwoBody => Some(EmbeddingMode::TwoBody),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirSettings {
    /// Chain spacing, µm.
    pub spacing: f64,
    pub rabi_amplitude: f64,
    pub global_detuning: f64,
    pub local_detuning_amplitude: f64,
    pub interaction_coefficient: f64,
    pub total_time: f64,
    pub snapshot_step: f64,
}

impl Default for ReservoirSettings {
    fn default() -> Self {
        Self {
            spacing: 10.0,
            rabi_amplitude: 2.0 * PI,
            global_detuning: 0.0,
            local_detuning_amplitude: 6.0,
            interaction_coefficient: DEFAULT_C6,
            total_time: 4.3,
            snapshot_step: 0.4,
        }
    }
}

impl ReservoirSettings {
    pub fn chain(&self, n_atoms: usize) -> ReservoirConfig {
        let mut c = ReservoirConfig::chain_with_spacing(n_atoms, self.spacing);
        c.rabi_amplitude = self.rabi_amplitude;
        c.global_detuning = self.global_detuning;
        c.local_detuning_amplitude = self.local_detuning_amplitude;
        c.interaction_coefficient = self.interaction_coefficient;
        c.total_time = self.total_time;
        c.snapshot_step = self.snapshot_step;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    pub modes: Vec<Mode>,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        Self {
            modes: vec![Mode::ClassicalRaw, Mode::QrcOneBody, Mode::QrcTwoBody],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapSettings {
    /// Features kept (and atoms simulated); clamped to the feature count.
    pub top_k: usize,
    /// k-means centroids used as the background set.
    pub background_size: usize,
    /// Coalitions per explanation; the library default when absent.
    pub n_coalitions: Option<usize>,
    /// Training records explained, drawn without replacement when fewer
    /// than the training split.
    pub max_explained: usize,
}

impl Default for ShapSettings {
    fn default() -> Self {
        Self {
            top_k: 18,
            background_size: 25,
            n_coalitions: None,
            max_explained: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnExhaustion {
    /// Reject plans needing more records than exist.
    Fail,
    /// Draw disjoint rounds; records may repeat across rounds.
    Rounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsampleSettings {
    pub sizes: Vec<usize>,
    pub count: usize,
    pub n_clusters: usize,
    pub test_fraction: f64,
    pub on_exhaustion: OnExhaustion,
}

impl Default for SubsampleSettings {
    fn default() -> Self {
        Self {
            sizes: vec![100, 200, 800],
            count: 5,
            n_clusters: 5,
            test_fraction: 0.25,
            on_exhaustion: OnExhaustion::Fail,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let config: Self = toml::from_str(text).context("parsing config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config = Self::from_toml(&text)?;
        if let DataSource::Csv { path: p, .. } = &mut config.data {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.version != CONFIG_VERSION {
            bail!("unsupported config version {} (expected {CONFIG_VERSION})", self.version);
        }
        if self.embedding.modes.is_empty() {
            bail!("at least one embedding mode is required");
        }
        if self.models.is_empty() || self.tournament.is_empty() {
            bail!("model lists must not be empty");
        }
        let s = &self.subsample;
        if s.sizes.is_empty() || s.count == 0 || s.sizes.contains(&0) {
            bail!("subsample sizes and count must be positive");
        }
        if !(s.test_fraction > 0.0 && s.test_fraction < 1.0) {
            bail!("test_fraction must lie in (0, 1)");
        }
        if s.n_clusters == 0 {
            bail!("n_clusters must be positive");
        }
        if self.shap.top_k == 0 || self.shap.background_size == 0 || self.shap.max_explained == 0 {
            bail!("shap top_k, background_size and max_explained must be positive");
        }
        Ok(())
    }

    /// Checks against the loaded record count.
    pub fn validate_for(&self, n_records: usize) -> anyhow::Result<()> {
        for &size in &self.subsample.sizes {
            if size > n_records {
                bail!("subsample size {size} exceeds the {n_records} available records");
            }
            if self.subsample.on_exhaustion == OnExhaustion::Fail && size * self.subsample.count > n_records {
                bail!(
                    "{} subsamples of {size} need {} records but only {n_records} exist (set on_exhaustion = \"rounds\" to allow reuse across rounds)",
                    self.subsample.count,
                    size * self.subsample.count
                );
            }
        }
        Ok(())
    }

    /// Short digest naming the run directory. Output location and worker
    /// count do not affect results, so they are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.workers = 0;
        let text = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..6].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(format!("run-{}", self.hash()))
    }
}

/// Component seed: the first 8 bytes (little endian) of
/// `SHA-256(master_seed as 8 LE bytes || label)`.
pub fn derive_seed(master_seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
