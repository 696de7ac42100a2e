//! Declarative run configuration (TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use microstate::analytics::TrainConfig;
use microstate::pipeline::PrepConfig;
use microstate::spectral::{default_bands, Band, FrameLayout, PowerScaling};
use microstate::{FitConfig, FitMode};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Files, directories or glob patterns.
    pub inputs: Vec<String>,
    pub out: PathBuf,
    pub seed: u64,
    /// Sampling rate for CSV inputs, which carry none.
    pub csv_fs: Option<f64>,
    /// Window length T_w in seconds.
    pub window_s: f64,
    /// Label rate f_l in Hz for sidecar label files.
    pub label_rate: f64,
    pub prep: PrepConfig,
    pub fit: FitSection,
    pub features: FeatureSection,
    pub eval: EvalSection,
    pub stats: StatsSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: Vec::new(),
            out: PathBuf::from("out"),
            seed: 0,
            csv_fs: None,
            window_s: 300.0,
            label_rate: 1.0 / 30.0,
            prep: PrepConfig::default(),
            fit: FitSection::default(),
            features: FeatureSection::default(),
            eval: EvalSection::default(),
            stats: StatsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub k: usize,
    pub batch_size: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub mode: FitMode,
}

impl Default for FitSection {
    fn default() -> Self {
        let d = FitConfig::default();
        FitSection {
            k: d.k,
            batch_size: d.batch_size,
            max_iter: d.max_iter,
            tol: d.tol,
            mode: d.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSection {
    /// STFT window in seconds.
    pub t_w: f64,
    /// Overlap ratio in [0, 1).
    pub r_o: f64,
    pub scaling: PowerScaling,
    pub bands: Vec<Band>,
}

impl Default for FeatureSection {
    fn default() -> Self {
        FeatureSection {
            t_w: 1.0,
            r_o: 0.0,
            scaling: PowerScaling::Angular,
            bands: default_bands(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    /// Microstate histograms from a token dataset.
    Histogram,
    /// Mean band powers from a feature dataset.
    Bandpower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub features: FeatureKind,
}

impl Default for EvalSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        EvalSection {
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            features: FeatureKind::Histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsSection {
    /// Rows printed per rank table.
    pub top: usize,
}

impl Default for StatsSection {
    fn default() -> Self {
        StatsSection { top: 20 }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            k: self.fit.k,
            batch_size: self.fit.batch_size,
            max_iter: self.fit.max_iter,
            tol: self.fit.tol,
            mode: self.fit.mode,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.eval.learning_rate,
            epochs: self.eval.epochs,
        }
    }

    /// Checked before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.prep
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.fit_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.window_s > 0.0) {
            return bad(format!("window_s must be positive, got {}", self.window_s));
        }
        if !(self.label_rate > 0.0) {
            return bad(format!(
                "label_rate must be positive, got {}",
                self.label_rate
            ));
        }
        if let Some(fs) = self.csv_fs {
            if !(fs > 0.0) {
                return bad(format!("csv_fs must be positive, got {fs}"));
            }
        }
        FrameLayout::new(self.prep.target_fs, self.features.t_w, self.features.r_o)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.features.bands.is_empty() {
            return bad("at least one band is required".into());
        }
        for b in &self.features.bands {
            if !(b.low >= 0.0 && b.high > b.low) {
                return bad(format!("band {} has edges [{}, {}]", b.name, b.low, b.high));
            }
        }
        if !(self.eval.learning_rate > 0.0) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.eval.learning_rate
            ));
        }
        Ok(())
    }
}
