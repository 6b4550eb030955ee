//! Run configuration, loaded from JSON and embedded in every report.

use std::path::{Path, PathBuf};

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::analytics::DailyWindow;
use crate::io::IoError;
use crate::pipeline::ScenarioSelection;

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_slot_len() -> i64 {
    crate::optimizer::DEFAULT_SLOT_MINUTES
}

fn default_immediate() -> i64 {
    15
}

fn default_annualization() -> f64 {
    90.0
}

fn default_min_vehicles() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Input paths. Relative paths resolve against the config file's directory.
    pub sessions: PathBuf,
    pub tariffs: PathBuf,
    pub moer: PathBuf,
    pub catalog: PathBuf,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_slot_len")]
    pub slot_len_minutes: i64,
    #[serde(default = "default_immediate")]
    pub immediate_threshold_minutes: i64,
    #[serde(default = "DailyWindow::evening_peak")]
    pub peak: DailyWindow,
    /// Vehicles observed for fewer days are not annualized.
    #[serde(default = "default_annualization")]
    pub annualization_threshold_days: f64,
    /// Utilities with fewer vehicles are left out of aggregate statistics.
    #[serde(default = "default_min_vehicles")]
    pub min_vehicles_per_utility: usize,
    #[serde(default)]
    pub scenario: ScenarioSelection,
    /// Only used by the synthetic generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    /// Config with default settings for the given inputs.
    pub fn with_inputs(sessions: impl Into<PathBuf>, tariffs: impl Into<PathBuf>, moer: impl Into<PathBuf>, catalog: impl Into<PathBuf>) -> Self {
        Self {
            sessions: sessions.into(),
            tariffs: tariffs.into(),
            moer: moer.into(),
            catalog: catalog.into(),
            out_dir: default_out_dir(),
            slot_len_minutes: default_slot_len(),
            immediate_threshold_minutes: default_immediate(),
            peak: DailyWindow::evening_peak(),
            annualization_threshold_days: default_annualization(),
            min_vehicles_per_utility: default_min_vehicles(),
            scenario: ScenarioSelection::Both,
            seed: None,
            label: None,
            base_dir: PathBuf::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|source| IoError::Open {
            path: path.to_path_buf(),
            source,
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| IoError::SchemaViolation {
            file: path.display().to_string(),
            path: e.path().to_string(),
            detail: e.into_inner().to_string(),
        })?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn slot_len(&self) -> Duration {
        Duration::minutes(self.slot_len_minutes)
    }

    pub fn immediate_threshold(&self) -> Duration {
        Duration::minutes(self.immediate_threshold_minutes)
    }
}
