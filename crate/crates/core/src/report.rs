//! End-to-end runs: load inputs, evaluate the fleet, aggregate, and write
//! the report files.

use std::collections::BTreeMap;
use std::path::Path;

use chrono_tz::Tz;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analytics::{
    aggregate, behavior_stats, observed_days, summarize_vehicle, AnalyticsError, BehaviorStats, FleetReport,
    SessionOutcome, UtilitySummary, VehicleSummary, WindowBehavior,
};
use crate::config::RunConfig;
use crate::domain::{Catalog, PlugInWindow, TimeRange};
use crate::io::{self, IoError, RowReject};
use crate::pipeline::{evaluate_fleet, FleetEvaluation, FleetInputs, SkippedWindow};
use crate::tariff::TariffBook;

pub const FORMAT_VERSION: u32 = 1;

pub const SUMMARY_FILE: &str = "summary.json";
pub const OUTCOMES_FILE: &str = "outcomes.csv";
pub const VEHICLES_FILE: &str = "vehicles.csv";
pub const WINDOWS_FILE: &str = "windows.csv";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no window could be evaluated ({} rows rejected, {} windows skipped: {})", rejects.len(), skipped.len(), summarize_skips(skipped))]
    EmptyValidSet {
        rejects: Vec<RowReject>,
        skipped: Vec<SkippedWindow>,
    },
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

fn skip_counts(skipped: &[SkippedWindow]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for s in skipped {
        *counts.entry(s.reason.clone()).or_insert(0) += 1;
    }
    counts
}

fn summarize_skips(skipped: &[SkippedWindow]) -> String {
    let parts: Vec<String> = skip_counts(skipped).into_iter().map(|(k, n)| format!("{k} x{n}")).collect();
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join(", ")
    }
}

/// How the reported numbers are defined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interpretations {
    pub percent_reduction: &'static str,
    pub per_vehicle_percent: &'static str,
    pub cost_metrics: &'static str,
    pub cost_increase_unit: &'static str,
    pub baseline: &'static str,
    pub optimized_billing: &'static str,
    pub unconstrained_region: &'static str,
    pub unconstrained_allocation: &'static str,
    pub annualization: &'static str,
}

impl Default for Interpretations {
    fn default() -> Self {
        Self {
            percent_reduction: "100 * (baseline - optimized) / baseline; negative when the optimized value is higher",
            per_vehicle_percent: "computed from each vehicle's summed totals; distributions are over vehicles; totals_* fields use the group's summed totals",
            cost_metrics: "reported only for vehicles billed on a time-of-use tariff in the optimized scenarios",
            cost_increase_unit: "plug-in windows",
            baseline: "observed charging priced on the utility's standard tariff",
            optimized_billing: "the utility's EV tariff when it offers one, otherwise the standard tariff",
            unconstrained_region: "the local calendar days touched by the plug-in window, in the utility's timezone",
            unconstrained_allocation: "windows of one vehicle sharing a local day are optimized jointly; joint cost and emissions are split in proportion to each window's constrained values",
            annualization: "absolute savings scaled by 365 / observed days; omitted below the configured day threshold",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataQuality {
    pub session_rows: usize,
    pub rows_loaded: usize,
    pub rows_rejected: usize,
    pub rejects: Vec<RowReject>,
    pub windows_loaded: usize,
    pub windows_evaluated: usize,
    pub windows_skipped: usize,
    pub skip_reasons: BTreeMap<String, usize>,
    pub skipped: Vec<SkippedWindow>,
    /// Hours averaged from fewer samples than the native step implies.
    pub moer_partial_hours: BTreeMap<String, usize>,
}

impl DataQuality {
    pub fn is_clean(&self) -> bool {
        self.rejects.is_empty() && self.skipped.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub format_version: u32,
    pub config: RunConfig,
    pub interpretations: Interpretations,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_quality: Option<DataQuality>,
    pub fleet: FleetReport,
    pub utilities: Vec<UtilitySummary>,
    pub excluded_utilities: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub behavior: Option<BehaviorStats>,
    pub vehicles: Vec<VehicleSummary<f64>>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: Summary,
    pub outcomes: Vec<SessionOutcome<f64>>,
    pub behavior_rows: Vec<WindowBehavior>,
    pub windows: Vec<PlugInWindow<f64>>,
    pub evaluation: FleetEvaluation<f64>,
    pub inputs: FleetInputs<f64>,
}

impl RunOutput {
    pub fn is_clean(&self) -> bool {
        self.summary.data_quality.as_ref().is_none_or(DataQuality::is_clean)
    }
}

/// Per-vehicle summaries in vehicle order. Observed days are counted in the
/// timezone of each vehicle's first utility.
pub fn summarize_outcomes(
    outcomes: &[SessionOutcome<f64>],
    catalog: &Catalog,
    annualize_min_days: f64,
) -> Result<Vec<VehicleSummary<f64>>, AnalyticsError> {
    let mut by_vehicle: BTreeMap<&str, Vec<SessionOutcome<f64>>> = BTreeMap::new();
    for o in outcomes {
        by_vehicle.entry(&o.vehicle_id).or_default().push(o.clone());
    }
    by_vehicle
        .into_values()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|os| {
            let tz: Tz = catalog
                .utility(&os[0].utility_id)
                .ok_or_else(|| AnalyticsError::UnknownUtility(os[0].utility_id.clone()))?
                .timezone;
            let days = observed_days(os.iter().map(|o| TimeRange::new(o.plug_in, o.plug_out)), tz);
            summarize_vehicle(&os, days, annualize_min_days)
        })
        .collect()
}

pub struct LoadedInputs {
    pub inputs: FleetInputs<f64>,
    pub sessions: io::LoadedSessions,
}

pub fn check_config(config: &RunConfig) -> Result<(), RunError> {
    let slot = config.slot_len_minutes;
    if slot <= 0 || 60 % slot != 0 {
        return Err(RunError::InvalidConfig(format!("slot_len_minutes must divide 60, got {slot}")));
    }
    if config.immediate_threshold_minutes < 0 {
        return Err(RunError::InvalidConfig("immediate_threshold_minutes must be >= 0".into()));
    }
    if !(config.annualization_threshold_days >= 0.0) {
        return Err(RunError::InvalidConfig("annualization_threshold_days must be >= 0".into()));
    }
    Ok(())
}

/// Reads the catalog, tariffs, MOER and sessions named by `config`.
pub fn load_inputs(config: &RunConfig) -> Result<LoadedInputs, RunError> {
    let catalog = io::load_catalog(&config.resolve(&config.catalog))?;
    let tariffs: TariffBook<f64> = io::load_tariffs(&config.resolve(&config.tariffs), &catalog)?;
    let moer = io::load_moer(&config.resolve(&config.moer))?
        .into_iter()
        .map(|(region, series)| (region, series.hourly_average()))
        .collect();
    let sessions = io::load_sessions(&config.resolve(&config.sessions), &catalog)?;
    Ok(LoadedInputs {
        inputs: FleetInputs { catalog, tariffs, moer },
        sessions,
    })
}

/// Loads, evaluates and aggregates. Fails only on unreadable inputs, an
/// invalid config, or when no window can be evaluated.
pub fn run_pipeline(config: &RunConfig) -> Result<RunOutput, RunError> {
    check_config(config)?;
    let LoadedInputs { inputs, sessions } = load_inputs(config)?;
    let evaluation = evaluate_fleet(&sessions.windows, &inputs, config.slot_len(), config.scenario);
    if evaluation.evaluations.is_empty() {
        return Err(RunError::EmptyValidSet {
            rejects: sessions.rejects,
            skipped: evaluation.skipped,
        });
    }
    let outcomes: Vec<SessionOutcome<f64>> = evaluation.evaluations.iter().map(|e| e.outcome.clone()).collect();
    let vehicles = summarize_outcomes(&outcomes, &inputs.catalog, config.annualization_threshold_days)?;
    let agg = aggregate(&vehicles, &outcomes, config.min_vehicles_per_utility);
    let (behavior, behavior_rows) =
        behavior_stats(&sessions.windows, &inputs.catalog, config.immediate_threshold(), config.peak);

    let data_quality = DataQuality {
        session_rows: sessions.rows,
        rows_loaded: sessions.rows_loaded,
        rows_rejected: sessions.rejects.len(),
        rejects: sessions.rejects.clone(),
        windows_loaded: sessions.windows.len(),
        windows_evaluated: evaluation.evaluations.len(),
        windows_skipped: evaluation.skipped.len(),
        skip_reasons: skip_counts(&evaluation.skipped),
        skipped: evaluation.skipped.clone(),
        moer_partial_hours: inputs.moer.iter().map(|(r, h)| (r.clone(), h.partial_hours())).collect(),
    };
    let summary = Summary {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        interpretations: Interpretations::default(),
        data_quality: Some(data_quality),
        fleet: agg.fleet,
        utilities: agg.utilities,
        excluded_utilities: agg.excluded_utilities,
        behavior: Some(behavior),
        vehicles,
    };
    Ok(RunOutput {
        summary,
        outcomes,
        behavior_rows,
        windows: sessions.windows,
        evaluation,
        inputs,
    })
}

/// Writes `summary.json`, `outcomes.csv`, `vehicles.csv` and `windows.csv`.
pub fn write_reports(dir: &Path, run: &RunOutput) -> Result<(), IoError> {
    io::write_json(&dir.join(SUMMARY_FILE), &run.summary)?;
    io::write_csv(&dir.join(OUTCOMES_FILE), &run.outcomes)?;
    io::write_csv(&dir.join(VEHICLES_FILE), &run.summary.vehicles)?;
    io::write_csv(&dir.join(WINDOWS_FILE), &run.behavior_rows)
}

/// Rebuilds the vehicle, utility and fleet sections from an existing
/// outcomes export.
pub fn reaggregate(config: &RunConfig, outcomes_path: &Path) -> Result<Summary, RunError> {
    check_config(config)?;
    let catalog = io::load_catalog(&config.resolve(&config.catalog))?;
    let outcomes: Vec<SessionOutcome<f64>> = io::read_csv(outcomes_path)?;
    let vehicles = summarize_outcomes(&outcomes, &catalog, config.annualization_threshold_days)?;
    let agg = aggregate(&vehicles, &outcomes, config.min_vehicles_per_utility);
    Ok(Summary {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        interpretations: Interpretations::default(),
        data_quality: None,
        fleet: agg.fleet,
        utilities: agg.utilities,
        excluded_utilities: agg.excluded_utilities,
        behavior: None,
        vehicles,
    })
}
