use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use smartcharge::config::RunConfig;
use smartcharge::moer::{correlate_rate_moer, CorrelationMode};
use smartcharge::pipeline::ScenarioSelection;
use smartcharge::report::{self, RunError};
use smartcharge::synth::{generate_synthetic_fleet, SynthParams, CONFIG_FILE};
use smartcharge::tariff::{billing_tariff, BillingScenario};

/// Partial success: some rows were rejected or windows skipped.
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "smartcharge", version, about = "Cost- and carbon-optimal home EV charging over observed plug-in windows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    scenario: Option<ScenarioSelection>,
    /// Slot length in minutes; must divide 60.
    #[arg(long)]
    slot_len: Option<i64>,
    /// Random seed (synthetic generator only).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and check every input, and summarize data quality.
    Validate(Common),
    /// Run the full pipeline and write reports.
    Optimize(Common),
    /// Re-aggregate an existing outcomes.csv.
    Report {
        #[command(flatten)]
        common: Common,
        /// Outcomes export to read (default: <out>/outcomes.csv).
        #[arg(long)]
        outcomes: Option<PathBuf>,
    },
    /// Correlate tariff prices with MOER for one month.
    Correlate {
        #[command(flatten)]
        common: Common,
        /// Month as YYYY-MM, in each utility's local time.
        #[arg(long)]
        month: String,
        /// Correlate hour by hour instead of hour-of-day profiles.
        #[arg(long)]
        pairwise: bool,
    },
    /// Generate a synthetic fleet with its catalog, tariffs, MOER and config.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        vehicles: usize,
        #[arg(long, default_value_t = 2023)]
        year: i32,
    },
}

type CliResult = Result<ExitCode, String>;

fn load_config(common: &Common) -> Result<RunConfig, String> {
    let path = common.config.as_ref().ok_or("--config is required")?;
    let mut config = RunConfig::load(path).map_err(|e| e.to_string())?;
    if let Some(s) = common.scenario {
        config.scenario = s;
    }
    if let Some(len) = common.slot_len {
        config.slot_len_minutes = len;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    Ok(config)
}

fn out_dir(common: &Common, config: &RunConfig) -> PathBuf {
    match &common.out {
        Some(out) => out.clone(),
        None => config.resolve(&config.out_dir),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.to_string()),
        _ => Ok(()),
    }
}

fn status(clean: bool) -> ExitCode {
    if clean {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_PARTIAL)
    }
}

#[derive(Serialize)]
struct ValidationSummary {
    utilities: usize,
    regions: usize,
    tariffs: usize,
    moer_regions: Vec<String>,
    moer_partial_hours: usize,
    session_rows: usize,
    rows_loaded: usize,
    rows_rejected: usize,
    windows: usize,
    rejects: Vec<smartcharge::io::RowReject>,
}

fn validate(common: &Common) -> CliResult {
    let config = load_config(common)?;
    report::check_config(&config).map_err(|e| e.to_string())?;
    let loaded = report::load_inputs(&config).map_err(|e| e.to_string())?;
    let inputs = &loaded.inputs;
    let s = &loaded.sessions;
    let summary = ValidationSummary {
        utilities: inputs.catalog.utilities.len(),
        regions: inputs.catalog.regions.len(),
        tariffs: inputs.tariffs.len(),
        moer_regions: inputs.moer.keys().cloned().collect(),
        moer_partial_hours: inputs.moer.values().map(|h| h.partial_hours()).sum(),
        session_rows: s.rows,
        rows_loaded: s.rows_loaded,
        rows_rejected: s.rejects.len(),
        windows: s.windows.len(),
        rejects: s.rejects.clone(),
    };
    print_json(&summary)?;
    Ok(status(s.rejects.is_empty()))
}

fn optimize(common: &Common) -> CliResult {
    let config = load_config(common)?;
    let run = match report::run_pipeline(&config) {
        Ok(run) => run,
        Err(RunError::EmptyValidSet { rejects, skipped }) => {
            for s in &skipped {
                eprintln!("skipped {} ({}): {}: {}", s.window_id, s.vehicle_id, s.reason, s.detail);
            }
            for r in &rejects {
                eprintln!("rejected line {}: {}: {}", r.line, r.kind, r.detail);
            }
            return Err(RunError::EmptyValidSet { rejects, skipped }.to_string());
        }
        Err(e) => return Err(e.to_string()),
    };
    let dir = out_dir(common, &config);
    report::write_reports(&dir, &run).map_err(|e| e.to_string())?;
    let dq = run.summary.data_quality.as_ref().expect("pipeline runs record data quality");
    eprintln!(
        "{} windows evaluated, {} skipped, {} rows rejected; reports in {}",
        dq.windows_evaluated,
        dq.windows_skipped,
        dq.rows_rejected,
        dir.display()
    );
    Ok(status(run.is_clean()))
}

fn reaggregate(common: &Common, outcomes: Option<&Path>) -> CliResult {
    let config = load_config(common)?;
    let dir = out_dir(common, &config);
    let outcomes = outcomes.map(Path::to_path_buf).unwrap_or_else(|| dir.join(report::OUTCOMES_FILE));
    let summary = report::reaggregate(&config, &outcomes).map_err(|e| e.to_string())?;
    smartcharge::io::write_json(&dir.join("report.json"), &summary).map_err(|e| e.to_string())?;
    smartcharge::io::write_csv(&dir.join("report_vehicles.csv"), &summary.vehicles).map_err(|e| e.to_string())?;
    eprintln!("{} vehicles re-aggregated into {}", summary.vehicles.len(), dir.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct CorrelationRow {
    utility_id: String,
    tariff_id: String,
    region_id: String,
    month: String,
    mode: &'static str,
    correlation: Option<f64>,
    error: Option<String>,
}

fn correlate(common: &Common, month: &str, pairwise: bool) -> CliResult {
    let (year, m) = month
        .split_once('-')
        .and_then(|(y, m)| Some((y.parse::<i32>().ok()?, m.parse::<u32>().ok()?)))
        .filter(|(_, m)| (1..=12).contains(m))
        .ok_or_else(|| format!("--month must be YYYY-MM, got {month}"))?;
    let config = load_config(common)?;
    let loaded = report::load_inputs(&config).map_err(|e| e.to_string())?;
    let inputs = &loaded.inputs;
    let pairs: BTreeSet<(String, String)> = loaded
        .sessions
        .windows
        .iter()
        .map(|w| (w.utility_id().to_string(), w.region_id().to_string()))
        .collect();
    let mode = if pairwise { CorrelationMode::Pairwise } else { CorrelationMode::HourOfDay };
    let mut rows = Vec::new();
    for (utility_id, region_id) in pairs {
        let utility = inputs.catalog.utility(&utility_id).expect("validated utility");
        let mut tariffs: Vec<_> = [BillingScenario::Baseline, BillingScenario::Optimized]
            .into_iter()
            .filter_map(|s| billing_tariff(utility, s, &inputs.tariffs).ok())
            .collect();
        tariffs.dedup_by_key(|t| t.tariff_id().to_string());
        for tariff in tariffs {
            let result = match inputs.moer.get(&region_id) {
                Some(hourly) => correlate_rate_moer(tariff, hourly, year, m, mode).map_err(|e| e.to_string()),
                None => Err(format!("no MOER for region {region_id}")),
            };
            rows.push(CorrelationRow {
                utility_id: utility_id.clone(),
                tariff_id: tariff.tariff_id().to_string(),
                region_id: region_id.clone(),
                month: format!("{year:04}-{m:02}"),
                mode: if pairwise { "pairwise" } else { "hour_of_day" },
                correlation: result.as_ref().ok().copied(),
                error: result.err(),
            });
        }
    }
    match &common.out {
        Some(dir) => {
            let path = dir.join(format!("correlation_{year:04}-{m:02}.csv"));
            smartcharge::io::write_csv(&path, &rows).map_err(|e| e.to_string())?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for row in &rows {
                w.serialize(row).map_err(|e| e.to_string())?;
            }
            w.flush().map_err(|e| e.to_string())?;
        }
    }
    // flat tariffs have no price variance, so their rows carry an error by design
    Ok(ExitCode::SUCCESS)
}

fn synth(common: &Common, vehicles: usize, year: i32) -> CliResult {
    let defaults = SynthParams::default();
    let params = SynthParams {
        vehicles,
        year,
        seed: common.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("synthetic"));
    let fleet = generate_synthetic_fleet(&params).map_err(|e| e.to_string())?;
    let mut config = fleet.write(&dir, params.seed).map_err(|e| e.to_string())?;
    if common.scenario.is_some() || common.slot_len.is_some() {
        if let Some(s) = common.scenario {
            config.scenario = s;
        }
        if let Some(len) = common.slot_len {
            config.slot_len_minutes = len;
        }
        smartcharge::io::write_json(&dir.join(CONFIG_FILE), &config).map_err(|e| e.to_string())?;
    }
    eprintln!(
        "{} windows for {} vehicles written to {}",
        fleet.windows.len(),
        vehicles,
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(c) => validate(c),
        Command::Optimize(c) => optimize(c),
        Command::Report { common, outcomes } => reaggregate(common, outcomes.as_deref()),
        Command::Correlate { common, month, pairwise } => correlate(common, month, *pairwise),
        Command::Synth { common, vehicles, year } => synth(common, *vehicles, *year),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::FAILURE
    })
}
