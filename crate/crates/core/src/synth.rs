//! Deterministic synthetic fleets: sessions, a small utility and region
//! catalog, tariffs, and a full year of five-minute MOER.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, TimeZone, Timelike, Utc};
use chrono_tz::Tz;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::domain::{validate_window, Catalog, ChargingInterval, GridRegionRef, PlugInWindow, Timestamp, UtilityRef, WindowRecord};
use crate::io::{self, CatalogFile, IoError};
use crate::moer::MoerSeries;
use crate::pipeline::FleetInputs;
use crate::tariff::shapes::{flat, period};
use crate::tariff::{DaySet, MonthDay, Season, TariffBook, TariffDefinition, TariffKind, TariffSchedule};

pub const SESSIONS_FILE: &str = "sessions.csv";
pub const TARIFFS_FILE: &str = "tariffs.json";
pub const CATALOG_FILE: &str = "catalog.json";
pub const MOER_FILE: &str = "moer.csv";
pub const CONFIG_FILE: &str = "config.json";

const CHARGER_RATINGS_KW: [f64; 3] = [7.2, 9.6, 11.5];
const MAX_SESSION_KWH: f64 = 120.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub vehicles: usize,
    pub year: i32,
    pub seed: u64,
    pub mean_sessions_per_vehicle: f64,
    /// Gamma shape of the per-vehicle session count.
    pub sessions_shape: f64,
    pub mean_daily_energy_kwh: f64,
    /// Gamma shape of the per-vehicle mean session energy.
    pub energy_shape: f64,
    pub plug_duration_mean_hours: f64,
    pub plug_duration_sd_hours: f64,
    /// Share of windows whose charging starts within minutes of plug-in.
    pub immediate_start_fraction: f64,
    /// Share of charging intervals that start in the local evening peak.
    pub peak_start_fraction: f64,
    /// Share of windows with a second charging interval.
    pub split_fraction: f64,
    /// Share of windows written without a declared charger rating.
    pub missing_rating_fraction: f64,
    pub moer_step_minutes: i64,
    /// `(utility_id, weight)` over the built-in utilities; weights sum to 1.
    pub utility_mix: Vec<(String, f64)>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            vehicles: 200,
            year: 2023,
            seed: 42,
            mean_sessions_per_vehicle: 138.0,
            sessions_shape: 3.0,
            mean_daily_energy_kwh: 10.9,
            energy_shape: 5.0,
            plug_duration_mean_hours: 11.2,
            plug_duration_sd_hours: 4.0,
            immediate_start_fraction: 0.72,
            peak_start_fraction: 0.31,
            split_fraction: 0.1,
            missing_rating_fraction: 0.05,
            moer_step_minutes: 5,
            utility_mix: vec![
                ("pge_like".into(), 0.35),
                ("sce_like".into(), 0.20),
                ("aps_like".into(), 0.15),
                ("midwest_like".into(), 0.15),
                ("consumers_like".into(), 0.15),
            ],
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.into()));
        let positive = [
            self.mean_sessions_per_vehicle,
            self.sessions_shape,
            self.mean_daily_energy_kwh,
            self.energy_shape,
            self.plug_duration_mean_hours,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("means and shapes must be positive");
        }
        if !(self.plug_duration_sd_hours >= 0.0) {
            return bad("plug_duration_sd_hours must be >= 0");
        }
        let fractions = [
            self.immediate_start_fraction,
            self.peak_start_fraction,
            self.split_fraction,
            self.missing_rating_fraction,
        ];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return bad("fractions must lie in [0, 1]");
        }
        if self.peak_start_fraction * (1.0 + self.split_fraction) > 1.0 {
            return bad("peak_start_fraction is too large for the split fraction");
        }
        let step = self.moer_step_minutes;
        if step <= 0 || 60 % step != 0 {
            return bad("moer_step_minutes must divide 60");
        }
        if self.utility_mix.is_empty() || self.utility_mix.iter().any(|(_, w)| !(*w >= 0.0)) {
            return bad("utility weights must be non-negative");
        }
        let total: f64 = self.utility_mix.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad("utility weights must sum to 1");
        }
        let catalog = world_catalog();
        if let Some((id, _)) = self.utility_mix.iter().find(|(id, _)| catalog.utility(id).is_none()) {
            return Err(SynthError::InvalidParams(format!("unknown utility {id}")));
        }
        if NaiveDate::from_ymd_opt(self.year, 1, 1).is_none() {
            return bad("year out of range");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticFleet {
    pub catalog: Catalog,
    pub tariffs: Vec<TariffDefinition<f64>>,
    pub moer: Vec<MoerSeries<f64>>,
    pub windows: Vec<WindowRecord<f64>>,
}

impl SyntheticFleet {
    pub fn inputs(&self) -> FleetInputs<f64> {
        let tariffs = TariffBook::new(self.tariffs.iter().map(|d| {
            let tz = self.catalog.utility(&d.utility_id).expect("built-in utility").timezone;
            TariffSchedule::new(d.clone(), tz).expect("built-in tariffs are valid")
        }));
        FleetInputs {
            catalog: self.catalog.clone(),
            tariffs,
            moer: self.moer.iter().map(|s| (s.region_id().to_string(), s.hourly_average())).collect(),
        }
    }

    pub fn validated_windows(&self) -> Vec<PlugInWindow<f64>> {
        self.windows
            .iter()
            .map(|r| validate_window(r.clone(), &self.catalog).expect("generated windows are valid"))
            .collect()
    }

    /// Writes the fleet in the ingestion formats plus a run config that
    /// references them, and returns that config.
    pub fn write(&self, dir: &Path, seed: u64) -> Result<RunConfig, IoError> {
        io::save_sessions(&dir.join(SESSIONS_FILE), &self.windows)?;
        io::write_json(&dir.join(TARIFFS_FILE), &self.tariffs)?;
        io::write_json(&dir.join(CATALOG_FILE), &CatalogFile::from(&self.catalog))?;
        io::save_moer(&dir.join(MOER_FILE), &self.moer)?;
        let mut config = RunConfig::with_inputs(SESSIONS_FILE, TARIFFS_FILE, MOER_FILE, CATALOG_FILE);
        config.out_dir = PathBuf::from("report");
        config.seed = Some(seed);
        config.min_vehicles_per_utility = 1;
        io::write_json(&dir.join(CONFIG_FILE), &config)?;
        config.base_dir = dir.to_path_buf();
        Ok(config)
    }
}

struct UtilitySpec {
    id: &'static str,
    name: &'static str,
    tz: Tz,
    region: &'static str,
    ev_tariff: bool,
}

const UTILITIES: [UtilitySpec; 5] = [
    UtilitySpec { id: "pge_like", name: "Northern California IOU", tz: chrono_tz::America::Los_Angeles, region: "caiso_north", ev_tariff: true },
    UtilitySpec { id: "sce_like", name: "Southern California IOU", tz: chrono_tz::America::Los_Angeles, region: "caiso_south", ev_tariff: false },
    UtilitySpec { id: "aps_like", name: "Arizona IOU", tz: chrono_tz::America::Phoenix, region: "az", ev_tariff: true },
    UtilitySpec { id: "midwest_like", name: "Midwest cooperative", tz: chrono_tz::America::Chicago, region: "miso", ev_tariff: false },
    UtilitySpec { id: "consumers_like", name: "Great Lakes IOU", tz: chrono_tz::America::Detroit, region: "miso", ev_tariff: false },
];

const REGIONS: [(&str, &str, Tz); 4] = [
    ("caiso_north", "CAISO north", chrono_tz::America::Los_Angeles),
    ("caiso_south", "CAISO south", chrono_tz::America::Los_Angeles),
    ("az", "Arizona", chrono_tz::America::Phoenix),
    ("miso", "MISO", chrono_tz::America::Chicago),
];

fn spec(utility_id: &str) -> &'static UtilitySpec {
    UTILITIES.iter().find(|u| u.id == utility_id).expect("built-in utility")
}

pub fn world_catalog() -> Catalog {
    Catalog::new(
        UTILITIES.iter().map(|u| UtilityRef {
            id: u.id.into(),
            name: u.name.into(),
            timezone: u.tz,
            standard_tariff_id: format!("{}_std", u.id),
            ev_tariff_id: u.ev_tariff.then(|| format!("{}_ev", u.id)),
        }),
        REGIONS.iter().map(|(id, name, tz)| GridRegionRef {
            id: (*id).into(),
            name: (*name).into(),
            timezone: *tz,
        }),
    )
}

fn season(label: &str, start: (u32, u32), end: (u32, u32), periods: Vec<crate::tariff::RatePeriod<f64>>) -> Season<f64> {
    Season {
        label: label.into(),
        start: MonthDay::new(start.0, start.1).expect("valid"),
        end: MonthDay::new(end.0, end.1).expect("valid"),
        periods,
    }
}

fn tou(id: &str, utility: &str, ev: bool, seasons: Vec<Season<f64>>) -> TariffDefinition<f64> {
    TariffDefinition {
        tariff_id: id.into(),
        utility_id: utility.into(),
        kind: TariffKind::Tou,
        is_ev_variant: ev,
        seasons,
        note: None,
    }
}

fn flat_with_note(id: &str, utility: &str, price: f64) -> TariffDefinition<f64> {
    TariffDefinition {
        note: Some("tiered prices flattened to the average residential rate".into()),
        ..flat(id, utility, price)
    }
}

/// Built-in tariffs: standard and (where offered) EV tariffs per utility.
pub fn world_tariffs() -> Vec<TariffDefinition<f64>> {
    let all = DaySet::All;
    let evening = |peak: f64, off: f64| {
        vec![
            period("peak", all, (16, 0), (21, 0), peak),
            period("off-peak", all, (21, 0), (16, 0), off),
        ]
    };
    let ev_day = |peak: f64, part: f64, off: f64| {
        vec![
            period("off-peak", all, (0, 0), (15, 0), off),
            period("part-peak", all, (15, 0), (16, 0), part),
            period("peak", all, (16, 0), (21, 0), peak),
            period("part-peak", all, (21, 0), (24, 0), part),
        ]
    };
    let aps_ev = |on: f64| {
        vec![
            period("super off-peak", DaySet::Weekdays, (23, 0), (5, 0), 0.06),
            period("off-peak", DaySet::Weekdays, (5, 0), (16, 0), 0.12),
            period("on-peak", DaySet::Weekdays, (16, 0), (19, 0), on),
            period("off-peak", DaySet::Weekdays, (19, 0), (23, 0), 0.12),
            period("super off-peak", DaySet::Weekends, (23, 0), (5, 0), 0.06),
            period("off-peak", DaySet::Weekends, (5, 0), (23, 0), 0.12),
        ]
    };
    let consumers = |peak: f64| {
        vec![
            period("peak", DaySet::Weekdays, (14, 0), (19, 0), peak),
            period("off-peak", DaySet::Weekdays, (19, 0), (14, 0), 0.17),
            period("off-peak", DaySet::Weekends, (0, 0), (24, 0), 0.17),
        ]
    };
    vec![
        tou(
            "pge_like_std",
            "pge_like",
            false,
            vec![
                season("summer", (6, 1), (9, 30), evening(0.49, 0.39)),
                season("winter", (10, 1), (5, 31), evening(0.40, 0.37)),
            ],
        ),
        tou(
            "pge_like_ev",
            "pge_like",
            true,
            vec![
                season("summer", (6, 1), (9, 30), ev_day(0.62, 0.51, 0.31)),
                season("winter", (10, 1), (5, 31), ev_day(0.49, 0.47, 0.30)),
            ],
        ),
        flat_with_note("sce_like_std", "sce_like", 0.32),
        flat_with_note("aps_like_std", "aps_like", 0.14),
        tou(
            "aps_like_ev",
            "aps_like",
            true,
            vec![
                season("summer", (5, 1), (10, 31), aps_ev(0.30)),
                season("winter", (11, 1), (4, 30), aps_ev(0.24)),
            ],
        ),
        flat_with_note("midwest_like_std", "midwest_like", 0.13),
        tou(
            "consumers_like_std",
            "consumers_like",
            false,
            vec![
                season("summer", (6, 1), (9, 30), consumers(0.24)),
                season("winter", (10, 1), (5, 31), consumers(0.19)),
            ],
        ),
    ]
}

fn gauss(x: f64, mu: f64, sigma: f64) -> f64 {
    (-0.5 * ((x - mu) / sigma).powi(2)).exp()
}

/// Smooth hour-of-day MOER shape for a region, g/kWh.
fn moer_shape(region: &str, hour: f64, day_of_year: u32) -> f64 {
    let solar = if (6.0..19.0).contains(&hour) { (PI * (hour - 6.0) / 13.0).sin() } else { 0.0 };
    let sunny = 0.75 + 0.25 * (2.0 * PI * (day_of_year as f64 - 172.0) / 365.0).cos();
    match region {
        "caiso_north" => 390.0 - 250.0 * solar * sunny + 70.0 * gauss(hour, 19.5, 1.5),
        "caiso_south" => 410.0 - 470.0 * solar * sunny + 60.0 * gauss(hour, 19.5, 1.5),
        "az" => 470.0 - 210.0 * solar * sunny + 60.0 * gauss(hour, 19.0, 2.0),
        _ => 640.0 + 130.0 * (0.5 + 0.5 * (2.0 * PI * (hour - 2.0) / 24.0).cos()) - 60.0 * solar,
    }
}

/// MOER for every region from two days before `year` to three days after,
/// on a `step_minutes` grid, rounded to 0.1 g/kWh.
pub fn world_moer(year: i32, step_minutes: i64, seed: u64) -> Vec<MoerSeries<f64>> {
    let start = Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).single().expect("valid") - Duration::days(2);
    let end = Utc.with_ymd_and_hms(year + 1, 1, 1, 0, 0, 0).single().expect("valid") + Duration::days(3);
    let step = Duration::minutes(step_minutes);
    let hour_noise = Normal::new(0.0, 20.0).expect("valid");
    let point_noise = Normal::new(0.0, 5.0).expect("valid");
    REGIONS
        .iter()
        .enumerate()
        .map(|(ri, (region, _, tz))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(ri as u64 + 1)));
            let mut points = Vec::new();
            let mut t = start;
            let mut hour_offset = 0.0;
            while t < end {
                if t.minute() == 0 {
                    hour_offset = hour_noise.sample(&mut rng);
                }
                let local = t.with_timezone(tz);
                let hour = local.hour() as f64 + local.minute() as f64 / 60.0;
                let v = moer_shape(region, hour, local.ordinal()) + hour_offset + point_noise.sample(&mut rng);
                points.push((t.fixed_offset(), (v.max(0.0) * 10.0).round() / 10.0));
                t += step;
            }
            MoerSeries::new(*region, step, points).expect("regular grid")
        })
        .collect()
}

fn local_time(tz: Tz, date: NaiveDate, minute_of_day: i64) -> Timestamp {
    let midnight = crate::optimizer::local_midnight(tz, date);
    // walk wall-clock minutes so DST days keep their evening hours
    let naive = date.and_hms_opt(0, 0, 0).expect("midnight") + Duration::minutes(minute_of_day);
    tz.from_local_datetime(&naive)
        .earliest()
        .map(|t| t.fixed_offset())
        .unwrap_or(midnight + Duration::minutes(minute_of_day))
}

fn local_minute(t: &Timestamp, tz: Tz) -> i64 {
    let l = t.with_timezone(&tz);
    (l.hour() * 60 + l.minute()) as i64
}

fn in_peak(t: &Timestamp, tz: Tz) -> bool {
    (16 * 60..21 * 60).contains(&local_minute(t, tz))
}

/// Minute of day for an off-peak charge start, and whether it falls on the
/// following day.
fn off_peak_start(rng: &mut ChaCha8Rng, immediate: bool) -> (i64, bool) {
    let u: f64 = rng.gen();
    if immediate {
        if u < 0.6 {
            (rng.gen_range(21 * 60..24 * 60), false)
        } else if u < 0.7 {
            (rng.gen_range(0..3 * 60), true)
        } else {
            (rng.gen_range(7 * 60..16 * 60), false)
        }
    } else if u < 0.45 {
        (rng.gen_range(21 * 60..24 * 60), false)
    } else if u < 0.85 {
        (rng.gen_range(0..5 * 60), true)
    } else {
        (rng.gen_range(9 * 60..16 * 60), false)
    }
}

fn interval(start: Timestamp, energy_kwh: f64, power_kw: f64) -> ChargingInterval<f64> {
    let seconds = (energy_kwh / power_kw * 3600.0).ceil() as i64;
    ChargingInterval::new(start, start + Duration::seconds(seconds.max(1)), energy_kwh)
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

struct Draft {
    plug_in: Timestamp,
    plug_out: Timestamp,
    intervals: Vec<ChargingInterval<f64>>,
}

fn session(
    rng: &mut ChaCha8Rng,
    p: &SynthParams,
    tz: Tz,
    day: NaiveDate,
    energy: f64,
    rated: f64,
    plug_hours: &Normal<f64>,
) -> Draft {
    let p_first_peak = p.peak_start_fraction * (1.0 + p.split_fraction);
    let peak = rng.gen::<f64>() < p_first_peak;
    let immediate = rng.gen::<f64>() < p.immediate_start_fraction;
    let (minute, next_day) = if peak {
        (rng.gen_range(16 * 60..21 * 60), false)
    } else {
        off_peak_start(rng, immediate)
    };
    let date = if next_day { day.succ_opt().expect("date in range") } else { day };
    let charge_start = local_time(tz, date, minute) + Duration::seconds(rng.gen_range(0..60));
    let delay = if immediate {
        if rng.gen::<f64>() < 0.7 { 0 } else { rng.gen_range(1..=300) }
    } else {
        rng.gen_range(30 * 60..=5 * 3600)
    };
    let plug_in = charge_start - Duration::seconds(delay);

    let power = rated * rng.gen_range(0.85..1.0);
    let mut intervals = Vec::new();
    if rng.gen::<f64>() < p.split_fraction && energy > 2.0 {
        let first = round3(energy * rng.gen_range(0.3..0.7));
        let a = interval(charge_start, first, power);
        let mut second_start = a.end + Duration::minutes(rng.gen_range(10..120));
        if in_peak(&second_start, tz) {
            let local_date = second_start.with_timezone(&tz).date_naive();
            second_start = local_time(tz, local_date, 21 * 60) + Duration::minutes(rng.gen_range(0..45));
        }
        let b = interval(second_start, round3(energy - first), power);
        intervals.push(a);
        intervals.push(b);
    } else {
        intervals.push(interval(charge_start, energy, power));
    }

    let charge_end = intervals.last().expect("non-empty").end;
    let hours = plug_hours.sample(rng).clamp(1.0, 30.0);
    let mut plug_out = plug_in + Duration::seconds((hours * 3600.0) as i64);
    let min_out = charge_end + Duration::minutes(rng.gen_range(5..60));
    if plug_out < min_out {
        plug_out = min_out;
    }
    Draft {
        plug_in,
        plug_out,
        intervals,
    }
}

fn shift(d: &mut Draft, by: Duration) {
    d.plug_in += by;
    d.plug_out += by;
    for i in &mut d.intervals {
        i.start += by;
        i.end += by;
    }
}

/// Generates a fleet. The same parameters always give the same output.
pub fn generate_synthetic_fleet(p: &SynthParams) -> Result<SyntheticFleet, SynthError> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let catalog = world_catalog();
    let days_in_year = NaiveDate::from_ymd_opt(p.year, 12, 31).expect("valid").ordinal() as usize;
    let sessions_dist = Gamma::new(p.sessions_shape, p.mean_sessions_per_vehicle / p.sessions_shape).expect("validated");
    let mean_session_kwh = p.mean_daily_energy_kwh * days_in_year as f64 / p.mean_sessions_per_vehicle;
    let energy_dist = Gamma::new(p.energy_shape, mean_session_kwh / p.energy_shape).expect("validated");
    let plug_hours = Normal::new(p.plug_duration_mean_hours, p.plug_duration_sd_hours).expect("validated");
    let weights: Vec<f64> = p.utility_mix.iter().map(|(_, w)| *w).collect();
    let utility_pick = rand_distr::WeightedIndex::new(&weights).map_err(|e| SynthError::InvalidParams(e.to_string()))?;

    let mut windows = Vec::new();
    for v in 0..p.vehicles {
        let vehicle_id = format!("veh-{v:05}");
        let utility = spec(&p.utility_mix[utility_pick.sample(&mut rng)].0);
        let rated = CHARGER_RATINGS_KW[rng.gen_range(0..CHARGER_RATINGS_KW.len())];
        let n = (sessions_dist.sample(&mut rng).round() as usize).clamp(30.min(days_in_year), days_in_year);
        let mean_kwh = energy_dist.sample(&mut rng).max(1.0);
        let mut days = index::sample(&mut rng, days_in_year, n).into_vec();
        days.sort_unstable();
        let factors: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
        let factor_mean = factors.iter().sum::<f64>() / n as f64;

        let mut drafts: Vec<Draft> = Vec::with_capacity(n);
        for (k, d) in days.iter().enumerate() {
            let date = NaiveDate::from_yo_opt(p.year, *d as u32 + 1).expect("valid day");
            let energy = round3((mean_kwh * factors[k] / factor_mean).clamp(0.5, MAX_SESSION_KWH));
            let mut draft = session(&mut rng, p, utility.tz, date, energy, rated, &plug_hours);
            if let Some(prev) = drafts.last_mut() {
                let gap = Duration::minutes(10);
                let prev_charge_end = prev.intervals.last().expect("non-empty").end;
                if prev.plug_out + gap > draft.plug_in {
                    prev.plug_out = (draft.plug_in - gap).max(prev_charge_end + Duration::minutes(5));
                }
                if prev.plug_out + gap > draft.plug_in {
                    let by = prev.plug_out + gap - draft.plug_in;
                    shift(&mut draft, by);
                }
            }
            drafts.push(draft);
        }

        for (k, d) in drafts.into_iter().enumerate() {
            let declared = rng.gen::<f64>() >= p.missing_rating_fraction;
            windows.push(WindowRecord {
                window_id: format!("{vehicle_id}-{k:04}"),
                vehicle_id: vehicle_id.clone(),
                utility_id: utility.id.into(),
                region_id: utility.region.into(),
                plug_in: d.plug_in,
                plug_out: d.plug_out,
                intervals: d.intervals,
                rated_power_kw: declared.then_some(rated),
            });
        }
    }

    Ok(SyntheticFleet {
        catalog,
        tariffs: world_tariffs(),
        moer: world_moer(p.year, p.moer_step_minutes, p.seed),
        windows,
    })
}
