//! Baseline accounting, per-window outcomes, per-vehicle and fleet
//! aggregation, and charging behavior statistics.

use std::collections::BTreeMap;

use chrono::{Duration, Timelike};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Catalog, PlugInWindow, TimeRange, Timestamp};
use crate::moer::{HourlyMoer, MoerError};
use crate::num::Scalar;
use crate::optimizer::local_days;
use crate::profile::ChargingProfile;
use crate::tariff::{billing_tariff, BillingScenario, MinuteOfDay, TariffBook, TariffError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("percent reduction is undefined for a zero baseline")]
    ZeroBaseline,
    #[error("no outcomes to summarize")]
    EmptyOutcomeList,
    #[error("utility {0} not in catalog")]
    UnknownUtility(String),
    #[error(transparent)]
    Tariff(#[from] TariffError),
    #[error(transparent)]
    Moer(#[from] MoerError),
}

/// `100 * (baseline - optimized) / baseline`. Negative when the optimized
/// value is worse.
pub fn percent_reduction<S: Scalar>(baseline: S, optimized: S) -> Result<S, AnalyticsError> {
    if baseline == S::zero() {
        return Err(AnalyticsError::ZeroBaseline);
    }
    Ok(S::from_i64(100).expect("fits") * (baseline - optimized) / baseline)
}

/// Cost of the observed charging on the standard tariff and its emissions.
pub fn baseline_accounting<S: Scalar>(
    window: &PlugInWindow<S>,
    catalog: &Catalog,
    book: &TariffBook<S>,
    hourly: &HourlyMoer<S>,
) -> Result<(S, S), AnalyticsError> {
    let utility = catalog
        .utility(window.utility_id())
        .ok_or_else(|| AnalyticsError::UnknownUtility(window.utility_id().to_string()))?;
    let tariff = billing_tariff(utility, BillingScenario::Baseline, book)?;
    let observed = ChargingProfile::from_intervals(window.intervals());
    Ok((tariff.cost_of(&observed), hourly.emissions_of(&observed)?))
}

/// Baseline vs optimized results for one plug-in window. Scenario fields are
/// `None` when that scenario was not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome<S> {
    pub window_id: String,
    pub vehicle_id: String,
    pub utility_id: String,
    pub region_id: String,
    pub plug_in: Timestamp,
    pub plug_out: Timestamp,
    pub demand_kwh: S,
    pub baseline_tariff_id: String,
    pub billing_tariff_id: String,
    /// The optimized scenarios bill on a different tariff than the baseline.
    pub tariff_switched: bool,
    /// The optimized scenarios bill on a time-of-use tariff.
    pub has_tou: bool,
    pub baseline_cost_usd: S,
    pub baseline_emissions_kg: S,
    pub constrained_cost_usd: Option<S>,
    pub constrained_emissions_kg: Option<S>,
    pub unconstrained_cost_usd: Option<S>,
    pub unconstrained_emissions_kg: Option<S>,
    pub cost_increased: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSummary<S> {
    pub vehicle_id: String,
    pub utility_id: String,
    pub has_tou: bool,
    pub sessions: usize,
    pub observed_days: f64,
    /// Fewer observed days than the annualization threshold.
    pub partial: bool,
    pub baseline_cost_usd: S,
    pub baseline_emissions_kg: S,
    pub constrained_cost_usd: Option<S>,
    pub constrained_emissions_kg: Option<S>,
    pub unconstrained_cost_usd: Option<S>,
    pub unconstrained_emissions_kg: Option<S>,
    pub pct_cost_reduction_constrained: Option<S>,
    pub pct_cost_reduction_unconstrained: Option<S>,
    pub pct_emissions_reduction_constrained: Option<S>,
    pub pct_emissions_reduction_unconstrained: Option<S>,
    pub annual_savings_usd_constrained: Option<S>,
    pub annual_savings_usd_unconstrained: Option<S>,
    pub annual_emissions_reduction_kg_constrained: Option<S>,
    pub annual_emissions_reduction_kg_unconstrained: Option<S>,
}

fn total<S: Scalar>(values: impl Iterator<Item = Option<S>>) -> Option<S> {
    values.fold(Some(S::zero()), |acc, v| Some(acc? + v?))
}

/// Local calendar days from the first plug-in to the last plug-out, inclusive.
pub fn observed_days(ranges: impl IntoIterator<Item = TimeRange>, tz: Tz) -> f64 {
    let span = ranges.into_iter().map(|r| local_days(&r, tz)).reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)));
    span.map_or(0.0, |(a, b)| ((b - a).num_days() + 1) as f64)
}

/// Totals a vehicle's outcomes and derives its percent reductions from those
/// totals. Absolute savings are scaled to a year only when at least
/// `annualize_min_days` days were observed.
pub fn summarize_vehicle<S: Scalar>(
    outcomes: &[SessionOutcome<S>],
    observed_days: f64,
    annualize_min_days: f64,
) -> Result<VehicleSummary<S>, AnalyticsError> {
    let first = outcomes.first().ok_or(AnalyticsError::EmptyOutcomeList)?;
    let mut counts: BTreeMap<&str, (usize, bool)> = BTreeMap::new();
    for o in outcomes {
        let e = counts.entry(&o.utility_id).or_insert((0, o.has_tou));
        e.0 += 1;
    }
    let (utility_id, (_, has_tou)) = counts
        .iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.0.cmp(a.0)))
        .map(|(k, v)| (k.to_string(), *v))
        .expect("non-empty");

    let baseline_cost = crate::num::sum(outcomes.iter().map(|o| o.baseline_cost_usd));
    let baseline_emissions = crate::num::sum(outcomes.iter().map(|o| o.baseline_emissions_kg));
    let cc = total(outcomes.iter().map(|o| o.constrained_cost_usd));
    let ce = total(outcomes.iter().map(|o| o.constrained_emissions_kg));
    let uc = total(outcomes.iter().map(|o| o.unconstrained_cost_usd));
    let ue = total(outcomes.iter().map(|o| o.unconstrained_emissions_kg));

    let pct = |base: S, opt: Option<S>| opt.and_then(|o| percent_reduction(base, o).ok());
    let partial = observed_days < annualize_min_days || observed_days <= 0.0;
    let scale = S::from_f64_lossy(365.0) / S::from_f64_lossy(observed_days.max(1.0));
    let annual = |base: S, opt: Option<S>| {
        if partial {
            None
        } else {
            opt.map(|o| (base - o) * scale)
        }
    };

    Ok(VehicleSummary {
        vehicle_id: first.vehicle_id.clone(),
        utility_id,
        has_tou,
        sessions: outcomes.len(),
        observed_days,
        partial,
        baseline_cost_usd: baseline_cost,
        baseline_emissions_kg: baseline_emissions,
        constrained_cost_usd: cc,
        constrained_emissions_kg: ce,
        unconstrained_cost_usd: uc,
        unconstrained_emissions_kg: ue,
        pct_cost_reduction_constrained: pct(baseline_cost, cc),
        pct_cost_reduction_unconstrained: pct(baseline_cost, uc),
        pct_emissions_reduction_constrained: pct(baseline_emissions, ce),
        pct_emissions_reduction_unconstrained: pct(baseline_emissions, ue),
        annual_savings_usd_constrained: annual(baseline_cost, cc),
        annual_savings_usd_unconstrained: annual(baseline_cost, uc),
        annual_emissions_reduction_kg_constrained: annual(baseline_emissions, ce),
        annual_emissions_reduction_kg_unconstrained: annual(baseline_emissions, ue),
    })
}

/// Summary statistics of a sample. Quantiles interpolate linearly between
/// order statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub p10: f64,
    pub p25: f64,
    pub p75: f64,
    pub p90: f64,
    pub max: f64,
}

impl Distribution {
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Self {
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: q(0.5),
            min: v[0],
            p10: q(0.1),
            p25: q(0.25),
            p75: q(0.75),
            p90: q(0.9),
            max: v[v.len() - 1],
        })
    }
}

/// Metrics for one vehicle group. Cost metrics are only filled for vehicles
/// billed on time-of-use tariffs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub vehicles: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_reduction_pct_constrained: Option<Distribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_reduction_pct_unconstrained: Option<Distribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emissions_reduction_pct_constrained: Option<Distribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emissions_reduction_pct_unconstrained: Option<Distribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annual_savings_usd_constrained: Option<Distribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annual_savings_usd_unconstrained: Option<Distribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annual_emissions_reduction_kg_constrained: Option<Distribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annual_emissions_reduction_kg_unconstrained: Option<Distribution>,
    /// Percent reductions of the group's summed totals (ratio of sums).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub totals_cost_reduction_pct_constrained: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub totals_cost_reduction_pct_unconstrained: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub totals_emissions_reduction_pct_constrained: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub totals_emissions_reduction_pct_unconstrained: Option<f64>,
}

impl GroupStats {
    pub fn from_vehicles<S: Scalar>(vehicles: &[&VehicleSummary<S>], with_cost: bool) -> Self {
        let dist = |f: &dyn Fn(&VehicleSummary<S>) -> Option<S>| {
            Distribution::from_values(vehicles.iter().filter_map(|v| f(v)).map(|x| x.to_f64_lossy()))
        };
        let totals_pct = |base: &dyn Fn(&VehicleSummary<S>) -> S, opt: &dyn Fn(&VehicleSummary<S>) -> Option<S>| {
            let b: f64 = vehicles.iter().map(|v| base(v).to_f64_lossy()).sum();
            let o: Option<f64> = vehicles
                .iter()
                .map(|v| opt(v).map(|x| x.to_f64_lossy()))
                .sum();
            o.and_then(|o| percent_reduction(b, o).ok()).filter(|_| !vehicles.is_empty())
        };
        let cost = |d: Option<Distribution>| if with_cost { d } else { None };
        let cost_total = |t: Option<f64>| if with_cost { t } else { None };
        Self {
            vehicles: vehicles.len(),
            cost_reduction_pct_constrained: cost(dist(&|v| v.pct_cost_reduction_constrained)),
            cost_reduction_pct_unconstrained: cost(dist(&|v| v.pct_cost_reduction_unconstrained)),
            emissions_reduction_pct_constrained: dist(&|v| v.pct_emissions_reduction_constrained),
            emissions_reduction_pct_unconstrained: dist(&|v| v.pct_emissions_reduction_unconstrained),
            annual_savings_usd_constrained: cost(dist(&|v| v.annual_savings_usd_constrained)),
            annual_savings_usd_unconstrained: cost(dist(&|v| v.annual_savings_usd_unconstrained)),
            annual_emissions_reduction_kg_constrained: dist(&|v| v.annual_emissions_reduction_kg_constrained),
            annual_emissions_reduction_kg_unconstrained: dist(&|v| v.annual_emissions_reduction_kg_unconstrained),
            totals_cost_reduction_pct_constrained: cost_total(totals_pct(&|v| v.baseline_cost_usd, &|v| v.constrained_cost_usd)),
            totals_cost_reduction_pct_unconstrained: cost_total(totals_pct(&|v| v.baseline_cost_usd, &|v| v.unconstrained_cost_usd)),
            totals_emissions_reduction_pct_constrained: totals_pct(&|v| v.baseline_emissions_kg, &|v| v.constrained_emissions_kg),
            totals_emissions_reduction_pct_unconstrained: totals_pct(&|v| v.baseline_emissions_kg, &|v| v.unconstrained_emissions_kg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitySummary {
    pub utility_id: String,
    pub has_tou: bool,
    #[serde(flatten)]
    pub stats: GroupStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetReport {
    pub vehicles: usize,
    pub tou: GroupStats,
    pub flat: GroupStats,
    pub sessions: usize,
    pub tou_sessions: usize,
    /// Time-of-use sessions whose constrained cost exceeds the baseline.
    pub tou_sessions_cost_increased: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub fleet: FleetReport,
    pub utilities: Vec<UtilitySummary>,
    /// Utilities dropped for having fewer vehicles than the reporting minimum.
    pub excluded_utilities: BTreeMap<String, usize>,
}

/// Splits vehicles by whether they bill on a time-of-use tariff and reports
/// per-split and per-utility statistics. Utilities with fewer than
/// `min_vehicles_per_utility` vehicles are excluded entirely.
pub fn aggregate<S: Scalar>(
    summaries: &[VehicleSummary<S>],
    outcomes: &[SessionOutcome<S>],
    min_vehicles_per_utility: usize,
) -> Aggregate {
    let mut by_utility: BTreeMap<&str, Vec<&VehicleSummary<S>>> = BTreeMap::new();
    for v in summaries {
        by_utility.entry(&v.utility_id).or_default().push(v);
    }
    let mut excluded = BTreeMap::new();
    let mut kept: Vec<&VehicleSummary<S>> = Vec::new();
    let mut utilities = Vec::new();
    for (utility, vs) in &by_utility {
        if vs.len() < min_vehicles_per_utility {
            excluded.insert(utility.to_string(), vs.len());
            continue;
        }
        kept.extend(vs.iter().copied());
        let has_tou = vs.iter().any(|v| v.has_tou);
        utilities.push(UtilitySummary {
            utility_id: utility.to_string(),
            has_tou,
            stats: GroupStats::from_vehicles(vs, has_tou),
        });
    }
    let (tou, flat): (Vec<_>, Vec<_>) = kept.iter().partition(|v| v.has_tou);
    let kept_vehicles: std::collections::BTreeSet<&str> = kept.iter().map(|v| v.vehicle_id.as_str()).collect();
    let sessions: Vec<_> = outcomes
        .iter()
        .filter(|o| kept_vehicles.contains(o.vehicle_id.as_str()))
        .collect();
    Aggregate {
        fleet: FleetReport {
            vehicles: kept.len(),
            tou: GroupStats::from_vehicles(&tou, true),
            flat: GroupStats::from_vehicles(&flat, false),
            sessions: sessions.len(),
            tou_sessions: sessions.iter().filter(|o| o.has_tou).count(),
            tou_sessions_cost_increased: sessions.iter().filter(|o| o.has_tou && o.cost_increased).count(),
        },
        utilities,
        excluded_utilities: excluded,
    }
}

/// Local wall-clock interval `[start, end)`, wrapping past midnight when
/// `end < start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyWindow {
    pub start: MinuteOfDay,
    pub end: MinuteOfDay,
}

impl DailyWindow {
    pub fn evening_peak() -> Self {
        Self {
            start: MinuteOfDay::hm(16, 0),
            end: MinuteOfDay::hm(21, 0),
        }
    }

    pub fn contains(&self, t: &Timestamp, tz: Tz) -> bool {
        let local = t.with_timezone(&tz);
        let m = (local.hour() * 60 + local.minute()) as u16;
        let (s, e) = (self.start.minutes(), self.end.minutes());
        if s <= e {
            s <= m && m < e
        } else {
            m >= s || m < e
        }
    }
}

/// Per-window behavior record, exported for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowBehavior {
    pub window_id: String,
    pub vehicle_id: String,
    pub utility_id: String,
    pub plug_in_local_hour: u32,
    pub plug_hours: f64,
    pub charging_hours: f64,
    pub utilization: f64,
    pub energy_kwh: f64,
    pub intervals: usize,
    pub immediate_start: bool,
    pub peak_interval_starts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorStats {
    pub windows: usize,
    pub intervals: usize,
    pub vehicles: usize,
    pub immediate_start_share: f64,
    pub peak_start_share: f64,
    pub plug_duration_hours: Option<Distribution>,
    pub charging_utilization: Option<Distribution>,
    pub sessions_per_vehicle: Option<Distribution>,
    pub daily_energy_per_vehicle_kwh: Option<Distribution>,
}

/// Behavior statistics over validated windows. A window starts immediately
/// when its first interval begins within `immediate_threshold` of plug-in;
/// peak share counts charging intervals that start inside `peak`.
pub fn behavior_stats<S: Scalar>(
    windows: &[PlugInWindow<S>],
    catalog: &Catalog,
    immediate_threshold: Duration,
    peak: DailyWindow,
) -> (BehaviorStats, Vec<WindowBehavior>) {
    let tz_of = |w: &PlugInWindow<S>| {
        catalog
            .utility(w.utility_id())
            .map(|u| u.timezone)
            .unwrap_or(chrono_tz::UTC)
    };
    let rows: Vec<WindowBehavior> = windows
        .iter()
        .map(|w| {
            let tz = tz_of(w);
            let plug = w.plugged_hours().to_f64_lossy();
            let charging = w.charging_hours().to_f64_lossy();
            WindowBehavior {
                window_id: w.window_id().to_string(),
                vehicle_id: w.vehicle_id().to_string(),
                utility_id: w.utility_id().to_string(),
                plug_in_local_hour: w.plug_in().with_timezone(&tz).hour(),
                plug_hours: plug,
                charging_hours: charging,
                utilization: charging / plug,
                energy_kwh: w.demand_kwh().to_f64_lossy(),
                intervals: w.intervals().len(),
                immediate_start: w.intervals()[0].start - w.plug_in() <= immediate_threshold,
                peak_interval_starts: w.intervals().iter().filter(|i| peak.contains(&i.start, tz)).count(),
            }
        })
        .collect();

    let mut by_vehicle: BTreeMap<&str, Vec<&PlugInWindow<S>>> = BTreeMap::new();
    for w in windows {
        by_vehicle.entry(w.vehicle_id()).or_default().push(w);
    }
    let daily_energy = by_vehicle.values().map(|ws| {
        let days = observed_days(ws.iter().map(|w| w.range()), tz_of(ws[0]));
        let energy: f64 = ws.iter().map(|w| w.demand_kwh().to_f64_lossy()).sum();
        energy / days
    });

    let n = rows.len().max(1) as f64;
    let intervals: usize = rows.iter().map(|r| r.intervals).sum();
    let stats = BehaviorStats {
        windows: rows.len(),
        intervals,
        vehicles: by_vehicle.len(),
        immediate_start_share: rows.iter().filter(|r| r.immediate_start).count() as f64 / n,
        peak_start_share: rows.iter().map(|r| r.peak_interval_starts).sum::<usize>() as f64 / intervals.max(1) as f64,
        plug_duration_hours: Distribution::from_values(rows.iter().map(|r| r.plug_hours)),
        charging_utilization: Distribution::from_values(rows.iter().map(|r| r.utilization)),
        sessions_per_vehicle: Distribution::from_values(by_vehicle.values().map(|ws| ws.len() as f64)),
        daily_energy_per_vehicle_kwh: Distribution::from_values(daily_energy),
    };
    (stats, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::tests::{catalog, record, ts};
    use crate::domain::validate_window;
    use crate::tariff::shapes::{flat, two_period};
    use crate::tariff::TariffSchedule;
    use chrono_tz::America::Los_Angeles;
    use proptest::prelude::*;

    fn outcome(vehicle: &str, base: f64, constrained: f64) -> SessionOutcome<f64> {
        SessionOutcome {
            window_id: format!("{vehicle}-{base}-{constrained}"),
            vehicle_id: vehicle.into(),
            utility_id: "u1".into(),
            region_id: "r1".into(),
            plug_in: ts("2023-07-10T18:00:00-07:00"),
            plug_out: ts("2023-07-11T06:00:00-07:00"),
            demand_kwh: 10.0,
            baseline_tariff_id: "std".into(),
            billing_tariff_id: "ev".into(),
            tariff_switched: true,
            has_tou: true,
            baseline_cost_usd: base,
            baseline_emissions_kg: 5.0,
            constrained_cost_usd: Some(constrained),
            constrained_emissions_kg: Some(4.0),
            unconstrained_cost_usd: None,
            unconstrained_emissions_kg: None,
            cost_increased: constrained > base,
        }
    }

    #[test]
    fn percent_reduction_examples() {
        assert!((percent_reduction(100.0f64, 78.5).unwrap() - 21.5).abs() < 1e-12);
        assert_eq!(percent_reduction(7.0f64, 7.0).unwrap(), 0.0);
        assert_eq!(percent_reduction(50.0f64, 60.0).unwrap(), -20.0);
        assert_eq!(percent_reduction(0.0f64, 1.0), Err(AnalyticsError::ZeroBaseline));
    }

    #[test]
    fn baseline_examples() {
        let cat = catalog();
        let hourly = HourlyMoer::from_hours(
            "r1",
            &(0..24).map(|h| (ts("2023-07-10T00:00:00-07:00") + Duration::hours(h), 400.0)).collect::<Vec<_>>(),
        );
        let book = TariffBook::new([TariffSchedule::new(flat("std", "u1", 0.10), Los_Angeles).unwrap()]);
        let w = validate_window(
            record("2023-07-10T01:00:00-07:00", "2023-07-10T03:00:00-07:00", &[("2023-07-10T01:00:00-07:00", "2023-07-10T02:00:00-07:00", 10.0)], None),
            &cat,
        )
        .unwrap();
        let (cost, kg) = baseline_accounting(&w, &cat, &book, &hourly).unwrap();
        assert!((cost - 1.0).abs() < 1e-12 && (kg - 4.0).abs() < 1e-12);

        let book = TariffBook::new([TariffSchedule::new(two_period("std", "u1", 0.25, 0.55, (16, 0), (21, 0)), Los_Angeles).unwrap()]);
        let w = validate_window(
            record(
                "2023-07-10T14:00:00-07:00",
                "2023-07-10T19:00:00-07:00",
                &[("2023-07-10T15:00:00-07:00", "2023-07-10T16:00:00-07:00", 4.0), ("2023-07-10T16:00:00-07:00", "2023-07-10T17:30:00-07:00", 6.0)],
                None,
            ),
            &cat,
        )
        .unwrap();
        let (cost, _) = baseline_accounting(&w, &cat, &book, &hourly).unwrap();
        assert!((cost - 4.30).abs() < 1e-12);
    }

    #[test]
    fn summarize_uses_totals() {
        let s = summarize_vehicle(&[outcome("v", 10.0, 8.0)], 365.0, 90.0).unwrap();
        assert!((s.pct_cost_reduction_constrained.unwrap() - 20.0).abs() < 1e-12);
        let s = summarize_vehicle(&[outcome("v", 10.0, 8.0), outcome("v", 10.0, 12.0)], 365.0, 90.0).unwrap();
        assert_eq!(s.pct_cost_reduction_constrained.unwrap(), 0.0);
        assert_eq!(s.pct_cost_reduction_unconstrained, None);
        assert_eq!(summarize_vehicle::<f64>(&[], 1.0, 1.0), Err(AnalyticsError::EmptyOutcomeList));
    }

    #[test]
    fn annualization() {
        // 70 USD saved over 183 days
        let s = summarize_vehicle(&[outcome("v", 100.0, 30.0)], 183.0, 90.0).unwrap();
        let expected = 70.0 * 365.0 / 183.0;
        assert!((s.annual_savings_usd_constrained.unwrap() - expected).abs() < 1e-9);
        assert!((expected - 139.617).abs() < 1e-3);
        assert!(!s.partial);
        let s = summarize_vehicle(&[outcome("v", 100.0, 30.0)], 183.0, 200.0).unwrap();
        assert!(s.partial);
        assert_eq!(s.annual_savings_usd_constrained, None);
    }

    #[test]
    fn aggregate_examples() {
        let v1 = summarize_vehicle(&[outcome("a", 10.0, 9.0)], 365.0, 90.0).unwrap();
        let v2 = summarize_vehicle(&[outcome("b", 10.0, 7.0)], 365.0, 90.0).unwrap();
        let agg = aggregate(&[v1.clone(), v2], &[], 1);
        let d = agg.fleet.tou.cost_reduction_pct_constrained.unwrap();
        assert!((d.mean - 20.0).abs() < 1e-12 && (d.median - 20.0).abs() < 1e-12);

        let one = aggregate(&[v1.clone()], &[], 1);
        let d = one.fleet.tou.cost_reduction_pct_constrained.unwrap();
        assert_eq!(d.mean, d.median);

        let mut flat_v = v1;
        flat_v.has_tou = false;
        let agg = aggregate(&[flat_v], &[], 1);
        assert!(agg.fleet.flat.cost_reduction_pct_constrained.is_none());
        assert!(agg.fleet.flat.emissions_reduction_pct_constrained.is_some());
        assert!(agg.utilities[0].stats.annual_savings_usd_constrained.is_none());

        let agg = aggregate(&[summarize_vehicle(&[outcome("a", 10.0, 9.0)], 365.0, 90.0).unwrap()], &[], 100);
        assert_eq!(agg.fleet.vehicles, 0);
        assert_eq!(agg.excluded_utilities["u1"], 1);
    }

    #[test]
    fn behavior_examples() {
        let cat = catalog();
        let w = validate_window(
            record("2023-07-10T11:00:00-07:00", "2023-07-10T21:00:00-07:00", &[("2023-07-10T11:00:00-07:00", "2023-07-10T16:00:00-07:00", 20.0)], None),
            &cat,
        )
        .unwrap();
        let (stats, rows) = behavior_stats(&[w], &cat, Duration::minutes(15), DailyWindow::evening_peak());
        assert_eq!(stats.immediate_start_share, 1.0);
        assert_eq!(rows[0].utilization, 0.5);
        assert_eq!(stats.peak_start_share, 0.0);

        let peak = DailyWindow::evening_peak();
        assert!(peak.contains(&ts("2023-07-10T16:00:00-07:00"), Los_Angeles));
        assert!(!peak.contains(&ts("2023-07-10T21:00:00-07:00"), Los_Angeles));
        assert!(peak.contains(&ts("2023-07-10T20:59:59-07:00"), Los_Angeles));
    }

    proptest! {
        #[test]
        fn percent_reduction_scale_invariant(b in 0.01f64..1e4, o in 0.0f64..1e4, k in 0.001f64..1e3) {
            let p = percent_reduction(b, o).unwrap();
            let q = percent_reduction(b * k, o * k).unwrap();
            prop_assert!((p - q).abs() <= 1e-9 * p.abs().max(1.0));
        }
    }
}
