//! Retrospective charging optimization.
//!
//! A feasible region is cut into slots whose price and MOER are constant, and
//! demand is poured into the slots in lexicographic order: cheapest first, then
//! cleanest, then earliest. This is a fractional knapsack with a two-level
//! objective, so the greedy fill is exact. [`oracle_optimize`] enumerates every
//! vertex of the same problem for verification.

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{span_hours, span_nanos, PlugInWindow, TimeRange, Timestamp};
use crate::moer::{hour_boundaries, HourlyMoer, MoerError};
use crate::num::{le_tol, sum, Scalar};
use crate::profile::{ChargingProfile, Segment};
use crate::tariff::TariffSchedule;

/// Default slot length in minutes.
pub const DEFAULT_SLOT_MINUTES: i64 = 15;

/// Largest instance [`oracle_optimize`] accepts.
pub const ORACLE_MAX_SLOTS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Slot<S> {
    pub start: Timestamp,
    pub end: Timestamp,
    pub price_usd_per_kwh: S,
    pub moer_g_per_kwh: S,
    pub capacity_kwh: S,
}

impl<S: Scalar> Slot<S> {
    pub fn range(&self) -> TimeRange {
        TimeRange::new(self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Only inside the observed plug-in window.
    Constrained,
    /// Anywhere within the local calendar day(s) the window touches.
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("demand {demand} kWh exceeds slot capacity {capacity} kWh")]
    InfeasibleDemand { demand: f64, capacity: f64 },
    #[error("demand must be finite and non-negative, got {0}")]
    InvalidDemand(f64),
    #[error("oracle supports at most {ORACLE_MAX_SLOTS} slots, got {0}")]
    TooManySlots(usize),
    #[error("slot length must be positive, at most one hour, and divide one hour (got {0}s)")]
    InvalidSlotLength(i64),
    #[error("feasible region is empty")]
    EmptyRegion,
    #[error(transparent)]
    Moer(#[from] MoerError),
}

/// Cuts `region` at every `slot_len` grid line (aligned to the Unix epoch),
/// every tariff price change and every clock hour, then prices each slot.
pub fn build_slots<S: Scalar>(
    region: &TimeRange,
    rated_power_kw: S,
    tariff: &TariffSchedule<S>,
    hourly: &HourlyMoer<S>,
    slot_len: Duration,
) -> Result<Vec<Slot<S>>, OptimizeError> {
    let len = slot_len.num_seconds();
    if len <= 0 || len > 3600 || 3600 % len != 0 || slot_len != Duration::seconds(len) {
        return Err(OptimizeError::InvalidSlotLength(len));
    }
    if region.start >= region.end {
        return Err(OptimizeError::EmptyRegion);
    }

    let first = region.start.timestamp().div_euclid(len) + 1;
    let last = region.end.timestamp().div_euclid(len);
    let mut cuts: Vec<Timestamp> = (first..=last)
        .map(|k| Utc.timestamp_opt(k * len, 0).single().expect("in range").fixed_offset())
        .filter(|t| *t > region.start && *t < region.end)
        .collect();
    cuts.extend(tariff.change_points(region));
    cuts.extend(hour_boundaries(region));
    cuts.push(region.start);
    cuts.push(region.end);
    cuts.sort();
    cuts.dedup();

    cuts.windows(2)
        .map(|w| {
            let (start, end) = (w[0], w[1]);
            let mid = start + (end - start) / 2;
            Ok(Slot {
                start,
                end,
                price_usd_per_kwh: tariff.rate_at(&mid),
                moer_g_per_kwh: hourly.moer_at(&mid)?,
                capacity_kwh: rated_power_kw * span_hours::<S>(&start, &end),
            })
        })
        .collect()
}

/// Lexicographic objective of an allocation: `(cost USD, emissions kg)`.
pub fn objective<S: Scalar>(slots: &[Slot<S>], allocation: &[S]) -> (S, S) {
    let cost = sum(slots.iter().zip(allocation).map(|(s, e)| *e * s.price_usd_per_kwh));
    let grams = sum(slots.iter().zip(allocation).map(|(s, e)| *e * s.moer_g_per_kwh));
    (cost, grams / S::from_i64(1000).expect("fits"))
}

fn check_demand<S: Scalar>(demand: S, slots: &[Slot<S>]) -> Result<(), OptimizeError> {
    if !demand.is_finite_value() || demand < S::zero() {
        return Err(OptimizeError::InvalidDemand(demand.to_f64_lossy()));
    }
    let capacity = sum(slots.iter().map(|s| s.capacity_kwh));
    if !le_tol(demand, capacity) {
        return Err(OptimizeError::InfeasibleDemand {
            demand: demand.to_f64_lossy(),
            capacity: capacity.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Energy per slot from the greedy fill.
pub fn allocate<S: Scalar>(demand: S, slots: &[Slot<S>]) -> Result<Vec<S>, OptimizeError> {
    check_demand(demand, slots)?;
    let mut order: Vec<usize> = (0..slots.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&slots[a], &slots[b]);
        x.price_usd_per_kwh
            .total_cmp_value(&y.price_usd_per_kwh)
            .then(x.moer_g_per_kwh.total_cmp_value(&y.moer_g_per_kwh))
            .then(x.start.cmp(&y.start))
    });

    let mut allocation = vec![S::zero(); slots.len()];
    let mut remaining = demand;
    for idx in order {
        if remaining <= S::zero() {
            break;
        }
        let cap = slots[idx].capacity_kwh;
        if cap <= S::zero() {
            continue;
        }
        let take = remaining.min_value(cap);
        allocation[idx] = take;
        remaining = remaining - take;
    }
    Ok(allocation)
}

/// Turns per-slot energy into a schedule. Partially used slots charge at
/// rated power from the slot start.
pub fn profile_from_allocation<S: Scalar>(slots: &[Slot<S>], allocation: &[S]) -> ChargingProfile<S> {
    let segments = slots
        .iter()
        .zip(allocation)
        .filter(|(_, e)| **e > S::zero())
        .map(|(slot, e)| {
            if *e >= slot.capacity_kwh {
                return Segment::new(slot.start, slot.end, *e);
            }
            let slot_ns = span_nanos(&slot.start, &slot.end);
            let fraction = (*e / slot.capacity_kwh).to_f64_lossy();
            let ns = ((slot_ns as f64 * fraction).ceil() as i64).clamp(1, slot_ns);
            Segment::new(slot.start, slot.start + Duration::nanoseconds(ns), *e)
        })
        .collect();
    ChargingProfile::new(segments)
}

/// Greedy lexicographic fill: no feasible schedule is cheaper, and none as
/// cheap emits less.
pub fn optimize<S: Scalar>(demand: S, slots: &[Slot<S>]) -> Result<ChargingProfile<S>, OptimizeError> {
    let allocation = allocate(demand, slots)?;
    Ok(profile_from_allocation(slots, &allocation))
}

/// Exhaustive search over every subset of fully used slots plus at most one
/// partially used slot. Exponential; verification only.
pub fn oracle_allocate<S: Scalar>(demand: S, slots: &[Slot<S>]) -> Result<Vec<S>, OptimizeError> {
    if slots.len() > ORACLE_MAX_SLOTS {
        return Err(OptimizeError::TooManySlots(slots.len()));
    }
    check_demand(demand, slots)?;
    let n = slots.len();
    let tol = S::tolerance();
    let close = |a: S, b: S| {
        let scale = S::one().max_value(a.abs()).max_value(b.abs());
        (a - b).abs() <= tol * scale
    };

    let mut best: Option<(S, S, Vec<S>)> = None;
    let mut consider = |alloc: Vec<S>| {
        let (cost, emissions) = objective(slots, &alloc);
        let better = match &best {
            None => true,
            Some((bc, be, _)) => {
                if close(cost, *bc) {
                    emissions < *be && !close(emissions, *be)
                } else {
                    cost < *bc
                }
            }
        };
        if better {
            best = Some((cost, emissions, alloc));
        }
    };

    for mask in 0u32..(1u32 << n) {
        let full: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let used = sum(full.iter().map(|i| slots[*i].capacity_kwh));
        if !le_tol(used, demand) {
            continue;
        }
        let mut base = vec![S::zero(); n];
        for i in &full {
            base[*i] = slots[*i].capacity_kwh;
        }
        let rest = demand - used;
        if close(rest, S::zero()) || rest <= S::zero() {
            consider(base.clone());
            continue;
        }
        for p in (0..n).filter(|i| mask & (1 << i) == 0) {
            if le_tol(rest, slots[p].capacity_kwh) {
                let mut alloc = base.clone();
                alloc[p] = rest.min_value(slots[p].capacity_kwh);
                consider(alloc);
            }
        }
    }
    Ok(best.map(|(_, _, a)| a).unwrap_or_else(|| vec![S::zero(); n]))
}

pub fn oracle_optimize<S: Scalar>(demand: S, slots: &[Slot<S>]) -> Result<ChargingProfile<S>, OptimizeError> {
    let allocation = oracle_allocate(demand, slots)?;
    Ok(profile_from_allocation(slots, &allocation))
}

pub fn optimize_constrained<S: Scalar>(
    window: &PlugInWindow<S>,
    tariff: &TariffSchedule<S>,
    hourly: &HourlyMoer<S>,
    slot_len: Duration,
) -> Result<ChargingProfile<S>, OptimizeError> {
    let slots = build_slots(&window.range(), window.rated_power_kw(), tariff, hourly, slot_len)?;
    optimize(window.demand_kwh(), &slots)
}

/// Midnight at the start of `date` in `tz` (the earliest instant if ambiguous).
pub fn local_midnight(tz: Tz, date: NaiveDate) -> Timestamp {
    let mut naive = date.and_hms_opt(0, 0, 0).expect("midnight");
    // zones with a DST gap at midnight start the day at the first valid minute
    loop {
        if let Some(t) = tz.from_local_datetime(&naive).earliest() {
            return t.fixed_offset();
        }
        naive += Duration::minutes(1);
    }
}

/// Local calendar dates touched by `[range.start, range.end)`.
pub fn local_days(range: &TimeRange, tz: Tz) -> (NaiveDate, NaiveDate) {
    let first = range.start.with_timezone(&tz).date_naive();
    let last = (range.end - Duration::nanoseconds(1)).with_timezone(&tz).date_naive();
    (first, last)
}

/// The union of local calendar days touched by `range`.
pub fn day_region(range: &TimeRange, tz: Tz) -> TimeRange {
    let (first, last) = local_days(range, tz);
    TimeRange::new(
        local_midnight(tz, first),
        local_midnight(tz, last.succ_opt().expect("date in range")),
    )
}

/// One joint optimization over the local days shared by a vehicle's windows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayPlan<S> {
    pub window_ids: Vec<String>,
    pub region: TimeRange,
    pub demand_kwh: S,
    pub rated_power_kw: S,
    pub profile: ChargingProfile<S>,
}

/// Groups one vehicle's windows (sorted by plug-in) whose local days overlap.
/// Windows join a group only when utility and region also match.
pub fn group_by_day<S: Scalar>(windows: &[&PlugInWindow<S>], tz_of: impl Fn(&PlugInWindow<S>) -> Tz) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut current_last: Option<NaiveDate> = None;
    for (i, w) in windows.iter().enumerate() {
        let (first, last) = local_days(&w.range(), tz_of(w));
        let joins = match (groups.last(), current_last) {
            (Some(g), Some(prev_last)) => {
                let head = windows[g[0]];
                first <= prev_last && head.utility_id() == w.utility_id() && head.region_id() == w.region_id()
            }
            _ => false,
        };
        if joins {
            groups.last_mut().expect("non-empty").push(i);
            current_last = current_last.max(Some(last));
        } else {
            groups.push(vec![i]);
            current_last = Some(last);
        }
    }
    groups
}

/// Optimizes the combined demand of `windows` over the union of their local
/// days. The rating is the largest among the windows.
pub fn optimize_day_group<S: Scalar>(
    windows: &[&PlugInWindow<S>],
    tz: Tz,
    tariff: &TariffSchedule<S>,
    hourly: &HourlyMoer<S>,
    slot_len: Duration,
) -> Result<DayPlan<S>, OptimizeError> {
    let start = windows.iter().map(|w| w.plug_in()).min().ok_or(OptimizeError::EmptyRegion)?;
    let end = windows.iter().map(|w| w.plug_out()).max().ok_or(OptimizeError::EmptyRegion)?;
    let region = day_region(&TimeRange::new(start, end), tz);
    let demand = sum(windows.iter().map(|w| w.demand_kwh()));
    let rated = windows.iter().map(|w| w.rated_power_kw()).fold(S::zero(), S::max_value);
    let slots = build_slots(&region, rated, tariff, hourly, slot_len)?;
    let profile = optimize(demand, &slots)?;
    Ok(DayPlan {
        window_ids: windows.iter().map(|w| w.window_id().to_string()).collect(),
        region,
        demand_kwh: demand,
        rated_power_kw: rated,
        profile,
    })
}

pub fn optimize_unconstrained<S: Scalar>(
    window: &PlugInWindow<S>,
    tz: Tz,
    tariff: &TariffSchedule<S>,
    hourly: &HourlyMoer<S>,
    slot_len: Duration,
) -> Result<ChargingProfile<S>, OptimizeError> {
    optimize_day_group(&[window], tz, tariff, hourly, slot_len).map(|p| p.profile)
}
