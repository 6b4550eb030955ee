//! Session data model: charging intervals, plug-in windows, and the
//! utility/region catalog they reference.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, FixedOffset};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;

/// An absolute instant carrying the offset it was written with.
pub type Timestamp = DateTime<FixedOffset>;

/// Nanoseconds in a span. Spans handled here are far below the ~292 year limit.
pub fn span_nanos(start: &Timestamp, end: &Timestamp) -> i64 {
    (*end - *start)
        .num_nanoseconds()
        .expect("span fits in i64 nanoseconds")
}

pub fn span_hours<S: Scalar>(start: &Timestamp, end: &Timestamp) -> S {
    S::hours_from_nanos(span_nanos(start, end))
}

/// Half-open interval `[start, end)` of absolute time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeRange {
    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        Self { start, end }
    }

    pub fn duration(&self) -> Duration {
        self.end - self.start
    }

    pub fn contains(&self, t: &Timestamp) -> bool {
        self.start <= *t && *t < self.end
    }

    pub fn covers(&self, other: &TimeRange) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &TimeRange) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingInterval<S> {
    pub start: Timestamp,
    pub end: Timestamp,
    pub energy_kwh: S,
}

impl<S: Scalar> ChargingInterval<S> {
    pub fn new(start: Timestamp, end: Timestamp, energy_kwh: S) -> Self {
        Self {
            start,
            end,
            energy_kwh,
        }
    }

    pub fn hours(&self) -> S {
        span_hours(&self.start, &self.end)
    }

    /// Always recomputed from energy and duration.
    pub fn mean_power_kw(&self) -> S {
        self.energy_kwh / self.hours()
    }

    pub fn range(&self) -> TimeRange {
        TimeRange::new(self.start, self.end)
    }
}

/// A plug-in window as it arrives from ingestion, before any checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord<S> {
    pub window_id: String,
    pub vehicle_id: String,
    pub utility_id: String,
    pub region_id: String,
    pub plug_in: Timestamp,
    pub plug_out: Timestamp,
    pub intervals: Vec<ChargingInterval<S>>,
    /// Declared charger rating. `None` falls back to the fastest observed interval.
    pub rated_power_kw: Option<S>,
}

/// A plug-in window that passed [`validate_window`]. Fields are read-only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlugInWindow<S> {
    window_id: String,
    vehicle_id: String,
    utility_id: String,
    region_id: String,
    plug_in: Timestamp,
    plug_out: Timestamp,
    intervals: Vec<ChargingInterval<S>>,
    rated_power_kw: S,
    demand_kwh: S,
}

impl<S: Scalar> PlugInWindow<S> {
    pub fn window_id(&self) -> &str {
        &self.window_id
    }
    pub fn vehicle_id(&self) -> &str {
        &self.vehicle_id
    }
    pub fn utility_id(&self) -> &str {
        &self.utility_id
    }
    pub fn region_id(&self) -> &str {
        &self.region_id
    }
    pub fn plug_in(&self) -> Timestamp {
        self.plug_in
    }
    pub fn plug_out(&self) -> Timestamp {
        self.plug_out
    }
    pub fn range(&self) -> TimeRange {
        TimeRange::new(self.plug_in, self.plug_out)
    }
    pub fn intervals(&self) -> &[ChargingInterval<S>] {
        &self.intervals
    }
    pub fn rated_power_kw(&self) -> S {
        self.rated_power_kw
    }
    /// Sum of interval energies; all intervals collapse into this one demand.
    pub fn demand_kwh(&self) -> S {
        self.demand_kwh
    }
    pub fn plugged_hours(&self) -> S {
        span_hours(&self.plug_in, &self.plug_out)
    }
    pub fn charging_hours(&self) -> S {
        crate::num::sum(self.intervals.iter().map(|i| i.hours()))
    }
}

impl<S: Scalar> From<PlugInWindow<S>> for WindowRecord<S> {
    fn from(w: PlugInWindow<S>) -> Self {
        WindowRecord {
            window_id: w.window_id,
            vehicle_id: w.vehicle_id,
            utility_id: w.utility_id,
            region_id: w.region_id,
            plug_in: w.plug_in,
            plug_out: w.plug_out,
            intervals: w.intervals,
            rated_power_kw: Some(w.rated_power_kw),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityRef {
    pub id: String,
    pub name: String,
    pub timezone: Tz,
    pub standard_tariff_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ev_tariff_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRegionRef {
    pub id: String,
    pub name: String,
    pub timezone: Tz,
}

/// Utilities and grid regions keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    pub utilities: BTreeMap<String, UtilityRef>,
    pub regions: BTreeMap<String, GridRegionRef>,
}

impl Catalog {
    pub fn new(
        utilities: impl IntoIterator<Item = UtilityRef>,
        regions: impl IntoIterator<Item = GridRegionRef>,
    ) -> Self {
        Self {
            utilities: utilities.into_iter().map(|u| (u.id.clone(), u)).collect(),
            regions: regions.into_iter().map(|r| (r.id.clone(), r)).collect(),
        }
    }

    pub fn utility(&self, id: &str) -> Option<&UtilityRef> {
        self.utilities.get(id)
    }

    pub fn region(&self, id: &str) -> Option<&GridRegionRef> {
        self.regions.get(id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum DomainError {
    #[error("window {window_id}: plug_out must be after plug_in")]
    InvalidWindow { window_id: String },
    #[error("window {window_id}: no charging intervals")]
    EmptyWindow { window_id: String },
    #[error("window {window_id}: intervals[{index}] must end after it starts")]
    InvalidInterval { window_id: String, index: usize },
    #[error("window {window_id}: intervals[{index}] overlaps or precedes intervals[{prev}]")]
    OverlappingIntervals {
        window_id: String,
        index: usize,
        prev: usize,
    },
    #[error("window {window_id}: intervals[{index}] lies outside [plug_in, plug_out]")]
    IntervalOutsideWindow { window_id: String, index: usize },
    #[error("window {window_id}: {field} must be positive and finite")]
    NonPositiveEnergy { window_id: String, field: String },
    #[error("window {window_id}: utility_id {utility_id} not in catalog")]
    UnknownUtility {
        window_id: String,
        utility_id: String,
    },
    #[error("window {window_id}: region_id {region_id} not in catalog")]
    UnknownRegion {
        window_id: String,
        region_id: String,
    },
    #[error("window {window_id}: intervals[{index}] mean power {mean_power_kw} kW exceeds rated_power_kw {rated_power_kw}")]
    PowerExceedsRating {
        window_id: String,
        index: usize,
        mean_power_kw: String,
        rated_power_kw: String,
    },
}

impl DomainError {
    /// Short machine-readable kind, used in reject reports.
    pub fn kind(&self) -> &'static str {
        match self {
            DomainError::InvalidWindow { .. } => "InvalidWindow",
            DomainError::EmptyWindow { .. } => "EmptyWindow",
            DomainError::InvalidInterval { .. } => "InvalidInterval",
            DomainError::OverlappingIntervals { .. } => "OverlappingIntervals",
            DomainError::IntervalOutsideWindow { .. } => "IntervalOutsideWindow",
            DomainError::NonPositiveEnergy { .. } => "NonPositiveEnergy",
            DomainError::UnknownUtility { .. } => "UnknownUtility",
            DomainError::UnknownRegion { .. } => "UnknownRegion",
            DomainError::PowerExceedsRating { .. } => "PowerExceedsRating",
        }
    }
}

/// Relative slack when comparing an interval's mean power to the rating.
const RATING_SLACK: f64 = 1e-9;

/// Checks every window invariant and resolves catalog references.
///
/// Intervals are sorted by start before the overlap check. The rating falls back to
/// the fastest interval when the record does not declare one.
pub fn validate_window<S: Scalar>(
    record: WindowRecord<S>,
    catalog: &Catalog,
) -> Result<PlugInWindow<S>, DomainError> {
    let id = || record.window_id.clone();
    if record.plug_in >= record.plug_out {
        return Err(DomainError::InvalidWindow { window_id: id() });
    }
    if catalog.utility(&record.utility_id).is_none() {
        return Err(DomainError::UnknownUtility {
            window_id: id(),
            utility_id: record.utility_id.clone(),
        });
    }
    if catalog.region(&record.region_id).is_none() {
        return Err(DomainError::UnknownRegion {
            window_id: id(),
            region_id: record.region_id.clone(),
        });
    }
    if record.intervals.is_empty() {
        return Err(DomainError::EmptyWindow { window_id: id() });
    }

    let mut intervals = record.intervals.clone();
    intervals.sort_by_key(|i| i.start);
    for (index, interval) in intervals.iter().enumerate() {
        if interval.start >= interval.end {
            return Err(DomainError::InvalidInterval {
                window_id: id(),
                index,
            });
        }
        if !interval.energy_kwh.is_finite_value() || interval.energy_kwh <= S::zero() {
            return Err(DomainError::NonPositiveEnergy {
                window_id: id(),
                field: format!("intervals[{index}].energy_kwh"),
            });
        }
        if interval.start < record.plug_in || interval.end > record.plug_out {
            return Err(DomainError::IntervalOutsideWindow {
                window_id: id(),
                index,
            });
        }
        if index > 0 && interval.start < intervals[index - 1].end {
            return Err(DomainError::OverlappingIntervals {
                window_id: id(),
                index,
                prev: index - 1,
            });
        }
    }

    let fastest = intervals
        .iter()
        .map(|i| i.mean_power_kw())
        .fold(S::zero(), S::max_value);
    let rated = match record.rated_power_kw {
        Some(r) => {
            if !r.is_finite_value() || r <= S::zero() {
                return Err(DomainError::NonPositiveEnergy {
                    window_id: id(),
                    field: "rated_power_kw".into(),
                });
            }
            let slack = S::from_f64_lossy(RATING_SLACK);
            if let Some((index, interval)) = intervals
                .iter()
                .enumerate()
                .find(|(_, i)| i.mean_power_kw() > r + r * slack)
            {
                return Err(DomainError::PowerExceedsRating {
                    window_id: id(),
                    index,
                    mean_power_kw: format!("{:?}", interval.mean_power_kw()),
                    rated_power_kw: format!("{r:?}"),
                });
            }
            r
        }
        None => fastest,
    };

    let demand = crate::num::sum(intervals.iter().map(|i| i.energy_kwh));
    Ok(PlugInWindow {
        window_id: record.window_id,
        vehicle_id: record.vehicle_id,
        utility_id: record.utility_id,
        region_id: record.region_id,
        plug_in: record.plug_in,
        plug_out: record.plug_out,
        intervals,
        rated_power_kw: rated,
        demand_kwh: demand,
    })
}
