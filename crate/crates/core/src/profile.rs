//! Piecewise-constant power schedules.

use serde::Serialize;

use crate::domain::{span_hours, span_nanos, ChargingInterval, TimeRange, Timestamp};
use crate::num::{sum, Scalar};

/// Constant power over `[start, end)`, stored as delivered energy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment<S> {
    pub start: Timestamp,
    pub end: Timestamp,
    pub energy_kwh: S,
}

impl<S: Scalar> Segment<S> {
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

    pub fn power_kw(&self) -> S {
        self.energy_kwh / self.hours()
    }

    pub fn range(&self) -> TimeRange {
        TimeRange::new(self.start, self.end)
    }

    pub fn midpoint(&self) -> Timestamp {
        self.start + (self.end - self.start) / 2
    }

    /// Splits at every cut strictly inside the segment. Energy is shared in
    /// proportion to duration; the last piece takes the remainder so the pieces
    /// sum back to the original energy.
    pub fn split_at(&self, cuts: &[Timestamp]) -> Vec<Segment<S>> {
        let mut inner: Vec<Timestamp> = cuts
            .iter()
            .copied()
            .filter(|c| *c > self.start && *c < self.end)
            .collect();
        if inner.is_empty() {
            return vec![self.clone()];
        }
        inner.sort();
        inner.dedup();
        let total = S::from_i64(span_nanos(&self.start, &self.end)).expect("fits");
        let mut pieces = Vec::with_capacity(inner.len() + 1);
        let mut from = self.start;
        let mut assigned = S::zero();
        for cut in inner {
            let part = S::from_i64(span_nanos(&from, &cut)).expect("fits");
            let energy = self.energy_kwh * part / total;
            assigned = assigned + energy;
            pieces.push(Segment::new(from, cut, energy));
            from = cut;
        }
        pieces.push(Segment::new(from, self.end, self.energy_kwh - assigned));
        pieces
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChargingProfile<S> {
    segments: Vec<Segment<S>>,
}

impl<S: Scalar> Default for ChargingProfile<S> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<S: Scalar> ChargingProfile<S> {
    pub fn empty() -> Self {
        Self {
            segments: Vec::new(),
        }
    }

    /// Segments are sorted by start; zero-energy segments are dropped.
    pub fn new(mut segments: Vec<Segment<S>>) -> Self {
        segments.retain(|s| s.energy_kwh != S::zero() && s.start < s.end);
        segments.sort_by_key(|s| s.start);
        Self { segments }
    }

    /// The observed schedule: each interval at its own mean power.
    pub fn from_intervals(intervals: &[ChargingInterval<S>]) -> Self {
        Self::new(
            intervals
                .iter()
                .map(|i| Segment::new(i.start, i.end, i.energy_kwh))
                .collect(),
        )
    }

    pub fn segments(&self) -> &[Segment<S>] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_energy_kwh(&self) -> S {
        sum(self.segments.iter().map(|s| s.energy_kwh))
    }

    /// Concatenates two profiles; segments are re-sorted.
    pub fn concat(&self, other: &Self) -> Self {
        let mut segments = self.segments.clone();
        segments.extend(other.segments.iter().cloned());
        Self::new(segments)
    }

    pub fn scaled(&self, factor: S) -> Self {
        Self::new(
            self.segments
                .iter()
                .map(|s| Segment::new(s.start, s.end, s.energy_kwh * factor))
                .collect(),
        )
    }

    pub fn peak_power_kw(&self) -> S {
        self.segments
            .iter()
            .map(|s| s.power_kw())
            .fold(S::zero(), S::max_value)
    }

    pub fn is_within(&self, region: &TimeRange) -> bool {
        self.segments.iter().all(|s| region.covers(&s.range()))
    }

    pub fn is_non_overlapping(&self) -> bool {
        self.segments.windows(2).all(|w| w[0].end <= w[1].start)
    }
}
