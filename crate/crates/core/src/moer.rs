//! Marginal operating emissions rates (MOER): native series, hourly means,
//! emissions accounting and the price/MOER correlation analysis.

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Timelike, Utc};
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{TimeRange, Timestamp};
use crate::num::{sum, Scalar};
use crate::profile::ChargingProfile;
use crate::tariff::TariffSchedule;

const SECONDS_PER_HOUR: i64 = 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoerUnit {
    GPerKwh,
    LbPerMwh,
}

impl MoerUnit {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "g_per_kwh" => Some(MoerUnit::GPerKwh),
            "lb_per_mwh" => Some(MoerUnit::LbPerMwh),
            _ => None,
        }
    }

    /// Converts to the canonical g CO2e/kWh.
    pub fn to_g_per_kwh<S: Scalar>(self, value: S) -> S {
        match self {
            MoerUnit::GPerKwh => value,
            // 453.59237 g/lb, 1000 kWh/MWh
            MoerUnit::LbPerMwh => {
                value * S::from_i64(45_359_237).expect("fits")
                    / S::from_i64(100_000_000).expect("fits")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MoerError {
    #[error("region {region_id}: no MOER for hour starting {hour}")]
    CoverageGap { region_id: String, hour: String },
    #[error("region {region_id}: {detail}")]
    InvalidSeries { region_id: String, detail: String },
}

/// Native-resolution series. Timestamps lie on a `step` grid, strictly
/// increasing; missing grid points are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct MoerSeries<S> {
    region_id: String,
    step: Duration,
    points: Vec<(Timestamp, S)>,
}

impl<S: Scalar> MoerSeries<S> {
    pub fn new(
        region_id: impl Into<String>,
        step: Duration,
        points: Vec<(Timestamp, S)>,
    ) -> Result<Self, MoerError> {
        let region_id = region_id.into();
        let bad = |detail: String| MoerError::InvalidSeries {
            region_id: region_id.clone(),
            detail,
        };
        if step <= Duration::zero() {
            return Err(bad("step must be positive".into()));
        }
        if points.is_empty() {
            return Err(bad("series is empty".into()));
        }
        let step_ns = step.num_nanoseconds().expect("step fits");
        for (i, (t, v)) in points.iter().enumerate() {
            if !v.is_finite_value() || *v < S::zero() {
                return Err(bad(format!("point {i} at {t}: value must be finite and >= 0")));
            }
            if i > 0 {
                let gap = (*t - points[i - 1].0).num_nanoseconds().expect("fits");
                if gap <= 0 {
                    return Err(bad(format!("point {i} at {t}: timestamps must strictly increase")));
                }
                if gap % step_ns != 0 {
                    return Err(bad(format!("point {i} at {t}: off the {}s grid", step.num_seconds())));
                }
            }
        }
        Ok(Self {
            region_id,
            step,
            points,
        })
    }

    /// Smallest positive spacing between consecutive points, or 5 minutes for a
    /// single point.
    pub fn infer_step(points: &[(Timestamp, S)]) -> Duration {
        points
            .windows(2)
            .map(|w| w[1].0 - w[0].0)
            .filter(|d| *d > Duration::zero())
            .min()
            .unwrap_or_else(|| Duration::minutes(5))
    }

    pub fn region_id(&self) -> &str {
        &self.region_id
    }

    pub fn step(&self) -> Duration {
        self.step
    }

    pub fn points(&self) -> &[(Timestamp, S)] {
        &self.points
    }

    pub fn coverage(&self) -> TimeRange {
        TimeRange::new(
            self.points[0].0,
            self.points[self.points.len() - 1].0 + self.step,
        )
    }

    /// Value of the native point whose `[t, t + step)` contains `at`.
    pub fn value_at(&self, at: &Timestamp) -> Result<S, MoerError> {
        let idx = self.points.partition_point(|(t, _)| t <= at);
        if idx > 0 {
            let (t, v) = self.points[idx - 1];
            if *at < t + self.step {
                return Ok(v);
            }
        }
        Err(MoerError::CoverageGap {
            region_id: self.region_id.clone(),
            hour: hour_start(at).to_rfc3339(),
        })
    }

    /// Emissions in kg at native resolution: segments are cut at every grid
    /// line of the series.
    pub fn emissions_of(&self, profile: &ChargingProfile<S>) -> Result<S, MoerError> {
        let origin = self.points[0].0;
        let step_ns = self.step.num_nanoseconds().expect("fits");
        let mut total = S::zero();
        for seg in profile.segments() {
            let from = (seg.start - origin).num_nanoseconds().expect("fits").div_euclid(step_ns) + 1;
            let to = (seg.end - origin).num_nanoseconds().expect("fits").div_euclid(step_ns);
            let cuts: Vec<Timestamp> = (from..=to)
                .map(|k| origin + Duration::nanoseconds(k * step_ns))
                .collect();
            for piece in seg.split_at(&cuts) {
                total = total + piece.energy_kwh * self.value_at(&piece.midpoint())?;
            }
        }
        Ok(total / S::from_i64(1000).expect("fits"))
    }

    /// Mean of the native points falling in each clock hour `[h, h+1)`.
    /// Hours without points are absent; hours with fewer points than the grid
    /// allows are flagged partial.
    pub fn hourly_average(&self) -> HourlyMoer<S> {
        let expected = if SECONDS_PER_HOUR % self.step.num_seconds().max(1) == 0 {
            (SECONDS_PER_HOUR / self.step.num_seconds().max(1)) as u32
        } else {
            1
        };
        let first = hour_index(&self.points[0].0);
        let last = hour_index(&self.points[self.points.len() - 1].0);
        let mut acc: Vec<(S, u32)> = vec![(S::zero(), 0); (last - first + 1) as usize];
        for (t, v) in &self.points {
            let slot = &mut acc[(hour_index(t) - first) as usize];
            slot.0 = slot.0 + *v;
            slot.1 += 1;
        }
        let hours = acc
            .into_iter()
            .map(|(total, n)| {
                (n > 0).then(|| HourValue {
                    g_per_kwh: total / S::from_u32(n).expect("fits"),
                    samples: n,
                    partial: n < expected,
                })
            })
            .collect();
        HourlyMoer {
            region_id: self.region_id.clone(),
            first_hour: first,
            hours,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourValue<S> {
    pub g_per_kwh: S,
    pub samples: u32,
    pub partial: bool,
}

/// One value per clock hour (UTC hour grid), possibly with holes.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyMoer<S> {
    region_id: String,
    first_hour: i64,
    hours: Vec<Option<HourValue<S>>>,
}

fn hour_index(t: &Timestamp) -> i64 {
    t.timestamp().div_euclid(SECONDS_PER_HOUR)
}

fn hour_from_index(h: i64) -> Timestamp {
    Utc.timestamp_opt(h * SECONDS_PER_HOUR, 0)
        .single()
        .expect("in range")
        .fixed_offset()
}

/// Start of the clock hour containing `t`.
pub fn hour_start(t: &Timestamp) -> Timestamp {
    hour_from_index(hour_index(t))
}

/// Hour boundaries strictly inside `range`.
pub fn hour_boundaries(range: &TimeRange) -> Vec<Timestamp> {
    let from = hour_index(&range.start) + 1;
    let to = hour_index(&range.end);
    (from..=to)
        .map(hour_from_index)
        .filter(|t| *t > range.start && *t < range.end)
        .collect()
}

impl<S: Scalar> HourlyMoer<S> {
    /// Builds an hourly series from `(hour start, value)` pairs. Timestamps are
    /// floored to their hour.
    pub fn from_hours(region_id: impl Into<String>, values: &[(Timestamp, S)]) -> Self {
        let region_id = region_id.into();
        if values.is_empty() {
            return Self {
                region_id,
                first_hour: 0,
                hours: Vec::new(),
            };
        }
        let first = values.iter().map(|(t, _)| hour_index(t)).min().expect("non-empty");
        let last = values.iter().map(|(t, _)| hour_index(t)).max().expect("non-empty");
        let mut hours = vec![None; (last - first + 1) as usize];
        for (t, v) in values {
            hours[(hour_index(t) - first) as usize] = Some(HourValue {
                g_per_kwh: *v,
                samples: 1,
                partial: false,
            });
        }
        Self {
            region_id,
            first_hour: first,
            hours,
        }
    }

    pub fn region_id(&self) -> &str {
        &self.region_id
    }

    pub fn hour(&self, t: &Timestamp) -> Option<&HourValue<S>> {
        let offset = hour_index(t) - self.first_hour;
        if offset < 0 {
            return None;
        }
        self.hours.get(offset as usize).and_then(|h| h.as_ref())
    }

    /// Present hours as `(hour start, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (Timestamp, &HourValue<S>)> + '_ {
        self.hours
            .iter()
            .enumerate()
            .filter_map(move |(i, h)| h.as_ref().map(|v| (hour_from_index(self.first_hour + i as i64), v)))
    }

    pub fn partial_hours(&self) -> usize {
        self.hours.iter().flatten().filter(|h| h.partial).count()
    }

    /// Value of the hour containing `t` (hour starts are inclusive).
    pub fn moer_at(&self, t: &Timestamp) -> Result<S, MoerError> {
        self.hour(t)
            .map(|h| h.g_per_kwh)
            .ok_or_else(|| MoerError::CoverageGap {
                region_id: self.region_id.clone(),
                hour: hour_start(t).to_rfc3339(),
            })
    }

    /// Emissions in kg CO2e, segments split at every hour boundary.
    pub fn emissions_of(&self, profile: &ChargingProfile<S>) -> Result<S, MoerError> {
        let mut grams = Vec::new();
        for seg in profile.segments() {
            for piece in seg.split_at(&hour_boundaries(&seg.range())) {
                grams.push(piece.energy_kwh * self.moer_at(&piece.midpoint())?);
            }
        }
        Ok(sum(grams) / S::from_i64(1000).expect("fits"))
    }

    /// Error for the first hour in `range` that has no value.
    pub fn check_coverage(&self, range: &TimeRange) -> Result<(), MoerError> {
        let mut h = hour_index(&range.start);
        let last = hour_index(&(range.end - Duration::nanoseconds(1)));
        while h <= last {
            self.moer_at(&hour_from_index(h))?;
            h += 1;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    /// 24 hour-of-day means of price and MOER over the month.
    HourOfDay,
    /// Every hour of the month as its own sample.
    Pairwise,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorrelationError {
    #[error("price or MOER profile has zero variance")]
    ZeroVariance,
    #[error("MOER covers {present} of {total} hours in the month (need at least half)")]
    InsufficientCoverage { present: usize, total: usize },
    #[error("invalid month {year}-{month:02}")]
    InvalidMonth { year: i32, month: u32 },
}

/// Pearson correlation; `None` when either input is constant.
pub fn pearson<F: Float>(xs: &[F], ys: &[F]) -> Option<F> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 || is_constant(xs) || is_constant(ys) {
        return None;
    }
    let n = F::from(xs.len()).expect("count");
    let mx = xs.iter().fold(F::zero(), |a, b| a + *b) / n;
    let my = ys.iter().fold(F::zero(), |a, b| a + *b) / n;
    let (mut sxy, mut sxx, mut syy) = (F::zero(), F::zero(), F::zero());
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (*x - mx, *y - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Some(r.max(-F::one()).min(F::one()))
}

fn is_constant<F: Float>(v: &[F]) -> bool {
    let lo = v.iter().copied().fold(F::infinity(), F::min);
    let hi = v.iter().copied().fold(F::neg_infinity(), F::max);
    let scale = lo.abs().max(hi.abs()).max(F::min_positive_value());
    hi - lo <= scale * F::epsilon() * F::from(64.0).expect("const")
}

/// Hourly samples for one local calendar month: `(local hour of day, mean
/// price over the hour, MOER if present)`.
fn month_samples<S: Scalar>(
    tariff: &TariffSchedule<S>,
    hourly: &HourlyMoer<S>,
    year: i32,
    month: u32,
) -> Result<Vec<(u32, f64, Option<f64>)>, CorrelationError> {
    let tz = tariff.timezone();
    let first = NaiveDate::from_ymd_opt(year, month, 1)
        .ok_or(CorrelationError::InvalidMonth { year, month })?;
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)
    }
    .expect("valid");
    let local_midnight = |d: NaiveDate| -> DateTime<Utc> {
        tz.from_local_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight"))
            .earliest()
            .expect("midnight exists")
            .with_timezone(&Utc)
    };
    let (start, end) = (local_midnight(first), local_midnight(next));
    let mut out = Vec::new();
    let mut h = start.timestamp().div_euclid(SECONDS_PER_HOUR);
    while h * SECONDS_PER_HOUR < end.timestamp() {
        let at = hour_from_index(h);
        if at >= start.fixed_offset() {
            let hod = at.with_timezone(&tz).hour();
            let price = (0..60)
                .map(|m| tariff.rate_at(&(at + Duration::minutes(m))).to_f64_lossy())
                .sum::<f64>()
                / 60.0;
            let moer = hourly.hour(&at).map(|v| v.g_per_kwh.to_f64_lossy());
            out.push((hod, price, moer));
        }
        h += 1;
    }
    Ok(out)
}

/// Correlation between a tariff's prices and a region's MOER over one local
/// calendar month. The default mode compares hour-of-day mean profiles.
pub fn correlate_rate_moer<S: Scalar>(
    tariff: &TariffSchedule<S>,
    hourly: &HourlyMoer<S>,
    year: i32,
    month: u32,
    mode: CorrelationMode,
) -> Result<f64, CorrelationError> {
    let samples = month_samples(tariff, hourly, year, month)?;
    let present = samples.iter().filter(|s| s.2.is_some()).count();
    if present * 2 < samples.len() {
        return Err(CorrelationError::InsufficientCoverage {
            present,
            total: samples.len(),
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = match mode {
        CorrelationMode::Pairwise => samples
            .iter()
            .filter_map(|(_, p, m)| m.map(|m| (*p, m)))
            .unzip(),
        CorrelationMode::HourOfDay => {
            let mut price = [(0.0, 0usize); 24];
            let mut moer = [(0.0, 0usize); 24];
            for (hod, p, m) in &samples {
                let i = *hod as usize;
                price[i] = (price[i].0 + p, price[i].1 + 1);
                if let Some(m) = m {
                    moer[i] = (moer[i].0 + m, moer[i].1 + 1);
                }
            }
            (0..24)
                .filter(|i| price[*i].1 > 0 && moer[*i].1 > 0)
                .map(|i| (price[i].0 / price[i].1 as f64, moer[i].0 / moer[i].1 as f64))
                .unzip()
        }
    };
    pearson(&xs, &ys).ok_or(CorrelationError::ZeroVariance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::tests::ts;
    use crate::num::Exact;
    use crate::profile::Segment;
    use crate::tariff::shapes::{flat, two_period};
    use chrono_tz::America::Los_Angeles;
    use proptest::prelude::*;

    fn five_min(start: &str, values: &[f64]) -> Vec<(Timestamp, f64)> {
        let t0 = ts(start);
        values
            .iter()
            .enumerate()
            .map(|(i, v)| (t0 + Duration::minutes(5 * i as i64), *v))
            .collect()
    }

    #[test]
    fn hourly_means() {
        let s = MoerSeries::new("r", Duration::minutes(5), five_min("2023-07-10T13:00:00Z", &[400.0; 12])).unwrap();
        let h = s.hourly_average();
        assert_eq!(h.moer_at(&ts("2023-07-10T13:37:00Z")).unwrap(), 400.0);
        assert!(!h.hour(&ts("2023-07-10T13:00:00Z")).unwrap().partial);

        let mut v = vec![0.0; 6];
        v.extend([400.0; 6]);
        let s = MoerSeries::new("r", Duration::minutes(5), five_min("2023-07-10T13:00:00Z", &v)).unwrap();
        assert_eq!(s.hourly_average().moer_at(&ts("2023-07-10T13:00:00Z")).unwrap(), 200.0);
    }

    #[test]
    fn partial_hour_is_flagged() {
        // 7 of 12 points present, spread on the grid
        let t0 = ts("2023-07-10T13:00:00Z");
        let pts: Vec<_> = [0, 1, 3, 4, 8, 9, 11]
            .iter()
            .map(|k| (t0 + Duration::minutes(5 * k), 100.0))
            .collect();
        let h = MoerSeries::new("r", Duration::minutes(5), pts).unwrap().hourly_average();
        let v = h.hour(&t0).unwrap();
        // direct mean over the present points
        assert_eq!(v.g_per_kwh, 700.0 / 7.0);
        assert_eq!(v.samples, 7);
        assert!(v.partial);
        assert_eq!(h.partial_hours(), 1);
    }

    #[test]
    fn lookup_boundaries_and_gaps() {
        let h = HourlyMoer::from_hours(
            "r",
            &[(ts("2023-07-10T13:00:00Z"), 250.0), (ts("2023-07-10T14:00:00Z"), 300.0), (ts("2023-07-10T16:00:00Z"), 1.0)],
        );
        assert_eq!(h.moer_at(&ts("2023-07-10T13:37:00Z")).unwrap(), 250.0);
        assert_eq!(h.moer_at(&ts("2023-07-10T14:00:00Z")).unwrap(), 300.0);
        assert!(matches!(h.moer_at(&ts("2023-07-10T15:10:00Z")), Err(MoerError::CoverageGap { .. })));
        assert!(h.moer_at(&ts("2023-07-10T12:10:00Z")).is_err());
        assert!(h.check_coverage(&TimeRange::new(ts("2023-07-10T13:30:00Z"), ts("2023-07-10T15:00:00Z"))).is_ok());
        assert!(h.check_coverage(&TimeRange::new(ts("2023-07-10T13:30:00Z"), ts("2023-07-10T15:00:01Z"))).is_err());
    }

    #[test]
    fn emissions_examples() {
        let h = HourlyMoer::from_hours(
            "r",
            &[(ts("2023-07-10T13:00:00Z"), 400.0), (ts("2023-07-10T14:00:00Z"), 0.0), (ts("2023-07-10T15:00:00Z"), 300.0), (ts("2023-07-10T16:00:00Z"), 100.0)],
        );
        let seg = |a: &str, b: &str, e: f64| Segment::new(ts(a), ts(b), e);
        let p = ChargingProfile::new(vec![seg("2023-07-10T13:00:00Z", "2023-07-10T14:00:00Z", 10.0)]);
        assert!((h.emissions_of(&p).unwrap() - 4.0).abs() < 1e-12);
        let p = ChargingProfile::new(vec![seg("2023-07-10T14:00:00Z", "2023-07-10T14:40:00Z", 5.0)]);
        assert_eq!(h.emissions_of(&p).unwrap(), 0.0);
        // 2 kWh in the 300 hour and 3 kWh in the 100 hour at constant power
        let p = ChargingProfile::new(vec![seg("2023-07-10T15:20:00Z", "2023-07-10T17:00:00Z", 5.0)]);
        assert!((h.emissions_of(&p).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(h.emissions_of(&ChargingProfile::empty()).unwrap(), 0.0);
        let p = ChargingProfile::new(vec![seg("2023-07-10T16:30:00Z", "2023-07-10T17:30:00Z", 5.0)]);
        assert!(h.emissions_of(&p).is_err());
    }

    #[test]
    fn unit_conversion() {
        assert_eq!(MoerUnit::LbPerMwh.to_g_per_kwh(1000.0), 453.59237);
        assert_eq!(MoerUnit::GPerKwh.to_g_per_kwh(123.0), 123.0);
        assert_eq!(MoerUnit::parse("lb_per_mwh"), Some(MoerUnit::LbPerMwh));
        assert_eq!(MoerUnit::parse(""), None);
    }

    #[test]
    fn series_validation() {
        let t0 = ts("2023-07-10T13:00:00Z");
        let bad_order = vec![(t0, 1.0), (t0, 2.0)];
        assert!(MoerSeries::new("r", Duration::minutes(5), bad_order).is_err());
        let off_grid = vec![(t0, 1.0), (t0 + Duration::minutes(7), 2.0)];
        assert!(MoerSeries::new("r", Duration::minutes(5), off_grid).is_err());
        let neg = vec![(t0, -1.0)];
        assert!(MoerSeries::new("r", Duration::minutes(5), neg).is_err());
    }

    fn july_hourly(f: impl Fn(u32) -> f64) -> HourlyMoer<f64> {
        let start = ts("2023-06-30T00:00:00Z");
        let vals: Vec<_> = (0..24 * 33)
            .map(|h| {
                let t = start + Duration::hours(h);
                (t, f(t.with_timezone(&Los_Angeles).hour()))
            })
            .collect();
        HourlyMoer::from_hours("r", &vals)
    }

    #[test]
    fn correlation_signs() {
        let tariff = TariffSchedule::new(two_period("t", "u", 0.25, 0.55, (16, 0), (21, 0)), Los_Angeles).unwrap();
        // MOER an affine image of the price profile
        let aligned = july_hourly(|h| if (16..21).contains(&h) { 100.0 + 0.55 * 500.0 } else { 100.0 + 0.25 * 500.0 });
        let r = correlate_rate_moer(&tariff, &aligned, 2023, 7, CorrelationMode::HourOfDay).unwrap();
        assert!((r - 1.0).abs() < 1e-9, "{r}");
        let inverse = july_hourly(|h| if (16..21).contains(&h) { 900.0 - 0.55 * 500.0 } else { 900.0 - 0.25 * 500.0 });
        let r = correlate_rate_moer(&tariff, &inverse, 2023, 7, CorrelationMode::HourOfDay).unwrap();
        assert!((r + 1.0).abs() < 1e-9, "{r}");
        let r = correlate_rate_moer(&tariff, &inverse, 2023, 7, CorrelationMode::Pairwise).unwrap();
        assert!((r + 1.0).abs() < 1e-9, "{r}");

        let flat = TariffSchedule::new(flat("f", "u", 0.13), Los_Angeles).unwrap();
        assert_eq!(correlate_rate_moer(&flat, &aligned, 2023, 7, CorrelationMode::HourOfDay), Err(CorrelationError::ZeroVariance));
        let constant = july_hourly(|_| 300.0);
        assert_eq!(correlate_rate_moer(&tariff, &constant, 2023, 7, CorrelationMode::HourOfDay), Err(CorrelationError::ZeroVariance));
        assert!(matches!(
            correlate_rate_moer(&tariff, &aligned, 2023, 9, CorrelationMode::HourOfDay),
            Err(CorrelationError::InsufficientCoverage { .. })
        ));
    }

    proptest! {
        #[test]
        fn pearson_is_affine_invariant(
            xs in proptest::collection::vec(-100.0f64..100.0, 24),
            ys in proptest::collection::vec(-100.0f64..100.0, 24),
            a in 0.1f64..10.0, b in -50.0f64..50.0,
        ) {
            if let (Some(r), Some(r2)) = (
                pearson(&xs, &ys),
                pearson(&xs.iter().map(|x| a * x + b).collect::<Vec<_>>(), &ys),
            ) {
                prop_assert!((r - r2).abs() < 1e-9);
                let r3 = pearson(&xs.iter().map(|x| -a * x + b).collect::<Vec<_>>(), &ys).unwrap();
                prop_assert!((r + r3).abs() < 1e-9);
            }
        }

        #[test]
        fn hourly_averaging_preserves_emissions_exactly(
            hour_vals in proptest::collection::vec(0i64..900, 6),
            segs in proptest::collection::vec((0i64..5 * 3600, 1i64..4000, 1i64..30_000), 1..5),
        ) {
            // constant within each hour at native 5-minute resolution
            let t0 = ts("2023-07-10T00:00:00Z");
            let pts: Vec<(Timestamp, Exact)> = (0..72)
                .map(|k| (t0 + Duration::minutes(5 * k), Exact::from_integer(hour_vals[(k / 12) as usize] as i128)))
                .collect();
            let native = MoerSeries::new("r", Duration::minutes(5), pts).unwrap();
            let hourly = native.hourly_average();
            let profile = ChargingProfile::new(segs.iter().map(|(o, l, wh)| {
                let s = t0 + Duration::seconds(*o);
                let e = (s + Duration::seconds(*l)).min(t0 + Duration::hours(6));
                Segment::new(s, e, Exact::new(*wh as i128, 1000))
            }).collect());
            prop_assert_eq!(hourly.emissions_of(&profile).unwrap(), native.emissions_of(&profile).unwrap());
        }

        #[test]
        fn emissions_monotone_in_moer(
            vals in proptest::collection::vec(0.0f64..900.0, 4),
            bump_at in 0usize..4, bump in 0.0f64..300.0,
            start in 0i64..3 * 3600, len in 60i64..3600,
        ) {
            let t0 = ts("2023-07-10T00:00:00Z");
            let hours: Vec<_> = vals.iter().enumerate().map(|(i, v)| (t0 + Duration::hours(i as i64), *v)).collect();
            let mut raised = hours.clone();
            raised[bump_at].1 += bump;
            let p = ChargingProfile::new(vec![Segment::new(t0 + Duration::seconds(start), t0 + Duration::seconds(start + len), 3.0)]);
            let lo = HourlyMoer::from_hours("r", &hours).emissions_of(&p).unwrap();
            let hi = HourlyMoer::from_hours("r", &raised).emissions_of(&p).unwrap();
            prop_assert!(hi >= lo - 1e-12);
        }
    }
}
