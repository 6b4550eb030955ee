//! Utility rate schedules: timestamp → price lookup and profile pricing.
//!
//! A tariff is a set of seasons (annual calendar ranges, possibly wrapping the
//! year end), each holding wall-clock rate periods for weekdays and weekends.
//! All wall-clock logic runs in the owning utility's timezone. Period starts are
//! inclusive and ends exclusive, so an instant on a boundary prices at the later
//! period.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, Duration, LocalResult, NaiveDate, TimeZone, Timelike, Weekday};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{TimeRange, Timestamp, UtilityRef};
use crate::num::{sum, Scalar};
use crate::profile::ChargingProfile;

pub const MINUTES_PER_DAY: u16 = 1440;

/// Local wall-clock minute, `00:00` through `24:00`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MinuteOfDay(u16);

impl MinuteOfDay {
    pub fn new(minute: u16) -> Option<Self> {
        (minute <= MINUTES_PER_DAY).then_some(Self(minute))
    }

    pub fn hm(hour: u16, minute: u16) -> Self {
        Self::new(hour * 60 + minute).expect("valid wall-clock time")
    }

    pub fn minutes(self) -> u16 {
        self.0
    }
}

impl TryFrom<String> for MinuteOfDay {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl std::str::FromStr for MinuteOfDay {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("expected HH:MM between 00:00 and 24:00, got {s:?}");
        let (h, m) = s.split_once(':').ok_or_else(bad)?;
        let h: u16 = h.parse().map_err(|_| bad())?;
        let m: u16 = m.parse().map_err(|_| bad())?;
        if m >= 60 || h > 24 || (h == 24 && m != 0) {
            return Err(bad());
        }
        Ok(Self(h * 60 + m))
    }
}

impl From<MinuteOfDay> for String {
    fn from(m: MinuteOfDay) -> Self {
        m.to_string()
    }
}

impl fmt::Display for MinuteOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.0 / 60, self.0 % 60)
    }
}

/// Annual calendar day, `MM-DD`. February 29 is a valid day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MonthDay {
    month: u32,
    day: u32,
}

impl MonthDay {
    pub fn new(month: u32, day: u32) -> Option<Self> {
        NaiveDate::from_ymd_opt(2024, month, day).map(|_| Self { month, day })
    }

    /// Position within a leap year, 0..366.
    pub fn ordinal(self) -> u32 {
        NaiveDate::from_ymd_opt(2024, self.month, self.day)
            .expect("validated on construction")
            .ordinal0()
    }
}

impl TryFrom<String> for MonthDay {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let bad = || format!("expected MM-DD calendar day, got {s:?}");
        let (m, d) = s.split_once('-').ok_or_else(bad)?;
        let m: u32 = m.parse().map_err(|_| bad())?;
        let d: u32 = d.parse().map_err(|_| bad())?;
        MonthDay::new(m, d).ok_or_else(bad)
    }
}

impl From<MonthDay> for String {
    fn from(md: MonthDay) -> Self {
        format!("{:02}-{:02}", md.month, md.day)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DaySet {
    Weekdays,
    Weekends,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DayClass {
    Weekday,
    Weekend,
}

impl DayClass {
    pub fn of(day: Weekday) -> Self {
        match day {
            Weekday::Sat | Weekday::Sun => DayClass::Weekend,
            _ => DayClass::Weekday,
        }
    }

    fn index(self) -> usize {
        match self {
            DayClass::Weekday => 0,
            DayClass::Weekend => 1,
        }
    }
}

impl DaySet {
    pub fn includes(self, class: DayClass) -> bool {
        matches!(
            (self, class),
            (DaySet::All, _)
                | (DaySet::Weekdays, DayClass::Weekday)
                | (DaySet::Weekends, DayClass::Weekend)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePeriod<S> {
    pub label: String,
    pub day_set: DaySet,
    pub start: MinuteOfDay,
    /// Exclusive. `end < start` wraps past midnight; `end == start` is the whole day.
    pub end: MinuteOfDay,
    pub price_usd_per_kwh: S,
}

impl<S> RatePeriod<S> {
    pub fn contains_minute(&self, minute: u16) -> bool {
        let (s, e) = (self.start.0, self.end.0);
        match s.cmp(&e) {
            std::cmp::Ordering::Less => s <= minute && minute < e,
            std::cmp::Ordering::Greater => minute >= s || minute < e,
            std::cmp::Ordering::Equal => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Season<S> {
    pub label: String,
    /// Inclusive; `end < start` wraps the year end.
    pub start: MonthDay,
    pub end: MonthDay,
    pub periods: Vec<RatePeriod<S>>,
}

impl<S> Season<S> {
    pub fn contains_ordinal(&self, ordinal: u32) -> bool {
        let (s, e) = (self.start.ordinal(), self.end.ordinal());
        if s <= e {
            s <= ordinal && ordinal <= e
        } else {
            ordinal >= s || ordinal <= e
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TariffKind {
    Flat,
    Tou,
}

/// A tariff exactly as written in a tariff file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffDefinition<S> {
    pub tariff_id: String,
    pub utility_id: String,
    pub kind: TariffKind,
    pub is_ev_variant: bool,
    pub seasons: Vec<Season<S>>,
    /// Provenance of any flattening (e.g. tiered prices collapsed to one rate).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TariffError {
    #[error("{path}: {detail}")]
    Invalid { path: String, detail: String },
    #[error("tariff {tariff_id} referenced by utility {utility_id} is not loaded")]
    MissingTariffDefinition {
        utility_id: String,
        tariff_id: String,
    },
}

fn invalid(path: impl Into<String>, detail: impl Into<String>) -> TariffError {
    TariffError::Invalid {
        path: path.into(),
        detail: detail.into(),
    }
}

/// Price runs for one season and day class: `(start minute, price)` sorted by
/// start, first run at minute 0.
type Runs<S> = Vec<(u16, S)>;

/// A validated tariff bound to its utility's timezone.
#[derive(Debug, Clone, PartialEq)]
pub struct TariffSchedule<S> {
    definition: TariffDefinition<S>,
    timezone: Tz,
    /// Season index for each leap-year ordinal.
    season_by_ordinal: Vec<u8>,
    /// `[weekday runs, weekend runs]` per season.
    runs: Vec<[Runs<S>; 2]>,
}

impl<S: Scalar> TariffSchedule<S> {
    /// Validates calendar and wall-clock coverage and binds the timezone.
    ///
    /// Each season and day class must cover all 1440 minutes exactly once, and
    /// the seasons must cover all 366 calendar days exactly once.
    pub fn new(definition: TariffDefinition<S>, timezone: Tz) -> Result<Self, TariffError> {
        if definition.seasons.is_empty() {
            return Err(invalid("seasons", "at least one season is required"));
        }
        if definition.seasons.len() > u8::MAX as usize {
            return Err(invalid("seasons", "too many seasons"));
        }

        let mut season_by_ordinal = vec![u8::MAX; 366];
        for (si, season) in definition.seasons.iter().enumerate() {
            for (ordinal, slot) in season_by_ordinal.iter_mut().enumerate() {
                if season.contains_ordinal(ordinal as u32) {
                    if *slot != u8::MAX {
                        return Err(invalid(
                            format!("seasons[{si}]"),
                            format!(
                                "overlaps seasons[{}] on calendar day {}",
                                slot,
                                ordinal_label(ordinal as u32)
                            ),
                        ));
                    }
                    *slot = si as u8;
                }
            }
        }
        if let Some(ordinal) = season_by_ordinal.iter().position(|s| *s == u8::MAX) {
            return Err(invalid(
                "seasons",
                format!("calendar day {} is not covered", ordinal_label(ordinal as u32)),
            ));
        }

        let mut runs = Vec::with_capacity(definition.seasons.len());
        for (si, season) in definition.seasons.iter().enumerate() {
            for (pi, p) in season.periods.iter().enumerate() {
                let path = format!("seasons[{si}].periods[{pi}]");
                if !p.price_usd_per_kwh.is_finite_value() || p.price_usd_per_kwh < S::zero() {
                    return Err(invalid(path, "price must be finite and non-negative"));
                }
                if p.start.0 >= MINUTES_PER_DAY {
                    return Err(invalid(path, "start must be before 24:00"));
                }
            }
            let weekday = season_runs(season, si, DayClass::Weekday)?;
            let weekend = season_runs(season, si, DayClass::Weekend)?;
            runs.push([weekday, weekend]);
        }

        let prices: Vec<S> = definition
            .seasons
            .iter()
            .flat_map(|s| s.periods.iter().map(|p| p.price_usd_per_kwh))
            .collect();
        let flat = prices.windows(2).all(|w| w[0] == w[1]);
        let actual = if flat { TariffKind::Flat } else { TariffKind::Tou };
        if actual != definition.kind {
            return Err(invalid(
                "kind",
                format!("declared {:?} but prices make it {:?}", definition.kind, actual),
            ));
        }

        Ok(Self {
            definition,
            timezone,
            season_by_ordinal,
            runs,
        })
    }

    pub fn tariff_id(&self) -> &str {
        &self.definition.tariff_id
    }

    pub fn utility_id(&self) -> &str {
        &self.definition.utility_id
    }

    pub fn kind(&self) -> TariffKind {
        self.definition.kind
    }

    pub fn is_tou(&self) -> bool {
        self.definition.kind == TariffKind::Tou
    }

    pub fn is_ev_variant(&self) -> bool {
        self.definition.is_ev_variant
    }

    pub fn timezone(&self) -> Tz {
        self.timezone
    }

    pub fn definition(&self) -> &TariffDefinition<S> {
        &self.definition
    }

    fn runs_for(&self, date: NaiveDate) -> &Runs<S> {
        let ordinal = leap_ordinal(date);
        let season = self.season_by_ordinal[ordinal as usize] as usize;
        &self.runs[season][DayClass::of(date.weekday()).index()]
    }

    /// Price of the season and period containing `t`, in local time.
    pub fn rate_at(&self, t: &Timestamp) -> S {
        let local = t.with_timezone(&self.timezone);
        let minute = (local.hour() * 60 + local.minute()) as u16;
        let runs = self.runs_for(local.date_naive());
        let idx = runs.partition_point(|(start, _)| *start <= minute) - 1;
        runs[idx].1
    }

    /// Instants strictly inside `range` where the price may change: every local
    /// midnight and every run start, for each local day the range touches.
    pub fn change_points(&self, range: &TimeRange) -> Vec<Timestamp> {
        let first = range.start.with_timezone(&self.timezone).date_naive();
        let last = range.end.with_timezone(&self.timezone).date_naive();
        let mut points = Vec::new();
        let mut date = first;
        while date <= last {
            for (minute, _) in self.runs_for(date) {
                let naive = date.and_hms_opt(0, 0, 0).expect("midnight")
                    + Duration::minutes(*minute as i64);
                let instants = match self.timezone.from_local_datetime(&naive) {
                    LocalResult::Single(t) => vec![t],
                    LocalResult::Ambiguous(a, b) => vec![a, b],
                    // Inside a spring-forward gap; the transition itself falls on an
                    // hour boundary.
                    LocalResult::None => vec![],
                };
                points.extend(
                    instants
                        .into_iter()
                        .map(|t| t.fixed_offset())
                        .filter(|t| *t > range.start && *t < range.end),
                );
            }
            date = date.succ_opt().expect("date in range");
        }
        points.sort();
        points.dedup();
        points
    }

    /// Energy cost in USD. Segments are split at every price change and each
    /// piece is priced at its midpoint.
    pub fn cost_of(&self, profile: &ChargingProfile<S>) -> S {
        sum(profile.segments().iter().flat_map(|seg| {
            let cuts = self.change_points(&seg.range());
            seg.split_at(&cuts)
                .into_iter()
                .map(|piece| piece.energy_kwh * self.rate_at(&piece.midpoint()))
        }))
    }
}

fn leap_ordinal(date: NaiveDate) -> u32 {
    MonthDay::new(date.month(), date.day())
        .expect("real dates exist in a leap year")
        .ordinal()
}

fn ordinal_label(ordinal: u32) -> String {
    let d = NaiveDate::from_yo_opt(2024, ordinal + 1).expect("ordinal in leap year");
    String::from(MonthDay::new(d.month(), d.day()).expect("real date"))
}

fn season_runs<S: Scalar>(
    season: &Season<S>,
    si: usize,
    class: DayClass,
) -> Result<Runs<S>, TariffError> {
    let mut owner: Vec<Option<usize>> = vec![None; MINUTES_PER_DAY as usize];
    for (pi, p) in season.periods.iter().enumerate() {
        if !p.day_set.includes(class) {
            continue;
        }
        for minute in 0..MINUTES_PER_DAY {
            if p.contains_minute(minute) {
                if let Some(prev) = owner[minute as usize] {
                    return Err(invalid(
                        format!("seasons[{si}].periods[{pi}]"),
                        format!(
                            "overlaps periods[{prev}] at {} on {class:?}",
                            MinuteOfDay(minute)
                        ),
                    ));
                }
                owner[minute as usize] = Some(pi);
            }
        }
    }
    let mut runs: Runs<S> = Vec::new();
    for (minute, who) in owner.iter().enumerate() {
        let Some(pi) = who else {
            return Err(invalid(
                format!("seasons[{si}].periods"),
                format!(
                    "{} on {class:?} is not covered by any period",
                    MinuteOfDay(minute as u16)
                ),
            ));
        };
        let price = season.periods[*pi].price_usd_per_kwh;
        if runs.last().map_or(true, |(_, p)| *p != price) {
            runs.push((minute as u16, price));
        }
    }
    Ok(runs)
}

/// Validated tariffs keyed by id.
#[derive(Debug, Clone, Default)]
pub struct TariffBook<S> {
    tariffs: BTreeMap<String, TariffSchedule<S>>,
}

impl<S: Scalar> TariffBook<S> {
    pub fn new(tariffs: impl IntoIterator<Item = TariffSchedule<S>>) -> Self {
        Self {
            tariffs: tariffs
                .into_iter()
                .map(|t| (t.tariff_id().to_string(), t))
                .collect(),
        }
    }

    pub fn get(&self, tariff_id: &str) -> Option<&TariffSchedule<S>> {
        self.tariffs.get(tariff_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TariffSchedule<S>> {
        self.tariffs.values()
    }

    pub fn len(&self) -> usize {
        self.tariffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tariffs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BillingScenario {
    Baseline,
    Optimized,
}

/// Baseline bills on the standard residential tariff; optimized schedules
/// assume enrollment in the EV tariff when the utility offers one.
pub fn billing_tariff<'a, S: Scalar>(
    utility: &UtilityRef,
    scenario: BillingScenario,
    book: &'a TariffBook<S>,
) -> Result<&'a TariffSchedule<S>, TariffError> {
    let id = match scenario {
        BillingScenario::Baseline => &utility.standard_tariff_id,
        BillingScenario::Optimized => utility
            .ev_tariff_id
            .as_ref()
            .unwrap_or(&utility.standard_tariff_id),
    };
    book.get(id).ok_or_else(|| TariffError::MissingTariffDefinition {
        utility_id: utility.id.clone(),
        tariff_id: id.clone(),
    })
}

/// Builders for the common tariff shapes.
pub mod shapes {
    use super::*;

    pub fn all_year<S>(periods: Vec<RatePeriod<S>>) -> Vec<Season<S>> {
        vec![Season {
            label: "all-year".into(),
            start: MonthDay::new(1, 1).expect("valid"),
            end: MonthDay::new(12, 31).expect("valid"),
            periods,
        }]
    }

    pub fn period<S>(label: &str, day_set: DaySet, start: (u16, u16), end: (u16, u16), price: S) -> RatePeriod<S> {
        RatePeriod {
            label: label.into(),
            day_set,
            start: MinuteOfDay::hm(start.0, start.1),
            end: MinuteOfDay::hm(end.0, end.1),
            price_usd_per_kwh: price,
        }
    }

    pub fn flat<S: Scalar>(tariff_id: &str, utility_id: &str, price: S) -> TariffDefinition<S> {
        TariffDefinition {
            tariff_id: tariff_id.into(),
            utility_id: utility_id.into(),
            kind: TariffKind::Flat,
            is_ev_variant: false,
            seasons: all_year(vec![period("flat", DaySet::All, (0, 0), (24, 0), price)]),
            note: None,
        }
    }

    /// Off-peak everywhere except one daily on-peak block.
    pub fn two_period<S: Scalar>(
        tariff_id: &str,
        utility_id: &str,
        off_peak: S,
        on_peak: S,
        peak_start: (u16, u16),
        peak_end: (u16, u16),
    ) -> TariffDefinition<S> {
        TariffDefinition {
            tariff_id: tariff_id.into(),
            utility_id: utility_id.into(),
            kind: TariffKind::Tou,
            is_ev_variant: false,
            seasons: all_year(vec![
                period("on-peak", DaySet::All, peak_start, peak_end, on_peak),
                period("off-peak", DaySet::All, peak_end, peak_start, off_peak),
            ]),
            note: None,
        }
    }
}
