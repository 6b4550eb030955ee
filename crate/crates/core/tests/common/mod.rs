//! Two-vehicle fixture: one utility with an evening peak and an EV tariff,
//! one flat-rate utility, over a day with variable MOER.
#![allow(dead_code)]

use std::path::Path;

use chrono::{Duration, Timelike};
use chrono_tz::America::Los_Angeles;
use chrono_tz::Tz;

use smartcharge::config::RunConfig;
use smartcharge::domain::{validate_window, Catalog, ChargingInterval, GridRegionRef, Timestamp, UtilityRef, WindowRecord};
use smartcharge::io::{self, CatalogFile};
use smartcharge::moer::{HourlyMoer, MoerSeries};
use smartcharge::pipeline::FleetInputs;
use smartcharge::tariff::shapes::{all_year, flat, period, two_period};
use smartcharge::tariff::{DaySet, TariffBook, TariffDefinition, TariffKind, TariffSchedule};
use smartcharge::PlugInWindow;

/// MOER by local hour of day, g/kWh.
pub const MOER_A: [f64; 24] = [
    420.0, 410.0, 400.0, 390.0, 380.0, 400.0, 430.0, 450.0, 400.0, 330.0, 280.0, 240.0, 220.0, 230.0, 260.0, 320.0,
    400.0, 480.0, 500.0, 510.0, 490.0, 470.0, 450.0, 430.0,
];
pub const MOER_B: [f64; 24] = [
    400.0, 390.0, 395.0, 405.0, 410.0, 420.0, 430.0, 410.0, 350.0, 250.0, 150.0, 60.0, 0.0, 0.0, 80.0, 200.0, 380.0,
    460.0, 520.0, 510.0, 490.0, 470.0, 450.0, 430.0,
];

pub fn ts(s: &str) -> Timestamp {
    chrono::DateTime::parse_from_rfc3339(s).unwrap()
}

pub fn catalog() -> Catalog {
    Catalog::new(
        [
            UtilityRef {
                id: "tou_utility".into(),
                name: "Evening-peak utility".into(),
                timezone: Los_Angeles,
                standard_tariff_id: "tou_std".into(),
                ev_tariff_id: Some("tou_ev".into()),
            },
            UtilityRef {
                id: "flat_utility".into(),
                name: "Flat-rate utility".into(),
                timezone: Los_Angeles,
                standard_tariff_id: "flat_std".into(),
                ev_tariff_id: None,
            },
        ],
        [
            GridRegionRef {
                id: "region_a".into(),
                name: "Region A".into(),
                timezone: Los_Angeles,
            },
            GridRegionRef {
                id: "region_b".into(),
                name: "Region B".into(),
                timezone: Los_Angeles,
            },
        ],
    )
}

pub fn tariffs() -> Vec<TariffDefinition<f64>> {
    let ev = TariffDefinition {
        tariff_id: "tou_ev".into(),
        utility_id: "tou_utility".into(),
        kind: TariffKind::Tou,
        is_ev_variant: true,
        seasons: all_year(vec![
            period("off-peak", DaySet::All, (0, 0), (15, 0), 0.20),
            period("part-peak", DaySet::All, (15, 0), (16, 0), 0.40),
            period("peak", DaySet::All, (16, 0), (21, 0), 0.60),
            period("part-peak", DaySet::All, (21, 0), (24, 0), 0.40),
        ]),
        note: None,
    };
    vec![
        two_period("tou_std", "tou_utility", 0.25, 0.55, (16, 0), (21, 0)),
        ev,
        flat("flat_std", "flat_utility", 0.30),
    ]
}

pub fn tariff_book() -> TariffBook<f64> {
    TariffBook::new(tariffs().into_iter().map(|d| TariffSchedule::new(d, Los_Angeles).unwrap()))
}

/// Hourly MOER points from 2023-07-09 to 2023-07-13 local time.
pub fn moer_points(profile: &[f64; 24], tz: Tz) -> Vec<(Timestamp, f64)> {
    let start = ts("2023-07-09T00:00:00-07:00");
    (0..96)
        .map(|h| {
            let t = start + Duration::hours(h);
            (t, profile[t.with_timezone(&tz).hour() as usize])
        })
        .collect()
}

pub fn moer_series() -> Vec<MoerSeries<f64>> {
    vec![
        MoerSeries::new("region_a", Duration::hours(1), moer_points(&MOER_A, Los_Angeles)).unwrap(),
        MoerSeries::new("region_b", Duration::hours(1), moer_points(&MOER_B, Los_Angeles)).unwrap(),
    ]
}

pub fn inputs() -> FleetInputs<f64> {
    FleetInputs {
        catalog: catalog(),
        tariffs: tariff_book(),
        moer: [
            ("region_a".to_string(), HourlyMoer::from_hours("region_a", &moer_points(&MOER_A, Los_Angeles))),
            ("region_b".to_string(), HourlyMoer::from_hours("region_b", &moer_points(&MOER_B, Los_Angeles))),
        ]
        .into(),
    }
}

pub fn records() -> Vec<WindowRecord<f64>> {
    vec![
        WindowRecord {
            window_id: "v1-w1".into(),
            vehicle_id: "v1".into(),
            utility_id: "tou_utility".into(),
            region_id: "region_a".into(),
            plug_in: ts("2023-07-10T19:00:00-07:00"),
            plug_out: ts("2023-07-11T05:00:00-07:00"),
            intervals: vec![ChargingInterval::new(ts("2023-07-10T19:00:00-07:00"), ts("2023-07-10T21:00:00-07:00"), 10.0)],
            rated_power_kw: Some(5.0),
        },
        WindowRecord {
            window_id: "v2-w1".into(),
            vehicle_id: "v2".into(),
            utility_id: "flat_utility".into(),
            region_id: "region_b".into(),
            plug_in: ts("2023-07-10T18:00:00-07:00"),
            plug_out: ts("2023-07-11T02:00:00-07:00"),
            intervals: vec![ChargingInterval::new(ts("2023-07-10T18:00:00-07:00"), ts("2023-07-10T20:00:00-07:00"), 8.0)],
            rated_power_kw: Some(4.0),
        },
    ]
}

pub fn windows() -> Vec<PlugInWindow> {
    records().into_iter().map(|r| validate_window(r, &catalog()).unwrap()).collect()
}

/// Hand-computed `(cost USD, emissions kg)` for baseline, constrained and
/// unconstrained, per window.
pub struct Expected {
    pub window_id: &'static str,
    pub baseline: (f64, f64),
    pub constrained: (f64, f64),
    pub unconstrained: (f64, f64),
}

pub const EXPECTED: [Expected; 2] = [
    // 10 kWh in the 0.55 peak at 510/490; optimized into 03:00-05:00 off-peak
    // (390, 380) or the 12:00 hour of both days (220)
    Expected {
        window_id: "v1-w1",
        baseline: (5.50, 5.0),
        constrained: (2.00, 3.85),
        unconstrained: (2.00, 2.2),
    },
    // 8 kWh at 520/510; optimized into 00:00-02:00 (400, 390) or the zero
    // MOER hours 12:00-14:00 of both days
    Expected {
        window_id: "v2-w1",
        baseline: (2.40, 4.12),
        constrained: (2.40, 3.16),
        unconstrained: (2.40, 0.0),
    },
];

/// Writes the fixture in the ingestion formats and returns a config for it.
pub fn write_files(dir: &Path) -> RunConfig {
    io::save_sessions(&dir.join("sessions.csv"), &records()).unwrap();
    io::write_json(&dir.join("tariffs.json"), &tariffs()).unwrap();
    io::write_json(&dir.join("catalog.json"), &CatalogFile::from(&catalog())).unwrap();
    io::save_moer(&dir.join("moer.csv"), &moer_series()).unwrap();
    let mut config = RunConfig::with_inputs("sessions.csv", "tariffs.json", "moer.csv", "catalog.json");
    config.min_vehicles_per_utility = 1;
    config.out_dir = "report".into();
    io::write_json(&dir.join("config.json"), &config).unwrap();
    config.base_dir = dir.to_path_buf();
    config
}
