//! Smart-charging optimizer and fleet simulator for home EV charging.
//!
//! Observed plug-in windows are priced on the utility's standard tariff and
//! scored against the grid's marginal emissions, then re-scheduled to minimize
//! cost first and emissions second, either inside the observed window
//! (constrained) or anywhere on the local calendar days it touches
//! (unconstrained).
//!
//! The numeric core is generic over [`num::Scalar`]; the aliases below fix it
//! to `f64`, the type every file format uses.

pub mod analytics;
pub mod config;
pub mod domain;
pub mod io;
pub mod moer;
pub mod num;
pub mod optimizer;
pub mod pipeline;
pub mod profile;
pub mod report;
pub mod synth;
pub mod tariff;

pub use num::{Exact, Scalar};

/// Production scalar.
pub type Real = f64;

pub type ChargingInterval = domain::ChargingInterval<Real>;
pub type WindowRecord = domain::WindowRecord<Real>;
pub type PlugInWindow = domain::PlugInWindow<Real>;
pub type ChargingProfile = profile::ChargingProfile<Real>;
pub type Segment = profile::Segment<Real>;
pub type TariffDefinition = tariff::TariffDefinition<Real>;
pub type TariffSchedule = tariff::TariffSchedule<Real>;
pub type TariffBook = tariff::TariffBook<Real>;
pub type MoerSeries = moer::MoerSeries<Real>;
pub type HourlyMoer = moer::HourlyMoer<Real>;
pub type Slot = optimizer::Slot<Real>;
pub type DayPlan = optimizer::DayPlan<Real>;
pub type SessionOutcome = analytics::SessionOutcome<Real>;
pub type VehicleSummary = analytics::VehicleSummary<Real>;
pub type FleetInputs = pipeline::FleetInputs<Real>;
pub type FleetEvaluation = pipeline::FleetEvaluation<Real>;
