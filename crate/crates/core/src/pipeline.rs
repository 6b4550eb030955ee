//! Per-window evaluation of a fleet: baseline accounting, constrained
//! re-optimization, and joint unconstrained re-optimization per vehicle day.

use std::collections::BTreeMap;

use chrono::Duration;
use chrono_tz::Tz;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{baseline_accounting, AnalyticsError, SessionOutcome};
use crate::domain::{Catalog, PlugInWindow};
use crate::moer::{HourlyMoer, MoerError};
use crate::num::{le_tol, sum, Scalar};
use crate::optimizer::{group_by_day, optimize_constrained, optimize_day_group, DayPlan, OptimizeError, ScenarioKind};
use crate::profile::ChargingProfile;
use crate::tariff::{billing_tariff, BillingScenario, TariffBook, TariffError, TariffSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioSelection {
    Constrained,
    Unconstrained,
    #[default]
    Both,
}

impl ScenarioSelection {
    pub fn includes(self, kind: ScenarioKind) -> bool {
        matches!(
            (self, kind),
            (ScenarioSelection::Both, _)
                | (ScenarioSelection::Constrained, ScenarioKind::Constrained)
                | (ScenarioSelection::Unconstrained, ScenarioKind::Unconstrained)
        )
    }
}

/// Catalog, tariffs, and hourly MOER by region.
#[derive(Debug, Clone)]
pub struct FleetInputs<S> {
    pub catalog: Catalog,
    pub tariffs: TariffBook<S>,
    pub moer: BTreeMap<String, HourlyMoer<S>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SkippedWindow {
    pub window_id: String,
    pub vehicle_id: String,
    pub reason: String,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct WindowEvaluation<S> {
    pub outcome: SessionOutcome<S>,
    /// Optimized schedule inside the plug-in window.
    pub constrained_profile: ChargingProfile<S>,
    /// Index into [`FleetEvaluation::day_plans`] of the joint plan covering
    /// this window, when the unconstrained scenario ran.
    pub day_plan: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct FleetEvaluation<S> {
    /// Sorted by vehicle, then plug-in.
    pub evaluations: Vec<WindowEvaluation<S>>,
    pub day_plans: Vec<DayPlan<S>>,
    pub skipped: Vec<SkippedWindow>,
}

#[derive(Debug)]
enum SkipReason {
    Overlap(String),
    Tariff(TariffError),
    Moer(MoerError),
    Optimize(OptimizeError),
    Analytics(AnalyticsError),
}

impl SkipReason {
    fn kind(&self) -> &'static str {
        match self {
            SkipReason::Overlap(_) => "OverlappingWindows",
            SkipReason::Tariff(TariffError::MissingTariffDefinition { .. }) => "MissingTariffDefinition",
            SkipReason::Tariff(TariffError::Invalid { .. }) => "InvalidTariff",
            SkipReason::Moer(MoerError::CoverageGap { .. })
            | SkipReason::Optimize(OptimizeError::Moer(MoerError::CoverageGap { .. }))
            | SkipReason::Analytics(AnalyticsError::Moer(MoerError::CoverageGap { .. })) => "MoerCoverageGap",
            SkipReason::Moer(_) | SkipReason::Optimize(OptimizeError::Moer(_)) => "InvalidMoer",
            SkipReason::Optimize(OptimizeError::InfeasibleDemand { .. }) => "InfeasibleDemand",
            SkipReason::Optimize(_) => "OptimizeError",
            SkipReason::Analytics(AnalyticsError::Tariff(_)) => "MissingTariffDefinition",
            SkipReason::Analytics(_) => "AccountingError",
        }
    }

    fn detail(&self) -> String {
        match self {
            SkipReason::Overlap(d) => d.clone(),
            SkipReason::Tariff(e) => e.to_string(),
            SkipReason::Moer(e) => e.to_string(),
            SkipReason::Optimize(e) => e.to_string(),
            SkipReason::Analytics(e) => e.to_string(),
        }
    }

    fn skip<S: Scalar>(&self, w: &PlugInWindow<S>) -> SkippedWindow {
        SkippedWindow {
            window_id: w.window_id().to_string(),
            vehicle_id: w.vehicle_id().to_string(),
            reason: self.kind().to_string(),
            detail: self.detail(),
        }
    }
}

/// Baseline and constrained results for one window, before the joint
/// unconstrained pass.
struct Partial<'a, S> {
    window: &'a PlugInWindow<S>,
    tz: Tz,
    billing: &'a TariffSchedule<S>,
    hourly: &'a HourlyMoer<S>,
    baseline_tariff_id: String,
    baseline: (S, S),
    constrained_profile: ChargingProfile<S>,
    constrained: (S, S),
}

fn evaluate_constrained<'a, S: Scalar>(
    window: &'a PlugInWindow<S>,
    inputs: &'a FleetInputs<S>,
    slot_len: Duration,
) -> Result<Partial<'a, S>, SkipReason> {
    // validated windows always reference catalog entries
    let utility = inputs.catalog.utility(window.utility_id()).expect("validated utility");
    let baseline_tariff = billing_tariff(utility, BillingScenario::Baseline, &inputs.tariffs).map_err(SkipReason::Tariff)?;
    let billing = billing_tariff(utility, BillingScenario::Optimized, &inputs.tariffs).map_err(SkipReason::Tariff)?;
    let hourly = inputs.moer.get(window.region_id()).ok_or_else(|| {
        SkipReason::Moer(MoerError::CoverageGap {
            region_id: window.region_id().to_string(),
            hour: "(no series loaded)".to_string(),
        })
    })?;
    let baseline = baseline_accounting(window, &inputs.catalog, &inputs.tariffs, hourly).map_err(SkipReason::Analytics)?;
    let profile = optimize_constrained(window, billing, hourly, slot_len).map_err(SkipReason::Optimize)?;
    let constrained = (
        billing.cost_of(&profile),
        hourly.emissions_of(&profile).map_err(SkipReason::Moer)?,
    );
    Ok(Partial {
        window,
        tz: utility.timezone,
        billing,
        hourly,
        baseline_tariff_id: baseline_tariff.tariff_id().to_string(),
        baseline,
        constrained_profile: profile,
        constrained,
    })
}

/// Splits a group total across windows in proportion to each window's
/// constrained value, or to demand when those are all zero.
fn proportional<S: Scalar>(total: S, weights: &[S], fallback: &[S]) -> Vec<S> {
    let w_sum = sum(weights.iter().copied());
    let (weights, w_sum) = if w_sum > S::zero() {
        (weights, w_sum)
    } else {
        (fallback, sum(fallback.iter().copied()))
    };
    weights.iter().map(|w| total * *w / w_sum).collect()
}

struct VehicleResult<S> {
    evaluations: Vec<WindowEvaluation<S>>,
    plans: Vec<DayPlan<S>>,
    skipped: Vec<SkippedWindow>,
}

fn evaluate_vehicle<S: Scalar>(
    mut windows: Vec<&PlugInWindow<S>>,
    inputs: &FleetInputs<S>,
    slot_len: Duration,
    scenarios: ScenarioSelection,
) -> VehicleResult<S> {
    windows.sort_by(|a, b| a.plug_in().cmp(&b.plug_in()).then_with(|| a.window_id().cmp(b.window_id())));
    let mut skipped = Vec::new();
    let mut partials: Vec<Partial<S>> = Vec::new();
    let mut last_end = None;
    let mut last_id = String::new();
    for w in windows {
        if let Some(end) = last_end {
            if w.plug_in() < end {
                let reason = SkipReason::Overlap(format!("overlaps window {last_id} of the same vehicle"));
                skipped.push(reason.skip(w));
                continue;
            }
        }
        last_end = Some(w.plug_out());
        last_id = w.window_id().to_string();
        match evaluate_constrained(w, inputs, slot_len) {
            Ok(p) => partials.push(p),
            Err(reason) => skipped.push(reason.skip(w)),
        }
    }

    let mut unconstrained: Vec<Option<(S, S, usize)>> = vec![None; partials.len()];
    let mut plans = Vec::new();
    let mut dropped = vec![false; partials.len()];
    if scenarios.includes(ScenarioKind::Unconstrained) {
        let refs: Vec<&PlugInWindow<S>> = partials.iter().map(|p| p.window).collect();
        for group in group_by_day(&refs, |w| inputs.catalog.utility(w.utility_id()).expect("validated utility").timezone) {
            let head = &partials[group[0]];
            let members: Vec<&PlugInWindow<S>> = group.iter().map(|&i| partials[i].window).collect();
            let result = optimize_day_group(&members, head.tz, head.billing, head.hourly, slot_len)
                .map_err(SkipReason::Optimize)
                .and_then(|plan| {
                    let kg = head.hourly.emissions_of(&plan.profile).map_err(SkipReason::Moer)?;
                    Ok((head.billing.cost_of(&plan.profile), kg, plan))
                });
            match result {
                Ok((cost, kg, plan)) => {
                    let demand: Vec<S> = group.iter().map(|&i| partials[i].window.demand_kwh()).collect();
                    let c_cost: Vec<S> = group.iter().map(|&i| partials[i].constrained.0).collect();
                    let c_kg: Vec<S> = group.iter().map(|&i| partials[i].constrained.1).collect();
                    let costs = proportional(cost, &c_cost, &demand);
                    let kgs = proportional(kg, &c_kg, &demand);
                    for (k, &i) in group.iter().enumerate() {
                        unconstrained[i] = Some((costs[k], kgs[k], plans.len()));
                    }
                    plans.push(plan);
                }
                Err(reason) => {
                    for &i in &group {
                        dropped[i] = true;
                        skipped.push(reason.skip(partials[i].window));
                    }
                }
            }
        }
    }

    let with_constrained = scenarios.includes(ScenarioKind::Constrained);
    let evaluations = partials
        .into_iter()
        .zip(unconstrained)
        .zip(dropped)
        .filter(|(_, d)| !d)
        .map(|((p, u), _)| {
            let w = p.window;
            let outcome = SessionOutcome {
                window_id: w.window_id().to_string(),
                vehicle_id: w.vehicle_id().to_string(),
                utility_id: w.utility_id().to_string(),
                region_id: w.region_id().to_string(),
                plug_in: w.plug_in(),
                plug_out: w.plug_out(),
                demand_kwh: w.demand_kwh(),
                tariff_switched: p.baseline_tariff_id != p.billing.tariff_id(),
                baseline_tariff_id: p.baseline_tariff_id,
                billing_tariff_id: p.billing.tariff_id().to_string(),
                has_tou: p.billing.is_tou(),
                baseline_cost_usd: p.baseline.0,
                baseline_emissions_kg: p.baseline.1,
                constrained_cost_usd: with_constrained.then_some(p.constrained.0),
                constrained_emissions_kg: with_constrained.then_some(p.constrained.1),
                unconstrained_cost_usd: u.map(|u| u.0),
                unconstrained_emissions_kg: u.map(|u| u.1),
                cost_increased: !le_tol(p.constrained.0, p.baseline.0),
            };
            WindowEvaluation {
                outcome,
                constrained_profile: p.constrained_profile,
                day_plan: u.map(|u| u.2),
            }
        })
        .collect();
    VehicleResult {
        evaluations,
        plans,
        skipped,
    }
}

/// Evaluates every window. Windows that cannot be evaluated (missing MOER
/// coverage, missing tariffs, overlapping windows of one vehicle) are
/// itemized in `skipped`. Vehicles are processed in parallel and merged in
/// vehicle order, so the result does not depend on scheduling.
pub fn evaluate_fleet<S: Scalar>(
    windows: &[PlugInWindow<S>],
    inputs: &FleetInputs<S>,
    slot_len: Duration,
    scenarios: ScenarioSelection,
) -> FleetEvaluation<S> {
    let mut by_vehicle: BTreeMap<&str, Vec<&PlugInWindow<S>>> = BTreeMap::new();
    for w in windows {
        by_vehicle.entry(w.vehicle_id()).or_default().push(w);
    }
    let results: Vec<VehicleResult<S>> = by_vehicle
        .into_values()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|ws| evaluate_vehicle(ws, inputs, slot_len, scenarios))
        .collect();
    let mut fleet = FleetEvaluation {
        evaluations: Vec::new(),
        day_plans: Vec::new(),
        skipped: Vec::new(),
    };
    for r in results {
        let offset = fleet.day_plans.len();
        fleet.evaluations.extend(r.evaluations.into_iter().map(|mut e| {
            e.day_plan = e.day_plan.map(|i| i + offset);
            e
        }));
        fleet.day_plans.extend(r.plans);
        fleet.skipped.extend(r.skipped);
    }
    fleet
}
