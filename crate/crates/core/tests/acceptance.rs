//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration as StdDuration, Instant};

use chrono::Duration;
use chrono_tz::America::Los_Angeles;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smartcharge::analytics::{behavior_stats, percent_reduction, DailyWindow};
use smartcharge::domain::Timestamp;
use smartcharge::moer::{correlate_rate_moer, CorrelationMode, HourlyMoer, MoerSeries};
use smartcharge::optimizer::{build_slots, day_region, oracle_optimize, optimize, Slot};
use smartcharge::pipeline::{evaluate_fleet, ScenarioSelection};
use smartcharge::profile::{ChargingProfile, Segment};
use smartcharge::synth::{generate_synthetic_fleet, SynthParams};
use smartcharge::tariff::shapes::two_period;
use smartcharge::tariff::TariffSchedule;
use smartcharge::{Exact, FleetEvaluation, FleetInputs, PlugInWindow};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Cost and kg of a profile priced slot by slot.
fn price_on_slots(slots: &[Slot<f64>], profile: &ChargingProfile<f64>) -> (f64, f64) {
    profile.segments().iter().fold((0.0, 0.0), |(c, e), seg| {
        let slot = slots
            .iter()
            .find(|s| s.start <= seg.start && seg.end <= s.end)
            .expect("segment inside one slot");
        (c + seg.energy_kwh * slot.price_usd_per_kwh, e + seg.energy_kwh * slot.moer_g_per_kwh / 1000.0)
    })
}

fn random_slots(rng: &mut ChaCha8Rng) -> (f64, Vec<Slot<f64>>) {
    let n = rng.gen_range(1..=12);
    let t0 = common::ts("2023-07-10T00:00:00Z");
    let ties = rng.gen_bool(0.5);
    let slots: Vec<Slot<f64>> = (0..n)
        .map(|i| {
            let (price, moer) = if ties {
                ([0.1, 0.2, 0.3][rng.gen_range(0..3)], [0.0, 250.0, 400.0][rng.gen_range(0..3)])
            } else {
                (rng.gen_range(0.05..0.6), rng.gen_range(0.0..900.0))
            };
            Slot {
                start: t0 + Duration::minutes(15 * i),
                end: t0 + Duration::minutes(15 * (i + 1)),
                price_usd_per_kwh: price,
                moer_g_per_kwh: moer,
                capacity_kwh: if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.1..3.0) },
            }
        })
        .collect();
    let total: f64 = slots.iter().map(|s| s.capacity_kwh).sum();
    let demand = if rng.gen_bool(0.05) { total } else { total * rng.gen_range(0.0..1.0) };
    (demand, slots)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_cost, mut worst_kg) = (0.0f64, 0.0f64);
    for case in 0..1000 {
        let (demand, slots) = random_slots(&mut rng);
        let greedy = optimize(demand, &slots).map_err(|e| format!("case {case}: {e}"))?;
        let oracle = oracle_optimize(demand, &slots).map_err(|e| format!("case {case}: {e}"))?;
        let (gc, ge) = price_on_slots(&slots, &greedy);
        let (oc, oe) = price_on_slots(&slots, &oracle);
        worst_cost = worst_cost.max((gc - oc).abs());
        worst_kg = worst_kg.max((ge - oe).abs());
        check((gc - oc).abs() <= 1e-9 && (ge - oe).abs() <= 1e-9, || {
            format!("case {case}: greedy ({gc}, {ge}) vs oracle ({oc}, {oe})")
        })?;
    }
    Ok(format!("1000 instances, max |dcost| {worst_cost:.1e}, max |dkg| {worst_kg:.1e}"))
}

struct Fleet {
    windows: Vec<PlugInWindow>,
    inputs: FleetInputs,
    eval: FleetEvaluation,
}

fn fleet() -> &'static Fleet {
    static FLEET: OnceLock<Fleet> = OnceLock::new();
    FLEET.get_or_init(|| {
        let synth = generate_synthetic_fleet(&SynthParams {
            vehicles: 200,
            seed: 42,
            ..SynthParams::default()
        })
        .expect("default params are valid");
        let windows = synth.validated_windows();
        let inputs = synth.inputs();
        let eval = evaluate_fleet(&windows, &inputs, Duration::minutes(15), ScenarioSelection::Both);
        Fleet { windows, inputs, eval }
    })
}

fn rel_le(a: f64, b: f64, tol: f64) -> bool {
    a <= b + tol * 1f64.max(b.abs())
}

fn criterion_2() -> Outcome {
    let f = fleet();
    check(f.eval.skipped.is_empty(), || format!("{} windows skipped: {:?}", f.eval.skipped.len(), f.eval.skipped.first()))?;
    check(f.eval.evaluations.len() == f.windows.len(), || "not every window evaluated".into())?;
    let by_id: BTreeMap<&str, &PlugInWindow> = f.windows.iter().map(|w| (w.window_id(), w)).collect();
    let mut worst = 0.0f64;
    for e in &f.eval.evaluations {
        let w = by_id[e.outcome.window_id.as_str()];
        let p = &e.constrained_profile;
        let err = (p.total_energy_kwh() - w.demand_kwh()).abs();
        worst = worst.max(err);
        check(err <= 1e-6, || format!("{}: delivered {} of {}", w.window_id(), p.total_energy_kwh(), w.demand_kwh()))?;
        check(p.is_within(&w.range()), || format!("{}: constrained profile leaves the window", w.window_id()))?;
        check(p.is_non_overlapping(), || format!("{}: overlapping segments", w.window_id()))?;
        check(rel_le(p.peak_power_kw(), w.rated_power_kw(), 1e-9), || {
            format!("{}: {} kW over rating {}", w.window_id(), p.peak_power_kw(), w.rated_power_kw())
        })?;
    }
    for plan in &f.eval.day_plans {
        let members: Vec<&PlugInWindow> = plan.window_ids.iter().map(|id| by_id[id.as_str()]).collect();
        let demand: f64 = members.iter().map(|w| w.demand_kwh()).sum();
        let rated = members.iter().map(|w| w.rated_power_kw()).fold(0.0, f64::max);
        let tz = f.inputs.catalog.utility(members[0].utility_id()).unwrap().timezone;
        let mut expected = day_region(&members[0].range(), tz);
        for w in &members[1..] {
            let r = day_region(&w.range(), tz);
            expected.start = expected.start.min(r.start);
            expected.end = expected.end.max(r.end);
        }
        let err = (plan.profile.total_energy_kwh() - demand).abs();
        worst = worst.max(err);
        check(err <= 1e-6, || format!("plan {:?}: delivered {} of {demand}", plan.window_ids, plan.profile.total_energy_kwh()))?;
        check(plan.region == expected && plan.profile.is_within(&expected), || {
            format!("plan {:?}: profile outside its local days", plan.window_ids)
        })?;
        check(rel_le(plan.profile.peak_power_kw(), rated, 1e-9), || format!("plan {:?}: over rating", plan.window_ids))?;
    }
    Ok(format!(
        "{} windows, {} day plans, max energy error {worst:.1e} kWh",
        f.eval.evaluations.len(),
        f.eval.day_plans.len()
    ))
}

fn criterion_3() -> Outcome {
    let f = fleet();
    let mut flat = 0;
    for e in &f.eval.evaluations {
        let o = &e.outcome;
        let (cc, uc) = (o.constrained_cost_usd.unwrap(), o.unconstrained_cost_usd.unwrap());
        check(uc <= cc + 1e-9, || format!("{}: unconstrained ${uc} > constrained ${cc}", o.window_id))?;
        if !o.has_tou {
            flat += 1;
            let (ce, ue) = (o.constrained_emissions_kg.unwrap(), o.unconstrained_emissions_kg.unwrap());
            check(rel_le(ue, ce, 1e-9), || format!("{}: unconstrained {ue} kg > constrained {ce} kg", o.window_id))?;
        }
    }
    Ok(format!("{} windows, {flat} on flat tariffs", f.eval.evaluations.len()))
}

fn criterion_4() -> Outcome {
    let f = fleet();
    let by_id: BTreeMap<&str, &PlugInWindow> = f.windows.iter().map(|w| (w.window_id(), w)).collect();
    for e in &f.eval.evaluations {
        let o = &e.outcome;
        let w = by_id[o.window_id.as_str()];
        let billing = f.inputs.tariffs.get(&o.billing_tariff_id).unwrap();
        let observed = ChargingProfile::from_intervals(w.intervals());
        let repriced = billing.cost_of(&observed);
        let cc = o.constrained_cost_usd.unwrap();
        check(cc <= repriced + 1e-9, || format!("{}: constrained ${cc} > observed ${repriced} on {}", o.window_id, o.billing_tariff_id))?;
        if !o.has_tou {
            let ce = o.constrained_emissions_kg.unwrap();
            check(rel_le(ce, o.baseline_emissions_kg, 1e-9), || {
                format!("{}: constrained {ce} kg > baseline {} kg", o.window_id, o.baseline_emissions_kg)
            })?;
        }
    }
    Ok(format!("{} windows repriced on their billing tariff", f.eval.evaluations.len()))
}

fn criterion_5() -> Outcome {
    let f = fleet();
    let mut increased = 0;
    let mut tou = 0;
    for e in &f.eval.evaluations {
        let o = &e.outcome;
        if o.has_tou {
            tou += 1;
        }
        if o.cost_increased {
            increased += 1;
            let utility = f.inputs.catalog.utility(&o.utility_id).unwrap();
            let switched = utility.ev_tariff_id.as_deref().is_some_and(|ev| ev != utility.standard_tariff_id);
            check(switched && o.tariff_switched, || format!("{}: cost increased without a tariff switch", o.window_id))?;
        }
    }
    Ok(format!("{increased} of {tou} time-of-use windows cost more, all after a tariff switch"))
}

fn criterion_6() -> Outcome {
    let windows = common::windows();
    let inputs = common::inputs();
    let eval = evaluate_fleet(&windows, &inputs, Duration::minutes(15), ScenarioSelection::Both);
    check(eval.skipped.is_empty(), || format!("skipped: {:?}", eval.skipped))?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    for exp in &common::EXPECTED {
        let o = &eval
            .evaluations
            .iter()
            .find(|e| e.outcome.window_id == exp.window_id)
            .ok_or_else(|| format!("{} missing", exp.window_id))?
            .outcome;
        let got = [
            (o.baseline_cost_usd, o.baseline_emissions_kg),
            (o.constrained_cost_usd.unwrap(), o.constrained_emissions_kg.unwrap()),
            (o.unconstrained_cost_usd.unwrap(), o.unconstrained_emissions_kg.unwrap()),
        ];
        let want = [exp.baseline, exp.constrained, exp.unconstrained];
        for (label, (g, w)) in ["baseline", "constrained", "unconstrained"].iter().zip(got.iter().zip(want.iter())) {
            check(close(g.0, w.0) && close(g.1, w.1), || format!("{} {label}: got {g:?}, expected {w:?}", exp.window_id))?;
        }

        // the constrained optimum on hourly slots, checked by exhaustive search
        let w = windows.iter().find(|w| w.window_id() == exp.window_id).unwrap();
        let utility = inputs.catalog.utility(w.utility_id()).unwrap();
        let tariff = inputs.tariffs.get(utility.ev_tariff_id.as_ref().unwrap_or(&utility.standard_tariff_id)).unwrap();
        let hourly = &inputs.moer[w.region_id()];
        let slots = build_slots(&w.range(), w.rated_power_kw(), tariff, hourly, Duration::hours(1)).map_err(|e| e.to_string())?;
        let oracle = oracle_optimize(w.demand_kwh(), &slots).map_err(|e| e.to_string())?;
        let (c, kg) = price_on_slots(&slots, &oracle);
        check(close(c, exp.constrained.0) && close(kg, exp.constrained.1), || {
            format!("{}: oracle on {} hourly slots gives ({c}, {kg})", exp.window_id, slots.len())
        })?;
    }
    let flat = eval.evaluations.iter().find(|e| !e.outcome.has_tou).unwrap();
    check(!flat.outcome.tariff_switched, || "flat vehicle should keep its tariff".into())?;
    Ok("baseline, constrained and unconstrained match hand values; hourly oracle agrees".into())
}

fn criterion_7() -> Outcome {
    let p = percent_reduction(100.0f64, 78.5).map_err(|e| e.to_string())?;
    check((p - 21.5).abs() <= 1e-12, || format!("percent_reduction(100, 78.5) = {p}"))?;

    // MOER an exact affine decreasing function of price
    let tariff = TariffSchedule::new(two_period("t", "u", 0.25, 0.55, (16, 0), (21, 0)), Los_Angeles).unwrap();
    let start = common::ts("2023-06-29T00:00:00Z");
    let hours: Vec<(Timestamp, f64)> = (0..24 * 35)
        .map(|h| {
            let t = start + Duration::hours(h);
            (t, 900.0 - 1000.0 * tariff.rate_at(&t))
        })
        .collect();
    let hourly = HourlyMoer::from_hours("r", &hours);
    for mode in [CorrelationMode::HourOfDay, CorrelationMode::Pairwise] {
        let r = correlate_rate_moer(&tariff, &hourly, 2023, 7, mode).map_err(|e| e.to_string())?;
        check((r + 1.0).abs() <= 1e-9, || format!("{mode:?} correlation {r}"))?;
    }

    // hourly averaging of hour-constant MOER conserves emissions exactly
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t0 = common::ts("2023-07-10T00:00:00Z");
    for case in 0..200 {
        let per_hour: Vec<Exact> = (0..48).map(|_| Exact::new(rng.gen_range(0..9000), rng.gen_range(1..8))).collect();
        let points: Vec<(Timestamp, Exact)> = (0..48 * 12)
            .map(|k| {
                let t = t0 + Duration::minutes(5 * k);
                (t, per_hour[(k / 12) as usize])
            })
            .collect();
        let series = MoerSeries::new("r", Duration::minutes(5), points).unwrap();
        let segments: Vec<Segment<Exact>> = (0..rng.gen_range(1..4))
            .map(|_| {
                let s = rng.gen_range(0..47 * 60);
                let len = rng.gen_range(1..=(48 * 60 - s).min(600));
                Segment::new(t0 + Duration::minutes(s), t0 + Duration::minutes(s + len), Exact::new(rng.gen_range(1..50_000), 1000))
            })
            .collect();
        let profile = ChargingProfile::new(segments);
        let native = series.emissions_of(&profile).map_err(|e| e.to_string())?;
        let averaged = series.hourly_average().emissions_of(&profile).map_err(|e| e.to_string())?;
        check(native == averaged, || format!("case {case}: {native} != {averaged}"))?;
    }
    Ok("21.5%, r = -1 in both modes, 200 exact averaging cases".into())
}

fn criterion_8() -> Outcome {
    let params = SynthParams {
        vehicles: 500,
        seed: 2024,
        ..SynthParams::default()
    };
    let synth = generate_synthetic_fleet(&params).map_err(|e| e.to_string())?;
    let windows = synth.validated_windows();
    let (stats, _) = behavior_stats(&windows, &synth.catalog, Duration::minutes(15), DailyWindow::evening_peak());
    let sessions = windows.len() as f64 / params.vehicles as f64;
    let daily = stats.daily_energy_per_vehicle_kwh.as_ref().unwrap().mean;
    let within = |x: f64, target: f64| (x - target).abs() <= 0.1 * target;
    check(within(sessions, params.mean_sessions_per_vehicle), || format!("mean sessions {sessions:.1}"))?;
    check(within(daily, params.mean_daily_energy_kwh), || format!("mean daily energy {daily:.2} kWh"))?;
    check((stats.immediate_start_share - params.immediate_start_fraction).abs() <= 0.05, || {
        format!("immediate share {:.3}", stats.immediate_start_share)
    })?;
    check((stats.peak_start_share - params.peak_start_fraction).abs() <= 0.05, || format!("peak share {:.3}", stats.peak_start_share))?;
    Ok(format!(
        "sessions/vehicle {sessions:.1}, daily energy {daily:.2} kWh, immediate {:.3}, peak {:.3}",
        stats.immediate_start_share, stats.peak_start_share
    ))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_smartcharge"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("data");
    let data_s = data.to_str().unwrap();
    run_cli(&["synth", "--out", data_s, "--vehicles", "12", "--seed", "9"])?;
    let config = data.join("config.json");
    let out = dir.path().join("run");
    let args = ["optimize", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let files = ["summary.json", "outcomes.csv", "vehicles.csv", "windows.csv"];
    run_cli(&args)?;
    let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(out.join(f)).unwrap_or_default()).collect();
    run_cli(&args)?;
    for (f, before) in files.iter().zip(&first) {
        let after = std::fs::read(out.join(f)).map_err(|e| e.to_string())?;
        check(!after.is_empty() && &after == before, || format!("{f} differs between runs"))?;
    }
    Ok(format!("{} report files byte-identical across two runs", files.len()))
}

fn main() {
    let criteria: [(u8, &str, fn() -> Outcome, u64); 9] = [
        (1, "oracle equivalence", criterion_1, 60),
        (2, "conservation and containment", criterion_2, 30),
        (3, "scenario dominance", criterion_3, 30),
        (4, "same-tariff improvement", criterion_4, 30),
        (5, "cost increases only via tariff switch", criterion_5, 30),
        (6, "two-vehicle fixture", criterion_6, 1),
        (7, "formula checks", criterion_7, 60),
        (8, "generator targets", criterion_8, 60),
        (9, "end-to-end determinism", criterion_9, 120),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, run, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == id.to_string()) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let elapsed = started.elapsed();
        let result = match result {
            Ok(detail) if elapsed > StdDuration::from_secs(budget) => {
                Err(format!("{detail}; took {:.1}s, budget {budget}s", elapsed.as_secs_f64()))
            }
            other => other,
        };
        match result {
            Ok(detail) => println!("criterion {id} [{name}]: PASS ({detail}; {:.2}s)", elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} [{name}]: FAIL ({detail}; {:.2}s)", elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
