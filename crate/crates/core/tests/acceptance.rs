//! Acceptance gate. Every criterion prints one PASS/FAIL line to stderr
//! (uncaptured) and then asserts.
//!
//! The default grid is run once per test binary and shared: five policies,
//! ten SDR points, three seeds, plus FCFS on the 220 V / 30 A charger. Each
//! of those cells is also checked for conservation and rerun for
//! determinism.

use std::collections::HashMap;
use std::io::Write;
use std::sync::OnceLock;

use rayon::prelude::*;

use gridshare::config::{Scenario, DEFAULT_SDR_GRID};
use gridshare::engine::VehicleOutcome;
use gridshare::metrics::{fleet_for_seed, outcomes_csv, run_cell_with_fleet, CellResult};
use gridshare::oracle::verify_campaign;
use gridshare::policies::{PolicyKind, PolicySpec};
use gridshare::powergrid::{ChargerSpec, GridModel};
use gridshare::workload::Vehicle;
use gridshare::{KWH_PER_MILE, SLOTS_PER_DAY};

const SEEDS: [u64; 3] = [1, 2, 3];
const HIGH_POWER: &str = "fcfs@220v";

type Job<'a> = (String, &'a Scenario, &'a Vec<Vehicle>, PolicySpec, f64, u64);

fn verdict(id: &str, pass: bool, detail: String) {
    let line = format!(
        "[acceptance] {} {id}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{id}: {detail}");
}

#[derive(Debug, Clone)]
struct CellSummary {
    fod: f64,
    delays_min: Vec<f64>,
}

struct Grid {
    cells: HashMap<(String, u64, u64), CellSummary>,
    /// Per-cell integrity problems: conservation, departure rules, repeatability.
    problems: Vec<String>,
    checked: usize,
}

fn sdr_key(sdr: f64) -> u64 {
    (sdr * 1000.0).round() as u64
}

impl Grid {
    fn runs(&self, policy: &str, sdr: f64) -> Vec<&CellSummary> {
        SEEDS
            .iter()
            .filter_map(|&s| self.cells.get(&(policy.to_string(), sdr_key(sdr), s)))
            .collect()
    }

    fn fod(&self, policy: &str, sdr: f64) -> f64 {
        let runs = self.runs(policy, sdr);
        assert_eq!(
            runs.len(),
            SEEDS.len(),
            "missing cells for {policy} at {sdr}"
        );
        runs.iter().map(|c| c.fod).sum::<f64>() / runs.len() as f64
    }

    /// Delays over 120 min as a share of the delayed vehicles, seeds pooled.
    fn tail(&self, policy: &str, sdr: f64, minutes: f64) -> f64 {
        let delays: Vec<f64> = self
            .runs(policy, sdr)
            .iter()
            .flat_map(|c| c.delays_min.iter().copied())
            .collect();
        if delays.is_empty() {
            return 0.0;
        }
        delays.iter().filter(|d| **d > minutes).count() as f64 / delays.len() as f64
    }
}

/// Independent checks on one finished cell.
fn integrity(cell: &CellResult, fleet: &[Vehicle], charger: &ChargerSpec) -> Vec<String> {
    let tag = format!(
        "{} sdr={} seed={}",
        cell.policy.label(),
        cell.sdr,
        cell.seed
    );
    let mut bad = Vec::new();
    let mps = charger.miles_per_slot;
    let outcomes: &[VehicleOutcome] = &cell.run.outcomes;
    if outcomes.len() != fleet.len() {
        bad.push(format!(
            "{tag}: {} outcomes for {} vehicles",
            outcomes.len(),
            fleet.len()
        ));
        return bad;
    }
    for (o, v) in outcomes.iter().zip(fleet) {
        if o.id != v.id {
            bad.push(format!("{tag}: outcome order broken at {}", v.id));
            break;
        }
        let delivered = f64::from(o.slots_charged) * mps;
        let gained = o.final_miles - o.initial_miles;
        let clipped = (o.final_miles - v.battery_capacity_miles).abs() < 1e-9;
        let energy_ok = if clipped {
            gained <= delivered + 1e-9
        } else {
            (gained - delivered).abs() < 1e-6
        };
        if !energy_ok || o.final_miles > v.battery_capacity_miles + 1e-9 {
            bad.push(format!(
                "{tag}: vehicle {} energy {gained} vs {delivered}",
                v.id
            ));
        }
        if o.final_miles + 1e-9 < v.required_miles {
            bad.push(format!(
                "{tag}: vehicle {} left short of its requirement",
                v.id
            ));
        }
        if o.actual_departure_slot < v.expected_departure_slot
            || o.actual_departure_slot != o.satisfied_slot.max(v.expected_departure_slot)
        {
            bad.push(format!(
                "{tag}: vehicle {} departed at {}",
                v.id, o.actual_departure_slot
            ));
        }
    }
    for r in &cell.run.slots {
        let k = cell.grid.slot_vehicle_capacity(charger, r.slot);
        let avail = cell.grid.available_power(r.slot);
        if r.k != k || r.k as f64 * charger.kw() > avail + 1e-9 {
            bad.push(format!("{tag}: slot {} sized {} vs {k}", r.slot, r.k));
        }
        if r.selected != r.k.min(r.eligible) {
            bad.push(format!(
                "{tag}: slot {} selected {} with k={} eligible={}",
                r.slot, r.selected, r.k, r.eligible
            ));
        }
    }
    bad.truncate(5);
    bad
}

fn run_cell_checked(
    scenario: &Scenario,
    fleet: &[Vehicle],
    policy: PolicySpec,
    sdr: f64,
    seed: u64,
) -> (CellSummary, Vec<String>) {
    let cell = run_cell_with_fleet(scenario, fleet, policy, sdr, seed, false)
        .unwrap_or_else(|e| panic!("cell {} sdr={sdr} seed={seed}: {e}", policy.label()));
    let mut problems = integrity(&cell, fleet, &scenario.charger);
    let again = run_cell_with_fleet(scenario, fleet, policy, sdr, seed, false).unwrap();
    if outcomes_csv(&again.run.outcomes) != outcomes_csv(&cell.run.outcomes)
        || again.run.slots != cell.run.slots
    {
        problems.push(format!(
            "{} sdr={sdr} seed={seed}: repeat run differs",
            policy.label()
        ));
    }
    let summary = CellSummary {
        fod: cell.report.fod,
        delays_min: cell.report.delays_min,
    };
    (summary, problems)
}

fn grid() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(|| {
        let base = Scenario::default();
        let high = Scenario {
            charger: ChargerSpec::dryer_220_30(),
            ..Scenario::default()
        };
        let fleets: Vec<Vec<Vehicle>> = SEEDS
            .iter()
            .map(|&s| fleet_for_seed(&base, s).unwrap())
            .collect();
        let high_fleets: Vec<Vec<Vehicle>> = SEEDS
            .iter()
            .map(|&s| fleet_for_seed(&high, s).unwrap())
            .collect();

        let mut jobs: Vec<Job> = Vec::new();
        for kind in PolicyKind::ALL {
            for sdr in DEFAULT_SDR_GRID {
                for (i, &seed) in SEEDS.iter().enumerate() {
                    jobs.push((
                        kind.name().to_string(),
                        &base,
                        &fleets[i],
                        PolicySpec::new(kind),
                        sdr,
                        seed,
                    ));
                }
            }
        }
        for (i, &seed) in SEEDS.iter().enumerate() {
            let spec = PolicySpec::new(PolicyKind::Fcfs);
            jobs.push((
                HIGH_POWER.to_string(),
                &high,
                &high_fleets[i],
                spec,
                2.0,
                seed,
            ));
        }

        let results: Vec<_> = jobs
            .par_iter()
            .map(|(name, scenario, fleet, policy, sdr, seed)| {
                let (summary, problems) = run_cell_checked(scenario, fleet, *policy, *sdr, *seed);
                ((name.clone(), sdr_key(*sdr), *seed), summary, problems)
            })
            .collect();
        let checked = results.len();
        let mut cells = HashMap::new();
        let mut problems = Vec::new();
        for (key, summary, mut p) in results {
            cells.insert(key, summary);
            problems.append(&mut p);
        }
        Grid {
            cells,
            problems,
            checked,
        }
    })
}

#[test]
fn c01_minmax_dt_near_feasible_at_1_05() {
    let fod = grid().fod("minmax-dt", 1.05);
    verdict(
        "C1 minmax-dt FOD at SDR 1.05 < 5%",
        fod < 0.05,
        format!("FOD={fod:.4}"),
    );
}

#[test]
fn c02_fdfs_threshold() {
    let g = grid();
    let at: Vec<(f64, f64)> = DEFAULT_SDR_GRID
        .iter()
        .map(|&s| (s, g.fod("fdfs", s)))
        .collect();
    let fod_16 = g.fod("fdfs", 1.6);
    // Largest SDR on the grid that still delays at least 5%.
    let crossing = at
        .iter()
        .filter(|(_, f)| *f >= 0.05)
        .map(|(s, _)| *s)
        .fold(f64::NAN, f64::max);
    let pass = fod_16 < 0.05 && (1.2..=1.4).contains(&crossing);
    verdict(
        "C2 fdfs FOD < 5% at SDR 1.6 and >= 5% at 1.4 (one grid step)",
        pass,
        format!(
            "FOD(1.2)={:.4} FOD(1.4)={:.4} FOD(1.6)={fod_16:.4} last SDR with FOD>=5%: {crossing}",
            g.fod("fdfs", 1.2),
            g.fod("fdfs", 1.4)
        ),
    );
}

#[test]
fn c03_uninformed_thresholds() {
    let g = grid();
    let mut pass = true;
    let mut detail = Vec::new();
    for p in ["fcfs", "rr", "minmax-er"] {
        let lo = g.fod(p, 1.2);
        let hi = g.fod(p, 3.0);
        pass &= lo >= 0.10 && hi <= 0.15;
        detail.push(format!("{p}: FOD(1.2)={lo:.4} FOD(3)={hi:.4}"));
    }
    verdict(
        "C3 fcfs/rr/minmax-er FOD >= 10% at SDR 1.2 and <= 15% at SDR 3",
        pass,
        detail.join("; "),
    );
}

#[test]
fn c04_policy_ordering_at_1_2() {
    let g = grid();
    let order = ["minmax-dt", "fdfs", "fcfs", "rr", "minmax-er"];
    let fods: Vec<f64> = order.iter().map(|p| g.fod(p, 1.2)).collect();
    let pass = fods.windows(2).all(|w| w[0] <= w[1]);
    let detail = order
        .iter()
        .zip(&fods)
        .map(|(p, f)| format!("{p}={f:.4}"))
        .collect::<Vec<_>>()
        .join(" <= ");
    verdict("C4 FOD ordering at SDR 1.2", pass, detail);
}

#[test]
fn c05_delay_tail_at_1_2() {
    let g = grid();
    let fcfs = g.tail("fcfs", 1.2, 120.0);
    let rr = g.tail("rr", 1.2, 120.0);
    let er = g.tail("minmax-er", 1.2, 120.0);
    let er_all = er * g.fod("minmax-er", 1.2);
    let pass = fcfs > 0.05 && rr > 0.05 && (er - 0.35).abs() <= 0.15;
    verdict(
        "C5 share of delayed vehicles over 120 min at SDR 1.2: fcfs,rr > 5%, minmax-er 35% +/- 15",
        pass,
        format!(
            "fcfs={fcfs:.3} rr={rr:.3} minmax-er={er:.3} (minmax-er over 120 min as a share of all vehicles: {er_all:.3})"
        ),
    );
}

#[test]
fn c06_high_power_charger() {
    let g = grid();
    let high = g.fod(HIGH_POWER, 2.0);
    let low = g.fod("fcfs", 2.0);
    let pass = high <= 0.05 && (low - 0.10).abs() <= 0.05;
    verdict(
        "C6 fcfs at SDR 2: 220V/30A FOD <= 5%, 110V/15A FOD 10% +/- 5",
        pass,
        format!("220V={high:.4} 110V={low:.4}"),
    );
}

#[test]
fn c07_departure_adjustment_rate() {
    let scenario = Scenario::default();
    let mut adjusted = 0usize;
    let mut total = 0usize;
    for seed in SEEDS {
        let fleet = fleet_for_seed(&scenario, seed).unwrap();
        total += fleet.len();
        // Recomputed from the raw request rather than the stored flag.
        adjusted += fleet
            .iter()
            .filter(|v| {
                let deficit = (v.required_miles - v.initial_miles).max(0.0);
                let need = (deficit / scenario.charger.miles_per_slot - 1e-9)
                    .ceil()
                    .max(0.0) as u32;
                let requested = v.requested_departure_slot - v.arrival_slot;
                need.max(1) > requested
            })
            .count();
    }
    let rate = adjusted as f64 / total as f64;
    verdict(
        "C7 departure adjustment rate 5% +/- 3",
        (rate - 0.05).abs() <= 0.03,
        format!("rate={rate:.4} over {total} vehicles"),
    );
}

#[test]
fn c08_oracle_campaign() {
    let report = verify_campaign(500, 1).expect("campaign runs");
    let exact = report.counterexamples.is_empty();
    let pass = report.instances >= 500
        && report.violations.is_empty()
        && if exact {
            report.all_optimal()
        } else {
            report.never_dominated()
        };
    verdict(
        "C8 minmax-dt matches brute force on 500 tiny instances; audits clean",
        pass,
        format!(
            "instances={} optimal={} counterexamples={} dominated={} violations={}{}",
            report.instances,
            report.optimal,
            report.counterexamples.len(),
            report.dominated.len(),
            report.violations.len(),
            if exact {
                ""
            } else {
                " (fallback: never worse than another policy)"
            }
        ),
    );
}

#[test]
fn c09_conservation_and_determinism() {
    let g = grid();
    verdict(
        "C9 conservation, work conservation, no early departure, repeatability on every cell",
        g.problems.is_empty()
            && g.checked
                == PolicyKind::ALL.len() * DEFAULT_SDR_GRID.len() * SEEDS.len() + SEEDS.len(),
        format!(
            "{} cells checked, {} problems{}",
            g.checked,
            g.problems.len(),
            g.problems
                .first()
                .map(|p| format!(", first: {p}"))
                .unwrap_or_default()
        ),
    );
}

#[test]
fn c10_calibration_round_trip() {
    let scenario = Scenario::default();
    let mut worst: f64 = 0.0;
    for seed in SEEDS {
        let fleet = fleet_for_seed(&scenario, seed).unwrap();
        let days = scenario.workload.days;
        let tpr: f64 = fleet
            .iter()
            .map(|v| (v.required_miles - v.initial_miles).max(0.0) * KWH_PER_MILE)
            .sum::<f64>()
            / days as f64;
        for sdr in DEFAULT_SDR_GRID {
            let grid =
                GridModel::for_fleet(scenario.shape.clone(), 0.8, &fleet, days, sdr).unwrap();
            let tpa: f64 = (0..SLOTS_PER_DAY)
                .map(|t| grid.available_power(t) / 12.0)
                .sum();
            worst = worst.max((tpa / tpr - sdr).abs());
        }
    }
    verdict(
        "C10 recomputed TPA/TPR equals the SDR target within 1e-6",
        worst <= 1e-6,
        format!("max error={worst:.3e}"),
    );
}
