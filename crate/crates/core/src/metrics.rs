//! Delay metrics and parameter sweeps.
//!
//! FOD is the fraction of measured vehicles that leave late; ADFD is the
//! mean delay, in minutes, over the late vehicles only and is undefined when
//! nobody is late.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::config::{ExperimentConfig, Scenario};
use crate::engine::{measurement_filter, run_simulation, SimConfig, SimRun, VehicleOutcome};
use crate::policies::PolicySpec;
use crate::powergrid::GridModel;
use crate::workload::{generate_fleet, Vehicle, WorkloadConfig};
use crate::{Error, Result};

pub fn fraction_delayed(outcomes: &[VehicleOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::EmptyMeasurementWindow);
    }
    let delayed = outcomes.iter().filter(|o| o.delayed).count();
    Ok(delayed as f64 / outcomes.len() as f64)
}

/// Mean delay of the delayed vehicles in minutes; `None` when none is late.
pub fn average_delay_of_delayed(outcomes: &[VehicleOutcome]) -> Option<f64> {
    let delays = delayed_minutes(outcomes);
    mean(&delays)
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Delays (minutes) of the late vehicles, ascending.
pub fn delayed_minutes(outcomes: &[VehicleOutcome]) -> Vec<f64> {
    let mut d: Vec<f64> = outcomes
        .iter()
        .filter(|o| o.delayed)
        .map(VehicleOutcome::delay_minutes)
        .collect();
    d.sort_by(f64::total_cmp);
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayBin {
    pub lower_min: f64,
    pub upper_min: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayDistribution {
    /// Contiguous bins `[lower, upper)` from 0 up to the largest delay.
    pub bins: Vec<DelayBin>,
    /// `(minutes, fraction of delayed vehicles with delay ≤ minutes)` at
    /// every distinct delay.
    pub cdf: Vec<(f64, f64)>,
}

impl DelayDistribution {
    /// Share of delayed vehicles with delay strictly above `minutes`.
    pub fn fraction_above(&self, minutes: f64) -> f64 {
        let at_or_below = self
            .cdf
            .iter()
            .take_while(|(m, _)| *m <= minutes)
            .last()
            .map_or(0.0, |(_, f)| *f);
        1.0 - at_or_below
    }
}

/// Histogram and CDF of delays over the delayed vehicles.
pub fn delay_distribution(
    outcomes: &[VehicleOutcome],
    bin_width_min: f64,
) -> Result<DelayDistribution> {
    distribution_of(&delayed_minutes(outcomes), bin_width_min)
}

/// Same as [`delay_distribution`] from raw positive delays in minutes.
pub fn distribution_of(delays_min: &[f64], bin_width_min: f64) -> Result<DelayDistribution> {
    if !(bin_width_min > 0.0) || !bin_width_min.is_finite() {
        return Err(Error::InvalidBinWidth(bin_width_min));
    }
    if delays_min.is_empty() {
        return Err(Error::NoDelayedVehicles);
    }
    let mut sorted = delays_min.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;

    let n_bins = (sorted[sorted.len() - 1] / bin_width_min).floor() as usize + 1;
    let mut counts = vec![0usize; n_bins];
    for d in &sorted {
        counts[(d / bin_width_min).floor() as usize] += 1;
    }
    let bins = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| DelayBin {
            lower_min: i as f64 * bin_width_min,
            upper_min: (i + 1) as f64 * bin_width_min,
            fraction: c as f64 / n,
        })
        .collect();

    let mut cdf: Vec<(f64, f64)> = Vec::new();
    for (i, d) in sorted.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match cdf.last_mut() {
            Some(last) if last.0 == *d => last.1 = f,
            _ => cdf.push((*d, f)),
        }
    }
    Ok(DelayDistribution { bins, cdf })
}

/// Metrics for one (policy, SDR, seed) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub policy: String,
    pub sdr: f64,
    pub seed: u64,
    pub n_measured: usize,
    pub n_delayed: usize,
    pub fod: f64,
    pub adfd_minutes: Option<f64>,
    /// Delays of the measured late vehicles, ascending, in minutes.
    pub delays_min: Vec<f64>,
}

impl MetricsReport {
    pub fn from_outcomes(
        policy: &str,
        sdr: f64,
        seed: u64,
        measured: &[VehicleOutcome],
    ) -> Result<Self> {
        let delays_min = delayed_minutes(measured);
        Ok(Self {
            policy: policy.to_string(),
            sdr,
            seed,
            n_measured: measured.len(),
            n_delayed: delays_min.len(),
            fod: fraction_delayed(measured)?,
            adfd_minutes: mean(&delays_min),
            delays_min,
        })
    }

    pub fn distribution(&self, bin_width_min: f64) -> Result<DelayDistribution> {
        distribution_of(&self.delays_min, bin_width_min)
    }

    /// Share of the delayed vehicles whose delay exceeds `minutes`, `None`
    /// when no vehicle is delayed.
    pub fn tail_fraction(&self, minutes: f64) -> Option<f64> {
        if self.delays_min.is_empty() {
            return None;
        }
        let above = self.delays_min.iter().filter(|d| **d > minutes).count();
        Some(above as f64 / self.delays_min.len() as f64)
    }
}

/// Seed-aggregated metrics for one (policy, SDR) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedRow {
    pub policy: String,
    pub sdr: f64,
    pub seeds: usize,
    pub n_measured: usize,
    pub fod_mean: f64,
    pub fod_min: f64,
    pub fod_max: f64,
    /// Mean over the seeds that had delayed vehicles.
    pub adfd_mean: Option<f64>,
    pub adfd_min: Option<f64>,
    pub adfd_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    /// Canonical order: policy (configured order), SDR (grid order), seed.
    pub reports: Vec<MetricsReport>,
    pub averages: Vec<AveragedRow>,
}

impl SweepTable {
    pub fn from_reports(reports: Vec<MetricsReport>) -> Self {
        let averages = average_by_cell(&reports);
        Self { reports, averages }
    }

    pub fn average(&self, policy: &str, sdr: f64) -> Option<&AveragedRow> {
        self.averages
            .iter()
            .find(|a| a.policy == policy && a.sdr == sdr)
    }

    /// Delays of all seeds pooled for one (policy, SDR) pair.
    pub fn pooled_delays(&self, policy: &str, sdr: f64) -> Vec<f64> {
        let mut d: Vec<f64> = self
            .reports
            .iter()
            .filter(|r| r.policy == policy && r.sdr == sdr)
            .flat_map(|r| r.delays_min.iter().copied())
            .collect();
        d.sort_by(f64::total_cmp);
        d
    }
}

fn average_by_cell(reports: &[MetricsReport]) -> Vec<AveragedRow> {
    // Preserve first-appearance order of (policy, sdr).
    let mut order: Vec<(String, f64)> = Vec::new();
    let mut groups: BTreeMap<usize, Vec<&MetricsReport>> = BTreeMap::new();
    for r in reports {
        let idx = match order
            .iter()
            .position(|(p, s)| *p == r.policy && *s == r.sdr)
        {
            Some(i) => i,
            None => {
                order.push((r.policy.clone(), r.sdr));
                order.len() - 1
            }
        };
        groups.entry(idx).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(idx, rows)| {
            let fods: Vec<f64> = rows.iter().map(|r| r.fod).collect();
            let adfds: Vec<f64> = rows.iter().filter_map(|r| r.adfd_minutes).collect();
            let min = |v: &[f64]| v.iter().copied().reduce(f64::min);
            let max = |v: &[f64]| v.iter().copied().reduce(f64::max);
            AveragedRow {
                policy: order[idx].0.clone(),
                sdr: order[idx].1,
                seeds: rows.len(),
                n_measured: rows.iter().map(|r| r.n_measured).sum(),
                fod_mean: mean(&fods).unwrap_or(0.0),
                fod_min: min(&fods).unwrap_or(0.0),
                fod_max: max(&fods).unwrap_or(0.0),
                adfd_mean: mean(&adfds),
                adfd_min: min(&adfds),
                adfd_max: max(&adfds),
            }
        })
        .collect()
}

/// Everything produced by one cell run.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub policy: PolicySpec,
    pub sdr: f64,
    pub seed: u64,
    pub grid: GridModel,
    pub sim: SimConfig,
    pub run: SimRun,
    pub report: MetricsReport,
}

pub fn sim_config(scenario: &Scenario, policy: PolicySpec, sdr: f64, seed: u64) -> SimConfig {
    SimConfig {
        days: scenario.workload.days,
        warmup_days: scenario.warmup_days,
        last_measured_day: scenario.last_measured_day,
        ..SimConfig::new(policy, sdr, seed)
    }
}

pub fn fleet_for_seed(scenario: &Scenario, seed: u64) -> Result<Vec<Vehicle>> {
    let cfg = WorkloadConfig {
        seed,
        ..scenario.workload.clone()
    };
    generate_fleet(&cfg, &scenario.profile, &scenario.charger)
}

/// Calibrates the grid to `sdr` for `fleet` and runs one policy on it.
pub fn run_cell_with_fleet(
    scenario: &Scenario,
    fleet: &[Vehicle],
    policy: PolicySpec,
    sdr: f64,
    seed: u64,
    trace: bool,
) -> Result<CellResult> {
    let mut sim = sim_config(scenario, policy, sdr, seed);
    sim.trace = trace;
    sim.validate()?;
    let grid = GridModel::for_fleet(
        scenario.shape.clone(),
        scenario.peak_other_fraction,
        fleet,
        scenario.workload.days,
        sdr,
    )?;
    let run = run_simulation(&sim, fleet, &grid, &scenario.charger)?;
    let measured = measurement_filter(&run.outcomes, &sim)?;
    let report = MetricsReport::from_outcomes(&policy.label(), sdr, seed, &measured)?;
    Ok(CellResult {
        policy,
        sdr,
        seed,
        grid,
        sim,
        run,
        report,
    })
}

pub fn run_cell(
    scenario: &Scenario,
    policy: PolicySpec,
    sdr: f64,
    seed: u64,
    trace: bool,
) -> Result<CellResult> {
    let fleet = fleet_for_seed(scenario, seed)?;
    run_cell_with_fleet(scenario, &fleet, policy, sdr, seed, trace)
}

fn cell_name(policy: &PolicySpec, sdr: f64, seed: u64) -> String {
    format!("policy={} sdr={sdr} seed={seed}", policy.label())
}

/// Runs every (policy, SDR, seed) cell on a pool of `threads` workers
/// (`None` = one per core). `on_cell` sees each report as it completes, in
/// completion order; the returned table is in canonical order.
pub fn sweep<F>(cfg: &ExperimentConfig, threads: Option<usize>, on_cell: F) -> Result<SweepTable>
where
    F: Fn(&MetricsReport) + Sync,
{
    cfg.validate()?;
    let scenario = &cfg.scenario;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;

    pool.install(|| {
        let fleets: Vec<(u64, Vec<Vehicle>)> = cfg
            .seeds
            .par_iter()
            .map(|&seed| fleet_for_seed(scenario, seed).map(|f| (seed, f)))
            .collect::<Result<_>>()?;

        let policies = cfg.policy_specs();
        let mut cells = Vec::new();
        for (pi, policy) in policies.iter().enumerate() {
            for (si, &sdr) in cfg.sdr_grid.iter().enumerate() {
                for (fi, (seed, _)) in fleets.iter().enumerate() {
                    cells.push((pi, si, fi, *policy, sdr, *seed));
                }
            }
        }

        let mut reports: Vec<((usize, usize, usize), MetricsReport)> = cells
            .par_iter()
            .map(|&(pi, si, fi, policy, sdr, seed)| {
                run_cell_with_fleet(scenario, &fleets[fi].1, policy, sdr, seed, false)
                    .map(|cell| {
                        on_cell(&cell.report);
                        ((pi, si, fi), cell.report)
                    })
                    .map_err(|e| Error::Cell {
                        cell: cell_name(&policy, sdr, seed),
                        source: Box::new(e),
                    })
            })
            .collect::<Result<_>>()?;
        reports.sort_by_key(|r| r.0);
        Ok(SweepTable::from_reports(
            reports.into_iter().map(|(_, r)| r).collect(),
        ))
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// `policy,sdr,seed,n,fod`, per-seed rows then `seed=mean` rows.
pub fn fod_csv(table: &SweepTable) -> String {
    let mut out = String::from("policy,sdr,seed,n,fod\n");
    for r in &table.reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.policy, r.sdr, r.seed, r.n_measured, r.fod
        ));
    }
    if table.reports.len() > table.averages.len() {
        for a in &table.averages {
            out.push_str(&format!(
                "{},{},mean,{},{}\n",
                a.policy, a.sdr, a.n_measured, a.fod_mean
            ));
        }
    }
    out
}

/// `policy,sdr,seed,n_delayed,adfd_minutes` with `NA` when nobody is late.
pub fn adfd_csv(table: &SweepTable) -> String {
    let mut out = String::from("policy,sdr,seed,n_delayed,adfd_minutes\n");
    for r in &table.reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.policy,
            r.sdr,
            r.seed,
            r.n_delayed,
            fmt_opt(r.adfd_minutes)
        ));
    }
    if table.reports.len() > table.averages.len() {
        for a in &table.averages {
            let n: usize = table
                .reports
                .iter()
                .filter(|r| r.policy == a.policy && r.sdr == a.sdr)
                .map(|r| r.n_delayed)
                .sum();
            out.push_str(&format!(
                "{},{},mean,{},{}\n",
                a.policy,
                a.sdr,
                n,
                fmt_opt(a.adfd_mean)
            ));
        }
    }
    out
}

/// `policy,sdr,bin_lo_min,bin_hi_min,fraction`, delays pooled over seeds.
/// Pairs without any delayed vehicle contribute no rows.
pub fn delaydist_csv(table: &SweepTable, bin_width_min: f64) -> Result<String> {
    let mut out = String::from("policy,sdr,bin_lo_min,bin_hi_min,fraction\n");
    for a in &table.averages {
        let delays = table.pooled_delays(&a.policy, a.sdr);
        if delays.is_empty() {
            continue;
        }
        for b in distribution_of(&delays, bin_width_min)?.bins {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                a.policy, a.sdr, b.lower_min, b.upper_min, b.fraction
            ));
        }
    }
    Ok(out)
}

/// Seed mean with min/max band for FOD and ADFD.
pub fn summary_csv(table: &SweepTable) -> String {
    let mut out =
        String::from("policy,sdr,seeds,n,fod_mean,fod_min,fod_max,adfd_mean,adfd_min,adfd_max\n");
    for a in &table.averages {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            a.policy,
            a.sdr,
            a.seeds,
            a.n_measured,
            a.fod_mean,
            a.fod_min,
            a.fod_max,
            fmt_opt(a.adfd_mean),
            fmt_opt(a.adfd_min),
            fmt_opt(a.adfd_max)
        ));
    }
    out
}

/// Raw per-vehicle outcomes of one run.
pub fn outcomes_csv(outcomes: &[VehicleOutcome]) -> String {
    let mut out = String::from(
        "id,arrival_slot,expected_departure_slot,satisfied_slot,actual_departure_slot,delay_slots,measured\n",
    );
    for o in outcomes {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            o.id,
            o.arrival_slot,
            o.expected_departure_slot,
            o.satisfied_slot,
            o.actual_departure_slot,
            o.delay_slots,
            u8::from(o.measured)
        ));
    }
    out
}
