//! Independent checks for small instances.
//!
//! [`brute_force_min_max_delay`] searches every work-conserving on/off
//! schedule and never calls into the policies module. [`audit_trace`] reads
//! an engine trace and re-derives each slot's expected selection from the
//! recorded vehicle state with its own priority arithmetic.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{simulate, PeriodicCapacity, TraceRow, TRACE_HEADER};
use crate::policies::{FdfsOrder, PolicyKind, PolicySpec};
use crate::workload::Vehicle;
use crate::{Error, Result, Slot, VehicleId};

pub const MAX_TINY_VEHICLES: usize = 5;
pub const MAX_TINY_HORIZON: u32 = 30;
pub const DEFAULT_SEARCH_BUDGET: u64 = 10_000_000;

/// A desk-scale instance with an explicit per-slot capacity table, repeated
/// past the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyInstance {
    pub vehicles: Vec<Vehicle>,
    pub horizon: u32,
    pub k_profile: Vec<usize>,
    pub miles_per_slot: f64,
}

fn intervals_needed(v: &Vehicle, miles_per_slot: f64) -> u32 {
    let gap = v.required_miles - v.current_miles;
    if gap > 0.0 {
        (gap / miles_per_slot).ceil() as u32
    } else {
        0
    }
}

impl TinyInstance {
    pub fn new(vehicles: Vec<Vehicle>, k_profile: Vec<usize>, miles_per_slot: f64) -> Result<Self> {
        let horizon = k_profile.len() as u32;
        if vehicles.len() > MAX_TINY_VEHICLES {
            return Err(Error::config(format!(
                "tiny instance allows at most {MAX_TINY_VEHICLES} vehicles"
            )));
        }
        if horizon == 0 || horizon > MAX_TINY_HORIZON {
            return Err(Error::config(format!(
                "tiny instance horizon must be 1..={MAX_TINY_HORIZON} slots"
            )));
        }
        if !(miles_per_slot > 0.0) {
            return Err(Error::config("miles per slot must be positive"));
        }
        let need: u32 = vehicles
            .iter()
            .map(|v| intervals_needed(v, miles_per_slot))
            .sum();
        if need > 0 && k_profile.iter().all(|&k| k == 0) {
            return Err(Error::config("capacity profile never charges anyone"));
        }
        Ok(Self {
            vehicles,
            horizon,
            k_profile,
            miles_per_slot,
        })
    }

    fn k_at(&self, t: Slot) -> usize {
        self.k_profile[(t % self.horizon) as usize]
    }

    /// Runs the engine on this instance with the given policy.
    pub fn run(&self, policy: PolicySpec, trace: bool) -> Result<crate::engine::SimRun> {
        simulate(
            policy,
            &self.vehicles,
            &PeriodicCapacity(self.k_profile.clone()),
            self.miles_per_slot,
            trace,
        )
    }
}

struct Search<'a> {
    inst: &'a TinyInstance,
    arrival: Vec<Slot>,
    departure: Vec<Slot>,
    memo: HashMap<(Slot, Vec<u32>), u32>,
    nodes: u64,
    budget: u64,
}

impl Search<'_> {
    /// Smallest achievable maximum delay of the vehicles still needing charge.
    fn best(&mut self, t: Slot, needs: &[u32]) -> Result<u32> {
        if needs.iter().all(|&n| n == 0) {
            return Ok(0);
        }
        if let Some(&v) = self.memo.get(&(t, needs.to_vec())) {
            return Ok(v);
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::InstanceTooLarge(self.budget));
        }

        let active: Vec<usize> = (0..needs.len())
            .filter(|&i| needs[i] > 0 && self.arrival[i] <= t)
            .collect();
        let k = self.inst.k_at(t).min(active.len());
        let result = if k == 0 {
            self.best(t + 1, needs)?
        } else {
            let mut best = u32::MAX;
            let mut subset: Vec<usize> = (0..k).collect();
            loop {
                let mut next = needs.to_vec();
                let mut finished_delay = 0;
                for &s in &subset {
                    let i = active[s];
                    next[i] -= 1;
                    if next[i] == 0 {
                        finished_delay =
                            finished_delay.max((t + 1).saturating_sub(self.departure[i]));
                    }
                }
                if finished_delay < best {
                    let rest = self.best(t + 1, &next)?;
                    best = best.min(finished_delay.max(rest));
                }
                if !next_combination(&mut subset, active.len()) {
                    break;
                }
            }
            best
        };
        self.memo.insert((t, needs.to_vec()), result);
        Ok(result)
    }
}

/// Advances `c` to the next k-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact minimum, over all on/off schedules, of the largest per-vehicle
/// delay in slots.
pub fn brute_force_min_max_delay(inst: &TinyInstance) -> Result<u32> {
    brute_force_with_budget(inst, DEFAULT_SEARCH_BUDGET)
}

pub fn brute_force_with_budget(inst: &TinyInstance, budget: u64) -> Result<u32> {
    let needs: Vec<u32> = inst
        .vehicles
        .iter()
        .map(|v| intervals_needed(v, inst.miles_per_slot))
        .collect();
    let start = inst
        .vehicles
        .iter()
        .map(|v| v.arrival_slot)
        .min()
        .unwrap_or(0);
    let mut search = Search {
        inst,
        arrival: inst.vehicles.iter().map(|v| v.arrival_slot).collect(),
        departure: inst
            .vehicles
            .iter()
            .map(|v| v.expected_departure_slot)
            .collect(),
        memo: HashMap::new(),
        nodes: 0,
        budget,
    };
    search.best(start, &needs)
}

/// Largest delay (slots) in a finished run.
pub fn max_delay(run: &crate::engine::SimRun) -> u32 {
    run.outcomes
        .iter()
        .map(|o| o.delay_slots)
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub slot: Slot,
    pub rule: &'static str,
    pub detail: String,
}

pub fn violations_csv(violations: &[Violation]) -> String {
    let mut out = String::from("slot,rule,detail\n");
    for v in violations {
        out.push_str(&format!(
            "{},{},\"{}\"\n",
            v.slot,
            v.rule,
            v.detail.replace('"', "'")
        ));
    }
    out
}

/// Parses an engine trace written by [`crate::engine::trace_csv`].
pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == TRACE_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "missing trace header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(bad(format!("expected 11 fields, got {}", f.len())));
        }
        fn num<T: std::str::FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
            s.trim().parse().map_err(|_| format!("bad {name}: {s:?}"))
        }
        let row = (|| -> std::result::Result<TraceRow, String> {
            Ok(TraceRow {
                slot: num(f[0], "slot")?,
                k: num(f[1], "k")?,
                eligible: num(f[2], "eligible")?,
                id: VehicleId(num(f[3], "id")?),
                arrival_slot: num(f[4], "arrival_slot")?,
                departure_slot: num(f[5], "departure_slot")?,
                current_miles: num(f[6], "current_miles")?,
                required_miles: num(f[7], "required_miles")?,
                battery_miles: num(f[8], "battery_miles")?,
                rank: num(f[9], "rank")?,
                selected: match f[10].trim() {
                    "1" => true,
                    "0" => false,
                    other => return Err(format!("bad selected flag: {other:?}")),
                },
            })
        })()
        .map_err(bad)?;
        rows.push(row);
    }
    Ok(rows)
}

fn row_needs(r: &TraceRow, mps: f64) -> i64 {
    let gap = r.required_miles - r.current_miles;
    if gap > 0.0 {
        (gap / mps).ceil() as i64
    } else {
        0
    }
}

fn row_in_deficit(r: &TraceRow, policy: &PolicySpec) -> bool {
    !policy.use_distance_info || r.current_miles < r.required_miles
}

/// Ordering key the auditor expects for `r` at slot `t`; smaller first.
fn audit_key(r: &TraceRow, policy: &PolicySpec, t: Slot, mps: f64) -> (u8, i64, i64, Slot, u32) {
    let tier = u8::from(!row_in_deficit(r, policy));
    let dep = r.departure_slot as i64;
    let now = t as i64;
    let (a, b) = match policy.kind {
        PolicyKind::Fcfs | PolicyKind::RoundRobin => (0, 0),
        PolicyKind::MinmaxEr => (-row_needs(r, mps), 0),
        PolicyKind::MinmaxDt => (-(row_needs(r, mps) - (dep - now)), 0),
        PolicyKind::Fdfs => {
            if tier == 0 && now >= dep {
                (0, -(now - dep))
            } else {
                match policy.fdfs_order {
                    FdfsOrder::EarliestDeparture => (1, dep),
                    FdfsOrder::LeastSlack => (1, dep - now - row_needs(r, mps)),
                }
            }
        }
    };
    (tier, a, b, r.arrival_slot, r.id.0)
}

/// Checks every slot of a trace: work conservation, deficit-before-top-off,
/// the policy's priority order with its tie-breaks, and for MinmaxDT the
/// per-slot delay dominance. At most one ordering violation per slot.
pub fn audit_trace(rows: &[TraceRow], policy: &PolicySpec, miles_per_slot: f64) -> Vec<Violation> {
    let mut by_slot: BTreeMap<Slot, Vec<&TraceRow>> = BTreeMap::new();
    for r in rows {
        by_slot.entry(r.slot).or_default().push(r);
    }
    let mut out = Vec::new();
    for (slot, rows) in by_slot {
        let k = rows[0].k;
        let n = rows.len();
        let selected = rows.iter().filter(|r| r.selected).count();
        if rows.iter().any(|r| r.k != k || r.eligible != n) {
            out.push(Violation {
                slot,
                rule: "inconsistent",
                detail: format!("rows disagree on k/eligible ({n} rows)"),
            });
        }
        if let Some(r) = rows.iter().find(|r| r.current_miles >= r.battery_miles) {
            out.push(Violation {
                slot,
                rule: "ineligible",
                detail: format!("vehicle {} is already full", r.id),
            });
        }
        if selected != k.min(n) {
            out.push(Violation {
                slot,
                rule: "work-conservation",
                detail: format!("selected {selected}, expected min(K={k}, eligible={n})"),
            });
        }
        if let Some(v) = check_order(slot, &rows, policy, miles_per_slot) {
            out.push(v);
        }
    }
    out
}

fn check_order(slot: Slot, rows: &[&TraceRow], policy: &PolicySpec, mps: f64) -> Option<Violation> {
    let deficit_waiting = rows
        .iter()
        .any(|r| !r.selected && row_in_deficit(r, policy));
    if let Some(r) = rows
        .iter()
        .find(|r| r.selected && !row_in_deficit(r, policy))
        .filter(|_| deficit_waiting)
    {
        return Some(Violation {
            slot,
            rule: "tier-order",
            detail: format!(
                "top-off vehicle {} charged while a deficit vehicle waits",
                r.id
            ),
        });
    }

    if policy.kind == PolicyKind::MinmaxDt {
        let dt = |r: &TraceRow| row_needs(r, mps) - (r.departure_slot as i64 - slot as i64);
        let deficit = |r: &&&TraceRow| row_in_deficit(r, policy);
        let min_selected = rows
            .iter()
            .filter(|r| r.selected)
            .filter(deficit)
            .map(|r| dt(r))
            .min();
        let max_skipped = rows
            .iter()
            .filter(|r| !r.selected)
            .filter(deficit)
            .map(|r| dt(r))
            .max();
        if let (Some(lo), Some(hi)) = (min_selected, max_skipped) {
            if hi > lo {
                return Some(Violation {
                    slot,
                    rule: "dt-dominance",
                    detail: format!("skipped delay {hi} exceeds selected delay {lo}"),
                });
            }
        }
    }

    let k = rows[0].k.min(rows.len());
    let mut expected: Vec<&TraceRow> = rows.to_vec();
    if policy.kind == PolicyKind::RoundRobin {
        expected.sort_by_key(|r| r.rank);
        let tiers_sorted = expected
            .windows(2)
            .all(|w| row_in_deficit(w[0], policy) || !row_in_deficit(w[1], policy));
        if !tiers_sorted {
            return Some(Violation {
                slot,
                rule: "tier-order",
                detail: "round-robin rank places a top-off vehicle ahead of a deficit vehicle"
                    .into(),
            });
        }
    } else {
        expected.sort_by_key(|r| audit_key(r, policy, slot, mps));
    }
    let mut want: Vec<u32> = expected[..k].iter().map(|r| r.id.0).collect();
    let mut got: Vec<u32> = rows.iter().filter(|r| r.selected).map(|r| r.id.0).collect();
    want.sort_unstable();
    got.sort_unstable();
    (want != got).then(|| Violation {
        slot,
        rule: "key-order",
        detail: format!("selected {got:?}, priority order gives {want:?}"),
    })
}

/// Tiny instances drawn from a stream that no workload seed uses.
pub struct TinyGenerator {
    rng: ChaCha8Rng,
}

const TINY_STREAM: u64 = u64::MAX;
const TINY_SEED_TAG: u64 = 0x7469_6e79_6f72_6163;

impl TinyGenerator {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ TINY_SEED_TAG);
        rng.set_stream(TINY_STREAM);
        Self { rng }
    }

    /// Up to five vehicles, horizon 30, 0.5 miles per slot. With
    /// `constant_k` every slot has the same capacity (1..=3); otherwise the
    /// capacity varies per slot in 0..=3.
    pub fn instance(&mut self, constant_k: bool) -> TinyInstance {
        let mps = 0.5;
        let rng = &mut self.rng;
        let n = rng.random_range(1..=MAX_TINY_VEHICLES);
        let vehicles = (0..n)
            .map(|i| {
                let arrival = rng.random_range(0..8);
                let need: u32 = rng.random_range(0..=6);
                let slack: u32 = rng.random_range(0..=6);
                let required = if need == 0 {
                    rng.random_range(0.0..5.0)
                } else {
                    (need as f64 - rng.random_range(0.0..0.99)) * mps
                };
                let initial = if need == 0 { required + 1.0 } else { 0.0 };
                let departure = arrival + (need + slack).max(1);
                Vehicle {
                    id: VehicleId(i as u32),
                    arrival_slot: arrival,
                    expected_departure_slot: departure,
                    requested_departure_slot: departure,
                    required_miles: required,
                    initial_miles: initial,
                    current_miles: initial,
                    battery_capacity_miles: required.max(initial) + rng.random_range(0.0..3.0),
                    measured: true,
                }
            })
            .collect();
        let k_profile = if constant_k {
            vec![rng.random_range(1..=3); MAX_TINY_HORIZON as usize]
        } else {
            let mut p: Vec<usize> = (0..MAX_TINY_HORIZON)
                .map(|_| rng.random_range(0..=3))
                .collect();
            if p.iter().all(|&k| k == 0) {
                p[0] = 1;
            }
            p
        };
        TinyInstance::new(vehicles, k_profile, mps).expect("generated instance is valid")
    }
}

/// A MinmaxDT run that missed the brute-force optimum.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub index: usize,
    pub instance: TinyInstance,
    pub minmax_dt: u32,
    pub optimum: u32,
}

#[derive(Debug, Clone, Default)]
pub struct CampaignReport {
    pub instances: usize,
    pub optimal: usize,
    pub counterexamples: Vec<Counterexample>,
    /// Instances where some other policy beat MinmaxDT's maximum delay.
    pub dominated: Vec<(usize, String, u32, u32)>,
    pub violations: Vec<(usize, String, Violation)>,
}

impl CampaignReport {
    /// MinmaxDT matched the optimum everywhere and every trace audited clean.
    pub fn all_optimal(&self) -> bool {
        self.counterexamples.is_empty() && self.violations.is_empty()
    }

    /// The weaker claim: MinmaxDT never does worse than another policy.
    pub fn never_dominated(&self) -> bool {
        self.dominated.is_empty() && self.violations.is_empty()
    }
}

/// The policy variants exercised by the campaign.
pub fn campaign_policies() -> Vec<PolicySpec> {
    let mut v: Vec<PolicySpec> = PolicyKind::ALL.into_iter().map(PolicySpec::new).collect();
    v.push(PolicySpec::simple(PolicyKind::Fcfs).unwrap());
    v.push(PolicySpec::simple(PolicyKind::RoundRobin).unwrap());
    v.push(PolicySpec::new(PolicyKind::Fdfs).with_fdfs_order(FdfsOrder::LeastSlack));
    v
}

/// Runs `n` random constant-capacity instances: compares MinmaxDT's maximum
/// delay with the brute-force optimum and with every other policy, and
/// audits each policy's trace.
pub fn verify_campaign(n: usize, seed: u64) -> Result<CampaignReport> {
    let mut generator = TinyGenerator::new(seed);
    let mut report = CampaignReport {
        instances: n,
        ..Default::default()
    };
    let policies = campaign_policies();
    for index in 0..n {
        let inst = generator.instance(true);
        let optimum = brute_force_min_max_delay(&inst)?;
        let mut dt_max = 0;
        let mut others = Vec::new();
        for policy in &policies {
            let run = inst.run(*policy, true)?;
            let rows = run.trace.as_deref().unwrap_or_default();
            for v in audit_trace(rows, policy, inst.miles_per_slot) {
                report.violations.push((index, policy.label(), v));
            }
            if policy.kind == PolicyKind::MinmaxDt {
                dt_max = max_delay(&run);
            } else {
                others.push((policy.label(), max_delay(&run)));
            }
        }
        if dt_max == optimum {
            report.optimal += 1;
        } else {
            report.counterexamples.push(Counterexample {
                index,
                instance: inst.clone(),
                minmax_dt: dt_max,
                optimum,
            });
        }
        for (label, other) in others {
            if other < dt_max {
                report.dominated.push((index, label, other, dt_max));
            }
        }
    }
    Ok(report)
}
