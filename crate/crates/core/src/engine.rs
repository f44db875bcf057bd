//! The slot loop: plug in arrivals, size the slot, let the policy choose,
//! charge, and release vehicles that are ready to leave.

use crate::policies::{tier_of, PolicyKind, PolicySpec, Selector};
use crate::powergrid::{ChargerSpec, GridModel};
use crate::workload::Vehicle;
use crate::{Error, Result, Slot, VehicleId, MINUTES_PER_SLOT, SLOTS_PER_DAY};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub days: u32,
    /// Arrivals on days `1..=warmup_days` are excluded from statistics.
    pub warmup_days: u32,
    /// Last arrival day (1-based) included in statistics.
    pub last_measured_day: u32,
    pub policy: PolicySpec,
    pub sdr_target: f64,
    pub seed: u64,
    pub trace: bool,
}

impl SimConfig {
    pub fn new(policy: PolicySpec, sdr_target: f64, seed: u64) -> Self {
        Self {
            days: 15,
            warmup_days: 4,
            last_measured_day: 13,
            policy,
            sdr_target,
            seed,
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.warmup_days < self.last_measured_day && self.last_measured_day < self.days) {
            return Err(Error::config(format!(
                "need warmup_days < last_measured_day < days, got {} / {} / {}",
                self.warmup_days, self.last_measured_day, self.days
            )));
        }
        if !(self.sdr_target >= 1.0) {
            return Err(Error::InsufficientSupply(self.sdr_target));
        }
        Ok(())
    }

    /// Whether a vehicle arriving in `slot` belongs to the measurement window.
    pub fn in_window(&self, slot: Slot) -> bool {
        let day = slot / SLOTS_PER_DAY + 1;
        day > self.warmup_days && day <= self.last_measured_day
    }
}

/// What happened to one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleOutcome {
    pub id: VehicleId,
    pub arrival_slot: Slot,
    pub expected_departure_slot: Slot,
    /// First slot boundary at which the trip requirement was met.
    pub satisfied_slot: Slot,
    pub actual_departure_slot: Slot,
    pub delay_slots: u32,
    pub delayed: bool,
    pub measured: bool,
    pub slots_charged: u32,
    pub initial_miles: f64,
    pub final_miles: f64,
}

impl VehicleOutcome {
    pub fn delay_minutes(&self) -> f64 {
        (self.delay_slots * MINUTES_PER_SLOT) as f64
    }
}

/// Per-slot bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotRecord {
    pub slot: Slot,
    pub k: usize,
    pub plugged: usize,
    pub eligible: usize,
    pub selected: usize,
}

/// One eligible vehicle in one slot, before that slot's charge is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub slot: Slot,
    pub k: usize,
    pub eligible: usize,
    pub id: VehicleId,
    pub arrival_slot: Slot,
    pub departure_slot: Slot,
    pub current_miles: f64,
    pub required_miles: f64,
    pub battery_miles: f64,
    /// Position in the policy's priority order for this slot.
    pub rank: usize,
    pub selected: bool,
}

pub const TRACE_HEADER: &str =
    "slot,k,eligible,id,arrival_slot,departure_slot,current_miles,required_miles,battery_miles,rank,selected";

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.slot,
            r.k,
            r.eligible,
            r.id,
            r.arrival_slot,
            r.departure_slot,
            r.current_miles,
            r.required_miles,
            r.battery_miles,
            r.rank,
            u8::from(r.selected)
        ));
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct SimRun {
    /// One outcome per vehicle, ordered by id.
    pub outcomes: Vec<VehicleOutcome>,
    pub slots: Vec<SlotRecord>,
    pub trace: Option<Vec<TraceRow>>,
}

/// Number of vehicles that may charge in a slot.
pub trait SlotCapacity {
    fn vehicles_at(&self, slot: Slot) -> usize;
}

/// Capacity from a calibrated grid and a charger type.
pub struct GridCapacity<'a> {
    pub grid: &'a GridModel,
    pub charger: &'a ChargerSpec,
}

impl SlotCapacity for GridCapacity<'_> {
    fn vehicles_at(&self, slot: Slot) -> usize {
        self.grid.slot_vehicle_capacity(self.charger, slot)
    }
}

/// A capacity table repeated with period `len`.
pub struct PeriodicCapacity(pub Vec<usize>);

impl SlotCapacity for PeriodicCapacity {
    fn vehicles_at(&self, slot: Slot) -> usize {
        if self.0.is_empty() {
            0
        } else {
            self.0[slot as usize % self.0.len()]
        }
    }
}

/// Runs a full experiment cell against a calibrated grid.
pub fn run_simulation(
    cfg: &SimConfig,
    fleet: &[Vehicle],
    grid: &GridModel,
    charger: &ChargerSpec,
) -> Result<SimRun> {
    cfg.validate()?;
    if !(grid.sdr_target >= 1.0) {
        return Err(Error::InsufficientSupply(grid.sdr_target));
    }
    let mut fleet = fleet.to_vec();
    for v in &mut fleet {
        v.measured = cfg.in_window(v.arrival_slot);
    }
    simulate(
        cfg.policy,
        &fleet,
        &GridCapacity { grid, charger },
        charger.miles_per_slot,
        cfg.trace,
    )
}

/// Idle slots tolerated after the last arrival before giving up.
const STALL_LIMIT: Slot = 365 * SLOTS_PER_DAY;

/// The slot loop with an arbitrary capacity source. Runs until every
/// vehicle has departed; `measured` flags are taken from `fleet` as given.
pub fn simulate(
    policy: PolicySpec,
    fleet: &[Vehicle],
    capacity: &dyn SlotCapacity,
    miles_per_slot: f64,
    trace: bool,
) -> Result<SimRun> {
    if !(miles_per_slot > 0.0) {
        return Err(Error::config(
            "charger must deliver a positive charge per slot",
        ));
    }
    let mut pending: Vec<Vehicle> = fleet.to_vec();
    pending.sort_by_key(|v| (v.arrival_slot, v.id));
    let last_arrival = pending.last().map_or(0, |v| v.arrival_slot);
    let mut pending = pending.into_iter().peekable();

    let mut selector = Selector::new(policy, miles_per_slot);
    let mut plugged: Vec<Vehicle> = Vec::new();
    // Parallel to `plugged`.
    let mut charged: Vec<u32> = Vec::new();
    let mut satisfied_at: Vec<Option<Slot>> = Vec::new();

    let mut run = SimRun {
        outcomes: Vec::with_capacity(fleet.len()),
        slots: Vec::new(),
        trace: trace.then(Vec::new),
    };

    let mut t: Slot = 0;
    loop {
        while let Some(v) = pending.next_if(|v| v.arrival_slot <= t) {
            satisfied_at.push(v.is_satisfied().then_some(v.arrival_slot));
            charged.push(0);
            plugged.push(v);
        }
        if plugged.is_empty() && pending.peek().is_none() {
            break;
        }
        if t > last_arrival.saturating_add(STALL_LIMIT) {
            return Err(Error::Stalled {
                slot: t,
                waiting: plugged.len(),
            });
        }

        if trace && policy.kind == PolicyKind::RoundRobin {
            // The trace ranks before selection, which syncs its own lists.
            selector.update_membership(&plugged);
        }
        let k = capacity.vehicles_at(t);
        let eligible = plugged
            .iter()
            .filter(|v| tier_of(v, policy.use_distance_info).is_some())
            .count();
        if let Some(rows) = run.trace.as_mut() {
            let order = selector.priority_order(t, &plugged);
            for (rank, &i) in order.iter().enumerate() {
                let v = &plugged[i];
                rows.push(TraceRow {
                    slot: t,
                    k,
                    eligible,
                    id: v.id,
                    arrival_slot: v.arrival_slot,
                    departure_slot: v.expected_departure_slot,
                    current_miles: v.current_miles,
                    required_miles: v.required_miles,
                    battery_miles: v.battery_capacity_miles,
                    rank,
                    selected: rank < k,
                });
            }
        }
        let chosen = selector.select_indices(t, k, &plugged);
        run.slots.push(SlotRecord {
            slot: t,
            k,
            plugged: plugged.len(),
            eligible,
            selected: chosen.len(),
        });

        for &i in &chosen {
            let v = &mut plugged[i];
            v.current_miles += miles_per_slot.min(v.battery_capacity_miles - v.current_miles);
            charged[i] += 1;
        }

        let boundary = t + 1;
        let mut i = 0;
        while i < plugged.len() {
            if satisfied_at[i].is_none() && plugged[i].is_satisfied() {
                satisfied_at[i] = Some(boundary);
            }
            let v = &plugged[i];
            if let Some(satisfied) =
                satisfied_at[i].filter(|_| boundary >= v.expected_departure_slot)
            {
                let delay = boundary - v.expected_departure_slot;
                debug_assert_eq!(boundary, satisfied.max(v.expected_departure_slot));
                run.outcomes.push(VehicleOutcome {
                    id: v.id,
                    arrival_slot: v.arrival_slot,
                    expected_departure_slot: v.expected_departure_slot,
                    satisfied_slot: satisfied,
                    actual_departure_slot: boundary,
                    delay_slots: delay,
                    delayed: delay > 0,
                    measured: v.measured,
                    slots_charged: charged[i],
                    initial_miles: v.initial_miles,
                    final_miles: v.current_miles,
                });
                plugged.swap_remove(i);
                charged.swap_remove(i);
                satisfied_at.swap_remove(i);
            } else {
                i += 1;
            }
        }
        t += 1;
    }

    run.outcomes.sort_by_key(|o| o.id);
    Ok(run)
}

/// Outcomes of vehicles that arrived inside the measurement window.
pub fn measurement_filter(
    outcomes: &[VehicleOutcome],
    cfg: &SimConfig,
) -> Result<Vec<VehicleOutcome>> {
    let kept: Vec<_> = outcomes
        .iter()
        .filter(|o| cfg.in_window(o.arrival_slot))
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyMeasurementWindow);
    }
    Ok(kept)
}
