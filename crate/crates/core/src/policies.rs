//! Selection disciplines deciding which plugged-in vehicles charge in a slot.
//!
//! Every policy serves the deficit tier (vehicles below their trip
//! requirement) before the top-off tier (requirement met, battery not full).
//! Policies differ only in how they order vehicles inside a tier.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::workload::Vehicle;
use crate::{Error, Result, Slot, VehicleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Fcfs,
    Fdfs,
    RoundRobin,
    MinmaxEr,
    MinmaxDt,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Fcfs,
        PolicyKind::Fdfs,
        PolicyKind::RoundRobin,
        PolicyKind::MinmaxEr,
        PolicyKind::MinmaxDt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Fcfs => "fcfs",
            PolicyKind::Fdfs => "fdfs",
            PolicyKind::RoundRobin => "rr",
            PolicyKind::MinmaxEr => "minmax-er",
            PolicyKind::MinmaxDt => "minmax-dt",
        }
    }

    /// Whether the policy can run without trip distances.
    pub fn supports_simple(self) -> bool {
        matches!(self, PolicyKind::Fcfs | PolicyKind::RoundRobin)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown policy {s:?} (expected fcfs, fdfs, rr, minmax-er or minmax-dt)"
                ))
            })
    }
}

/// Second-level FDFS ordering among vehicles that are not yet late.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FdfsOrder {
    /// Earliest expected departure first.
    #[default]
    EarliestDeparture,
    /// Smallest slack `T_L − t − N_I` first.
    LeastSlack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Informed variant: vehicles that met their trip requirement yield to
    /// those that have not. Always true except for simple FCFS/RR.
    pub use_distance_info: bool,
    pub fdfs_order: FdfsOrder,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            use_distance_info: true,
            fdfs_order: FdfsOrder::default(),
        }
    }

    /// Uninformed variant that charges every vehicle towards a full
    /// battery. Only FCFS and RR have one.
    pub fn simple(kind: PolicyKind) -> Result<Self> {
        if !kind.supports_simple() {
            return Err(Error::config(format!(
                "{kind} needs trip distances and has no simple variant"
            )));
        }
        Ok(Self {
            use_distance_info: false,
            ..Self::new(kind)
        })
    }

    pub fn with_fdfs_order(mut self, order: FdfsOrder) -> Self {
        self.fdfs_order = order;
        self
    }

    /// Name used in reports, e.g. `fcfs`, `rr-simple`, `fdfs-slack`.
    pub fn label(&self) -> String {
        let mut s = self.kind.name().to_string();
        if !self.use_distance_info {
            s.push_str("-simple");
        }
        if self.kind == PolicyKind::Fdfs && self.fdfs_order == FdfsOrder::LeastSlack {
            s.push_str("-slack");
        }
        s
    }
}

/// Whole slots of charging still needed to reach the trip requirement.
pub fn charge_intervals_required(v: &Vehicle, miles_per_slot: f64) -> u32 {
    let deficit = v.required_miles - v.current_miles;
    if deficit <= 0.0 {
        0
    } else {
        (deficit / miles_per_slot).ceil() as u32
    }
}

/// Delay in slots if the vehicle were charged in every slot from `t` on;
/// negative values are slack.
pub fn delay_if_continuous(v: &Vehicle, t: Slot, miles_per_slot: f64) -> i64 {
    charge_intervals_required(v, miles_per_slot) as i64
        - (v.expected_departure_slot as i64 - t as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tier {
    Deficit,
    TopOff,
}

/// Tier of a plugged vehicle, `None` once the battery is full.
pub fn tier_of(v: &Vehicle, use_distance_info: bool) -> Option<Tier> {
    if v.is_full() {
        None
    } else if !use_distance_info || !v.is_satisfied() {
        Some(Tier::Deficit)
    } else {
        Some(Tier::TopOff)
    }
}

/// Rotating lists for round robin. Maintained for every policy so that the
/// tier membership is observable, but only RR orders by list position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyState {
    pub deficit_list: VecDeque<VehicleId>,
    pub topoff_list: VecDeque<VehicleId>,
}

impl PolicyState {
    fn list(&self, tier: Tier) -> &VecDeque<VehicleId> {
        match tier {
            Tier::Deficit => &self.deficit_list,
            Tier::TopOff => &self.topoff_list,
        }
    }
}

/// A policy together with its per-run state.
#[derive(Debug, Clone)]
pub struct Selector {
    spec: PolicySpec,
    miles_per_slot: f64,
    state: PolicyState,
}

type PriorityKey = (Tier, i64, i64, Slot, VehicleId);

impl Selector {
    pub fn new(spec: PolicySpec, miles_per_slot: f64) -> Self {
        Self {
            spec,
            miles_per_slot,
            state: PolicyState::default(),
        }
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    /// Brings the lists in line with `plugged`: drops departed and full
    /// vehicles, moves vehicles that met their requirement to the tail of the
    /// top-off list and appends newcomers, keeping everyone else in order.
    pub fn update_membership(&mut self, plugged: &[Vehicle]) {
        let tiers: HashMap<VehicleId, Tier> = plugged
            .iter()
            .filter_map(|v| tier_of(v, self.spec.use_distance_info).map(|t| (v.id, t)))
            .collect();
        let mut listed = HashSet::with_capacity(tiers.len());

        let mut crossed = Vec::new();
        self.state.deficit_list.retain(|id| match tiers.get(id) {
            Some(Tier::Deficit) => {
                listed.insert(*id);
                true
            }
            Some(Tier::TopOff) => {
                crossed.push(*id);
                false
            }
            None => false,
        });
        self.state
            .topoff_list
            .retain(|id| tiers.get(id) == Some(&Tier::TopOff) && listed.insert(*id));
        for id in crossed {
            listed.insert(id);
            self.state.topoff_list.push_back(id);
        }
        for v in plugged {
            if let Some(&tier) = tiers.get(&v.id) {
                if listed.insert(v.id) {
                    match tier {
                        Tier::Deficit => self.state.deficit_list.push_back(v.id),
                        Tier::TopOff => self.state.topoff_list.push_back(v.id),
                    }
                }
            }
        }
    }

    /// Indices into `plugged` of every eligible vehicle, highest priority
    /// first. Pure: does not rotate round-robin lists.
    pub fn priority_order(&self, t: Slot, plugged: &[Vehicle]) -> Vec<usize> {
        self.ranked(t, plugged, usize::MAX)
    }

    /// The first `limit` entries of [`Self::priority_order`].
    fn ranked(&self, t: Slot, plugged: &[Vehicle], limit: usize) -> Vec<usize> {
        if self.spec.kind == PolicyKind::RoundRobin {
            let mut order = self.round_robin_order(plugged);
            order.truncate(limit);
            return order;
        }
        let mut keyed: Vec<(PriorityKey, usize)> = plugged
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                tier_of(v, self.spec.use_distance_info).map(|tier| (self.key(tier, v, t), i))
            })
            .collect();
        if limit < keyed.len() {
            if limit == 0 {
                return Vec::new();
            }
            keyed.select_nth_unstable_by(limit - 1, |a, b| a.0.cmp(&b.0));
            keyed.truncate(limit);
        }
        keyed.sort_unstable_by_key(|e| e.0);
        keyed.into_iter().map(|(_, i)| i).collect()
    }

    fn key(&self, tier: Tier, v: &Vehicle, t: Slot) -> PriorityKey {
        let mps = self.miles_per_slot;
        let departure = v.expected_departure_slot as i64;
        let now = t as i64;
        let (primary, secondary) = match self.spec.kind {
            PolicyKind::Fcfs | PolicyKind::RoundRobin => (0, 0),
            PolicyKind::MinmaxEr => (-(charge_intervals_required(v, mps) as i64), 0),
            PolicyKind::MinmaxDt => (-delay_if_continuous(v, t, mps), 0),
            PolicyKind::Fdfs => {
                if tier == Tier::Deficit && now >= departure {
                    // Late vehicles first, the latest of them first.
                    (0, -(now - departure))
                } else {
                    let rest = match self.spec.fdfs_order {
                        FdfsOrder::EarliestDeparture => departure,
                        FdfsOrder::LeastSlack => {
                            departure - now - charge_intervals_required(v, mps) as i64
                        }
                    };
                    (1, rest)
                }
            }
        };
        (tier, primary, secondary, v.arrival_slot, v.id)
    }

    fn round_robin_order(&self, plugged: &[Vehicle]) -> Vec<usize> {
        let index: HashMap<VehicleId, usize> =
            plugged.iter().enumerate().map(|(i, v)| (v.id, i)).collect();
        let mut order = Vec::with_capacity(index.len());
        for tier in [Tier::Deficit, Tier::TopOff] {
            for id in self.state.list(tier) {
                if let Some(&i) = index.get(id) {
                    if tier_of(&plugged[i], self.spec.use_distance_info) == Some(tier) {
                        order.push(i);
                    }
                }
            }
        }
        order
    }

    /// Picks up to `k` vehicles, returning indices into `plugged` in
    /// priority order. Round robin moves the chosen vehicles to the tail of
    /// their list.
    pub fn select_indices(&mut self, t: Slot, k: usize, plugged: &[Vehicle]) -> Vec<usize> {
        if self.spec.kind == PolicyKind::RoundRobin {
            self.update_membership(plugged);
        }
        let order = self.ranked(t, plugged, k);
        if self.spec.kind == PolicyKind::RoundRobin {
            let chosen: HashSet<VehicleId> = order.iter().map(|&i| plugged[i].id).collect();
            rotate_to_tail(&mut self.state.deficit_list, &chosen);
            rotate_to_tail(&mut self.state.topoff_list, &chosen);
        }
        order
    }

    /// Ids of the vehicles switched on in slot `t` given capacity `k`.
    pub fn select(&mut self, t: Slot, k: i64, plugged: &[Vehicle]) -> Result<Vec<VehicleId>> {
        if k < 0 {
            return Err(Error::NegativeCapacity(k));
        }
        Ok(self
            .select_indices(t, k as usize, plugged)
            .into_iter()
            .map(|i| plugged[i].id)
            .collect())
    }
}

fn rotate_to_tail(list: &mut VecDeque<VehicleId>, chosen: &HashSet<VehicleId>) {
    if chosen.is_empty() {
        return;
    }
    let (moved, mut kept): (VecDeque<_>, VecDeque<_>) =
        list.drain(..).partition(|id| chosen.contains(id));
    kept.extend(moved);
    *list = kept;
}
