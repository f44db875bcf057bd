//! Synthetic fleet of home-charging sessions.
//!
//! Arrivals are a Poisson process whose rate follows an hourly profile.
//! Every vehicle then draws its connection duration, trip requirement and
//! initial charge from its own random substream, keyed by arrival order, so
//! a vehicle's attributes do not depend on how many draws its predecessors
//! consumed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};

use crate::policies::charge_intervals_required;
use crate::powergrid::{parse_column, ChargerSpec};
use crate::{Error, Result, Slot, VehicleId, SLOTS_PER_DAY, SLOTS_PER_HOUR};

const DEFAULT_ARRIVAL_PROFILE: &str = include_str!("../data/arrival_profile.txt");

/// Hourly distribution of arrivals over a day.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalProfile {
    hourly_weights: [f64; 24],
    pub expected_daily_arrivals: f64,
}

impl ArrivalProfile {
    /// Builds a profile from raw non-negative hourly weights, normalizing
    /// them to sum to one.
    pub fn new(raw_weights: &[f64], expected_daily_arrivals: f64) -> Result<Self> {
        if raw_weights.len() != 24 {
            return Err(Error::config(format!(
                "arrival profile needs 24 hourly weights, got {}",
                raw_weights.len()
            )));
        }
        if raw_weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::config(
                "arrival weights must be finite and non-negative",
            ));
        }
        if !(expected_daily_arrivals >= 0.0) || !expected_daily_arrivals.is_finite() {
            return Err(Error::config(format!(
                "expected daily arrivals must be non-negative, got {expected_daily_arrivals}"
            )));
        }
        let total: f64 = raw_weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::config("arrival weights sum to zero"));
        }
        // Already-normalized input is kept bit-for-bit so profiles survive a
        // text round trip unchanged.
        let scale = if (total - 1.0).abs() <= 1e-12 {
            1.0
        } else {
            total
        };
        let mut hourly_weights = [0.0; 24];
        for (dst, w) in hourly_weights.iter_mut().zip(raw_weights) {
            *dst = w / scale;
        }
        Ok(Self {
            hourly_weights,
            expected_daily_arrivals,
        })
    }

    pub fn parse(text: &str, expected_daily_arrivals: f64) -> Result<Self> {
        Self::new(&parse_column(text)?, expected_daily_arrivals)
    }

    /// Built-in stand-in for the commute departure histogram, shifted by
    /// ten hours to evening arrivals.
    pub fn default_evening(expected_daily_arrivals: f64) -> Self {
        Self::parse(DEFAULT_ARRIVAL_PROFILE, expected_daily_arrivals)
            .expect("built-in arrival profile is valid")
    }

    pub fn hourly_weights(&self) -> &[f64; 24] {
        &self.hourly_weights
    }

    /// Poisson mean of arrivals in one slot.
    pub fn slot_rate(&self, slot: Slot) -> f64 {
        let hour = (slot % SLOTS_PER_DAY) / SLOTS_PER_HOUR;
        self.expected_daily_arrivals * self.hourly_weights[hour as usize] / SLOTS_PER_HOUR as f64
    }

    pub fn to_text(&self) -> String {
        self.hourly_weights
            .iter()
            .map(|w| format!("{w}\n"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadConfig {
    pub seed: u64,
    pub days: u32,
    pub duration_mean_h: f64,
    pub duration_std_h: f64,
    pub duration_min_h: f64,
    pub duration_max_h: f64,
    /// Mean of the exponential one-way commute fit.
    pub one_way_commute_mean_mi: f64,
    /// Round-trip commutes above this are redrawn.
    pub commute_cap_mi: f64,
    pub extra_daily_mi: f64,
    pub emergency_mi: f64,
    pub initial_charge_max_mi: f64,
    pub battery_capacity_miles: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            days: 15,
            duration_mean_h: 14.0,
            duration_std_h: 4.0,
            duration_min_h: 6.0,
            duration_max_h: 22.0,
            one_way_commute_mean_mi: 13.5,
            commute_cap_mi: 70.0,
            extra_daily_mi: 20.0,
            emergency_mi: 10.0,
            initial_charge_max_mi: 30.0,
            battery_capacity_miles: 100.0,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.days < 1 {
            return Err(Error::config("days must be at least 1"));
        }
        if !(self.duration_min_h < self.duration_mean_h
            && self.duration_mean_h < self.duration_max_h)
        {
            return Err(Error::config(format!(
                "need duration min < mean < max, got {} < {} < {}",
                self.duration_min_h, self.duration_mean_h, self.duration_max_h
            )));
        }
        if !(self.duration_min_h > 0.0) || !(self.duration_std_h >= 0.0) {
            return Err(Error::config("durations must be positive"));
        }
        let miles = [
            ("one_way_commute_mean_mi", self.one_way_commute_mean_mi),
            ("commute_cap_mi", self.commute_cap_mi),
            ("extra_daily_mi", self.extra_daily_mi),
            ("emergency_mi", self.emergency_mi),
            ("initial_charge_max_mi", self.initial_charge_max_mi),
            ("battery_capacity_miles", self.battery_capacity_miles),
        ];
        for (name, v) in miles {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if self.max_required_miles() > self.battery_capacity_miles + 1e-9 {
            return Err(Error::config(format!(
                "largest trip requirement {} exceeds battery range {}",
                self.max_required_miles(),
                self.battery_capacity_miles
            )));
        }
        if self.initial_charge_max_mi > self.battery_capacity_miles {
            return Err(Error::config("initial charge can exceed battery range"));
        }
        Ok(())
    }

    fn max_required_miles(&self) -> f64 {
        self.commute_cap_mi + self.extra_daily_mi + self.emergency_mi
    }
}

/// One charging session.
#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub arrival_slot: Slot,
    /// Requested departure, already raised when continuous charging could
    /// not have met it.
    pub expected_departure_slot: Slot,
    /// Arrival plus the sampled connection time, before any adjustment.
    pub requested_departure_slot: Slot,
    pub required_miles: f64,
    pub initial_miles: f64,
    pub current_miles: f64,
    pub battery_capacity_miles: f64,
    pub measured: bool,
}

impl Vehicle {
    pub fn is_satisfied(&self) -> bool {
        self.current_miles >= self.required_miles
    }

    pub fn is_full(&self) -> bool {
        self.current_miles >= self.battery_capacity_miles
    }

    /// True when the requested departure had to be pushed out to let
    /// continuous charging finish.
    pub fn departure_adjusted(&self) -> bool {
        self.expected_departure_slot > self.requested_departure_slot
    }
}

/// Arrival slots over `days` days, ascending.
pub fn sample_arrivals<R: Rng + ?Sized>(
    profile: &ArrivalProfile,
    days: u32,
    rng: &mut R,
) -> Vec<Slot> {
    let mut arrivals = Vec::new();
    for slot in 0..days * SLOTS_PER_DAY {
        let rate = profile.slot_rate(slot);
        if rate <= 0.0 {
            continue;
        }
        let n = Poisson::new(rate)
            .expect("positive finite rate")
            .sample(rng) as usize;
        arrivals.extend(std::iter::repeat_n(slot, n));
    }
    arrivals
}

/// Connection time in slots: Normal(mean, std) hours redrawn until it falls
/// inside [min, max], then rounded to the nearest slot.
pub fn sample_connection_duration<R: Rng + ?Sized>(cfg: &WorkloadConfig, rng: &mut R) -> u32 {
    let normal = Normal::new(cfg.duration_mean_h, cfg.duration_std_h).expect("valid std");
    loop {
        let h = normal.sample(rng);
        if (cfg.duration_min_h..=cfg.duration_max_h).contains(&h) {
            return (h * SLOTS_PER_HOUR as f64).round() as u32;
        }
    }
}

/// Round-trip commute redrawn until within the cap.
pub fn sample_round_trip<R: Rng + ?Sized>(cfg: &WorkloadConfig, rng: &mut R) -> f64 {
    if cfg.one_way_commute_mean_mi <= 0.0 {
        return 0.0;
    }
    let exp = Exp::new(1.0 / cfg.one_way_commute_mean_mi).expect("positive rate");
    loop {
        let rt = 2.0 * exp.sample(rng);
        if rt <= cfg.commute_cap_mi {
            return rt;
        }
    }
}

/// Miles of range the vehicle must hold when it leaves.
pub fn required_miles_for_trip(cfg: &WorkloadConfig, round_trip_mi: f64) -> f64 {
    round_trip_mi + cfg.extra_daily_mi + cfg.emergency_mi
}

pub fn sample_required_miles<R: Rng + ?Sized>(cfg: &WorkloadConfig, rng: &mut R) -> f64 {
    required_miles_for_trip(cfg, sample_round_trip(cfg, rng))
}

pub fn sample_initial_charge<R: Rng + ?Sized>(cfg: &WorkloadConfig, rng: &mut R) -> f64 {
    rng.random_range(0.0..=cfg.initial_charge_max_mi)
}

/// Builds a session, pushing the departure out to the earliest slot at which
/// continuous charging could meet the requirement.
pub fn make_vehicle(
    id: VehicleId,
    arrival_slot: Slot,
    duration_slots: u32,
    required_miles: f64,
    initial_miles: f64,
    battery_capacity_miles: f64,
    charger: &ChargerSpec,
) -> Result<Vehicle> {
    if required_miles > battery_capacity_miles {
        return Err(Error::config(format!(
            "vehicle {id}: required {required_miles} mi exceeds battery range {battery_capacity_miles} mi"
        )));
    }
    if !(0.0..=battery_capacity_miles).contains(&initial_miles) || required_miles < 0.0 {
        return Err(Error::config(format!(
            "vehicle {id}: charge levels outside [0, {battery_capacity_miles}]"
        )));
    }
    let mut v = Vehicle {
        id,
        arrival_slot,
        expected_departure_slot: arrival_slot,
        requested_departure_slot: arrival_slot + duration_slots,
        required_miles,
        initial_miles,
        current_miles: initial_miles,
        battery_capacity_miles,
        measured: false,
    };
    let need = charge_intervals_required(&v, charger.miles_per_slot);
    v.expected_departure_slot = arrival_slot + duration_slots.max(need).max(1);
    Ok(v)
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The whole fleet for `cfg.days` days, in arrival order. Vehicle `i` uses
/// substream `i + 1` of the seed; arrivals use substream 0.
pub fn generate_fleet(
    cfg: &WorkloadConfig,
    profile: &ArrivalProfile,
    charger: &ChargerSpec,
) -> Result<Vec<Vehicle>> {
    cfg.validate()?;
    let arrivals = sample_arrivals(profile, cfg.days, &mut substream(cfg.seed, 0));
    arrivals
        .into_iter()
        .enumerate()
        .map(|(i, arrival)| {
            let mut rng = substream(cfg.seed, i as u64 + 1);
            let duration = sample_connection_duration(cfg, &mut rng);
            let required = sample_required_miles(cfg, &mut rng);
            let initial = sample_initial_charge(cfg, &mut rng);
            make_vehicle(
                VehicleId(i as u32),
                arrival,
                duration,
                required,
                initial,
                cfg.battery_capacity_miles,
                charger,
            )
        })
        .collect()
}

/// CSV dump of a fleet: `id,arrival_slot,departure_slot,required_miles,initial_miles`.
pub fn fleet_csv(fleet: &[Vehicle]) -> String {
    let mut out = String::from("id,arrival_slot,departure_slot,required_miles,initial_miles\n");
    for v in fleet {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            v.id, v.arrival_slot, v.expected_departure_slot, v.required_miles, v.initial_miles
        ));
    }
    out
}
