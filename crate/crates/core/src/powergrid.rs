//! Generating capacity, the daily other-load curve, supply-to-demand
//! calibration and the per-slot number of vehicles that can charge.

use crate::workload::Vehicle;
use crate::{Error, Result, Slot, KWH_PER_MILE, SLOTS_PER_DAY, SLOTS_PER_HOUR};

/// Hours per slot.
pub const SLOT_HOURS: f64 = 1.0 / SLOTS_PER_HOUR as f64;

const DEFAULT_LOAD_SHAPE: &str = include_str!("../data/load_shape.txt");

/// Normalized other-load curve over one day, one value per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadShape {
    values: Vec<f64>,
}

impl LoadShape {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != SLOTS_PER_DAY as usize {
            return Err(Error::config(format!(
                "load shape needs {} values, got {}",
                SLOTS_PER_DAY,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::config(format!(
                "load shape value {v} outside [0, 1]"
            )));
        }
        let max = values.iter().copied().fold(f64::MIN, f64::max);
        if (max - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "load shape maximum must be 1, got {max}"
            )));
        }
        Ok(Self { values })
    }

    /// A flat curve at `level` everywhere. Only `level == 1` is a valid
    /// normalized shape; other levels are useful for tests of the grid
    /// arithmetic and skip the maximum check.
    pub fn constant(level: f64) -> Self {
        Self {
            values: vec![level; SLOTS_PER_DAY as usize],
        }
    }

    /// Parses a single-column text file, one value per line. Blank lines and
    /// `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let values = parse_column(text)?;
        Self::new(values)
    }

    /// The built-in residential curve: overnight trough near 0.6 of peak,
    /// evening peak at 1.
    pub fn default_residential() -> Self {
        Self::parse(DEFAULT_LOAD_SHAPE).expect("built-in load shape is valid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, slot: Slot) -> f64 {
        self.values[(slot % SLOTS_PER_DAY) as usize]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 8);
        for v in &self.values {
            out.push_str(&format!("{v}\n"));
        }
        out
    }
}

pub(crate) fn parse_column(text: &str) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("not a number: {line:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("not finite: {line:?}"),
            });
        }
        values.push(v);
    }
    Ok(values)
}

/// How a charger's electrical rating converts to miles of range per slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RangeRating {
    /// 6 miles of range per hour for every 1.65 kW, i.e. exactly 0.5 miles
    /// per slot on a 110 V / 15 A outlet (100 miles in 200 slots).
    #[default]
    Nominal,
    /// kW / 12 / 0.28 miles per slot.
    Physical,
}

/// A per-vehicle charging circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargerSpec {
    pub volts: f64,
    pub amps: f64,
    pub miles_per_slot: f64,
    pub rating: RangeRating,
}

const NOMINAL_KW: f64 = 1.65;
const NOMINAL_MILES_PER_SLOT: f64 = 0.5;

impl ChargerSpec {
    pub fn new(volts: f64, amps: f64, rating: RangeRating) -> Result<Self> {
        if !(volts > 0.0 && amps > 0.0 && volts.is_finite() && amps.is_finite()) {
            return Err(Error::config(format!(
                "charger needs positive volts and amps, got {volts} V / {amps} A"
            )));
        }
        let kw = volts * amps / 1000.0;
        let miles_per_slot = match rating {
            RangeRating::Nominal => NOMINAL_MILES_PER_SLOT * kw / NOMINAL_KW,
            RangeRating::Physical => kw * SLOT_HOURS / KWH_PER_MILE,
        };
        Ok(Self {
            volts,
            amps,
            miles_per_slot,
            rating,
        })
    }

    /// Standard home outlet, 110 V / 15 A.
    pub fn home_110_15() -> Self {
        Self::new(110.0, 15.0, RangeRating::Nominal).unwrap()
    }

    /// Clothes-dryer circuit, 220 V / 30 A.
    pub fn dryer_220_30() -> Self {
        Self::new(220.0, 30.0, RangeRating::Nominal).unwrap()
    }

    /// Looks up `home-110-15` or `dryer-220-30`. With `derate_13a`, 15 A
    /// circuits draw the 13 A continuous-load limit instead.
    pub fn preset(name: &str, rating: RangeRating, derate_13a: bool) -> Result<Self> {
        let (volts, amps) = match name {
            "home-110-15" => (110.0, 15.0),
            "dryer-220-30" => (220.0, 30.0),
            other => {
                return Err(Error::config(format!(
                    "unknown charger preset {other:?} (expected home-110-15 or dryer-220-30)"
                )))
            }
        };
        let amps = if derate_13a && amps == 15.0 {
            13.0
        } else {
            amps
        };
        Self::new(volts, amps, rating)
    }

    pub fn kw(&self) -> f64 {
        self.volts * self.amps / 1000.0
    }

    pub fn kwh_per_mile(&self) -> f64 {
        KWH_PER_MILE
    }
}

/// Immutable, calibrated grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    pub shape: LoadShape,
    pub peak_other_fraction: f64,
    pub capacity_kw: f64,
    pub sdr_target: f64,
    pub tpa_kwh: f64,
    pub tpr_kwh: f64,
}

/// Daily energy requirement (kWh/day) of a fleet observed over `days`: the
/// total charge deficit at arrival, converted to kWh, divided by `days`.
pub fn total_required_energy(vehicles: &[Vehicle], days: u32) -> Result<f64> {
    if vehicles.is_empty() {
        return Err(Error::EmptyWorkload);
    }
    if days == 0 {
        return Err(Error::config("days must be at least 1"));
    }
    let miles: f64 = vehicles
        .iter()
        .map(|v| (v.required_miles - v.initial_miles).max(0.0))
        .sum();
    Ok(miles * KWH_PER_MILE / days as f64)
}

/// Σ_t (1 − p·shape(t)) · Δt over one day: available energy per kW of
/// generating capacity.
pub fn headroom_hours(shape: &LoadShape, peak_other_fraction: f64) -> f64 {
    shape
        .values()
        .iter()
        .map(|s| 1.0 - peak_other_fraction * s)
        .sum::<f64>()
        * SLOT_HOURS
}

/// Generating capacity (kW) such that daily available energy equals
/// `sdr_target × tpr_kwh`. Available energy is linear in capacity, so this
/// is exact.
pub fn calibrate_capacity(
    shape: &LoadShape,
    peak_other_fraction: f64,
    tpr_kwh: f64,
    sdr_target: f64,
) -> Result<f64> {
    check_peak_fraction(peak_other_fraction)?;
    if !(sdr_target >= 1.0) || !sdr_target.is_finite() {
        return Err(Error::InsufficientSupply(sdr_target));
    }
    if !(tpr_kwh > 0.0) || !tpr_kwh.is_finite() {
        return Err(Error::config(format!(
            "daily requirement must be positive, got {tpr_kwh} kWh"
        )));
    }
    let hours = headroom_hours(shape, peak_other_fraction);
    if hours <= 0.0 {
        return Err(Error::NoHeadroom);
    }
    Ok(sdr_target * tpr_kwh / hours)
}

fn check_peak_fraction(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "peak other-load fraction must lie in (0, 1), got {p}"
        )))
    }
}

impl GridModel {
    pub fn calibrate(
        shape: LoadShape,
        peak_other_fraction: f64,
        tpr_kwh: f64,
        sdr_target: f64,
    ) -> Result<Self> {
        let capacity_kw = calibrate_capacity(&shape, peak_other_fraction, tpr_kwh, sdr_target)?;
        let tpa_kwh = capacity_kw * headroom_hours(&shape, peak_other_fraction);
        Ok(Self {
            shape,
            peak_other_fraction,
            capacity_kw,
            sdr_target,
            tpa_kwh,
            tpr_kwh,
        })
    }

    /// Calibrates against the deficit of `fleet` over `days`.
    pub fn for_fleet(
        shape: LoadShape,
        peak_other_fraction: f64,
        fleet: &[Vehicle],
        days: u32,
        sdr_target: f64,
    ) -> Result<Self> {
        let tpr = total_required_energy(fleet, days)?;
        Self::calibrate(shape, peak_other_fraction, tpr, sdr_target)
    }

    /// Power left for vehicles in `slot` (kW), never negative.
    pub fn available_power(&self, slot: Slot) -> f64 {
        let other = self.peak_other_fraction * self.capacity_kw * self.shape.at(slot);
        (self.capacity_kw - other).max(0.0)
    }

    /// Number of chargers that can run simultaneously in `slot`.
    pub fn slot_vehicle_capacity(&self, charger: &ChargerSpec, slot: Slot) -> usize {
        vehicles_for_power(self.available_power(slot), charger.kw())
    }
}

/// `floor(available_kw / charger_kw)`.
pub fn vehicles_for_power(available_kw: f64, charger_kw: f64) -> usize {
    if available_kw <= 0.0 {
        return 0;
    }
    (available_kw / charger_kw).floor() as usize
}
