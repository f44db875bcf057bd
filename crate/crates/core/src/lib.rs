//! Discrete-time simulation of fair power allocation to home-charging
//! electric vehicles.
//!
//! Time advances in 5-minute slots. In every slot the grid has a number of
//! chargers it can power (`K`), and a selection policy decides which of the
//! plugged-in vehicles get switched on. The crate provides the synthetic
//! workload, the grid model with supply-to-demand calibration, five
//! selection policies, the slot engine, delay metrics with parameter sweeps,
//! and brute-force oracles for checking small instances.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod policies;
pub mod powergrid;
pub mod workload;

pub use error::{Error, Result};

/// Slot index counted in 5-minute units from the start of the simulation.
pub type Slot = u32;

pub const SLOTS_PER_HOUR: u32 = 12;
pub const SLOTS_PER_DAY: u32 = 24 * SLOTS_PER_HOUR;
pub const MINUTES_PER_SLOT: u32 = 5;

/// Energy needed for one mile of range.
pub const KWH_PER_MILE: f64 = 0.28;

/// Stable identifier of a charging session (its position in arrival order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VehicleId(pub u32);

impl std::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}
