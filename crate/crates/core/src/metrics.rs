//! Per-iteration metrics and the transmission audit.

use crate::channel::{AnalogFrame, POWER_TOLERANCE};
use crate::config::{LinkMode, Protocol};

/// Accuracy of one device, or the mean over all devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Average,
    Device(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub iteration: u32,
    pub protocol: Protocol,
    pub uplink: LinkMode,
    pub downlink: LinkMode,
    pub channel_uses: usize,
    pub pu_db: f64,
    pub pd_db: f64,
    pub seed: u64,
    pub scope: Scope,
    pub accuracy: f64,
    /// Device rows: the device's own payload. Average rows: the total over
    /// all devices.
    pub bits_up: f64,
    /// Bits of the broadcast payload.
    pub bits_down: f64,
}

/// Counts every budget and power check made during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Audit {
    pub budget_checks: u64,
    pub budget_violations: u64,
    pub power_checks: u64,
    pub power_violations: u64,
}

impl Audit {
    pub fn check_budget(&mut self, bits: f64, budget: f64) {
        self.budget_checks += 1;
        if !(bits <= budget) {
            self.budget_violations += 1;
        }
    }

    /// A non-empty frame must carry exactly `P·T`; an all-zero frame (nothing
    /// to send) only has to stay under it.
    pub fn check_frame(&mut self, frame: &AnalogFrame, channel_uses: usize) {
        self.power_checks += 1;
        let target = frame.power_budget() * channel_uses as f64;
        let energy = frame.energy();
        let ok = if energy == 0.0 {
            frame.len() == channel_uses
        } else {
            frame.len() == channel_uses && (energy - target).abs() <= POWER_TOLERANCE * target
        };
        if !ok {
            self.power_violations += 1;
        }
    }

    pub fn merge(&mut self, other: &Audit) {
        self.budget_checks += other.budget_checks;
        self.budget_violations += other.budget_violations;
        self.power_checks += other.power_checks;
        self.power_violations += other.power_violations;
    }

    pub fn violations(&self) -> u64 {
        self.budget_violations + self.power_violations
    }
}
