//! Quasi-static Rayleigh fading uplink MAC and downlink broadcast channel.
//!
//! Gains are circularly-symmetric complex Gaussian with unit variance,
//! independent across devices, directions and global iterations, and held
//! constant for one information-exchange phase. Receiver noise is
//! CN(0, 1) per channel use.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{Rng, RngCore};

use crate::rng::complex_gaussian;
use crate::{Error, Result};

/// Relative slack on the power budget before a frame is rejected.
pub const POWER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Uplink,
    Downlink,
}

/// Complex gains of one global iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    uplink: Vec<Complex64>,
    downlink: Vec<Complex64>,
    iteration: u32,
}

impl ChannelState {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, devices: usize, iteration: u32) -> Result<Self> {
        if devices == 0 {
            return Err(Error::arg("channel needs at least one device"));
        }
        let uplink = (0..devices).map(|_| complex_gaussian(rng)).collect();
        let downlink = (0..devices).map(|_| complex_gaussian(rng)).collect();
        Ok(Self { uplink, downlink, iteration })
    }

    pub fn from_gains(uplink: Vec<Complex64>, downlink: Vec<Complex64>, iteration: u32) -> Result<Self> {
        if uplink.is_empty() || uplink.len() != downlink.len() {
            return Err(Error::arg("uplink and downlink gain vectors must be non-empty and equally long"));
        }
        if uplink.iter().chain(&downlink).any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(Error::NonFinite("channel gains"));
        }
        Ok(Self { uplink, downlink, iteration })
    }

    pub fn devices(&self) -> usize {
        self.uplink.len()
    }

    pub fn uplink(&self) -> &[Complex64] {
        &self.uplink
    }

    pub fn downlink(&self) -> &[Complex64] {
        &self.downlink
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }
}

/// A block of complex baseband samples that respects its transmitter's
/// average power budget.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogFrame {
    samples: Vec<Complex64>,
    direction: Direction,
    power_budget: f64,
}

impl AnalogFrame {
    /// Rejects frames whose average power `‖x‖²/len` exceeds `power_budget`.
    pub fn new(samples: Vec<Complex64>, direction: Direction, power_budget: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::arg("empty analog frame"));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::NonFinite("analog frame"));
        }
        let avg = energy(&samples) / samples.len() as f64;
        if avg > power_budget * (1.0 + POWER_TOLERANCE) {
            return Err(Error::Power { actual: avg, budget: power_budget });
        }
        Ok(Self { samples, direction, power_budget })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn power_budget(&self) -> f64 {
        self.power_budget
    }

    /// Squared Euclidean norm of the frame.
    pub fn energy(&self) -> f64 {
        energy(&self.samples)
    }
}

pub(crate) fn energy(x: &[Complex64]) -> f64 {
    x.iter().map(|s| s.norm_sqr()).sum()
}

/// `y = Σ_k h_k x_k + z`. Passing `None` for the noise stream disables the
/// additive noise.
pub fn uplink_mac(
    frames: &[AnalogFrame],
    state: &ChannelState,
    noise: Option<&mut dyn RngCore>,
) -> Result<Vec<Complex64>> {
    if frames.len() != state.devices() {
        return Err(Error::config("one uplink frame per device is required"));
    }
    let len = frames[0].len();
    if frames.iter().any(|f| f.len() != len) {
        return Err(Error::config("uplink frames have mismatched lengths"));
    }
    let mut y = vec![Complex64::new(0.0, 0.0); len];
    for (frame, h) in frames.iter().zip(state.uplink()) {
        for (acc, x) in y.iter_mut().zip(frame.samples()) {
            *acc += h * x;
        }
    }
    if let Some(rng) = noise {
        for acc in y.iter_mut() {
            *acc += complex_gaussian(rng);
        }
    }
    Ok(y)
}

/// Device k receives `g_k x + z_k` with independent noise per device.
pub fn downlink_bc(
    frame: &AnalogFrame,
    state: &ChannelState,
    mut noise: Option<&mut dyn RngCore>,
) -> Vec<Vec<Complex64>> {
    state
        .downlink()
        .iter()
        .map(|g| {
            let mut y: Vec<Complex64> = frame.samples().iter().map(|x| g * x).collect();
            if let Some(rng) = noise.as_deref_mut() {
                for v in y.iter_mut() {
                    *v += complex_gaussian(rng);
                }
            }
            y
        })
        .collect()
}
