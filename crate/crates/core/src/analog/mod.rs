//! Over-the-air computation.
//!
//! Devices transmit uncoded, phase-precompensated, full-power analog frames
//! at the same time so the multiple-access channel itself forms the sum the
//! server needs. Weight updates are sparsified and randomly projected to fit
//! the slot and recovered with AMP; logit tables are small enough to be sent
//! with repetition coding instead.

mod amp;

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};

pub use amp::{cs_decode, AmpConfig};

use crate::channel::{downlink_bc, energy, uplink_mac, AnalogFrame, ChannelState, Direction};
use crate::compression::{thresh_q, ErrorAccumulator};
use crate::learning::LogitTable;
use crate::math;
use crate::metrics::Audit;
use crate::rng::{gaussian, SimRng};
use crate::{Error, Result};

/// Dense Gaussian sensing matrix with `N(0, 1/rows)` entries, regenerated
/// bit-exactly from `(rows, cols, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    rows: usize,
    cols: usize,
    seed: u64,
    entries: Vec<f32>,
}

impl ProjectionMatrix {
    pub fn new(rows: usize, cols: usize, seed: u64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::arg("projection matrix needs positive dimensions"));
        }
        let mut rng = SimRng::seed_from_u64(seed);
        let scale = math::sqrt(1.0 / rows as f64);
        let entries = (0..rows * cols).map(|_| (scale * gaussian(&mut rng)) as f32).collect();
        Ok(Self { rows, cols, seed, entries })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.cols + c] as f64
    }

    /// `A v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let nz: Vec<(usize, f64)> = v.iter().copied().enumerate().filter(|(_, x)| *x != 0.0).collect();
        (0..self.rows)
            .map(|r| {
                let row = &self.entries[r * self.cols..(r + 1) * self.cols];
                if nz.len() * 4 < self.cols {
                    nz.iter().map(|&(c, x)| row[c] as f64 * x).sum()
                } else {
                    row.iter().zip(v).map(|(a, x)| *a as f64 * x).sum()
                }
            })
            .collect()
    }

    /// `Aᵀ z`.
    pub fn apply_t(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &zr) in z.iter().enumerate() {
            if zr == 0.0 {
                continue;
            }
            let row = &self.entries[r * self.cols..(r + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += *a as f64 * zr;
            }
        }
        out
    }
}

/// `x(m) = v(2m) + j·v(2m+1)` (zero-based).
pub fn pack_complex(v: &[f64]) -> Result<Vec<Complex64>> {
    if !v.len().is_multiple_of(2) {
        return Err(Error::arg("complex packing needs an even number of reals"));
    }
    Ok(v.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect())
}

pub fn unpack_complex(x: &[Complex64]) -> Vec<f64> {
    x.iter().flat_map(|c| [c.re, c.im]).collect()
}

/// Packs `v` into exactly `channel_uses` complex samples, padding with
/// zeros (an odd tail gets a zero imaginary part).
fn pack_into_slot(v: &[f64], channel_uses: usize) -> Result<Vec<Complex64>> {
    if v.len() > 2 * channel_uses {
        return Err(Error::config("payload does not fit in the slot"));
    }
    let mut padded = v.to_vec();
    padded.resize(2 * channel_uses, 0.0);
    pack_complex(&padded)
}

/// `γ·e^{−j∠h}·x` with `γ = √(P·T)/‖x‖₂`, so the frame carries exactly
/// `P·T`. An all-zero `x` yields an all-zero frame and `γ = 0`.
pub fn precompensate(
    x: &[Complex64],
    gain: Complex64,
    power: f64,
    channel_uses: usize,
    direction: Direction,
) -> Result<(AnalogFrame, f64)> {
    let norm = math::sqrt(energy(x));
    let gamma = if norm > 0.0 { math::sqrt(power * channel_uses as f64) / norm } else { 0.0 };
    let rot = if gain.norm() > 0.0 { gain.conj() / gain.norm() } else { Complex64::new(1.0, 0.0) };
    let samples: Vec<Complex64> = x.iter().map(|s| s * rot * gamma).collect();
    Ok((AnalogFrame::new(samples, direction, power)?, gamma))
}

/// `ν = Σ γ_k|h_k| / (1/2 + Σ (γ_k|h_k|)²)`.
pub fn uplink_mmse_factor(gammas: &[f64], habs: &[f64]) -> f64 {
    let (num, den) = gammas.iter().zip(habs).fold((0.0, 0.5), |(n, d), (g, h)| (n + g * h, d + (g * h) * (g * h)));
    num / den
}

pub fn mmse_scale_uplink(y: &[Complex64], gammas: &[f64], habs: &[f64]) -> Vec<Complex64> {
    let nu = uplink_mmse_factor(gammas, habs);
    y.iter().map(|v| v * nu).collect()
}

/// `ν_k = γ|g_k| / (1/2 + (γ|g_k|)²)`.
pub fn downlink_mmse_factor(gamma: f64, gabs: f64) -> f64 {
    let a = gamma * gabs;
    a / (0.5 + a * a)
}

pub fn mmse_scale_downlink(y: &[Complex64], gamma: f64, gabs: f64) -> Vec<Complex64> {
    let nu = downlink_mmse_factor(gamma, gabs);
    y.iter().map(|v| v * nu).collect()
}

/// `R_ρ = 1_ρ ⊗ I_block`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepetitionCode {
    rho: usize,
    block: usize,
}

impl RepetitionCode {
    pub fn new(rho: usize, block: usize) -> Result<Self> {
        if rho == 0 || block == 0 {
            return Err(Error::config("repetition code needs rho >= 1 and a non-empty block"));
        }
        Ok(Self { rho, block })
    }

    /// `ρ = ⌊real_dims / block⌋`; fails when the block does not fit once.
    pub fn for_slot(real_dims: usize, block: usize) -> Result<Self> {
        let rho = real_dims / block.max(1);
        if rho == 0 {
            return Err(Error::config(alloc::format!(
                "{real_dims} real channel dimensions cannot carry a {block}-entry block; \
                 dimension reduction for logit tables is not supported"
            )));
        }
        Self::new(rho, block)
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn encode(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.block {
            return Err(Error::arg("repetition block length mismatch"));
        }
        Ok(s.iter().copied().cycle().take(self.rho * self.block).collect())
    }

    /// `R_ρᵀ v / ρ`: the mean over the repetitions.
    pub fn decode(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rho * self.block {
            return Err(Error::arg("repetition codeword length mismatch"));
        }
        let mut out = vec![0.0; self.block];
        for chunk in v.chunks_exact(self.block) {
            for (o, x) in out.iter_mut().zip(chunk) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|o| *o /= self.rho as f64);
        Ok(out)
    }
}

fn receive_superposition(
    signals: &[Vec<Complex64>],
    state: &ChannelState,
    power: f64,
    channel_uses: usize,
    noise: Option<&mut dyn RngCore>,
    audit: &mut Audit,
) -> Result<Vec<f64>> {
    let mut frames = Vec::with_capacity(signals.len());
    let mut gammas = Vec::with_capacity(signals.len());
    for (x, h) in signals.iter().zip(state.uplink()) {
        let (frame, gamma) = precompensate(x, *h, power, channel_uses, Direction::Uplink)?;
        audit.check_frame(&frame, channel_uses);
        frames.push(frame);
        gammas.push(gamma);
    }
    let y = uplink_mac(&frames, state, noise)?;
    let habs: Vec<f64> = state.uplink().iter().map(|h| h.norm()).collect();
    Ok(unpack_complex(&mmse_scale_uplink(&y, &gammas, &habs)))
}

fn receive_broadcast(
    x: &[Complex64],
    state: &ChannelState,
    power: f64,
    channel_uses: usize,
    noise: Option<&mut dyn RngCore>,
    audit: &mut Audit,
) -> Result<Vec<Vec<f64>>> {
    let (frame, gamma) = precompensate(x, Complex64::new(1.0, 0.0), power, channel_uses, Direction::Downlink)?;
    audit.check_frame(&frame, channel_uses);
    let received = downlink_bc(&frame, state, noise);
    Ok(received
        .iter()
        .zip(state.downlink())
        .map(|(y, g)| {
            // the device knows its own channel and removes its phase
            let gabs = g.norm();
            let derot = if gabs > 0.0 { g.conj() / gabs } else { Complex64::new(0.0, 0.0) };
            let y: Vec<Complex64> = y.iter().map(|v| v * derot).collect();
            unpack_complex(&mmse_scale_downlink(&y, gamma, gabs))
        })
        .collect())
}

/// Analog FL uplink. Returns the server's estimate of `Σ_k thresh_q(Δw_k + Δ_k)`
/// and updates every device accumulator against its sparsified vector.
#[allow(clippy::too_many_arguments)]
pub fn fl_analog_uplink(
    updates: &[Vec<f64>],
    accs: &mut [ErrorAccumulator],
    q: usize,
    projection: &ProjectionMatrix,
    state: &ChannelState,
    power: f64,
    channel_uses: usize,
    noise: Option<&mut dyn RngCore>,
    amp: &AmpConfig,
    audit: &mut Audit,
) -> Result<Vec<f64>> {
    if updates.len() != accs.len() || updates.len() != state.devices() {
        return Err(Error::arg("one update and accumulator per device is required"));
    }
    if projection.rows() != 2 * channel_uses {
        return Err(Error::config("uplink projection must have 2T rows"));
    }
    let dim = projection.cols();
    let mut signals = Vec::with_capacity(updates.len());
    for (u, acc) in updates.iter().zip(accs.iter_mut()) {
        if u.len() != dim {
            return Err(Error::arg("update dimension does not match the projection"));
        }
        let v = thresh_q(&acc.compensate(u)?, q);
        acc.accumulate(u, &v)?;
        signals.push(pack_complex(&projection.apply(&v))?);
    }
    let y = receive_superposition(&signals, state, power, channel_uses, noise, audit)?;
    cs_decode(projection, &y, q, amp)
}

/// Analog FL downlink. The server sparsifies `avg + Δ` with its own
/// accumulator; each device returns its own recovered estimate.
#[allow(clippy::too_many_arguments)]
pub fn fl_analog_downlink(
    avg: &[f64],
    acc: &mut ErrorAccumulator,
    q: usize,
    projection: &ProjectionMatrix,
    state: &ChannelState,
    power: f64,
    channel_uses: usize,
    noise: Option<&mut dyn RngCore>,
    amp: &AmpConfig,
    audit: &mut Audit,
) -> Result<Vec<Vec<f64>>> {
    if projection.rows() != 2 * channel_uses || projection.cols() != avg.len() {
        return Err(Error::config("downlink projection must be 2T × W"));
    }
    let v = thresh_q(&acc.compensate(avg)?, q);
    acc.accumulate(avg, &v)?;
    let x = pack_complex(&projection.apply(&v))?;
    receive_broadcast(&x, state, power, channel_uses, noise, audit)?
        .iter()
        .map(|y| cs_decode(projection, y, q, amp))
        .collect()
}

fn logit_code(classes: usize, channel_uses: usize) -> Result<RepetitionCode> {
    RepetitionCode::for_slot(2 * channel_uses, classes * classes)
}

/// Analog FD uplink: repetition-coded logit tables. Returns the server's
/// estimate of `Σ_k s_k`.
pub fn fd_analog_uplink(
    tables: &[LogitTable],
    state: &ChannelState,
    power: f64,
    channel_uses: usize,
    noise: Option<&mut dyn RngCore>,
    audit: &mut Audit,
) -> Result<LogitTable> {
    let l = tables.first().ok_or_else(|| Error::arg("no logit tables"))?.classes();
    if tables.len() != state.devices() || tables.iter().any(|t| t.classes() != l) {
        return Err(Error::arg("one equally-shaped logit table per device is required"));
    }
    let code = logit_code(l, channel_uses)?;
    let signals =
        tables.iter().map(|t| pack_into_slot(&code.encode(t.flat())?, channel_uses)).collect::<Result<Vec<_>>>()?;
    let y = receive_superposition(&signals, state, power, channel_uses, noise, audit)?;
    LogitTable::from_values(l, code.decode(&y[..code.rho() * code.block()])?)
}

/// Analog FD downlink: every device's estimate of the broadcast table.
pub fn fd_analog_downlink(
    table: &LogitTable,
    state: &ChannelState,
    power: f64,
    channel_uses: usize,
    noise: Option<&mut dyn RngCore>,
    audit: &mut Audit,
) -> Result<Vec<LogitTable>> {
    let l = table.classes();
    let code = logit_code(l, channel_uses)?;
    let x = pack_into_slot(&code.encode(table.flat())?, channel_uses)?;
    receive_broadcast(&x, state, power, channel_uses, noise, audit)?
        .iter()
        .map(|y| LogitTable::from_values(l, code.decode(&y[..code.rho() * code.block()])?))
        .collect()
}
