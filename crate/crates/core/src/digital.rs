//! Separate source-channel coding.
//!
//! Each transmission is granted the Shannon capacity of its slot as a bit
//! budget; a payload that fits arrives intact. Federated Learning sends
//! sparse-binary-compressed weight updates with error feedback, the
//! distillation schemes send thresholded and quantized logit tables.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::channel::Direction;
use crate::compression::{
    log2_binomial, max_q_under_budget, quantize_b, sparse_q, thresh_q, top_magnitude_indices, ErrorAccumulator,
    PayloadValues, SparsePayload,
};
use crate::learning::LogitTable;
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitBudget {
    direction: Direction,
    device: Option<usize>,
    bits: f64,
}

impl BitBudget {
    /// `bits` may be `+∞` for an unconstrained link.
    pub fn new(direction: Direction, device: Option<usize>, bits: f64) -> Result<Self> {
        if !(bits >= 0.0) {
            return Err(Error::arg("bit budget must be non-negative"));
        }
        Ok(Self { direction, device, bits })
    }

    pub fn unlimited(direction: Direction) -> Self {
        Self { direction, device: None, bits: f64::INFINITY }
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// `None` for the broadcast budget.
    pub fn device(&self) -> Option<usize> {
        self.device
    }

    pub fn bits(&self) -> f64 {
        self.bits
    }
}

/// `(T/K)·log₂(1 + |h|²·K·P)`: equal time-sharing of the uplink slot.
pub fn uplink_budget(channel_uses: usize, devices: usize, device: usize, gain: Complex64, power: f64) -> BitBudget {
    let k = devices.max(1) as f64;
    let bits = channel_uses as f64 / k * math::log2(1.0 + gain.norm_sqr() * k * power.max(0.0));
    BitBudget { direction: Direction::Uplink, device: Some(device), bits }
}

/// `min_k T·log₂(1 + |g_k|²·P)`: the broadcast rate the weakest device supports.
pub fn downlink_budget(channel_uses: usize, gains: &[Complex64], power: f64) -> BitBudget {
    let bits = gains
        .iter()
        .map(|g| channel_uses as f64 * math::log2(1.0 + g.norm_sqr() * power.max(0.0)))
        .fold(f64::INFINITY, f64::min);
    let bits = if bits.is_finite() { bits } else { 0.0 };
    BitBudget { direction: Direction::Downlink, device: None, bits }
}

/// `b + log₂ C(W, q)`: one shared magnitude plus the support.
pub fn fl_payload_bits(dim: usize, q: usize, bits: u32) -> f64 {
    bits as f64 + log2_binomial(dim as u64, q as u64).unwrap_or(f64::INFINITY)
}

/// `L·(b·q + log₂ C(L, q))`: `q` values and a support per row.
pub fn fd_payload_bits(classes: usize, q: usize, bits: u32) -> f64 {
    classes as f64 * (bits as f64 * q as f64 + log2_binomial(classes as u64, q as u64).unwrap_or(f64::INFINITY))
}

/// Sparsity chosen for a weight update under `budget`.
pub fn fl_choose_q(dim: usize, budget: &BitBudget, bits: u32) -> usize {
    max_q_under_budget(budget.bits, dim / 2, |q| fl_payload_bits(dim, q, bits))
}

/// Per-row sparsity chosen for a logit table under `budget`.
pub fn fd_choose_q(classes: usize, budget: &BitBudget, bits: u32) -> usize {
    (1..=classes).rev().find(|&q| fd_payload_bits(classes, q, bits) <= budget.bits).unwrap_or(0)
}

/// Compresses `update` plus the carried residual with `sparse_q` and a
/// `b`-bit magnitude, then folds what was not delivered back into `acc`.
pub fn fl_digital_encode(
    update: &[f64],
    acc: &mut ErrorAccumulator,
    budget: &BitBudget,
    bits: u32,
) -> Result<SparsePayload> {
    let dim = update.len();
    let compensated = acc.compensate(update)?;
    let q = fl_choose_q(dim, budget, bits);
    let v = if q == 0 { vec![0.0; dim] } else { sparse_q(&compensated, q)? };
    let support: Vec<usize> = (0..dim).filter(|&i| v[i] != 0.0).collect();
    let payload = if support.is_empty() {
        SparsePayload::empty(dim)
    } else {
        let (codes, meta) = quantize_b(&[v[support[0]]], bits)?;
        SparsePayload::new(dim, support, PayloadValues::Shared(codes[0]), meta, fl_payload_bits(dim, q, bits))?
    };
    let sent = payload.to_dense(dim)?;
    acc.accumulate(update, &sent)?;
    Ok(payload)
}

pub fn fl_digital_decode(payload: &SparsePayload, dim: usize) -> Result<Vec<f64>> {
    if matches!(payload.values(), PayloadValues::PerIndex(_)) {
        return Err(Error::Decode("weight-update payloads carry a shared magnitude".into()));
    }
    payload.to_dense(dim)
}

/// `Q_b(thresh_q(s_t))` for every row, one `q` for the whole table.
pub fn fd_digital_encode(table: &LogitTable, budget: &BitBudget, bits: u32) -> Result<SparsePayload> {
    let l = table.classes();
    if l < 2 {
        return Err(Error::arg("logit tables need at least two classes"));
    }
    let q = fd_choose_q(l, budget, bits);
    if q == 0 {
        return Ok(SparsePayload::empty(l * l));
    }
    let mut indices = Vec::with_capacity(l * q);
    let mut values = Vec::with_capacity(l * q);
    for t in 0..l {
        let row = table.row(t);
        for j in top_magnitude_indices(row, q) {
            indices.push(t * l + j);
            values.push(row[j]);
        }
    }
    let (codes, meta) = quantize_b(&values, bits)?;
    SparsePayload::new(l * l, indices, PayloadValues::PerIndex(codes), meta, fd_payload_bits(l, q, bits))
}

pub fn fd_digital_decode(payload: &SparsePayload, classes: usize) -> Result<LogitTable> {
    if payload.is_empty() {
        return Ok(LogitTable::zeros(classes));
    }
    if matches!(payload.values(), PayloadValues::Shared(_)) {
        return Err(Error::Decode("logit payloads carry one value per index".into()));
    }
    LogitTable::from_values(classes, payload.to_dense(classes * classes)?)
}

/// Reference output of the FD row compressor before quantization.
pub fn fd_thresholded(table: &LogitTable, q: usize) -> Vec<f64> {
    (0..table.classes()).flat_map(|t| thresh_q(table.row(t), q)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compression::QuantizerMeta;
    use crate::rng::{gaussian, stream, Stream};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn uplink_budget_cases() {
        assert_eq!(uplink_budget(100, 10, 0, c(1.0), 0.0).bits(), 0.0);
        assert_eq!(uplink_budget(100, 10, 0, c(0.0), 1.0).bits(), 0.0);
        let b = uplink_budget(2500, 10, 3, c(1.0), 1.0);
        assert!((b.bits() - 250.0 * 11f64.log2()).abs() < 1e-9);
        assert!((b.bits() - 864.86).abs() < 0.01);
        assert_eq!(b.device(), Some(3));
    }

    #[test]
    fn downlink_budget_cases() {
        assert_eq!(downlink_budget(100, &[c(1.0), c(0.0)], 10.0).bits(), 0.0);
        let b = downlink_budget(100, &[c(1.0), c(3f64.sqrt())], 1.0);
        assert!((b.bits() - 100.0).abs() < 1e-9);
        let single = downlink_budget(50, &[c(2.0)], 3.0);
        assert!((single.bits() - 50.0 * 13f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn budgets_are_monotone() {
        for t in [1, 10, 100, 1000] {
            for p in [0.1, 1.0, 10.0] {
                let b = uplink_budget(t, 10, 0, c(0.8), p).bits();
                assert!(b >= uplink_budget(t, 10, 0, c(0.7), p).bits());
                assert!(b >= uplink_budget(t, 10, 0, c(0.8), p / 2.0).bits());
                assert!(b >= uplink_budget(t / 2, 10, 0, c(0.8), p).bits());
                let d = downlink_budget(t, &[c(0.8), c(1.2)], p).bits();
                assert!(d >= downlink_budget(t, &[c(0.7), c(1.2)], p).bits());
                assert!(d >= downlink_budget(t, &[c(0.8), c(1.2)], p / 2.0).bits());
            }
        }
    }

    #[test]
    fn zero_budget_carries_everything() {
        let u = [0.5, -1.0, 2.0, 0.1];
        let mut acc = ErrorAccumulator::new(4);
        acc.accumulate(&[1.0, 1.0, 1.0, 1.0], &[0.0; 4]).unwrap();
        let budget = BitBudget::new(Direction::Uplink, Some(0), 0.0).unwrap();
        let payload = fl_digital_encode(&u, &mut acc, &budget, 16).unwrap();
        assert!(payload.is_empty());
        assert_eq!(payload.bit_count(), 0.0);
        assert_eq!(acc.residual(), [1.5, 0.0, 3.0, 1.1]);
        assert_eq!(fl_digital_decode(&payload, 4).unwrap(), [0.0; 4]);
    }

    #[test]
    fn fl_q_matches_scan() {
        let budget = BitBudget::new(Direction::Uplink, Some(0), 100.0).unwrap();
        let scan = (1..=500).filter(|&q| fl_payload_bits(1000, q, 16) <= 100.0).max().unwrap_or(0);
        assert_eq!(fl_choose_q(1000, &budget, 16), scan);
    }

    #[test]
    fn fl_payload_is_one_valued_and_within_budget() {
        let mut rng = stream(8, Stream::Data, &[]);
        for trial in 0..20 {
            let u: Vec<f64> = (0..300).map(|_| gaussian(&mut rng)).collect();
            let budget = BitBudget::new(Direction::Uplink, Some(0), 20.0 + 10.0 * trial as f64).unwrap();
            let mut acc = ErrorAccumulator::new(300);
            let payload = fl_digital_encode(&u, &mut acc, &budget, 16).unwrap();
            assert!(payload.bit_count() <= budget.bits());
            let q = fl_choose_q(300, &budget, 16);
            let v = fl_digital_decode(&payload, 300).unwrap();
            let nz: Vec<f64> = v.iter().copied().filter(|&x| x != 0.0).collect();
            assert!(nz.len() <= 2 * q);
            assert!(nz.windows(2).all(|w| w[0] == w[1]));
            // decode equals sparse_q up to the quantizer half step (zero for one value)
            let reference = sparse_q(&u, q).unwrap();
            for (a, b) in v.iter().zip(&reference) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn fl_unlimited_budget_reproduces_sparse_q() {
        let mut rng = stream(9, Stream::Data, &[]);
        let u: Vec<f64> = (0..101).map(|_| gaussian(&mut rng)).collect();
        let mut acc = ErrorAccumulator::new(101);
        acc.accumulate(&u, &[0.0; 101]).unwrap();
        let payload = fl_digital_encode(&u, &mut acc, &BitBudget::unlimited(Direction::Uplink), 53).unwrap();
        let compensated: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        let reference = sparse_q(&compensated, 50).unwrap();
        let got = fl_digital_decode(&payload, 101).unwrap();
        let err: f64 = got.iter().zip(&reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let norm: f64 = reference.iter().map(|x| x * x).sum();
        assert!(err <= 1e-18 * norm);
    }

    #[test]
    fn fd_q_matches_scan_and_bits() {
        let budget = BitBudget::new(Direction::Uplink, Some(0), 1000.0).unwrap();
        let q = fd_choose_q(10, &budget, 16);
        let scan = (0..=10).filter(|&q| q == 0 || fd_payload_bits(10, q, 16) <= 1000.0).max().unwrap();
        assert_eq!(q, scan);
        let table = LogitTable::from_values(10, (0..100).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let payload = fd_digital_encode(&table, &budget, 16).unwrap();
        assert_eq!(payload.bit_count(), fd_payload_bits(10, q, 16));
        assert!(payload.bit_count() <= 1000.0);
    }

    #[test]
    fn fd_empty_and_full_payloads() {
        let table = LogitTable::from_values(3, vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0, 2.0, 2.0, -0.5]).unwrap();
        let tiny = BitBudget::new(Direction::Uplink, Some(0), 5.0).unwrap();
        let p = fd_digital_encode(&table, &tiny, 16).unwrap();
        assert!(p.is_empty());
        assert_eq!(fd_digital_decode(&p, 3).unwrap(), LogitTable::zeros(3));

        let p = fd_digital_encode(&table, &BitBudget::unlimited(Direction::Uplink), 20).unwrap();
        let back = fd_digital_decode(&p, 3).unwrap();
        let half = p.meta().step() / 2.0;
        for (a, b) in back.flat().iter().zip(table.flat()) {
            assert!((a - b).abs() <= half + 1e-15);
        }
    }

    #[test]
    fn fd_round_trip_on_levels() {
        // 2 non-zeros per row, both already on a 3-bit grid over [-1, 6]
        let meta = QuantizerMeta { bits: 3, lo: -1.0, hi: 6.0 };
        let lv = |c| meta.decode(c);
        let table = LogitTable::from_values(3, vec![lv(0), 0.0, lv(7), lv(2), lv(5), 0.0, 0.0, lv(1), lv(3)]).unwrap();
        let budget = BitBudget::new(Direction::Downlink, None, fd_payload_bits(3, 2, 3)).unwrap();
        let p = fd_digital_encode(&table, &budget, 3).unwrap();
        assert_eq!(fd_digital_decode(&p, 3).unwrap(), table);
    }

    #[test]
    fn fd_random_tables_keep_top_q() {
        let mut rng = stream(10, Stream::Data, &[]);
        for bits in [4u32, 8, 16] {
            let table = LogitTable::from_values(10, (0..100).map(|_| 3.0 * gaussian(&mut rng)).collect()).unwrap();
            let budget = BitBudget::new(Direction::Uplink, Some(1), 600.0).unwrap();
            let q = fd_choose_q(10, &budget, bits);
            let p = fd_digital_encode(&table, &budget, bits).unwrap();
            let back = fd_digital_decode(&p, 10).unwrap();
            let reference = fd_thresholded(&table, q);
            let half = p.meta().step() / 2.0;
            for t in 0..10 {
                let kept = top_magnitude_indices(table.row(t), q);
                for j in 0..10 {
                    let got = back.row(t)[j];
                    if kept.contains(&j) {
                        assert!((got - reference[t * 10 + j]).abs() <= half * (1.0 + 1e-9));
                    } else {
                        assert_eq!(got, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn corrupt_payload_fails_to_decode() {
        let meta = QuantizerMeta { bits: 4, lo: 0.0, hi: 1.0 };
        let p = SparsePayload::new(10, vec![2, 9], PayloadValues::Shared(3), meta, 20.0).unwrap();
        assert!(matches!(fl_digital_decode(&p, 5), Err(Error::Decode(_))));
        assert!(SparsePayload::new(4, vec![1, 7], PayloadValues::Shared(0), meta, 1.0).is_err());
    }
}
