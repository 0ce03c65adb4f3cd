//! Sparsification, uniform quantization, error feedback and the
//! combinatorial bit accounting shared by the digital pipelines.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::math;
use crate::{Error, Result};

fn finite(u: &[f64], what: &'static str) -> Result<()> {
    if u.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Indices of `u` ordered by ascending value, ties by ascending index.
fn ascending_order(u: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..u.len()).collect();
    idx.sort_by(|&a, &b| u[a].partial_cmp(&u[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    idx
}

/// Sparse binary compression.
///
/// Looks at the `q` largest and the `q` smallest entries. `μ⁺` is the mean of
/// the positive entries among the largest, `μ⁻` the mean of the negative
/// entries among the smallest (an empty mean is zero). The winning side keeps
/// its mean at its positions and everything else is zeroed, so the result has
/// at most `q` non-zeros, all equal. Ties go to the negative side.
pub fn sparse_q(u: &[f64], q: usize) -> Result<Vec<f64>> {
    if 2 * q > u.len() {
        return Err(Error::arg("sparse_q needs 2q <= dim(u)"));
    }
    finite(u, "sparse_q input")?;
    let mut out = vec![0.0; u.len()];
    if q == 0 {
        return Ok(out);
    }
    let order = ascending_order(u);
    let top: Vec<usize> = order[order.len() - q..].iter().copied().filter(|&i| u[i] > 0.0).collect();
    let bottom: Vec<usize> = order[..q].iter().copied().filter(|&i| u[i] < 0.0).collect();
    let mean = |set: &[usize]| {
        if set.is_empty() {
            0.0
        } else {
            set.iter().map(|&i| u[i]).sum::<f64>() / set.len() as f64
        }
    };
    let mu_pos = mean(&top);
    let mu_neg = mean(&bottom);
    let (set, mu) = if mu_pos > -mu_neg { (top, mu_pos) } else { (bottom, mu_neg) };
    for i in set {
        out[i] = mu;
    }
    Ok(out)
}

/// Keeps the `q` entries of largest magnitude (ties by lower index) and
/// zeroes the rest. `q` larger than the dimension keeps everything.
pub fn thresh_q(u: &[f64], q: usize) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for i in top_magnitude_indices(u, q) {
        out[i] = u[i];
    }
    out
}

/// Positions of the `q` entries of largest magnitude, in ascending order.
pub fn top_magnitude_indices(u: &[f64], q: usize) -> Vec<usize> {
    let q = q.min(u.len());
    let mut idx: Vec<usize> = (0..u.len()).collect();
    idx.sort_by(|&a, &b| u[b].abs().partial_cmp(&u[a].abs()).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    idx.truncate(q);
    idx.sort_unstable();
    idx
}

/// Side information of a uniform quantizer spanning `[lo, hi]` with
/// `2^bits` levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerMeta {
    pub bits: u32,
    pub lo: f64,
    pub hi: f64,
}

impl QuantizerMeta {
    pub const MAX_BITS: u32 = 53;

    fn top_code(&self) -> u64 {
        (1u64 << self.bits) - 1
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.top_code() as f64
    }

    pub fn encode(&self, v: f64) -> u64 {
        if self.hi <= self.lo {
            return 0;
        }
        let top = self.top_code();
        let c = math::round((v - self.lo) / (self.hi - self.lo) * top as f64);
        (c.max(0.0) as u64).min(top)
    }

    pub fn decode(&self, code: u64) -> f64 {
        if self.hi <= self.lo {
            return self.lo;
        }
        if code >= self.top_code() {
            return self.hi;
        }
        self.lo + code as f64 * (self.hi - self.lo) / self.top_code() as f64
    }
}

/// Uniform `b`-bit quantization of `values` over their empirical range.
pub fn quantize_b(values: &[f64], bits: u32) -> Result<(Vec<u64>, QuantizerMeta)> {
    if values.is_empty() {
        return Err(Error::arg("nothing to quantize"));
    }
    if bits == 0 || bits > QuantizerMeta::MAX_BITS {
        return Err(Error::arg("quantizer bits must lie in 1..=53"));
    }
    finite(values, "quantizer input")?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let meta = QuantizerMeta { bits, lo, hi };
    Ok((values.iter().map(|&v| meta.encode(v)).collect(), meta))
}

pub fn dequantize(codes: &[u64], meta: &QuantizerMeta) -> Vec<f64> {
    codes.iter().map(|&c| meta.decode(c)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum PayloadValues {
    /// Nothing was sent.
    Empty,
    /// One quantized magnitude shared by every index.
    Shared(u64),
    /// One quantized value per index, in index order.
    PerIndex(Vec<u64>),
}

/// A compressed vector as it crosses a digital link.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePayload {
    length: usize,
    indices: Vec<usize>,
    values: PayloadValues,
    meta: QuantizerMeta,
    bit_count: f64,
}

impl SparsePayload {
    pub fn empty(length: usize) -> Self {
        Self {
            length,
            indices: Vec::new(),
            values: PayloadValues::Empty,
            meta: QuantizerMeta { bits: 1, lo: 0.0, hi: 0.0 },
            bit_count: 0.0,
        }
    }

    pub fn new(
        length: usize,
        indices: Vec<usize>,
        values: PayloadValues,
        meta: QuantizerMeta,
        bit_count: f64,
    ) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::arg("payload indices must be strictly increasing"));
        }
        if indices.last().is_some_and(|&i| i >= length) {
            return Err(Error::arg("payload index out of range"));
        }
        match &values {
            PayloadValues::Empty if !indices.is_empty() => {
                return Err(Error::arg("empty payload cannot carry indices"))
            }
            PayloadValues::PerIndex(v) if v.len() != indices.len() => {
                return Err(Error::arg("one value per index is required"))
            }
            _ => {}
        }
        if !(bit_count >= 0.0) {
            return Err(Error::arg("bit count must be non-negative"));
        }
        Ok(Self { length, indices, values, meta, bit_count })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &PayloadValues {
        &self.values
    }

    pub fn meta(&self) -> &QuantizerMeta {
        &self.meta
    }

    pub fn bit_count(&self) -> f64 {
        self.bit_count
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.values, PayloadValues::Empty)
    }

    /// Dense reconstruction. Fails if an index does not fit in `length`.
    pub fn to_dense(&self, length: usize) -> Result<Vec<f64>> {
        if self.length != length {
            return Err(Error::Decode(alloc::format!(
                "payload length {} does not match expected {}",
                self.length,
                length
            )));
        }
        let mut out = vec![0.0; length];
        if self.indices.iter().any(|&i| i >= length) {
            return Err(Error::Decode("payload index out of range".into()));
        }
        match &self.values {
            PayloadValues::Empty => {}
            PayloadValues::Shared(code) => {
                let v = self.meta.decode(*code);
                for &i in &self.indices {
                    out[i] = v;
                }
            }
            PayloadValues::PerIndex(codes) => {
                for (&i, &c) in self.indices.iter().zip(codes) {
                    out[i] = self.meta.decode(c);
                }
            }
        }
        Ok(out)
    }
}

/// Residual of error-feedback compression, one per transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorAccumulator {
    residual: Vec<f64>,
}

impl ErrorAccumulator {
    pub fn new(dim: usize) -> Self {
        Self { residual: vec![0.0; dim] }
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn dim(&self) -> usize {
        self.residual.len()
    }

    /// `update + residual`, the vector the compressor actually sees.
    pub fn compensate(&self, update: &[f64]) -> Result<Vec<f64>> {
        if update.len() != self.residual.len() {
            return Err(Error::arg("update dimension does not match accumulator"));
        }
        Ok(update.iter().zip(&self.residual).map(|(u, r)| u + r).collect())
    }

    /// `residual ← residual + update − sent`.
    pub fn accumulate(&mut self, update: &[f64], sent: &[f64]) -> Result<()> {
        let w = self.residual.len();
        if update.len() != w || sent.len() != w {
            return Err(Error::arg("accumulator, update and sent vectors must share a dimension"));
        }
        for ((r, u), s) in self.residual.iter_mut().zip(update).zip(sent) {
            *r += u - s;
        }
        finite(&self.residual, "error accumulator")
    }
}

/// `log₂ C(n, k)` as a sum of logarithms; never forms the factorials.
pub fn log2_binomial(n: u64, k: u64) -> Result<f64> {
    if k > n {
        return Err(Error::arg("log2_binomial needs k <= n"));
    }
    let k = k.min(n - k);
    let mut acc = 0.0;
    for j in 0..k {
        acc += math::log2((n - j) as f64) - math::log2((j + 1) as f64);
    }
    Ok(acc)
}

/// Largest `q ∈ 1..=q_max` with `cost(q) <= budget`, or 0 if even `q = 1`
/// does not fit. `cost` must be non-decreasing on `1..=q_max`.
pub fn max_q_under_budget(budget: f64, q_max: usize, cost: impl Fn(usize) -> f64) -> usize {
    if q_max == 0 || !(cost(1) <= budget) {
        return 0;
    }
    let (mut lo, mut hi) = (1usize, q_max);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if cost(mid) <= budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}
