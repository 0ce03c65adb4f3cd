use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::model::{forward_logits, ModelWeights};
use crate::data::LabeledDataset;
use crate::{Error, Result};

/// `L × L` table whose row `t` is the average logit vector for label `t`.
/// Rows that no data point contributed to are zero and flagged absent.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitTable {
    classes: usize,
    values: Vec<f64>,
    present: Vec<bool>,
}

impl LogitTable {
    pub fn zeros(classes: usize) -> Self {
        Self { classes, values: vec![0.0; classes * classes], present: vec![false; classes] }
    }

    /// All rows are marked present.
    pub fn from_values(classes: usize, values: Vec<f64>) -> Result<Self> {
        Self::with_mask(classes, values, vec![true; classes])
    }

    pub fn with_mask(classes: usize, values: Vec<f64>, present: Vec<bool>) -> Result<Self> {
        if values.len() != classes * classes || present.len() != classes {
            return Err(Error::arg("logit table must be L×L with an L-entry mask"));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("logit table"));
        }
        Ok(Self { classes, values, present })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.classes..(t + 1) * self.classes]
    }

    pub fn is_present(&self, t: usize) -> bool {
        self.present[t]
    }

    pub fn mask(&self) -> &[bool] {
        &self.present
    }

    /// Rows concatenated, `L²` entries.
    pub fn flat(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            classes: self.classes,
            values: self.values.iter().map(|v| v * factor).collect(),
            present: self.present.clone(),
        }
    }

    /// Entrywise mean of equally-shaped tables; a row is present if any
    /// input has it.
    pub fn mean(tables: &[LogitTable]) -> Result<Self> {
        let first = tables.first().ok_or_else(|| Error::arg("no tables to average"))?;
        let l = first.classes;
        if tables.iter().any(|t| t.classes != l) {
            return Err(Error::arg("tables disagree on class count"));
        }
        let mut values = vec![0.0; l * l];
        let mut present = vec![false; l];
        for t in tables {
            for (a, b) in values.iter_mut().zip(&t.values) {
                *a += b;
            }
            for (p, q) in present.iter_mut().zip(&t.present) {
                *p |= q;
            }
        }
        let n = tables.len() as f64;
        values.iter_mut().for_each(|v| *v /= n);
        Ok(Self { classes: l, values, present })
    }
}

/// Per-label average covariates, with a presence mask. Masked rows are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    classes: usize,
    dim: usize,
    values: Vec<f64>,
    present: Vec<bool>,
}

impl CovariateTable {
    pub fn new(classes: usize, dim: usize, values: Vec<f64>, present: Vec<bool>) -> Result<Self> {
        if values.len() != classes * dim || present.len() != classes {
            return Err(Error::arg("covariate table must be L×d with an L-entry mask"));
        }
        let mut values = values;
        for (t, &p) in present.iter().enumerate() {
            if !p {
                values[t * dim..(t + 1) * dim].fill(0.0);
            }
        }
        Ok(Self { classes, dim, values, present })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn is_present(&self, t: usize) -> bool {
        self.present[t]
    }

    pub fn present_count(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }
}

/// `(K·avg − own)/(K − 1)`: the average over everyone but `own`.
pub fn leave_one_out(avg: &[f64], own: &[f64], k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::arg("leave-one-out average needs at least two contributors"));
    }
    if avg.len() != own.len() {
        return Err(Error::arg("leave-one-out operands differ in length"));
    }
    let kf = k as f64;
    Ok(avg.iter().zip(own).map(|(a, o)| (kf * a - o) / (kf - 1.0)).collect())
}

/// Per-label mean logits of `w` over a sample of `data`. A `sample_size`
/// at least `|data|` uses every point and draws nothing from `rng`.
pub fn average_logits<R: Rng + ?Sized>(
    w: &ModelWeights,
    data: &LabeledDataset,
    sample_size: usize,
    rng: &mut R,
) -> Result<LogitTable> {
    if sample_size == 0 {
        return Err(Error::arg("logit averaging needs a positive sample size"));
    }
    let l = w.arch().classes();
    let picked: Vec<usize> = if sample_size >= data.len() {
        (0..data.len()).collect()
    } else {
        let mut v = rand::seq::index::sample(rng, data.len(), sample_size).into_vec();
        v.sort_unstable();
        v
    };
    let mut sums = vec![0.0; l * l];
    let mut counts = vec![0usize; l];
    for i in picked {
        let t = data.label(i);
        let s = forward_logits(w, data.covariate(i))?;
        for (a, b) in sums[t * l..(t + 1) * l].iter_mut().zip(&s) {
            *a += b;
        }
        counts[t] += 1;
    }
    for (t, &n) in counts.iter().enumerate() {
        if n > 0 {
            sums[t * l..(t + 1) * l].iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    LogitTable::with_mask(l, sums, counts.iter().map(|&n| n > 0).collect())
}

/// Per-label conditional mean of the covariates.
pub fn local_covariate_means(data: &LabeledDataset, classes: usize) -> Result<CovariateTable> {
    if data.classes() > classes {
        return Err(Error::arg("dataset has more classes than requested"));
    }
    let d = data.dim();
    let mut sums = vec![0.0; classes * d];
    let mut counts = vec![0usize; classes];
    for i in 0..data.len() {
        let t = data.label(i);
        for (a, b) in sums[t * d..(t + 1) * d].iter_mut().zip(data.covariate(i)) {
            *a += b;
        }
        counts[t] += 1;
    }
    for (t, &n) in counts.iter().enumerate() {
        if n > 0 {
            sums[t * d..(t + 1) * d].iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    CovariateTable::new(classes, d, sums, counts.iter().map(|&n| n > 0).collect())
}

/// The offline mixed-up covariate exchange over an ideal channel.
///
/// The server averages each label over the devices holding it. Device `k`
/// then gets the leave-one-out average for labels it holds (masked if no
/// other device holds them) and the plain global average for labels it
/// lacks. With every label present everywhere this is exactly
/// `(K c̃_t − c̃_t^k)/(K − 1)`.
pub fn mixed_up_covariates(locals: &[CovariateTable]) -> Result<Vec<CovariateTable>> {
    let first = locals.first().ok_or_else(|| Error::arg("no covariate tables"))?;
    let (l, d) = (first.classes, first.dim);
    if locals.iter().any(|t| t.classes != l || t.dim != d) {
        return Err(Error::arg("covariate tables disagree on shape"));
    }
    let mut global = vec![0.0; l * d];
    let mut holders = vec![0usize; l];
    for table in locals {
        for t in 0..l {
            if table.present[t] {
                holders[t] += 1;
                for (a, b) in global[t * d..(t + 1) * d].iter_mut().zip(table.row(t)) {
                    *a += b;
                }
            }
        }
    }
    for t in 0..l {
        if holders[t] > 0 {
            global[t * d..(t + 1) * d].iter_mut().for_each(|v| *v /= holders[t] as f64);
        }
    }
    locals
        .iter()
        .map(|own| {
            let mut values = vec![0.0; l * d];
            let mut present = vec![false; l];
            for t in 0..l {
                let g = &global[t * d..(t + 1) * d];
                let row = if own.present[t] {
                    if holders[t] < 2 {
                        continue;
                    }
                    leave_one_out(g, own.row(t), holders[t])?
                } else if holders[t] > 0 {
                    g.to_vec()
                } else {
                    continue;
                };
                values[t * d..(t + 1) * d].copy_from_slice(&row);
                present[t] = true;
            }
            CovariateTable::new(l, d, values, present)
        })
        .collect()
}

/// Logits of `w` at each present row of `cov`; absent rows stay zero.
pub fn logits_at_covariates(w: &ModelWeights, cov: &CovariateTable) -> Result<LogitTable> {
    let l = w.arch().classes();
    if cov.classes != l {
        return Err(Error::arg("covariate table class count does not match model"));
    }
    let mut values = vec![0.0; l * l];
    for t in 0..l {
        if cov.present[t] {
            values[t * l..(t + 1) * l].copy_from_slice(&forward_logits(w, cov.row(t))?);
        }
    }
    LogitTable::with_mask(l, values, cov.present.clone())
}
