//! Approximate message passing with soft thresholding.

use alloc::vec;
use alloc::vec::Vec;

use super::ProjectionMatrix;
use crate::compression::thresh_q;
use crate::math;
use crate::{Error, Result};

/// Median absolute deviation to standard deviation, Gaussian case.
const MAD_TO_SIGMA: f64 = 0.674_489_750_196_081_7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpConfig {
    /// Threshold as a multiple of the estimated effective noise level.
    pub kappa: f64,
    pub max_iter: usize,
    /// Stop when the residual norm changes by less than this fraction.
    pub tol: f64,
    /// Give up when the residual exceeds its running minimum by this factor.
    pub divergence: f64,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self { kappa: 1.5, max_iter: 50, tol: 1e-6, divergence: 10.0 }
    }
}

fn soft(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

fn median_abs(v: &[f64]) -> f64 {
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let mid = a.len() / 2;
    let (_, m, _) = a.select_nth_unstable_by(mid, |x, y| x.total_cmp(y));
    *m
}

/// Recovers an approximately `q`-sparse `x` from `y ≈ A x`.
///
/// Runs AMP with threshold `κ·σ̂_t`, where `σ̂_t` comes from the median
/// absolute deviation of the corrected residual. The returned iterate is
/// the last one, or the one with the smallest data residual if the
/// iteration diverges; it is finally restricted to its `q` largest entries.
pub fn cs_decode(a: &ProjectionMatrix, y: &[f64], q: usize, cfg: &AmpConfig) -> Result<Vec<f64>> {
    let (m, n) = (a.rows(), a.cols());
    if y.len() != m {
        return Err(Error::arg("measurement length does not match the projection"));
    }
    if q > n {
        return Err(Error::arg("sparsity exceeds signal dimension"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("measurements"));
    }
    let mut x = vec![0.0; n];
    let mut z = y.to_vec();
    let mut best_x = x.clone();
    let mut best_res = math::sqrt(y.iter().map(|v| v * v).sum());
    let mut prev_res = best_res;
    if best_res == 0.0 {
        return Ok(x);
    }
    for _ in 0..cfg.max_iter {
        let sigma = median_abs(&z) / MAD_TO_SIGMA;
        let tau = cfg.kappa * sigma;
        let pseudo = a.apply_t(&z);
        for (xi, pi) in x.iter_mut().zip(&pseudo) {
            *xi = soft(*xi + pi, tau);
        }
        let active = x.iter().filter(|v| **v != 0.0).count();
        let ax = a.apply(&x);
        let onsager = active as f64 / m as f64;
        let mut res_sq = 0.0;
        for i in 0..m {
            let r = y[i] - ax[i];
            res_sq += r * r;
            z[i] = r + onsager * z[i];
        }
        let res = math::sqrt(res_sq);
        if !res.is_finite() || res > cfg.divergence * best_res {
            x = best_x;
            break;
        }
        if res < best_res {
            best_res = res;
            best_x.copy_from_slice(&x);
        }
        if res == 0.0 || (prev_res - res).abs() < cfg.tol * prev_res {
            break;
        }
        prev_res = res;
    }
    Ok(thresh_q(&x, q))
}
