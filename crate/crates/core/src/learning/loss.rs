use alloc::vec::Vec;

use crate::math;

/// Floor applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn softmax(s: &[f64]) -> Vec<f64> {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|&x| math::exp(x - max)).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// `φ(a, b) = −Σ a_l ln b_l`, natural log, `b` clamped at [`PROB_FLOOR`].
pub fn cross_entropy(a: &[f64], b: &[f64]) -> f64 {
    -a.iter().zip(b).map(|(&x, &y)| x * math::ln(y.max(PROB_FLOOR))).sum::<f64>()
}

/// Gradient of `φ(onehot(label), softmax(s))` with respect to `s`, given `p = softmax(s)`.
pub fn cross_entropy_grad(p: &[f64], label: usize) -> Vec<f64> {
    let mut g = p.to_vec();
    g[label] -= 1.0;
    g
}

/// Gradient of `φ(softmax(s), q)` with respect to `s`, given `p = softmax(s)`:
/// `−p_j (ln q_j − Σ_l p_l ln q_l)`.
pub fn distillation_grad(p: &[f64], q: &[f64]) -> Vec<f64> {
    let logq: Vec<f64> = q.iter().map(|&x| math::ln(x.max(PROB_FLOOR))).collect();
    let mean: f64 = p.iter().zip(&logq).map(|(a, b)| a * b).sum();
    p.iter().zip(&logq).map(|(pj, lj)| -pj * (lj - mean)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use rand::Rng;

    #[test]
    fn softmax_closed_forms() {
        assert_eq!(softmax(&[0.0, 0.0]), [0.5, 0.5]);
        let p = softmax(&[0.0, libm::log(3.0)]);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant() {
        let mut rng = stream(1, Stream::Data, &[]);
        for _ in 0..100 {
            let s: Vec<f64> = (0..10).map(|_| rng.random_range(-30.0..30.0)).collect();
            let shift = rng.random_range(-500.0..500.0);
            let p = softmax(&s);
            let shifted: Vec<f64> = s.iter().map(|x| x + shift).collect();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (a, b) in p.iter().zip(softmax(&shifted)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cross_entropy_cases() {
        assert!((cross_entropy(&[0.5, 0.5], &[0.5, 0.5]) - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(cross_entropy(&[0.0, 1.0], &[0.0, 1.0]), 0.0);
        assert!(cross_entropy(&[1.0, 0.0], &[0.0, 1.0]).is_finite());
    }

    #[test]
    fn gibbs_inequality() {
        let mut rng = stream(2, Stream::Data, &[]);
        for _ in 0..200 {
            let a = softmax(&(0..6).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<_>>());
            let b = softmax(&(0..6).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<_>>());
            assert!(cross_entropy(&a, &b) >= cross_entropy(&a, &a) - 1e-12);
        }
    }
}
