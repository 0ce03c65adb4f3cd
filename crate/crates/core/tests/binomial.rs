//! `log₂ C(n, k)` against exact big-integer binomials.

use fedsim_core::compression::log2_binomial;
use fedsim_core::digital::{fd_payload_bits, fl_payload_bits};
use num_bigint::BigUint;
use proptest::prelude::*;

fn exact(n: u64, k: u64) -> BigUint {
    let mut c = BigUint::from(1u32);
    for j in 0..k {
        c = c * (n - j) / (j + 1);
    }
    c
}

/// log₂ of a big integer from its top 64 bits.
fn log2_big(v: &BigUint) -> f64 {
    let bits = v.bits();
    let shift = bits.saturating_sub(64);
    let top: u64 = (v >> shift).try_into().unwrap();
    (top as f64).log2() + shift as f64
}

#[test]
fn matches_exact_values() {
    for &(n, k) in &[(0, 0), (1, 1), (5, 2), (10, 3), (64, 32), (100, 50), (6570, 80), (6570, 3285), (10_000, 1)] {
        let want = log2_big(&exact(n, k));
        let got = log2_binomial(n, k).unwrap();
        assert!((got - want).abs() <= 1e-9 * want.max(1.0), "C({n},{k}): {got} vs {want}");
    }
}

#[test]
fn payload_costs_use_the_binomial() {
    let w = 1234;
    assert!((fl_payload_bits(w, 10, 16) - 16.0 - log2_big(&exact(w as u64, 10))).abs() < 1e-9);
    let l = 10;
    let row = 16.0 * 3.0 + log2_big(&exact(l as u64, 3));
    assert!((fd_payload_bits(l, 3, 16) - l as f64 * row).abs() < 1e-9);
    assert!(log2_binomial(3, 4).is_err());
}

proptest! {
    #[test]
    fn agrees_with_bigint(n in 0u64..3000, frac in 0.0f64..=1.0) {
        let k = (n as f64 * frac) as u64;
        let want = log2_big(&exact(n, k));
        let got = log2_binomial(n, k).unwrap();
        prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0));
    }

    #[test]
    fn symmetric(n in 0u64..500, k in 0u64..500) {
        prop_assume!(k <= n);
        prop_assert_eq!(log2_binomial(n, k).unwrap(), log2_binomial(n, n - k).unwrap());
    }
}
