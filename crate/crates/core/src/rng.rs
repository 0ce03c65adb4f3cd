//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream whose seed is
//! derived from the master seed and a small tuple of tags (purpose, device,
//! iteration). Streams never share state, so the order in which devices are
//! processed cannot change the numbers any of them sees.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Stream purposes, mixed into the derived seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Partition = 2,
    Init = 3,
    Train = 4,
    LogitSample = 5,
    Fading = 6,
    UplinkNoise = 7,
    DownlinkNoise = 8,
    ProjectionUplink = 9,
    ProjectionDownlink = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, tags: &[u64]) -> u64 {
    let mut s = splitmix64(master ^ splitmix64(stream as u64));
    for &t in tags {
        s = splitmix64(s ^ splitmix64(t.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    s
}

pub fn stream(master: u64, purpose: Stream, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, purpose, tags))
}

#[inline]
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Circularly-symmetric complex Gaussian with unit total variance.
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    Complex64::new(s * gaussian(rng), s * gaussian(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_streams_differ_by_tag() {
        let a = derive_seed(7, Stream::Train, &[0, 1]);
        let b = derive_seed(7, Stream::Train, &[1, 0]);
        let c = derive_seed(7, Stream::Init, &[0, 1]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, Stream::Train, &[0, 1]));
    }

    #[test]
    fn complex_gaussian_has_unit_power() {
        let mut rng = stream(3, Stream::Fading, &[]);
        let n = 100_000;
        let p: f64 = (0..n).map(|_| complex_gaussian(&mut rng).norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 1.0).abs() < 0.02, "{p}");
    }
}
