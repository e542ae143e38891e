//! Seeded, stream-splittable random source.
//!
//! A stream is addressed by `(seed, stream_id)` and advances a 64-bit word
//! counter. The generator is ChaCha8 keyed from `seed` via SplitMix64, with
//! `stream_id` selecting the ChaCha nonce, so distinct stream ids give
//! independent sequences and any position can be re-entered directly.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::{NumError, NumResult, Vec64};

/// Raw 64-bit draws consumed by one standard normal.
pub const DRAWS_PER_NORMAL: u64 = 2;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    /// Re-enter a stream at a previously observed [`counter`](Self::counter).
    pub fn at(seed: u64, stream_id: u64, counter: u128) -> Self {
        let mut s = Self::new(seed, stream_id);
        s.inner.set_word_pos(counter);
        s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Position in 32-bit words since the start of the stream.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Fresh stream with the same seed and `stream_id + offset`.
    pub fn child(&self, offset: u64) -> Self {
        Self::new(self.seed, self.stream_id.wrapping_add(offset))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`.
    #[inline]
    pub fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Index in `[0, n)` from one raw draw (multiply-shift reduction).
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal by Box–Muller, always consuming exactly
    /// [`DRAWS_PER_NORMAL`] raw draws. The sine branch is discarded.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Exponential(1) from one raw draw.
    pub fn exponential(&mut self) -> f64 {
        -self.uniform_open0().ln()
    }
}

/// Covariance of a centred Gaussian draw.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceSpec {
    /// `σ² I`
    Isotropic(f64),
    /// `diag(v₁, …, v_d)`, given as variances.
    Diagonal(Vec64),
}

/// Sample `N(0, cov)` in dimension `d`.
///
/// Consumes exactly `d · DRAWS_PER_NORMAL` raw draws regardless of the
/// covariance (zero variances included), so streams shared between coupled
/// iterates stay aligned.
pub fn gaussian(rng: &mut RngStream, d: usize, cov: &CovarianceSpec) -> NumResult<Vec64> {
    let sd: Vec<f64> = match cov {
        CovarianceSpec::Isotropic(v) => {
            check_variance(0, *v)?;
            vec![v.sqrt(); d]
        }
        CovarianceSpec::Diagonal(vars) => {
            if vars.len() != d {
                return Err(NumError::LengthMismatch {
                    left: d,
                    right: vars.len(),
                });
            }
            vars.iter()
                .enumerate()
                .map(|(i, &v)| check_variance(i, v).map(|_| v.sqrt()))
                .collect::<NumResult<_>>()?
        }
    };
    Ok(Vec64::from_vec(sd.into_iter().map(|s| s * rng.normal()).collect()))
}

fn check_variance(index: usize, value: f64) -> NumResult<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(NumError::InvalidVariance { index, value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_variance_gives_zero_vector() {
        let mut rng = RngStream::new(1, 0);
        let v = gaussian(&mut rng, 4, &CovarianceSpec::Isotropic(0.0)).unwrap();
        assert_eq!(v, Vec64::zeros(4));
        assert_eq!(rng.counter(), 4 * DRAWS_PER_NORMAL as u128 * 2);
    }

    #[test]
    fn same_position_same_vector() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        let cov = CovarianceSpec::Diagonal(Vec64::from_vec(vec![1.0, 4.0, 0.5]));
        assert_eq!(
            gaussian(&mut a, 3, &cov).unwrap(),
            gaussian(&mut b, 3, &cov).unwrap()
        );
        let pos = a.counter();
        let x = gaussian(&mut a, 3, &cov).unwrap();
        let mut c = RngStream::at(42, 7, pos);
        assert_eq!(gaussian(&mut c, 3, &cov).unwrap(), x);
    }

    #[test]
    fn negative_variance_rejected() {
        let mut rng = RngStream::new(0, 0);
        let cov = CovarianceSpec::Diagonal(Vec64::from_vec(vec![1.0, -1.0]));
        assert_eq!(
            gaussian(&mut rng, 2, &cov),
            Err(NumError::InvalidVariance {
                index: 1,
                value: -1.0
            })
        );
        assert!(gaussian(&mut rng, 2, &CovarianceSpec::Isotropic(f64::NAN)).is_err());
    }

    #[test]
    fn diagonal_covariance_moments() {
        // Monte-Carlo moment check: 1e5 draws from diag(1, 4).
        let mut rng = RngStream::new(2024, 3);
        let cov = CovarianceSpec::Diagonal(Vec64::from_vec(vec![1.0, 4.0]));
        let n = 100_000;
        let (mut s00, mut s11, mut s01) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = gaussian(&mut rng, 2, &cov).unwrap();
            s00 += x[0] * x[0];
            s11 += x[1] * x[1];
            s01 += x[0] * x[1];
        }
        let (c00, c11, c01) = (s00 / n as f64, s11 / n as f64, s01 / n as f64);
        assert!((c00 - 1.0).abs() < 0.05, "{c00}");
        assert!((c11 - 4.0).abs() < 0.2, "{c11}");
        assert!(c01.abs() < 0.05 * 2.0, "{c01}");
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(5, 0);
        let mut b = a.child(1);
        assert_eq!(b.stream_id(), 1);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xa, xb);
    }

    #[test]
    fn frozen_first_draws() {
        // Cross-version stability of the keyed generator.
        let mut rng = RngStream::new(0, 0);
        assert_eq!(rng.next_u64(), 13804888775535289832);
        assert_eq!(rng.next_u64(), 4211859015901796865);
        assert_eq!(RngStream::new(12345, 9).normal().to_bits(), 1.575468011663253f64.to_bits());
    }

    proptest! {
        #[test]
        fn interleaving_never_shifts_a_stream(seed in any::<u64>(), d in 1usize..6, pattern in prop::collection::vec(any::<bool>(), 1..20)) {
            let cov = CovarianceSpec::Isotropic(1.0);
            let mut solo = RngStream::new(seed, 1);
            let solo_draws: Vec<Vec64> = (0..pattern.len()).map(|_| gaussian(&mut solo, d, &cov).unwrap()).collect();

            let mut a = RngStream::new(seed, 1);
            let mut b = RngStream::new(seed, 2);
            let mut got = Vec::new();
            for &interleave in &pattern {
                if interleave {
                    gaussian(&mut b, d + 1, &cov).unwrap();
                }
                got.push(gaussian(&mut a, d, &cov).unwrap());
            }
            prop_assert_eq!(got, solo_draws);
        }
    }
}
