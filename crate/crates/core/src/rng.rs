//! Seeded pseudo-random streams used for initialization and augmentation.
//!
//! A thin wrapper over ChaCha8, whose output is specified independently of
//! platform and crate version, so a seed reproduces the same stream
//! everywhere. The wrapper fixes the handful of draws the crate needs and
//! exposes a serializable position for resuming.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    inner: ChaCha8Rng,
}

/// Everything needed to continue a stream: key, stream id and word offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl fmt::Display for RngState {
    /// `<64 hex digits>:<stream hex>:<word position hex>`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.seed {
            write!(f, "{b:02x}")?;
        }
        write!(f, ":{:x}:{:x}", self.stream, self.word_pos)
    }
}

impl FromStr for RngState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("malformed rng state {s:?}");
        let mut parts = s.split(':');
        let (Some(key), Some(stream), Some(pos), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        if key.len() != 64 || !key.is_ascii() {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&key[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        Ok(RngState {
            seed,
            stream: u64::from_str_radix(stream, 16).map_err(|_| bad())?,
            word_pos: u128::from_str_radix(pos, 16).map_err(|_| bad())?,
        })
    }
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// An independent stream derived from `seed` and a stream id.
    pub fn stream(seed: u64, id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(id);
        Rng { inner }
    }

    pub fn from_state(state: &RngState) -> Self {
        let mut inner = ChaCha8Rng::from_seed(state.seed);
        inner.set_stream(state.stream);
        inner.set_word_pos(state.word_pos);
        Rng { inner }
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.inner.get_seed(),
            stream: self.inner.get_stream(),
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.random()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: u64) -> u64 {
        self.inner.random_range(0..n)
    }

    /// Uniform integer in the inclusive range `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        self.inner.random_range(lo..=hi)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(10_000);
        let mut b = Rng::new(10_000);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_ne!(
            Rng::stream(10_000, 1).next_u64(),
            Rng::stream(10_000, 2).next_u64()
        );
    }

    #[test]
    fn unit_interval_and_ranges() {
        let mut r = Rng::new(7);
        for _ in 0..10_000 {
            let u = r.next_f64();
            assert!((0.0..1.0).contains(&u));
            let k = r.range_inclusive(3, 6);
            assert!((3..=6).contains(&k));
            assert!(r.below(5) < 5);
        }
    }

    #[test]
    fn state_roundtrip_resumes_stream() {
        let mut a = Rng::stream(42, 3);
        a.next_u64();
        a.next_f64();
        let text = a.state().to_string();
        let mut b = Rng::from_state(&text.parse().unwrap());
        for _ in 0..10 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert!("00:1:2".parse::<RngState>().is_err());
        assert!(format!("{text}:0").parse::<RngState>().is_err());
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut r = Rng::new(1);
        let mut v: Vec<usize> = (0..50).collect();
        r.shuffle(&mut v);
        let mut s = v.clone();
        s.sort();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
    }
}
