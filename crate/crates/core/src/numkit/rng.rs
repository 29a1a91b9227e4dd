use rand::{Rng as _, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;

use super::Vector;
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// Seeded PCG-64 generator bound to an explicit stream.
///
/// Two generators built from the same `(seed, stream_id)` yield the same
/// sequence on every platform; different stream ids select different PCG
/// increments and are used to give each worker its own sequence.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: Pcg64,
    stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let hi = splitmix64(seed);
        let lo = splitmix64(hi ^ stream_id.rotate_left(17));
        let state = ((hi as u128) << 64) | lo as u128;
        Rng {
            inner: Pcg64::new(state, stream_id as u128),
            stream_id,
        }
    }

    pub fn seed_from(seed: u64) -> Self {
        Rng::new(seed, 0)
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Draws a fresh seed from this generator and returns a child on `stream_id`.
    pub fn derive(&mut self, stream_id: u64) -> Rng {
        let seed = self.inner.next_u64();
        Rng::new(seed, stream_id)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// `m` indices drawn uniformly from `0..n` with replacement.
    pub fn indices_with_replacement(&mut self, n: usize, m: usize) -> Vec<usize> {
        (0..m).map(|_| self.index(n)).collect()
    }

    /// A uniformly random subset of `k` distinct indices of `0..n`, sorted ascending.
    pub fn subset(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx = rand::seq::index::sample(&mut self.inner, n, k.min(n)).into_vec();
        idx.sort_unstable();
        idx
    }

    pub fn gaussian_sample<T: Scalar>(&mut self, mean: &[T], std: &[T]) -> Result<Vector<T>> {
        gaussian_sample(self, mean, std)
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

impl SeedableRng for Rng {
    type Seed = [u8; 8];

    fn from_seed(seed: Self::Seed) -> Self {
        Rng::new(u64::from_le_bytes(seed), 0)
    }
}

/// Returns `mean + std ⊙ z` with `z` i.i.d. standard normal.
pub fn gaussian_sample<T: Scalar>(rng: &mut Rng, mean: &[T], std: &[T]) -> Result<Vector<T>> {
    check_dim("gaussian_sample", mean.len(), std.len())?;
    if let Some(k) = std.iter().position(|s| !(*s > T::zero()) || !s.is_finite()) {
        return Err(Error::argument(format!(
            "standard deviation must be positive and finite, got {} at index {k}",
            std[k]
        )));
    }
    Ok(mean
        .iter()
        .zip(std)
        .map(|(&m, &s)| m + s * T::lit(rng.standard_normal()))
        .collect())
}
