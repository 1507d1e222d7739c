//! Counter-based pseudo-random generation.
//!
//! The generator is SplitMix64: the state is a plain 64-bit counter advanced
//! by a fixed odd increment, and each output is a bijective mix of the
//! counter. Identical seed + identical call sequence gives an identical
//! stream everywhere, and independent streams for parallel chains are
//! derived by hashing `(seed, index)` rather than by jumping one shared
//! stream.

use crate::error::{Error, Result};
use crate::numkit::Tensor;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from a base seed and a stream index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(GOLDEN_GAMMA)))
}

/// Deterministic seedable generator; explicit value, never global state.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Child generator for stream `index`, independent of this stream's
    /// future output.
    pub fn derive(seed: u64, index: u64) -> Self {
        Rng::from_seed(derive_seed(seed, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`; safe as a logarithm argument.
    fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be non-empty");
        (self.next_u64() % n as u64) as usize
    }

    /// Standard-normal pair via Box-Muller.
    pub fn next_gaussian_pair(&mut self) -> (f64, f64) {
        let u1 = self.next_open01();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// Single standard-normal draw. Consumes a full Box-Muller pair so the
    /// stream position does not depend on call parity.
    pub fn next_gaussian(&mut self) -> f64 {
        self.next_gaussian_pair().0
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// Choose `k` distinct indices from `0..n`, in shuffled order.
    pub fn choose_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx.truncate(k.min(n));
        idx
    }
}

/// I.i.d. draws from `N(mean, std^2)`; `std == 0` returns a constant tensor
/// without consuming randomness.
pub fn gaussian_sample(rng: &mut Rng, shape: &[usize], mean: f64, std: f64) -> Result<Tensor> {
    if std < 0.0 {
        return Err(Error::invalid(format!("negative std {}", std)));
    }
    let n: usize = shape.iter().product();
    if std == 0.0 {
        return Ok(Tensor::full(shape, mean));
    }
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let (a, b) = rng.next_gaussian_pair();
        data.push(mean + std * a);
        if data.len() < n {
            data.push(mean + std * b);
        }
    }
    Tensor::new(shape.to_vec(), data)
}
