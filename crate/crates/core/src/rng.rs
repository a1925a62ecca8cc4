//! Seeded pseudo-random streams.
//!
//! Every random choice in the toolkit goes through [`Rng`], a xoshiro256**
//! generator whose 256-bit state is filled by splitmix64 from a 64-bit seed.
//! The derived samplers are fixed so another implementation can replay them:
//!
//! * `uniform()`: `(next_u64() >> 11) * 2^-53`, in `[0, 1)`.
//! * `below(n)`: rejection sampling on `next_u64()`; values in the biased tail
//!   `>= 2^64 - (2^64 mod n)` are redrawn, the result is `x mod n`.
//! * `normal()`: Box-Muller using two uniforms per draw and only the cosine
//!   branch: `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`.
//! * `derive(seed, tags)`: folds each tag into the seed with the splitmix64
//!   finalizer, giving independent named streams.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of a child stream identified by `tags`.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix64(seed.wrapping_add(GOLDEN)), |acc, &tag| {
        mix64(acc ^ mix64(tag.wrapping_add(GOLDEN)))
    })
}

/// Stable 64-bit tag for a string label (FNV-1a).
pub fn tag(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

#[derive(Clone, Debug)]
pub struct Rng(Xoshiro256StarStar);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(Xoshiro256StarStar::seed_from_u64(seed))
    }

    pub fn derive(seed: u64, tags: &[u64]) -> Self {
        Rng::new(derive_seed(seed, tags))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be nonzero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let limit = u64::MAX - (u64::MAX % n + 1) % n;
        loop {
            let x = self.next_u64();
            if x <= limit {
                return x % n;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `[0, n)` via a partial Fisher-Yates pass, in
    /// draw order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
