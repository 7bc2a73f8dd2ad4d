//! Deterministic random number streams.
//!
//! Every stochastic routine in this crate draws from a [`GaussianStream`]
//! seeded through [`derive_seed`], so any single replication of an
//! experiment can be reproduced in isolation from `(base_seed, n, l, k,
//! rep)` without running the rest of the batch. Reproducibility is
//! guaranteed for a fixed build; normal variates come from a pinned
//! Box-Muller transform rather than whatever sampler the `rand` ecosystem
//! currently defaults to.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; a well-mixed 64-bit permutation.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a list of stream coordinates into a new 64-bit seed.
///
/// The mix is order sensitive, so `derive_seed(s, &[a, b])` and
/// `derive_seed(s, &[b, a])` name different streams.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut s = splitmix64(base);
    for &p in parts {
        s = splitmix64(s ^ p.wrapping_mul(0xD605_1E2F_61C7_F24B));
    }
    s
}

/// Counter-based generator of standard normal variates.
///
/// ChaCha8 supplies the uniform stream; the Box-Muller transform converts
/// pairs of uniforms into pairs of normals, caching the second one.
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Next N(0,1) variate.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] so the logarithm is finite.
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let phi = std::f64::consts::TAU * u2;
        self.spare = Some(r * phi.sin());
        r * phi.cos()
    }

    /// Fill `buf` with independent N(0,1) variates.
    pub fn fill_normals(&mut self, buf: &mut [f64]) {
        for v in buf {
            *v = self.next_normal();
        }
    }
}
