//! Seedable, portable pseudo-random source for the simulator.
//!
//! The generator is xoshiro256++ seeded through SplitMix64, so any
//! implementation of those two published algorithms reproduces the exact
//! stream from the same 64-bit seed. Uniform doubles take the high 53 bits
//! of one output word; normals use the Box-Muller transform; Poisson
//! variates use CDF inversion for small means and a rounded normal
//! approximation above mean 50. Fixtures generated here are therefore
//! bit-stable across platforms and releases.

/// xoshiro256++ generator (Blackman & Vigna), seeded via SplitMix64.
#[derive(Debug, Clone)]
pub struct Rng {
    state: [u64; 4],
}

/// Mean at which Poisson sampling switches from CDF inversion to the
/// rounded normal approximation.
pub const POISSON_NORMAL_THRESHOLD: f64 = 50.0;

impl Rng {
    pub fn seed_from_u64(seed: u64) -> Self {
        // SplitMix64 expansion of the seed into the four state words.
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = s;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^ (z >> 31)
        };
        let state = [next(), next(), next(), next()];
        Rng { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform double in [0, 1) with 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in the half-open interval [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller (consumes two uniforms).
    pub fn standard_normal(&mut self) -> f64 {
        // Shift the first uniform into (0, 1] so the logarithm is finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Poisson variate with the given mean.
    ///
    /// Inversion of the CDF below [`POISSON_NORMAL_THRESHOLD`]; above it,
    /// `round(mean + sqrt(mean) * z)` clamped to be non-negative.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        assert!(mean.is_finite() && mean >= 0.0, "poisson mean must be >= 0");
        if mean == 0.0 {
            return 0;
        }
        if mean < POISSON_NORMAL_THRESHOLD {
            let u = self.uniform();
            let mut p = (-mean).exp();
            let mut cdf = p;
            let mut k = 0u64;
            while u > cdf && k < 10_000 {
                k += 1;
                p *= mean / k as f64;
                cdf += p;
            }
            k
        } else {
            let z = self.standard_normal();
            let v = mean + mean.sqrt() * z;
            if v <= 0.0 {
                0
            } else {
                v.round() as u64
            }
        }
    }
}
