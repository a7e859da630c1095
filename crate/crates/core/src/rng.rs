//! Random-number plumbing: seed derivation, per-path sub-streams and the
//! Box-Muller normal source.
//!
//! Every simulated object (market path, mortality path, sweep point) owns a
//! ChaCha sub-stream addressed by `(seed, stream index)`. Streams never
//! overlap, so generation order and worker count cannot change results.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sub-stream layout for one scenario set: market draws on even streams,
/// inflation draws on odd streams, one pair per path index.
pub fn market_stream(seed: u64, path: usize) -> ChaCha8Rng {
    stream_rng(seed, 2 * path as u64)
}

/// Inflation companion stream for `path`. Kept separate from the market
/// stream so that enabling the inflation driver does not disturb the
/// risky-asset and rate draws of the same scenario set.
pub fn inflation_stream(seed: u64, path: usize) -> ChaCha8Rng {
    stream_rng(seed, 2 * path as u64 + 1)
}

/// Generic stream accessor used for mortality paths and other consumers.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a master seed and a domain label (splitmix64
/// finalizer). Used to give sweep points and mortality path sets their own
/// seed spaces under one master seed.
pub fn derive_seed(master: u64, label: u64) -> u64 {
    let mut z = master ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw in [0, 1) with 53 random bits.
pub fn unit_f64<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard-normal source built on the basic Box-Muller transform.
///
/// Each pair of uniforms yields two normals; both are consumed (the second
/// is cached for the next call), so one `next()` costs half a transform on
/// average.
pub struct Gaussians<R: RngCore> {
    rng: R,
    spare: Option<f64>,
}

impl<R: RngCore> Gaussians<R> {
    pub fn new(rng: R) -> Self {
        Gaussians { rng, spare: None }
    }

    /// One standard-normal draw.
    pub fn draw(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1 = 1.0 - unit_f64(&mut self.rng);
        let u2 = unit_f64(&mut self.rng);
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Two independent standard-normal draws.
    pub fn pair(&mut self) -> (f64, f64) {
        (self.draw(), self.draw())
    }
}
