//! Seeded random streams.
//!
//! Every experiment has one root seed. Consumers derive an independent
//! ChaCha stream from it by a stream id (worker index, block index, round
//! number), so results do not depend on the order in which streams are used.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Coefficients with magnitude below this are redrawn.
pub const COEFF_EXCLUSION_RADIUS: f64 = 1e-6;

/// Stream-id namespaces, so that e.g. worker 3 and data block 3 never share a stream.
pub mod domain {
    pub const PLAN: u64 = 0;
    pub const DATA: u64 = 1 << 40;
    pub const VECTOR: u64 = 2 << 40;
    pub const TIMING: u64 = 3 << 40;
    pub const STRAGGLERS: u64 = 4 << 40;
    pub const PROBE: u64 = 5 << 40;
}

/// Returns the ChaCha stream `stream` under `root_seed`.
pub fn stream(root_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(stream);
    rng
}

/// Draws a coding coefficient: uniform on [-1, 1] with the ball of radius
/// [`COEFF_EXCLUSION_RADIUS`] around zero rejected.
pub fn coefficient<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let c: f64 = rng.random_range(-1.0..=1.0);
        if c.abs() >= COEFF_EXCLUSION_RADIUS {
            return c;
        }
    }
}

/// Draws a nonzero matrix entry, uniform on [-1, 1].
pub fn nonzero_entry<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let v: f64 = rng.random_range(-1.0..=1.0);
        if v != 0.0 {
            return v;
        }
    }
}

/// A vector of `len` entries uniform on [-1, 1].
pub fn uniform_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect()
}
