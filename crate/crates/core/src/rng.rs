//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 keystream whose key is
//! derived from `(master seed, environment index, lane)` and whose 64-bit
//! stream id is the path index. A single path can therefore be replayed in
//! isolation, and results do not depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent purposes for which a `(master, env, path)` triple draws numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lane {
    /// Poisson cloud sampling.
    Environment,
    /// Gaussian increments of a trajectory.
    Increments,
    /// Uniforms for Brownian-bridge crossing tests.
    Bridge,
    /// Resampling, start-point jitter and other auxiliary draws.
    Auxiliary,
}

impl Lane {
    fn tag(self) -> u64 {
        match self {
            Lane::Environment => 0x454e_5649_524f_4e31,
            Lane::Increments => 0x494e_4352_454d_4e54,
            Lane::Bridge => 0x4252_4944_4745_5f55,
            Lane::Auxiliary => 0x4155_5849_4c49_4152,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of environment `index` under `master`.
pub fn environment_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master) ^ mix64(index.wrapping_add(0x5eed)))
}

fn key(master: u64, env: u64, lane: Lane) -> [u8; 32] {
    let mut words = [0u64; 4];
    let mut state = mix64(master ^ lane.tag());
    state = mix64(state ^ env.rotate_left(17));
    for (i, w) in words.iter_mut().enumerate() {
        state = mix64(state.wrapping_add(i as u64));
        *w = state;
    }
    let mut out = [0u8; 32];
    for (chunk, w) in out.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    out
}

/// Keystream for `(master, env, path)` on the given lane.
pub fn stream(master: u64, env: u64, path: u64, lane: Lane) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key(master, env, lane));
    rng.set_stream(path);
    rng
}

/// Generator used to sample a whole environment from its seed.
pub fn environment_rng(seed: u64) -> ChaCha8Rng {
    stream(seed, 0, 0, Lane::Environment)
}

/// The pair of generators that drive one trajectory.
#[derive(Debug, Clone)]
pub struct PathStreams {
    pub increments: ChaCha8Rng,
    pub bridge: ChaCha8Rng,
}

impl PathStreams {
    pub fn new(master: u64, env: u64, path: u64) -> Self {
        Self {
            increments: stream(master, env, path, Lane::Increments),
            bridge: stream(master, env, path, Lane::Bridge),
        }
    }
}
