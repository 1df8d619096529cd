//! Named, splittable seed streams.
//!
//! Every random draw in the system descends from one master seed through a
//! path of labels and indices, e.g. `master / "mc" / 17 / "measure" / unit /
//! group`. The derived seed depends only on the path, so results do not
//! depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Generator used for every stream.
pub type StreamRng = ChaCha12Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A position in the seed tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedStream {
    state: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        Self {
            state: splitmix64(master ^ 0x5EED_0F_A11_C0DE),
        }
    }

    /// Child stream for a text label.
    pub fn label(&self, label: &str) -> Self {
        // FNV-1a over the label bytes, then mixed with the parent state.
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for b in label.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        h ^= label.len() as u64;
        Self {
            state: splitmix64(self.state ^ splitmix64(h ^ 0x4C41_4245_4C00_0000)),
        }
    }

    /// Child stream for an integer index.
    pub fn index(&self, i: u64) -> Self {
        Self {
            state: splitmix64(self.state ^ splitmix64(i ^ 0x494E_4445_5800_0000)),
        }
    }

    /// Raw 64-bit seed of this node, for recording in manifests.
    pub fn seed(&self) -> u64 {
        self.state
    }

    pub fn rng(&self) -> StreamRng {
        let mut seed = [0u8; 32];
        let mut s = self.state;
        for chunk in seed.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        StreamRng::from_seed(seed)
    }
}
