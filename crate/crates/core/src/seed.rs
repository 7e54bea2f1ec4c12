//! Splittable seed derivation.
//!
//! A [`SeedPath`] names a position in a tree of random streams
//! (master → run → machine → ...). Children are derived by hashing the
//! parent state with a tag, so any stream can be reconstructed from the
//! master seed alone, independent of the order in which streams are created
//! or which thread consumes them. Each leaf keys a ChaCha8 generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedPath {
    hi: u64,
    lo: u64,
}

impl SeedPath {
    pub fn root(seed: u64) -> Self {
        SeedPath {
            hi: splitmix64(seed ^ 0x5eed_0000_0000_0001),
            lo: splitmix64(seed.rotate_left(17) ^ 0x0000_5eed_0000_0002),
        }
    }

    pub fn child(&self, tag: u64) -> Self {
        let t = splitmix64(tag ^ 0xc0ff_ee00_d15e_a5e5);
        SeedPath {
            hi: splitmix64(self.hi ^ t),
            lo: splitmix64(self.lo.wrapping_add(t).rotate_left(29) ^ self.hi),
        }
    }

    /// A 64-bit digest of the path, used where a plain `u64` seed is needed.
    pub fn digest(&self) -> u64 {
        splitmix64(self.hi ^ self.lo.rotate_left(32))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let words = [
            self.hi,
            self.lo,
            splitmix64(self.hi.wrapping_add(1)),
            splitmix64(self.lo.wrapping_add(2)),
        ];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::HashSet;

    #[test]
    fn children_are_distinct_and_stable() {
        let root = SeedPath::root(42);
        let kids: HashSet<_> = (0..1000).map(|t| root.child(t)).collect();
        assert_eq!(kids.len(), 1000);
        assert_eq!(root.child(7), SeedPath::root(42).child(7));
        assert_ne!(root.child(1).child(2), root.child(2).child(1));
    }

    #[test]
    fn rng_is_reproducible() {
        let p = SeedPath::root(3).child(9);
        let a: Vec<u64> = (0..8).map({
            let mut r = p.rng();
            move |_| r.random()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = p.rng();
            move |_| r.random()
        }).collect();
        assert_eq!(a, b);
    }
}
