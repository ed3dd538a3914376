//! Splittable, counter-addressed random streams.
//!
//! A [`RandomStream`] is a value: a 128-bit digest of a master seed and a
//! derivation path. Deriving a child never touches the parent, so every
//! particle, replica and step can own its randomness outright and results do
//! not depend on the order in which work is scheduled. The bits themselves come
//! from ChaCha8 keyed by the digest, with the ChaCha stream id used as the
//! counter dimension (one id per particle and time slice).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomStream {
    key: [u64; 2],
}

impl RandomStream {
    pub fn new(master_seed: u64) -> Self {
        Self {
            key: [
                mix64(master_seed ^ GOLDEN),
                mix64(master_seed.rotate_left(32)),
            ],
        }
    }

    /// Child stream for path element `index`.
    #[inline]
    pub fn derive(&self, index: u64) -> Self {
        let a = mix64(self.key[0] ^ mix64(index.wrapping_add(GOLDEN)));
        let b = mix64(
            self.key[1]
                .wrapping_add(a.rotate_left(23))
                .wrapping_add(index.wrapping_mul(0xd6e8_feb8_6659_fd93)),
        );
        Self { key: [a, b] }
    }

    pub fn derive_path(&self, path: &[u64]) -> Self {
        path.iter().fold(*self, |s, &i| s.derive(i))
    }

    /// Generator for counter value `counter` of this stream.
    #[inline]
    pub fn rng(&self, counter: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.key[0].to_le_bytes());
        seed[8..16].copy_from_slice(&self.key[1].to_le_bytes());
        seed[16..].copy_from_slice(b"bbm-stream-key-1");
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(counter);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_path_same_bits() {
        let a = RandomStream::new(7)
            .derive_path(&[1, 2, 3])
            .rng(5)
            .random::<u64>();
        let b = RandomStream::new(7)
            .derive_path(&[1, 2, 3])
            .rng(5)
            .random::<u64>();
        assert_eq!(a, b);
    }

    #[test]
    fn paths_and_counters_separate() {
        let root = RandomStream::new(7);
        let draws: Vec<u64> = vec![
            root.rng(0).random(),
            root.rng(1).random(),
            root.derive(0).rng(0).random(),
            root.derive(1).rng(0).random(),
            root.derive(0).derive(1).rng(0).random(),
            root.derive(1).derive(0).rng(0).random(),
            RandomStream::new(8).rng(0).random(),
        ];
        for i in 0..draws.len() {
            for j in 0..i {
                assert_ne!(draws[i], draws[j], "{i} vs {j}");
            }
        }
    }

    #[test]
    fn sibling_streams_uncorrelated() {
        let root = RandomStream::new(11);
        let n = 20_000;
        let (mut sxy, mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let x: f64 = root.derive(2 * i).rng(0).random();
            let y: f64 = root.derive(2 * i + 1).rng(0).random();
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let n = n as f64;
        let cov = sxy / n - sx * sy / (n * n);
        let corr = cov / ((sxx / n - (sx / n).powi(2)) * (syy / n - (sy / n).powi(2))).sqrt();
        assert!(corr.abs() < 4.0 / n.sqrt(), "corr {corr}");
    }
}
