//! Counter-based pseudo-random generator.
//!
//! The stream is SplitMix64 evaluated at consecutive counter values:
//!
//! ```text
//! key      = mix(seed)
//! output_k = mix(key + k · 0x9E3779B97F4A7C15)      (k = 1, 2, ...)
//! mix(z)   : z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!            z ^= z >> 27; z *= 0x94D049BB133111EB;
//!            z ^= z >> 31
//! ```
//!
//! A labeled substream derives a fresh seed as
//! `mix(key ^ fnv1a64(label))`, so substreams are independent of how far the
//! parent stream has advanced. Floats take the top 53 bits of an output;
//! normals use Box–Muller on two consecutive uniforms.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    seed: u64,
    key: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            key: mix(seed),
            counter: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream identified by `label`; does not advance `self`.
    pub fn substream(&self, label: &str) -> Rng {
        Rng::new(mix(self.key ^ fnv1a64(label.as_bytes())))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal sample.
    pub fn normal(&mut self) -> f64 {
        // 1 - u lies in (0, 1], keeping ln finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `0..n`, `n > 0`, without modulo bias.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Index drawn from an unnormalized nonnegative weight vector.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let target = self.next_f64() * total;
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if target < acc {
                return i;
            }
        }
        // Rounding can leave target == total; fall back to the last positive weight.
        weights
            .iter()
            .rposition(|&w| w > 0.0)
            .unwrap_or(weights.len() - 1)
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // SplitMix64 seeded with state 0 yields these first outputs; our key for
        // seed s is mix(s), so reconstruct the reference stream directly.
        let mut state: u64 = 0;
        let mut reference = Vec::new();
        for _ in 0..3 {
            state = state.wrapping_add(GAMMA);
            reference.push(mix(state));
        }
        assert_eq!(reference[0], 0xE220_A839_7B1D_CDAF);
        assert_eq!(reference[1], 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(reference[2], 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn equal_seeds_equal_streams() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_ne!(Rng::new(1).next_u64(), Rng::new(2).next_u64());
    }

    #[test]
    fn substreams_independent_of_parent_position() {
        let root = Rng::new(9);
        let mut advanced = root.clone();
        advanced.next_u64();
        assert_eq!(
            root.substream("train").next_u64(),
            advanced.substream("train").next_u64()
        );
        assert_ne!(
            root.substream("train").next_u64(),
            root.substream("test").next_u64()
        );
    }

    #[test]
    fn uniform_and_normal_moments() {
        let mut rng = Rng::new(3);
        let n = 200_000;
        let us: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        assert!(us.iter().all(|&u| (0.0..1.0).contains(&u)));
        let mean = us.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005);
        let zs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let m = zs.iter().sum::<f64>() / n as f64;
        let var = zs.iter().map(|z| (z - m) * (z - m)).sum::<f64>() / n as f64;
        assert!(m.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn below_and_shuffle() {
        let mut rng = Rng::new(5);
        let mut hits = [0usize; 3];
        for _ in 0..30_000 {
            hits[rng.below(3)] += 1;
        }
        assert!(hits.iter().all(|&h| (9_500..10_500).contains(&h)));
        let mut items: Vec<usize> = (0..50).collect();
        rng.shuffle(&mut items);
        let mut sorted = items.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(items, sorted);
    }

    #[test]
    fn categorical_respects_zero_weights() {
        let mut rng = Rng::new(11);
        for _ in 0..1000 {
            let k = rng.categorical(&[0.0, 0.3, 0.0, 0.7]);
            assert!(k == 1 || k == 3);
        }
    }
}
