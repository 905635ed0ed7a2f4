//! Digitally shifted Sobol points for quasi-Monte-Carlo integration on the
//! unit cube.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Highest dimension with tabulated direction numbers.
pub const MAX_DIMENSION: usize = 13;

const BITS: usize = 32;

// (degree, polynomial coefficient bits, initial direction integers) for
// dimensions 2..=13, from the Joe-Kuo table.
const PRIMITIVES: [(u32, u32, &[u32]); MAX_DIMENSION - 1] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
];

fn direction_numbers(dimension: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dimension == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (degree, coeffs, init) = PRIMITIVES[dimension - 1];
    let s = degree as usize;
    for k in 0..BITS {
        if k < s {
            v[k] = init[k] << (BITS - 1 - k);
        } else {
            let mut x = v[k - s] ^ (v[k - s] >> s);
            for i in 1..s {
                if (coeffs >> (s - 1 - i)) & 1 == 1 {
                    x ^= v[k - i];
                }
            }
            v[k] = x;
        }
    }
    v
}

/// Gray-code Sobol generator with a random digital shift per coordinate.
///
/// The shift is drawn from `seed`, so the point set is fully determined by
/// `(dimension, seed)`. Returned coordinates lie strictly inside `(0, 1)`.
#[derive(Debug, Clone)]
pub struct SobolSequence {
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u64,
}

impl SobolSequence {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(
            (1..=MAX_DIMENSION).contains(&dimension),
            "sobol dimension {dimension} outside 1..={MAX_DIMENSION}"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            directions: (0..dimension).map(direction_numbers).collect(),
            state: (0..dimension).map(|_| rng.random::<u32>()).collect(),
            index: 0,
        }
    }

    pub fn dimension(&self) -> usize {
        self.state.len()
    }

    /// Writes the next point into `out` (length must equal the dimension).
    pub fn next_into(&mut self, out: &mut [f64]) {
        const SCALE: f64 = 1.0 / 4_294_967_296.0;
        for (o, s) in out.iter_mut().zip(&self.state) {
            *o = (f64::from(*s) + 0.5) * SCALE;
        }
        let c = self.index.trailing_ones() as usize;
        assert!(c < BITS, "sobol sequence exhausted");
        for (s, dir) in self.state.iter_mut().zip(&self.directions) {
            *s ^= dir[c];
        }
        self.index += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_dimension_is_van_der_corput_when_unshifted() {
        let v = direction_numbers(0);
        let mut x = 0u32;
        let mut pts = vec![0.0];
        for i in 0u32..7 {
            x ^= v[i.trailing_ones() as usize];
            pts.push(f64::from(x) / 4_294_967_296.0);
        }
        assert_eq!(pts, vec![0.0, 0.5, 0.75, 0.25, 0.375, 0.875, 0.625, 0.125]);
    }

    #[test]
    fn each_coordinate_is_stratified() {
        // Every 2^k-long prefix of a (t,m,s)-net coordinate hits each
        // dyadic interval of width 2^-k exactly once.
        for dim in 1..=MAX_DIMENSION {
            let mut seq = SobolSequence::new(dim, 7);
            let n = 256;
            let mut counts = vec![vec![0usize; n]; dim];
            let mut p = vec![0.0; dim];
            for _ in 0..n {
                seq.next_into(&mut p);
                for (d, x) in p.iter().enumerate() {
                    assert!(*x > 0.0 && *x < 1.0);
                    counts[d][(x * n as f64) as usize] += 1;
                }
            }
            assert!(counts.iter().flatten().all(|c| *c == 1), "dimension {dim}");
        }
    }

    #[test]
    fn integrates_smooth_product() {
        let dim = 6;
        let mut seq = SobolSequence::new(dim, 1);
        let n = 1 << 14;
        let mut p = vec![0.0; dim];
        let mut acc = 0.0;
        for _ in 0..n {
            seq.next_into(&mut p);
            acc += p.iter().map(|x| 3.0 * x * x).product::<f64>();
        }
        assert!((acc / n as f64 - 1.0).abs() < 2e-3);
    }

    #[test]
    fn seeded_sequences_repeat() {
        let mut a = SobolSequence::new(3, 42);
        let mut b = SobolSequence::new(3, 42);
        let mut c = SobolSequence::new(3, 43);
        let (mut pa, mut pb, mut pc) = ([0.0; 3], [0.0; 3], [0.0; 3]);
        a.next_into(&mut pa);
        b.next_into(&mut pb);
        c.next_into(&mut pc);
        assert_eq!(pa, pb);
        assert_ne!(pa, pc);
    }
}
