//! Randomized placement policies and the staircase sampler that realizes
//! them with at most `K` distinct contents per cache.
//!
//! The per-content probabilities `b_j` are laid end-to-end, in index order,
//! across `K` stacked unit rows; a content that overflows a row continues at
//! the start of the next one. A single uniform draw `u` selects, in every
//! row, the content whose half-open segment contains horizontal coordinate
//! `u`. Each content then appears with probability exactly `b_j`, and since
//! `b_j <= 1` its (at most two) segments never share a coordinate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

/// Slack allowed on the box and budget constraints.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

/// First violated feasibility constraint of a placement vector.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlacementViolation {
    #[error("policy has {found} entries but the library has {expected} contents")]
    LengthMismatch { expected: usize, found: usize },
    #[error("b[{index}] = {value} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("sum of b = {sum} exceeds the cache size {cache_size}")]
    BudgetExceeded { sum: f64, cache_size: usize },
    #[error("cache size must be at least 1")]
    ZeroCacheSize,
}

/// Checks `0 <= b_j <= 1` and `sum b_j <= K` (both within
/// [`FEASIBILITY_TOLERANCE`]) plus the length against the library.
pub fn validate(
    probabilities: &[f64],
    cache_size: usize,
    library_size: usize,
) -> std::result::Result<(), PlacementViolation> {
    if probabilities.len() != library_size {
        return Err(PlacementViolation::LengthMismatch {
            expected: library_size,
            found: probabilities.len(),
        });
    }
    if cache_size == 0 {
        return Err(PlacementViolation::ZeroCacheSize);
    }
    for (index, &value) in probabilities.iter().enumerate() {
        if !(-FEASIBILITY_TOLERANCE..=1.0 + FEASIBILITY_TOLERANCE).contains(&value) {
            return Err(PlacementViolation::OutOfRange { index, value });
        }
    }
    let sum: f64 = probabilities.iter().sum();
    if sum > cache_size as f64 + FEASIBILITY_TOLERANCE {
        return Err(PlacementViolation::BudgetExceeded { sum, cache_size });
    }
    Ok(())
}

/// Caching probabilities `b_j` with cache budget `K`. Always feasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy", into = "RawPolicy")]
pub struct PlacementPolicy {
    probabilities: Vec<f64>,
    cache_size: usize,
    // Right end of each content's segment on the unrolled line [0, K).
    ends: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPolicy {
    probabilities: Vec<f64>,
    cache_size: usize,
}

impl TryFrom<RawPolicy> for PlacementPolicy {
    type Error = Error;

    fn try_from(raw: RawPolicy) -> Result<Self> {
        PlacementPolicy::new(raw.probabilities, raw.cache_size)
    }
}

impl From<PlacementPolicy> for RawPolicy {
    fn from(p: PlacementPolicy) -> Self {
        RawPolicy {
            probabilities: p.probabilities,
            cache_size: p.cache_size,
        }
    }
}

impl PlacementPolicy {
    /// Validates and stores the policy; entries within tolerance of the box
    /// are clamped onto `[0, 1]`.
    pub fn new(probabilities: Vec<f64>, cache_size: usize) -> Result<Self> {
        validate(&probabilities, cache_size, probabilities.len())?;
        let probabilities: Vec<f64> = probabilities
            .into_iter()
            .map(|b| b.clamp(0.0, 1.0))
            .collect();
        let k = cache_size as f64;
        let mut ends = Vec::with_capacity(probabilities.len());
        let mut acc = 0.0;
        for b in &probabilities {
            acc += b;
            ends.push(acc.min(k));
        }
        // A budget that is full up to rounding covers every row completely.
        if (acc - k).abs() <= FEASIBILITY_TOLERANCE {
            if let Some(last) = probabilities.iter().rposition(|b| *b > 0.0) {
                for end in &mut ends[last..] {
                    *end = k;
                }
            }
        }
        Ok(Self {
            probabilities,
            cache_size,
            ends,
        })
    }

    /// `b = 1` on the first `min(K, J)` contents, zero elsewhere.
    pub fn most_popular(library_size: usize, cache_size: usize) -> Result<Self> {
        let b = (0..library_size)
            .map(|j| if j < cache_size { 1.0 } else { 0.0 })
            .collect();
        Self::new(b, cache_size)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn cache_size(&self) -> usize {
        self.cache_size
    }

    pub fn library_size(&self) -> usize {
        self.probabilities.len()
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Feasibility against a library of `library_size` contents.
    pub fn validate(&self, library_size: usize) -> std::result::Result<(), PlacementViolation> {
        validate(&self.probabilities, self.cache_size, library_size)
    }

    fn start(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.ends[j - 1]
        }
    }

    fn check_u(u: f64) -> Result<()> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::invalid(format!(
                "staircase coordinate u = {u} is outside [0, 1)"
            )));
        }
        Ok(())
    }

    /// Contents selected by the vertical line at `u`, one per row at most.
    pub fn sample_inventory(&self, u: f64) -> Result<Inventory> {
        Self::check_u(u)?;
        let mut contents = Vec::with_capacity(self.cache_size);
        for row in 0..self.cache_size {
            let pos = row as f64 + u;
            // First content whose segment ends strictly after `pos`.
            let j = self.ends.partition_point(|end| *end <= pos);
            if j < self.ends.len() && self.start(j) <= pos {
                contents.push(j);
            }
        }
        contents.sort_unstable();
        contents.dedup();
        Ok(Inventory { contents })
    }

    /// Whether content `j` is selected at `u`; agrees with
    /// [`sample_inventory`](Self::sample_inventory) for every `u`.
    pub fn contains(&self, u: f64, j: usize) -> Result<bool> {
        Self::check_u(u)?;
        let (start, end) = (self.start(j), self.ends[j]);
        if end <= start {
            return Ok(false);
        }
        let guess = (start - u).ceil() as i64;
        Ok((guess - 1..=guess + 1)
            .filter(|r| (0..self.cache_size as i64).contains(r))
            .any(|r| {
                let pos = r as f64 + u;
                start <= pos && pos < end && self.ends.partition_point(|e| *e <= pos) == j
            }))
    }

    /// `count` inventories, each from an independent uniform coordinate.
    pub fn sample_many(&self, count: usize, seed: u64) -> Vec<Inventory> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                self.sample_inventory(rng.random::<f64>())
                    .expect("uniform draw lies in [0, 1)")
            })
            .collect()
    }
}

/// Set of cached content indices (zero-based, ascending, distinct).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inventory {
    contents: Vec<usize>,
}

impl Inventory {
    pub fn contents(&self) -> &[usize] {
        &self.contents
    }

    pub fn len(&self) -> usize {
        self.contents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contents.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.contents.binary_search(&j).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn policy(b: &[f64], k: usize) -> PlacementPolicy {
        PlacementPolicy::new(b.to_vec(), k).unwrap()
    }

    #[test]
    fn validation_examples() {
        assert!(validate(&[0.5, 0.5], 1, 2).is_ok());
        assert_eq!(
            validate(&[0.6, 0.6], 1, 2),
            Err(PlacementViolation::BudgetExceeded {
                sum: 1.2,
                cache_size: 1
            })
        );
        assert_eq!(
            validate(&[1.2, 0.0], 2, 2),
            Err(PlacementViolation::OutOfRange {
                index: 0,
                value: 1.2
            })
        );
        assert!(matches!(
            validate(&[0.5], 1, 2),
            Err(PlacementViolation::LengthMismatch {
                expected: 2,
                found: 1
            })
        ));
        assert!(validate(&[0.5 + 5e-10, 0.5], 1, 2).is_ok());
        assert!(matches!(
            PlacementPolicy::new(vec![0.6, 0.6], 1),
            Err(Error::InfeasiblePolicy(_))
        ));
    }

    #[test]
    fn staircase_examples() {
        let p = policy(&[1.0, 0.5, 0.5], 2);
        assert_eq!(p.sample_inventory(0.6).unwrap().contents(), &[0, 2]);
        assert_eq!(p.sample_inventory(0.2).unwrap().contents(), &[0, 1]);

        let p = policy(&[0.7, 0.7, 0.6], 2);
        assert_eq!(p.sample_inventory(0.8).unwrap().contents(), &[1, 2]);
        assert_eq!(p.sample_inventory(0.3).unwrap().contents(), &[0, 1]);
        assert_eq!(p.sample_inventory(0.5).unwrap().contents(), &[0, 2]);
    }

    #[test]
    fn boundaries_belong_to_the_right_segment() {
        let p = policy(&[0.5, 0.5], 1);
        assert_eq!(p.sample_inventory(0.5).unwrap().contents(), &[1]);
        assert_eq!(p.sample_inventory(0.0).unwrap().contents(), &[0]);
    }

    #[test]
    fn u_must_lie_in_unit_interval() {
        let p = policy(&[0.5, 0.5], 1);
        assert!(p.sample_inventory(1.0).is_err());
        assert!(p.sample_inventory(-0.1).is_err());
        assert!(p.contains(f64::NAN, 0).is_err());
    }

    #[test]
    fn sample_many_examples() {
        let p = policy(&[1.0, 0.0, 0.0], 1);
        assert!(p.sample_many(500, 1).iter().all(|inv| inv.contains(0)));
        let p = policy(&[0.0; 4], 2);
        assert!(p.sample_many(500, 1).iter().all(Inventory::is_empty));

        let p = policy(&[0.5, 0.5], 1);
        let n = 100_000;
        let hits = p
            .sample_many(n, 2024)
            .iter()
            .filter(|inv| inv.contains(0))
            .count();
        let freq = hits as f64 / n as f64;
        assert!(
            (freq - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt(),
            "{freq}"
        );
    }

    #[test]
    fn sample_many_is_reproducible() {
        let p = policy(&[0.9, 0.6, 0.3, 0.2], 2);
        assert_eq!(p.sample_many(50, 5), p.sample_many(50, 5));
    }

    #[test]
    fn most_popular_policy() {
        let p = PlacementPolicy::most_popular(4, 2).unwrap();
        assert_eq!(p.probabilities(), &[1.0, 1.0, 0.0, 0.0]);
        let p = PlacementPolicy::most_popular(2, 5).unwrap();
        assert_eq!(p.probabilities(), &[1.0, 1.0]);
    }

    fn arb_policy() -> impl Strategy<Value = (Vec<f64>, usize)> {
        (1usize..6, prop::collection::vec(0.0f64..=1.0, 1..15)).prop_map(|(k, mut b)| {
            let total: f64 = b.iter().sum();
            if total > k as f64 {
                let scale = k as f64 / total;
                b.iter_mut().for_each(|x| *x *= scale);
            }
            (b, k)
        })
    }

    proptest! {
        #[test]
        fn inventories_are_small_and_distinct((b, k) in arb_policy(), u in 0.0f64..1.0) {
            let p = policy(&b, k);
            let inv = p.sample_inventory(u).unwrap();
            prop_assert!(inv.len() <= k);
            prop_assert!(inv.contents().windows(2).all(|w| w[0] < w[1]));
            for j in 0..b.len() {
                prop_assert_eq!(inv.contains(j), p.contains(u, j).unwrap());
            }
        }

        #[test]
        fn full_budget_fills_every_row(b in prop::collection::vec(0.01f64..1.0, 2..12), k in 1usize..4, u in 0.0f64..1.0) {
            let total: f64 = b.iter().sum();
            prop_assume!(total >= k as f64);
            let b: Vec<f64> = b.iter().map(|x| x * k as f64 / total).collect();
            prop_assume!(b.iter().all(|x| *x <= 1.0));
            let inv = policy(&b, k).sample_inventory(u).unwrap();
            prop_assert_eq!(inv.len(), k);
        }
    }
}
