//! Content-popularity laws.
//!
//! Contents are indexed from the most popular (index 0) to the least popular.
//! Every constructor enforces that ordering; see
//! [`PopularityDistribution::from_weights`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Request probabilities `a_j` over a finite library, in non-increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityDistribution {
    probabilities: Vec<f64>,
    zipf_exponent: Option<f64>,
    normalizer: Option<f64>,
}

impl PopularityDistribution {
    /// Zipf law `a_j = j^-exponent / A` with `A = sum_j j^-exponent`.
    pub fn zipf(library_size: usize, exponent: f64) -> Result<Self> {
        if library_size == 0 {
            return Err(Error::invalid("library size must be at least 1"));
        }
        if !exponent.is_finite() || exponent < 0.0 {
            return Err(Error::invalid(format!(
                "zipf exponent must be finite and nonnegative, got {exponent}"
            )));
        }
        let weights: Vec<f64> = (1..=library_size)
            .map(|j| (j as f64).powf(-exponent))
            .collect();
        let normalizer: f64 = weights.iter().sum();
        let probabilities = weights.into_iter().map(|w| w / normalizer).collect();
        Ok(Self {
            probabilities,
            zipf_exponent: Some(exponent),
            normalizer: Some(normalizer),
        })
    }

    /// Normalizes arbitrary nonnegative weights.
    ///
    /// The weights must already be sorted from most to least popular; an
    /// increasing adjacent pair is rejected rather than silently re-sorted so
    /// that content identifiers keep matching their indices.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("popularity weights must not be empty"));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::invalid(format!(
                "popularity weight {i} must be finite and nonnegative, got {w}"
            )));
        }
        for (i, pair) in weights.windows(2).enumerate() {
            if pair[1] > pair[0] {
                return Err(Error::OrderingViolation {
                    index: i + 1,
                    previous: pair[0],
                    next: pair[1],
                });
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid(
                "at least one popularity weight must be positive",
            ));
        }
        Ok(Self {
            probabilities: weights.iter().map(|w| w / total).collect(),
            zipf_exponent: None,
            normalizer: None,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn library_size(&self) -> usize {
        self.probabilities.len()
    }

    /// Probability of the content at zero-based rank `index`.
    pub fn probability(&self, index: usize) -> f64 {
        self.probabilities[index]
    }

    pub fn zipf_exponent(&self) -> Option<f64> {
        self.zipf_exponent
    }

    pub fn normalizer(&self) -> Option<f64> {
        self.normalizer
    }

    /// Total request mass of the `count` most popular contents.
    pub fn head_mass(&self, count: usize) -> f64 {
        self.probabilities.iter().take(count).sum()
    }

    /// Inverse-CDF lookup: maps `u` in `[0, 1)` to a content index.
    pub fn sample_index(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (j, a) in self.probabilities.iter().enumerate() {
            acc += a;
            if u < acc {
                return j;
            }
        }
        // Rounding left the cumulative sum a hair below one.
        self.probabilities
            .iter()
            .rposition(|a| *a > 0.0)
            .unwrap_or(self.probabilities.len() - 1)
    }
}
