//! Coverage-number distributions `p_m = P[N = m]` and the models producing
//! them: SINR k-coverage, the Boolean (germ-grain) model, and overlaid
//! independent networks.

mod boolean;
mod sinr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use boolean::{boolean_coverage, boolean_coverage_capped, BooleanModelParams};
pub use sinr::{
    euler_constant_cprime, integral_i, integral_i_with_tolerance, integral_j, sinr_coverage,
    sinr_coverage_detailed, symmetric_sum_sn, SinrCoverage, SinrModelParams, DEFAULT_DIMENSION_CAP,
    DEFAULT_QUADRATURE_POINTS,
};

/// Default tolerance on `|sum p_m - 1|` for stored distributions.
pub const DEFAULT_PMF_TOLERANCE: f64 = 1e-9;

/// Probability mass function of the coverage number, truncated at
/// `max_coverage`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageDistribution {
    pmf: Vec<f64>,
    tolerance: f64,
    /// Mass the producing model placed beyond `max_coverage` (zero unless the
    /// model is truncated).
    truncation_error: f64,
}

impl CoverageDistribution {
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(pmf, DEFAULT_PMF_TOLERANCE)
    }

    /// Accepts a pmf whose total may deviate from one by up to `tolerance`,
    /// e.g. vectors copied from published tables with limited precision.
    pub fn with_tolerance(pmf: Vec<f64>, tolerance: f64) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::invalid("coverage pmf must contain at least p_0"));
        }
        if !(tolerance.is_finite() && tolerance > 0.0) {
            return Err(Error::invalid(format!(
                "pmf tolerance must be positive, got {tolerance}"
            )));
        }
        if let Some((m, p)) = pmf
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0 || **p > 1.0)
        {
            return Err(Error::invalid(format!(
                "coverage probability p_{m} = {p} outside [0, 1]"
            )));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > tolerance {
            return Err(Error::invalid(format!(
                "coverage pmf sums to {total}, not 1 within {tolerance:e}"
            )));
        }
        Ok(Self {
            pmf,
            tolerance,
            truncation_error: 0.0,
        })
    }

    pub(crate) fn with_truncation_error(mut self, mass: f64) -> Self {
        self.truncation_error = mass;
        self
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Largest coverage number with a stored probability (`M`).
    pub fn max_coverage(&self) -> usize {
        self.pmf.len() - 1
    }

    /// `p_m`, zero beyond the truncation point.
    pub fn probability(&self, m: usize) -> f64 {
        self.pmf.get(m).copied().unwrap_or(0.0)
    }

    pub fn no_coverage(&self) -> f64 {
        self.pmf[0]
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn truncation_error(&self) -> f64 {
        self.truncation_error
    }

    pub fn mean(&self) -> f64 {
        mean_coverage(self)
    }

    /// True when no station can ever cover the user (`p_0 = 1`).
    pub fn is_degenerate(&self) -> bool {
        self.pmf[1..].iter().all(|p| *p == 0.0)
    }
}

/// Maximum number of stations that can simultaneously exceed SINR level
/// `threshold`: `ceil(1 / T)`.
pub fn max_coverage_count(threshold: f64) -> Result<usize> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::invalid(format!(
            "SINR threshold must be positive and finite, got {threshold}"
        )));
    }
    let m = (1.0 / threshold).ceil();
    if m > 1e6 {
        return Err(Error::invalid(format!(
            "SINR threshold {threshold} is too small"
        )));
    }
    Ok(m as usize)
}

/// Distribution of the total coverage number over two independent networks.
pub fn convolve(
    first: &CoverageDistribution,
    second: &CoverageDistribution,
) -> CoverageDistribution {
    let (p, q) = (first.pmf(), second.pmf());
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (n, pn) in p.iter().enumerate() {
        for (k, qk) in q.iter().enumerate() {
            out[n + k] += pn * qk;
        }
    }
    CoverageDistribution {
        pmf: out,
        tolerance: first.tolerance + second.tolerance,
        truncation_error: first.truncation_error + second.truncation_error,
    }
}

/// `E[N] = sum_m m p_m`.
pub fn mean_coverage(dist: &CoverageDistribution) -> f64 {
    dist.pmf
        .iter()
        .enumerate()
        .skip(1)
        .map(|(m, p)| m as f64 * p)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pmf(v: &[f64]) -> CoverageDistribution {
        CoverageDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn max_coverage_examples() {
        assert_eq!(max_coverage_count(1.0).unwrap(), 1);
        assert_eq!(max_coverage_count(0.5).unwrap(), 2);
        assert_eq!(max_coverage_count(2.0).unwrap(), 1);
        assert_eq!(max_coverage_count(0.6).unwrap(), 2);
        assert_eq!(max_coverage_count(0.05).unwrap(), 20);
        assert!(max_coverage_count(0.0).is_err());
        assert!(max_coverage_count(-1.0).is_err());
        assert!(max_coverage_count(f64::NAN).is_err());
    }

    #[test]
    fn rejects_bad_pmfs() {
        assert!(CoverageDistribution::new(vec![]).is_err());
        assert!(CoverageDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(CoverageDistribution::new(vec![1.2, -0.2]).is_err());
        assert!(CoverageDistribution::with_tolerance(vec![0.5, 0.4999], 1e-3).is_ok());
    }

    #[test]
    fn convolve_coins() {
        let c = convolve(&pmf(&[0.5, 0.5]), &pmf(&[0.5, 0.5]));
        assert_eq!(c.pmf(), &[0.25, 0.5, 0.25]);
        assert_eq!(c.max_coverage(), 2);
    }

    #[test]
    fn convolve_identity() {
        let p = pmf(&[0.2, 0.3, 0.5]);
        assert_eq!(convolve(&pmf(&[1.0]), &p).pmf(), p.pmf());
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean_coverage(&pmf(&[1.0])), 0.0);
        assert_eq!(mean_coverage(&pmf(&[0.25, 0.5, 0.25])), 1.0);
        assert!(pmf(&[1.0, 0.0]).is_degenerate());
        assert!(!pmf(&[0.5, 0.5]).is_degenerate());
    }

    fn arb_pmf() -> impl Strategy<Value = CoverageDistribution> {
        prop::collection::vec(0.0f64..1.0, 1..8).prop_filter_map("positive mass", |w| {
            let total: f64 = w.iter().sum();
            (total > 0.0).then(|| pmf(&w.iter().map(|x| x / total).collect::<Vec<_>>()))
        })
    }

    proptest! {
        #[test]
        fn convolve_commutes_and_associates(a in arb_pmf(), b in arb_pmf(), c in arb_pmf()) {
            let ab = convolve(&a, &b);
            let ba = convolve(&b, &a);
            for (x, y) in ab.pmf().iter().zip(ba.pmf()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let left = convolve(&ab, &c);
            let right = convolve(&a, &convolve(&b, &c));
            prop_assert_eq!(left.pmf().len(), right.pmf().len());
            for (x, y) in left.pmf().iter().zip(right.pmf()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let total: f64 = left.pmf().iter().sum();
            prop_assert!((total - 1.0).abs() < left.tolerance());
        }

        #[test]
        fn convolve_adds_means(a in arb_pmf(), b in arb_pmf()) {
            let ab = convolve(&a, &b);
            prop_assert!((ab.mean() - a.mean() - b.mean()).abs() < 1e-12);
        }
    }
}
