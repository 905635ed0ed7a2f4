use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use super::CoverageDistribution;
use crate::error::{Error, Result};

/// Largest tail mass `P[N > M]` accepted by [`boolean_coverage`].
pub const MAX_TAIL_MASS: f64 = 1e-9;

/// Germ-grain coverage: a station covers the user iff it lies within
/// `coverage_radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BooleanModelParams {
    pub bs_intensity: f64,
    pub coverage_radius: f64,
    /// Largest coverage number kept in the pmf.
    pub truncation: usize,
}

impl BooleanModelParams {
    pub fn new(bs_intensity: f64, coverage_radius: f64, truncation: usize) -> Result<Self> {
        let params = Self {
            bs_intensity,
            coverage_radius,
            truncation,
        };
        params.validate()?;
        Ok(params)
    }

    /// Radius at which the path-loss-only received power `(B r)^-beta`
    /// equals `threshold`: `R_b = T^(-1/beta) / B`.
    pub fn from_threshold(
        bs_intensity: f64,
        threshold: f64,
        pathloss_exponent: f64,
        pathloss_constant: f64,
        truncation: usize,
    ) -> Result<Self> {
        if !(threshold.is_finite() && threshold > 0.0) {
            return Err(Error::invalid(format!(
                "threshold must be positive, got {threshold}"
            )));
        }
        if !(pathloss_exponent.is_finite() && pathloss_exponent > 0.0) {
            return Err(Error::invalid(format!(
                "path-loss exponent must be positive, got {pathloss_exponent}"
            )));
        }
        if !(pathloss_constant.is_finite() && pathloss_constant > 0.0) {
            return Err(Error::invalid(format!(
                "path-loss constant must be positive, got {pathloss_constant}"
            )));
        }
        let radius = threshold.powf(-1.0 / pathloss_exponent) / pathloss_constant;
        Self::new(bs_intensity, radius, truncation)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bs_intensity.is_finite() && self.bs_intensity > 0.0) {
            return Err(Error::invalid(format!(
                "station intensity must be positive, got {}",
                self.bs_intensity
            )));
        }
        if !(self.coverage_radius.is_finite() && self.coverage_radius > 0.0) {
            return Err(Error::invalid(format!(
                "coverage radius must be positive, got {}",
                self.coverage_radius
            )));
        }
        if self.truncation == 0 {
            return Err(Error::invalid("truncation must be at least 1"));
        }
        Ok(())
    }

    /// Poisson mean `nu = lambda pi R_b^2`.
    pub fn mean_coverage(&self) -> f64 {
        self.bs_intensity * PI * self.coverage_radius * self.coverage_radius
    }
}

fn poisson_head(nu: f64, truncation: usize) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(truncation + 1);
    let mut p = (-nu).exp();
    pmf.push(p);
    for m in 1..=truncation {
        p *= nu / m as f64;
        pmf.push(p);
    }
    pmf
}

fn poisson_tail(nu: f64, truncation: usize) -> f64 {
    // P[N > M] = P(M + 1, nu), the regularized lower incomplete gamma.
    gamma_lr((truncation + 1) as f64, nu)
}

/// Poisson(`nu`) coverage pmf truncated at `params.truncation`.
///
/// Fails when the discarded tail is not below [`MAX_TAIL_MASS`]; the error
/// names the smallest truncation that would pass.
pub fn boolean_coverage(params: &BooleanModelParams) -> Result<CoverageDistribution> {
    params.validate()?;
    let nu = params.mean_coverage();
    let tail = poisson_tail(nu, params.truncation);
    if tail >= MAX_TAIL_MASS {
        let mut suggested = params.truncation;
        while poisson_tail(nu, suggested) >= MAX_TAIL_MASS {
            suggested += 1;
        }
        return Err(Error::invalid(format!(
            "truncation M = {} leaves tail mass {tail:e} for nu = {nu}; use M >= {suggested}",
            params.truncation
        )));
    }
    let pmf = poisson_head(nu, params.truncation);
    Ok(CoverageDistribution::new(pmf)?.with_truncation_error(tail))
}

/// Poisson(`nu`) coverage with the coverage number capped at the truncation
/// point: the tail mass `P[N > M]` is added to `p_M`, i.e. the pmf of
/// `min(N, M)`. This is the fixed-`M` evaluation used for threshold sweeps.
pub fn boolean_coverage_capped(params: &BooleanModelParams) -> Result<CoverageDistribution> {
    params.validate()?;
    let nu = params.mean_coverage();
    let tail = poisson_tail(nu, params.truncation);
    let mut pmf = poisson_head(nu, params.truncation);
    pmf[params.truncation] += tail;
    Ok(CoverageDistribution::new(pmf)?.with_truncation_error(tail))
}
