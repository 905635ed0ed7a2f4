//! SINR k-coverage in a Poisson network without frequency reuse.
//!
//! The probability of being covered by exactly `m` stations is obtained by
//! inclusion-exclusion over the symmetric sums
//!
//! ```text
//! S_n(T) = x_T^(-2n/beta) * I_n(W a^(-beta/2)) * J_n(x_T),   x_T = T / (1 - (n-1) T)
//! ```
//!
//! for `0 < T < 1/(n-1)` (and `S_n = 0` otherwise), where `I_n` is a
//! one-dimensional integral over `[0, inf)` and `J_n` an `(n-1)`-dimensional
//! integral over the unit cube.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use super::{max_coverage_count, CoverageDistribution};
use crate::error::{Error, Result};
use crate::qmc::SobolSequence;
use crate::quadrature;

/// Default number of low-discrepancy points for `J_n`.
pub const DEFAULT_QUADRATURE_POINTS: usize = 1 << 16;
/// Highest dimension of `J_n` evaluated analytically.
pub const DEFAULT_DIMENSION_CAP: usize = 12;
/// Default absolute tolerance of the `I_n` quadrature.
pub const DEFAULT_I_TOLERANCE: f64 = 1e-10;

// Entries of the inclusion-exclusion pmf in (-NEGATIVE_FAILURE, 0) are
// treated as cancellation noise and clamped; anything lower is an error.
const NEGATIVE_FAILURE: f64 = 1e-6;

fn default_shadowing_moment() -> f64 {
    1.0
}

fn default_quadrature_points() -> usize {
    DEFAULT_QUADRATURE_POINTS
}

fn default_dimension_cap() -> usize {
    DEFAULT_DIMENSION_CAP
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrModelParams {
    /// Stations per unit area (`lambda`).
    pub bs_intensity: f64,
    /// `beta > 2`.
    pub pathloss_exponent: f64,
    /// `B` in `l(r) = (B r)^beta`.
    pub pathloss_constant: f64,
    /// `W`; zero gives the interference-limited model.
    #[serde(default)]
    pub noise_power: f64,
    /// `T`.
    pub sinr_threshold: f64,
    /// `E[S^(2/beta)]`, one without shadowing.
    #[serde(default = "default_shadowing_moment")]
    pub shadowing_moment: f64,
    #[serde(default = "default_quadrature_points")]
    pub quadrature_points: usize,
    #[serde(default)]
    pub qmc_seed: u64,
    #[serde(default = "default_dimension_cap")]
    pub dimension_cap: usize,
}

impl SinrModelParams {
    /// Parameters without shadowing and with default quadrature settings.
    pub fn new(
        bs_intensity: f64,
        pathloss_exponent: f64,
        pathloss_constant: f64,
        noise_power: f64,
        sinr_threshold: f64,
    ) -> Result<Self> {
        let params = Self {
            bs_intensity,
            pathloss_exponent,
            pathloss_constant,
            noise_power,
            sinr_threshold,
            shadowing_moment: 1.0,
            quadrature_points: DEFAULT_QUADRATURE_POINTS,
            qmc_seed: 0,
            dimension_cap: DEFAULT_DIMENSION_CAP,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.sinr_threshold = threshold;
        self
    }

    pub fn with_shadowing_moment(mut self, moment: f64) -> Self {
        self.shadowing_moment = moment;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.bs_intensity) {
            return Err(Error::invalid(format!(
                "station intensity must be positive, got {}",
                self.bs_intensity
            )));
        }
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent > 2.0) {
            return Err(Error::invalid(format!(
                "path-loss exponent must exceed 2, got {}",
                self.pathloss_exponent
            )));
        }
        if !positive(self.pathloss_constant) {
            return Err(Error::invalid(format!(
                "path-loss constant must be positive, got {}",
                self.pathloss_constant
            )));
        }
        if !(self.noise_power.is_finite() && self.noise_power >= 0.0) {
            return Err(Error::invalid(format!(
                "noise power must be nonnegative, got {}",
                self.noise_power
            )));
        }
        if !positive(self.sinr_threshold) {
            return Err(Error::invalid(format!(
                "SINR threshold must be positive, got {}",
                self.sinr_threshold
            )));
        }
        if !positive(self.shadowing_moment) {
            return Err(Error::invalid(format!(
                "shadowing moment must be positive, got {}",
                self.shadowing_moment
            )));
        }
        if self.quadrature_points == 0 {
            return Err(Error::invalid("quadrature points must be at least 1"));
        }
        Ok(())
    }

    /// `a = lambda pi E[S^(2/beta)] / B^2`.
    pub fn propagation_constant(&self) -> f64 {
        self.bs_intensity * PI * self.shadowing_moment
            / (self.pathloss_constant * self.pathloss_constant)
    }

    /// Noise argument of `I_n`: `W a^(-beta/2)`.
    pub fn noise_argument(&self) -> f64 {
        self.noise_power
            * self
                .propagation_constant()
                .powf(-self.pathloss_exponent / 2.0)
    }
}

fn check_exponent(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 2.0) {
        return Err(Error::invalid(format!(
            "path-loss exponent must exceed 2, got {beta}"
        )));
    }
    Ok(())
}

/// `C'(beta) = 2 pi / (beta sin(2 pi / beta)) = Gamma(1 - 2/beta) Gamma(1 + 2/beta)`.
pub fn euler_constant_cprime(beta: f64) -> Result<f64> {
    check_exponent(beta)?;
    let angle = 2.0 * PI / beta;
    Ok(angle / angle.sin())
}

/// `I_n(x)` with the default absolute tolerance.
pub fn integral_i(n: usize, x: f64, beta: f64) -> Result<f64> {
    integral_i_with_tolerance(n, x, beta, DEFAULT_I_TOLERANCE)
}

/// ```text
/// I_n(x) = 2^n int_0^inf u^(2n-1) exp(-u^2 - u^beta x Gamma(1-2/beta)^(-beta/2)) du
///          / (beta^(n-1) C'(beta)^n (n-1)!)
/// ```
///
/// The integrand is normalized by `(n-1)!` (so its `x = 0` integral is 1/2)
/// and cut off where the undamped Gaussian moment falls below the tolerance.
pub fn integral_i_with_tolerance(n: usize, x: f64, beta: f64, abs_tol: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("I_n requires n >= 1"));
    }
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::invalid(format!(
            "I_n argument must be nonnegative, got {x}"
        )));
    }
    if !(abs_tol.is_finite() && abs_tol > 0.0) {
        return Err(Error::invalid(format!(
            "tolerance must be positive, got {abs_tol}"
        )));
    }
    let cprime = euler_constant_cprime(beta)?;
    let nf = n as f64;
    let prefactor = 2f64.powf(nf) / (beta.powf(nf - 1.0) * cprime.powf(nf));
    let damping = x * gamma(1.0 - 2.0 / beta).powf(-beta / 2.0);
    let log_norm = ln_gamma(nf);
    let power = 2.0 * nf - 1.0;

    let log_moment = |u: f64| power * u.ln() - u * u - log_norm;
    let integrand = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        (log_moment(u) - damping * u.powf(beta)).exp()
    };

    let inner_tol = (abs_tol / prefactor).min(abs_tol);
    let cutoff_log = (inner_tol * 1e-3).ln();
    let mut upper = (nf - 0.5).sqrt().max(1.0);
    while log_moment(upper) > cutoff_log {
        upper += 0.5;
    }
    let q = quadrature::integrate(integrand, 0.0, upper, inner_tol, 2000).map_err(|e| match e {
        Error::NumericalFailure { detail, .. } => Error::numerical(
            "I_n quadrature",
            format!("n = {n}, x = {x}, beta = {beta}: {detail}"),
        ),
        other => other,
    })?;
    Ok(prefactor * q.value)
}

/// `v(t) = t - sin(2 pi t) / (2 pi)`, a periodizing change of variables whose
/// derivative `1 - cos(2 pi t)` vanishes at both ends of the unit interval.
fn periodize(t: f64) -> f64 {
    let theta = 2.0 * PI * t;
    if t < 1e-3 {
        let t2 = theta * theta;
        theta * t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0)) / (2.0 * PI)
    } else {
        t - theta.sin() / (2.0 * PI)
    }
}

fn periodize_weight(t: f64) -> f64 {
    let s = (PI * t).sin();
    2.0 * s * s
}

/// `J_n(x)` with the default dimension cap.
pub fn integral_j(n: usize, x: f64, beta: f64, quadrature_points: usize, seed: u64) -> Result<f64> {
    integral_j_capped(n, x, beta, quadrature_points, seed, DEFAULT_DIMENSION_CAP)
}

/// ```text
/// J_n(x) = int_[0,1]^(n-1) prod_i v_i^(i(2/beta+1)-1) (1-v_i)^(2/beta) / prod_i (x + eta_i) dv,
/// eta_i = (1 - v_i) prod_{k>i} v_k
/// ```
///
/// estimated with `quadrature_points` digitally shifted Sobol points after a
/// periodizing transform of each coordinate. `J_1 = 1` exactly.
pub fn integral_j_capped(
    n: usize,
    x: f64,
    beta: f64,
    quadrature_points: usize,
    seed: u64,
    dimension_cap: usize,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("J_n requires n >= 1"));
    }
    check_exponent(beta)?;
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::invalid(format!(
            "J_n argument must be nonnegative, got {x}"
        )));
    }
    let dim = n - 1;
    if dim == 0 {
        return Ok(1.0);
    }
    let cap = dimension_cap.min(crate::qmc::MAX_DIMENSION);
    if dim > cap {
        return Err(Error::UnsupportedDimension {
            dimension: dim,
            cap,
        });
    }
    if quadrature_points == 0 {
        return Err(Error::invalid("quadrature points must be at least 1"));
    }

    let shape = 2.0 / beta;
    let exponents: Vec<f64> = (1..=dim).map(|i| i as f64 * (shape + 1.0) - 1.0).collect();
    let mut seq = SobolSequence::new(dim, seed);
    let mut t = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut one_minus_v = vec![0.0; dim];
    let mut sum = 0.0;
    for _ in 0..quadrature_points {
        seq.next_into(&mut t);
        let mut log_value = 0.0;
        for i in 0..dim {
            v[i] = periodize(t[i]);
            one_minus_v[i] = periodize(1.0 - t[i]);
            log_value += periodize_weight(t[i]).ln()
                + exponents[i] * v[i].ln()
                + shape * one_minus_v[i].ln();
        }
        // eta_i needs the product of the later coordinates; sweep backwards.
        let mut tail_product = 1.0;
        for i in (0..dim).rev() {
            let eta = one_minus_v[i] * tail_product;
            log_value -= (x + eta).ln();
            tail_product *= v[i];
        }
        sum += log_value.exp();
    }
    let value = sum / quadrature_points as f64;
    if !value.is_finite() {
        return Err(Error::numerical(
            "J_n quadrature",
            format!("non-finite estimate for n = {n}, x = {x}, beta = {beta}"),
        ));
    }
    Ok(value)
}

/// `S_n(T)`; zero outside `0 < T < 1/(n-1)`.
pub fn symmetric_sum_sn(n: usize, params: &SinrModelParams) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("S_n requires n >= 1"));
    }
    params.validate()?;
    let t = params.sinr_threshold;
    let gap = 1.0 - (n as f64 - 1.0) * t;
    if gap <= 0.0 {
        return Ok(0.0);
    }
    let beta = params.pathloss_exponent;
    let xt = t / gap;
    let i_n = integral_i(n, params.noise_argument(), beta)?;
    let j_n = integral_j_capped(
        n,
        xt,
        beta,
        params.quadrature_points,
        params.qmc_seed,
        params.dimension_cap,
    )?;
    Ok(xt.powf(-2.0 * n as f64 / beta) * i_n * j_n)
}

/// Analytic SINR coverage pmf together with the intermediate sums.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SinrCoverage {
    pub distribution: CoverageDistribution,
    /// `S_1 .. S_M`.
    pub symmetric_sums: Vec<f64>,
    /// Inclusion-exclusion values before clamping, `p_0 .. p_M`.
    pub raw_pmf: Vec<f64>,
}

/// `p_m = sum_{n=m}^{M} (-1)^(n-m) C(n, m) S_n(T)` with `M = ceil(1/T)`.
pub fn sinr_coverage(params: &SinrModelParams) -> Result<CoverageDistribution> {
    sinr_coverage_detailed(params).map(|c| c.distribution)
}

pub fn sinr_coverage_detailed(params: &SinrModelParams) -> Result<SinrCoverage> {
    params.validate()?;
    let max_m = max_coverage_count(params.sinr_threshold)?;
    let cap = params.dimension_cap.min(crate::qmc::MAX_DIMENSION);
    if max_m - 1 > cap {
        return Err(Error::UnsupportedDimension {
            dimension: max_m - 1,
            cap,
        });
    }
    let sums = (1..=max_m)
        .map(|n| symmetric_sum_sn(n, params))
        .collect::<Result<Vec<_>>>()?;

    let mut raw = vec![0.0; max_m + 1];
    for (m, slot) in raw.iter_mut().enumerate().skip(1) {
        let mut binom = 1.0;
        let mut acc = 0.0;
        for n in m..=max_m {
            if n > m {
                binom = binom * n as f64 / (n - m) as f64;
            }
            let sign = if (n - m) % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binom * sums[n - 1];
        }
        *slot = acc;
    }
    raw[0] = 1.0 - raw[1..].iter().sum::<f64>();

    if let Some((m, p)) = raw
        .iter()
        .enumerate()
        .find(|(_, p)| **p < -NEGATIVE_FAILURE)
    {
        return Err(Error::numerical(
            "SINR coverage",
            format!(
                "p_{m} = {p:e} is negative beyond quadrature noise (T = {})",
                params.sinr_threshold
            ),
        ));
    }
    let clamped: Vec<f64> = raw.iter().map(|p| p.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    let pmf = clamped.iter().map(|p| p / total).collect();
    Ok(SinrCoverage {
        distribution: CoverageDistribution::new(pmf)?,
        symmetric_sums: sums,
        raw_pmf: raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn interference_limited(threshold: f64) -> SinrModelParams {
        SinrModelParams::new(1.0, 4.0, 1.0, 0.0, threshold).unwrap()
    }

    #[test]
    fn cprime_examples() {
        assert!((euler_constant_cprime(4.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((euler_constant_cprime(3.0).unwrap() - 2.418_399_152_3).abs() < 1e-9);
        assert!(euler_constant_cprime(2.0).is_err());
        assert!(euler_constant_cprime(1.5).is_err());
    }

    proptest! {
        #[test]
        fn cprime_matches_gamma_product(beta in 2.05f64..10.0) {
            let g = gamma(1.0 - 2.0 / beta) * gamma(1.0 + 2.0 / beta);
            let c = euler_constant_cprime(beta).unwrap();
            prop_assert!((c - g).abs() < 1e-12 * g.max(1.0), "beta {beta}: {c} vs {g}");
        }
    }

    // Closed form at x = 0: 2^(n-1) / (beta^(n-1) C'(beta)^n).
    fn i_at_zero(n: usize, beta: f64) -> f64 {
        let c = euler_constant_cprime(beta).unwrap();
        2f64.powi(n as i32 - 1) / (beta.powi(n as i32 - 1) * c.powi(n as i32))
    }

    #[test]
    fn integral_i_at_zero_matches_closed_form() {
        assert!((integral_i(1, 0.0, 4.0).unwrap() - 2.0 / PI).abs() < 1e-10);
        let i3 = integral_i(3, 0.0, 4.0).unwrap();
        assert!((i3 - 4.0 / (16.0 * (PI / 2.0).powi(3))).abs() < 1e-10);
        assert!((i3 - 0.0645).abs() < 1e-4);
        for n in 1..=13 {
            for beta in [2.5, 3.0, 4.0, 5.5] {
                let got = integral_i(n, 0.0, beta).unwrap();
                assert!(
                    (got - i_at_zero(n, beta)).abs() < 1e-10,
                    "n {n} beta {beta}"
                );
            }
        }
    }

    #[test]
    fn integral_i_decreases_with_noise() {
        let mut prev = integral_i(1, 0.0, 4.0).unwrap();
        for x in [0.01, 0.1, 1.0, 10.0, 100.0, 1e4] {
            let cur = integral_i(1, x, 4.0).unwrap();
            assert!(cur < prev);
            prev = cur;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn integral_i_with_noise_matches_brute_force() {
        // Independent midpoint rule on the raw (unnormalized) integrand.
        let beta: f64 = 3.5;
        let n = 2;
        let x = 0.7;
        let c = gamma(1.0 - 2.0 / beta).powf(-beta / 2.0);
        let h = 1e-5;
        let raw: f64 = (0..1_200_000)
            .map(|k| {
                let u = (k as f64 + 0.5) * h;
                u.powi(3) * (-u * u - u.powf(beta) * x * c).exp()
            })
            .sum::<f64>()
            * h;
        let cp = euler_constant_cprime(beta).unwrap();
        let expected = 4.0 * raw / (beta * cp * cp);
        assert!((integral_i(n, x, beta).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn integral_j_trivial_dimension() {
        for x in [0.0, 0.3, 7.0] {
            assert_eq!(integral_j(1, x, 4.0, 10, 0).unwrap(), 1.0);
        }
    }

    // Independent oracle for n = 2: midpoint rule in w = sqrt(1 - v), which
    // removes the (1-v)^(-1/2) endpoint behaviour at x = 0.
    fn j2_oracle(x: f64, beta: f64) -> f64 {
        let e = 2.0 / beta;
        let steps = 2_000_000;
        let h = 1.0 / steps as f64;
        (0..steps)
            .map(|k| {
                let w = (k as f64 + 0.5) * h;
                let one_minus_v = w * w;
                let v = 1.0 - one_minus_v;
                v.powf(e) * one_minus_v.powf(e) / (x + one_minus_v) * 2.0 * w
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn integral_j_beta_function_at_zero() {
        // Beta(3/2, 1/2) = pi / 2
        assert!((j2_oracle(0.0, 4.0) - PI / 2.0).abs() < 1e-6);
        let got = integral_j(2, 0.0, 4.0, DEFAULT_QUADRATURE_POINTS, 0).unwrap();
        assert!((got - PI / 2.0).abs() < 1e-4, "{got}");
    }

    #[test]
    fn integral_j_matches_one_dimensional_oracle() {
        for (x, beta) in [(1.0, 4.0), (1.5, 4.0), (0.25, 3.0), (4.0, 6.0)] {
            let got = integral_j(2, x, beta, DEFAULT_QUADRATURE_POINTS, 3).unwrap();
            let want = j2_oracle(x, beta);
            assert!(
                (got - want).abs() < 1e-4,
                "x {x} beta {beta}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn integral_j_dimension_cap() {
        let err = integral_j(14, 1.0, 4.0, 16, 0).unwrap_err();
        assert!(matches!(
            err,
            Error::UnsupportedDimension {
                dimension: 13,
                cap: 12
            }
        ));
        let err = integral_j_capped(4, 1.0, 4.0, 16, 0, 2).unwrap_err();
        assert!(matches!(
            err,
            Error::UnsupportedDimension {
                dimension: 3,
                cap: 2
            }
        ));
    }

    #[test]
    fn integral_j_is_deterministic_per_seed() {
        let a = integral_j(4, 0.5, 4.0, 4096, 9).unwrap();
        let b = integral_j(4, 0.5, 4.0, 4096, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn symmetric_sum_support() {
        assert_eq!(
            symmetric_sum_sn(2, &interference_limited(1.0)).unwrap(),
            0.0
        );
        assert_eq!(
            symmetric_sum_sn(3, &interference_limited(0.5 + 1e-9)).unwrap(),
            0.0
        );
        assert!(symmetric_sum_sn(3, &interference_limited(0.5 - 1e-9)).unwrap() > 0.0);
        let s1 = symmetric_sum_sn(1, &interference_limited(1.0)).unwrap();
        assert!((s1 - 2.0 / PI).abs() < 1e-10);
    }

    #[test]
    fn single_coverage_thresholds() {
        let d = sinr_coverage(&interference_limited(1.0)).unwrap();
        assert_eq!(d.max_coverage(), 1);
        assert!((d.probability(1) - 2.0 / PI).abs() < 1e-9);
        assert!((d.no_coverage() - (1.0 - 2.0 / PI)).abs() < 1e-9);

        let d = sinr_coverage(&interference_limited(2.0)).unwrap();
        let p1 = 2f64.powf(-0.5) * 2.0 / PI;
        assert!((d.probability(1) - p1).abs() < 1e-9);
        assert!((d.probability(1) - 0.4502).abs() < 1e-4);
    }

    #[test]
    fn support_ends_at_ceiling_of_inverse_threshold() {
        for t in [0.6, 0.4, 0.3, 0.26] {
            let detailed = sinr_coverage_detailed(&interference_limited(t)).unwrap();
            let m = max_coverage_count(t).unwrap();
            assert_eq!(detailed.distribution.max_coverage(), m);
            assert_eq!(detailed.symmetric_sums.len(), m);
            for p in &detailed.raw_pmf {
                assert!(
                    *p > -1e-9 && *p < 1.0 + 1e-9,
                    "T {t}: {:?}",
                    detailed.raw_pmf
                );
            }
        }
    }

    #[test]
    fn coverage_beyond_cap_is_unsupported() {
        let mut params = interference_limited(0.05);
        assert!(matches!(
            sinr_coverage(&params),
            Err(Error::UnsupportedDimension { dimension: 19, .. })
        ));
        params.dimension_cap = 2;
        params.sinr_threshold = 0.3;
        assert!(matches!(
            sinr_coverage(&params),
            Err(Error::UnsupportedDimension {
                dimension: 3,
                cap: 2
            })
        ));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(SinrModelParams::new(1.0, 2.0, 1.0, 0.0, 1.0).is_err());
        assert!(SinrModelParams::new(0.0, 4.0, 1.0, 0.0, 1.0).is_err());
        assert!(SinrModelParams::new(1.0, 4.0, 1.0, -1.0, 1.0).is_err());
        assert!(SinrModelParams::new(1.0, 4.0, 1.0, 0.0, 0.0).is_err());
    }
}
