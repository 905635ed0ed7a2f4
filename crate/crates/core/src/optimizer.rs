//! Hit-probability maximization over randomized placement policies.
//!
//! The objective
//!
//! ```text
//! f(b) = 1 - sum_j a_j sum_m p_m (1 - b_j)^m
//! ```
//!
//! is separable, increasing and concave in every `b_j`, and the budget
//! `sum_j b_j <= K` is active at the optimum whenever `K < J`. Relaxing the
//! budget with a price `mu >= 0` decouples the contents: each `b_j(mu)` is 1
//! when `a_j p_1 > mu`, 0 when `a_j E[N] < mu`, and otherwise the root of
//! `a_j sum_m m p_m (1 - b)^(m-1) = mu`. The optimal price is the root of
//! `sum_j b_j(mu) = K`, found by bisection since the left side is
//! non-increasing in `mu`.

use serde::Serialize;

use crate::coverage::CoverageDistribution;
use crate::error::{Error, Result};
use crate::placement::PlacementPolicy;
use crate::popularity::PopularityDistribution;

/// Bisection tolerances for the dual price and the per-content roots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct SolverTolerances {
    /// Width of the final `mu` bracket.
    pub dual: f64,
    /// Width of the final `b_j` bracket; must be tighter than `dual`.
    pub root: f64,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self {
            dual: 1e-10,
            root: 1e-12,
        }
    }
}

impl SolverTolerances {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("dual", self.dual), ("root", self.root)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "{name} tolerance must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

const MAX_BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GcpSolution {
    pub policy: PlacementPolicy,
    pub dual_price: f64,
    pub hit_probability: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// `|sum b* - min(K, J)|`.
    pub budget_residual: f64,
    /// Set when no station ever covers the user, so every policy scores 0.
    pub degenerate: bool,
}

/// `f(b) = 1 - sum_j a_j sum_m p_m (1 - b_j)^m`, evaluated as the
/// hit-mass sum `sum_j a_j sum_m p_m (1 - (1 - b_j)^m)`.
pub fn hit_probability(
    policy: &PlacementPolicy,
    popularity: &PopularityDistribution,
    coverage: &CoverageDistribution,
) -> Result<f64> {
    if policy.library_size() != popularity.library_size() {
        return Err(Error::DimensionMismatch {
            context: "hit probability",
            expected: popularity.library_size(),
            found: policy.library_size(),
        });
    }
    Ok(objective(
        policy.probabilities(),
        popularity.probabilities(),
        coverage,
    ))
}

fn objective(b: &[f64], a: &[f64], coverage: &CoverageDistribution) -> f64 {
    let pmf = coverage.pmf();
    a.iter()
        .zip(b)
        .map(|(aj, bj)| {
            let miss = 1.0 - bj;
            let mut power = 1.0;
            let mut hit = 0.0;
            for pm in &pmf[1..] {
                power *= miss;
                hit += pm * (1.0 - power);
            }
            aj * hit
        })
        .sum()
}

/// Most-popular-content baseline: cache the top `K` everywhere, worth
/// `(1 - p_0) sum_{j <= K} a_j`.
pub fn mpc_policy(
    popularity: &PopularityDistribution,
    coverage: &CoverageDistribution,
    cache_size: usize,
) -> Result<(PlacementPolicy, f64)> {
    if cache_size == 0 {
        return Err(Error::invalid("cache size must be at least 1"));
    }
    let policy = PlacementPolicy::most_popular(popularity.library_size(), cache_size)?;
    let value = (1.0 - coverage.no_coverage()) * popularity.head_mass(cache_size);
    Ok((policy, value))
}

/// `a_j sum_{m>=1} m p_m (1 - b)^(m-1)`, the partial derivative of `f`.
pub fn marginal_gain(b: f64, popularity: f64, coverage: &CoverageDistribution) -> f64 {
    let q = 1.0 - b;
    let pmf = coverage.pmf();
    // Horner on sum_{m=1}^{M} m p_m q^(m-1).
    let mut acc = 0.0;
    for m in (1..pmf.len()).rev() {
        acc = acc * q + m as f64 * pmf[m];
    }
    popularity * acc
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::invalid(format!(
            "dual price must be finite and nonnegative, got {mu}"
        )));
    }
    Ok(())
}

/// Maximizer `b_j(mu)` of the relaxed per-content problem over `[0, 1]`.
pub fn primal_response(
    mu: f64,
    popularity: f64,
    coverage: &CoverageDistribution,
    tol: f64,
) -> Result<f64> {
    check_mu(mu)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::invalid(format!(
            "root tolerance must be positive, got {tol}"
        )));
    }
    Ok(response(mu, popularity, coverage, coverage.mean(), tol).0)
}

/// Returns `(b, bisection steps)`.
fn response(
    mu: f64,
    popularity: f64,
    coverage: &CoverageDistribution,
    mean: f64,
    tol: f64,
) -> (f64, usize) {
    if popularity <= 0.0 {
        return (0.0, 0);
    }
    if popularity * coverage.probability(1) > mu {
        return (1.0, 0);
    }
    if popularity * mean < mu {
        return (0.0, 0);
    }
    // marginal_gain is non-increasing in b; an exact-boundary price drives
    // the bracket onto the matching endpoint.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut steps = 0;
    while hi - lo > tol && steps < MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if marginal_gain(mid, popularity, coverage) > mu {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    (0.5 * (lo + hi), steps)
}

/// `sum_j b_j(mu)` for the given price.
pub fn budget_usage(
    mu: f64,
    popularity: &PopularityDistribution,
    coverage: &CoverageDistribution,
    root_tolerance: f64,
) -> Result<f64> {
    check_mu(mu)?;
    let mean = coverage.mean();
    Ok(popularity
        .probabilities()
        .iter()
        .map(|a| response(mu, *a, coverage, mean, root_tolerance).0)
        .sum())
}

struct Responses {
    b: Vec<f64>,
    sum: f64,
    steps: usize,
}

fn responses(
    mu: f64,
    a: &[f64],
    coverage: &CoverageDistribution,
    mean: f64,
    tol: f64,
) -> Responses {
    let mut steps = 0;
    let b: Vec<f64> = a
        .iter()
        .map(|aj| {
            let (bj, s) = response(mu, *aj, coverage, mean, tol);
            steps += s;
            bj
        })
        .collect();
    Responses {
        sum: b.iter().sum(),
        b,
        steps,
    }
}

/// Solves the geographic caching problem `max f(b)` subject to
/// `sum b_j <= K`, `0 <= b_j <= 1`.
pub fn solve_gcp(
    popularity: &PopularityDistribution,
    coverage: &CoverageDistribution,
    cache_size: usize,
    tolerances: SolverTolerances,
) -> Result<GcpSolution> {
    if cache_size == 0 {
        return Err(Error::invalid("cache size must be at least 1"));
    }
    tolerances.validate()?;
    let a = popularity.probabilities();
    let library = a.len();
    let finish = |b: Vec<f64>,
                  mu: f64,
                  outer: usize,
                  inner: usize,
                  degenerate: bool|
     -> Result<GcpSolution> {
        let policy = PlacementPolicy::new(b, cache_size)?;
        let target = cache_size.min(library) as f64;
        let budget_residual = if degenerate {
            0.0
        } else {
            (policy.total() - target).abs()
        };
        Ok(GcpSolution {
            hit_probability: hit_probability(&policy, popularity, coverage)?,
            policy,
            dual_price: mu,
            outer_iterations: outer,
            inner_iterations: inner,
            budget_residual,
            degenerate,
        })
    };

    if coverage.is_degenerate() {
        return finish(vec![0.0; library], 0.0, 0, 0, true);
    }
    // The budget cannot bind: caching everything is optimal.
    if cache_size >= library {
        return finish(vec![1.0; library], 0.0, 0, 0, false);
    }

    let k = cache_size as f64;
    let mean = coverage.mean();
    let tol = tolerances.root;
    let budget_slack = tol * library as f64;

    let mut inner = 0;
    let mut at_lo = responses(0.0, a, coverage, mean, tol);
    inner += at_lo.steps;
    if at_lo.sum <= k + budget_slack {
        // Only zero-popularity contents are left uncached at a zero price;
        // they do not affect f, so spend the rest of the budget on them.
        let mut remaining = k - at_lo.sum;
        for bj in at_lo.b.iter_mut().rev() {
            if remaining <= 0.0 {
                break;
            }
            let add = (1.0 - *bj).min(remaining);
            *bj += add;
            remaining -= add;
        }
        return finish(at_lo.b, 0.0, 0, inner, false);
    }

    let (mut lo, mut hi) = (0.0, a[0] * mean);
    let mut at_hi = responses(hi, a, coverage, mean, tol);
    inner += at_hi.steps;
    if at_hi.sum > k + budget_slack {
        return Err(Error::numerical(
            "dual bisection",
            format!(
                "budget usage {} at the upper price {hi} still exceeds K = {cache_size}",
                at_hi.sum
            ),
        ));
    }

    let mut outer = 0;
    while hi - lo > tolerances.dual {
        if outer >= MAX_BISECTION_STEPS {
            return Err(Error::numerical(
                "dual bisection",
                format!("no convergence after {outer} steps; bracket [{lo}, {hi}]"),
            ));
        }
        outer += 1;
        let mid = 0.5 * (lo + hi);
        let r = responses(mid, a, coverage, mean, tol);
        inner += r.steps;
        if (r.sum - k).abs() <= budget_slack {
            return finish(r.b, mid, outer, inner, false);
        }
        if r.sum < k {
            hi = mid;
            at_hi = r;
        } else {
            lo = mid;
            at_lo = r;
        }
    }

    // sum b(mu) may jump across K inside the final bracket (flat marginal
    // gains, tied popularities); mix the two endpoint responses so the
    // budget holds with equality.
    let weight = if at_lo.sum > at_hi.sum {
        ((k - at_hi.sum) / (at_lo.sum - at_hi.sum)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let b = at_lo
        .b
        .iter()
        .zip(&at_hi.b)
        .map(|(l, h)| weight * l + (1.0 - weight) * h)
        .collect();
    let mu = weight * lo + (1.0 - weight) * hi;
    finish(b, mu, outer, inner, false)
}

/// Closed-form optimum of the two-content, one-slot, `M = 2` problem:
/// `b_1* = (2 a_1 (p_1 + p_2) - p_1) / (2 p_2)` when
/// `a_1 <= 1 - p_1 / (2 (p_1 + p_2))`, else 1; `b_2* = 1 - b_1*`.
pub fn solve_2cp(a1: f64, p1: f64, p2: f64) -> Result<f64> {
    if !(a1.is_finite() && (0.5..=1.0).contains(&a1)) {
        return Err(Error::invalid(format!(
            "a_1 must lie in [0.5, 1], got {a1}"
        )));
    }
    if !(p1.is_finite() && p2.is_finite() && p1 >= 0.0 && p2 >= 0.0) {
        return Err(Error::invalid(format!(
            "coverage probabilities must be nonnegative, got {p1}, {p2}"
        )));
    }
    if p1 + p2 > 1.0 + 1e-12 {
        return Err(Error::invalid(format!("p_1 + p_2 = {} exceeds 1", p1 + p2)));
    }
    if p2 == 0.0 {
        return Ok(1.0);
    }
    let covered = p1 + p2;
    if a1 <= 1.0 - p1 / (2.0 * covered) {
        Ok((2.0 * a1 * covered - p1) / (2.0 * p2))
    } else {
        Ok(1.0)
    }
}
