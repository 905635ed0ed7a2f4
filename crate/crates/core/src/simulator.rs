//! Monte Carlo ground truth for the analytic coverage and hit-probability
//! formulas.
//!
//! Each replication draws a homogeneous Poisson network in a disk around the
//! typical user at the origin, counts the covering stations, gives every
//! covering station an independent staircase inventory, draws one request
//! from the popularity law, and records whether any covering cache holds it.
//!
//! Replication `r` consumes its own ChaCha stream (`stream = r`) keyed by the
//! master seed, so reports depend only on `(config, seed)` and not on how
//! replications are scheduled across threads.

use std::f64::consts::{LN_10, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::{max_coverage_count, BooleanModelParams, SinrModelParams};
use crate::error::{Error, Result};
use crate::placement::PlacementPolicy;
use crate::popularity::PopularityDistribution;

/// Default bound on the excluded far-field interference, relative to the
/// reference power (see [`SimulationConfig::default_window_radius`]).
pub const DEFAULT_INTERFERENCE_EPSILON: f64 = 1e-4;

/// Upper limit on the mean number of stations drawn per replication. The
/// default SINR window needs about `epsilon^(-2/(beta-2))` stations, which
/// explodes as the path-loss exponent approaches 2.
pub const MAX_EXPECTED_STATIONS: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model", content = "params")]
pub enum CoverageModel {
    Sinr(SinrModelParams),
    Boolean(BooleanModelParams),
}

/// Random power fluctuation `S_i` applied to each station's signal.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Shadowing {
    #[default]
    None,
    /// `S = 10^(sigma_db X / 10)` with `X` standard normal.
    LogNormal { sigma_db: f64 },
}

impl Shadowing {
    fn log_scale(&self) -> f64 {
        match self {
            Shadowing::None => 0.0,
            Shadowing::LogNormal { sigma_db } => sigma_db * LN_10 / 10.0,
        }
    }

    /// `E[S^order]`; for lognormal shadowing `exp(order^2 s^2 / 2)`.
    pub fn moment(&self, order: f64) -> f64 {
        let s = self.log_scale();
        (0.5 * order * order * s * s).exp()
    }

    /// The moment `E[S^(2/beta)]` the analytic SINR model needs.
    pub fn analytic_moment(&self, pathloss_exponent: f64) -> f64 {
        self.moment(2.0 / pathloss_exponent)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Shadowing::None => 1.0,
            Shadowing::LogNormal { .. } => {
                let x: f64 = StandardNormal.sample(rng);
                (self.log_scale() * x).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub model: CoverageModel,
    /// Disk radius around the user; `None` picks
    /// [`default_window_radius`](Self::default_window_radius).
    pub window_radius: Option<f64>,
    pub replications: usize,
    pub seed: u64,
    pub popularity: PopularityDistribution,
    pub policy: PlacementPolicy,
    #[serde(default)]
    pub shadowing: Shadowing,
    #[serde(default = "default_epsilon")]
    pub interference_epsilon: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_INTERFERENCE_EPSILON
}

impl SimulationConfig {
    pub fn new(
        model: CoverageModel,
        popularity: PopularityDistribution,
        policy: PlacementPolicy,
        replications: usize,
        seed: u64,
    ) -> Self {
        Self {
            model,
            window_radius: None,
            replications,
            seed,
            popularity,
            policy,
            shadowing: Shadowing::None,
            interference_epsilon: DEFAULT_INTERFERENCE_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.model {
            CoverageModel::Sinr(p) => {
                p.validate()?;
                let expected = self.shadowing.analytic_moment(p.pathloss_exponent);
                if (p.shadowing_moment - expected).abs() > 1e-9 * expected {
                    return Err(Error::invalid(format!(
                        "shadowing moment E[S^(2/beta)] = {} in the model does not match the simulated shadowing ({expected})",
                        p.shadowing_moment
                    )));
                }
            }
            CoverageModel::Boolean(p) => p.validate()?,
        }
        if let Shadowing::LogNormal { sigma_db } = self.shadowing {
            if !(sigma_db.is_finite() && sigma_db >= 0.0) {
                return Err(Error::invalid(format!(
                    "shadowing sigma must be nonnegative, got {sigma_db}"
                )));
            }
            if matches!(self.model, CoverageModel::Boolean(_)) {
                return Err(Error::invalid("the Boolean model has no shadowing"));
            }
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if !(self.interference_epsilon.is_finite() && self.interference_epsilon > 0.0) {
            return Err(Error::invalid("interference epsilon must be positive"));
        }
        self.policy
            .validate(self.popularity.library_size())
            .map_err(Error::from)?;
        if let Some(r) = self.window_radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::invalid(format!(
                    "window radius must be positive, got {r}"
                )));
            }
            match &self.model {
                CoverageModel::Boolean(p) if r < p.coverage_radius => {
                    return Err(Error::invalid(format!(
                        "window radius {r} is smaller than the coverage radius {}",
                        p.coverage_radius
                    )));
                }
                CoverageModel::Sinr(_) => {
                    let needed = self.default_window_radius();
                    if r < needed * (1.0 - 1e-12) {
                        return Err(Error::invalid(format!(
                            "window radius {r} leaves more than {} of the reference interference outside; use at least {needed}",
                            self.interference_epsilon
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Boolean model: the coverage radius. SINR model: the smallest radius
    /// whose excluded mean interference
    /// `2 pi lambda E[S] B^-beta R^(2-beta) / (beta - 2)` is at most
    /// `epsilon` times `W` plus the mean interference received from the
    /// annulus between `r_0 = (lambda pi)^(-1/2)` and `R`.
    pub fn default_window_radius(&self) -> f64 {
        match &self.model {
            CoverageModel::Boolean(p) => p.coverage_radius,
            CoverageModel::Sinr(p) => {
                let beta = p.pathloss_exponent;
                let c = far_field_constant(p, &self.shadowing);
                let r0 = (p.bs_intensity * PI).sqrt().recip();
                let eps = self.interference_epsilon;
                let reference = p.noise_power + c * r0.powf(2.0 - beta);
                (eps * reference / (c * (1.0 + eps)))
                    .powf(1.0 / (2.0 - beta))
                    .max(r0)
            }
        }
    }

    pub fn resolved_window_radius(&self) -> f64 {
        self.window_radius
            .unwrap_or_else(|| self.default_window_radius())
    }

    /// Mean interference from stations beyond the window (SINR only).
    pub fn truncated_interference_bound(&self) -> Option<f64> {
        match &self.model {
            CoverageModel::Sinr(p) => {
                let c = far_field_constant(p, &self.shadowing);
                Some(
                    c * self
                        .resolved_window_radius()
                        .powf(2.0 - p.pathloss_exponent),
                )
            }
            CoverageModel::Boolean(_) => None,
        }
    }
}

// 2 pi lambda E[S] B^-beta / (beta - 2)
fn far_field_constant(p: &SinrModelParams, shadowing: &Shadowing) -> f64 {
    let beta = p.pathloss_exponent;
    2.0 * PI * p.bs_intensity * shadowing.moment(1.0) * p.pathloss_constant.powf(-beta)
        / (beta - 2.0)
}

/// Proportion estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub standard_error: f64,
}

impl Estimate {
    fn from_counts(successes: u64, trials: u64) -> Self {
        let value = successes as f64 / trials as f64;
        Self {
            value,
            standard_error: (value * (1.0 - value) / trials as f64).sqrt(),
        }
    }

    /// `(value - reference) / standard_error`; infinite when the estimate has
    /// zero spread but misses the reference.
    pub fn z_score(&self, reference: f64) -> f64 {
        let diff = self.value - reference;
        if self.standard_error > 0.0 {
            diff / self.standard_error
        } else if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmfBin {
    pub coverage: usize,
    pub count: u64,
    pub frequency: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    /// Absent when only the coverage pmf was requested.
    pub hit_rate: Option<Estimate>,
    /// Bins `0..=max observed coverage`.
    pub empirical_pmf: Vec<PmfBin>,
    pub replications_used: usize,
    pub window_radius: f64,
    pub truncated_interference_bound: Option<f64>,
}

impl SimulationReport {
    pub fn frequency(&self, m: usize) -> Estimate {
        self.empirical_pmf
            .get(m)
            .map(|b| Estimate {
                value: b.frequency,
                standard_error: b.standard_error,
            })
            .unwrap_or(Estimate {
                value: 0.0,
                standard_error: 0.0,
            })
    }
}

/// Draws Poisson networks in a fixed window and counts covering stations.
#[derive(Debug, Clone)]
pub struct NetworkSampler {
    rule: Rule,
    window_sq: f64,
    count: Poisson<f64>,
    shadowing: Shadowing,
}

#[derive(Debug, Clone)]
enum Rule {
    Sinr {
        threshold: f64,
        noise: f64,
        max_cover: usize,
        // power = S * gain * (r^2)^(-half_beta)
        gain: f64,
        half_beta: f64,
        integer_half_beta: Option<i32>,
    },
    Boolean {
        radius_sq: f64,
    },
}

impl NetworkSampler {
    pub fn new(model: &CoverageModel, shadowing: Shadowing, window_radius: f64) -> Result<Self> {
        if !(window_radius.is_finite() && window_radius > 0.0) {
            return Err(Error::invalid(format!(
                "window radius must be positive, got {window_radius}"
            )));
        }
        let (intensity, rule) = match model {
            CoverageModel::Sinr(p) => {
                p.validate()?;
                let half_beta = p.pathloss_exponent / 2.0;
                let integer_half_beta =
                    (half_beta.fract() == 0.0 && half_beta <= 16.0).then_some(half_beta as i32);
                (
                    p.bs_intensity,
                    Rule::Sinr {
                        threshold: p.sinr_threshold,
                        noise: p.noise_power,
                        max_cover: max_coverage_count(p.sinr_threshold)?,
                        gain: p.pathloss_constant.powf(-p.pathloss_exponent),
                        half_beta,
                        integer_half_beta,
                    },
                )
            }
            CoverageModel::Boolean(p) => {
                p.validate()?;
                (
                    p.bs_intensity,
                    Rule::Boolean {
                        radius_sq: p.coverage_radius * p.coverage_radius,
                    },
                )
            }
        };
        let mean = intensity * PI * window_radius * window_radius;
        if mean > MAX_EXPECTED_STATIONS {
            return Err(Error::invalid(format!(
                "window radius {window_radius} holds {mean:e} stations on average (limit {MAX_EXPECTED_STATIONS:e}); raise the interference epsilon or shrink the window"
            )));
        }
        let count = Poisson::new(mean)
            .map_err(|e| Error::invalid(format!("cannot sample {mean} expected stations: {e}")))?;
        Ok(Self {
            rule,
            window_sq: window_radius * window_radius,
            count,
            shadowing,
        })
    }

    /// Coverage number of the typical user in one fresh network.
    pub fn coverage_count<R: Rng>(&self, rng: &mut R) -> usize {
        let stations = self.count.sample(rng) as u64;
        match &self.rule {
            Rule::Boolean { radius_sq } => (0..stations)
                .filter(|_| {
                    // 1 - U lies in (0, 1]
                    let r_sq = self.window_sq * (1.0 - rng.random::<f64>());
                    r_sq <= *radius_sq
                })
                .count(),
            Rule::Sinr {
                threshold,
                noise,
                max_cover,
                gain,
                half_beta,
                integer_half_beta,
            } => {
                // Only the strongest stations can be covered: a covered
                // station stays covered if its power is replaced by a larger
                // one, and at most `max_cover` stations exceed T.
                let mut strongest: Vec<f64> = Vec::with_capacity(*max_cover + 1);
                let mut total = 0.0;
                for _ in 0..stations {
                    let r_sq = self.window_sq * (1.0 - rng.random::<f64>());
                    let attenuation = match integer_half_beta {
                        Some(k) => r_sq.powi(-k),
                        None => r_sq.powf(-half_beta),
                    };
                    let power = self.shadowing.sample(rng) * gain * attenuation;
                    total += power;
                    if strongest.len() < *max_cover || power > strongest[strongest.len() - 1] {
                        let at = strongest.partition_point(|p| *p >= power);
                        strongest.insert(at, power);
                        strongest.truncate(*max_cover);
                    }
                }
                strongest
                    .iter()
                    .filter(|p| {
                        let interference = (noise + total - **p).max(0.0);
                        **p > threshold * interference
                    })
                    .count()
            }
        }
    }
}

/// One-shot draw of the coverage number; builds the sampler on every call.
pub fn coverage_count_once<R: Rng>(
    model: &CoverageModel,
    shadowing: Shadowing,
    window_radius: f64,
    rng: &mut R,
) -> Result<usize> {
    Ok(NetworkSampler::new(model, shadowing, window_radius)?.coverage_count(rng))
}

#[derive(Debug, Default, Clone)]
struct Tally {
    coverage: Vec<u64>,
    hits: u64,
}

impl Tally {
    fn record(&mut self, covered: usize, hit: bool) {
        if self.coverage.len() <= covered {
            self.coverage.resize(covered + 1, 0);
        }
        self.coverage[covered] += 1;
        self.hits += u64::from(hit);
    }

    fn merge(mut self, other: Tally) -> Tally {
        if self.coverage.len() < other.coverage.len() {
            self.coverage.resize(other.coverage.len(), 0);
        }
        for (a, b) in self.coverage.iter_mut().zip(other.coverage) {
            *a += b;
        }
        self.hits += other.hits;
        self
    }
}

fn replication_rng(seed: u64, replication: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64);
    rng
}

fn run(config: &SimulationConfig, with_requests: bool) -> Result<SimulationReport> {
    config.validate()?;
    let window = config.resolved_window_radius();
    let sampler = NetworkSampler::new(&config.model, config.shadowing, window)?;
    let policy = &config.policy;
    let popularity = &config.popularity;

    let tally = (0..config.replications)
        .into_par_iter()
        .fold(Tally::default, |mut tally, r| {
            let mut rng = replication_rng(config.seed, r);
            let covered = sampler.coverage_count(&mut rng);
            let mut hit = false;
            if with_requests && covered > 0 {
                let request = popularity.sample_index(rng.random::<f64>());
                for _ in 0..covered {
                    let u = rng.random::<f64>();
                    if policy.contains(u, request).expect("u drawn from [0, 1)") {
                        hit = true;
                        break;
                    }
                }
            }
            tally.record(covered, hit);
            tally
        })
        .reduce(Tally::default, Tally::merge);

    let n = config.replications as u64;
    let empirical_pmf = tally
        .coverage
        .iter()
        .enumerate()
        .map(|(m, &count)| {
            let e = Estimate::from_counts(count, n);
            PmfBin {
                coverage: m,
                count,
                frequency: e.value,
                standard_error: e.standard_error,
            }
        })
        .collect();
    Ok(SimulationReport {
        hit_rate: with_requests.then(|| Estimate::from_counts(tally.hits, n)),
        empirical_pmf,
        replications_used: config.replications,
        window_radius: window,
        truncated_interference_bound: config.truncated_interference_bound(),
    })
}

/// Empirical coverage pmf with per-bin standard errors.
pub fn estimate_coverage_pmf(config: &SimulationConfig) -> Result<SimulationReport> {
    run(config, false)
}

/// Simulated hit rate (plus the coverage pmf from the same networks).
pub fn estimate_hit_rate(config: &SimulationConfig) -> Result<SimulationReport> {
    run(config, true)
}
