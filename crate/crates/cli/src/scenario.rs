//! JSON scenario documents and their conversion into model objects.

use std::path::Path;

use geocache::coverage::{
    boolean_coverage, boolean_coverage_capped, convolve, sinr_coverage_detailed,
    BooleanModelParams, CoverageDistribution, SinrModelParams, DEFAULT_DIMENSION_CAP,
    DEFAULT_QUADRATURE_POINTS,
};
use geocache::optimizer::SolverTolerances;
use geocache::popularity::PopularityDistribution;
use geocache::simulator::{Shadowing, DEFAULT_INTERFERENCE_EPSILON};
use serde::{Deserialize, Serialize};

use crate::error::{scenario, CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub popularity: PopularitySpec,
    pub coverage: CoverageSpec,
    pub cache_size: usize,
    #[serde(default)]
    pub tolerances: SolverTolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PopularitySpec {
    Zipf {
        library_size: usize,
        exponent: f64,
    },
    /// Request weights. Unless `sort` is set they must already be listed
    /// from most to least popular.
    Weights {
        values: Vec<f64>,
        #[serde(default)]
        sort: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CoverageSpec {
    Sinr(SinrSpec),
    Boolean(BooleanSpec),
    Pmf(Vec<f64>),
    TwoNetwork {
        first: Box<CoverageSpec>,
        second: Box<CoverageSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinrSpec {
    pub bs_intensity: f64,
    pub pathloss_exponent: f64,
    #[serde(default = "one")]
    pub pathloss_constant: f64,
    #[serde(default)]
    pub noise_power: f64,
    pub threshold: f64,
    #[serde(default)]
    pub shadowing: Shadowing,
    #[serde(default = "default_points")]
    pub quadrature_points: usize,
    #[serde(default)]
    pub qmc_seed: u64,
    #[serde(default = "default_cap")]
    pub dimension_cap: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Reject truncations that drop more than 1e-9 of the Poisson mass.
    #[default]
    Strict,
    /// Lump the tail into the last bin.
    Capped,
}

/// Either `radius` or `threshold` (with the path-loss law) fixes the disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BooleanSpec {
    pub bs_intensity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default = "four")]
    pub pathloss_exponent: f64,
    #[serde(default = "one")]
    pub pathloss_constant: f64,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    #[serde(default)]
    pub truncation_mode: Truncation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySpec {
    Optimal,
    Mpc,
    /// Caching probabilities in the order the popularity was given.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_radius: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub interference_epsilon: f64,
    #[serde(default = "default_policy")]
    pub policy: PolicySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Threshold,
    P1OverP2,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub start: f64,
    pub end: f64,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
    /// No-coverage probability for the two-content ratio sweep.
    #[serde(default = "default_p0")]
    pub p0: f64,
    /// Values of `a_1` for the ratio sweep; defaults to the scenario's own
    /// two-content popularity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<Vec<f64>>,
    #[serde(default)]
    pub include_policy: bool,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    /// SINR points needing more than this many coverage levels use a
    /// simulated pmf.
    #[serde(default = "default_analytic_cap")]
    pub analytic_max_coverage: usize,
    #[serde(default = "default_replications")]
    pub fallback_replications: usize,
}

fn one() -> f64 {
    1.0
}
fn four() -> f64 {
    4.0
}
fn default_points() -> usize {
    DEFAULT_QUADRATURE_POINTS
}
fn default_cap() -> usize {
    DEFAULT_DIMENSION_CAP
}
fn default_truncation() -> usize {
    10
}
fn default_replications() -> usize {
    100_000
}
fn default_epsilon() -> f64 {
    DEFAULT_INTERFERENCE_EPSILON
}
fn default_policy() -> PolicySpec {
    PolicySpec::Optimal
}
fn default_p0() -> f64 {
    0.05
}
fn default_bandwidth() -> f64 {
    5e6
}
fn default_analytic_cap() -> usize {
    4
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            replications: default_replications(),
            seed: 0,
            window_radius: None,
            interference_epsilon: default_epsilon(),
            policy: default_policy(),
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            CliError::Parse {
                path: path.to_path_buf(),
                field,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(scenario(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.version
            )));
        }
        if self.cache_size == 0 {
            return Err(scenario("cache_size must be at least 1"));
        }
        self.coverage.validate()?;
        if let Some(sweep) = &self.sweep {
            sweep.validate()?;
        }
        if let Some(sim) = &self.simulation {
            if sim.replications == 0 {
                return Err(scenario("simulation.replications must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn popularity(&self) -> Result<Popularity> {
        Popularity::from_spec(&self.popularity)
    }
}

/// A popularity law in solver order together with the original position
/// of every entry.
#[derive(Debug, Clone)]
pub struct Popularity {
    pub distribution: PopularityDistribution,
    /// `original[i]` is the input position of the `i`-th most popular content.
    pub original: Vec<usize>,
}

/// Sorts weights from most to least popular (stable on ties) and returns
/// them with the permutation that produced them.
pub fn sort_weights(weights: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| weights[j].total_cmp(&weights[i]));
    (order.iter().map(|&i| weights[i]).collect(), order)
}

impl Popularity {
    pub fn from_spec(spec: &PopularitySpec) -> Result<Self> {
        match spec {
            PopularitySpec::Zipf {
                library_size,
                exponent,
            } => Ok(Self {
                distribution: PopularityDistribution::zipf(*library_size, *exponent)?,
                original: (0..*library_size).collect(),
            }),
            PopularitySpec::Weights { values, sort } => {
                let (sorted, original) = if *sort {
                    sort_weights(values)
                } else {
                    (values.clone(), (0..values.len()).collect())
                };
                Ok(Self {
                    distribution: PopularityDistribution::from_weights(&sorted)?,
                    original,
                })
            }
        }
    }

    /// Reorders per-content values from solver order back to input order.
    pub fn to_input_order(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        for (i, &pos) in self.original.iter().enumerate() {
            out[pos] = values[i];
        }
        out
    }

    /// Reorders per-content values from input order to solver order.
    pub fn to_solver_order(&self, values: &[f64]) -> Vec<f64> {
        self.original.iter().map(|&pos| values[pos]).collect()
    }
}

/// Analytic pmf plus the SINR audit values when they exist.
#[derive(Debug, Clone)]
pub struct AnalyticCoverage {
    pub distribution: CoverageDistribution,
    pub symmetric_sums: Option<Vec<f64>>,
}

impl CoverageSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            CoverageSpec::Boolean(b) => {
                if b.radius.is_some() == b.threshold.is_some() {
                    return Err(scenario(
                        "boolean coverage needs exactly one of `radius` or `threshold`",
                    ));
                }
            }
            CoverageSpec::TwoNetwork { first, second } => {
                first.validate()?;
                second.validate()?;
            }
            CoverageSpec::Sinr(_) | CoverageSpec::Pmf(_) => {}
        }
        Ok(())
    }

    /// Copy with every SINR threshold (and threshold-defined Boolean disk)
    /// replaced by `threshold`.
    pub fn with_threshold(&self, threshold: f64) -> Result<CoverageSpec> {
        match self {
            CoverageSpec::Sinr(s) => Ok(CoverageSpec::Sinr(SinrSpec {
                threshold,
                ..s.clone()
            })),
            CoverageSpec::Boolean(b) if b.threshold.is_some() => {
                Ok(CoverageSpec::Boolean(BooleanSpec {
                    threshold: Some(threshold),
                    ..b.clone()
                }))
            }
            CoverageSpec::Boolean(_) => Err(scenario(
                "a threshold sweep needs a boolean model defined by `threshold`, not `radius`",
            )),
            CoverageSpec::Pmf(_) => Err(scenario("an explicit pmf has no threshold to sweep")),
            CoverageSpec::TwoNetwork { first, second } => Ok(CoverageSpec::TwoNetwork {
                first: Box::new(first.with_threshold(threshold)?),
                second: Box::new(second.with_threshold(threshold)?),
            }),
        }
    }

    pub fn analytic(&self) -> Result<AnalyticCoverage> {
        match self {
            CoverageSpec::Sinr(s) => {
                let detailed = sinr_coverage_detailed(&s.params()?)?;
                Ok(AnalyticCoverage {
                    distribution: detailed.distribution,
                    symmetric_sums: Some(detailed.symmetric_sums),
                })
            }
            CoverageSpec::Boolean(b) => {
                let params = b.params()?;
                let distribution = match b.truncation_mode {
                    Truncation::Strict => boolean_coverage(&params)?,
                    Truncation::Capped => boolean_coverage_capped(&params)?,
                };
                Ok(AnalyticCoverage {
                    distribution,
                    symmetric_sums: None,
                })
            }
            CoverageSpec::Pmf(pmf) => Ok(AnalyticCoverage {
                distribution: CoverageDistribution::new(pmf.clone())?,
                symmetric_sums: None,
            }),
            CoverageSpec::TwoNetwork { first, second } => Ok(AnalyticCoverage {
                distribution: convolve(
                    &first.analytic()?.distribution,
                    &second.analytic()?.distribution,
                ),
                symmetric_sums: None,
            }),
        }
    }
}

impl SinrSpec {
    pub fn params(&self) -> Result<SinrModelParams> {
        let mut params = SinrModelParams::new(
            self.bs_intensity,
            self.pathloss_exponent,
            self.pathloss_constant,
            self.noise_power,
            self.threshold,
        )?
        .with_shadowing_moment(self.shadowing.analytic_moment(self.pathloss_exponent));
        params.quadrature_points = self.quadrature_points;
        params.qmc_seed = self.qmc_seed;
        params.dimension_cap = self.dimension_cap;
        params.validate()?;
        Ok(params)
    }
}

impl BooleanSpec {
    pub fn params(&self) -> Result<BooleanModelParams> {
        let params = match (self.radius, self.threshold) {
            (Some(r), None) => BooleanModelParams::new(self.bs_intensity, r, self.truncation)?,
            (None, Some(t)) => BooleanModelParams::from_threshold(
                self.bs_intensity,
                t,
                self.pathloss_exponent,
                self.pathloss_constant,
                self.truncation,
            )?,
            _ => {
                return Err(scenario(
                    "boolean coverage needs exactly one of `radius` or `threshold`",
                ))
            }
        };
        Ok(params)
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite()
            && self.end.is_finite()
            && self.start > 0.0
            && self.end > self.start)
        {
            return Err(scenario(format!(
                "sweep range must be positive and ordered, got [{}, {}]",
                self.start, self.end
            )));
        }
        if self.points < 2 {
            return Err(scenario("sweep needs at least 2 points"));
        }
        if !(0.0..1.0).contains(&self.p0) {
            return Err(scenario(format!(
                "sweep p0 must lie in [0, 1), got {}",
                self.p0
            )));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(scenario("sweep bandwidth must be positive"));
        }
        if self.fallback_replications == 0 {
            return Err(scenario("sweep fallback_replications must be at least 1"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Linear => self.start + t * (self.end - self.start),
                    Spacing::Log => (self.start.ln() + t * (self.end.ln() - self.start.ln())).exp(),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "version": 1,
        "popularity": {"zipf": {"library_size": 3, "exponent": 0.8}},
        "coverage": {"pmf": [0.2, 0.5, 0.3]},
        "cache_size": 1
    }"#;

    #[test]
    fn parses_minimal_scenario() {
        let s = Scenario::parse(MINIMAL, Path::new("s.json")).unwrap();
        assert_eq!(s.cache_size, 1);
        assert_eq!(s.tolerances, SolverTolerances::default());
        assert!(s.simulation.is_none() && s.sweep.is_none());
    }

    #[test]
    fn parse_error_names_field_and_line() {
        let text = MINIMAL.replace("\"exponent\": 0.8", "\"exponent\": \"x\"");
        let err = Scenario::parse(&text, Path::new("s.json")).unwrap_err();
        match err {
            CliError::Parse { field, line, .. } => {
                assert_eq!(field, "popularity.zipf.exponent");
                assert_eq!(line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = MINIMAL.replace("\"cache_size\"", "\"cache_sise\"");
        let err = Scenario::parse(&text, Path::new("s.json")).unwrap_err();
        assert!(err.to_string().contains("cache_sise"), "{err}");
    }

    #[test]
    fn rejects_wrong_version_and_bad_sweep() {
        let text = MINIMAL.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(
            Scenario::parse(&text, Path::new("s")),
            Err(CliError::Scenario(_))
        ));
        let mut s = Scenario::parse(MINIMAL, Path::new("s")).unwrap();
        s.sweep = Some(SweepSpec {
            variable: SweepVariable::Threshold,
            start: 2.0,
            end: 1.0,
            points: 5,
            spacing: Spacing::Log,
            p0: 0.05,
            a1: None,
            include_policy: false,
            bandwidth_hz: 5e6,
            analytic_max_coverage: 4,
            fallback_replications: 10,
        });
        assert!(s.validate().is_err());
    }

    #[test]
    fn boolean_needs_one_radius_source() {
        let spec = CoverageSpec::Boolean(BooleanSpec {
            bs_intensity: 1.0,
            radius: Some(1.0),
            threshold: Some(1.0),
            pathloss_exponent: 4.0,
            pathloss_constant: 1.0,
            truncation: 10,
            truncation_mode: Truncation::Strict,
        });
        assert!(spec.validate().is_err());
    }

    #[test]
    fn sorted_weights_round_trip() {
        let (sorted, order) = sort_weights(&[1.0, 3.0, 2.0, 3.0]);
        assert_eq!(sorted, vec![3.0, 3.0, 2.0, 1.0]);
        assert_eq!(order, vec![1, 3, 2, 0]);
        let pop = Popularity::from_spec(&PopularitySpec::Weights {
            values: vec![1.0, 3.0, 2.0],
            sort: true,
        })
        .unwrap();
        let solver = [0.9, 0.5, 0.1];
        let input = pop.to_input_order(&solver);
        assert_eq!(input, vec![0.1, 0.9, 0.5]);
        assert_eq!(pop.to_solver_order(&input), solver.to_vec());
    }

    #[test]
    fn unsorted_weights_rejected_without_sort() {
        let spec = PopularitySpec::Weights {
            values: vec![1.0, 3.0],
            sort: false,
        };
        assert!(matches!(
            Popularity::from_spec(&spec),
            Err(CliError::Model(geocache::Error::OrderingViolation { .. }))
        ));
    }

    #[test]
    fn grids() {
        let mut sweep = SweepSpec {
            variable: SweepVariable::P1OverP2,
            start: 0.01,
            end: 100.0,
            points: 5,
            spacing: Spacing::Log,
            p0: 0.05,
            a1: None,
            include_policy: false,
            bandwidth_hz: 5e6,
            analytic_max_coverage: 4,
            fallback_replications: 10,
        };
        let g = sweep.grid();
        for (x, e) in g.iter().zip([0.01, 0.1, 1.0, 10.0, 100.0]) {
            assert!((x / e - 1.0).abs() < 1e-12);
        }
        sweep.spacing = Spacing::Linear;
        sweep.start = 1.0;
        sweep.end = 3.0;
        assert_eq!(sweep.grid(), vec![1.0, 1.5, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn two_network_convolves() {
        let spec = CoverageSpec::TwoNetwork {
            first: Box::new(CoverageSpec::Pmf(vec![0.5, 0.5])),
            second: Box::new(CoverageSpec::Pmf(vec![0.5, 0.5])),
        };
        let d = spec.analytic().unwrap().distribution;
        assert_eq!(d.pmf(), &[0.25, 0.5, 0.25]);
    }
}
