use geocache::coverage::{max_coverage_count, BooleanModelParams, CoverageDistribution};
use geocache::optimizer::{mpc_policy, solve_2cp, solve_gcp};
use geocache::placement::PlacementPolicy;
use geocache::popularity::PopularityDistribution;
use geocache::simulator::{
    estimate_coverage_pmf, estimate_hit_rate, CoverageModel, Estimate, Shadowing, SimulationConfig,
    SimulationReport,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{scenario as scenario_error, Result};
use crate::output::{Cell, Rendered, Table};
use crate::scenario::{
    BooleanSpec, CoverageSpec, PolicySpec, Popularity, Scenario, SimulationSpec, SweepSpec,
    SweepVariable, Truncation,
};

fn simulation_seed(scenario: &Scenario) -> u64 {
    scenario.simulation.as_ref().map_or(0, |s| s.seed)
}

fn relative_gain(optimal: f64, mpc: f64) -> Option<f64> {
    (mpc > 0.0).then(|| (optimal - mpc) / mpc)
}

fn content_labels(popularity: &Popularity) -> Vec<String> {
    (1..=popularity.original.len())
        .map(|i| format!("b_{i}"))
        .collect()
}

fn forbid_sweep(scenario: &Scenario, command: &str) -> Result<()> {
    if scenario.sweep.is_some() {
        return Err(scenario_error(format!(
            "scenario has a sweep block; run `geocache sweep` instead of `{command}`"
        )));
    }
    Ok(())
}

// ---- solve -----------------------------------------------------------------

#[derive(Debug, Serialize)]
struct ContentRow {
    /// One-based position in the scenario's popularity list.
    content: usize,
    popularity: f64,
    optimal: f64,
    mpc: f64,
}

#[derive(Debug, Serialize)]
struct SolveOutput {
    cache_size: usize,
    dual_price: f64,
    hit_probability: f64,
    mpc_hit_probability: f64,
    relative_gain: Option<f64>,
    budget_residual: f64,
    outer_iterations: usize,
    inner_iterations: usize,
    degenerate_coverage: bool,
    contents: Vec<ContentRow>,
}

pub fn solve(scenario: &Scenario) -> Result<Rendered> {
    forbid_sweep(scenario, "solve")?;
    let popularity = scenario.popularity()?;
    let coverage = scenario.coverage.analytic()?.distribution;
    let k = scenario.cache_size;
    let solution = solve_gcp(&popularity.distribution, &coverage, k, scenario.tolerances)?;
    let (mpc, f_mpc) = mpc_policy(&popularity.distribution, &coverage, k)?;

    let optimal = popularity.to_input_order(solution.policy.probabilities());
    let mpc = popularity.to_input_order(mpc.probabilities());
    let weights = popularity.to_input_order(popularity.distribution.probabilities());
    let contents = (0..optimal.len())
        .map(|i| ContentRow {
            content: i + 1,
            popularity: weights[i],
            optimal: optimal[i],
            mpc: mpc[i],
        })
        .collect();
    let out = SolveOutput {
        cache_size: k,
        dual_price: solution.dual_price,
        hit_probability: solution.hit_probability,
        mpc_hit_probability: f_mpc,
        relative_gain: relative_gain(solution.hit_probability, f_mpc),
        budget_residual: solution.budget_residual,
        outer_iterations: solution.outer_iterations,
        inner_iterations: solution.inner_iterations,
        degenerate_coverage: solution.degenerate,
        contents,
    };

    let mut header: Vec<String> = [
        "hit_probability",
        "mpc_hit_probability",
        "relative_gain",
        "dual_price",
        "budget_residual",
    ]
    .map(String::from)
    .to_vec();
    header.extend(content_labels(&popularity));
    let mut table = Table::new(header);
    let mut row: Vec<Cell> = vec![
        out.hit_probability.into(),
        out.mpc_hit_probability.into(),
        out.relative_gain.into(),
        out.dual_price.into(),
        out.budget_residual.into(),
    ];
    row.extend(optimal.iter().map(|&b| Cell::from(b)));
    table.push(row);
    Rendered::new(&out, table)
}

// ---- coverage --------------------------------------------------------------

#[derive(Debug, Serialize)]
struct CoverageOutput {
    model: &'static str,
    pmf: Vec<f64>,
    mean_coverage: f64,
    max_coverage: usize,
    truncation_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    symmetric_sums: Option<Vec<f64>>,
}

fn model_name(spec: &CoverageSpec) -> &'static str {
    match spec {
        CoverageSpec::Sinr(_) => "sinr",
        CoverageSpec::Boolean(_) => "boolean",
        CoverageSpec::Pmf(_) => "pmf",
        CoverageSpec::TwoNetwork { .. } => "two_network",
    }
}

pub fn coverage(scenario: &Scenario) -> Result<Rendered> {
    forbid_sweep(scenario, "coverage")?;
    let analytic = scenario.coverage.analytic()?;
    let d = &analytic.distribution;
    let out = CoverageOutput {
        model: model_name(&scenario.coverage),
        pmf: d.pmf().to_vec(),
        mean_coverage: d.mean(),
        max_coverage: d.max_coverage(),
        truncation_error: d.truncation_error(),
        symmetric_sums: analytic.symmetric_sums.clone(),
    };
    let mut table = Table::new(["coverage", "probability", "symmetric_sum", "mean_coverage"]);
    for (m, p) in d.pmf().iter().enumerate() {
        let sum = match (&analytic.symmetric_sums, m) {
            (Some(s), m) if m >= 1 => s.get(m - 1).copied(),
            _ => None,
        };
        table.push(vec![
            m.into(),
            (*p).into(),
            sum.into(),
            out.mean_coverage.into(),
        ]);
    }
    Rendered::new(&out, table)
}

// ---- sweep -----------------------------------------------------------------

#[derive(Debug, Serialize)]
struct ThresholdRow {
    threshold: f64,
    rate_kbps: f64,
    hit_probability: f64,
    mpc_hit_probability: f64,
    relative_gain: Option<f64>,
    coverage_method: &'static str,
    max_coverage: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    policy: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct RatioRow {
    a1: f64,
    p1_over_p2: f64,
    p1: f64,
    p2: f64,
    b1: f64,
    b1_closed_form: f64,
    hit_probability: f64,
    mpc_hit_probability: f64,
    relative_gain: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Substitution {
    threshold: f64,
    reason: String,
    replications: usize,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct SweepMetadata {
    variable: SweepVariable,
    points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    bandwidth_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p0: Option<f64>,
    simulated_substitutions: Vec<Substitution>,
}

#[derive(Debug, Serialize)]
struct SweepOutput<R> {
    metadata: SweepMetadata,
    rows: Vec<R>,
}

/// `B_W / 2 * log2(1 + T)` in kbit/s.
pub fn shannon_rate_kbps(bandwidth_hz: f64, threshold: f64) -> f64 {
    bandwidth_hz * 0.5 * (1.0 + threshold).log2() / 1e3
}

pub fn sweep(scenario: &Scenario) -> Result<Rendered> {
    let spec = scenario
        .sweep
        .as_ref()
        .ok_or_else(|| scenario_error("scenario has no sweep block"))?;
    match spec.variable {
        SweepVariable::Threshold => threshold_sweep(scenario, spec),
        SweepVariable::P1OverP2 => ratio_sweep(scenario, spec),
    }
}

struct PointCoverage {
    distribution: CoverageDistribution,
    substitution: Option<Substitution>,
}

fn point_coverage(
    coverage: &CoverageSpec,
    popularity: &PopularityDistribution,
    sweep: &SweepSpec,
    simulation: Option<&SimulationSpec>,
    seed: u64,
) -> Result<PointCoverage> {
    match coverage {
        CoverageSpec::Sinr(s) => {
            let needed = max_coverage_count(s.threshold)?;
            if needed <= sweep.analytic_max_coverage {
                return Ok(PointCoverage {
                    distribution: coverage.analytic()?.distribution,
                    substitution: None,
                });
            }
            let mut config = SimulationConfig::new(
                CoverageModel::Sinr(s.params()?),
                popularity.clone(),
                PlacementPolicy::most_popular(popularity.library_size(), 1)?,
                sweep.fallback_replications,
                seed,
            );
            config.shadowing = s.shadowing;
            if let Some(sim) = simulation {
                config.window_radius = sim.window_radius;
                config.interference_epsilon = sim.interference_epsilon;
            }
            let report = estimate_coverage_pmf(&config)?;
            let pmf: Vec<f64> = report.empirical_pmf.iter().map(|b| b.frequency).collect();
            Ok(PointCoverage {
                distribution: CoverageDistribution::with_tolerance(pmf, 1e-9)?,
                substitution: Some(Substitution {
                    threshold: s.threshold,
                    reason: format!(
                        "{needed} coverage levels exceed the analytic limit of {}",
                        sweep.analytic_max_coverage
                    ),
                    replications: sweep.fallback_replications,
                    seed,
                }),
            })
        }
        CoverageSpec::TwoNetwork { first, second } => {
            let a = point_coverage(first, popularity, sweep, simulation, seed)?;
            let b = point_coverage(
                second,
                popularity,
                sweep,
                simulation,
                seed.wrapping_add(1 << 32),
            )?;
            Ok(PointCoverage {
                distribution: geocache::coverage::convolve(&a.distribution, &b.distribution),
                substitution: a.substitution.or(b.substitution),
            })
        }
        _ => Ok(PointCoverage {
            distribution: coverage.analytic()?.distribution,
            substitution: None,
        }),
    }
}

fn threshold_sweep(scenario: &Scenario, spec: &SweepSpec) -> Result<Rendered> {
    let popularity = scenario.popularity()?;
    let pop = &popularity.distribution;
    let k = scenario.cache_size;
    let tol = scenario.tolerances;
    let base_seed = simulation_seed(scenario);
    let grid = spec.grid();

    let results: Vec<(ThresholdRow, Option<Substitution>)> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let coverage = scenario.coverage.with_threshold(t)?;
            let point = point_coverage(
                &coverage,
                pop,
                spec,
                scenario.simulation.as_ref(),
                base_seed.wrapping_add(i as u64),
            )?;
            let d = &point.distribution;
            let solution = solve_gcp(pop, d, k, tol)?;
            let (_, f_mpc) = mpc_policy(pop, d, k)?;
            let row = ThresholdRow {
                threshold: t,
                rate_kbps: shannon_rate_kbps(spec.bandwidth_hz, t),
                hit_probability: solution.hit_probability,
                mpc_hit_probability: f_mpc,
                relative_gain: relative_gain(solution.hit_probability, f_mpc),
                coverage_method: if point.substitution.is_some() {
                    "simulated"
                } else {
                    "analytic"
                },
                max_coverage: d.max_coverage(),
                policy: spec
                    .include_policy
                    .then(|| popularity.to_input_order(solution.policy.probabilities())),
            };
            Ok((row, point.substitution))
        })
        .collect::<Result<_>>()?;

    let mut header: Vec<String> = [
        "threshold",
        "rate_kbps",
        "hit_probability",
        "mpc_hit_probability",
        "relative_gain",
        "coverage_method",
        "max_coverage",
    ]
    .map(String::from)
    .to_vec();
    if spec.include_policy {
        header.extend(content_labels(&popularity));
    }
    let mut table = Table::new(header);
    let mut rows = Vec::with_capacity(results.len());
    let mut substitutions = Vec::new();
    for (row, sub) in results {
        let mut cells: Vec<Cell> = vec![
            row.threshold.into(),
            row.rate_kbps.into(),
            row.hit_probability.into(),
            row.mpc_hit_probability.into(),
            row.relative_gain.into(),
            row.coverage_method.into(),
            row.max_coverage.into(),
        ];
        if let Some(b) = &row.policy {
            cells.extend(b.iter().map(|&x| Cell::from(x)));
        }
        table.push(cells);
        rows.push(row);
        substitutions.extend(sub);
    }
    let out = SweepOutput {
        metadata: SweepMetadata {
            variable: spec.variable,
            points: spec.points,
            bandwidth_hz: Some(spec.bandwidth_hz),
            p0: None,
            simulated_substitutions: substitutions,
        },
        rows,
    };
    Rendered::new(&out, table)
}

fn ratio_sweep(scenario: &Scenario, spec: &SweepSpec) -> Result<Rendered> {
    let a1_values = match &spec.a1 {
        Some(values) => values.clone(),
        None => {
            let pop = scenario.popularity()?.distribution;
            if pop.library_size() != 2 {
                return Err(scenario_error(
                    "a p1_over_p2 sweep needs `a1` values or a two-content popularity",
                ));
            }
            vec![pop.probability(0)]
        }
    };
    let tol = scenario.tolerances;
    let grid = spec.grid();
    let points: Vec<(f64, f64)> = a1_values
        .iter()
        .flat_map(|&a1| grid.iter().map(move |&r| (a1, r)))
        .collect();

    let rows: Vec<RatioRow> = points
        .par_iter()
        .map(|&(a1, ratio)| {
            if !(0.5..=1.0).contains(&a1) {
                return Err(scenario_error(format!("a1 must lie in [0.5, 1], got {a1}")));
            }
            let covered = 1.0 - spec.p0;
            let p2 = covered / (1.0 + ratio);
            let p1 = covered - p2;
            let pop = PopularityDistribution::from_weights(&[a1, 1.0 - a1])?;
            let cov = CoverageDistribution::new(vec![spec.p0, p1, p2])?;
            let solution = solve_gcp(&pop, &cov, 1, tol)?;
            let (_, f_mpc) = mpc_policy(&pop, &cov, 1)?;
            Ok(RatioRow {
                a1,
                p1_over_p2: ratio,
                p1,
                p2,
                b1: solution.policy.probabilities()[0],
                b1_closed_form: solve_2cp(a1, p1, p2)?,
                hit_probability: solution.hit_probability,
                mpc_hit_probability: f_mpc,
                relative_gain: relative_gain(solution.hit_probability, f_mpc),
            })
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new([
        "a1",
        "p1_over_p2",
        "p1",
        "p2",
        "b1",
        "b1_closed_form",
        "hit_probability",
        "mpc_hit_probability",
        "relative_gain",
    ]);
    for r in &rows {
        table.push(vec![
            r.a1.into(),
            r.p1_over_p2.into(),
            r.p1.into(),
            r.p2.into(),
            r.b1.into(),
            r.b1_closed_form.into(),
            r.hit_probability.into(),
            r.mpc_hit_probability.into(),
            r.relative_gain.into(),
        ]);
    }
    let out = SweepOutput {
        metadata: SweepMetadata {
            variable: spec.variable,
            points: rows.len(),
            bandwidth_hz: None,
            p0: Some(spec.p0),
            simulated_substitutions: Vec::new(),
        },
        rows,
    };
    Rendered::new(&out, table)
}

// ---- simulate --------------------------------------------------------------

#[derive(Debug, Serialize)]
struct Comparison {
    quantity: String,
    simulated: f64,
    standard_error: f64,
    analytic: Option<f64>,
    z_score: Option<f64>,
}

#[derive(Debug, Serialize)]
struct AnalyticValues {
    pmf: Option<Vec<f64>>,
    hit_probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    unavailable: Option<String>,
}

#[derive(Debug, Serialize)]
struct SimulateOutput {
    policy: Vec<f64>,
    report: SimulationReport,
    analytic: AnalyticValues,
    comparison: Vec<Comparison>,
}

// Analytic bins below this mass are left out of the comparison unless the
// simulation observed them.
const NEGLIGIBLE_MASS: f64 = 1e-12;

/// z-score of a simulated frequency; when nothing (or everything) was
/// observed the empirical standard error is zero and the standard error
/// under the analytic value is used instead.
fn z_score(est: Estimate, reference: f64, trials: f64) -> f64 {
    if est.standard_error > 0.0 {
        return est.z_score(reference);
    }
    let null = (reference * (1.0 - reference) / trials).sqrt();
    if null > 0.0 {
        (est.value - reference) / null
    } else {
        est.z_score(reference)
    }
}

/// Boolean pmf with the truncation raised until the dropped tail is
/// negligible, for comparison against uncapped simulated counts.
fn untruncated_boolean(spec: &BooleanSpec) -> Result<CoverageDistribution> {
    let mut params: BooleanModelParams = spec.params()?;
    loop {
        match geocache::coverage::boolean_coverage(&params) {
            Ok(d) => return Ok(d),
            Err(_) if params.truncation < 100_000 => params.truncation *= 2,
            Err(e) => return Err(e.into()),
        }
    }
}

pub fn simulate(scenario: &Scenario) -> Result<Rendered> {
    let sim = scenario
        .simulation
        .clone()
        .ok_or_else(|| scenario_error("scenario has no simulation block"))?;
    let popularity = scenario.popularity()?;
    let pop = &popularity.distribution;
    let k = scenario.cache_size;

    let (model, shadowing, analytic) = match &scenario.coverage {
        CoverageSpec::Sinr(s) => {
            let analytic = scenario.coverage.analytic().map(|a| a.distribution);
            (CoverageModel::Sinr(s.params()?), s.shadowing, analytic)
        }
        CoverageSpec::Boolean(b) => {
            let analytic = match b.truncation_mode {
                Truncation::Strict => untruncated_boolean(b),
                Truncation::Capped => Err(scenario_error(
                    "capped truncation is not the law of the simulated count",
                )),
            };
            (
                CoverageModel::Boolean(b.params()?),
                Shadowing::None,
                analytic,
            )
        }
        _ => {
            return Err(scenario_error(
                "simulation needs a single sinr or boolean network",
            ))
        }
    };

    let policy = match &sim.policy {
        PolicySpec::Optimal => {
            let d = analytic.as_ref().map_err(|e| {
                scenario_error(format!("the optimal policy needs an analytic pmf: {e}"))
            })?;
            solve_gcp(pop, d, k, scenario.tolerances)?.policy
        }
        PolicySpec::Mpc => PlacementPolicy::most_popular(pop.library_size(), k)?,
        PolicySpec::Explicit(b) => {
            if b.len() != pop.library_size() {
                return Err(geocache::Error::DimensionMismatch {
                    context: "explicit policy",
                    expected: pop.library_size(),
                    found: b.len(),
                }
                .into());
            }
            PlacementPolicy::new(popularity.to_solver_order(b), k)?
        }
    };

    let mut config = SimulationConfig::new(
        model,
        pop.clone(),
        policy.clone(),
        sim.replications,
        simulation_seed(scenario),
    );
    config.shadowing = shadowing;
    config.window_radius = sim.window_radius;
    config.interference_epsilon = sim.interference_epsilon;
    let report = estimate_hit_rate(&config)?;

    let (analytic_pmf, analytic_hit, unavailable) = match &analytic {
        Ok(d) => (
            Some(d.pmf().to_vec()),
            Some(geocache::optimizer::hit_probability(&policy, pop, d)?),
            None,
        ),
        Err(e) => (None, None, Some(e.to_string())),
    };

    let trials = report.replications_used as f64;
    let compare = |quantity: String, est: Estimate, reference: Option<f64>| Comparison {
        quantity,
        simulated: est.value,
        standard_error: est.standard_error,
        analytic: reference,
        z_score: reference.map(|r| z_score(est, r, trials)),
    };
    let mut comparison = vec![compare(
        "hit_rate".into(),
        report.hit_rate.expect("hit rate requested"),
        analytic_hit,
    )];
    let analytic_bins = analytic_pmf.as_ref().map_or(0, |p| {
        p.iter()
            .rposition(|&x| x >= NEGLIGIBLE_MASS)
            .map_or(0, |i| i + 1)
    });
    let bins = report.empirical_pmf.len().max(analytic_bins);
    for m in 0..bins {
        let reference = analytic_pmf
            .as_ref()
            .map(|p| p.get(m).copied().unwrap_or(0.0));
        comparison.push(compare(format!("p_{m}"), report.frequency(m), reference));
    }

    let mut table = Table::new([
        "quantity",
        "simulated",
        "standard_error",
        "analytic",
        "z_score",
    ]);
    for c in &comparison {
        table.push(vec![
            c.quantity.as_str().into(),
            c.simulated.into(),
            c.standard_error.into(),
            c.analytic.into(),
            c.z_score.into(),
        ]);
    }
    let out = SimulateOutput {
        policy: popularity.to_input_order(policy.probabilities()),
        report,
        analytic: AnalyticValues {
            pmf: analytic_pmf,
            hit_probability: analytic_hit,
            unavailable,
        },
        comparison,
    };
    Rendered::new(&out, table)
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;

    fn parse(text: &str) -> Scenario {
        Scenario::parse(text, Path::new("test.json")).unwrap()
    }

    #[test]
    fn shannon_rate() {
        assert!((shannon_rate_kbps(5e6, 1.0) - 2500.0).abs() < 1e-9);
        assert!((shannon_rate_kbps(5e6, 3.0) - 5000.0).abs() < 1e-9);
    }

    #[test]
    fn two_content_solve() {
        let s = parse(
            r#"{"version": 1,
                "popularity": {"weights": {"values": [0.6, 0.4]}},
                "coverage": {"pmf": [0.05, 0.475, 0.475]},
                "cache_size": 1}"#,
        );
        let out = solve(&s).unwrap().json;
        assert!((out["hit_probability"].as_f64().unwrap() - 0.61275).abs() < 1e-9);
        assert!((out["mpc_hit_probability"].as_f64().unwrap() - 0.57).abs() < 1e-12);
        assert!((out["contents"][0]["optimal"].as_f64().unwrap() - 0.7).abs() < 1e-9);
        let gain = out["relative_gain"].as_f64().unwrap();
        assert!((gain - (0.61275 - 0.57) / 0.57).abs() < 1e-8);
    }

    #[test]
    fn sorted_weights_map_back() {
        let s = parse(
            r#"{"version": 1,
                "popularity": {"weights": {"values": [0.4, 0.6], "sort": true}},
                "coverage": {"pmf": [0.05, 0.475, 0.475]},
                "cache_size": 1}"#,
        );
        let out = solve(&s).unwrap().json;
        assert!((out["contents"][0]["optimal"].as_f64().unwrap() - 0.3).abs() < 1e-9);
        assert!((out["contents"][1]["optimal"].as_f64().unwrap() - 0.7).abs() < 1e-9);
        assert_eq!(out["contents"][1]["mpc"].as_f64().unwrap(), 1.0);
    }

    #[test]
    fn sinr_coverage_reports_symmetric_sums() {
        let s = parse(
            r#"{"version": 1,
                "popularity": {"zipf": {"library_size": 3, "exponent": 1.0}},
                "coverage": {"sinr": {"bs_intensity": 1.0, "pathloss_exponent": 4.0, "threshold": 1.0}},
                "cache_size": 1}"#,
        );
        let out = coverage(&s).unwrap();
        let p1 = out.json["pmf"][1].as_f64().unwrap();
        assert!((p1 - 2.0 / std::f64::consts::PI).abs() < 1e-9);
        assert_eq!(out.json["symmetric_sums"].as_array().unwrap().len(), 1);
        assert_eq!(out.table.rows.len(), 2);
    }

    #[test]
    fn sweep_forbidden_in_solve() {
        let s = parse(
            r#"{"version": 1,
                "popularity": {"weights": {"values": [0.6, 0.4]}},
                "coverage": {"pmf": [0.05, 0.475, 0.475]},
                "cache_size": 1,
                "sweep": {"variable": "p1_over_p2", "start": 0.01, "end": 100, "points": 3}}"#,
        );
        assert!(solve(&s).is_err());
        let out = sweep(&s).unwrap();
        assert_eq!(out.table.rows.len(), 3);
    }
}
