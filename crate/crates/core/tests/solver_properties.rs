use geocache::coverage::CoverageDistribution;
use geocache::optimizer::{
    hit_probability, mpc_policy, primal_response, solve_gcp, SolverTolerances,
};
use geocache::placement::PlacementPolicy;
use geocache::popularity::PopularityDistribution;
use proptest::prelude::*;

fn pmf_strategy() -> impl Strategy<Value = CoverageDistribution> {
    prop::collection::vec(0.0f64..1.0, 2..7).prop_map(|mut w| {
        w[1] += 1e-3;
        let total: f64 = w.iter().sum();
        CoverageDistribution::new(w.into_iter().map(|x| x / total).collect()).unwrap()
    })
}

fn instance() -> impl Strategy<Value = (PopularityDistribution, CoverageDistribution, usize)> {
    (2usize..30, 0.0f64..2.0, pmf_strategy()).prop_flat_map(|(j, gamma, cov)| {
        (1..j).prop_map(move |k| {
            (
                PopularityDistribution::zipf(j, gamma).unwrap(),
                cov.clone(),
                k,
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn optimum_beats_mpc_and_spends_budget((pop, cov, k) in instance()) {
        let sol = solve_gcp(&pop, &cov, k, SolverTolerances::default()).unwrap();
        let (_, f_mpc) = mpc_policy(&pop, &cov, k).unwrap();
        prop_assert!(sol.hit_probability >= f_mpc - 1e-9);
        prop_assert!(sol.budget_residual < 1e-8 * pop.library_size() as f64);
        let spent: f64 = sol.policy.probabilities().iter().sum();
        prop_assert!((spent - k as f64).abs() < 1e-8 * pop.library_size() as f64);
    }

    #[test]
    fn optimum_beats_random_feasible((pop, cov, k) in instance(), seed in prop::collection::vec(0.0f64..1.0, 30)) {
        let sol = solve_gcp(&pop, &cov, k, SolverTolerances::default()).unwrap();
        let mut b: Vec<f64> = seed[..pop.library_size()].to_vec();
        let total: f64 = b.iter().sum();
        if total > k as f64 {
            b.iter_mut().for_each(|x| *x *= k as f64 / total);
        }
        let f = hit_probability(&PlacementPolicy::new(b, k).unwrap(), &pop, &cov).unwrap();
        prop_assert!(sol.hit_probability >= f - 1e-9);
    }

    #[test]
    fn more_popular_content_cached_more((pop, cov, k) in instance()) {
        let sol = solve_gcp(&pop, &cov, k, SolverTolerances::default()).unwrap();
        let b = sol.policy.probabilities();
        for w in b.windows(2) {
            prop_assert!(w[0] >= w[1] - 1e-9);
        }
    }

    #[test]
    fn response_monotone_in_price(cov in pmf_strategy(), a in 0.01f64..1.0, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let top = a * cov.mean();
        let (lo, hi) = if x < y { (x * top, y * top) } else { (y * top, x * top) };
        let b_lo = primal_response(lo, a, &cov, 1e-12).unwrap();
        let b_hi = primal_response(hi, a, &cov, 1e-12).unwrap();
        prop_assert!(b_lo >= b_hi - 1e-12);
    }
}
