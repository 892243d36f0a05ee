use mftree::fidelity::{BiasModel, CostFunction};
use mftree::theory::{self, NearOptimalityParams};
use proptest::prelude::*;

proptest! {
    #[test]
    fn n_lambda_grows_with_budget(
        a in 0.1f64..200.0,
        extra in 0.0f64..100.0,
        c in 0.05f64..3.0,
        nu in 0.05f64..2.0,
        rho in 0.2f64..0.95,
    ) {
        let cost = CostFunction::power(0.05, 1.0, 2.0);
        let bias = BiasModel::linear(c);
        prop_assert!(theory::n_lambda(a, &cost, &bias, nu, rho) <= theory::n_lambda(a + extra, &cost, &bias, nu, rho));
    }

    #[test]
    fn n_lambda_shrinks_with_dearer_costs(
        budget in 0.1f64..200.0,
        offset in 0.01f64..0.5,
        bump in 0.0f64..0.5,
        exponent in 1.0f64..4.0,
        c in 0.05f64..3.0,
        nu in 0.05f64..2.0,
        rho in 0.2f64..0.95,
    ) {
        let cheap = CostFunction::power(offset, 1.0, exponent);
        let dear = CostFunction::power(offset + bump, 1.0, exponent);
        let bias = BiasModel::linear(c);
        prop_assert!(theory::n_lambda(budget, &dear, &bias, nu, rho) <= theory::n_lambda(budget, &cheap, &bias, nu, rho));
    }

    #[test]
    fn unit_cost_bound_is_the_single_fidelity_rate(
        queries in 2u64..100_000,
        top in 0.1f64..10.0,
        d in 0.0f64..4.0,
        cst in 0.1f64..10.0,
        sigma in 0.01f64..2.0,
    ) {
        // a budget buying exactly `queries` top-fidelity evaluations
        let budget = queries as f64 * top;
        let n = (budget / top).round() as u64;
        let p = NearOptimalityParams::new(1.0, 0.5, d, cst);
        let got = theory::simple_regret_bound(n, &p, sigma);
        let ratio = budget / top;
        let want = (cst * sigma * sigma * ratio.ln() / ratio).powf(1.0 / (d + 2.0));
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0));
    }
}
