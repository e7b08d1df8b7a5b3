use failcast_core::bayesnet::DependencyParams;
use failcast_core::forecast::{window_probability, ForecastMode};
use failcast_core::fusion::{invert_service_to_failure, CaseId};
use failcast_core::mcmc::split_rhat;
use failcast_core::warranty::{cost_gradient, grid_search_warranty, warranty_cost, WarrantyCostModel};
use failcast_core::{seed, WeibullParams};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = WeibullParams> {
    (0.5f64..6.0, 1_000.0f64..300_000.0).prop_map(|(alpha, beta)| WeibullParams { alpha, beta })
}

fn model() -> impl Strategy<Value = WarrantyCostModel> {
    (1.0f64..1_000.0, 0.1f64..5.0, 1e-7f64..1e-4).prop_map(|(replacement_cost, penalty_base, penalty_decay)| {
        WarrantyCostModel { replacement_cost, penalty_base, penalty_decay }
    })
}

proptest! {
    #[test]
    fn cost_is_positive_and_bounded(p in params(), m in model(), w in 0.0f64..2e6) {
        let c = warranty_cost(w, &p, &m);
        prop_assert!(c > 0.0);
        prop_assert!(c <= m.replacement_cost * m.penalty_base.max(1.0) * (1.0 + 1e-12));
    }

    #[test]
    fn gradient_matches_central_differences(p in params(), m in model(), frac in 0.05f64..3.0) {
        let w = frac * p.beta;
        let h = w * 1e-6;
        let fd = (warranty_cost(w + h, &p, &m) - warranty_cost(w - h, &p, &m)) / (2.0 * h);
        let g = cost_gradient(w, &p, &m);
        // Absolute floor: the round-off of the cost difference itself.
        let floor = 1e-13 * m.replacement_cost * m.penalty_base.max(1.0) / h;
        prop_assert!((fd - g).abs() <= 1e-6 * g.abs() + floor, "fd {fd} g {g}");
    }

    #[test]
    fn refining_the_grid_never_raises_the_minimum(p in params(), m in model(), steps in 2usize..400) {
        let coarse = grid_search_warranty(&p, &m, 5.0 * p.beta, steps).unwrap().1;
        let fine = grid_search_warranty(&p, &m, 5.0 * p.beta, 2 * steps).unwrap().1;
        prop_assert!(fine <= coarse);
    }

    #[test]
    fn window_probabilities_are_ordered(p in params(), c3 in 0.0f64..3e5, span in 0.0f64..1e5) {
        let c4 = c3 + span;
        let cond = window_probability(&p, c3, c4, ForecastMode::Conditional);
        let unc = window_probability(&p, c3, c4, ForecastMode::Unconditional);
        prop_assert!((0.0..=1.0).contains(&cond));
        prop_assert!((0.0..=1.0).contains(&unc));
        prop_assert!(cond + 1e-12 >= unc);
    }

    #[test]
    fn inversion_never_predicts_before_the_observation(
        s in 1.0f64..2e5, gap in 0.0f64..1.0, r in 0.01f64..0.99, m in 0.01f64..0.99,
    ) {
        let dep = DependencyParams { r, sigma1: 1.0, m, sigma2: 1.0 };
        let i = s * gap;
        prop_assert!(invert_service_to_failure(s, Some(i), &dep, CaseId::Case3).unwrap() >= s);
        prop_assert!(invert_service_to_failure(s, None, &dep, CaseId::Case2).unwrap() >= s);
    }

    #[test]
    fn seed_derivation_is_a_pure_function(base in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        prop_assert_eq!(seed::derive(base, &[a, b]), seed::derive(base, &[a, b]));
        if a != b {
            prop_assert_ne!(seed::derive(base, &[a, b]), seed::derive(base, &[b, a]));
        }
    }

    #[test]
    fn rhat_ignores_chain_order_and_scale(xs in prop::collection::vec(-10.0f64..10.0, 40), k in -20i32..20) {
        let chains: Vec<Vec<f64>> = xs.chunks(10).map(|c| c.to_vec()).collect();
        let mut rev = chains.clone();
        rev.reverse();
        // Powers of two scale exactly, so ranks and folds are unchanged.
        let scaled: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|x| x * 2f64.powi(k)).collect()).collect();
        let r = split_rhat(&chains);
        prop_assert!((r - split_rhat(&rev)).abs() < 1e-9);
        prop_assert!((r - split_rhat(&scaled)).abs() < 1e-9);
    }
}
