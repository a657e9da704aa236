use proptest::prelude::*;

use lpmodel::analytic::{lawler_lpp, schramm_lpp, BetaConvention, KappaParams};
use lpmodel::explorer::{turn_v1, turn_v2, Explorer, ExplorerConfig};
use lpmodel::hitting::{harmonicity_defect, solve_field};
use lpmodel::lattice::{DomainConfig, Label, Turn};
use lpmodel::walk::{p_up, WalkParams, WalkScheme};

fn params(kappa: f64) -> KappaParams {
    KappaParams::new(kappa, BetaConvention::Matched).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lpp_is_a_probability_and_reflects(kappa in 0.5f64..7.5, x in -5.0f64..5.0, y in 0.05f64..5.0) {
        let p = params(kappa);
        let h = schramm_lpp(&p, x, y).unwrap();
        let m = schramm_lpp(&p, -x, y).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert!((h + m - 1.0).abs() < 1e-10);
    }

    #[test]
    fn lpp_is_scale_invariant(kappa in 0.5f64..7.5, x in -5.0f64..5.0, y in 0.05f64..5.0, s in 0.1f64..10.0) {
        let p = params(kappa);
        let a = schramm_lpp(&p, x, y).unwrap();
        let b = schramm_lpp(&p, s * x, s * y).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn integral_form_matches(kappa in 1.0f64..7.0, theta in 0.05f64..3.09) {
        let p = params(kappa);
        let s = schramm_lpp(&p, theta.cos(), theta.sin()).unwrap();
        let l = lawler_lpp(&p, theta).unwrap();
        prop_assert!((s - l).abs() < 1e-8, "κ={} θ={} {} vs {}", kappa, theta, s, l);
    }

    #[test]
    fn p_up_is_a_probability(nu in -0.49f64..3.0, r in 1i64..100_000, csaki in any::<bool>()) {
        let scheme = if csaki { WalkScheme::Csaki } else { WalkScheme::Asymptotic };
        let p = p_up(r, &WalkParams::new(nu, scheme)).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn turn_rules_follow_the_bands(pl in 0.0f64..1.0, dp in 0.0f64..1.0, u in 0.0f64..1.0, u2 in 0.0f64..1.0) {
        let pr = pl + (1.0 - pl) * dp;
        let t = turn_v1(pl, pr, u).unwrap();
        let want = if u <= pl { Turn::Left } else if u < pr { Turn::Straight } else { Turn::Right };
        prop_assert_eq!(t, want);
        let t2 = turn_v2(pl, pr, u, u2).unwrap();
        prop_assert_eq!(t2 == Turn::Left, u <= pl);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Partial paths keep the tip labels and give a field obeying the
    /// maximum principle and the walk's mean-value property.
    #[test]
    fn grown_domains_stay_consistent(kappa in 2.5f64..6.0, seed in any::<u64>(), steps in 0usize..30) {
        let cfg = ExplorerConfig::new(kappa, BetaConvention::Matched, DomainConfig::new(12, 8, 1.0), seed).unwrap();
        let mut ex = Explorer::new(cfg).unwrap();
        for _ in 0..steps {
            if ex.step().unwrap().is_some() {
                break;
            }
        }
        let state = ex.state();
        let tip = state.tip();
        prop_assert_eq!(state.label(tip.left), Some(Label::Zero));
        prop_assert_eq!(state.label(tip.right), Some(Label::One));
        let f = solve_field(state, &cfg.walk).unwrap();
        for (_, v) in f.iter() {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        }
        prop_assert!(harmonicity_defect(&f, state, &cfg.walk).unwrap() < 1e-10);
    }
}
