use mista_core::analytic::{active_count_pmf, asymptotic_age, asymptotic_age_from_root, regime_analysis, Regime};
use mista_core::protocol::{step, success_probability, NetworkState, Policy, PolicyParams, ScaledParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn policy_strategy() -> impl Strategy<Value = Policy> {
    prop_oneof![
        Just(Policy::SlottedAloha),
        Just(Policy::ThresholdAloha),
        Just(Policy::Mista),
        prop::collection::vec(0.05f64..1.0, 1..6).prop_map(|schedule| Policy::MuMista { schedule }),
    ]
}

fn params_strategy() -> impl Strategy<Value = PolicyParams> {
    (1usize..12, 1u32..15, 0.01f64..1.0, 0.01f64..1.0, policy_strategy()).prop_filter_map(
        "invalid combination",
        |(n, gamma, tau1, tau2, policy)| PolicyParams::new(n, gamma, tau1, tau2, policy).ok(),
    )
}

proptest! {
    #[test]
    fn slot_outcome_consistent(
        params in params_strategy(),
        raw_ages in prop::collection::vec(1u64..30, 12),
        seed in any::<u64>(),
    ) {
        let state = NetworkState { ages: raw_ages[..params.n].to_vec(), t: 7 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (next, outcome) = step(&state, &params, &mut rng);
        prop_assert!(outcome.is_consistent());
        prop_assert_eq!(next.t, 8);
        prop_assert!(next.is_valid());
        for i in 0..params.n {
            if outcome.winner() == Some(i) {
                prop_assert_eq!(next.ages[i], 1);
            } else {
                prop_assert_eq!(next.ages[i], state.ages[i] + 1);
            }
        }
        let threshold = u64::from(params.activity_threshold());
        for &i in &outcome.attempters {
            prop_assert!(state.ages[i] >= threshold);
        }
    }

    #[test]
    fn success_probability_is_a_probability(m in 0u64..5000, t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
        let p = success_probability(m, t1, t2);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&p), "{}", p);
    }

    #[test]
    fn pmf_normalised(n in 2usize..400, extra in 0u32..400, t1 in 0.001f64..1.0, t2 in 0.01f64..1.0) {
        let gamma = 2 + extra;
        let p = PolicyParams::mista(n, gamma, t1, t2).unwrap();
        let pmf = active_count_pmf(&p).unwrap();
        prop_assert!((pmf.total() - 1.0).abs() < 1e-9);
        prop_assert!(pmf.probabilities.iter().all(|&x| x >= 0.0 && x.is_finite()));
    }

    #[test]
    fn dual_form_identity(alpha in 1.0f64..20.0, r in 0.5f64..3.0, tau2 in 0.05f64..1.0) {
        let s = ScaledParams::new(alpha, r, tau2).unwrap();
        if let Ok(a) = regime_analysis(&s) {
            prop_assume!(a.regime != Regime::Degenerate);
            let k = a.selected_k0;
            let direct = asymptotic_age(&s, k);
            let from_root = asymptotic_age_from_root(&s, k);
            prop_assert!(((direct - from_root) / direct).abs() < 1e-6, "{} {}", direct, from_root);
        }
    }
}
