//! Randomized invariants over the posterior recursion, the metric kernels,
//! and the selection rules.

use proptest::collection::vec;
use proptest::prelude::*;
use pscd_core::metrics::{
    evaluate, glfwer, iadd, lfwer, MetricKind, MetricSpec, RiskUtilityPair, StepContext,
};
use pscd_core::policy::{select_general, select_simplified};
use pscd_core::posterior::PosteriorState;
use pscd_core::prior::ChangePointPrior;

fn prob() -> impl Strategy<Value = f64> {
    (0.0..=1.0f64).prop_map(|x| x.clamp(0.0, 1.0))
}

proptest! {
    /// Posteriors stay probabilities under any finite log-ratio history.
    #[test]
    fn posteriors_remain_probabilities(
        pi_inf in 0.0..0.9f64,
        theta in 0.01..0.99f64,
        logl in vec(-40.0..40.0f64, 1..30),
    ) {
        let prior = ChangePointPrior::geometric_with_atom(pi_inf, theta).unwrap();
        let mut state = PosteriorState::new(1);
        let mut last = 0.0;
        for &l in &logl {
            state.advance(&prior, &[l]).unwrap();
            let w = state.w(0).unwrap();
            prop_assert!((0.0..=1.0).contains(&w), "W = {w}");
            let g = state.change_by_now(&prior, 0).unwrap();
            prop_assert!(w <= g && g <= 1.0, "W = {w}, g = {g}");
            last = w;
        }
        let _ = last;
    }

    /// The union-bound sandwich: max W ≤ LFWER ≤ Σ W, and the tail orders
    /// GLFWER_m between 0 and LFWER.
    #[test]
    fn family_wise_error_is_sandwiched(w in vec(prob(), 0..15)) {
        let wer = lfwer(&w).unwrap();
        let max = w.iter().cloned().fold(0.0f64, f64::max);
        prop_assert!(wer >= max - 1e-12);
        prop_assert!(wer <= iadd(&w).min(1.0) + 1e-12);
        for m in 1..=3usize {
            let tail = glfwer(&w, m).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&tail));
            prop_assert!(tail <= wer + 1e-12);
        }
    }

    /// Negation is an exact sign flip for every functional.
    #[test]
    fn negation_flips_every_functional(
        w in vec(prob(), 1..10),
        keep_mask in any::<u16>(),
        hazard in prob(),
    ) {
        let active: Vec<usize> = (0..w.len()).collect();
        let ctx = StepContext { active: &active, w: &w, hazard };
        let s_next: Vec<usize> = active
            .iter()
            .copied()
            .filter(|k| keep_mask & (1 << k) != 0)
            .collect();
        for kind in [
            MetricKind::Lfwer,
            MetricKind::Glfwer { m: 2 },
            MetricKind::Lfnr,
            MetricKind::Lfdr,
            MetricKind::Iadd,
            MetricKind::Iarl,
        ] {
            let spec = MetricSpec::new(kind).unwrap();
            let pos = evaluate(&spec, &ctx, &s_next).unwrap();
            let neg = evaluate(&spec.negated(), &ctx, &s_next).unwrap();
            prop_assert_eq!(neg, -pos);
        }
    }

    /// Both rules only ever return feasible, sorted subsets of the active
    /// set, and the exhaustive one never loses to the prefix one.
    #[test]
    fn selections_are_feasible_sorted_subsets(
        w in vec(prob(), 1..8),
        hazard in prob(),
        alpha in prob(),
    ) {
        let active: Vec<usize> = (0..w.len()).map(|i| 3 * i + 1).collect();
        let ctx = StepContext { active: &active, w: &w, hazard };
        let pair = RiskUtilityPair::new(
            MetricSpec::new(MetricKind::Lfnr).unwrap(),
            MetricSpec::new(MetricKind::Iarl).unwrap(),
            alpha,
        )
        .unwrap();
        for sel in [select_general(&ctx, &pair), select_simplified(&ctx, &pair)] {
            let sel = sel.unwrap();
            prop_assert!(sel.risk_value <= alpha + 1e-15);
            prop_assert!(sel.s_next.windows(2).all(|p| p[0] < p[1]));
            prop_assert!(sel.s_next.iter().all(|k| active.contains(k)));
        }
        let slow = select_general(&ctx, &pair).unwrap();
        let fast = select_simplified(&ctx, &pair).unwrap();
        prop_assert!(slow.utility_value >= fast.utility_value - 1e-12);
    }
}
