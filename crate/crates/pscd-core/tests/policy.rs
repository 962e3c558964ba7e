//! Selection rules and the sequential driver.

use pscd_core::metrics::{MetricKind, MetricSpec, RiskUtilityPair, StepContext};
use pscd_core::model::{sample_truth, Obs, ReplayFeed, StreamModel};
use pscd_core::policy::{
    detection_schedule, run_sequential, select_general, select_simplified, DecisionTrace,
    SelectionRule, StepRecord, EXHAUSTIVE_CAP,
};
use pscd_core::posterior::PosteriorState;
use pscd_core::prior::ChangePointPrior;
use pscd_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(kind: MetricKind) -> MetricSpec {
    MetricSpec::new(kind).unwrap()
}

fn pair(risk: MetricSpec, utility: MetricSpec, alpha: f64) -> RiskUtilityPair {
    RiskUtilityPair::new(risk, utility, alpha).unwrap()
}

// ---------------------------------------------------------------------------
// Exhaustive rule
// ---------------------------------------------------------------------------

#[test]
fn general_rule_drops_a_hot_stream_and_keeps_quiet_ones() {
    let lfnr_iarl = pair(spec(MetricKind::Lfnr), spec(MetricKind::Iarl), 0.1);
    // One stream at W = 0.9: keeping it busts the tolerance, so deactivate.
    let ctx = StepContext {
        active: &[0],
        w: &[0.9],
        hazard: 0.1,
    };
    let sel = select_general(&ctx, &lfnr_iarl).unwrap();
    assert!(sel.s_next.is_empty());
    assert_eq!(sel.risk_value, 0.0);
    assert_eq!(sel.utility_value, 0.0);
    // Two quiet streams fit comfortably and carry the most run length.
    let ctx = StepContext {
        active: &[3, 8],
        w: &[0.05, 0.05],
        hazard: 0.0,
    };
    let sel = select_general(&ctx, &lfnr_iarl).unwrap();
    assert_eq!(sel.s_next, vec![3, 8]);
    assert!((sel.risk_value - 0.05).abs() < 1e-15);
    assert!((sel.utility_value - 1.9).abs() < 1e-15);
}

#[test]
fn general_rule_breaks_utility_ties_toward_larger_then_lexicographic() {
    // Zero hazard and W = 0 everywhere make IARL utility equal to the kept
    // count: a strict LFWER budget of 0 still admits every subset, so the
    // full set wins.
    let p = pair(spec(MetricKind::Lfwer), spec(MetricKind::Iarl), 0.0);
    let ctx = StepContext {
        active: &[1, 4, 6],
        w: &[0.0, 0.0, 0.0],
        hazard: 0.0,
    };
    let sel = select_general(&ctx, &p).unwrap();
    assert_eq!(sel.s_next, vec![1, 4, 6]);
    // With hazard 1 every subset has utility 0 and the largest still wins;
    // lexicographic order is unreachable here but pins singleton ties below.
    let p = pair(spec(MetricKind::Lfwer), spec(MetricKind::Iarl), 0.0);
    let ctx = StepContext {
        active: &[1, 4, 6],
        w: &[0.0, 0.0, 0.0],
        hazard: 1.0,
    };
    let sel = select_general(&ctx, &p).unwrap();
    assert_eq!(sel.s_next, vec![1, 4, 6]);
    // Forced to keep exactly one of two equal streams: smaller id wins.
    let p = pair(
        spec(MetricKind::Lfdr),
        spec(MetricKind::Iadd).negated(),
        0.6,
    );
    let ctx = StepContext {
        active: &[2, 7],
        w: &[0.5, 0.5],
        hazard: 0.0,
    };
    let sel = select_general(&ctx, &p).unwrap();
    // Removing one stream costs LFDR 0.5 ≤ 0.6, removing both too; utilities
    // are −0.5 for either singleton, −1 for the pair, 0 for the empty set.
    assert_eq!(sel.s_next, Vec::<usize>::new());
    assert_eq!(sel.utility_value, 0.0);
}

#[test]
fn general_rule_refuses_oversized_active_sets() {
    let n = EXHAUSTIVE_CAP + 1;
    let active: Vec<usize> = (0..n).collect();
    let w = vec![0.0; n];
    let ctx = StepContext {
        active: &active,
        w: &w,
        hazard: 0.0,
    };
    let p = pair(spec(MetricKind::Lfnr), spec(MetricKind::Iarl), 0.5);
    assert!(matches!(
        select_general(&ctx, &p),
        Err(Error::TooManyStreams { n: 21, max: 20 })
    ));
}

#[test]
fn both_rules_report_when_no_subset_is_feasible() {
    // Demanding 5 units of expected run length from three quiet streams
    // (at most 3 available) leaves nothing feasible.
    let p = pair(
        spec(MetricKind::Iarl).negated(),
        spec(MetricKind::Lfnr).negated(),
        -5.0,
    );
    let ctx = StepContext {
        active: &[0, 1, 2],
        w: &[0.0, 0.0, 0.0],
        hazard: 0.0,
    };
    assert!(matches!(
        select_general(&ctx, &p),
        Err(Error::NoFeasibleSelection)
    ));
    assert!(matches!(
        select_simplified(&ctx, &p),
        Err(Error::NoFeasibleSelection)
    ));
}

// ---------------------------------------------------------------------------
// Sorted-prefix rule
// ---------------------------------------------------------------------------

#[test]
fn simplified_rule_keeps_the_longest_feasible_prefix_with_top_utility() {
    // Prefix means: 0.02, 0.035, 0.09, 0.2925. The budget 0.1 admits three
    // streams; IARL then prefers the longest admitted prefix.
    let p = pair(spec(MetricKind::Lfnr), spec(MetricKind::Iarl), 0.1);
    let ctx = StepContext {
        active: &[0, 1, 2, 3],
        w: &[0.02, 0.05, 0.2, 0.9],
        hazard: 0.0,
    };
    let sel = select_simplified(&ctx, &p).unwrap();
    assert_eq!(sel.s_next, vec![0, 1, 2]);
    assert!((sel.risk_value - 0.09).abs() < 1e-15);
    assert!((sel.utility_value - 2.73).abs() < 1e-15);
    // The sort is on W, not on id: the same posteriors permuted pick the
    // same streams.
    let ctx = StepContext {
        active: &[0, 1, 2, 3],
        w: &[0.9, 0.2, 0.05, 0.02],
        hazard: 0.0,
    };
    let sel = select_simplified(&ctx, &p).unwrap();
    assert_eq!(sel.s_next, vec![1, 2, 3]);
}

#[test]
fn simplified_rule_takes_the_largest_prefix_on_utility_ties() {
    // Hazard 1 forces g ≡ 1, so the IARL utility of every prefix is 0; the
    // rule must still keep as much as the risk budget allows.
    let p = pair(spec(MetricKind::Lfnr), spec(MetricKind::Iarl), 0.1);
    let ctx = StepContext {
        active: &[0, 1, 2],
        w: &[0.0, 0.0, 0.5],
        hazard: 1.0,
    };
    let sel = select_simplified(&ctx, &p).unwrap();
    assert_eq!(sel.s_next, vec![0, 1]);
    assert_eq!(sel.utility_value, 0.0);
}

#[test]
fn simplified_rule_keeps_nothing_when_every_stream_costs_utility() {
    // Unconstrained LFDR risk, delay-avoiding utility: every kept stream
    // subtracts its posterior, so the empty prefix wins.
    let p = pair(
        spec(MetricKind::Lfdr),
        spec(MetricKind::Iadd).negated(),
        1.0,
    );
    let ctx = StepContext {
        active: &[0, 1],
        w: &[0.3, 0.5],
        hazard: 0.0,
    };
    let sel = select_simplified(&ctx, &p).unwrap();
    assert!(sel.s_next.is_empty());
    assert_eq!(sel.utility_value, 0.0);
}

// ---------------------------------------------------------------------------
// First decision of the two-target worked example
// ---------------------------------------------------------------------------

/// Uniform change-time mass on {0, 1, 2}, near-deterministic Bernoulli flip.
fn worked_example() -> (ChangePointPrior, StreamModel) {
    let prior =
        ChangePointPrior::tabulated_with_atom(vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.0).unwrap();
    let model = StreamModel::Bernoulli { p0: 0.01, p1: 0.99 };
    (prior, model)
}

fn worked_example_step(xs: [f64; 3]) -> (Vec<usize>, Vec<f64>, f64) {
    let (prior, model) = worked_example();
    let mut state = PosteriorState::new(3);
    let logl: Vec<f64> = xs
        .iter()
        .enumerate()
        .map(|(k, &x)| model.log_likelihood_ratio(k, 1, &Obs::Scalar(x)).unwrap())
        .collect();
    state.advance(&prior, &logl).unwrap();
    let w = state.w_all();
    let hazard = state.hazard(&prior);
    (state.streams().to_vec(), w, hazard)
}

#[test]
fn worked_example_keeps_everything_on_three_quiet_observations() {
    let (active, w, hazard) = worked_example_step([0.0, 0.0, 0.0]);
    // One quiet draw: Q = (0.01/0.99)·(1/3)/(2/3), so W = 1/199.
    for &x in &w {
        assert!((x - 1.0 / 199.0).abs() < 1e-12);
    }
    assert!((hazard - 0.5).abs() < 1e-12);
    let ctx = StepContext {
        active: &active,
        w: &w,
        hazard,
    };
    let p = pair(
        spec(MetricKind::Lfdr),
        spec(MetricKind::Iadd).negated(),
        0.51,
    );
    // Removing anything pays ≈ 0.995 discovery risk: keeping all three is
    // the only feasible move.
    let sel = select_general(&ctx, &p).unwrap();
    assert_eq!(sel.s_next, vec![0, 1, 2]);
    assert_eq!(sel.risk_value, 0.0);
    assert!((sel.utility_value + 3.0 / 199.0).abs() < 1e-12);
}

#[test]
fn worked_example_keeps_one_quiet_stream_after_a_single_alarm() {
    let (active, w, hazard) = worked_example_step([0.0, 0.0, 1.0]);
    assert!((w[0] - 1.0 / 199.0).abs() < 1e-12);
    assert!((w[2] - 99.0 / 101.0).abs() < 1e-12);
    let ctx = StepContext {
        active: &active,
        w: &w,
        hazard,
    };
    let p = pair(
        spec(MetricKind::Lfdr),
        spec(MetricKind::Iadd).negated(),
        0.51,
    );
    // Dropping {1, 2} averages (1 − 1/199, 1 − 99/101)/2 ≈ 0.507 ≤ 0.51 and
    // keeps the single cheapest stream; {0} ties {1} and loses on order.
    let sel = select_general(&ctx, &p).unwrap();
    assert_eq!(sel.s_next, vec![0]);
    assert!((sel.risk_value - (198.0 / 199.0 + 2.0 / 101.0) / 2.0).abs() < 1e-12);
    assert!((sel.utility_value + 1.0 / 199.0).abs() < 1e-12);
    // The pair is admissible, so the prefix rule finds the same utility.
    let fast = select_simplified(&ctx, &p).unwrap();
    assert_eq!(fast.s_next, sel.s_next);
    // Two alarms leave no subset within 0.51: everything must go.
    let (active, w, hazard) = worked_example_step([0.0, 1.0, 1.0]);
    let ctx = StepContext {
        active: &active,
        w: &w,
        hazard,
    };
    let sel = select_general(&ctx, &p).unwrap();
    assert_eq!(sel.s_next, Vec::<usize>::new());
}

// ---------------------------------------------------------------------------
// Rule equivalence on admissible pairs
// ---------------------------------------------------------------------------

fn admissible_pairs(alpha_unit: f64, n: usize) -> Vec<RiskUtilityPair> {
    let keep = [
        spec(MetricKind::Lfwer),
        spec(MetricKind::Glfwer { m: 2 }),
        spec(MetricKind::Lfnr),
        spec(MetricKind::Iadd),
    ];
    let lfdr = spec(MetricKind::Lfdr);
    let iarl = spec(MetricKind::Iarl);
    let scale = |s: MetricSpec| match s.kind {
        MetricKind::Iadd | MetricKind::Iarl => alpha_unit * n as f64,
        _ => alpha_unit,
    };
    let mut out = Vec::new();
    for r in keep {
        out.push(pair(r, iarl, scale(r)));
        out.push(pair(r, lfdr.negated(), scale(r)));
    }
    for u in keep {
        out.push(pair(lfdr, u.negated(), alpha_unit));
        out.push(pair(iarl.negated(), u.negated(), -scale(iarl)));
    }
    out
}

#[test]
fn prefix_rule_matches_exhaustive_search_on_admissible_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let mut feasible_cases = 0usize;
    let mut infeasible_cases = 0usize;
    for _ in 0..300 {
        let n = rng.random_range(1..=10);
        let active: Vec<usize> = (0..n).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let hazard = rng.random::<f64>() * 0.99;
        let ctx = StepContext {
            active: &active,
            w: &w,
            hazard,
        };
        for p in admissible_pairs(rng.random::<f64>(), n) {
            let slow = select_general(&ctx, &p);
            let fast = select_simplified(&ctx, &p);
            match (slow, fast) {
                (Ok(a), Ok(b)) => {
                    assert!(
                        (a.utility_value - b.utility_value).abs() < 1e-12,
                        "{}/{} alpha {}: exhaustive {} vs prefix {}",
                        p.risk,
                        p.utility,
                        p.alpha,
                        a.utility_value,
                        b.utility_value
                    );
                    assert!(b.risk_value <= p.alpha + 1e-15);
                    feasible_cases += 1;
                }
                (Err(Error::NoFeasibleSelection), Err(Error::NoFeasibleSelection)) => {
                    infeasible_cases += 1;
                }
                (slow, fast) => {
                    panic!(
                        "{}/{} alpha {}: exhaustive {slow:?} but prefix {fast:?}",
                        p.risk, p.utility, p.alpha
                    );
                }
            }
        }
    }
    // Both regimes must actually occur for the equivalence to mean much.
    assert!(feasible_cases > 1000, "feasible cases: {feasible_cases}");
    assert!(
        infeasible_cases > 50,
        "infeasible cases: {infeasible_cases}"
    );
}

// ---------------------------------------------------------------------------
// Sequential driver
// ---------------------------------------------------------------------------

#[test]
fn a_loud_stream_is_deactivated_immediately() {
    let prior = ChangePointPrior::geometric_with_atom(0.05, 0.9).unwrap();
    let model = StreamModel::GaussianShift {
        mu0: 0.0,
        mu1: 5.0,
        sigma: 1.0,
    };
    let mut feed = ReplayFeed::new(vec![vec![Obs::Scalar(5.0); 5]]);
    let p = pair(spec(MetricKind::Lfnr), spec(MetricKind::Iarl), 0.1);
    let trace = run_sequential(&model, &prior, &mut feed, &p, SelectionRule::General, 5).unwrap();
    assert_eq!(trace.detection, vec![Some(1)]);
    assert_eq!(trace.steps.len(), 1);
    assert!(trace.steps[0].kept.is_empty());
    assert!(trace.steps[0].w[0] > 0.99);
    assert_eq!(detection_schedule(&trace), vec![(1, vec![0])]);
}

#[test]
fn sequential_runs_keep_their_books_straight() {
    let prior = ChangePointPrior::geometric_with_atom(0.2, 0.1).unwrap();
    let model = StreamModel::GaussianShift {
        mu0: 0.0,
        mu1: 1.0,
        sigma: 1.0,
    };
    let k = 100;
    let mut truth = sample_truth(&model, &prior, k, 7).unwrap();
    let p = pair(spec(MetricKind::Lfnr), spec(MetricKind::Iarl), 0.1);
    let trace = run_sequential(
        &model,
        &prior,
        &mut truth,
        &p,
        SelectionRule::Simplified,
        500,
    )
    .unwrap();
    assert_eq!(trace.streams, k);
    assert_eq!(trace.horizon, 500);
    assert!(!trace.steps.is_empty());
    for (i, step) in trace.steps.iter().enumerate() {
        assert_eq!(step.t, i + 1, "steps must be consecutive from 1");
        assert!(step.risk_value <= p.alpha + 1e-12);
        assert!(step.w.iter().all(|w| (0.0..=1.0).contains(w)));
        assert_eq!(step.active.len(), step.w.len());
        // Kept sets nest: S_{t+1} ⊆ S_t, both ascending.
        assert!(step.kept.windows(2).all(|p| p[0] < p[1]));
        assert!(step.kept.iter().all(|k| step.active.contains(k)));
        if let Some(next) = trace.steps.get(i + 1) {
            assert_eq!(next.active, step.kept);
        }
    }
    // Detection times agree with the kept sets, censored entries are the
    // survivors of the final step.
    let last_kept = &trace.steps.last().unwrap().kept;
    for id in 0..k {
        match trace.detection[id] {
            Some(t) => {
                assert!(trace.active_at(t).contains(&id));
                assert!(!trace.kept_at(t).contains(&id));
            }
            None => assert!(last_kept.contains(&id)),
        }
    }
    // The schedule lists each deactivated stream exactly once, in time order.
    let schedule = detection_schedule(&trace);
    assert!(schedule.windows(2).all(|s| s[0].0 < s[1].0));
    let mut declared: Vec<usize> = schedule.iter().flat_map(|(_, d)| d.clone()).collect();
    declared.sort_unstable();
    let mut dropped: Vec<usize> = (0..k).filter(|&id| trace.detection[id].is_some()).collect();
    dropped.sort_unstable();
    assert_eq!(declared, dropped);
    assert!(
        !dropped.is_empty(),
        "a 500-step run should deactivate some streams"
    );
}

#[test]
fn an_unconstrained_risk_never_deactivates_anything() {
    let prior = ChangePointPrior::geometric_with_atom(0.2, 0.1).unwrap();
    let model = StreamModel::GaussianShift {
        mu0: 0.0,
        mu1: 1.0,
        sigma: 1.0,
    };
    let mut truth = sample_truth(&model, &prior, 5, 11).unwrap();
    let p = pair(spec(MetricKind::Lfnr), spec(MetricKind::Iarl), 1.0);
    let trace = run_sequential(
        &model,
        &prior,
        &mut truth,
        &p,
        SelectionRule::Simplified,
        30,
    )
    .unwrap();
    assert_eq!(trace.steps.len(), 30);
    assert!(trace.detection.iter().all(Option::is_none));
    assert!(trace.steps.iter().all(|s| s.kept == s.active));
    assert!(detection_schedule(&trace).is_empty());
}

#[test]
fn sequential_runs_are_reproducible() {
    let prior = ChangePointPrior::geometric_with_atom(0.2, 0.1).unwrap();
    let model = StreamModel::GaussianShift {
        mu0: 0.0,
        mu1: 1.0,
        sigma: 1.0,
    };
    let p = pair(
        spec(MetricKind::Lfdr),
        spec(MetricKind::Iadd).negated(),
        0.05,
    );
    let run = |seed: u64| {
        let mut truth = sample_truth(&model, &prior, 12, seed).unwrap();
        run_sequential(&model, &prior, &mut truth, &p, SelectionRule::General, 40).unwrap()
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}

#[test]
fn degenerate_runs_are_rejected_up_front() {
    let prior = ChangePointPrior::geometric_with_atom(0.2, 0.1).unwrap();
    let model = StreamModel::GaussianShift {
        mu0: 0.0,
        mu1: 1.0,
        sigma: 1.0,
    };
    let p = pair(spec(MetricKind::Lfnr), spec(MetricKind::Iarl), 0.1);
    let mut empty = ReplayFeed::new(vec![]);
    assert!(matches!(
        run_sequential(&model, &prior, &mut empty, &p, SelectionRule::General, 5),
        Err(Error::InvalidParameter(_))
    ));
    let mut feed = ReplayFeed::new(vec![vec![Obs::Scalar(0.0)]]);
    assert!(matches!(
        run_sequential(&model, &prior, &mut feed, &p, SelectionRule::General, 0),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn infeasible_tolerances_surface_with_their_time_step() {
    // Three quiet streams cannot produce 5 units of run length at t = 1.
    let prior = ChangePointPrior::geometric_with_atom(0.2, 0.1).unwrap();
    let model = StreamModel::GaussianShift {
        mu0: 0.0,
        mu1: 1.0,
        sigma: 1.0,
    };
    let mut feed = ReplayFeed::new(vec![vec![Obs::Scalar(0.0)]; 3]);
    let p = pair(
        spec(MetricKind::Iarl).negated(),
        spec(MetricKind::Lfnr).negated(),
        -5.0,
    );
    assert!(matches!(
        run_sequential(&model, &prior, &mut feed, &p, SelectionRule::General, 1),
        Err(Error::RiskInfeasible { t: 1 })
    ));
}

// ---------------------------------------------------------------------------
// Declaration schedules from hand-built traces
// ---------------------------------------------------------------------------

fn hand_trace(steps: Vec<(Vec<usize>, Vec<usize>)>) -> DecisionTrace {
    let streams = steps.first().map_or(0, |(a, _)| a.len());
    let records: Vec<StepRecord> = steps
        .into_iter()
        .enumerate()
        .map(|(i, (active, kept))| StepRecord {
            t: i + 1,
            w: vec![0.0; active.len()],
            hazard: 0.0,
            active,
            kept,
            risk_value: 0.0,
            utility_value: 0.0,
        })
        .collect();
    let mut detection = vec![None; streams];
    for r in &records {
        for id in &r.active {
            if !r.kept.contains(id) {
                detection[*id] = Some(r.t);
            }
        }
    }
    DecisionTrace {
        streams,
        horizon: records.len(),
        steps: records,
        detection,
        tau: None,
    }
}

#[test]
fn schedules_group_simultaneous_declarations() {
    let trace = hand_trace(vec![
        (vec![0, 1, 2], vec![0, 1, 2]),
        (vec![0, 1, 2], vec![0, 1]),
        (vec![0, 1], vec![0, 1]),
        (vec![0, 1], vec![0]),
    ]);
    assert_eq!(detection_schedule(&trace), vec![(2, vec![2]), (4, vec![1])]);
    assert_eq!(trace.active_at(3), &[0, 1]);
    assert_eq!(trace.kept_at(4), &[0]);
    assert_eq!(trace.active_at(9), &[0], "constant after the last step");

    let quiet = hand_trace(vec![(vec![0, 1], vec![0, 1]), (vec![0, 1], vec![0, 1])]);
    assert!(detection_schedule(&quiet).is_empty());

    let brutal = hand_trace(vec![(vec![0, 1, 2], vec![])]);
    assert_eq!(detection_schedule(&brutal), vec![(1, vec![0, 1, 2])]);
}
