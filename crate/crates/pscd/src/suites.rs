//! Brute-force validation suites behind `pscd oracle-check`.
//!
//! Each suite rebuilds a production result through an independent route and
//! reports the worst observed deviation: the posterior recursion against the
//! double-sum definition, the sorted-prefix rule against exhaustive subset
//! search, the tail recursion against configuration enumeration, and the
//! planning tables of the three-stream instance where no uniformly optimal
//! rule exists. Seeds are fixed, so every run prints the same numbers.

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pscd_core::metrics::{self, MetricKind, MetricSpec, RiskUtilityPair, StepContext};
use pscd_core::model::{
    derive_seed, sample_truth, ObservationSource, StreamModel, ROLE_REPLICATION,
};
use pscd_core::oracle::{
    backward_induction, enumerate_glfwer, exhaustive_local_optimum, verify_no_uniform_optimum,
    MdpInstance, MdpSolution,
};
use pscd_core::policy::select_simplified;
use pscd_core::posterior::{direct_posterior, PosteriorState};
use pscd_core::prior::ChangePointPrior;
use pscd_core::Error;

// ---------------------------------------------------------------------------
// Outcome shape
// ---------------------------------------------------------------------------

/// One printed invariant with its verdict.
#[derive(Debug, Clone)]
pub struct CheckLine {
    /// Human-readable statement, including the observed numbers.
    pub label: String,
    /// Whether the invariant held.
    pub ok: bool,
}

/// Result of one suite.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    /// Suite name as accepted on the command line.
    pub suite: &'static str,
    /// One line per checked invariant.
    pub checks: Vec<CheckLine>,
    /// Worst numeric deviation the suite observed, when it has one.
    pub worst: Option<f64>,
}

impl SuiteOutcome {
    /// Whether every invariant held.
    #[must_use]
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }
}

/// Names accepted by [`run_suites`], in execution order.
pub const SUITE_NAMES: [&str; 4] = ["posterior", "selection", "glfwer", "counterexample"];

/// Run one suite by name, or all of them for `"all"`.
pub fn run_suites(which: &str) -> Result<Vec<SuiteOutcome>> {
    match which {
        "all" => Ok(vec![
            posterior_suite()?,
            selection_suite()?,
            glfwer_suite()?,
            counterexample_suite()?,
        ]),
        "posterior" => Ok(vec![posterior_suite()?]),
        "selection" => Ok(vec![selection_suite()?]),
        "glfwer" => Ok(vec![glfwer_suite()?]),
        "counterexample" => Ok(vec![counterexample_suite()?]),
        other => bail!(
            "unknown suite \"{other}\" (expected all, {})",
            SUITE_NAMES.join(", ")
        ),
    }
}

// ---------------------------------------------------------------------------
// Posterior: recursion vs direct double sum
// ---------------------------------------------------------------------------

/// Gaussian-shift trajectories under the geometric prior; the streaming
/// recursion must match the double-sum definition at every step.
pub fn posterior_suite() -> Result<SuiteOutcome> {
    const TRAJECTORIES: usize = 500;
    const STEPS: usize = 50;
    const TOLERANCE: f64 = 1e-10;
    let model = StreamModel::GaussianShift {
        mu0: 0.0,
        mu1: 1.0,
        sigma: 1.0,
    };
    let prior = ChangePointPrior::geometric_with_atom(0.2, 0.1)?;
    let mut worst = 0.0f64;
    for i in 0..TRAJECTORIES {
        let seed = derive_seed(11, ROLE_REPLICATION, i as u64, 0);
        let mut truth = sample_truth(&model, &prior, 1, seed)?;
        let mut state = PosteriorState::new(1);
        let mut xs = Vec::with_capacity(STEPS);
        for t in 1..=STEPS {
            let x = truth.observe(0, t);
            let logl = model.log_likelihood_ratio(0, t, &x)?;
            xs.push(x);
            state.advance(&prior, &[logl])?;
            let direct = direct_posterior(&prior, &model, 0, &xs)?;
            worst = worst.max((state.w(0)? - direct).abs());
        }
    }
    Ok(SuiteOutcome {
        suite: "posterior",
        worst: Some(worst),
        checks: vec![CheckLine {
            label: format!(
                "recursion vs direct double sum over {TRAJECTORIES} trajectories x {STEPS} steps: max |dW| = {worst:.3e} (tolerance {TOLERANCE:e})"
            ),
            ok: worst < TOLERANCE,
        }],
    })
}

// ---------------------------------------------------------------------------
// Selection: sorted-prefix rule vs exhaustive subset search
// ---------------------------------------------------------------------------

/// The sixteen sign patterns under which the prefix rule is exact, with the
/// tolerance scaled to the count range for the aggregated functionals.
fn admissible_pairs(alpha_unit: f64, n: usize) -> Result<Vec<RiskUtilityPair>> {
    let keep = [
        MetricSpec::new(MetricKind::Lfwer)?,
        MetricSpec::new(MetricKind::Glfwer { m: 2 })?,
        MetricSpec::new(MetricKind::Lfnr)?,
        MetricSpec::new(MetricKind::Iadd)?,
    ];
    let lfdr = MetricSpec::new(MetricKind::Lfdr)?;
    let iarl = MetricSpec::new(MetricKind::Iarl)?;
    let scale = |s: MetricSpec| match s.kind {
        MetricKind::Iadd | MetricKind::Iarl => alpha_unit * n as f64,
        _ => alpha_unit,
    };
    let mut out = Vec::new();
    for r in keep {
        out.push(RiskUtilityPair::new(r, iarl, scale(r))?);
        out.push(RiskUtilityPair::new(r, lfdr.negated(), scale(r))?);
    }
    for u in keep {
        out.push(RiskUtilityPair::new(lfdr, u.negated(), alpha_unit)?);
        out.push(RiskUtilityPair::new(
            iarl.negated(),
            u.negated(),
            -scale(iarl),
        )?);
    }
    Ok(out)
}

/// Random posterior vectors; on every admissible pair the prefix rule must
/// attain the exhaustive optimum's utility within 1e-12 while respecting α,
/// and both routes must agree on infeasibility.
pub fn selection_suite() -> Result<SuiteOutcome> {
    const INSTANCES: usize = 1000;
    const TOLERANCE: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    let mut overshoot = 0.0f64;
    let mut feasible = 0usize;
    let mut infeasible = 0usize;
    for _ in 0..INSTANCES {
        let n = rng.random_range(1..=12);
        let active: Vec<usize> = (0..n).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let hazard = rng.random::<f64>() * 0.99;
        let ctx = StepContext {
            active: &active,
            w: &w,
            hazard,
        };
        for pair in admissible_pairs(rng.random::<f64>(), n)? {
            let fast = select_simplified(&ctx, &pair);
            let slow = exhaustive_local_optimum(&ctx, &pair);
            match (fast, slow) {
                (Ok(a), Ok(b)) => {
                    feasible += 1;
                    worst = worst.max((a.utility_value - b.utility_value).abs());
                    overshoot = overshoot.max(a.risk_value - pair.alpha);
                }
                (Err(Error::NoFeasibleSelection), Err(Error::NoFeasibleSelection)) => {
                    infeasible += 1;
                }
                (fast, slow) => {
                    bail!("rules disagree on feasibility: prefix {fast:?} vs exhaustive {slow:?}")
                }
            }
        }
    }
    Ok(SuiteOutcome {
        suite: "selection",
        worst: Some(worst),
        checks: vec![
            CheckLine {
                label: format!(
                    "prefix vs exhaustive utility over {INSTANCES} instances x 16 pairs ({feasible} feasible): max |dU| = {worst:.3e} (tolerance {TOLERANCE:e})"
                ),
                ok: worst < TOLERANCE,
            },
            CheckLine {
                label: format!("risk never exceeds alpha: max overshoot = {overshoot:.3e}"),
                ok: overshoot <= 0.0,
            },
            CheckLine {
                label: format!(
                    "both routes refuse the same instances: {infeasible} jointly infeasible"
                ),
                ok: infeasible > 0,
            },
        ],
    })
}

// ---------------------------------------------------------------------------
// GLFWER: tail recursion vs configuration enumeration
// ---------------------------------------------------------------------------

/// Random posterior vectors up to length 15; the dynamic program must match
/// the exact sum over all kept/changed configurations.
pub fn glfwer_suite() -> Result<SuiteOutcome> {
    const INSTANCES: usize = 500;
    const TOLERANCE: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let n = rng.random_range(0..=15);
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let m = rng.random_range(1..=5);
        let dp = metrics::glfwer(&w, m)?;
        let brute = enumerate_glfwer(&w, m)?;
        worst = worst.max((dp - brute).abs());
    }
    Ok(SuiteOutcome {
        suite: "glfwer",
        worst: Some(worst),
        checks: vec![CheckLine {
            label: format!(
                "tail recursion vs enumeration over {INSTANCES} instances (n <= 15, m <= 5): max |d| = {worst:.3e} (tolerance {TOLERANCE:e})"
            ),
            ok: worst < TOLERANCE,
        }],
    })
}

// ---------------------------------------------------------------------------
// Counterexample: the planning tables that rule out a uniform optimum
// ---------------------------------------------------------------------------

/// Three Bernoulli streams, uniform prior on change times {0, 1, 2}, LFDR
/// risk at α = 0.51 against −IADD utility.
#[must_use]
pub fn counterexample_instance() -> MdpInstance {
    MdpInstance {
        streams: 3,
        horizon: 2,
        alphabet: vec![0.0, 1.0],
        prior_head: vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        prior_atom: 0.0,
        pre: vec![0.99, 0.01],
        post: vec![0.01, 0.99],
        pair: RiskUtilityPair::new(
            MetricSpec::new(MetricKind::Lfdr).expect("plain spec"),
            MetricSpec::new(MetricKind::Iadd)
                .expect("plain spec")
                .negated(),
            0.51,
        )
        .expect("finite alpha"),
    }
}

fn first_step_optimal(solution: &MdpSolution, pattern: [usize; 3]) -> Result<Vec<Vec<usize>>> {
    let obs: Vec<Vec<usize>> = pattern.iter().map(|&y| vec![y]).collect();
    let entry = solution.table.iter().find(|e| e.t == 1 && e.obs == obs);
    match entry {
        Some(entry) => {
            let mut actions = entry.optimal.clone();
            actions.sort();
            Ok(actions)
        }
        None => bail!("no first-step table entry for pattern {pattern:?}"),
    }
}

/// Reproduce the optimal first actions for both planning targets and confirm
/// that no single rule serves both.
pub fn counterexample_suite() -> Result<SuiteOutcome> {
    let inst = counterexample_instance();
    let one = backward_induction(&inst, 1)?;
    let two = backward_induction(&inst, 2)?;
    let mut checks = Vec::new();

    // Target r = 1: keep all three on silence, keep exactly one quiet stream
    // after a single alarm, drop everything at two or more alarms.
    let expect_one: [([usize; 3], Vec<Vec<usize>>); 8] = [
        ([0, 0, 0], vec![vec![0, 1, 2]]),
        ([0, 0, 1], vec![vec![0], vec![1]]),
        ([0, 1, 0], vec![vec![0], vec![2]]),
        ([1, 0, 0], vec![vec![1], vec![2]]),
        ([0, 1, 1], vec![vec![]]),
        ([1, 0, 1], vec![vec![]]),
        ([1, 1, 0], vec![vec![]]),
        ([1, 1, 1], vec![vec![]]),
    ];
    let mut matched = 0usize;
    for (pattern, expected) in &expect_one {
        if first_step_optimal(&one, *pattern)? == *expected {
            matched += 1;
        }
    }
    checks.push(CheckLine {
        label: format!(
            "target r = 1: optimal moves match the hand table for {matched}/8 observation patterns"
        ),
        ok: matched == 8,
    });

    // Closed-form check of the r = 1 plan value: quiet streams sit at
    // W = 1/199, and only all-quiet and single-alarm patterns keep anything.
    let p_alarm = (0.99 + 2.0 * 0.01) / 3.0;
    let p_quiet = 1.0 - p_alarm;
    let expected = p_quiet * p_quiet * p_quiet * (-3.0 / 199.0)
        + 3.0 * p_quiet * p_quiet * p_alarm * (-1.0 / 199.0);
    let value_err = (one.value - expected).abs();
    checks.push(CheckLine {
        label: format!("target r = 1: plan value matches the closed form, |d| = {value_err:.3e}"),
        ok: value_err < 1e-12,
    });

    // Target r = 2: waiting wins; the whole set stays active at one alarm or
    // fewer, and dropping everything is optimal at two or more.
    let mut keep_all = 0usize;
    for pattern in [[0, 0, 0], [0, 0, 1], [0, 1, 0], [1, 0, 0]] {
        if first_step_optimal(&two, pattern)?.contains(&vec![0, 1, 2]) {
            keep_all += 1;
        }
    }
    let mut drop_all = 0usize;
    for pattern in [[0, 1, 1], [1, 0, 1], [1, 1, 0], [1, 1, 1]] {
        if first_step_optimal(&two, pattern)?.contains(&Vec::new()) {
            drop_all += 1;
        }
    }
    checks.push(CheckLine {
        label: format!(
            "target r = 2: keeping all is optimal at <= 1 alarm ({keep_all}/4), dropping all at >= 2 ({drop_all}/4)"
        ),
        ok: keep_all == 4 && drop_all == 4,
    });

    // The contradiction: after a single alarm the two targets share no
    // optimal action.
    let mut disjoint = 0usize;
    for pattern in [[0, 0, 1], [0, 1, 0], [1, 0, 0]] {
        let for_one = first_step_optimal(&one, pattern)?;
        let for_two = first_step_optimal(&two, pattern)?;
        if for_one.iter().all(|a| !for_two.contains(a)) {
            disjoint += 1;
        }
    }
    checks.push(CheckLine {
        label: format!(
            "single-alarm actions for the two targets are disjoint ({disjoint}/3 patterns)"
        ),
        ok: disjoint == 3,
    });

    let confirmed = verify_no_uniform_optimum(&inst)?;
    checks.push(CheckLine {
        label: format!("no uniformly optimal rule exists on this instance: {confirmed}"),
        ok: confirmed,
    });

    Ok(SuiteOutcome {
        suite: "counterexample",
        worst: Some(value_err),
        checks,
    })
}
