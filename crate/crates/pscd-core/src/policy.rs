//! One-step selection rules and the sequential decision driver.
//!
//! Both rules pick `S_{t+1} ⊆ S_t` maximizing the utility among subsets whose
//! risk stays within `α`:
//!
//! - [`select_general`] enumerates all `2^|S_t|` subsets (capped at 20
//!   streams) and works for arbitrary risk/utility functionals.
//! - [`select_simplified`] sorts posteriors ascending and scans only the
//!   `|S_t| + 1` prefixes, which is exact for the admissible pairs (the
//!   monotone risks) and runs in `O(|S_t| log |S_t|)`.
//!
//! [`run_sequential`] wires either rule into the observe → update → select →
//! deactivate loop and records a full [`DecisionTrace`].

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::metrics::{check_assumption1, evaluate, prefix_values, RiskUtilityPair, StepContext};
use crate::model::{ObservationSource, StreamModel};
use crate::posterior::PosteriorState;
use crate::prior::{ChangePointPrior, ChangeTime};

/// Largest active set [`select_general`] will enumerate (≈10⁶ subsets).
pub const EXHAUSTIVE_CAP: usize = 20;

/// Which one-step rule drives the sequential decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    /// Exhaustive subset enumeration.
    General,
    /// Sorted-prefix scan.
    Simplified,
}

/// A chosen next active set with its realized risk and utility.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// `S_{t+1}`, ascending.
    pub s_next: Vec<usize>,
    /// Risk of the move `S_t → S_{t+1}`; at most `α` by construction.
    pub risk_value: f64,
    /// Utility of the move.
    pub utility_value: f64,
}

/// Exhaustive one-step rule: maximize utility over all feasible subsets.
///
/// Ties break toward the larger set, then the lexicographically smallest
/// sorted index list, making the output deterministic.
pub fn select_general(ctx: &StepContext<'_>, pair: &RiskUtilityPair) -> Result<Selection> {
    let n = ctx.active.len();
    if n > EXHAUSTIVE_CAP {
        return Err(Error::TooManyStreams {
            n,
            max: EXHAUSTIVE_CAP,
        });
    }
    let mut best: Option<Selection> = None;
    let mut subset = Vec::with_capacity(n);
    for mask in 0u64..(1u64 << n) {
        subset.clear();
        for (i, &k) in ctx.active.iter().enumerate() {
            if mask & (1 << i) != 0 {
                subset.push(k);
            }
        }
        let risk_value = evaluate(&pair.risk, ctx, &subset)?;
        if risk_value > pair.alpha {
            continue;
        }
        let utility_value = evaluate(&pair.utility, ctx, &subset)?;
        let better = match &best {
            None => true,
            Some(b) => {
                utility_value > b.utility_value
                    || (utility_value == b.utility_value
                        && (subset.len() > b.s_next.len()
                            || (subset.len() == b.s_next.len() && subset < b.s_next)))
            }
        };
        if better {
            best = Some(Selection {
                s_next: subset.clone(),
                risk_value,
                utility_value,
            });
        }
    }
    best.ok_or(Error::NoFeasibleSelection)
}

/// Sorted-prefix one-step rule.
///
/// Posteriors are sorted ascending (ties toward the smaller stream id) and
/// only prefixes of that order are considered: keep the `n` least likely
/// changed streams, remove the rest. Among feasible prefixes the one with
/// maximal utility wins, the largest such `n` on ties. Exact whenever the
/// pair satisfies the swap-monotonicity the admissible combinations have.
pub fn select_simplified(ctx: &StepContext<'_>, pair: &RiskUtilityPair) -> Result<Selection> {
    let n = ctx.active.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        ctx.w[a]
            .total_cmp(&ctx.w[b])
            .then(ctx.active[a].cmp(&ctx.active[b]))
    });
    let w_sorted: Vec<f64> = order.iter().map(|&i| ctx.w[i]).collect();
    let gamma = prefix_values(&pair.risk, &w_sorted, ctx.hazard);
    let mu = prefix_values(&pair.utility, &w_sorted, ctx.hazard);
    let mut best: Option<usize> = None;
    for m in 0..=n {
        if gamma[m] > pair.alpha {
            continue;
        }
        // `>=` keeps the largest prefix among utility ties.
        if best.is_none() || mu[m] >= mu[best.unwrap()] {
            best = Some(m);
        }
    }
    let m = best.ok_or(Error::NoFeasibleSelection)?;
    let mut s_next: Vec<usize> = order[..m].iter().map(|&i| ctx.active[i]).collect();
    s_next.sort_unstable();
    Ok(Selection {
        s_next,
        risk_value: gamma[m],
        utility_value: mu[m],
    })
}

// ---------------------------------------------------------------------------
// Sequential driver
// ---------------------------------------------------------------------------

/// One recorded step of a sequential run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Time index `t ≥ 1`.
    pub t: usize,
    /// Active set `S_t`, ascending.
    pub active: Vec<usize>,
    /// Posteriors `W_{k,t}` aligned with `active`.
    pub w: Vec<f64>,
    /// Prior hazard `π_t/π̄_t` at this step (reconstructs `g(W)`).
    pub hazard: f64,
    /// Chosen `S_{t+1}`, ascending.
    pub kept: Vec<usize>,
    /// Realized risk of the move; ≤ `α` in every step.
    pub risk_value: f64,
    /// Realized utility of the move.
    pub utility_value: f64,
}

/// Full record of a sequential run.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTrace {
    /// Total number of streams `K`.
    pub streams: usize,
    /// Configured horizon (the run may end earlier if `S` empties).
    pub horizon: usize,
    /// One record per executed step; `steps[i].t == i + 1`.
    pub steps: Vec<StepRecord>,
    /// Deactivation time `N_k` per stream; `None` when still active at the
    /// end (censored at the horizon).
    pub detection: Vec<Option<usize>>,
    /// Ground-truth change times, when the run was simulated.
    pub tau: Option<Vec<ChangeTime>>,
}

impl DecisionTrace {
    /// Active set `S_t` for any `t ≥ 1` (constant after the run ends).
    #[must_use]
    pub fn active_at(&self, t: usize) -> &[usize] {
        assert!(t >= 1, "time indices start at 1");
        match self.steps.get(t - 1) {
            Some(step) => &step.active,
            None => self.steps.last().map_or(&[], |s| &s.kept),
        }
    }

    /// Kept set `S_{t+1}` chosen at step `t` (empty once the run ended).
    #[must_use]
    pub fn kept_at(&self, t: usize) -> &[usize] {
        assert!(t >= 1, "time indices start at 1");
        match self.steps.get(t - 1) {
            Some(step) => &step.kept,
            None => self.steps.last().map_or(&[], |s| &s.kept),
        }
    }
}

/// Run the sequential decision: observe active streams, advance posteriors,
/// select, deactivate; stop when the active set empties or `t == horizon`.
pub fn run_sequential(
    model: &StreamModel,
    prior: &ChangePointPrior,
    source: &mut dyn ObservationSource,
    pair: &RiskUtilityPair,
    rule: SelectionRule,
    horizon: usize,
) -> Result<DecisionTrace> {
    let k = source.streams();
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one stream".into()));
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    model.validate(k)?;
    let mut state = PosteriorState::new(k);
    let mut steps = Vec::new();
    let mut detection = vec![None; k];
    for t in 1..=horizon {
        let active = state.streams().to_vec();
        let mut logl = Vec::with_capacity(active.len());
        for &id in &active {
            let x = source.observe(id, t);
            logl.push(model.log_likelihood_ratio(id, t, &x)?);
        }
        state.advance(prior, &logl)?;
        let w = state.w_all();
        let hazard = state.hazard(prior);
        let ctx = StepContext {
            active: &active,
            w: &w,
            hazard,
        };
        if !check_assumption1(pair, &ctx)? {
            return Err(Error::RiskInfeasible { t });
        }
        let selection = match rule {
            SelectionRule::General => select_general(&ctx, pair)?,
            SelectionRule::Simplified => select_simplified(&ctx, pair)?,
        };
        debug_assert!(selection.risk_value <= pair.alpha);
        for &id in &active {
            if !selection.s_next.contains(&id) {
                detection[id] = Some(t);
            }
        }
        let done = selection.s_next.is_empty();
        steps.push(StepRecord {
            t,
            active,
            w,
            hazard,
            kept: selection.s_next.clone(),
            risk_value: selection.risk_value,
            utility_value: selection.utility_value,
        });
        state.retain(&selection.s_next)?;
        if done {
            break;
        }
    }
    Ok(DecisionTrace {
        streams: k,
        horizon,
        steps,
        detection,
        tau: None,
    })
}

/// Convert a trace into its declaration schedule: the ordered times `T_q`
/// at which deactivations happened, with the declared stream sets `D_q`.
///
/// The `D_q` partition the deactivated streams; their union is exactly
/// `⟨K⟩ ∖ S_last`.
#[must_use]
pub fn detection_schedule(trace: &DecisionTrace) -> Vec<(usize, Vec<usize>)> {
    let mut schedule = Vec::new();
    for step in &trace.steps {
        let dropped: Vec<usize> = step
            .active
            .iter()
            .copied()
            .filter(|k| !step.kept.contains(k))
            .collect();
        if !dropped.is_empty() {
            schedule.push((step.t, dropped));
        }
    }
    schedule
}
