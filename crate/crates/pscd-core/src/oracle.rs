//! Independent brute-force validators for the fast paths.
//!
//! Everything here trades scale for transparency: tail probabilities by
//! enumerating all change configurations, selection by materializing every
//! subset, and sequential planning by exact backward induction over a fully
//! enumerated decision tree ([`MdpInstance`]). The fast implementations in
//! [`crate::metrics`] and [`crate::policy`] are tested against these, never
//! the other way around.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::metrics::{evaluate, RiskUtilityPair, StepContext};
use crate::policy::{select_simplified, Selection};

/// Two action values within this distance count as ties, so near-degenerate
/// optima surface as multiple optimal actions instead of an arbitrary pick.
pub const VALUE_TOLERANCE: f64 = 1e-9;

/// Upper bound on the number of enumerable histories an [`MdpInstance`] may
/// span across all decision times.
pub const HISTORY_BUDGET: f64 = 1e5;

const MASS_TOLERANCE: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Enumeration oracles
// ---------------------------------------------------------------------------

/// Tail probability `P(#changed ≥ m)` by summing `Π W · Π (1 − W)` over all
/// `2^|w|` change configurations with at least `m` changed entries.
///
/// Exact reference for [`crate::metrics::glfwer`]; rejects `|w| > 20`.
pub fn enumerate_glfwer(w: &[f64], m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("GLFWER needs m >= 1".into()));
    }
    let n = w.len();
    if n > 20 {
        return Err(Error::OracleTooLarge(format!(
            "enumerating 2^{n} change configurations"
        )));
    }
    if w.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidParameter(
            "posterior probabilities must lie in [0, 1]".into(),
        ));
    }
    let mut tail = 0.0;
    for mask in 0u64..(1u64 << n) {
        if (mask.count_ones() as usize) < m {
            continue;
        }
        let mut p = 1.0;
        for (i, &x) in w.iter().enumerate() {
            p *= if mask & (1 << i) != 0 { x } else { 1.0 - x };
        }
        tail += p;
    }
    Ok(tail)
}

/// Reference for [`crate::policy::select_general`]: materialize every subset,
/// then sort by (utility, cardinality, lexicographic) and take the head.
///
/// Same tie-break convention, different mechanism, no practicality cap; cost
/// grows as `2^|S_t|`.
pub fn exhaustive_local_optimum(
    ctx: &StepContext<'_>,
    pair: &RiskUtilityPair,
) -> Result<Selection> {
    let n = ctx.active.len();
    if n > 63 {
        // Mask arithmetic bound, not a practicality promise.
        return Err(Error::OracleTooLarge(format!("enumerating 2^{n} subsets")));
    }
    let mut feasible: Vec<Selection> = Vec::new();
    for mask in 0u64..(1u64 << n) {
        let s_next: Vec<usize> = ctx
            .active
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &k)| k)
            .collect();
        let risk_value = evaluate(&pair.risk, ctx, &s_next)?;
        if risk_value > pair.alpha {
            continue;
        }
        let utility_value = evaluate(&pair.utility, ctx, &s_next)?;
        feasible.push(Selection {
            s_next,
            risk_value,
            utility_value,
        });
    }
    if feasible.is_empty() {
        return Err(Error::NoFeasibleSelection);
    }
    feasible.sort_by(|a, b| {
        b.utility_value
            .total_cmp(&a.utility_value)
            .then(b.s_next.len().cmp(&a.s_next.len()))
            .then_with(|| a.s_next.cmp(&b.s_next))
    });
    Ok(feasible.swap_remove(0))
}

// ---------------------------------------------------------------------------
// Finite-horizon dynamic program
// ---------------------------------------------------------------------------

/// A sequential decision problem small enough to solve exactly: up to three
/// streams, up to three decision times, discrete observations.
///
/// The prior is a table over change times `{0, …, horizon}` with one atom
/// lumping everything later (for decisions up to `horizon`, all such change
/// times are observationally identical). All streams share the same pre- and
/// post-change pmfs over `alphabet`.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpInstance {
    /// Number of streams, 1 to 3.
    pub streams: usize,
    /// Last decision time, 1 to 3; utility targets `r` range over
    /// `1..=horizon`.
    pub horizon: usize,
    /// Observation values; pmf vectors index into this.
    pub alphabet: Vec<f64>,
    /// Prior mass at change times `0..=horizon`.
    pub prior_head: Vec<f64>,
    /// Prior mass beyond the horizon (including "never").
    pub prior_atom: f64,
    /// Pre-change pmf over `alphabet`, shared by all streams.
    pub pre: Vec<f64>,
    /// Post-change pmf over `alphabet`, shared by all streams.
    pub post: Vec<f64>,
    /// Risk functional, utility functional, and tolerance.
    pub pair: RiskUtilityPair,
}

fn check_pmf(name: &'static str, pmf: &[f64], len: usize) -> Result<()> {
    if pmf.len() != len {
        return Err(Error::InvalidParameter(format!(
            "{name} pmf needs one entry per alphabet value"
        )));
    }
    if pmf.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParameter(format!(
            "{name} pmf entries must lie in [0, 1]"
        )));
    }
    let total: f64 = pmf.iter().sum();
    if (total - 1.0).abs() >= MASS_TOLERANCE {
        return Err(Error::InvalidParameter(format!(
            "{name} pmf sums to {total}, not 1"
        )));
    }
    Ok(())
}

impl MdpInstance {
    /// Check every structural invariant, including that the full decision
    /// tree fits within [`HISTORY_BUDGET`].
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.streams) {
            return Err(Error::InvalidParameter(
                "exact planning handles 1 to 3 streams".into(),
            ));
        }
        if !(1..=3).contains(&self.horizon) {
            return Err(Error::InvalidParameter(
                "exact planning handles horizons 1 to 3".into(),
            ));
        }
        if self.alphabet.is_empty() || self.alphabet.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "alphabet must be a nonempty list of finite values".into(),
            ));
        }
        check_pmf("pre-change", &self.pre, self.alphabet.len())?;
        check_pmf("post-change", &self.post, self.alphabet.len())?;
        if self.prior_head.len() != self.horizon + 1 {
            return Err(Error::InvalidParameter(
                "prior head needs one mass per change time 0..=horizon".into(),
            ));
        }
        let head_ok = self.prior_head.iter().all(|p| (0.0..=1.0).contains(p));
        if !head_ok || !(0.0..=1.0).contains(&self.prior_atom) {
            return Err(Error::InvalidParameter(
                "prior masses must lie in [0, 1]".into(),
            ));
        }
        let total: f64 = self.prior_head.iter().sum::<f64>() + self.prior_atom;
        if (total - 1.0).abs() >= MASS_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "prior masses sum to {total}, not 1"
            )));
        }
        let bound = self.history_bound();
        if bound > HISTORY_BUDGET {
            return Err(Error::OracleTooLarge(format!(
                "decision tree spans up to {bound:.0} histories"
            )));
        }
        Ok(())
    }

    /// Upper bound on the number of histories across decision times: the
    /// first observation fans out `|A|^K` ways, each later decision at most
    /// `Σ_s |A|^|s| = (1 + |A|)^K` ways.
    fn history_bound(&self) -> f64 {
        let a = self.alphabet.len() as f64;
        let k = self.streams as f64;
        let mut level = libm::pow(a, k);
        let branch = libm::pow(1.0 + a, k);
        let mut total = 0.0;
        for _ in 0..self.horizon {
            total += level;
            level *= branch;
        }
        total
    }

    /// Likelihood of one stream's observed alphabet indices given a change at
    /// `u` (observation `l` is pre-change iff `l ≤ u`; pass `usize::MAX` for
    /// "beyond the horizon").
    fn stream_likelihood(&self, obs: &[usize], u: usize) -> f64 {
        obs.iter()
            .enumerate()
            .map(|(i, &y)| if i < u { self.pre[y] } else { self.post[y] })
            .product()
    }

    /// `(P(τ < t | obs), P(τ ≤ t | obs))` for one stream observed at times
    /// `1..=t`, by enumerating every change time in the prior table.
    fn posterior(&self, obs: &[usize]) -> (f64, f64) {
        let t = obs.len();
        let mut lt = 0.0;
        let mut le = 0.0;
        let mut total = 0.0;
        for (u, &mass) in self.prior_head.iter().enumerate() {
            let term = mass * self.stream_likelihood(obs, u);
            if u < t {
                lt += term;
            }
            if u <= t {
                le += term;
            }
            total += term;
        }
        total += self.prior_atom * self.stream_likelihood(obs, usize::MAX);
        (lt / total, le / total)
    }

    /// Prior hazard `P(τ = t)/P(τ ≥ t)`, 0 when no mass remains at `t`.
    fn hazard_at(&self, t: usize) -> f64 {
        let survival: f64 = self.prior_head[t..].iter().sum::<f64>() + self.prior_atom;
        if survival > 0.0 {
            self.prior_head[t] / survival
        } else {
            0.0
        }
    }

    /// Mixture pmf value for a stream's next observation given `g = P(change
    /// by the next observation | history)`.
    fn predictive(&self, g: f64, y: usize) -> f64 {
        g * self.post[y] + (1.0 - g) * self.pre[y]
    }
}

/// Decode `code` into `digits` base-`alphabet.len()` observation indices.
fn decode_pattern(code: usize, base: usize, digits: usize) -> Vec<usize> {
    let mut pattern = Vec::with_capacity(digits);
    let mut c = code;
    for _ in 0..digits {
        pattern.push(c % base);
        c /= base;
    }
    pattern
}

/// One reachable history with its value and every optimal action.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpPolicyEntry {
    /// Decision time, starting at 1.
    pub t: usize,
    /// Active set at this time, ascending stream ids.
    pub active: Vec<usize>,
    /// Observed alphabet indices per stream; a deactivated stream's row is
    /// frozen at its deactivation length, active rows have length `t`.
    pub obs: Vec<Vec<usize>>,
    /// Posterior change probability per active stream, aligned with `active`.
    pub w: Vec<f64>,
    /// Best achievable expected target utility from this history on.
    pub value: f64,
    /// All feasible actions whose value ties the best within
    /// [`VALUE_TOLERANCE`], each ascending; at least one entry.
    pub optimal: Vec<Vec<usize>>,
}

/// Output of [`backward_induction`]: the optimal expected utility from the
/// empty history and the full table of per-history optima.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpSolution {
    /// Target time whose one-step utility the plan maximizes.
    pub r: usize,
    /// Expected target utility of an optimal plan, before anything is
    /// observed.
    pub value: f64,
    /// One entry per reachable history at every decision time `1..=r`,
    /// ordered by time then observation record.
    pub table: Vec<MdpPolicyEntry>,
}

struct Solver<'a> {
    inst: &'a MdpInstance,
    r: usize,
    table: Vec<MdpPolicyEntry>,
}

impl Solver<'_> {
    /// Value of the history at decision time `t` with `active` streams and
    /// per-stream observations `obs`; records a policy entry.
    fn solve(&mut self, t: usize, active: &[usize], obs: &mut Vec<Vec<usize>>) -> Result<f64> {
        let mut w = Vec::with_capacity(active.len());
        let mut g = Vec::with_capacity(active.len());
        for &k in active {
            let (wk, gk) = self.inst.posterior(&obs[k]);
            w.push(wk);
            g.push(gk);
        }
        let ctx = StepContext {
            active,
            w: &w,
            hazard: self.inst.hazard_at(t),
        };
        let n = active.len();
        let base = self.inst.alphabet.len();
        let mut evaluated: Vec<(Vec<usize>, f64)> = Vec::new();
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1u32 << n) {
            let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let action: Vec<usize> = idx.iter().map(|&i| active[i]).collect();
            let risk = evaluate(&self.inst.pair.risk, &ctx, &action)?;
            if risk > self.inst.pair.alpha {
                continue;
            }
            let value = if t == self.r {
                evaluate(&self.inst.pair.utility, &ctx, &action)?
            } else {
                let mut expectation = 0.0;
                for code in 0..base.pow(action.len() as u32) {
                    let pattern = decode_pattern(code, base, action.len());
                    let mut p = 1.0;
                    for (j, &i) in idx.iter().enumerate() {
                        p *= self.inst.predictive(g[i], pattern[j]);
                    }
                    if p == 0.0 {
                        continue;
                    }
                    for (j, &k) in action.iter().enumerate() {
                        obs[k].push(pattern[j]);
                    }
                    let child = self.solve(t + 1, &action, obs);
                    for &k in &action {
                        obs[k].pop();
                    }
                    expectation += p * child?;
                }
                expectation
            };
            if value > best {
                best = value;
            }
            evaluated.push((action, value));
        }
        if evaluated.is_empty() {
            return Err(Error::InfeasibleHistory { t });
        }
        let optimal: Vec<Vec<usize>> = evaluated
            .iter()
            .filter(|(_, v)| *v >= best - VALUE_TOLERANCE)
            .map(|(a, _)| a.clone())
            .collect();
        self.table.push(MdpPolicyEntry {
            t,
            active: active.to_vec(),
            obs: obs.clone(),
            w,
            value: best,
            optimal,
        });
        Ok(best)
    }
}

/// Solve the instance exactly for target time `r`: enumerate every reachable
/// history, propagate values backward over all risk-feasible actions, and
/// report the full set of optimal actions at each history.
///
/// Zero-probability observation branches are skipped, so the table covers
/// exactly the reachable histories; a history where no action meets the risk
/// tolerance is an error, not a silent gap.
pub fn backward_induction(inst: &MdpInstance, r: usize) -> Result<MdpSolution> {
    inst.validate()?;
    if r == 0 || r > inst.horizon {
        return Err(Error::InvalidParameter(format!(
            "target time {r} outside 1..={}",
            inst.horizon
        )));
    }
    let mut solver = Solver {
        inst,
        r,
        table: Vec::new(),
    };
    let k = inst.streams;
    let all: Vec<usize> = (0..k).collect();
    let base = inst.alphabet.len();
    // Before anything is observed, P(change by the first observation) is the
    // prior mass at 0 for every stream.
    let g0 = inst.prior_head[0];
    let mut value = 0.0;
    let mut obs = vec![Vec::new(); k];
    for code in 0..base.pow(k as u32) {
        let pattern = decode_pattern(code, base, k);
        let p: f64 = pattern.iter().map(|&y| inst.predictive(g0, y)).product();
        if p == 0.0 {
            continue;
        }
        for (k, &y) in pattern.iter().enumerate() {
            obs[k].push(y);
        }
        let child = solver.solve(1, &all, &mut obs);
        for row in &mut obs {
            row.pop();
        }
        value += p * child?;
    }
    let mut table = solver.table;
    table.sort_by(|a, b| a.t.cmp(&b.t).then_with(|| a.obs.cmp(&b.obs)));
    Ok(MdpSolution { r, value, table })
}

/// Whether no single plan can be optimal for every target time.
///
/// The first decision is forced on every plan: the initial active set is the
/// full set and every positive-probability first observation occurs. So if
/// two targets' optimal action sets are disjoint at some first-step history,
/// no plan is optimal for both. Checks every target pair `1..=horizon`.
pub fn verify_no_uniform_optimum(inst: &MdpInstance) -> Result<bool> {
    let solutions: Vec<MdpSolution> = (1..=inst.horizon)
        .map(|r| backward_induction(inst, r))
        .collect::<Result<_>>()?;
    for (i, lo) in solutions.iter().enumerate() {
        for hi in &solutions[i + 1..] {
            for entry in lo.table.iter().filter(|e| e.t == 1) {
                let Some(other) = hi.table.iter().find(|e| e.t == 1 && e.obs == entry.obs) else {
                    continue;
                };
                let disjoint = entry
                    .optimal
                    .iter()
                    .all(|action| !other.optimal.contains(action));
                if disjoint {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

/// Expected target utility of the sorted-prefix rule on the instance, by
/// exact forward evaluation of its decision tree.
///
/// Comparing this against [`backward_induction`]'s value checks whether the
/// rule attains the optimum for the given target.
pub fn simplified_rule_value(inst: &MdpInstance, r: usize) -> Result<f64> {
    inst.validate()?;
    if r == 0 || r > inst.horizon {
        return Err(Error::InvalidParameter(format!(
            "target time {r} outside 1..={}",
            inst.horizon
        )));
    }
    let k = inst.streams;
    let all: Vec<usize> = (0..k).collect();
    let base = inst.alphabet.len();
    let g0 = inst.prior_head[0];
    let mut value = 0.0;
    let mut obs = vec![Vec::new(); k];
    for code in 0..base.pow(k as u32) {
        let pattern = decode_pattern(code, base, k);
        let p: f64 = pattern.iter().map(|&y| inst.predictive(g0, y)).product();
        if p == 0.0 {
            continue;
        }
        for (k, &y) in pattern.iter().enumerate() {
            obs[k].push(y);
        }
        let child = follow_simplified(inst, r, 1, &all, &mut obs);
        for row in &mut obs {
            row.pop();
        }
        value += p * child?;
    }
    Ok(value)
}

/// Expected target utility from one history under the sorted-prefix rule.
fn follow_simplified(
    inst: &MdpInstance,
    r: usize,
    t: usize,
    active: &[usize],
    obs: &mut Vec<Vec<usize>>,
) -> Result<f64> {
    let mut w = Vec::with_capacity(active.len());
    let mut g = Vec::with_capacity(active.len());
    for &k in active {
        let (wk, gk) = inst.posterior(&obs[k]);
        w.push(wk);
        g.push(gk);
    }
    let ctx = StepContext {
        active,
        w: &w,
        hazard: inst.hazard_at(t),
    };
    let chosen = select_simplified(&ctx, &inst.pair)?;
    if t == r {
        return Ok(chosen.utility_value);
    }
    let action = chosen.s_next;
    let base = inst.alphabet.len();
    let mut expectation = 0.0;
    for code in 0..base.pow(action.len() as u32) {
        let pattern = decode_pattern(code, base, action.len());
        let mut p = 1.0;
        for (j, &k) in action.iter().enumerate() {
            let i = active.iter().position(|&a| a == k).expect("kept ⊆ active");
            p *= inst.predictive(g[i], pattern[j]);
        }
        if p == 0.0 {
            continue;
        }
        for (j, &k) in action.iter().enumerate() {
            obs[k].push(pattern[j]);
        }
        let child = follow_simplified(inst, r, t + 1, &action, obs);
        for &k in &action {
            obs[k].pop();
        }
        expectation += p * child?;
    }
    Ok(expectation)
}
