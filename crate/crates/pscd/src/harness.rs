//! Monte Carlo replication engine and ex-post trace evaluation.
//!
//! A replication samples ground truth, drives the sequential decision to the
//! horizon, and keeps the resulting [`DecisionTrace`] together with the true
//! change times. Traces are then scored after the fact: realized error
//! fractions per step ([`fdp_t`], [`fnp_t`]), kept-stream counts ([`idd_t`],
//! [`irl_t`]), and the deadline-capped aggregates [`afdr`], [`tadd`],
//! [`tarl`], [`gfwer`] with standard errors across replications.
//!
//! Replications are independent work items seeded from deterministic
//! substreams of the master seed; the aggregate is an ordered reduction by
//! replication index, so a parallel run reproduces a serial one bit for bit.

use anyhow::{ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use pscd_core::metrics::RiskUtilityPair;
use pscd_core::model::{
    derive_seed, sample_truth, StreamModel, ROLE_MODEL_PARAMS, ROLE_REPLICATION,
};
use pscd_core::policy::{run_sequential, DecisionTrace, SelectionRule};
use pscd_core::prior::{ChangePointPrior, ChangeTime};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Environment variable capping the number of replication workers.
pub const THREADS_ENV: &str = "PSCD_THREADS";

/// Model family plus the per-replication randomization of its parameters.
#[derive(Debug, Clone)]
pub enum ModelTemplate {
    /// The same model in every replication.
    Fixed(StreamModel),
    /// Complex-energy model whose per-stream gains are redrawn uniformly
    /// from `[lo, hi)` in every replication.
    ComplexEnergyUniform {
        /// Noise variance per complex component.
        sigma2: f64,
        /// Lower gain bound.
        lo: f64,
        /// Upper gain bound.
        hi: f64,
    },
}

impl ModelTemplate {
    /// Instantiate the model for one replication; gain draws use their own
    /// substream of `rep_seed` and never touch the truth or observation RNG.
    #[must_use]
    pub fn realize(&self, streams: usize, rep_seed: u64) -> StreamModel {
        match self {
            ModelTemplate::Fixed(model) => model.clone(),
            ModelTemplate::ComplexEnergyUniform { sigma2, lo, hi } => {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(rep_seed, ROLE_MODEL_PARAMS, 0, 0));
                let lambda = (0..streams).map(|_| rng.random_range(*lo..*hi)).collect();
                StreamModel::ComplexGaussianEnergy {
                    sigma2: *sigma2,
                    lambda,
                }
            }
        }
    }

    fn validate(&self, streams: usize) -> Result<()> {
        match self {
            ModelTemplate::Fixed(model) => Ok(model.validate(streams)?),
            ModelTemplate::ComplexEnergyUniform { sigma2, lo, hi } => {
                ensure!(
                    sigma2.is_finite() && *sigma2 > 0.0,
                    "model.sigma2 must be positive"
                );
                ensure!(
                    lo.is_finite() && hi.is_finite() && 0.0 < *lo && lo < hi,
                    "the gain range needs 0 < lo < hi"
                );
                Ok(())
            }
        }
    }
}

/// Time at which the family-wise error event is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoppingRule {
    /// At the deadline `N̄`.
    Deadline,
    /// At the first declaration time, falling back to the deadline when a
    /// replication never declares anything.
    FirstDetection,
}

/// Everything one experiment needs: run geometry, model, prior, and policy.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Number of streams `K`.
    pub streams: usize,
    /// Steps per replication; runs end early only when `S` empties.
    pub horizon: usize,
    /// Deadline `N̄` capping the aggregate metrics; 2 to `horizon`.
    pub deadline: usize,
    /// Replication count `R ≥ 1`.
    pub replications: usize,
    /// Master seed; replication `r` runs on the derived substream `(seed, r)`.
    pub seed: u64,
    /// Model family and its per-replication randomization.
    pub model: ModelTemplate,
    /// Change-time prior shared by all streams.
    pub prior: ChangePointPrior,
    /// Risk functional, utility functional, and tolerance `α`.
    pub pair: RiskUtilityPair,
    /// One-step selection rule.
    pub rule: SelectionRule,
    /// Order `m` of the family-wise error event counted by [`gfwer`].
    pub gfwer_m: usize,
    /// When that event is evaluated.
    pub gfwer_at: StoppingRule,
}

impl ExperimentConfig {
    /// Check the run geometry before launching workers.
    pub fn validate(&self) -> Result<()> {
        ensure!(self.streams >= 1, "need at least one stream");
        ensure!(self.horizon >= 1, "horizon must be at least 1");
        ensure!(self.deadline >= 2, "deadline must be at least 2");
        ensure!(
            self.deadline <= self.horizon,
            "deadline cannot exceed the horizon"
        );
        ensure!(self.replications >= 1, "need at least one replication");
        ensure!(self.gfwer_m >= 1, "gfwer_m must be at least 1");
        self.model.validate(self.streams)
    }
}

// ---------------------------------------------------------------------------
// Replications
// ---------------------------------------------------------------------------

/// Run one replication: realize the model, sample ground truth, and drive
/// the sequential decision. The returned trace carries the true change times.
pub fn run_replication(cfg: &ExperimentConfig, rep: usize) -> Result<DecisionTrace> {
    let rep_seed = derive_seed(cfg.seed, ROLE_REPLICATION, rep as u64, 0);
    let model = cfg.model.realize(cfg.streams, rep_seed);
    let mut truth = sample_truth(&model, &cfg.prior, cfg.streams, rep_seed)?;
    let tau = truth.tau.clone();
    let mut trace = run_sequential(
        &model,
        &cfg.prior,
        &mut truth,
        &cfg.pair,
        cfg.rule,
        cfg.horizon,
    )
    .with_context(|| format!("replication {rep}"))?;
    trace.tau = Some(tau);
    Ok(trace)
}

fn tau_of(trace: &DecisionTrace) -> Result<&[ChangeTime]> {
    trace
        .tau
        .as_deref()
        .context("trace carries no ground-truth change times")
}

// ---------------------------------------------------------------------------
// Ex-post step scores
// ---------------------------------------------------------------------------
//
// Time convention: the decision at step t maps S_t to S_{t+1}, so `t = 0`
// denotes the state before any decision (S_1 = all streams, nothing removed).
// All scores are safe for any t: once a run ends, S stays constant.

/// Count streams of `S_{t+1}` whose true change time satisfies `pred`.
fn count_kept(
    trace: &DecisionTrace,
    tau: &[ChangeTime],
    t: usize,
    pred: impl Fn(&ChangeTime) -> bool,
) -> usize {
    if t == 0 {
        tau.iter().filter(|ct| pred(ct)).count()
    } else {
        trace.kept_at(t).iter().filter(|&&k| pred(&tau[k])).count()
    }
}

fn kept_len(trace: &DecisionTrace, t: usize) -> usize {
    if t == 0 {
        trace.streams
    } else {
        trace.kept_at(t).len()
    }
}

/// Realized false-discovery proportion at `t`: among the streams removed by
/// the decision at `t`, the fraction still pre-change (`τ_k ≥ t`); 0 when
/// nothing was removed.
#[must_use]
pub fn fdp_t(trace: &DecisionTrace, tau: &[ChangeTime], t: usize) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let kept = trace.kept_at(t);
    let mut j = 0;
    let mut removed = 0usize;
    let mut pre = 0usize;
    // Both sets ascending: lock-step walk yields the removed streams.
    for &k in trace.active_at(t) {
        if j < kept.len() && kept[j] == k {
            j += 1;
            continue;
        }
        removed += 1;
        if !tau[k].before(t) {
            pre += 1;
        }
    }
    pre as f64 / removed.max(1) as f64
}

/// Realized false-non-discovery proportion at `t`: the fraction of kept
/// streams that had already changed (`τ_k < t`); 0 when nothing is kept.
#[must_use]
pub fn fnp_t(trace: &DecisionTrace, tau: &[ChangeTime], t: usize) -> f64 {
    let changed = count_kept(trace, tau, t, |ct| ct.before(t));
    changed as f64 / kept_len(trace, t).max(1) as f64
}

/// Realized detection delay increment at `t`: kept streams already changed.
#[must_use]
pub fn idd_t(trace: &DecisionTrace, tau: &[ChangeTime], t: usize) -> usize {
    count_kept(trace, tau, t, |ct| ct.before(t))
}

/// Realized run-length increment at `t`: kept streams strictly pre-change.
#[must_use]
pub fn irl_t(trace: &DecisionTrace, tau: &[ChangeTime], t: usize) -> usize {
    count_kept(trace, tau, t, |ct| ct.after(t))
}

// ---------------------------------------------------------------------------
// Deadline-capped aggregates
// ---------------------------------------------------------------------------

/// Deactivation time capped at the deadline; streams still active at the end
/// of the run are censored to `N̄`.
fn capped_detection(det: Option<usize>, deadline: usize) -> usize {
    det.map_or(deadline, |n| n.min(deadline))
}

/// One replication's aggregated false-discovery rate: among declarations
/// made strictly before the deadline, the fraction that were pre-change.
#[must_use]
pub fn afdr_one(trace: &DecisionTrace, tau: &[ChangeTime], deadline: usize) -> f64 {
    let mut total = 0usize;
    let mut pre = 0usize;
    for (k, det) in trace.detection.iter().enumerate() {
        if let Some(n) = *det {
            if n < deadline {
                total += 1;
                if !tau[k].before(n) {
                    pre += 1;
                }
            }
        }
    }
    pre as f64 / total.max(1) as f64
}

/// One replication's total detection delay `Σ_k (N_k ∧ N̄ − τ_k − 1)_+`.
#[must_use]
pub fn tadd_one(trace: &DecisionTrace, tau: &[ChangeTime], deadline: usize) -> f64 {
    let mut total = 0i64;
    for (k, det) in trace.detection.iter().enumerate() {
        if let ChangeTime::At(s) = tau[k] {
            let n = capped_detection(*det, deadline) as i64;
            total += (n - s as i64 - 1).max(0);
        }
    }
    total as f64
}

/// One replication's total run length `Σ_k (τ_k ∧ N_k ∧ N̄)`.
#[must_use]
pub fn tarl_one(trace: &DecisionTrace, tau: &[ChangeTime], deadline: usize) -> f64 {
    let total: usize = trace
        .detection
        .iter()
        .enumerate()
        .map(|(k, det)| {
            let n = capped_detection(*det, deadline);
            match tau[k] {
                ChangeTime::At(s) => s.min(n),
                ChangeTime::Never => n,
            }
        })
        .sum();
    total as f64
}

/// Whether at least `m` kept streams had already changed at the evaluation
/// time picked by `at`.
#[must_use]
pub fn gfwer_one(
    trace: &DecisionTrace,
    tau: &[ChangeTime],
    m: usize,
    at: StoppingRule,
    deadline: usize,
) -> bool {
    let t = match at {
        StoppingRule::Deadline => deadline,
        StoppingRule::FirstDetection => trace
            .detection
            .iter()
            .flatten()
            .copied()
            .min()
            .unwrap_or(deadline),
    };
    count_kept(trace, tau, t, |ct| ct.before(t)) >= m
}

/// Sample mean and standard error (sample sd over `√n`); se is 0 for `n < 2`.
#[must_use]
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Mean ± se of [`afdr_one`] across replications.
pub fn afdr(traces: &[DecisionTrace], deadline: usize) -> Result<(f64, f64)> {
    per_rep(traces, |tr, tau| afdr_one(tr, tau, deadline))
}

/// Mean ± se of [`tadd_one`] across replications.
pub fn tadd(traces: &[DecisionTrace], deadline: usize) -> Result<(f64, f64)> {
    per_rep(traces, |tr, tau| tadd_one(tr, tau, deadline))
}

/// Mean ± se of [`tarl_one`] across replications.
pub fn tarl(traces: &[DecisionTrace], deadline: usize) -> Result<(f64, f64)> {
    per_rep(traces, |tr, tau| tarl_one(tr, tau, deadline))
}

/// Fraction ± se of replications where the order-`m` event occurred.
pub fn gfwer(
    traces: &[DecisionTrace],
    m: usize,
    at: StoppingRule,
    deadline: usize,
) -> Result<(f64, f64)> {
    per_rep(traces, |tr, tau| {
        if gfwer_one(tr, tau, m, at, deadline) {
            1.0
        } else {
            0.0
        }
    })
}

fn per_rep(
    traces: &[DecisionTrace],
    score: impl Fn(&DecisionTrace, &[ChangeTime]) -> f64,
) -> Result<(f64, f64)> {
    let xs = traces
        .iter()
        .map(|tr| Ok(score(tr, tau_of(tr)?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_se(&xs))
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

/// Across-replication summary of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    /// Number of streams `K`.
    pub streams: usize,
    /// Tolerance the run was driven at.
    pub alpha: f64,
    /// Replications aggregated.
    pub replications: usize,
    /// Master seed the run used.
    pub seed: u64,
    /// Per-step means across replications; index `i` holds time `t = i + 1`.
    pub mean_fdp: Vec<f64>,
    /// Mean realized false-non-discovery proportion per step.
    pub mean_fnp: Vec<f64>,
    /// Mean kept-and-changed count per step.
    pub mean_idd: Vec<f64>,
    /// Mean kept-and-pre-change count per step.
    pub mean_irl: Vec<f64>,
    /// Mean size of the active set `S_t`.
    pub mean_active: Vec<f64>,
    /// Aggregated false-discovery rate, (mean, standard error).
    pub afdr: (f64, f64),
    /// Total detection delay, (mean, standard error).
    pub tadd: (f64, f64),
    /// Total run length, (mean, standard error).
    pub tarl: (f64, f64),
    /// Family-wise error frequency, (estimate, standard error).
    pub gfwer: (f64, f64),
}

/// Per-replication scores, kept so the reduction stays an ordered fold.
struct RepScore {
    fdp: Vec<f64>,
    fnp: Vec<f64>,
    idd: Vec<f64>,
    irl: Vec<f64>,
    active: Vec<f64>,
    afdr: f64,
    tadd: f64,
    tarl: f64,
    gfwer: f64,
}

fn score(cfg: &ExperimentConfig, trace: &DecisionTrace) -> Result<RepScore> {
    let tau = tau_of(trace)?;
    let h = cfg.horizon;
    let mut s = RepScore {
        fdp: Vec::with_capacity(h),
        fnp: Vec::with_capacity(h),
        idd: Vec::with_capacity(h),
        irl: Vec::with_capacity(h),
        active: Vec::with_capacity(h),
        afdr: afdr_one(trace, tau, cfg.deadline),
        tadd: tadd_one(trace, tau, cfg.deadline),
        tarl: tarl_one(trace, tau, cfg.deadline),
        gfwer: if gfwer_one(trace, tau, cfg.gfwer_m, cfg.gfwer_at, cfg.deadline) {
            1.0
        } else {
            0.0
        },
    };
    for t in 1..=h {
        s.fdp.push(fdp_t(trace, tau, t));
        s.fnp.push(fnp_t(trace, tau, t));
        s.idd.push(idd_t(trace, tau, t) as f64);
        s.irl.push(irl_t(trace, tau, t) as f64);
        s.active.push(trace.active_at(t).len() as f64);
    }
    Ok(s)
}

fn mean_curve(scores: &[RepScore], pick: impl Fn(&RepScore) -> &[f64], h: usize) -> Vec<f64> {
    let r = scores.len() as f64;
    (0..h)
        .map(|i| scores.iter().map(|s| pick(s)[i]).sum::<f64>() / r)
        .collect()
}

fn scalar_se(scores: &[RepScore], pick: impl Fn(&RepScore) -> f64) -> (f64, f64) {
    let xs: Vec<f64> = scores.iter().map(pick).collect();
    mean_se(&xs)
}

/// Run all replications and aggregate.
///
/// Parallel across replications when the global pool (or `PSCD_THREADS`)
/// allows it; scores are collected in replication order and folded serially,
/// so the report is identical to a serial run with the same master seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<AggregateReport> {
    cfg.validate()?;
    let scores = in_pool(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let trace = run_replication(cfg, rep)?;
                score(cfg, &trace)
            })
            .collect::<Result<Vec<RepScore>>>()
    })??;
    let h = cfg.horizon;
    Ok(AggregateReport {
        streams: cfg.streams,
        alpha: cfg.pair.alpha,
        replications: cfg.replications,
        seed: cfg.seed,
        mean_fdp: mean_curve(&scores, |s| &s.fdp, h),
        mean_fnp: mean_curve(&scores, |s| &s.fnp, h),
        mean_idd: mean_curve(&scores, |s| &s.idd, h),
        mean_irl: mean_curve(&scores, |s| &s.irl, h),
        mean_active: mean_curve(&scores, |s| &s.active, h),
        afdr: scalar_se(&scores, |s| s.afdr),
        tadd: scalar_se(&scores, |s| s.tadd),
        tarl: scalar_se(&scores, |s| s.tarl),
        gfwer: scalar_se(&scores, |s| s.gfwer),
    })
}

/// Run `f` on a pool sized by `PSCD_THREADS`, or on the global pool when the
/// variable is unset. An unparseable value is an error, not a default.
fn in_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(f()),
        Err(err) => Err(err).context(THREADS_ENV),
        Ok(raw) => {
            let n: usize = raw
                .trim()
                .parse()
                .with_context(|| format!("{THREADS_ENV}={raw} is not a thread count"))?;
            ensure!(n >= 1, "{THREADS_ENV} must be at least 1");
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building the worker pool")?;
            Ok(pool.install(f))
        }
    }
}
