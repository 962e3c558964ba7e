//! Posterior change probabilities per stream.
//!
//! For each active stream the statistic
//! `Q_{k,t} = π̄_t⁻¹ Σ_{s=0}^{t−1} π_s Π_{r=s+1}^{t} L_{k,r}` determines
//! `W_{k,t} = P(τ_k < t | F_t) = Q_{k,t}/(Q_{k,t} + 1)`, and satisfies the
//! one-step recursion `Q_{k,t+1} = π̄_{t+1}⁻¹ (π̄_t Q_{k,t} + π_t) L_{k,t+1}`
//! with `Q_{k,0} = 0`.
//!
//! All `Q` arithmetic lives in log space: a long post-change stretch grows `Q`
//! by a likelihood-ratio factor per step, which overflows linear doubles
//! within a few hundred steps. `log Q = −∞` is the first-class zero sentinel.
//! [`direct_posterior`] evaluates the double-sum definition instead of the
//! recursion and is the reference the recursion is validated against.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, log_sum_exp2, logistic};
use crate::model::{Obs, StreamModel};
use crate::prior::{ChangePointPrior, ChangeTime};

/// Log-space posterior state for the active streams at some time `t`.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    t: usize,
    /// `π̄_t`, advanced by the same subtraction the prior uses.
    survival: f64,
    streams: Vec<usize>,
    logq: Vec<f64>,
}

impl PosteriorState {
    /// Fresh state at `t = 0` with streams `0..k` active and `W = 0`.
    #[must_use]
    pub fn new(k: usize) -> Self {
        Self {
            t: 0,
            survival: 1.0,
            streams: (0..k).collect(),
            logq: vec![f64::NEG_INFINITY; k],
        }
    }

    /// Current time index.
    #[must_use]
    pub fn t(&self) -> usize {
        self.t
    }

    /// Active stream ids, ascending.
    #[must_use]
    pub fn streams(&self) -> &[usize] {
        &self.streams
    }

    /// `π̄_t` at the current time.
    #[must_use]
    pub fn survival(&self) -> f64 {
        self.survival
    }

    /// Prior hazard `π_t/π̄_t` at the current time.
    #[must_use]
    pub fn hazard(&self, prior: &ChangePointPrior) -> f64 {
        prior.mass(ChangeTime::At(self.t)) / self.survival
    }

    /// `W_{k,t}` for every active stream, aligned with [`Self::streams`].
    #[must_use]
    pub fn w_all(&self) -> Vec<f64> {
        self.logq.iter().map(|&lq| logistic(lq)).collect()
    }

    /// `W_{k,t}` for one active stream.
    pub fn w(&self, k: usize) -> Result<f64> {
        let i = self.index_of(k)?;
        Ok(logistic(self.logq[i]))
    }

    /// `g(W_{k,t}) = P(τ_k ≤ t | F_t)`, the posterior probability that the
    /// next observation is already post-change.
    ///
    /// Equals `c + (1 − c)·W` with `c = π_t/π̄_t`: every `τ ≥ t` yields the
    /// same likelihood for data up to `t`, so `P(τ = t | F_t)` is the hazard
    /// share of `P(τ ≥ t | F_t)`.
    pub fn change_by_now(&self, prior: &ChangePointPrior, k: usize) -> Result<f64> {
        let i = self.index_of(k)?;
        let c = self.hazard(prior);
        Ok(c + (1.0 - c) * logistic(self.logq[i]))
    }

    /// Advance every active stream from `t` to `t + 1`.
    ///
    /// `logl[i]` is the log-likelihood ratio of the new observation for
    /// `streams()[i]`; all entries must be finite.
    pub fn advance(&mut self, prior: &ChangePointPrior, logl: &[f64]) -> Result<()> {
        if logl.len() != self.streams.len() {
            return Err(Error::InvalidParameter(alloc::format!(
                "{} log-likelihood entries for {} active streams",
                logl.len(),
                self.streams.len()
            )));
        }
        if logl.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("log-likelihood ratio"));
        }
        let mass = prior.mass(ChangeTime::At(self.t));
        let survival_next = self.survival - mass;
        if survival_next <= 0.0 {
            return Err(Error::SurvivalExhausted { t: self.t + 1 });
        }
        let ln_survival = libm::log(self.survival);
        let ln_mass = libm::log(mass);
        let ln_survival_next = libm::log(survival_next);
        for (lq, l) in self.logq.iter_mut().zip(logl) {
            *lq = l + log_sum_exp2(ln_survival + *lq, ln_mass) - ln_survival_next;
        }
        self.t += 1;
        self.survival = survival_next;
        Ok(())
    }

    /// Drop every stream not in `kept` (ids must be a subset of the active
    /// ones; order is irrelevant).
    pub fn retain(&mut self, kept: &[usize]) -> Result<()> {
        for k in kept {
            self.index_of(*k)?;
        }
        let mut i = 0;
        let (streams, logq) = (&mut self.streams, &mut self.logq);
        while i < streams.len() {
            if kept.contains(&streams[i]) {
                i += 1;
            } else {
                streams.remove(i);
                logq.remove(i);
            }
        }
        Ok(())
    }

    fn index_of(&self, k: usize) -> Result<usize> {
        self.streams
            .binary_search(&k)
            .map_err(|_| Error::InactiveStream { k })
    }
}

/// Evaluate `W_{k,t}` from the double-sum definition of `Q_{k,t}`.
///
/// `xs` holds the observations of stream `k` at times `1..=t`. The inner
/// likelihood products are accumulated as suffix sums of the log ratios and
/// the outer sum over change positions via log-sum-exp. This is the oracle
/// for [`PosteriorState::advance`], sharing no recursion with it.
pub fn direct_posterior(
    prior: &ChangePointPrior,
    model: &StreamModel,
    k: usize,
    xs: &[Obs],
) -> Result<f64> {
    let t = xs.len();
    if t == 0 {
        return Err(Error::InvalidParameter(
            "need at least one observation".into(),
        ));
    }
    let mut logl = Vec::with_capacity(t);
    for (i, x) in xs.iter().enumerate() {
        logl.push(model.log_likelihood_ratio(k, i + 1, x)?);
    }
    // suffix[s] = Σ_{r=s+1}^{t} log L_r, indexed by change position s.
    let mut suffix = vec![0.0; t + 1];
    for s in (0..t).rev() {
        suffix[s] = suffix[s + 1] + logl[s];
    }
    let terms: Vec<f64> = (0..t)
        .map(|s| libm::log(prior.mass(ChangeTime::At(s))) + suffix[s])
        .collect();
    let survival = prior.survival(t)?;
    let logq = log_sum_exp(&terms) - libm::log(survival);
    Ok(logistic(logq))
}
