//! Risk and utility functionals of the posterior vector.
//!
//! Every functional is a map of `({W_{k,t}}_{k∈S_t}, S_t, S_{t+1})`:
//!
//! - `LFWER`  — posterior probability of ≥1 false non-detection among kept.
//! - `GLFWER_m` — posterior probability of ≥m false non-detections.
//! - `LFNR`  — posterior expected fraction of changed streams among kept.
//! - `LFDR`  — posterior expected fraction of unchanged streams among removed.
//! - `IADD`  — posterior expected count of kept post-change streams.
//! - `IARL`  — posterior expected count of kept streams still pre-change at
//!   the next observation, `Σ (1 − g(W))` with `g(W) = c + (1 − c)W`,
//!   `c = π_t/π̄_t`.
//!
//! A negation wrapper turns any of them into a utility (or a risk with a
//! negative tolerance). [`RiskUtilityPair`] flags the combinations for which
//! the sorted-prefix selection rule is known to be exact; other combinations
//! still evaluate but carry a warning flag.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::math::binomial;

// ---------------------------------------------------------------------------
// Metric kinds and specs
// ---------------------------------------------------------------------------

/// The six base functionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    /// Family-wise error over kept streams.
    Lfwer,
    /// Generalized family-wise error: ≥ `m` false non-detections.
    Glfwer {
        /// Minimum count of false non-detections, `m ≥ 1`.
        m: usize,
    },
    /// False non-discovery rate over kept streams.
    Lfnr,
    /// False discovery rate over removed streams.
    Lfdr,
    /// Incremental aggregated detection delay over kept streams.
    Iadd,
    /// Incremental aggregated run length over kept streams.
    Iarl,
}

/// A base functional with an optional sign flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MetricSpec {
    /// Base functional.
    pub kind: MetricKind,
    /// Evaluate as the negation of the base functional.
    pub negate: bool,
}

impl MetricSpec {
    /// Positive-signed spec; `Glfwer` with `m = 0` is rejected.
    pub fn new(kind: MetricKind) -> Result<Self> {
        if let MetricKind::Glfwer { m: 0 } = kind {
            return Err(Error::InvalidParameter("GLFWER needs m >= 1".into()));
        }
        Ok(Self {
            kind,
            negate: false,
        })
    }

    /// The same functional with the opposite sign.
    #[must_use]
    pub fn negated(mut self) -> Self {
        self.negate = !self.negate;
        self
    }

    fn sign(&self) -> f64 {
        if self.negate {
            -1.0
        } else {
            1.0
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negate {
            write!(f, "neg-")?;
        }
        match self.kind {
            MetricKind::Lfwer => write!(f, "lfwer"),
            MetricKind::Glfwer { m } => write!(f, "glfwer:{m}"),
            MetricKind::Lfnr => write!(f, "lfnr"),
            MetricKind::Lfdr => write!(f, "lfdr"),
            MetricKind::Iadd => write!(f, "iadd"),
            MetricKind::Iarl => write!(f, "iarl"),
        }
    }
}

impl FromStr for MetricSpec {
    type Err = Error;

    /// Parse `lfwer | glfwer:m | lfnr | lfdr | iadd | iarl`, optionally
    /// prefixed with `neg-`.
    fn from_str(s: &str) -> Result<Self> {
        let (negate, body) = match s.strip_prefix("neg-") {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let kind = if let Some(m) = body.strip_prefix("glfwer:") {
            let m: usize = m.parse().map_err(|_| {
                Error::InvalidParameter(alloc::format!("bad GLFWER order in {s:?}"))
            })?;
            MetricKind::Glfwer { m }
        } else {
            match body {
                "lfwer" => MetricKind::Lfwer,
                "lfnr" => MetricKind::Lfnr,
                "lfdr" => MetricKind::Lfdr,
                "iadd" => MetricKind::Iadd,
                "iarl" => MetricKind::Iarl,
                _ => {
                    return Err(Error::InvalidParameter(alloc::format!(
                        "unknown metric {s:?} (expected lfwer, glfwer:m, lfnr, lfdr, iadd or iarl)"
                    )))
                }
            }
        };
        let spec = MetricSpec::new(kind)?;
        Ok(if negate { spec.negated() } else { spec })
    }
}

/// Risk functional, utility functional, and tolerance driving selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskUtilityPair {
    /// Constrained functional: selections must keep it ≤ `alpha`.
    pub risk: MetricSpec,
    /// Maximized functional.
    pub utility: MetricSpec,
    /// Risk tolerance (negative for negated risks such as `neg-iarl`).
    pub alpha: f64,
}

impl RiskUtilityPair {
    /// Bundle a risk, a utility, and a tolerance.
    pub fn new(risk: MetricSpec, utility: MetricSpec, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::NonFinite("tolerance"));
        }
        Ok(Self {
            risk,
            utility,
            alpha,
        })
    }

    /// Whether the pair is one of the combinations for which the sorted-prefix
    /// rule provably matches the exhaustive one. Other pairs still run, but
    /// callers should surface this flag as a warning.
    #[must_use]
    pub fn is_admissible(&self) -> bool {
        use MetricKind::{Glfwer, Iadd, Iarl, Lfdr, Lfnr, Lfwer};
        let keep_side = |k: MetricKind| matches!(k, Lfwer | Glfwer { .. } | Lfnr | Iadd);
        match (
            self.risk.negate,
            self.risk.kind,
            self.utility.negate,
            self.utility.kind,
        ) {
            (false, r, false, Iarl) if keep_side(r) => true,
            (false, r, true, Lfdr) if keep_side(r) => true,
            (false, Lfdr, true, u) if keep_side(u) => true,
            (true, Iarl, true, u) if keep_side(u) => true,
            _ => false,
        }
    }
}

// ---------------------------------------------------------------------------
// Base functionals
// ---------------------------------------------------------------------------

fn check_probabilities(w: &[f64]) -> Result<()> {
    if w.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidParameter(
            "posterior probabilities must lie in [0, 1]".into(),
        ));
    }
    Ok(())
}

/// `1 − Π (1 − W_k)` over the kept streams; empty product is 1.
pub fn lfwer(w_next: &[f64]) -> Result<f64> {
    check_probabilities(w_next)?;
    let miss: f64 = w_next.iter().map(|w| 1.0 - w).product();
    Ok(1.0 - miss)
}

/// Tail `P(#changed kept ≥ m)` of the Poisson-binomial over the kept `W`.
///
/// Dynamic program over the exact counts `0..m` plus an absorbing tail,
/// `O(|S|·m)`; the empty set has probability 0 for any `m ≥ 1`.
pub fn glfwer(w_next: &[f64], m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("GLFWER needs m >= 1".into()));
    }
    check_probabilities(w_next)?;
    if m > w_next.len() {
        return Ok(0.0);
    }
    let mut state = GlfwerPrefix::new(m);
    for &w in w_next {
        state.push(w);
    }
    Ok(state.tail())
}

/// Mean posterior change probability over kept streams (0 when none kept).
#[must_use]
pub fn lfnr(w_next: &[f64]) -> f64 {
    let n = w_next.len();
    if n == 0 {
        return 0.0;
    }
    w_next.iter().sum::<f64>() / n as f64
}

/// Mean posterior no-change probability over removed streams (0 when none
/// removed).
#[must_use]
pub fn lfdr(w_removed: &[f64]) -> f64 {
    let n = w_removed.len();
    if n == 0 {
        return 0.0;
    }
    w_removed.iter().map(|w| 1.0 - w).sum::<f64>() / n as f64
}

/// Sum of posterior change probabilities over kept streams.
#[must_use]
pub fn iadd(w_next: &[f64]) -> f64 {
    w_next.iter().sum()
}

/// `Σ (1 − g(W_k))` over kept streams, with `g` supplied per entry (see
/// [`crate::posterior::PosteriorState::change_by_now`]).
#[must_use]
pub fn iarl(w_next: &[f64], g: &[f64]) -> f64 {
    assert_eq!(
        w_next.len(),
        g.len(),
        "one g(W) value is needed per kept stream"
    );
    g.iter().map(|g| 1.0 - g).sum()
}

// ---------------------------------------------------------------------------
// Evaluation against an active set
// ---------------------------------------------------------------------------

/// Inputs a selection step sees: the active set, its posteriors, and the
/// prior hazard that maps `W` to `g(W)`.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    /// Active stream ids `S_t`, ascending.
    pub active: &'a [usize],
    /// `W_{k,t}` aligned with `active`.
    pub w: &'a [f64],
    /// `π_t/π̄_t` at the current time.
    pub hazard: f64,
}

impl StepContext<'_> {
    /// `g(W) = hazard + (1 − hazard)·W`.
    #[must_use]
    pub fn g(&self, w: f64) -> f64 {
        self.hazard + (1.0 - self.hazard) * w
    }

    fn position(&self, k: usize) -> Result<usize> {
        self.active
            .binary_search(&k)
            .map_err(|_| Error::InactiveStream { k })
    }
}

/// Evaluate a metric for moving from `ctx.active` to `s_next ⊆ ctx.active`.
///
/// Kept-side metrics see the posteriors over `s_next`; `LFDR` sees the
/// removed ones. Values are sorted ascending before the kernels run (all
/// kernels are symmetric, so this only fixes an evaluation order).
pub fn evaluate(spec: &MetricSpec, ctx: &StepContext<'_>, s_next: &[usize]) -> Result<f64> {
    if ctx.active.len() != ctx.w.len() {
        return Err(Error::InvalidParameter(
            "one posterior value is needed per active stream".into(),
        ));
    }
    let kept_positions: Vec<usize> = s_next
        .iter()
        .map(|&k| ctx.position(k))
        .collect::<Result<_>>()?;
    let value = match spec.kind {
        MetricKind::Lfdr => {
            let mut removed: Vec<f64> = (0..ctx.active.len())
                .filter(|i| !kept_positions.contains(i))
                .map(|i| ctx.w[i])
                .collect();
            removed.sort_unstable_by(f64::total_cmp);
            lfdr(&removed)
        }
        kind => {
            let mut kept: Vec<f64> = kept_positions.iter().map(|&i| ctx.w[i]).collect();
            kept.sort_unstable_by(f64::total_cmp);
            match kind {
                MetricKind::Lfwer => lfwer(&kept)?,
                MetricKind::Glfwer { m } => glfwer(&kept, m)?,
                MetricKind::Lfnr => lfnr(&kept),
                MetricKind::Iadd => iadd(&kept),
                MetricKind::Iarl => {
                    let g: Vec<f64> = kept.iter().map(|&w| ctx.g(w)).collect();
                    iarl(&kept, &g)
                }
                MetricKind::Lfdr => unreachable!(),
            }
        }
    };
    Ok(spec.sign() * value)
}

/// Risk feasibility guard: at least one of `∅` and `S_t` itself must meet the
/// tolerance, otherwise no risk-controlled selection is guaranteed to exist.
pub fn check_assumption1(pair: &RiskUtilityPair, ctx: &StepContext<'_>) -> Result<bool> {
    let empty = evaluate(&pair.risk, ctx, &[])?;
    let full = evaluate(&pair.risk, ctx, ctx.active)?;
    Ok(empty.min(full) <= pair.alpha)
}

// ---------------------------------------------------------------------------
// Incremental prefix evaluation (used by the sorted-prefix rule)
// ---------------------------------------------------------------------------

/// Poisson-binomial tail accumulator: exact probabilities of `0..m` changed
/// streams plus an absorbing `≥ m` tail.
struct GlfwerPrefix {
    below: Vec<f64>,
    tail: f64,
}

impl GlfwerPrefix {
    fn new(m: usize) -> Self {
        let mut below = vec![0.0; m];
        below[0] = 1.0;
        Self { below, tail: 0.0 }
    }

    fn push(&mut self, w: f64) {
        let m = self.below.len();
        self.tail += self.below[m - 1] * w;
        for j in (1..m).rev() {
            self.below[j] = self.below[j] * (1.0 - w) + self.below[j - 1] * w;
        }
        self.below[0] *= 1.0 - w;
    }

    fn tail(&self) -> f64 {
        self.tail.clamp(0.0, 1.0)
    }
}

/// Metric values for every prefix of `w`, ascending by kept count.
///
/// `w` must be sorted ascending; entry `n` of the result is the metric for
/// keeping the `n` smallest posteriors (and, for `LFDR`, removing the rest).
/// Each kind updates incrementally, so the whole sweep costs `O(|w|)`
/// (`O(|w|·m)` for `GLFWER`).
pub(crate) fn prefix_values(spec: &MetricSpec, w: &[f64], hazard: f64) -> Vec<f64> {
    let n = w.len();
    let sign = spec.sign();
    let mut out = Vec::with_capacity(n + 1);
    match spec.kind {
        MetricKind::Lfwer => {
            let mut miss = 1.0;
            out.push(0.0);
            for &x in w {
                miss *= 1.0 - x;
                out.push(1.0 - miss);
            }
        }
        MetricKind::Glfwer { m } => {
            let mut state = GlfwerPrefix::new(m);
            out.push(0.0);
            for &x in w {
                state.push(x);
                out.push(state.tail());
            }
        }
        MetricKind::Lfnr => {
            let mut sum = 0.0;
            out.push(0.0);
            for (i, &x) in w.iter().enumerate() {
                sum += x;
                out.push(sum / (i + 1) as f64);
            }
        }
        MetricKind::Lfdr => {
            // Entry n removes the suffix w[n..].
            let mut suffix = 0.0;
            let mut rev = Vec::with_capacity(n + 1);
            rev.push(0.0);
            for (i, &x) in w.iter().enumerate().rev() {
                suffix += 1.0 - x;
                rev.push(suffix / (n - i) as f64);
            }
            rev.reverse();
            out = rev;
        }
        MetricKind::Iadd => {
            let mut sum = 0.0;
            out.push(0.0);
            for &x in w {
                sum += x;
                out.push(sum);
            }
        }
        MetricKind::Iarl => {
            let mut sum = 0.0;
            out.push(0.0);
            for &x in w {
                sum += 1.0 - (hazard + (1.0 - hazard) * x);
                out.push(sum);
            }
        }
    }
    if sign < 0.0 {
        for v in &mut out {
            *v = -*v;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Polynomial monotonicity checker
// ---------------------------------------------------------------------------

/// Result of [`check_polynomial_monotonicity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonotonicityReport {
    /// The polynomial extension is entrywise increasing for every table order.
    pub entrywise: bool,
    /// Additionally increasing under appending a new coordinate.
    pub appending: bool,
}

/// Check the sufficient linear-inequality conditions under which a family of
/// symmetric polynomials `f_p(u) = Σ_k C_{p,k}·e_k(u)` (elementary symmetric
/// basis, `p` = arity) is entrywise increasing, and additionally increasing
/// under appending a coordinate.
///
/// `coeffs[p − 1]` holds `C_{p,1}..C_{p,p}`. The conditions are sufficient
/// only: a family may fail them yet still be monotone on the sorted domain
/// the selection rules operate on.
pub fn check_polynomial_monotonicity(coeffs: &[Vec<f64>]) -> Result<MonotonicityReport> {
    for (i, row) in coeffs.iter().enumerate() {
        if row.len() != i + 1 {
            return Err(Error::InvalidParameter(String::from(
                "row p must hold exactly the coefficients C_{p,1}..C_{p,p}",
            )));
        }
    }
    let mut entrywise = true;
    for (i, row) in coeffs.iter().enumerate() {
        let p = i + 1;
        for j in 0..p {
            // Σ_{k=1}^{p−j} C_{p,k}·binom(p−j−1, k−1)
            let s: f64 = (1..=p - j)
                .map(|k| row[k - 1] * binomial(p - j - 1, k - 1))
                .sum();
            if s < 0.0 {
                entrywise = false;
            }
        }
    }
    let mut appending = entrywise;
    for (i, pair) in coeffs.windows(2).enumerate() {
        let p = i + 1;
        let (row, next) = (&pair[0], &pair[1]);
        for j in 0..=p {
            // Σ_{k=1}^{p−j} (C_{p+1,k} − C_{p,k})·binom(p−j, k)
            let s: f64 = (1..=p - j)
                .map(|k| (next[k - 1] - row[k - 1]) * binomial(p - j, k))
                .sum();
            if s < 0.0 {
                appending = false;
            }
        }
    }
    Ok(MonotonicityReport {
        entrywise,
        appending,
    })
}
