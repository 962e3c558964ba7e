//! Change-point priors.
//!
//! Each stream's change time `τ` is drawn i.i.d. from a prior over
//! `{0, 1, 2, ...} ∪ {∞}`; the atom at ∞ models streams that never change.
//! Two kinds are supported: a geometric law thinned by the atom, and an
//! explicit head table (for shaped priors such as negative-binomial masses).
//! Masses are evaluated lazily via [`ChangePointPrior::mass`]; survival values
//! `π̄_t = P(τ ≥ t)` follow the exact prefix recursion `π̄_{t+1} = π̄_t − π_t`
//! with `π̄_0 = 1`, so `π̄_t − π̄_{t+1} = π_t` holds bitwise.

use alloc::format;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};

/// A change time: a finite step index or "never".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChangeTime {
    /// Change takes effect after time `t` (observations at `t+1, t+2, ...`
    /// are post-change).
    At(usize),
    /// The stream never changes.
    Never,
}

impl ChangeTime {
    /// `τ < t`: the change happened strictly before time `t`.
    #[must_use]
    pub fn before(self, t: usize) -> bool {
        matches!(self, ChangeTime::At(s) if s < t)
    }

    /// `τ > t`: the stream is strictly pre-change at time `t`.
    #[must_use]
    pub fn after(self, t: usize) -> bool {
        match self {
            ChangeTime::At(s) => s > t,
            ChangeTime::Never => true,
        }
    }
}

/// Mass residual the head table may leave uncovered before construction fails.
const HEAD_MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
enum PriorKind {
    GeometricWithAtom { pi_inf: f64, theta: f64 },
    TabulatedWithAtom { head: Vec<f64>, pi_inf: f64 },
}

/// Prior distribution of a change time.
#[derive(Debug, Clone)]
pub struct ChangePointPrior {
    kind: PriorKind,
}

impl ChangePointPrior {
    /// Geometric masses `π_t = (1 − π_∞)·θ·(1 − θ)^t` plus an atom `π_∞`.
    pub fn geometric_with_atom(pi_inf: f64, theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi_inf) {
            return Err(Error::InvalidParameter(format!(
                "pi_inf must lie in [0, 1], got {pi_inf}"
            )));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "theta must lie in (0, 1], got {theta}"
            )));
        }
        Ok(Self {
            kind: PriorKind::GeometricWithAtom { pi_inf, theta },
        })
    }

    /// Explicit masses `π_0, π_1, ...` plus an atom `π_∞`.
    ///
    /// The head must enumerate essentially all finite mass: construction fails
    /// unless `|Σ head − (1 − π_∞)| < 1e-9`. Mass beyond the head is treated
    /// as zero, so survival plateaus at the atom.
    pub fn tabulated_with_atom(head: Vec<f64>, pi_inf: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi_inf) {
            return Err(Error::InvalidParameter(format!(
                "pi_inf must lie in [0, 1], got {pi_inf}"
            )));
        }
        if let Some(bad) = head.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(Error::InvalidParameter(format!(
                "head masses must lie in [0, 1], got {bad}"
            )));
        }
        let total: f64 = head.iter().sum();
        if (total - (1.0 - pi_inf)).abs() >= HEAD_MASS_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "head mass {total} does not cover 1 - pi_inf = {} within {HEAD_MASS_TOLERANCE:e}",
                1.0 - pi_inf
            )));
        }
        Ok(Self {
            kind: PriorKind::TabulatedWithAtom { head, pi_inf },
        })
    }

    /// Prior mass `π_t` at a finite time, or `π_∞` for [`ChangeTime::Never`].
    #[must_use]
    pub fn mass(&self, t: ChangeTime) -> f64 {
        match (&self.kind, t) {
            (PriorKind::GeometricWithAtom { pi_inf, theta }, ChangeTime::At(t)) => {
                (1.0 - pi_inf) * theta * libm::pow(1.0 - theta, t as f64)
            }
            (PriorKind::GeometricWithAtom { pi_inf, .. }, ChangeTime::Never) => *pi_inf,
            (PriorKind::TabulatedWithAtom { head, .. }, ChangeTime::At(t)) => {
                head.get(t).copied().unwrap_or(0.0)
            }
            (PriorKind::TabulatedWithAtom { pi_inf, .. }, ChangeTime::Never) => *pi_inf,
        }
    }

    /// Survival mass `π̄_t = P(τ ≥ t)` via the exact prefix recursion.
    ///
    /// Errors once the recursion is no longer strictly positive, since the
    /// posterior recursion divides by `π̄`.
    pub fn survival(&self, t: usize) -> Result<f64> {
        let mut s = 1.0;
        for u in 0..t {
            s -= self.mass(ChangeTime::At(u));
        }
        if s <= 0.0 {
            return Err(Error::SurvivalExhausted { t });
        }
        Ok(s)
    }

    /// Prior hazard `π_t / π̄_t`, the probability of changing exactly now
    /// given no change so far.
    pub fn hazard(&self, t: usize) -> Result<f64> {
        Ok(self.mass(ChangeTime::At(t)) / self.survival(t)?)
    }

    /// Draw a change time by inverting the CDF.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChangeTime {
        let r: f64 = rng.random();
        match &self.kind {
            PriorKind::GeometricWithAtom { pi_inf, theta } => {
                if r >= 1.0 - pi_inf {
                    return ChangeTime::Never;
                }
                if *theta >= 1.0 {
                    return ChangeTime::At(0);
                }
                // Smallest t with r < (1 − π_∞)(1 − (1 − θ)^{t+1}), i.e. the
                // smallest t with t + 1 > q below.
                let q = libm::log1p(-r / (1.0 - pi_inf)) / libm::log1p(-theta);
                ChangeTime::At(libm::floor(q) as usize)
            }
            PriorKind::TabulatedWithAtom { head, .. } => {
                let mut cum = 0.0;
                for (t, m) in head.iter().enumerate() {
                    cum += m;
                    if r < cum {
                        return ChangeTime::At(t);
                    }
                }
                // Residual head mass (< 1e-9 by construction) lands here too.
                ChangeTime::Never
            }
        }
    }
}
