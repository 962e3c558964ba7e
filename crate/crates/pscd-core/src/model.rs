//! Observation models and ground-truth simulation.
//!
//! A stream emits draws from its pre-change density while `t ≤ τ` and from
//! its post-change density from `t = τ + 1` on. Only the log-likelihood ratio
//! `log q_t(x) − log p_t(x)` enters the posterior recursion, so each model
//! kind implements exactly that plus samplers for both regimes.
//!
//! [`GroundTruth`] fixes the change times and generates observations lazily:
//! the draw for stream `k` at time `t` is seeded by `(seed, k, t)` alone, so
//! results do not depend on traversal order or on which streams are still
//! active.

use alloc::format;
use alloc::vec::Vec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::prior::{ChangePointPrior, ChangeTime};

/// One observation from a stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Obs {
    /// Real-valued (or binary) sample.
    Scalar(f64),
    /// Circularly-symmetric complex sample, stored as its two real parts.
    Complex {
        /// Real part.
        re: f64,
        /// Imaginary part.
        im: f64,
    },
}

impl Obs {
    fn is_finite(self) -> bool {
        match self {
            Obs::Scalar(x) => x.is_finite(),
            Obs::Complex { re, im } => re.is_finite() && im.is_finite(),
        }
    }
}

/// Pre/post-change observation model, shared by all streams.
///
/// The complex-energy kind carries one spectrum-lift parameter per stream;
/// the other kinds are identical across streams.
#[derive(Debug, Clone)]
pub enum StreamModel {
    /// `N(mu0, sigma²) → N(mu1, sigma²)` mean shift.
    GaussianShift {
        /// Pre-change mean.
        mu0: f64,
        /// Post-change mean.
        mu1: f64,
        /// Common standard deviation.
        sigma: f64,
    },
    /// Circularly-symmetric complex Gaussian whose variance lifts from
    /// `sigma2` to `sigma2 + lambda[k]` at the change; the energy `|x|²`
    /// is the sufficient statistic.
    ComplexGaussianEnergy {
        /// Pre-change variance `σ²`.
        sigma2: f64,
        /// Per-stream post-change variance lift `λ_k > 0`.
        lambda: Vec<f64>,
    },
    /// `Bernoulli(p0) → Bernoulli(p1)` on `{0, 1}`.
    Bernoulli {
        /// Pre-change success probability.
        p0: f64,
        /// Post-change success probability.
        p1: f64,
    },
}

impl StreamModel {
    /// Validate parameters; `k` is the number of streams the model must serve.
    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            StreamModel::GaussianShift { sigma, mu0, mu1 } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "sigma must be positive, got {sigma}"
                    )));
                }
                if !mu0.is_finite() || !mu1.is_finite() {
                    return Err(Error::InvalidParameter("non-finite mean".into()));
                }
            }
            StreamModel::ComplexGaussianEnergy { sigma2, lambda } => {
                if !(sigma2.is_finite() && *sigma2 > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "sigma2 must be positive, got {sigma2}"
                    )));
                }
                if lambda.len() < k {
                    return Err(Error::InvalidParameter(format!(
                        "{} lambda entries for {k} streams",
                        lambda.len()
                    )));
                }
                if let Some(bad) = lambda.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
                    return Err(Error::InvalidParameter(format!(
                        "lambda entries must be positive, got {bad}"
                    )));
                }
            }
            StreamModel::Bernoulli { p0, p1 } => {
                for p in [p0, p1] {
                    if !(*p > 0.0 && *p < 1.0) {
                        return Err(Error::InvalidParameter(format!(
                            "Bernoulli probabilities must lie in (0, 1), got {p}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `log q_{k,t}(x) − log p_{k,t}(x)` for stream `k` at time `t`.
    pub fn log_likelihood_ratio(&self, k: usize, _t: usize, x: &Obs) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite("observation"));
        }
        match (self, x) {
            (StreamModel::GaussianShift { mu0, mu1, sigma }, Obs::Scalar(x)) => {
                let s2 = sigma * sigma;
                let d0 = x - mu0;
                let d1 = x - mu1;
                Ok((d0 * d0 - d1 * d1) / (2.0 * s2))
            }
            (StreamModel::ComplexGaussianEnergy { sigma2, lambda }, Obs::Complex { re, im }) => {
                let l = *lambda.get(k).ok_or(Error::InactiveStream { k })?;
                let energy = re * re + im * im;
                Ok(libm::log(sigma2 / (sigma2 + l)) + energy * l / (sigma2 * (sigma2 + l)))
            }
            (StreamModel::Bernoulli { p0, p1 }, Obs::Scalar(x)) => {
                if *x == 1.0 {
                    Ok(libm::log(p1 / p0))
                } else if *x == 0.0 {
                    Ok(libm::log((1.0 - p1) / (1.0 - p0)))
                } else {
                    Err(Error::ObservationMismatch(
                        "Bernoulli sample must be 0 or 1",
                    ))
                }
            }
            (StreamModel::GaussianShift { .. }, Obs::Complex { .. })
            | (StreamModel::Bernoulli { .. }, Obs::Complex { .. }) => Err(
                Error::ObservationMismatch("scalar model fed a complex sample"),
            ),
            (StreamModel::ComplexGaussianEnergy { .. }, Obs::Scalar(_)) => Err(
                Error::ObservationMismatch("complex model fed a scalar sample"),
            ),
        }
    }

    /// Draw one pre-change observation for stream `_k` (the pre-change law is
    /// the same for every stream in all built-in kinds).
    pub fn sample_pre<R: Rng + ?Sized>(&self, _k: usize, rng: &mut R) -> Obs {
        match self {
            StreamModel::GaussianShift { mu0, sigma, .. } => {
                let z: f64 = StandardNormal.sample(rng);
                Obs::Scalar(mu0 + sigma * z)
            }
            StreamModel::ComplexGaussianEnergy { sigma2, .. } => {
                sample_complex_normal(*sigma2, rng)
            }
            StreamModel::Bernoulli { p0, .. } => sample_bernoulli(*p0, rng),
        }
    }

    /// Draw one post-change observation for stream `k`.
    pub fn sample_post<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Obs {
        match self {
            StreamModel::GaussianShift { mu1, sigma, .. } => {
                let z: f64 = StandardNormal.sample(rng);
                Obs::Scalar(mu1 + sigma * z)
            }
            StreamModel::ComplexGaussianEnergy { sigma2, lambda } => {
                sample_complex_normal(sigma2 + lambda[k], rng)
            }
            StreamModel::Bernoulli { p1, .. } => sample_bernoulli(*p1, rng),
        }
    }
}

/// `CN(0, v)`: two independent real normals with variance `v/2`.
fn sample_complex_normal<R: Rng + ?Sized>(v: f64, rng: &mut R) -> Obs {
    let s = libm::sqrt(v / 2.0);
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Obs::Complex {
        re: s * re,
        im: s * im,
    }
}

fn sample_bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Obs {
    let r: f64 = rng.random();
    Obs::Scalar(if r < p { 1.0 } else { 0.0 })
}

// ---------------------------------------------------------------------------
// Deterministic seed derivation
// ---------------------------------------------------------------------------

/// Role tag for change-time draws.
pub const ROLE_TAU: u64 = 1;
/// Role tag for observation draws.
pub const ROLE_OBS: u64 = 2;
/// Role tag reserved for replication substreams (used by simulation harnesses).
pub const ROLE_REPLICATION: u64 = 3;
/// Role tag reserved for per-replication model parameter draws.
pub const ROLE_MODEL_PARAMS: u64 = 4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a substream seed from a master seed, a role tag, and two indices.
///
/// Stable across runs and platforms; every RNG in the crate is seeded through
/// this so replications, streams, and time steps never share state.
#[must_use]
pub fn derive_seed(seed: u64, role: u64, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ role);
    h = splitmix64(h ^ a);
    splitmix64(h ^ b)
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

/// Where a sequential run gets its observations.
pub trait ObservationSource {
    /// Number of streams available.
    fn streams(&self) -> usize;
    /// Observation for stream `k` at time `t ≥ 1`.
    fn observe(&mut self, k: usize, t: usize) -> Obs;
}

/// Sampled change times plus a lazy observation generator.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Change time per stream.
    pub tau: Vec<ChangeTime>,
    model: StreamModel,
    seed: u64,
}

/// Draw i.i.d. change times for `k` streams and wire up lazy observations.
///
/// Deterministic given `seed`: change times and every observation are
/// reproducible bit for bit.
pub fn sample_truth(
    model: &StreamModel,
    prior: &ChangePointPrior,
    k: usize,
    seed: u64,
) -> Result<GroundTruth> {
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one stream".into()));
    }
    model.validate(k)?;
    let tau = (0..k)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, ROLE_TAU, i as u64, 0));
            prior.sample(&mut rng)
        })
        .collect();
    Ok(GroundTruth {
        tau,
        model: model.clone(),
        seed,
    })
}

impl ObservationSource for GroundTruth {
    fn streams(&self) -> usize {
        self.tau.len()
    }

    fn observe(&mut self, k: usize, t: usize) -> Obs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.seed, ROLE_OBS, k as u64, t as u64));
        // Pre-change while t ≤ τ, post-change from τ + 1 on.
        let pre = match self.tau[k] {
            ChangeTime::At(s) => t <= s,
            ChangeTime::Never => true,
        };
        if pre {
            self.model.sample_pre(k, &mut rng)
        } else {
            self.model.sample_post(k, &mut rng)
        }
    }
}

/// Fixed observation matrix, for tests and replays.
///
/// `data[k][t − 1]` is the observation of stream `k` at time `t`; reading past
/// the stored horizon panics.
#[derive(Debug, Clone)]
pub struct ReplayFeed {
    data: Vec<Vec<Obs>>,
}

impl ReplayFeed {
    /// Wrap a per-stream observation matrix.
    #[must_use]
    pub fn new(data: Vec<Vec<Obs>>) -> Self {
        Self { data }
    }
}

impl ObservationSource for ReplayFeed {
    fn streams(&self) -> usize {
        self.data.len()
    }

    fn observe(&mut self, k: usize, t: usize) -> Obs {
        self.data[k][t - 1]
    }
}
