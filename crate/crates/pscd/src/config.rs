//! TOML experiment configuration.
//!
//! One file fully determines a simulate run: model, change-time prior,
//! selection policy, run geometry, and report location. Parsing is strict:
//! unknown keys are rejected, and a parameter that does not apply to the
//! declared `kind` is rejected rather than ignored, so a typo cannot
//! silently fall back to a default. The committed files under `presets/`
//! are complete examples.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Deserialize;

use pscd_core::metrics::{MetricKind, MetricSpec, RiskUtilityPair};
use pscd_core::model::StreamModel;
use pscd_core::policy::SelectionRule;
use pscd_core::prior::ChangePointPrior;

use crate::harness::{ExperimentConfig, ModelTemplate, StoppingRule};

// ---------------------------------------------------------------------------
// File schema
// ---------------------------------------------------------------------------

/// Parsed experiment file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// `[experiment]` block.
    pub experiment: ExperimentSection,
    /// `[model]` block.
    pub model: ModelSection,
    /// `[prior]` block.
    pub prior: PriorSection,
    /// `[policy]` block.
    pub policy: PolicySection,
    /// `[run]` block.
    pub run: RunSection,
    /// `[report]` block; optional.
    #[serde(default)]
    pub report: ReportSection,
}

/// `[experiment]`: identification only.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Display name echoed in logs; not interpreted.
    pub name: String,
}

/// `[model]`: `kind` picks the family, the remaining keys are its
/// parameters. Keys belonging to another family are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// One of `gaussian-shift`, `complex-energy`, `bernoulli`.
    pub kind: String,
    /// Pre-change mean (gaussian-shift).
    pub mu0: Option<f64>,
    /// Post-change mean (gaussian-shift).
    pub mu1: Option<f64>,
    /// Common standard deviation (gaussian-shift).
    pub sigma: Option<f64>,
    /// Noise variance per complex component (complex-energy).
    pub sigma2: Option<f64>,
    /// Fixed per-stream gains (complex-energy).
    pub lambda: Option<Vec<f64>>,
    /// Gain range redrawn uniformly per replication (complex-energy).
    pub lambda_range: Option<[f64; 2]>,
    /// Pre-change success probability (bernoulli).
    pub p0: Option<f64>,
    /// Post-change success probability (bernoulli).
    pub p1: Option<f64>,
}

/// `[prior]`: geometric, negative-binomial (head synthesized), or an
/// explicit tabulated head; all carry an atom `pi_inf` at "never".
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    /// One of `geometric`, `negative-binomial`, `tabulated`.
    pub kind: String,
    /// Mass at "the stream never changes".
    pub pi_inf: Option<f64>,
    /// Success probability (geometric, negative-binomial).
    pub theta: Option<f64>,
    /// Success count (negative-binomial); `r = 1` recovers geometric.
    pub r: Option<u32>,
    /// Explicit masses at change times `0, 1, …` (tabulated).
    pub head: Option<Vec<f64>>,
}

/// `[policy]`: rule, tolerance, and the risk/utility functional names in
/// the same spelling `MetricSpec` parses (`lfdr`, `neg-iadd`, `glfwer:2`).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    /// `general` or `simplified`.
    pub rule: String,
    /// Tolerance `α` the risk must satisfy at every step.
    pub alpha: f64,
    /// Risk functional.
    pub risk: String,
    /// Utility functional.
    pub utility: String,
}

/// `[run]`: geometry and seed. `deadline` defaults to the horizon. The
/// optional `gfwer_m`/`gfwer_at` pick the family-wise error event reported
/// in the summary; `gfwer_m` defaults to the risk's own order when the risk
/// is a generalized family-wise error and to 1 otherwise.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Number of streams.
    #[serde(rename = "K")]
    pub k: usize,
    /// Steps per replication.
    pub horizon: usize,
    /// Aggregation deadline `N̄`; defaults to `horizon`.
    pub deadline: Option<usize>,
    /// Monte Carlo replication count.
    pub replications: usize,
    /// Master seed.
    pub seed: u64,
    /// Order of the reported family-wise error event.
    pub gfwer_m: Option<usize>,
    /// `deadline` (default) or `first-detection`.
    pub gfwer_at: Option<String>,
}

/// `[report]`: where `simulate` writes its CSV files.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    /// Output directory, created if missing; relative to the working
    /// directory. `--out` overrides it.
    pub out_dir: Option<PathBuf>,
}

/// Command line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Replaces `run.replications`.
    pub reps: Option<usize>,
    /// Replaces `run.seed`.
    pub seed: Option<u64>,
    /// Replaces `report.out_dir`.
    pub out: Option<PathBuf>,
    /// Replaces `policy.rule`.
    pub rule: Option<String>,
    /// Replaces `run.K`.
    pub k: Option<usize>,
}

// ---------------------------------------------------------------------------
// Parsing and assembly
// ---------------------------------------------------------------------------

impl ConfigFile {
    /// Parse `path`, rejecting unknown keys.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Parse config text directly.
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Apply command line overrides on top of the file.
    pub fn apply(&mut self, overrides: &Overrides) -> Result<()> {
        if let Some(reps) = overrides.reps {
            self.run.replications = reps;
        }
        if let Some(seed) = overrides.seed {
            self.run.seed = seed;
        }
        if let Some(k) = overrides.k {
            self.run.k = k;
        }
        if let Some(rule) = &overrides.rule {
            parse_rule(rule)?;
            self.policy.rule = rule.clone();
        }
        if let Some(out) = &overrides.out {
            self.report.out_dir = Some(out.clone());
        }
        Ok(())
    }

    /// Experiment display name.
    #[must_use]
    pub fn name(&self) -> &str {
        &self.experiment.name
    }

    /// Configured output directory, if any.
    #[must_use]
    pub fn out_dir(&self) -> Option<&Path> {
        self.report.out_dir.as_deref()
    }

    /// Build the harness configuration: construct the prior, the model
    /// template, and the risk/utility pair, then validate the geometry.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let pair = self.policy.pair()?;
        let gfwer_m = match self.run.gfwer_m {
            Some(m) => m,
            None => match pair.risk.kind {
                MetricKind::Glfwer { m } => m,
                _ => 1,
            },
        };
        let gfwer_at = match self.run.gfwer_at.as_deref() {
            None | Some("deadline") => StoppingRule::Deadline,
            Some("first-detection") => StoppingRule::FirstDetection,
            Some(other) => {
                bail!("unknown run.gfwer_at \"{other}\" (expected deadline or first-detection)")
            }
        };
        let cfg = ExperimentConfig {
            streams: self.run.k,
            horizon: self.run.horizon,
            deadline: self.run.deadline.unwrap_or(self.run.horizon),
            replications: self.run.replications,
            seed: self.run.seed,
            model: self.model.template()?,
            prior: self.prior.prior()?,
            pair,
            rule: parse_rule(&self.policy.rule)?,
            gfwer_m,
            gfwer_at,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_rule(name: &str) -> Result<SelectionRule> {
    match name {
        "general" => Ok(SelectionRule::General),
        "simplified" => Ok(SelectionRule::Simplified),
        other => bail!("unknown policy.rule \"{other}\" (expected general or simplified)"),
    }
}

/// Reject parameters that do not belong to the chosen kind.
fn reject_strays(section: &str, kind: &str, strays: &[(&str, bool)]) -> Result<()> {
    for (key, present) in strays {
        ensure!(
            !present,
            "{section}.{key} does not apply to {section}.kind = \"{kind}\""
        );
    }
    Ok(())
}

fn need<T: Clone>(value: &Option<T>, section: &str, key: &str, kind: &str) -> Result<T> {
    value
        .clone()
        .with_context(|| format!("{section}.kind = \"{kind}\" needs {section}.{key}"))
}

impl ModelSection {
    fn template(&self) -> Result<ModelTemplate> {
        let kind = self.kind.as_str();
        match kind {
            "gaussian-shift" => {
                reject_strays(
                    "model",
                    kind,
                    &[
                        ("sigma2", self.sigma2.is_some()),
                        ("lambda", self.lambda.is_some()),
                        ("lambda_range", self.lambda_range.is_some()),
                        ("p0", self.p0.is_some()),
                        ("p1", self.p1.is_some()),
                    ],
                )?;
                Ok(ModelTemplate::Fixed(StreamModel::GaussianShift {
                    mu0: need(&self.mu0, "model", "mu0", kind)?,
                    mu1: need(&self.mu1, "model", "mu1", kind)?,
                    sigma: need(&self.sigma, "model", "sigma", kind)?,
                }))
            }
            "complex-energy" => {
                reject_strays(
                    "model",
                    kind,
                    &[
                        ("mu0", self.mu0.is_some()),
                        ("mu1", self.mu1.is_some()),
                        ("sigma", self.sigma.is_some()),
                        ("p0", self.p0.is_some()),
                        ("p1", self.p1.is_some()),
                    ],
                )?;
                let sigma2 = need(&self.sigma2, "model", "sigma2", kind)?;
                match (&self.lambda, &self.lambda_range) {
                    (Some(lambda), None) => {
                        Ok(ModelTemplate::Fixed(StreamModel::ComplexGaussianEnergy {
                            sigma2,
                            lambda: lambda.clone(),
                        }))
                    }
                    (None, Some([lo, hi])) => Ok(ModelTemplate::ComplexEnergyUniform {
                        sigma2,
                        lo: *lo,
                        hi: *hi,
                    }),
                    (None, None) => {
                        bail!("model.kind = \"complex-energy\" needs model.lambda or model.lambda_range")
                    }
                    (Some(_), Some(_)) => {
                        bail!("model.lambda and model.lambda_range are mutually exclusive")
                    }
                }
            }
            "bernoulli" => {
                reject_strays(
                    "model",
                    kind,
                    &[
                        ("mu0", self.mu0.is_some()),
                        ("mu1", self.mu1.is_some()),
                        ("sigma", self.sigma.is_some()),
                        ("sigma2", self.sigma2.is_some()),
                        ("lambda", self.lambda.is_some()),
                        ("lambda_range", self.lambda_range.is_some()),
                    ],
                )?;
                Ok(ModelTemplate::Fixed(StreamModel::Bernoulli {
                    p0: need(&self.p0, "model", "p0", kind)?,
                    p1: need(&self.p1, "model", "p1", kind)?,
                }))
            }
            other => bail!(
                "unknown model.kind \"{other}\" (expected gaussian-shift, complex-energy, or bernoulli)"
            ),
        }
    }
}

impl PriorSection {
    fn prior(&self) -> Result<ChangePointPrior> {
        let kind = self.kind.as_str();
        match kind {
            "geometric" => {
                reject_strays(
                    "prior",
                    kind,
                    &[("r", self.r.is_some()), ("head", self.head.is_some())],
                )?;
                Ok(ChangePointPrior::geometric_with_atom(
                    need(&self.pi_inf, "prior", "pi_inf", kind)?,
                    need(&self.theta, "prior", "theta", kind)?,
                )?)
            }
            "negative-binomial" => {
                reject_strays("prior", kind, &[("head", self.head.is_some())])?;
                let pi_inf = need(&self.pi_inf, "prior", "pi_inf", kind)?;
                let head = negative_binomial_head(
                    pi_inf,
                    need(&self.theta, "prior", "theta", kind)?,
                    need(&self.r, "prior", "r", kind)?,
                )?;
                Ok(ChangePointPrior::tabulated_with_atom(head, pi_inf)?)
            }
            "tabulated" => {
                reject_strays(
                    "prior",
                    kind,
                    &[("theta", self.theta.is_some()), ("r", self.r.is_some())],
                )?;
                Ok(ChangePointPrior::tabulated_with_atom(
                    need(&self.head, "prior", "head", kind)?,
                    need(&self.pi_inf, "prior", "pi_inf", kind)?,
                )?)
            }
            other => bail!(
                "unknown prior.kind \"{other}\" (expected geometric, negative-binomial, or tabulated)"
            ),
        }
    }
}

impl PolicySection {
    fn pair(&self) -> Result<RiskUtilityPair> {
        let risk: MetricSpec = self
            .risk
            .parse()
            .with_context(|| format!("policy.risk = \"{}\"", self.risk))?;
        let utility: MetricSpec = self
            .utility
            .parse()
            .with_context(|| format!("policy.utility = \"{}\"", self.utility))?;
        Ok(RiskUtilityPair::new(risk, utility, self.alpha)?)
    }
}

/// Head masses of a negative-binomial change time: `mass(t) = C(t+r-1, r-1)
/// θ^r (1-θ)^t`, scaled to total `1 - pi_inf` and truncated once the
/// remaining tail drops below 1e-10 (well inside the tabulated prior's mass
/// tolerance). `sample` sends the truncated sliver to "never".
fn negative_binomial_head(pi_inf: f64, theta: f64, r: u32) -> Result<Vec<f64>> {
    ensure!(
        (0.0..1.0).contains(&pi_inf),
        "prior.pi_inf must lie in [0, 1)"
    );
    ensure!(theta > 0.0 && theta < 1.0, "prior.theta must lie in (0, 1)");
    ensure!(r >= 1, "prior.r must be at least 1");
    let scale = 1.0 - pi_inf;
    let mut head = Vec::new();
    let mut mass = scale * theta.powi(r as i32);
    let mut acc = 0.0;
    // Ratio recursion: mass(t+1)/mass(t) = (1-θ)(t+r)/(t+1).
    for t in 0..200_000usize {
        head.push(mass);
        acc += mass;
        if scale - acc < 1e-10 {
            return Ok(head);
        }
        mass *= (1.0 - theta) * (t as f64 + f64::from(r)) / (t as f64 + 1.0);
    }
    bail!("prior.theta = {theta} leaves too much tail mass to tabulate")
}
