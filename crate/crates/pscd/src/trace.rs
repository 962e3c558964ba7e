//! On-disk JSON form of a decision trace.
//!
//! The stored shape mirrors [`DecisionTrace`] field for field so a file can
//! be inspected or produced by other tooling. Floats travel as shortest
//! round-trip decimals, so a write/read cycle preserves every value exactly.
//! Reading rejects unknown fields and misaligned lengths.

use std::fs;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};

use pscd_core::policy::{DecisionTrace, StepRecord};
use pscd_core::prior::ChangeTime;

// ---------------------------------------------------------------------------
// Stored shape
// ---------------------------------------------------------------------------

/// Change time as stored: `{"at": 3}` or `"never"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum StoredChangeTime {
    At(usize),
    Never,
}

impl From<ChangeTime> for StoredChangeTime {
    fn from(ct: ChangeTime) -> Self {
        match ct {
            ChangeTime::At(t) => StoredChangeTime::At(t),
            ChangeTime::Never => StoredChangeTime::Never,
        }
    }
}

impl From<StoredChangeTime> for ChangeTime {
    fn from(ct: StoredChangeTime) -> Self {
        match ct {
            StoredChangeTime::At(t) => ChangeTime::At(t),
            StoredChangeTime::Never => ChangeTime::Never,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredStep {
    t: usize,
    active: Vec<usize>,
    w: Vec<f64>,
    hazard: f64,
    kept: Vec<usize>,
    risk_value: f64,
    utility_value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredTrace {
    streams: usize,
    horizon: usize,
    steps: Vec<StoredStep>,
    detection: Vec<Option<usize>>,
    tau: Option<Vec<StoredChangeTime>>,
}

// ---------------------------------------------------------------------------
// Read and write
// ---------------------------------------------------------------------------

/// Serialize `trace` as pretty-printed JSON at `path`.
pub fn write_trace(path: &Path, trace: &DecisionTrace) -> Result<()> {
    let stored = StoredTrace {
        streams: trace.streams,
        horizon: trace.horizon,
        steps: trace
            .steps
            .iter()
            .map(|s| StoredStep {
                t: s.t,
                active: s.active.clone(),
                w: s.w.clone(),
                hazard: s.hazard,
                kept: s.kept.clone(),
                risk_value: s.risk_value,
                utility_value: s.utility_value,
            })
            .collect(),
        detection: trace.detection.clone(),
        tau: trace
            .tau
            .as_ref()
            .map(|tau| tau.iter().copied().map(Into::into).collect()),
    };
    let mut bytes = serde_json::to_vec_pretty(&stored)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Read a trace back, checking the structural invariants the driver
/// guarantees: aligned posterior/active lengths, per-stream detection and
/// truth vectors, and consecutive step times.
pub fn read_trace(path: &Path) -> Result<DecisionTrace> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let stored: StoredTrace =
        serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    ensure!(
        stored.detection.len() == stored.streams,
        "detection needs one entry per stream"
    );
    if let Some(tau) = &stored.tau {
        ensure!(
            tau.len() == stored.streams,
            "tau needs one entry per stream"
        );
    }
    for (i, step) in stored.steps.iter().enumerate() {
        ensure!(step.t == i + 1, "step times must be consecutive from 1");
        ensure!(
            step.w.len() == step.active.len(),
            "step {}: w must align with the active set",
            step.t
        );
        ensure!(
            step.kept.len() <= step.active.len(),
            "step {}: kept cannot exceed the active set",
            step.t
        );
    }
    Ok(DecisionTrace {
        streams: stored.streams,
        horizon: stored.horizon,
        steps: stored
            .steps
            .into_iter()
            .map(|s| StepRecord {
                t: s.t,
                active: s.active,
                w: s.w,
                hazard: s.hazard,
                kept: s.kept,
                risk_value: s.risk_value,
                utility_value: s.utility_value,
            })
            .collect(),
        detection: stored.detection,
        tau: stored
            .tau
            .map(|tau| tau.into_iter().map(Into::into).collect()),
    })
}
