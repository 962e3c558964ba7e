//! Config parsing: strictness, kind dispatch, overrides, and the
//! negative-binomial head synthesis.

use pscd::config::{ConfigFile, Overrides};
use pscd::harness::{ModelTemplate, StoppingRule};
use pscd_core::metrics::MetricKind;
use pscd_core::model::StreamModel;
use pscd_core::prior::ChangeTime;

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

const GAUSSIAN: &str = r#"
[experiment]
name = "unit"

[model]
kind = "gaussian-shift"
mu0 = 0.0
mu1 = 1.0
sigma = 1.0

[prior]
kind = "geometric"
pi_inf = 0.2
theta = 0.1

[policy]
rule = "simplified"
alpha = 0.1
risk = "lfdr"
utility = "neg-iadd"

[run]
K = 10
horizon = 50
replications = 4
seed = 7
"#;

fn parse(text: &str) -> ConfigFile {
    ConfigFile::parse(text).expect("fixture parses")
}

fn parse_err(text: &str) -> String {
    format!("{:#}", ConfigFile::parse(text).expect_err("must fail"))
}

fn experiment_err(text: &str) -> String {
    format!("{:#}", parse(text).experiment().expect_err("must fail"))
}

/// Patch one whole section of the gaussian fixture.
fn with_section(header: &str, body: &str) -> String {
    let mut out = String::new();
    let mut skipping = false;
    for line in GAUSSIAN.lines() {
        if line.starts_with('[') {
            skipping = line == header;
            if skipping {
                out.push_str(header);
                out.push('\n');
                out.push_str(body);
                out.push('\n');
            }
        }
        if !skipping {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Round trip and defaults
// ---------------------------------------------------------------------------

#[test]
fn gaussian_round_trip() {
    let file = parse(GAUSSIAN);
    assert_eq!(file.name(), "unit");
    assert_eq!(file.out_dir(), None);

    let cfg = file.experiment().expect("assembles");
    assert_eq!(cfg.streams, 10);
    assert_eq!(cfg.horizon, 50);
    assert_eq!(cfg.deadline, 50, "deadline defaults to the horizon");
    assert_eq!(cfg.replications, 4);
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.pair.alpha, 0.1);
    assert_eq!(cfg.pair.risk.kind, MetricKind::Lfdr);
    assert_eq!(cfg.pair.utility.kind, MetricKind::Iadd);
    assert!(cfg.pair.utility.negate);
    assert_eq!(cfg.gfwer_m, 1, "non-family-wise risk defaults to m = 1");
    assert_eq!(cfg.gfwer_at, StoppingRule::Deadline);
    match &cfg.model {
        ModelTemplate::Fixed(StreamModel::GaussianShift { mu0, mu1, sigma }) => {
            assert_eq!((*mu0, *mu1, *sigma), (0.0, 1.0, 1.0));
        }
        other => panic!("wrong template: {other:?}"),
    }
    assert_eq!(cfg.prior.mass(ChangeTime::Never), 0.2);
    assert!((cfg.prior.mass(ChangeTime::At(0)) - 0.8 * 0.1).abs() < 1e-15);
}

#[test]
fn explicit_deadline_and_gfwer_knobs() {
    let body = "K = 10\nhorizon = 50\ndeadline = 20\nreplications = 4\nseed = 7\n\
                gfwer_m = 3\ngfwer_at = \"first-detection\"";
    let cfg = parse(&with_section("[run]", body))
        .experiment()
        .expect("assembles");
    assert_eq!(cfg.deadline, 20);
    assert_eq!(cfg.gfwer_m, 3);
    assert_eq!(cfg.gfwer_at, StoppingRule::FirstDetection);
}

#[test]
fn glfwer_risk_sets_default_event_order() {
    let body = "rule = \"simplified\"\nalpha = 0.05\nrisk = \"glfwer:4\"\nutility = \"iarl\"";
    let cfg = parse(&with_section("[policy]", body))
        .experiment()
        .expect("assembles");
    assert_eq!(cfg.pair.risk.kind, MetricKind::Glfwer { m: 4 });
    assert_eq!(cfg.gfwer_m, 4, "event order follows the risk's own order");
}

#[test]
fn presets_assemble() {
    for name in [
        "sim-gaussian-lfdr",
        "case-spectrum",
        "sim-nb-lfnr",
        "counterexample-mdp",
    ] {
        let path = format!("{}/../../presets/{name}.toml", env!("CARGO_MANIFEST_DIR"));
        let file = ConfigFile::load(path.as_ref()).expect(name);
        file.experiment().expect(name);
        assert!(file.out_dir().is_some(), "{name} sets report.out_dir");
    }
}

// ---------------------------------------------------------------------------
// Strict parsing
// ---------------------------------------------------------------------------

#[test]
fn unknown_keys_rejected_per_section() {
    for (header, body) in [
        ("[model]", "kind = \"gaussian-shift\"\nmu0 = 0.0\nmu1 = 1.0\nsigma = 1.0\nmu2 = 2.0"),
        ("[prior]", "kind = \"geometric\"\npi_inf = 0.2\ntheta = 0.1\nshape = 3.0"),
        ("[policy]", "rule = \"simplified\"\nalpha = 0.1\nrisk = \"lfdr\"\nutility = \"neg-iadd\"\nbeta = 0.5"),
        ("[run]", "K = 10\nhorizon = 50\nreplications = 4\nseed = 7\nwarmup = 5"),
    ] {
        let err = parse_err(&with_section(header, body));
        assert!(err.contains("unknown field"), "{header}: {err}");
    }
}

#[test]
fn lowercase_k_rejected() {
    let err = parse_err(&with_section(
        "[run]",
        "k = 10\nhorizon = 50\nreplications = 4\nseed = 7",
    ));
    assert!(err.contains("unknown field"), "{err}");
}

#[test]
fn misapplied_parameters_rejected() {
    // Bernoulli models have no Gaussian mean.
    let err = experiment_err(&with_section(
        "[model]",
        "kind = \"bernoulli\"\np0 = 0.3\np1 = 0.7\nmu0 = 0.0",
    ));
    assert!(err.contains("model.mu0 does not apply"), "{err}");

    // Geometric priors have no tabulated head.
    let err = experiment_err(&with_section(
        "[prior]",
        "kind = \"geometric\"\npi_inf = 0.2\ntheta = 0.1\nhead = [0.5, 0.3]",
    ));
    assert!(err.contains("prior.head does not apply"), "{err}");

    // Fixed gains and a gain range cannot both be given.
    let err = experiment_err(&with_section(
        "[model]",
        "kind = \"complex-energy\"\nsigma2 = 2.0\nlambda = [1.0]\nlambda_range = [1.0, 2.0]",
    ));
    assert!(err.contains("mutually exclusive"), "{err}");

    // ... and at least one of them must be.
    let err = experiment_err(&with_section(
        "[model]",
        "kind = \"complex-energy\"\nsigma2 = 2.0",
    ));
    assert!(err.contains("lambda or model.lambda_range"), "{err}");
}

#[test]
fn missing_required_parameter_rejected() {
    let err = experiment_err(&with_section(
        "[model]",
        "kind = \"gaussian-shift\"\nmu0 = 0.0\nmu1 = 1.0",
    ));
    assert!(err.contains("needs model.sigma"), "{err}");
}

#[test]
fn unknown_kinds_rejected() {
    let err = experiment_err(&with_section("[model]", "kind = \"cauchy\""));
    assert!(err.contains("unknown model.kind"), "{err}");

    let err = experiment_err(&with_section("[prior]", "kind = \"zeta\"\npi_inf = 0.2"));
    assert!(err.contains("unknown prior.kind"), "{err}");

    let err = experiment_err(&with_section(
        "[policy]",
        "rule = \"greedy\"\nalpha = 0.1\nrisk = \"lfdr\"\nutility = \"neg-iadd\"",
    ));
    assert!(err.contains("unknown policy.rule"), "{err}");
}

#[test]
fn off_menu_pair_accepted_but_flagged() {
    // Maximizing IADD is a strange goal, but off-menu pairs still run; the
    // prefix-rule guarantee is what they lose.
    let cfg = parse(&with_section(
        "[policy]",
        "rule = \"simplified\"\nalpha = 0.1\nrisk = \"lfdr\"\nutility = \"iadd\"",
    ))
    .experiment()
    .expect("assembles");
    assert!(!cfg.pair.is_admissible());
    assert!(parse(GAUSSIAN).experiment().unwrap().pair.is_admissible());
}

#[test]
fn bad_gfwer_at_rejected() {
    let body = "K = 10\nhorizon = 50\nreplications = 4\nseed = 7\ngfwer_at = \"midpoint\"";
    let err = experiment_err(&with_section("[run]", body));
    assert!(err.contains("unknown run.gfwer_at"), "{err}");
}

// ---------------------------------------------------------------------------
// Geometry validation
// ---------------------------------------------------------------------------

#[test]
fn geometry_bounds_enforced() {
    for (body, needle) in [
        (
            "K = 0\nhorizon = 50\nreplications = 4\nseed = 7",
            "at least one stream",
        ),
        ("K = 10\nhorizon = 0\nreplications = 4\nseed = 7", "horizon"),
        (
            "K = 10\nhorizon = 50\nreplications = 0\nseed = 7",
            "replication",
        ),
        (
            "K = 10\nhorizon = 50\ndeadline = 1\nreplications = 4\nseed = 7",
            "deadline",
        ),
        (
            "K = 10\nhorizon = 50\ndeadline = 51\nreplications = 4\nseed = 7",
            "deadline",
        ),
    ] {
        let err = experiment_err(&with_section("[run]", body));
        assert!(err.contains(needle), "{body}: {err}");
    }
}

// ---------------------------------------------------------------------------
// Overrides
// ---------------------------------------------------------------------------

#[test]
fn overrides_replace_fields() {
    let mut file = parse(GAUSSIAN);
    file.apply(&Overrides {
        reps: Some(9),
        seed: Some(99),
        out: Some("elsewhere".into()),
        rule: Some("general".to_string()),
        k: Some(3),
    })
    .expect("applies");
    let cfg = file.experiment().expect("assembles");
    assert_eq!(cfg.replications, 9);
    assert_eq!(cfg.seed, 99);
    assert_eq!(cfg.streams, 3);
    assert_eq!(file.out_dir(), Some("elsewhere".as_ref()));
    assert_eq!(cfg.rule, pscd_core::policy::SelectionRule::General);
}

#[test]
fn empty_overrides_change_nothing() {
    let mut file = parse(GAUSSIAN);
    file.apply(&Overrides::default()).expect("applies");
    let cfg = file.experiment().expect("assembles");
    assert_eq!((cfg.replications, cfg.seed, cfg.streams), (4, 7, 10));
}

#[test]
fn bad_rule_override_rejected() {
    let mut file = parse(GAUSSIAN);
    let err = file
        .apply(&Overrides {
            rule: Some("greedy".to_string()),
            ..Overrides::default()
        })
        .expect_err("must fail");
    assert!(format!("{err:#}").contains("unknown policy.rule"));
}

// ---------------------------------------------------------------------------
// Negative-binomial head
// ---------------------------------------------------------------------------

/// `mass(t) = C(t+r-1, r-1) θ^r (1-θ)^t (1-π_∞)` for r = 3, θ = 0.1,
/// π_∞ = 0.2 reduces to `(t+2)(t+1)/2 · 0.0008 · 0.9^t`.
#[test]
fn negative_binomial_head_matches_closed_form() {
    let body = "kind = \"negative-binomial\"\npi_inf = 0.2\ntheta = 0.1\nr = 3";
    let cfg = parse(&with_section("[prior]", body))
        .experiment()
        .expect("assembles");
    for t in [0usize, 1, 2, 5, 40, 150] {
        let want = (t as f64 + 2.0) * (t as f64 + 1.0) / 2.0 * 0.0008 * 0.9f64.powi(t as i32);
        let got = cfg.prior.mass(ChangeTime::At(t));
        assert!((got - want).abs() < 1e-12, "mass({t}) = {got}, want {want}");
    }
    assert_eq!(cfg.prior.mass(ChangeTime::Never), 0.2);
    // The synthesized head leaves at most the truncation sliver unaccounted.
    let total: f64 = (0..2000).map(|t| cfg.prior.mass(ChangeTime::At(t))).sum();
    assert!((total - 0.8).abs() < 1e-9, "head mass {total}");
}

#[test]
fn negative_binomial_order_one_is_geometric() {
    let body = "kind = \"negative-binomial\"\npi_inf = 0.2\ntheta = 0.1\nr = 1";
    let nb = parse(&with_section("[prior]", body))
        .experiment()
        .expect("assembles")
        .prior;
    let geo = parse(GAUSSIAN).experiment().expect("assembles").prior;
    for t in 0..200 {
        let (a, b) = (nb.mass(ChangeTime::At(t)), geo.mass(ChangeTime::At(t)));
        assert!((a - b).abs() < 1e-12, "mass({t}): {a} vs {b}");
    }
}

#[test]
fn negative_binomial_bad_parameters_rejected() {
    for body in [
        "kind = \"negative-binomial\"\npi_inf = 0.2\ntheta = 1.0\nr = 3",
        "kind = \"negative-binomial\"\npi_inf = 1.0\ntheta = 0.1\nr = 3",
        "kind = \"negative-binomial\"\npi_inf = 0.2\ntheta = 0.1\nr = 0",
    ] {
        let err = experiment_err(&with_section("[prior]", body));
        assert!(err.contains("prior."), "{body}: {err}");
    }
}
