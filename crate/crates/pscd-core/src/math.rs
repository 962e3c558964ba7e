//! Small numeric helpers shared across modules.
//!
//! Everything routes through `libm` so the crate builds without `std`.

/// `log(exp(a) + exp(b))` with `-inf` as the additive identity.
pub(crate) fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + libm::log1p(libm::exp(lo - hi))
}

/// `log(Σ exp(x_i))` over a slice; empty slices and all `-inf` yield `-inf`.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| libm::exp(x - hi)).sum();
    hi + libm::log(sum)
}

/// Logistic map `log q ↦ q/(q+1)`, saturating cleanly at 0 and 1.
pub(crate) fn logistic(logq: f64) -> f64 {
    if logq >= 0.0 {
        1.0 / (1.0 + libm::exp(-logq))
    } else {
        let e = libm::exp(logq);
        e / (1.0 + e)
    }
}

/// Binomial coefficient as a double (exact for the small orders used here).
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}
