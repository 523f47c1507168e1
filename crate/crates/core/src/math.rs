//! Overflow-safe scalar helpers shared by the model, oracle and infomax code.

/// Logistic sigmoid evaluated without overflowing `exp` for large |x|.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Log-sum-exp over an iterator; `-inf` for an empty input.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Probabilities are clamped to `[ENTROPY_EPS, 1 - ENTROPY_EPS]` before taking logs.
pub const ENTROPY_EPS: f64 = 1e-12;

/// Entropy in nats of a Bernoulli(p) variable, with clamped probabilities.
#[inline]
pub fn binary_entropy(p: f64) -> f64 {
    let p = p.clamp(ENTROPY_EPS, 1.0 - ENTROPY_EPS);
    let q = 1.0 - p;
    -(p * p.ln() + q * q.ln())
}

/// `-p ln p` with the `0 ln 0 = 0` convention (no clamping).
#[inline]
pub fn neg_p_log_p(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.ln()
    }
}
