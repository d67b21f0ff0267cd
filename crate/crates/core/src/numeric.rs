//! Numerically stable scalar helpers shared by the probability and loss code.
//!
//! Every log-of-sum in the crate goes through [`logsumexp`]; nothing
//! exponentiates a raw reward directly.

/// log(Σ exp(x_i)), guarded against overflow by max-subtraction.
///
/// Returns `-inf` for an empty slice (the empty sum).
pub fn logsumexp(xs: &[f64]) -> f64 {
    let mx = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    let sum: f64 = xs.iter().map(|&x| (x - mx).exp()).sum();
    mx + sum.ln()
}

/// log(e^a + e^b) without materializing either exponential.
pub fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// ln(1 + e^x), accurate in both tails.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// 1 / (1 + e^{-x}) without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log sigmoid(x) = -softplus(-x).
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Writes softmax(xs) into `out` (overwriting), returning logsumexp(xs).
pub fn softmax_into(xs: &[f64], out: &mut [f64]) -> f64 {
    debug_assert_eq!(xs.len(), out.len());
    let lse = logsumexp(xs);
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = (x - lse).exp();
    }
    lse
}

/// Euclidean norm.
pub fn l2_norm(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Dot product; lengths must agree.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central finite-difference gradient of `f` at `at`, step `h` per coordinate.
pub fn finite_diff_grad<F: FnMut(&[f64]) -> f64>(mut f: F, at: &[f64], h: f64) -> Vec<f64> {
    let mut x = at.to_vec();
    let mut g = vec![0.0; at.len()];
    for i in 0..at.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(&x);
        x[i] = orig - h;
        let fm = f(&x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Largest elementwise relative error between two gradients,
/// |a-b| / max(|a|, |b|, 1e-4).
///
/// The floor keeps near-zero components meaningful: a central difference at
/// h = 1e-5 carries ~1e-10 of cancellation noise on O(1) losses, which would
/// otherwise dominate the ratio exactly where both gradients vanish.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-4))
        .fold(0.0, f64::max)
}
