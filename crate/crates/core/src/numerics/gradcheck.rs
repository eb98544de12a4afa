//! Central-difference gradient oracle, independent of the tape. Tests feed
//! the same loss closure to both this and `backward` and compare.

use crate::scalar::Scalar;

/// Perturbation step used by the gradient test suites.
pub const FD_STEP: f64 = 1e-5;

/// Central finite differences: dᵢ = (f(x + h·eᵢ) − f(x − h·eᵢ)) / (2h).
pub fn central_difference<F: Scalar>(mut f: impl FnMut(&[F]) -> F, x: &[F], step: F) -> Vec<F> {
    let two = F::from_f64(2.0);
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let hi = f(&probe);
        probe[i] = x[i] - step;
        let lo = f(&probe);
        probe[i] = x[i];
        out.push((hi - lo) / (two * step));
    }
    out
}

/// Worst per-element relative error, floored at unit scale so near-zero
/// gradients are compared absolutely: |a−n| / max(|a|, |n|, 1).
pub fn max_relative_error<F: Scalar>(analytic: &[F], numeric: &[F]) -> F {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    let mut worst = F::zero();
    for (&a, &n) in analytic.iter().zip(numeric) {
        let denom = a.abs().max(n.abs()).max(F::one());
        let err = (a - n).abs() / denom;
        if err > worst {
            worst = err;
        }
    }
    worst
}
