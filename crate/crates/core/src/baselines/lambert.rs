//! Lower real branch of the Lambert W function and the planar Laplace
//! radius it yields.

use std::f64::consts::E;

/// `W₋₁(x)` for `x ∈ [−1/e, 0)`: the solution `w ≤ −1` of `w·eʷ = x`.
/// Returns NaN outside the domain.
pub fn lambert_w_m1(x: f64) -> f64 {
    let branch = -1.0 / E;
    if !(x >= branch && x < 0.0) {
        if (x - branch).abs() < 1e-300 {
            return -1.0;
        }
        return f64::NAN;
    }
    if x == branch {
        return -1.0;
    }
    let mut w = if x < -0.25 {
        // Series around the branch point.
        let p = -(2.0 * (1.0 + E * x)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let fp = ew * (w + 1.0);
        let newton = w - f / fp;
        // Newton overshoots past the branch point near w = −1; Halley's
        // step is used whenever that happens.
        let next = if newton.is_finite() && newton < -1.0 {
            newton
        } else {
            let halley = w - f / (fp - (w + 2.0) * f / (2.0 * w + 2.0));
            if halley.is_finite() && halley <= -1.0 {
                halley
            } else {
                (w - 1.0) / 2.0 - 0.5
            }
        };
        let done = (next - w).abs() <= 1e-15 * w.abs();
        w = next;
        if done {
            break;
        }
    }
    w
}

/// Inverse radial CDF of the planar Laplace distribution with scale `ε`:
/// `r = −(W₋₁((p − 1)/e) + 1)/ε`.
pub fn planar_laplace_radius(epsilon: f64, p: f64) -> f64 {
    let w = lambert_w_m1((p - 1.0) / E);
    (-(w + 1.0) / epsilon).max(0.0)
}

/// `C(r) = 1 − (1 + εr)e^{−εr}`
pub fn planar_laplace_cdf(epsilon: f64, r: f64) -> f64 {
    1.0 - (1.0 + epsilon * r) * (-epsilon * r).exp()
}
