//! Special functions behind the F-family distributions.
//!
//! The regularized incomplete beta function is evaluated by the modified
//! Lentz continued fraction with the usual symmetry switch. The noncentral
//! F distribution function is the Poisson mixture of incomplete beta terms,
//! summed outward from the modal Poisson index.

use libm::{erfc, lgamma as ln_gamma};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

const CF_MAX_ITER: usize = 10_000;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;

/// Truncation target for the Poisson tail of the noncentral series.
pub const NONCENTRAL_TAIL_TOL: f64 = 1e-12;
/// Hard cap on the number of Poisson terms.
pub const NONCENTRAL_MAX_TERMS: usize = 100_000;

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta I_x(a, b).
pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    beta_reg_split(a, b, x, 1.0 - x)
}

/// I_x(a, b) where the caller supplies both `x` and `1 - x`.
///
/// Passing the complement separately keeps full precision when `x` is
/// within rounding of 1, which happens for F quantities at large arguments.
pub fn beta_reg_split(a: f64, b: f64, x: f64, xc: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if xc <= 0.0 {
        return 1.0;
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        1.0 - beta_cf_scaled(b, a, xc, x)
    } else {
        beta_cf_scaled(a, b, x, xc)
    }
}

/// x^a (1-x)^b / (a B(a,b)) times the continued fraction.
fn beta_cf_scaled(a: f64, b: f64, x: f64, xc: f64) -> f64 {
    let ln_front = a * x.ln() + b * xc.ln() - ln_beta(a, b);
    let front = ln_front.exp() / a;
    if front == 0.0 {
        return 0.0;
    }

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    front * h
}

/// Beta-scale argument y = d1 x / (d1 x + d2) and its complement.
fn f_to_beta(x: f64, d1: f64, d2: f64) -> (f64, f64) {
    let denom = d1 * x + d2;
    (d1 * x / denom, d2 / denom)
}

/// Central F distribution function.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let (y, yc) = f_to_beta(x, d1, d2);
    beta_reg_split(d1 / 2.0, d2 / 2.0, y, yc)
}

/// Central F survival function 1 - F(x).
pub fn f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let (y, yc) = f_to_beta(x, d1, d2);
    beta_reg_split(d2 / 2.0, d1 / 2.0, yc, y)
}

/// Upper quantile: the x with P(F > x) = `upper_tail`.
///
/// Solved by bisection on the beta scale, where the search interval is
/// bounded, then mapped back to the F scale.
pub fn f_upper_quantile(upper_tail: f64, d1: f64, d2: f64) -> f64 {
    assert!(upper_tail > 0.0 && upper_tail < 1.0);
    // I_{1-y}(d2/2, d1/2) is decreasing in y.
    let (a, b) = (d2 / 2.0, d1 / 2.0);
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let sf = beta_reg_split(a, b, 1.0 - mid, mid);
        if sf > upper_tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y = 0.5 * (lo + hi);
    d2 * y / (d1 * (1.0 - y))
}

/// Noncentral F distribution function F(x; d1, d2, delta).
///
/// Sums e^{-λ} λ^k / k! · I_y(d1/2 + k, d2/2) with λ = δ/2, starting at the
/// modal index and walking in both directions until the geometric bound on
/// the remaining Poisson mass falls below [`NONCENTRAL_TAIL_TOL`].
pub fn noncentral_f_cdf(x: f64, d1: f64, d2: f64, delta: f64) -> Result<f64> {
    if !(d1 >= 1.0 && d2 >= 1.0) {
        return Err(Error::InvalidInput(format!(
            "degrees of freedom must be >= 1 (got {d1}, {d2})"
        )));
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidInput(format!(
            "noncentrality must be finite and >= 0 (got {delta})"
        )));
    }
    if x.is_nan() {
        return Err(Error::InvalidInput("x is NaN".into()));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if delta == 0.0 {
        return Ok(f_cdf(x, d1, d2));
    }
    if x.is_infinite() {
        return Ok(1.0);
    }

    let lambda = delta / 2.0;
    let (y, yc) = f_to_beta(x, d1, d2);
    let a0 = d1 / 2.0;
    let b = d2 / 2.0;
    let term = |k: usize| beta_reg_split(a0 + k as f64, b, y, yc);

    let mode = lambda.floor() as usize;
    let w_mode = (-lambda + mode as f64 * lambda.ln() - ln_gamma(mode as f64 + 1.0)).exp();
    let mut sum = w_mode * term(mode);
    let mut terms = 1usize;

    // Downward: w_{k-1} = w_k k / λ, ratio bounded by k/λ < 1.
    let mut w = w_mode;
    let mut k = mode;
    while k > 0 {
        w *= k as f64 / lambda;
        k -= 1;
        sum += w * term(k);
        terms += 1;
        let r = k as f64 / lambda;
        if r < 1.0 && w * r / (1.0 - r) < NONCENTRAL_TAIL_TOL {
            break;
        }
        if w == 0.0 {
            break;
        }
    }

    // Upward: w_{k+1} = w_k λ / (k+1), ratio bounded by λ/(k+2) once past the mode.
    let mut w = w_mode;
    let mut k = mode;
    loop {
        k += 1;
        w *= lambda / k as f64;
        sum += w * term(k);
        terms += 1;
        let r = lambda / (k as f64 + 1.0);
        if r < 1.0 && w * r / (1.0 - r) < NONCENTRAL_TAIL_TOL {
            break;
        }
        if terms >= NONCENTRAL_MAX_TERMS {
            return Err(Error::SeriesNonConvergence {
                terms,
                partial: sum,
            });
        }
    }
    Ok(sum.clamp(0.0, 1.0))
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Two-sided upper tail P(|Z| > |z|).
pub fn normal_two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{ContinuousCDF, FisherSnedecor};

    #[test]
    fn beta_reg_endpoints_and_uniform() {
        assert_eq!(beta_reg(2.0, 3.0, 0.0), 0.0);
        assert_eq!(beta_reg(2.0, 3.0, 1.0), 1.0);
        assert_abs_diff_eq!(beta_reg(1.0, 1.0, 0.3), 0.3, epsilon = 1e-15);
        // I_x(a, 1) = x^a
        assert_abs_diff_eq!(beta_reg(3.5, 1.0, 0.6), 0.6f64.powf(3.5), epsilon = 1e-14);
        // I_x(1, b) = 1 - (1-x)^b
        assert_abs_diff_eq!(beta_reg(1.0, 4.0, 0.2), 1.0 - 0.8f64.powi(4), epsilon = 1e-14);
    }

    #[test]
    fn beta_reg_symmetry() {
        for &(a, b, x) in &[(0.5, 7.0, 0.1), (12.0, 3.0, 0.77), (40.0, 40.0, 0.5)] {
            let lhs = beta_reg(a, b, x);
            let rhs = 1.0 - beta_reg(b, a, 1.0 - x);
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-13);
        }
    }

    #[test]
    fn f_cdf_agrees_with_statrs() {
        for &(d1, d2) in &[(1.0, 10.0), (3.0, 36.0), (6.0, 53.0), (2.0, 2.0)] {
            let dist = FisherSnedecor::new(d1, d2).unwrap();
            for &x in &[0.01, 0.3, 1.0, 2.5, 4.96, 12.0] {
                assert_abs_diff_eq!(f_cdf(x, d1, d2), dist.cdf(x), epsilon = 1e-12);
                assert_abs_diff_eq!(f_sf(x, d1, d2), 1.0 - dist.cdf(x), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn f_cdf_at_t_squared() {
        // t_{0.975, 10} = 2.2281388519649385, so F(1,10) at t^2 is 0.95.
        let t = 2.228_138_851_964_938_5_f64;
        assert_abs_diff_eq!(f_cdf(t * t, 1.0, 10.0), 0.95, epsilon = 1e-11);
    }

    #[test]
    fn upper_quantile_inverts_sf() {
        for &(d1, d2, a) in &[(1.0, 10.0, 0.05), (6.0, 53.0, 0.01), (3.0, 36.0, 0.5)] {
            let q = f_upper_quantile(a, d1, d2);
            assert_abs_diff_eq!(f_sf(q, d1, d2), a, epsilon = 1e-13);
        }
    }

    #[test]
    fn noncentral_zero_delta_is_central() {
        for &x in &[0.2, 1.0, 3.7] {
            assert_eq!(noncentral_f_cdf(x, 4.0, 17.0, 0.0).unwrap(), f_cdf(x, 4.0, 17.0));
        }
        assert_eq!(noncentral_f_cdf(0.0, 4.0, 17.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn noncentral_rejects_bad_dof() {
        assert!(noncentral_f_cdf(1.0, 0.5, 10.0, 1.0).is_err());
        assert!(noncentral_f_cdf(1.0, 2.0, 10.0, -1.0).is_err());
    }

    #[test]
    fn noncentral_decreasing_in_delta() {
        let mut prev = 1.0;
        for i in 0..40 {
            let delta = i as f64 * 2.5;
            let c = noncentral_f_cdf(2.0, 3.0, 20.0, delta).unwrap();
            assert!(c <= prev + 1e-15, "delta {delta}: {c} > {prev}");
            prev = c;
        }
        assert!(noncentral_f_cdf(2.0, 3.0, 20.0, 100.0).unwrap() < 1e-6);
    }

    #[test]
    fn normal_helpers() {
        assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-16);
        assert_abs_diff_eq!(normal_quantile(0.975), 1.959_963_984_540_054, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_two_sided_p(1.959_963_984_540_054), 0.05, epsilon = 1e-12);
        assert_eq!(normal_two_sided_p(0.0), 1.0);
    }
}
