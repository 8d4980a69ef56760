//! Power and sample size for the Hotelling test in Fisher-vector space.
//!
//! Under a fixed mean shift ν the scaled statistic
//! ((N − p − 1)/((N − 2)p))·T² is noncentral F(p, N − 1 − p; δ) with
//! δ = (n_T n_C / N) · νᵀΣ⁻¹ν.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::mean_vector;
use crate::special::{f_upper_quantile, noncentral_f_cdf};

/// Fraction of the disease effect that remains under treatment.
pub const DEFAULT_RHO: f64 = 0.4;
pub const DEFAULT_SAMPLE_CAP: usize = 1_000_000;
const LINEAR_SCAN_LIMIT: usize = 10_000;

/// √(νᵀ Σ⁻¹ ν).
pub fn effect_size(shift: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    if sigma.nrows() != shift.len() || sigma.ncols() != shift.len() {
        return Err(Error::InvalidInput("shift and covariance dimensions differ".into()));
    }
    let chol = Cholesky::new(sigma.clone())
        .ok_or_else(|| Error::Singular("covariance for the effect size is not positive definite".into()))?;
    Ok(shift.dot(&chol.solve(shift)).max(0.0).sqrt())
}

pub fn noncentrality(n_t: usize, n_c: usize, effect: f64) -> f64 {
    let (nt, nc) = (n_t as f64, n_c as f64);
    nt * nc / (nt + nc) * effect * effect
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1) (got {alpha})")));
    }
    Ok(())
}

fn feasible(n_t: usize, n_c: usize, p: usize) -> bool {
    n_t >= 1 && n_c >= 1 && n_t + n_c >= p + 2
}

/// P(F(p, N − 1 − p; δ) > f_{1−α}).
pub fn power_at(n_t: usize, n_c: usize, p: usize, alpha: f64, effect: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if p == 0 {
        return Err(Error::InvalidInput("dimension p must be >= 1".into()));
    }
    if !feasible(n_t, n_c, p) {
        return Err(Error::InvalidInput(format!(
            "design n_T = {n_t}, n_C = {n_c} leaves no denominator degrees of freedom for p = {p}"
        )));
    }
    if !(effect >= 0.0 && effect.is_finite()) {
        return Err(Error::InvalidInput(format!("effect must be finite and >= 0 (got {effect})")));
    }
    let d1 = p as f64;
    let d2 = (n_t + n_c - 1 - p) as f64;
    let crit = f_upper_quantile(alpha, d1, d2);
    let delta = noncentrality(n_t, n_c, effect);
    Ok((1.0 - noncentral_f_cdf(crit, d1, d2, delta)?).clamp(0.0, 1.0))
}

/// Lattice of designs for allocation ratio n_T : n_C = ratio : 1, indexed by n_C.
pub fn design_for(n_c: usize, ratio: f64) -> (usize, usize) {
    let n_t = ((ratio * n_c as f64).round() as usize).max(1);
    (n_t, n_c)
}

/// Split a total sample size by allocation ratio.
pub fn split_total(n_total: usize, ratio: f64) -> (usize, usize) {
    let n_t = (n_total as f64 * ratio / (1.0 + ratio)).round() as usize;
    let n_t = n_t.clamp(1, n_total.saturating_sub(1).max(1));
    (n_t, n_total - n_t)
}

pub fn sample_size_for_power(
    target_power: f64,
    p: usize,
    alpha: f64,
    effect: f64,
    ratio: f64,
) -> Result<(usize, usize)> {
    sample_size_for_power_capped(target_power, p, alpha, effect, ratio, DEFAULT_SAMPLE_CAP)
}

/// Smallest design on the allocation lattice reaching `target_power`.
/// Scans n_C upward from the feasibility boundary, switching to bisection once
/// the total passes 10⁴.
pub fn sample_size_for_power_capped(
    target_power: f64,
    p: usize,
    alpha: f64,
    effect: f64,
    ratio: f64,
    cap: usize,
) -> Result<(usize, usize)> {
    check_alpha(alpha)?;
    if !(target_power > alpha && target_power < 1.0) {
        return Err(Error::InvalidInput(format!(
            "target power must lie in (alpha, 1) (got {target_power})"
        )));
    }
    if !(effect > 0.0) {
        return Err(Error::InvalidInput("effect must be > 0".into()));
    }
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidInput("allocation ratio must be > 0".into()));
    }
    let total = |k: usize| {
        let (t, c) = design_for(k, ratio);
        t + c
    };
    let reaches = |k: usize| -> Result<bool> {
        let (t, c) = design_for(k, ratio);
        Ok(power_at(t, c, p, alpha, effect)? >= target_power)
    };

    let mut k = 1;
    while !feasible(design_for(k, ratio).0, k, p) {
        k += 1;
    }
    while total(k) <= LINEAR_SCAN_LIMIT {
        if reaches(k)? {
            return Ok(design_for(k, ratio));
        }
        k += 1;
    }
    // Bisection on (lo, hi] with reaches(lo) false.
    let mut lo = k - 1;
    let mut hi = k;
    while !reaches(hi)? {
        lo = hi;
        hi *= 2;
        if total(lo) > cap {
            return Err(Error::SampleSizeCap { cap });
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if reaches(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if total(hi) > cap {
        return Err(Error::SampleSizeCap { cap });
    }
    Ok(design_for(hi, ratio))
}

/// Treatment shifts the symptomatic mean embedding toward the asymptomatic
/// one, leaving a fraction ρ of the gap.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalAlternative {
    pub mu_a: DVector<f64>,
    pub mu_s: DVector<f64>,
    pub rho: f64,
}

impl LocalAlternative {
    pub fn new(mu_a: DVector<f64>, mu_s: DVector<f64>, rho: f64) -> Result<Self> {
        if mu_a.len() != mu_s.len() {
            return Err(Error::InvalidInput("mean embeddings differ in dimension".into()));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidInput(format!("rho must lie in [0, 1] (got {rho})")));
        }
        Ok(Self { mu_a, mu_s, rho })
    }

    /// (1 − ρ)(μ̂_A − μ̂_S).
    pub fn shift(&self) -> DVector<f64> {
        (&self.mu_a - &self.mu_s) * (1.0 - self.rho)
    }
}

pub fn local_alternative_from_cohorts(
    asymptomatic: &[DVector<f64>],
    symptomatic: &[DVector<f64>],
    rho: f64,
) -> Result<LocalAlternative> {
    if asymptomatic.is_empty() || symptomatic.is_empty() {
        return Err(Error::InvalidInput("historical cohorts must be non-empty".into()));
    }
    let d = asymptomatic[0].len();
    if asymptomatic.iter().chain(symptomatic).any(|v| v.len() != d) {
        return Err(Error::InvalidInput("feature dimension mismatch between cohorts".into()));
    }
    LocalAlternative::new(mean_vector(asymptomatic), mean_vector(symptomatic), rho)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub n_total: usize,
    #[serde(rename = "n_T")]
    pub n_t: usize,
    #[serde(rename = "n_C")]
    pub n_c: usize,
    pub power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub ratio: f64,
    pub alpha: f64,
    pub p: usize,
    pub effect: f64,
    pub rows: Vec<PowerRow>,
}

impl PowerCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_total,n_T,n_C,power\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.n_total, r.n_t, r.n_c, r.power));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// First grid row whose power reaches `target`.
    pub fn first_reaching(&self, target: f64) -> Option<&PowerRow> {
        self.rows.iter().find(|r| r.power >= target)
    }

    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].power >= w[0].power)
    }
}

/// Power at each total sample size. Totals must be increasing; infeasible
/// totals are an error.
pub fn power_curve(
    n_totals: &[usize],
    ratio: f64,
    p: usize,
    alpha: f64,
    effect: f64,
) -> Result<PowerCurve> {
    if n_totals.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("sample-size grid must be increasing".into()));
    }
    let rows = n_totals
        .par_iter()
        .map(|&n| {
            let (n_t, n_c) = split_total(n, ratio);
            Ok(PowerRow {
                n_total: n,
                n_t,
                n_c,
                power: power_at(n_t, n_c, p, alpha, effect)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let curve = PowerCurve {
        ratio,
        alpha,
        p,
        effect,
        rows,
    };
    if !curve.is_monotone() {
        return Err(Error::InvalidInput(
            "power curve is not monotone on this grid; use a grid compatible with the allocation ratio".into(),
        ));
    }
    Ok(curve)
}
