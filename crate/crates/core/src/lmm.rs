//! Linear mixed model with a subject random intercept:
//!
//! ```text
//! y_it = β₀ + b_i + β₁ t + β₂ g_i + β₃ g_i t + ε_it,   b_i ~ N(0, σ²_s),  ε_it ~ N(0, σ²_e)
//! ```
//!
//! fit by maximum likelihood. With λ = σ²_s/σ²_e the per-subject covariance is
//! σ²_e (I + λJ), whose inverse is (I − cJ)/σ²_e with c = λ/(1 + mλ), so β and
//! σ²_e profile out in closed form from per-subject sufficient statistics and
//! only λ is searched numerically.

use std::collections::HashMap;

use nalgebra::{Cholesky, Matrix4, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpmodel::{GpParams, GpSimulator, ObservationGrid, Trajectory};
use crate::numeric::{binomial_se, derive_seed, rng_from_seed};
use crate::special::{normal_quantile, normal_two_sided_p};
use crate::twosample::{Arm, Method, TestResult};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_LAMBDA_LO: f64 = -14.0;
const LN_LAMBDA_HI: f64 = 10.0;
const GRID_POINTS: usize = 49;

/// One observation in long format.
#[derive(Clone, Debug, PartialEq)]
pub struct LongRow {
    pub subject: String,
    pub week: f64,
    pub group: Arm,
    pub value: f64,
}

/// All observations of one subject.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectSeries {
    pub group: Arm,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl SubjectSeries {
    /// Observed entries of a trajectory on `grid`.
    pub fn from_trajectory(group: Arm, x: &Trajectory, grid: &ObservationGrid) -> Self {
        let mut times = Vec::with_capacity(x.len());
        let mut values = Vec::with_capacity(x.len());
        for (v, &t) in x.values.iter().zip(grid.times()) {
            if let Some(v) = v {
                times.push(t);
                values.push(*v);
            }
        }
        Self {
            group,
            times,
            values,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmmFit {
    /// (β₀, β₁, β₂, β₃): intercept, time, group, group × time.
    pub beta: [f64; 4],
    pub sigma2_subject: f64,
    pub sigma2_resid: f64,
    pub se_beta3: f64,
    pub loglik: f64,
    /// σ²_s is at (or numerically indistinguishable from) zero.
    pub boundary: bool,
    pub n_obs: usize,
    #[serde(rename = "n_T")]
    pub n_t: usize,
    #[serde(rename = "n_C")]
    pub n_c: usize,
}

#[derive(Clone, Debug, Default)]
pub struct LmmConfig {
    /// Fix λ = σ²_s/σ²_e instead of estimating it.
    pub fixed_ratio: Option<f64>,
}

struct Suff {
    m: f64,
    a: Matrix4<f64>,
    b: Vector4<f64>,
    c: Vector4<f64>,
    s: f64,
    q: f64,
}

fn sufficient(x: &SubjectSeries) -> Suff {
    let g = if x.group == Arm::T { 1.0 } else { 0.0 };
    let mut a = Matrix4::zeros();
    let mut b = Vector4::zeros();
    let mut c = Vector4::zeros();
    let (mut s, mut q) = (0.0, 0.0);
    for (&t, &y) in x.times.iter().zip(&x.values) {
        let row = Vector4::new(1.0, t, g, g * t);
        a += row * row.transpose();
        b += row;
        c += row * y;
        s += y;
        q += y * y;
    }
    Suff {
        m: x.times.len() as f64,
        a,
        b,
        c,
        s,
        q,
    }
}

struct Profile {
    beta: Vector4<f64>,
    sigma2_e: f64,
    loglik: f64,
    m_inv: Matrix4<f64>,
}

fn profile(stats: &[Suff], n_obs: f64, lambda: f64) -> Option<Profile> {
    let mut m = Matrix4::zeros();
    let mut v = Vector4::zeros();
    let mut rss = 0.0;
    let mut log_det = 0.0;
    for st in stats {
        let c = lambda / (1.0 + st.m * lambda);
        m += st.a - st.b * st.b.transpose() * c;
        v += st.c - st.b * (c * st.s);
        rss += st.q - c * st.s * st.s;
        log_det += (st.m * lambda).ln_1p();
    }
    let chol = Cholesky::new(m)?;
    let beta = chol.solve(&v);
    let rss = rss - beta.dot(&v);
    if !(rss > 0.0) {
        return None;
    }
    let sigma2_e = rss / n_obs;
    let loglik = -0.5 * (n_obs * (LN_2PI + sigma2_e.ln() + 1.0) + log_det);
    Some(Profile {
        beta,
        sigma2_e,
        loglik,
        m_inv: chol.inverse(),
    })
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo < 1e-10 {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Group long-format rows by subject, in order of first appearance.
pub fn subjects_from_rows(rows: &[LongRow]) -> Result<Vec<SubjectSeries>> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut out: Vec<SubjectSeries> = Vec::new();
    for r in rows {
        if !(r.week.is_finite() && r.value.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite week or value for subject {}",
                r.subject
            )));
        }
        let k = *index.entry(r.subject.as_str()).or_insert_with(|| {
            out.push(SubjectSeries {
                group: r.group,
                times: Vec::new(),
                values: Vec::new(),
            });
            out.len() - 1
        });
        if out[k].group != r.group {
            return Err(Error::InvalidInput(format!(
                "subject {} appears in both groups",
                r.subject
            )));
        }
        out[k].times.push(r.week);
        out[k].values.push(r.value);
    }
    Ok(out)
}

pub fn fit_lmm(rows: &[LongRow]) -> Result<LmmFit> {
    fit_lmm_subjects(&subjects_from_rows(rows)?, &LmmConfig::default())
}

pub fn fit_lmm_subjects(subjects: &[SubjectSeries], config: &LmmConfig) -> Result<LmmFit> {
    let n_t = subjects.iter().filter(|s| s.group == Arm::T).count();
    let n_c = subjects.len() - n_t;
    if n_t < 2 || n_c < 2 {
        return Err(Error::InvalidInput(format!(
            "LMM needs at least 2 subjects per group (got {n_t} T, {n_c} C)"
        )));
    }
    if subjects.iter().any(|s| s.times.len() < 2) {
        return Err(Error::InvalidInput(
            "every subject needs at least 2 time points".into(),
        ));
    }
    let stats: Vec<Suff> = subjects.iter().map(sufficient).collect();
    let n_obs: usize = subjects.iter().map(|s| s.times.len()).sum();
    let nf = n_obs as f64;
    let base = profile(&stats, nf, 0.0).ok_or_else(|| {
        Error::Singular("fixed-effects design is not identifiable (need distinct times in both groups)".into())
    })?;

    let (lambda, prof) = if let Some(l) = config.fixed_ratio {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(Error::InvalidInput("fixed variance ratio must be >= 0".into()));
        }
        let p = profile(&stats, nf, l)
            .ok_or_else(|| Error::Singular("profile failed at the fixed ratio".into()))?;
        (l, p)
    } else {
        let ll = |u: f64| profile(&stats, nf, u.exp()).map_or(f64::NEG_INFINITY, |p| p.loglik);
        let step = (LN_LAMBDA_HI - LN_LAMBDA_LO) / (GRID_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..GRID_POINTS).map(|i| LN_LAMBDA_LO + step * i as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&u| ll(u)).collect();
        let best = (0..GRID_POINTS)
            .max_by(|&i, &j| vals[i].total_cmp(&vals[j]))
            .unwrap();
        let lo = grid[best.saturating_sub(1)];
        let hi = grid[(best + 1).min(GRID_POINTS - 1)];
        let u = golden_max(ll, lo, hi);
        match profile(&stats, nf, u.exp()) {
            Some(p) if p.loglik > base.loglik => (u.exp(), p),
            _ => (0.0, base),
        }
    };

    let boundary = lambda <= LN_LAMBDA_LO.exp() * 1.0001;
    let se_beta3 = (prof.sigma2_e * prof.m_inv[(3, 3)]).sqrt();
    Ok(LmmFit {
        beta: [prof.beta[0], prof.beta[1], prof.beta[2], prof.beta[3]],
        sigma2_subject: lambda * prof.sigma2_e,
        sigma2_resid: prof.sigma2_e,
        se_beta3,
        loglik: prof.loglik,
        boundary,
        n_obs,
        n_t,
        n_c,
    })
}

/// Log-likelihood at arbitrary (β, σ²_s, σ²_e) by the compound-symmetry formula.
pub fn lmm_log_likelihood(
    subjects: &[SubjectSeries],
    beta: [f64; 4],
    sigma2_subject: f64,
    sigma2_resid: f64,
) -> f64 {
    let lambda = sigma2_subject / sigma2_resid;
    let b = Vector4::from(beta);
    let mut total = 0.0;
    for s in subjects {
        let g = if s.group == Arm::T { 1.0 } else { 0.0 };
        let m = s.times.len() as f64;
        let c = lambda / (1.0 + m * lambda);
        let r: Vec<f64> = s
            .times
            .iter()
            .zip(&s.values)
            .map(|(&t, &y)| y - b.dot(&Vector4::new(1.0, t, g, g * t)))
            .collect();
        let sum: f64 = r.iter().sum();
        let ss: f64 = r.iter().map(|v| v * v).sum();
        let quad = (ss - c * sum * sum) / sigma2_resid;
        let log_det = m * sigma2_resid.ln() + (m * lambda).ln_1p();
        total += -0.5 * (m * LN_2PI + log_det + quad);
    }
    total
}

/// Two-sided Wald test of β₃ = 0 against the standard normal.
pub fn lmm_interaction_test(fit: &LmmFit, alpha: f64) -> Result<TestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1) (got {alpha})")));
    }
    if !(fit.se_beta3 > 0.0) {
        return Err(Error::Singular("interaction standard error is zero".into()));
    }
    let z = fit.beta[3] / fit.se_beta3;
    let threshold = normal_quantile(1.0 - alpha / 2.0);
    Ok(TestResult {
        method: Method::LmmWald,
        statistic: z.abs(),
        threshold,
        p_value: normal_two_sided_p(z),
        reject: z.abs() > threshold,
        n_T: fit.n_t,
        n_C: fit.n_c,
        alpha,
        seed: None,
        n_perm: None,
        dof1: None,
        dof2: None,
        caveat: fit
            .boundary
            .then(|| "random-intercept variance estimated at the zero boundary".to_string()),
    })
}

/// Data-generating model for LMM power simulations.
#[derive(Clone, Debug)]
pub enum LmmGenerator {
    /// Per-subject GP trajectories; arms differ only through their parameters.
    Gp {
        control: GpParams,
        treated: GpParams,
        span: f64,
    },
    /// The LMM itself.
    Lmm {
        beta: [f64; 4],
        sigma2_subject: f64,
        sigma2_resid: f64,
        span: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McPower {
    pub power: f64,
    pub se: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

fn simulate_lmm_subject<R: Rng + ?Sized>(
    group: Arm,
    times: &[f64],
    beta: [f64; 4],
    sigma2_subject: f64,
    sigma2_resid: f64,
    rng: &mut R,
) -> SubjectSeries {
    let g = if group == Arm::T { 1.0 } else { 0.0 };
    let b_i = sigma2_subject.sqrt() * rng.sample::<f64, _>(StandardNormal);
    let values = times
        .iter()
        .map(|&t| {
            let e: f64 = rng.sample(StandardNormal);
            beta[0] + b_i + beta[1] * t + beta[2] * g + beta[3] * g * t + sigma2_resid.sqrt() * e
        })
        .collect();
    SubjectSeries {
        group,
        times: times.to_vec(),
        values,
    }
}

/// Simulated trial datasets from a generator, one per replicate.
pub fn simulate_lmm_dataset(
    generator: &LmmGenerator,
    n_per_arm: usize,
    n_timepoints: usize,
    seed: u64,
) -> Result<Vec<SubjectSeries>> {
    let mut rng = rng_from_seed(seed);
    match generator {
        LmmGenerator::Gp {
            control,
            treated,
            span,
        } => {
            let grid = ObservationGrid::spanning(n_timepoints, *span)?;
            let sim_c = GpSimulator::new(control, &grid)?;
            let sim_t = GpSimulator::new(treated, &grid)?;
            let mut out = Vec::with_capacity(2 * n_per_arm);
            for x in sim_t.draw(n_per_arm, "t", &mut rng) {
                out.push(SubjectSeries::from_trajectory(Arm::T, &x, &grid));
            }
            for x in sim_c.draw(n_per_arm, "c", &mut rng) {
                out.push(SubjectSeries::from_trajectory(Arm::C, &x, &grid));
            }
            Ok(out)
        }
        LmmGenerator::Lmm {
            beta,
            sigma2_subject,
            sigma2_resid,
            span,
        } => {
            let grid = ObservationGrid::spanning(n_timepoints, *span)?;
            let mut out = Vec::with_capacity(2 * n_per_arm);
            for arm in [Arm::T, Arm::C] {
                for _ in 0..n_per_arm {
                    out.push(simulate_lmm_subject(
                        arm,
                        grid.times(),
                        *beta,
                        *sigma2_subject,
                        *sigma2_resid,
                        &mut rng,
                    ));
                }
            }
            Ok(out)
        }
    }
}

/// Monte Carlo power of the interaction test; failed fits are counted and
/// excluded from the rate.
pub fn lmm_power_mc(
    generator: &LmmGenerator,
    n_per_arm: usize,
    n_timepoints: usize,
    alpha: f64,
    n_sims: usize,
    seed: u64,
) -> Result<McPower> {
    if n_sims == 0 {
        return Err(Error::InvalidInput("n_sims must be >= 1".into()));
    }
    // Surface generator errors (bad parameters) once, up front.
    simulate_lmm_dataset(generator, n_per_arm.min(2), n_timepoints, seed)?;
    let outcomes: Vec<Option<bool>> = (0..n_sims)
        .into_par_iter()
        .map(|r| {
            let data = simulate_lmm_dataset(generator, n_per_arm, n_timepoints, derive_seed(seed, r as u64)).ok()?;
            let fit = fit_lmm_subjects(&data, &LmmConfig::default()).ok()?;
            lmm_interaction_test(&fit, alpha).ok().map(|t| t.reject)
        })
        .collect();
    let n_ok = outcomes.iter().filter(|o| o.is_some()).count();
    let rejects = outcomes.iter().filter(|o| **o == Some(true)).count();
    let power = if n_ok > 0 { rejects as f64 / n_ok as f64 } else { f64::NAN };
    Ok(McPower {
        power,
        se: binomial_se(power, n_ok),
        n_ok,
        n_failed: n_sims - n_ok,
    })
}

/// Long-format rows for two arms of trajectories on a common grid.
pub fn long_rows(
    treated: &[Trajectory],
    control: &[Trajectory],
    grid: &ObservationGrid,
) -> Vec<LongRow> {
    let mut rows = Vec::new();
    for (arm, set) in [(Arm::T, treated), (Arm::C, control)] {
        for x in set {
            for (v, &t) in x.values.iter().zip(grid.times()) {
                if let Some(v) = v {
                    rows.push(LongRow {
                        subject: x.subject_id.clone(),
                        week: t,
                        group: arm,
                        value: *v,
                    });
                }
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn toy(seed: u64, beta3: f64, s2s: f64, n: usize, m: usize) -> Vec<SubjectSeries> {
        simulate_lmm_dataset(
            &LmmGenerator::Lmm {
                beta: [1.0, -0.2, 0.3, beta3],
                sigma2_subject: s2s,
                sigma2_resid: 0.5,
                span: 10.0,
            },
            n,
            m,
            seed,
        )
        .unwrap()
    }

    fn design(subjects: &[SubjectSeries]) -> (DMatrix<f64>, DVector<f64>) {
        let rows: Vec<[f64; 4]> = subjects
            .iter()
            .flat_map(|s| {
                let g = if s.group == Arm::T { 1.0 } else { 0.0 };
                s.times.iter().map(move |&t| [1.0, t, g, g * t])
            })
            .collect();
        let x = DMatrix::from_fn(rows.len(), 4, |i, j| rows[i][j]);
        let y = DVector::from_iterator(rows.len(), subjects.iter().flat_map(|s| s.values.iter().copied()));
        (x, y)
    }

    #[test]
    fn zero_ratio_is_ols() {
        let data = toy(1, 0.1, 0.0, 6, 5);
        let fit = fit_lmm_subjects(&data, &LmmConfig { fixed_ratio: Some(0.0) }).unwrap();
        let (x, y) = design(&data);
        let xtx = x.transpose() * &x;
        let ols = xtx.lu().solve(&(x.transpose() * &y)).unwrap();
        for j in 0..4 {
            assert_abs_diff_eq!(fit.beta[j], ols[j], epsilon = 1e-8);
        }
    }

    #[test]
    fn profile_matches_brute_force_density() {
        let data = toy(2, 0.05, 0.8, 3, 4);
        let fit = fit_lmm_subjects(&data, &LmmConfig::default()).unwrap();
        let mut brute = 0.0;
        let b = Vector4::from(fit.beta);
        for s in &data {
            let m = s.times.len();
            let g = if s.group == Arm::T { 1.0 } else { 0.0 };
            let cov = DMatrix::from_fn(m, m, |i, j| {
                fit.sigma2_subject + if i == j { fit.sigma2_resid } else { 0.0 }
            });
            let r = DVector::from_fn(m, |i, _| {
                s.values[i] - b.dot(&Vector4::new(1.0, s.times[i], g, g * s.times[i]))
            });
            let inv = cov.clone().try_inverse().unwrap();
            brute += -0.5 * (m as f64 * LN_2PI + cov.determinant().ln() + (r.transpose() * inv * &r)[(0, 0)]);
        }
        assert_abs_diff_eq!(fit.loglik, brute, epsilon = 1e-8);
        assert_abs_diff_eq!(
            lmm_log_likelihood(&data, fit.beta, fit.sigma2_subject, fit.sigma2_resid),
            brute,
            epsilon = 1e-8
        );
    }

    #[test]
    fn fit_is_a_profile_maximum() {
        let data = toy(3, 0.0, 1.0, 8, 6);
        let fit = fit_lmm_subjects(&data, &LmmConfig::default()).unwrap();
        for scale in [0.8, 0.95, 1.05, 1.25] {
            let ll = lmm_log_likelihood(&data, fit.beta, fit.sigma2_subject * scale, fit.sigma2_resid);
            assert!(ll <= fit.loglik + 1e-9);
        }
    }

    #[test]
    fn identical_groups_give_zero_group_effects() {
        let mut data = toy(4, 0.0, 1.0, 5, 6);
        let controls: Vec<SubjectSeries> = data.iter().filter(|s| s.group == Arm::C).cloned().collect();
        data = controls
            .iter()
            .map(|s| SubjectSeries { group: Arm::T, ..s.clone() })
            .chain(controls.iter().cloned())
            .collect();
        let fit = fit_lmm_subjects(&data, &LmmConfig::default()).unwrap();
        assert_abs_diff_eq!(fit.beta[2], 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.beta[3], 0.0, epsilon = 1e-8);
        let test = lmm_interaction_test(&fit, 0.05).unwrap();
        assert_abs_diff_eq!(test.p_value, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn time_rescaling_keeps_fitted_values() {
        let data = toy(5, 0.1, 0.7, 5, 5);
        let scaled: Vec<SubjectSeries> = data
            .iter()
            .map(|s| SubjectSeries {
                times: s.times.iter().map(|t| t * 7.0).collect(),
                ..s.clone()
            })
            .collect();
        let a = fit_lmm_subjects(&data, &LmmConfig::default()).unwrap();
        let b = fit_lmm_subjects(&scaled, &LmmConfig::default()).unwrap();
        assert_abs_diff_eq!(a.beta[3], 7.0 * b.beta[3], epsilon = 1e-7);
        assert_abs_diff_eq!(a.loglik, b.loglik, epsilon = 1e-7);
        assert_abs_diff_eq!(a.beta[3] / a.se_beta3, b.beta[3] / b.se_beta3, epsilon = 1e-6);
    }

    #[test]
    fn relabeling_subjects_does_not_change_the_fit() {
        let data = toy(6, 0.1, 0.7, 5, 5);
        let mut rev = data.clone();
        rev.reverse();
        let a = fit_lmm_subjects(&data, &LmmConfig::default()).unwrap();
        let b = fit_lmm_subjects(&rev, &LmmConfig::default()).unwrap();
        assert_abs_diff_eq!(a.beta[3], b.beta[3], epsilon = 1e-9);
        assert_abs_diff_eq!(a.loglik, b.loglik, epsilon = 1e-8);
    }

    #[test]
    fn boundary_is_flagged() {
        let data = toy(7, 0.0, 0.0, 4, 8);
        let fit = fit_lmm_subjects(&data, &LmmConfig::default()).unwrap();
        if fit.boundary {
            let t = lmm_interaction_test(&fit, 0.05).unwrap();
            assert!(t.caveat.is_some());
        }
        assert!(fit.sigma2_subject >= 0.0);
    }

    #[test]
    fn wald_borderline() {
        let fit = LmmFit {
            beta: [0.0, 0.0, 0.0, 1.96],
            sigma2_subject: 1.0,
            sigma2_resid: 1.0,
            se_beta3: 1.0,
            loglik: 0.0,
            boundary: false,
            n_obs: 10,
            n_t: 2,
            n_c: 2,
        };
        let t = lmm_interaction_test(&fit, 0.05).unwrap();
        assert_abs_diff_eq!(t.p_value, 0.05, epsilon = 1e-3);
        assert!(t.reject);
        let zero = LmmFit { beta: [0.0; 4], ..fit };
        assert_eq!(lmm_interaction_test(&zero, 0.05).unwrap().p_value, 1.0);
    }

    #[test]
    fn input_validation() {
        let data = toy(8, 0.0, 1.0, 1, 5);
        assert!(fit_lmm_subjects(&data, &LmmConfig::default()).is_err());
        let rows = vec![
            LongRow { subject: "a".into(), week: 1.0, group: Arm::T, value: 0.0 },
            LongRow { subject: "a".into(), week: 2.0, group: Arm::C, value: 0.0 },
        ];
        assert!(fit_lmm(&rows).is_err());
    }

    #[test]
    fn rows_group_by_subject() {
        let rows = vec![
            LongRow { subject: "a".into(), week: 1.0, group: Arm::T, value: 0.5 },
            LongRow { subject: "b".into(), week: 1.0, group: Arm::C, value: 0.1 },
            LongRow { subject: "a".into(), week: 2.0, group: Arm::T, value: 0.7 },
        ];
        let s = subjects_from_rows(&rows).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].times, vec![1.0, 2.0]);
        assert_eq!(s[1].values, vec![0.1]);
    }
}
