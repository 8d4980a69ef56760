use kernel_rct::lmm::*;
use kernel_rct::twosample::Arm;
use nalgebra::{DMatrix, DVector};

fn balanced(seed: u64) -> Vec<SubjectSeries> {
    let gen = LmmGenerator::Lmm {
        beta: [1.0, 0.05, -0.3, 0.02],
        sigma2_subject: 0.7,
        sigma2_resid: 0.4,
        span: 20.0,
    };
    simulate_lmm_dataset(&gen, 15, 8, seed).unwrap()
}

fn design(data: &[SubjectSeries]) -> (DMatrix<f64>, DVector<f64>) {
    let n: usize = data.iter().map(|s| s.times.len()).sum();
    let mut x = DMatrix::zeros(n, 4);
    let mut y = DVector::zeros(n);
    let mut r = 0;
    for s in data {
        let g = if s.group == Arm::T { 1.0 } else { 0.0 };
        for (&t, &v) in s.times.iter().zip(&s.values) {
            x.row_mut(r).copy_from_slice(&[1.0, t, g, g * t]);
            y[r] = v;
            r += 1;
        }
    }
    (x, y)
}

/// Dense MVN log-likelihood with block covariance σ²_e I + σ²_s J per subject.
fn dense_loglik(data: &[SubjectSeries], beta: &[f64; 4], s2s: f64, s2e: f64) -> f64 {
    let mut total = 0.0;
    for s in data {
        let m = s.times.len();
        let g = if s.group == Arm::T { 1.0 } else { 0.0 };
        let cov = DMatrix::from_fn(m, m, |i, j| s2s + if i == j { s2e } else { 0.0 });
        let resid = DVector::from_iterator(
            m,
            s.times
                .iter()
                .zip(&s.values)
                .map(|(&t, &v)| v - (beta[0] + beta[1] * t + beta[2] * g + beta[3] * g * t)),
        );
        let chol = cov.cholesky().unwrap();
        let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        total += -0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + resid.dot(&chol.solve(&resid)));
    }
    total
}

#[test]
fn balanced_design_fixed_effects_equal_ols() {
    // Every subject shares the same times, so GLS with compound symmetry
    // reduces to OLS for these regressors.
    let data = balanced(4);
    let fit = fit_lmm_subjects(&data, &LmmConfig::default()).unwrap();
    let (x, y) = design(&data);
    let xtx = x.transpose() * &x;
    let ols = xtx.cholesky().unwrap().solve(&(x.transpose() * &y));
    for k in 0..4 {
        assert!((fit.beta[k] - ols[k]).abs() < 1e-8, "beta {k}: {} vs {}", fit.beta[k], ols[k]);
    }
}

#[test]
fn reported_loglik_matches_the_dense_density() {
    let data = balanced(5);
    let fit = fit_lmm_subjects(&data, &LmmConfig::default()).unwrap();
    let dense = dense_loglik(&data, &fit.beta, fit.sigma2_subject, fit.sigma2_resid);
    assert!((fit.loglik - dense).abs() < 1e-8 * dense.abs(), "{} vs {dense}", fit.loglik);
}

#[test]
fn fit_is_a_local_maximum_of_the_dense_density() {
    let mut data = balanced(6);
    // Unbalance it so GLS and OLS differ.
    data[0].times.truncate(5);
    data[0].values.truncate(5);
    data[3].times.drain(..2);
    data[3].values.drain(..2);
    let fit = fit_lmm_subjects(&data, &LmmConfig::default()).unwrap();
    let best = dense_loglik(&data, &fit.beta, fit.sigma2_subject, fit.sigma2_resid);
    for k in 0..6 {
        for sign in [-1.0, 1.0] {
            let mut b = fit.beta;
            let (mut s2s, mut s2e) = (fit.sigma2_subject, fit.sigma2_resid);
            let h = 1e-3 * sign;
            match k {
                0..=3 => b[k] += h * (1.0 + b[k].abs()),
                4 => s2s *= 1.0 + h,
                _ => s2e *= 1.0 + h,
            }
            assert!(dense_loglik(&data, &b, s2s, s2e) <= best + 1e-9, "coordinate {k}");
        }
    }
}

#[test]
fn wald_standard_error_matches_the_gls_covariance() {
    let data = balanced(7);
    let fit = fit_lmm_subjects(&data, &LmmConfig::default()).unwrap();
    let mut info = DMatrix::zeros(4, 4);
    for s in &data {
        let (x, _) = design(std::slice::from_ref(s));
        let m = s.times.len();
        let cov = DMatrix::from_fn(m, m, |i, j| fit.sigma2_subject + if i == j { fit.sigma2_resid } else { 0.0 });
        info += x.transpose() * cov.try_inverse().unwrap() * &x;
    }
    let v = info.try_inverse().unwrap();
    assert!((fit.se_beta3 - v[(3, 3)].sqrt()).abs() < 1e-8 * fit.se_beta3);
}

#[test]
fn null_rejection_rate_under_the_model_is_nominal() {
    let gen = LmmGenerator::Lmm {
        beta: [0.0, 0.01, 0.0, 0.0],
        sigma2_subject: 1.0,
        sigma2_resid: 0.5,
        span: 30.0,
    };
    let mc = lmm_power_mc(&gen, 30, 6, 0.05, 1500, 99).unwrap();
    assert_eq!(mc.n_failed, 0);
    assert!((mc.power - 0.05).abs() < 3.5 * (0.05f64 * 0.95 / 1500.0).sqrt(), "{}", mc.power);
}
