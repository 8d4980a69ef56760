use kernel_rct::numeric::rng_from_seed;
use kernel_rct::power::*;
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// For p = 1 the Hotelling test is the two-sided pooled t-test, whose
/// statistic under the alternative is noncentral t with ncp √δ.
fn noncentral_t_power(n_t: usize, n_c: usize, alpha: f64, effect: f64, draws: usize, seed: u64) -> f64 {
    let df = (n_t + n_c - 2) as f64;
    let crit = StudentsT::new(0.0, 1.0, df).unwrap().inverse_cdf(1.0 - alpha / 2.0);
    let ncp = (n_t as f64 * n_c as f64 / (n_t + n_c) as f64).sqrt() * effect;
    let chi = ChiSquared::new(df).unwrap();
    let mut rng = rng_from_seed(seed);
    let hits = (0..draws)
        .filter(|_| {
            let z: f64 = rng.sample(StandardNormal);
            let w: f64 = rng.sample(chi);
            ((z + ncp) / (w / df).sqrt()).abs() > crit
        })
        .count();
    hits as f64 / draws as f64
}

#[test]
fn univariate_power_matches_noncentral_t() {
    let draws = 200_000;
    for (i, &(n_t, n_c, effect)) in [(10, 10, 0.8), (25, 15, 0.5), (40, 40, 0.3), (8, 12, 1.4)].iter().enumerate() {
        let analytic = power_at(n_t, n_c, 1, 0.05, effect).unwrap();
        let mc = noncentral_t_power(n_t, n_c, 0.05, effect, draws, i as u64);
        let se = (mc * (1.0 - mc) / draws as f64).sqrt();
        assert!((analytic - mc).abs() < 4.0 * se + 1e-4, "{n_t}/{n_c} e={effect}: {analytic} vs {mc}");
    }
}

#[test]
fn zero_effect_gives_alpha() {
    for p in [1, 3, 6] {
        let v = power_at(20, 20, p, 0.05, 0.0).unwrap();
        assert!((v - 0.05).abs() < 1e-12, "{v}");
    }
}

#[test]
fn sample_size_is_minimal_on_the_lattice() {
    for &(effect, p, ratio) in &[(0.5, 6, 1.0), (0.3, 6, 1.0), (0.8, 2, 2.0), (0.15, 6, 1.0)] {
        let (n_t, n_c) = sample_size_for_power(0.8, p, 0.05, effect, ratio).unwrap();
        assert!(power_at(n_t, n_c, p, 0.05, effect).unwrap() >= 0.8);
        let (pt, pc) = design_for(n_c - 1, ratio);
        if pt + pc > p + 1 {
            assert!(power_at(pt, pc, p, 0.05, effect).unwrap() < 0.8, "effect {effect}: {n_t}+{n_c} not minimal");
        }
    }
}

#[test]
fn tiny_effects_hit_the_cap() {
    assert!(sample_size_for_power_capped(0.8, 6, 0.05, 1e-4, 1.0, 10_000).is_err());
}

#[test]
fn curve_is_monotone_and_round_trips_through_json() {
    let grid: Vec<usize> = (1..=20).map(|k| 10 * k).collect();
    let curve = power_curve(&grid, 1.0, 6, 0.05, 0.4).unwrap();
    assert!(curve.is_monotone());
    assert_eq!(curve.rows.len(), grid.len());
    let back: PowerCurve = serde_json::from_str(&curve.to_json().unwrap()).unwrap();
    assert_eq!(back, curve);
    let csv = curve.to_csv();
    assert_eq!(csv.lines().next().unwrap(), "n_total,n_T,n_C,power");
    for (line, row) in csv.lines().skip(1).zip(&curve.rows) {
        let power: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(power, row.power);
    }
}

#[test]
fn rho_one_is_no_effect() {
    use nalgebra::DVector;
    let a = vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])];
    let s = vec![DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![1.0, 1.0])];
    let alt = local_alternative_from_cohorts(&a, &s, 1.0).unwrap();
    assert!(alt.shift().iter().all(|&v| v == 0.0));
}
