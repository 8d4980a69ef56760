//! Two-sample tests in feature space: unbiased MMD with a permutation
//! threshold, the kernel Hotelling statistic, and classical Hotelling T².

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mean_vector, scatter};
use crate::numeric::{derive_seed, pairwise_sum, rng_from_seed};
use crate::special::{f_sf, f_upper_quantile};

pub const DEFAULT_N_PERM: usize = 1000;
pub const MIN_N_PERM: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    T,
    C,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::T => "T",
            Arm::C => "C",
        })
    }
}

/// One arm's items.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    pub arm: Arm,
    pub items: Vec<T>,
}

impl<T> Sample<T> {
    pub fn new(arm: Arm, items: Vec<T>) -> Self {
        Self { arm, items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Arithmetic mean of a group's feature vectors.
pub fn mean_embedding(sample: &Sample<DVector<f64>>) -> Result<DVector<f64>> {
    if sample.is_empty() {
        return Err(Error::InvalidInput(format!("sample {} is empty", sample.arm)));
    }
    Ok(mean_vector(&sample.items))
}

pub trait Kernel<T: ?Sized>: Sync {
    fn eval(&self, a: &T, b: &T) -> f64;
}

impl<T: ?Sized, F> Kernel<T> for F
where
    F: Fn(&T, &T) -> f64 + Sync,
{
    fn eval(&self, a: &T, b: &T) -> f64 {
        self(a, b)
    }
}

/// K(x, y) = ⟨x, y⟩. On Fisher vectors this is the Fisher kernel.
#[derive(Clone, Copy, Debug, Default)]
pub struct LinearKernel;

impl Kernel<DVector<f64>> for LinearKernel {
    fn eval(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(b)
    }
}

impl Kernel<f64> for LinearKernel {
    fn eval(&self, a: &f64, b: &f64) -> f64 {
        a * b
    }
}

/// K(x, y) = exp(−‖x − y‖² / (2h²)).
#[derive(Clone, Copy, Debug)]
pub struct GaussianKernel {
    pub bandwidth: f64,
}

impl Kernel<DVector<f64>> for GaussianKernel {
    fn eval(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        (-d2 / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }
}

impl Kernel<f64> for GaussianKernel {
    fn eval(&self, a: &f64, b: &f64) -> f64 {
        (-(a - b) * (a - b) / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }
}

/// Gram matrix K(item_i, item_j); the lower triangle is mirrored so the result
/// is exactly symmetric.
pub fn gram_matrix<T: Sync, K: Kernel<T> + ?Sized>(items: &[T], kernel: &K) -> DMatrix<f64> {
    let n = items.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..=i).map(|j| kernel.eval(&items[i], &items[j])).collect())
        .collect();
    let mut g = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Sum whose value does not depend on the order of the terms.
fn canonical_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    pairwise_sum(&terms)
}

/// Unbiased MMD² for the groups indexed by `idx_t` and `idx_c` in a
/// precomputed Gram matrix. Each of the three sums is reduced in sorted order,
/// so the value depends only on the two index sets.
pub fn mmd_from_gram(gram: &DMatrix<f64>, idx_t: &[usize], idx_c: &[usize]) -> f64 {
    let within = |idx: &[usize]| -> f64 {
        let mut terms = Vec::with_capacity(idx.len() * idx.len() / 2);
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[..a] {
                terms.push(gram[(i, j)]);
            }
        }
        2.0 * canonical_sum(terms)
    };
    let mut cross = Vec::with_capacity(idx_t.len() * idx_c.len());
    for &i in idx_t {
        for &j in idx_c {
            cross.push(gram[(i, j)]);
        }
    }
    let nt = idx_t.len() as f64;
    let nc = idx_c.len() as f64;
    let a = within(idx_t) / (nt * (nt - 1.0));
    let b = within(idx_c) / (nc * (nc - 1.0));
    let c = 2.0 * canonical_sum(cross) / (nt * nc);
    a + b - c
}

fn check_mmd_sizes(nt: usize, nc: usize) -> Result<()> {
    if nt < 2 || nc < 2 {
        return Err(Error::InvalidInput(format!(
            "MMD needs at least 2 items per group (got {nt} and {nc})"
        )));
    }
    Ok(())
}

fn concat<T: Clone>(xt: &Sample<T>, xc: &Sample<T>) -> Vec<T> {
    xt.items.iter().chain(&xc.items).cloned().collect()
}

pub fn mmd_unbiased<T: Sync + Clone, K: Kernel<T> + ?Sized>(
    xt: &Sample<T>,
    xc: &Sample<T>,
    kernel: &K,
) -> Result<f64> {
    check_mmd_sizes(xt.len(), xc.len())?;
    let gram = gram_matrix(&concat(xt, xc), kernel);
    let nt = xt.len();
    let idx_t: Vec<usize> = (0..nt).collect();
    let idx_c: Vec<usize> = (nt..nt + xc.len()).collect();
    Ok(mmd_from_gram(&gram, &idx_t, &idx_c))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MMD-permutation")]
    MmdPermutation,
    #[serde(rename = "kernel-Hotelling")]
    KernelHotelling,
    #[serde(rename = "Hotelling-F")]
    HotellingF,
    #[serde(rename = "LMM-Wald")]
    LmmWald,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::MmdPermutation => "MMD-permutation",
            Method::KernelHotelling => "kernel-Hotelling",
            Method::HotellingF => "Hotelling-F",
            Method::LmmWald => "LMM-Wald",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub reject: bool,
    pub n_T: usize,
    pub n_C: usize,
    pub alpha: f64,
    pub seed: Option<u64>,
    pub n_perm: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dof1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dof2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caveat: Option<String>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1) (got {alpha})")));
    }
    Ok(())
}

/// Outcome of a label-permutation null.
#[derive(Clone, Debug)]
pub struct PermutationNull {
    pub observed: f64,
    /// Permuted statistics in replicate order.
    pub permuted: Vec<f64>,
    pub threshold: f64,
    pub p_value: f64,
}

/// Permutation null for a statistic of the index split (T indices, C indices)
/// over 0..n_t + n_c. Replicate r shuffles with its own seeded stream, so the
/// result does not depend on scheduling.
pub fn permutation_null<F>(
    n_t: usize,
    n_c: usize,
    alpha: f64,
    n_perm: usize,
    seed: u64,
    stat: F,
) -> Result<PermutationNull>
where
    F: Fn(&[usize], &[usize]) -> Result<f64> + Sync,
{
    check_alpha(alpha)?;
    if n_perm < MIN_N_PERM {
        return Err(Error::InvalidInput(format!("n_perm must be >= {MIN_N_PERM}")));
    }
    let n = n_t + n_c;
    let idx: Vec<usize> = (0..n).collect();
    let observed = stat(&idx[..n_t], &idx[n_t..])?;
    let permuted = (0..n_perm)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(seed, r as u64));
            let mut perm = idx.clone();
            perm.shuffle(&mut rng);
            stat(&perm[..n_t], &perm[n_t..])
        })
        .collect::<Result<Vec<f64>>>()?;
    let exceed = permuted.iter().filter(|&&s| s >= observed).count();
    let p_value = (1 + exceed) as f64 / (n_perm + 1) as f64;
    let mut sorted = permuted.clone();
    sorted.sort_by(f64::total_cmp);
    let k = ((1.0 - alpha) * (n_perm + 1) as f64).ceil() as usize;
    let threshold = sorted[k.clamp(1, n_perm) - 1];
    Ok(PermutationNull {
        observed,
        permuted,
        threshold,
        p_value,
    })
}

pub fn mmd_permutation_test<T: Sync + Clone, K: Kernel<T> + ?Sized>(
    xt: &Sample<T>,
    xc: &Sample<T>,
    kernel: &K,
    alpha: f64,
    n_perm: usize,
    seed: u64,
) -> Result<TestResult> {
    check_mmd_sizes(xt.len(), xc.len())?;
    let gram = gram_matrix(&concat(xt, xc), kernel);
    let null = permutation_null(xt.len(), xc.len(), alpha, n_perm, seed, |t, c| {
        Ok(mmd_from_gram(&gram, t, c))
    })?;
    Ok(TestResult {
        method: Method::MmdPermutation,
        statistic: null.observed,
        threshold: null.threshold,
        p_value: null.p_value,
        reject: null.observed > null.threshold,
        n_T: xt.len(),
        n_C: xc.len(),
        alpha,
        seed: Some(seed),
        n_perm: Some(n_perm),
        dof1: None,
        dof2: None,
        caveat: None,
    })
}

/// Weights of the two within-group covariances in Σ̂_W.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PooledWeights {
    /// (n_T − 1)/(N + 2) and (n_C + 1)/(N + 2).
    #[default]
    Printed,
    /// (n_T − 1)/(N − 2) and (n_C − 1)/(N − 2): the usual pooled covariance.
    Standard,
}

impl PooledWeights {
    pub fn weights(&self, n_t: usize, n_c: usize) -> (f64, f64) {
        let (nt, nc) = (n_t as f64, n_c as f64);
        let n = nt + nc;
        match self {
            PooledWeights::Printed => ((nt - 1.0) / (n + 2.0), (nc + 1.0) / (n + 2.0)),
            PooledWeights::Standard => ((nt - 1.0) / (n - 2.0), (nc - 1.0) / (n - 2.0)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelHotelling {
    pub statistic: f64,
    /// ⟨Δ, (Σ̂_W + γI)⁻¹ Δ⟩ with Δ = μ̂_C − μ̂_T.
    pub quad: f64,
    pub d1: f64,
    pub d2: f64,
}

fn check_features(xt: &[DVector<f64>], xc: &[DVector<f64>]) -> Result<usize> {
    if xt.len() < 2 || xc.len() < 2 {
        return Err(Error::InvalidInput("each group needs at least 2 feature vectors".into()));
    }
    let d = xt[0].len();
    if d == 0 || xt.iter().chain(xc).any(|v| v.len() != d) {
        return Err(Error::InvalidInput("feature vectors must share a positive dimension".into()));
    }
    if xt.len() + xc.len() < d + 2 {
        return Err(Error::InvalidInput(format!(
            "n_T + n_C - 2 = {} is below the feature dimension {d}",
            xt.len() + xc.len() - 2
        )));
    }
    Ok(d)
}

/// Σ̂_W: weighted within-group covariances, each about its own group mean
/// with divisor n_g − 1.
pub fn within_covariance(
    xt: &[DVector<f64>],
    xc: &[DVector<f64>],
    weights: PooledWeights,
) -> DMatrix<f64> {
    let (wt, wc) = weights.weights(xt.len(), xc.len());
    let st = scatter(xt, &mean_vector(xt)) / (xt.len() as f64 - 1.0);
    let sc = scatter(xc, &mean_vector(xc)) / (xc.len() as f64 - 1.0);
    st * wt + sc * wc
}

pub fn kernel_hotelling(
    xt: &[DVector<f64>],
    xc: &[DVector<f64>],
    gamma: f64,
    weights: PooledWeights,
) -> Result<KernelHotelling> {
    check_features(xt, xc)?;
    if !(gamma >= 0.0) {
        return Err(Error::InvalidInput("gamma must be >= 0".into()));
    }
    let sw = within_covariance(xt, xc, weights);
    let delta = mean_vector(xc) - mean_vector(xt);
    let eig = SymmetricEigen::new(sw);
    let lmax = eig.eigenvalues.max().max(0.0);
    if gamma == 0.0 && eig.eigenvalues.min() <= 1e-12 * lmax {
        return Err(Error::Singular(
            "within-group covariance is singular; use gamma > 0".into(),
        ));
    }
    let proj = eig.eigenvectors.transpose() * &delta;
    let (mut quad, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let lam = lam.max(0.0);
        let r = lam / (lam + gamma);
        quad += proj[k] * proj[k] / (lam + gamma);
        d1 += r;
        d2 += r * r;
    }
    Ok(KernelHotelling {
        statistic: (quad - d1) / (2.0 * d2).sqrt(),
        quad,
        d1,
        d2,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn kernel_hotelling_test(
    xt: &[DVector<f64>],
    xc: &[DVector<f64>],
    gamma: f64,
    weights: PooledWeights,
    alpha: f64,
    n_perm: usize,
    seed: u64,
) -> Result<TestResult> {
    check_features(xt, xc)?;
    let all: Vec<DVector<f64>> = xt.iter().chain(xc).cloned().collect();
    let pick = |idx: &[usize]| idx.iter().map(|&i| all[i].clone()).collect::<Vec<_>>();
    let null = permutation_null(xt.len(), xc.len(), alpha, n_perm, seed, |t, c| {
        Ok(kernel_hotelling(&pick(t), &pick(c), gamma, weights)?.statistic)
    })?;
    Ok(TestResult {
        method: Method::KernelHotelling,
        statistic: null.observed,
        threshold: null.threshold,
        p_value: null.p_value,
        reject: null.observed > null.threshold,
        n_T: xt.len(),
        n_C: xc.len(),
        alpha,
        seed: Some(seed),
        n_perm: Some(n_perm),
        dof1: None,
        dof2: None,
        caveat: None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HotellingT2 {
    pub t2: f64,
    pub f_stat: f64,
    pub dof1: f64,
    pub dof2: f64,
    pub p_value: f64,
}

/// Unbiased pooled covariance (S_T + S_C)/(n_T + n_C − 2).
pub fn pooled_covariance(xt: &[DVector<f64>], xc: &[DVector<f64>]) -> DMatrix<f64> {
    within_covariance(xt, xc, PooledWeights::Standard)
}

pub fn hotelling_t2(xt: &[DVector<f64>], xc: &[DVector<f64>]) -> Result<HotellingT2> {
    let p = check_features(xt, xc)?;
    let (nt, nc) = (xt.len() as f64, xc.len() as f64);
    let n = nt + nc;
    let diff = mean_vector(xt) - mean_vector(xc);
    let pooled = pooled_covariance(xt, xc);
    let chol = Cholesky::new(pooled)
        .ok_or_else(|| Error::Singular("pooled covariance is not positive definite".into()))?;
    let t2 = nt * nc / n * diff.dot(&chol.solve(&diff));
    let p = p as f64;
    let f_stat = (n - p - 1.0) / ((n - 2.0) * p) * t2;
    let dof2 = n - 1.0 - p;
    Ok(HotellingT2 {
        t2,
        f_stat,
        dof1: p,
        dof2,
        p_value: f_sf(f_stat, p, dof2),
    })
}

pub fn hotelling_test(xt: &[DVector<f64>], xc: &[DVector<f64>], alpha: f64) -> Result<TestResult> {
    check_alpha(alpha)?;
    let h = hotelling_t2(xt, xc)?;
    let threshold = f_upper_quantile(alpha, h.dof1, h.dof2);
    Ok(TestResult {
        method: Method::HotellingF,
        statistic: h.f_stat,
        threshold,
        p_value: h.p_value,
        reject: h.f_stat > threshold,
        n_T: xt.len(),
        n_C: xc.len(),
        alpha,
        seed: None,
        n_perm: None,
        dof1: Some(h.dof1),
        dof2: Some(h.dof2),
        caveat: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalars(v: &[f64]) -> Vec<DVector<f64>> {
        v.iter().map(|&x| DVector::from_element(1, x)).collect()
    }

    #[test]
    fn mmd_hand_value_linear() {
        let xt = Sample::new(Arm::T, vec![0.0, 2.0]);
        let xc = Sample::new(Arm::C, vec![1.0, 3.0]);
        assert_abs_diff_eq!(mmd_unbiased(&xt, &xc, &LinearKernel).unwrap(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn mmd_constant_kernel_is_zero() {
        let xt = Sample::new(Arm::T, vec![0.3, 2.0, 5.0]);
        let xc = Sample::new(Arm::C, vec![1.0, 3.0]);
        let k = |_: &f64, _: &f64| 2.5;
        assert_eq!(mmd_unbiased(&xt, &xc, &k).unwrap(), 0.0);
    }

    #[test]
    fn mmd_swap_is_exact() {
        let xt = Sample::new(Arm::T, vec![0.3, 2.0, 5.0, -1.0]);
        let xc = Sample::new(Arm::C, vec![1.0, 3.0, 0.1]);
        let g = GaussianKernel { bandwidth: 1.3 };
        let a = mmd_unbiased(&xt, &xc, &g).unwrap();
        let b = mmd_unbiased(&Sample::new(Arm::T, xc.items.clone()), &Sample::new(Arm::C, xt.items.clone()), &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mmd_needs_two_per_group() {
        let xt = Sample::new(Arm::T, vec![0.3]);
        let xc = Sample::new(Arm::C, vec![1.0, 3.0]);
        assert!(mmd_unbiased(&xt, &xc, &LinearKernel).is_err());
    }

    #[test]
    fn gram_trivial_cases() {
        let one = gram_matrix(&[2.0f64], &LinearKernel);
        assert_eq!(one[(0, 0)], 4.0);
        let basis: Vec<DVector<f64>> = (0..3)
            .map(|i| DVector::from_fn(3, |j, _| if i == j { 1.0 } else { 0.0 }))
            .collect();
        assert_eq!(gram_matrix(&basis, &LinearKernel), DMatrix::identity(3, 3));
        let items = [0.5f64, -1.0, 2.0];
        let g = gram_matrix(&items, &GaussianKernel { bandwidth: 1.0 });
        let perm = [2usize, 0, 1];
        let pi: Vec<f64> = perm.iter().map(|&i| items[i]).collect();
        let gp = gram_matrix(&pi, &GaussianKernel { bandwidth: 1.0 });
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(gp[(a, b)], g[(perm[a], perm[b])]);
            }
        }
    }

    #[test]
    fn separated_point_masses_reject_with_minimal_p() {
        let xt = Sample::new(Arm::T, vec![0.0; 10]);
        let xc = Sample::new(Arm::C, vec![10.0; 10]);
        let r = mmd_permutation_test(&xt, &xc, &GaussianKernel { bandwidth: 1.0 }, 0.05, 500, 7).unwrap();
        assert!(r.reject);
        assert_abs_diff_eq!(r.p_value, 1.0 / 501.0, epsilon = 1e-15);
    }

    #[test]
    fn permutation_test_is_deterministic() {
        let xt = Sample::new(Arm::T, vec![0.0, 0.4, 1.1, -0.3, 0.9]);
        let xc = Sample::new(Arm::C, vec![0.2, 1.4, 0.7, 0.5]);
        let a = mmd_permutation_test(&xt, &xc, &LinearKernel, 0.05, 200, 3).unwrap();
        let b = mmd_permutation_test(&xt, &xc, &LinearKernel, 0.05, 200, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.reject, a.statistic > a.threshold);
        assert!(a.p_value > 0.0 && a.p_value <= 1.0);
    }

    #[test]
    fn fast_path_matches_recomputation_bitwise() {
        let items: Vec<DVector<f64>> = (0..12)
            .map(|i| DVector::from_vec(vec![(i as f64 * 0.37).sin(), (i as f64).sqrt()]))
            .collect();
        let k = GaussianKernel { bandwidth: 0.8 };
        let gram = gram_matrix(&items, &k);
        for r in 0..10u64 {
            let mut rng = rng_from_seed(r);
            let mut idx: Vec<usize> = (0..12).collect();
            idx.shuffle(&mut rng);
            let fast = mmd_from_gram(&gram, &idx[..5], &idx[5..]);
            let xt = Sample::new(Arm::T, idx[..5].iter().map(|&i| items[i].clone()).collect());
            let xc = Sample::new(Arm::C, idx[5..].iter().map(|&i| items[i].clone()).collect());
            assert_eq!(fast, mmd_unbiased(&xt, &xc, &k).unwrap());
        }
    }

    #[test]
    fn hotelling_scalar_matches_t_squared() {
        let h = hotelling_t2(&scalars(&[0.0, 1.0]), &scalars(&[2.0, 3.0])).unwrap();
        assert_abs_diff_eq!(h.t2, 8.0, epsilon = 1e-12);
        assert_eq!(h.dof1, 1.0);
        assert_eq!(h.dof2, 2.0);
    }

    #[test]
    fn hotelling_equal_means() {
        let h = hotelling_t2(&scalars(&[0.0, 2.0, 1.0]), &scalars(&[1.5, 0.5])).unwrap();
        assert_abs_diff_eq!(h.t2, 0.0, epsilon = 1e-28);
        assert_abs_diff_eq!(h.p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hotelling_affine_invariance() {
        let mk = |seed: u64, shift: f64| -> Vec<DVector<f64>> {
            let mut rng = rng_from_seed(seed);
            (0..9)
                .map(|_| {
                    DVector::from_fn(3, |_, _| {
                        rand::Rng::random::<f64>(&mut rng) + shift
                    })
                })
                .collect()
        };
        let (xt, xc) = (mk(1, 0.2), mk(2, 0.0));
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -1.0, 0.0, 1.5, 0.2, 0.4, 0.0, 0.7]);
        let b = DVector::from_vec(vec![3.0, -2.0, 10.0]);
        let map = |v: &Vec<DVector<f64>>| v.iter().map(|x| &a * x + &b).collect::<Vec<_>>();
        let h1 = hotelling_t2(&xt, &xc).unwrap();
        let h2 = hotelling_t2(&map(&xt), &map(&xc)).unwrap();
        assert!((h1.t2 - h2.t2).abs() <= 1e-8 * h1.t2);
    }

    #[test]
    fn singular_pooled_covariance_is_an_error() {
        let xt: Vec<DVector<f64>> = (0..4).map(|i| DVector::from_vec(vec![i as f64, 2.0 * i as f64])).collect();
        let xc: Vec<DVector<f64>> = (0..4).map(|i| DVector::from_vec(vec![i as f64 + 1.0, 2.0 * i as f64 + 2.0])).collect();
        assert!(matches!(hotelling_t2(&xt, &xc), Err(Error::Singular(_))));
        assert!(matches!(
            kernel_hotelling(&xt, &xc, 0.0, PooledWeights::Printed),
            Err(Error::Singular(_))
        ));
        assert!(kernel_hotelling(&xt, &xc, 0.1, PooledWeights::Printed).is_ok());
    }

    #[test]
    fn kernel_hotelling_zero_difference() {
        let xt = scalars(&[0.0, 2.0, 1.0]);
        let xc = scalars(&[1.5, 0.5]);
        let kh = kernel_hotelling(&xt, &xc, 0.0, PooledWeights::Printed).unwrap();
        assert_abs_diff_eq!(kh.statistic, -kh.d1 / (2.0 * kh.d2).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn kernel_hotelling_scalar_hand_value() {
        // T = (0, 2), C = (1, 5): variances 2 and 8, printed weights 1/6 and 3/6.
        let kh = kernel_hotelling(&scalars(&[0.0, 2.0]), &scalars(&[1.0, 5.0]), 0.0, PooledWeights::Printed).unwrap();
        let sw = 2.0 / 6.0 + 8.0 * 3.0 / 6.0;
        let want = (4.0 / sw - 1.0) / 2f64.sqrt();
        assert_abs_diff_eq!(kh.statistic, want, epsilon = 1e-12);
        let st = kernel_hotelling(&scalars(&[0.0, 2.0]), &scalars(&[1.0, 5.0]), 0.0, PooledWeights::Standard).unwrap();
        assert_abs_diff_eq!(st.quad, 4.0 / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn kernel_hotelling_constants_decrease_in_gamma() {
        let xt: Vec<DVector<f64>> = (0..6).map(|i| DVector::from_vec(vec![(i as f64).sin(), (i as f64 * 1.3).cos(), i as f64 * 0.1])).collect();
        let xc: Vec<DVector<f64>> = (0..7).map(|i| DVector::from_vec(vec![(i as f64 * 0.5).cos(), (i as f64).sin(), 0.3])).collect();
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for gamma in [0.0, 0.01, 0.1, 1.0, 10.0, 100.0] {
            let kh = kernel_hotelling(&xt, &xc, gamma, PooledWeights::Printed).unwrap();
            assert!(kh.d1 <= prev.0 && kh.d2 <= prev.1);
            prev = (kh.d1, kh.d2);
        }
    }

    #[test]
    fn kernel_hotelling_quad_matches_solve() {
        let xt: Vec<DVector<f64>> = (0..8).map(|i| DVector::from_vec(vec![(i as f64).sin(), (i as f64 * 1.3).cos() + 0.2])).collect();
        let xc: Vec<DVector<f64>> = (0..6).map(|i| DVector::from_vec(vec![(i as f64 * 0.5).cos(), (i as f64).sin()])).collect();
        for w in [PooledWeights::Printed, PooledWeights::Standard] {
            let kh = kernel_hotelling(&xt, &xc, 0.0, w).unwrap();
            let sw = within_covariance(&xt, &xc, w);
            let delta = mean_vector(&xc) - mean_vector(&xt);
            let solved = sw.lu().solve(&delta).unwrap();
            assert!((kh.quad - delta.dot(&solved)).abs() <= 1e-10 * kh.quad.max(1.0));
        }
    }

    #[test]
    fn test_result_json_keys() {
        let r = hotelling_test(&scalars(&[0.0, 1.0, 0.5]), &scalars(&[2.0, 3.0, 2.2]), 0.05).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in ["method", "statistic", "threshold", "p_value", "reject", "n_T", "n_C", "alpha", "seed", "n_perm"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["method"], "Hotelling-F");
        assert!(v.get("caveat").is_none());
    }
}
