//! Gaussian-process model for baseline-subtracted longitudinal usage data.
//!
//! A trajectory observed on the grid t₁ < … < t_m is multivariate normal with
//! mean μ·t and covariance
//!
//! ```text
//! Σ(s,t) = α² · n(s,t)/(n(s)n(t)) · s^{β/2} t^{β/2} · exp(−|s−t|^ν / (2ρ²)) + σ²/n(t)·[s = t]
//! ```
//!
//! The parameter vector is θ = (μ, σ², α², β, ρ², ν). Missing entries are
//! marginalized exactly by dropping the corresponding rows and columns.
//! Fitting is maximum likelihood by BFGS in unconstrained coordinates
//! (log for the three scale parameters, scaled logit for ν).

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{chol_log_det, jittered_cholesky, symmetrize};
use crate::numeric::{pairwise_sum, rng_from_seed};
use crate::optim::{self, BfgsConfig};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Number of model parameters.
pub const N_PARAMS: usize = 6;
pub const PARAM_NAMES: [&str; N_PARAMS] = ["mu", "sigma2", "alpha2", "beta", "rho2", "nu"];
/// β is kept inside [−BETA_BOX, BETA_BOX] during fitting.
pub const BETA_BOX: f64 = 10.0;
/// Relative finite-difference step for the covariance parameters.
pub const FD_REL_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub mu: f64,
    pub sigma2: f64,
    pub alpha2: f64,
    pub beta: f64,
    pub rho2: f64,
    pub nu: f64,
}

impl GpParams {
    pub fn new(mu: f64, sigma2: f64, alpha2: f64, beta: f64, rho2: f64, nu: f64) -> Result<Self> {
        let p = Self {
            mu,
            sigma2,
            alpha2,
            beta,
            rho2,
            nu,
        };
        p.validate()?;
        Ok(p)
    }

    /// Strict validity: positive variances and length scale, ν in (0, 2].
    pub fn validate(&self) -> Result<()> {
        self.check_evaluable()?;
        if !(self.sigma2 > 0.0 && self.alpha2 > 0.0) {
            return Err(Error::InvalidParams(format!(
                "sigma2 and alpha2 must be > 0 (got {}, {})",
                self.sigma2, self.alpha2
            )));
        }
        Ok(())
    }

    /// Weaker check used when building covariances: zero variances are
    /// allowed so that the noise-free and process-free limits can be evaluated.
    fn check_evaluable(&self) -> Result<()> {
        if self.to_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite parameter in {self:?}")));
        }
        if self.sigma2 < 0.0 || self.alpha2 < 0.0 {
            return Err(Error::InvalidParams("variances must be non-negative".into()));
        }
        if !(self.rho2 > 0.0) {
            return Err(Error::InvalidParams(format!("rho2 must be > 0 (got {})", self.rho2)));
        }
        if !(self.nu > 0.0 && self.nu <= 2.0) {
            return Err(Error::InvalidParams(format!("nu must lie in (0, 2] (got {})", self.nu)));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; N_PARAMS] {
        [self.mu, self.sigma2, self.alpha2, self.beta, self.rho2, self.nu]
    }

    pub fn from_array(a: [f64; N_PARAMS]) -> Self {
        Self {
            mu: a[0],
            sigma2: a[1],
            alpha2: a[2],
            beta: a[3],
            rho2: a[4],
            nu: a[5],
        }
    }

    pub fn with_mu(self, mu: f64) -> Self {
        Self { mu, ..self }
    }

    /// Map to unconstrained optimizer coordinates.
    pub fn to_unconstrained(&self) -> [f64; N_PARAMS] {
        let half = (self.nu / 2.0).clamp(1e-300, 1.0);
        let logit = (half / (1.0 - half)).ln().clamp(-40.0, 40.0);
        [
            self.mu,
            self.sigma2.ln(),
            self.alpha2.ln(),
            self.beta,
            self.rho2.ln(),
            logit,
        ]
    }

    pub fn from_unconstrained(u: &[f64; N_PARAMS]) -> Self {
        Self {
            mu: u[0],
            sigma2: u[1].exp(),
            alpha2: u[2].exp(),
            beta: u[3],
            rho2: u[4].exp(),
            nu: 2.0 / (1.0 + (-u[5]).exp()),
        }
    }

    /// dθ_j/du_j for the coordinate maps above.
    fn jacobian_diag(&self) -> [f64; N_PARAMS] {
        [
            1.0,
            self.sigma2,
            self.alpha2,
            1.0,
            self.rho2,
            self.nu * (1.0 - self.nu / 2.0),
        ]
    }
}

/// Observation times with per-time and pairwise subject counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationGrid {
    times: Vec<f64>,
    counts: Vec<u32>,
    pair_counts: Vec<u32>,
}

impl ObservationGrid {
    /// Grid for a single subject: every count is 1.
    pub fn unit(times: Vec<f64>) -> Result<Self> {
        let m = times.len();
        Self::with_counts(times, vec![1; m], vec![1; m * m])
    }

    /// Weeks 1, 2, …, m.
    pub fn weekly(m: usize) -> Self {
        Self::unit((1..=m).map(|i| i as f64).collect()).expect("weekly grid is valid")
    }

    /// `m` equally spaced points ending at `span`: t_i = i·span/m.
    pub fn spanning(m: usize, span: f64) -> Result<Self> {
        Self::unit((1..=m).map(|i| i as f64 * span / m as f64).collect())
    }

    /// Row-major `pair_counts` of size m×m.
    pub fn with_counts(times: Vec<f64>, counts: Vec<u32>, pair_counts: Vec<u32>) -> Result<Self> {
        let m = times.len();
        if m == 0 {
            return Err(Error::InvalidInput("grid must have at least one time".into()));
        }
        if counts.len() != m || pair_counts.len() != m * m {
            return Err(Error::InvalidInput("grid count arrays have the wrong length".into()));
        }
        if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidInput("grid times must be finite and > 0".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("grid times must be strictly increasing".into()));
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidInput("every grid time needs n(t) > 0".into()));
        }
        for i in 0..m {
            if pair_counts[i * m + i] != counts[i] {
                return Err(Error::InvalidInput(format!("n(t,t) != n(t) at index {i}")));
            }
            for j in 0..m {
                let nij = pair_counts[i * m + j];
                if nij != pair_counts[j * m + i] {
                    return Err(Error::InvalidInput("pair counts must be symmetric".into()));
                }
                if nij > counts[i].min(counts[j]) {
                    return Err(Error::InvalidInput(format!(
                        "n(s,t) exceeds min(n(s), n(t)) at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            times,
            counts,
            pair_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn pair_count(&self, i: usize, j: usize) -> u32 {
        self.pair_counts[i * self.len() + j]
    }

    /// Reorder the grid points; `order[k]` is the old index placed at k.
    /// Times must still end up increasing, so this is only used internally.
    fn permuted_unchecked(&self, order: &[usize]) -> Self {
        let m = self.len();
        let mut pair = vec![0; m * m];
        for (a, &i) in order.iter().enumerate() {
            for (b, &j) in order.iter().enumerate() {
                pair[a * m + b] = self.pair_counts[i * m + j];
            }
        }
        Self {
            times: order.iter().map(|&i| self.times[i]).collect(),
            counts: order.iter().map(|&i| self.counts[i]).collect(),
            pair_counts: pair,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GridDoc {
    times: Vec<f64>,
    counts: Vec<u32>,
}

impl Serialize for ObservationGrid {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridDoc {
            times: self.times.clone(),
            counts: self.counts.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ObservationGrid {
    /// The document carries only n(t); pair counts are restored as
    /// min(n(s), n(t)), which is exact for per-subject (unit-count) grids.
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = GridDoc::deserialize(d)?;
        let m = doc.counts.len();
        let mut pair = vec![0; m * m];
        for i in 0..m {
            for j in 0..m {
                pair[i * m + j] = doc.counts[i].min(doc.counts[j]);
            }
        }
        ObservationGrid::with_counts(doc.times, doc.counts, pair).map_err(serde::de::Error::custom)
    }
}

/// One subject's measurements on a grid; `None` marks a missing value.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub subject_id: String,
    pub values: Vec<Option<f64>>,
}

impl Trajectory {
    pub fn new(subject_id: impl Into<String>, values: Vec<Option<f64>>) -> Result<Self> {
        let t = Self {
            subject_id: subject_id.into(),
            values,
        };
        if t.observed_count() < 2 {
            return Err(Error::InvalidInput(format!(
                "trajectory {} has fewer than 2 observed values",
                t.subject_id
            )));
        }
        if t.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "trajectory {} has non-finite values",
                t.subject_id
            )));
        }
        Ok(t)
    }

    pub fn complete(subject_id: impl Into<String>, values: &[f64]) -> Self {
        Self {
            subject_id: subject_id.into(),
            values: values.iter().map(|&v| Some(v)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn observed_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Raw covariance Σ(θ) on the grid, without jitter.
pub fn build_covariance(params: &GpParams, grid: &ObservationGrid) -> Result<DMatrix<f64>> {
    params.check_evaluable()?;
    let m = grid.len();
    let t = grid.times();
    let n = grid.counts();
    let half_beta = params.beta / 2.0;
    let scale: Vec<f64> = t.iter().map(|ti| ti.powf(half_beta)).collect();
    let inv_two_rho2 = 1.0 / (2.0 * params.rho2);
    let mut cov = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let ratio = grid.pair_count(i, j) as f64 / (n[i] as f64 * n[j] as f64);
            let dist = (t[i] - t[j]).abs();
            let decay = if i == j {
                1.0
            } else {
                (-dist.powf(params.nu) * inv_two_rho2).exp()
            };
            let k = params.alpha2 * ratio * scale[i] * scale[j] * decay;
            cov[(i, j)] = k;
            cov[(j, i)] = k;
        }
        cov[(i, i)] += params.sigma2 / n[i] as f64;
    }
    Ok(cov)
}

/// (μ·t₁, …, μ·t_m).
pub fn mean_vector(params: &GpParams, grid: &ObservationGrid) -> DVector<f64> {
    DVector::from_iterator(grid.len(), grid.times().iter().map(|t| params.mu * t))
}

/// MVN log density of a fully observed vector.
pub fn log_likelihood(params: &GpParams, grid: &ObservationGrid, x: &[f64]) -> Result<f64> {
    if x.len() != grid.len() {
        return Err(Error::InvalidInput(format!(
            "vector has length {}, grid has {}",
            x.len(),
            grid.len()
        )));
    }
    let values: Vec<Option<f64>> = x.iter().map(|&v| Some(v)).collect();
    MvnModel::new(params, grid)?.log_density(&values)
}

/// Log density of a trajectory with missing entries marginalized out.
pub fn trajectory_log_likelihood(
    params: &GpParams,
    grid: &ObservationGrid,
    x: &Trajectory,
) -> Result<f64> {
    MvnModel::new(params, grid)?.log_density(&x.values)
}

/// Log density and its analytic μ-derivative tᵀΣ⁻¹(x − μt) for one vector.
#[derive(Clone, Copy, Debug)]
pub struct Evaluation {
    pub log_density: f64,
    pub mu_gradient: f64,
}

/// Factorized MVN(μ·t, Σ(θ)) on a fixed grid.
#[derive(Debug)]
pub struct MvnModel {
    mean: DVector<f64>,
    times: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
    log_det: f64,
    jitter: f64,
    precision: OnceLock<DMatrix<f64>>,
}

impl MvnModel {
    pub fn new(params: &GpParams, grid: &ObservationGrid) -> Result<Self> {
        let raw = build_covariance(params, grid)?;
        let jc = jittered_cholesky(&raw)?;
        let mut cov = raw;
        for i in 0..cov.nrows() {
            cov[(i, i)] += jc.jitter;
        }
        Ok(Self {
            mean: mean_vector(params, grid),
            times: DVector::from_column_slice(grid.times()),
            log_det: chol_log_det(&jc.factor),
            chol: jc.factor,
            cov,
            jitter: jc.jitter,
            precision: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// The covariance actually used, jitter included.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn precision(&self) -> &DMatrix<f64> {
        self.precision.get_or_init(|| symmetrize(&self.chol.inverse()))
    }

    pub fn log_density(&self, values: &[Option<f64>]) -> Result<f64> {
        Ok(self.evaluate(values)?.log_density)
    }

    pub fn evaluate(&self, values: &[Option<f64>]) -> Result<Evaluation> {
        let m = self.dim();
        if values.len() != m {
            return Err(Error::InvalidInput(format!(
                "trajectory has length {}, grid has {m}",
                values.len()
            )));
        }
        let observed: Vec<usize> = (0..m).filter(|&i| values[i].is_some()).collect();
        let missing: Vec<usize> = (0..m).filter(|&i| values[i].is_none()).collect();
        if observed.is_empty() {
            return Err(Error::InvalidInput("trajectory has no observed values".into()));
        }
        let resid = |i: usize| values[i].unwrap() - self.mean[i];

        let (quad, log_det, mu_gradient) = if missing.is_empty() {
            let r = DVector::from_iterator(m, (0..m).map(resid));
            let w = self.chol.solve(&r);
            (r.dot(&w), self.log_det, self.times.dot(&w))
        } else if 3 * missing.len() <= m {
            self.schur_terms(&observed, &missing, &resid)?
        } else {
            self.subset_terms(&observed, &resid)?
        };
        let n = observed.len() as f64;
        Ok(Evaluation {
            log_density: -0.5 * (n * LN_2PI + log_det + quad),
            mu_gradient,
        })
    }

    /// Marginal terms through the precision matrix P = Σ⁻¹:
    /// Σ_oo⁻¹ = P_oo − P_om P_mm⁻¹ P_mo and log det Σ_oo = log det Σ + log det P_mm.
    fn schur_terms(
        &self,
        observed: &[usize],
        missing: &[usize],
        resid: &dyn Fn(usize) -> f64,
    ) -> Result<(f64, f64, f64)> {
        let p = self.precision();
        let r: Vec<f64> = observed.iter().map(|&i| resid(i)).collect();
        let k = missing.len();
        let mut pmm = DMatrix::zeros(k, k);
        for (a, &i) in missing.iter().enumerate() {
            for (b, &j) in missing.iter().enumerate() {
                pmm[(a, b)] = p[(i, j)];
            }
        }
        let mut v = DVector::zeros(k);
        for (a, &i) in missing.iter().enumerate() {
            let mut s = 0.0;
            for (b, &j) in observed.iter().enumerate() {
                s += p[(i, j)] * r[b];
            }
            v[a] = s;
        }
        let Some(pmm_chol) = Cholesky::new(pmm) else {
            return self.subset_terms(observed, resid);
        };
        let z = pmm_chol.solve(&v);
        let mut quad = 0.0;
        let mut mu_grad = 0.0;
        for (a, &i) in observed.iter().enumerate() {
            let mut w = 0.0;
            for (b, &j) in observed.iter().enumerate() {
                w += p[(i, j)] * r[b];
            }
            for (c, &l) in missing.iter().enumerate() {
                w -= p[(i, l)] * z[c];
            }
            quad += r[a] * w;
            mu_grad += self.times[i] * w;
        }
        Ok((quad, self.log_det + chol_log_det(&pmm_chol), mu_grad))
    }

    /// Marginal terms by factoring the observed sub-covariance directly.
    fn subset_terms(
        &self,
        observed: &[usize],
        resid: &dyn Fn(usize) -> f64,
    ) -> Result<(f64, f64, f64)> {
        let n = observed.len();
        let mut sub = DMatrix::zeros(n, n);
        for (a, &i) in observed.iter().enumerate() {
            for (b, &j) in observed.iter().enumerate() {
                sub[(a, b)] = self.cov[(i, j)];
            }
        }
        let chol = match Cholesky::new(sub.clone()) {
            Some(c) => c,
            None => jittered_cholesky(&sub)?.factor,
        };
        let r = DVector::from_iterator(n, observed.iter().map(|&i| resid(i)));
        let w = chol.solve(&r);
        let t = DVector::from_iterator(n, observed.iter().map(|&i| self.times[i]));
        Ok((r.dot(&w), chol_log_det(&chol), t.dot(&w)))
    }

    /// One draw mean + L z.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let m = self.dim();
        let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        &self.mean + self.chol.l_dirty().lower_triangle() * z
    }
}

/// Finite-difference rule for one covariance coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
enum FdRule {
    Central,
    /// Second-order one-sided stencil using θ, θ+h, θ+2h.
    Forward,
    /// Second-order one-sided stencil using θ, θ−h, θ−2h.
    Backward,
}

fn fd_rule(j: usize, value: f64, h: f64) -> FdRule {
    match j {
        1 | 2 | 4 if value - h <= 0.0 => FdRule::Forward,
        5 if value + h > 2.0 => FdRule::Backward,
        5 if value - h <= 0.0 => FdRule::Forward,
        _ => FdRule::Central,
    }
}

fn shifted(params: &GpParams, j: usize, delta: f64) -> GpParams {
    let mut a = params.to_array();
    a[j] += delta;
    GpParams::from_array(a)
}

struct Probe {
    h: f64,
    rule: FdRule,
    first: MvnModel,
    second: MvnModel,
}

/// Models at θ and at the finite-difference offsets of the five covariance
/// parameters, built once and shared across trajectories.
pub struct ScoreStencil {
    center: MvnModel,
    probes: Vec<Probe>,
}

impl ScoreStencil {
    pub fn new(params: &GpParams, grid: &ObservationGrid) -> Result<Self> {
        Self::with_step(params, grid, FD_REL_STEP)
    }

    pub fn with_step(params: &GpParams, grid: &ObservationGrid, rel_step: f64) -> Result<Self> {
        let center = MvnModel::new(params, grid)?;
        let theta = params.to_array();
        let mut probes = Vec::with_capacity(N_PARAMS - 1);
        for j in 1..N_PARAMS {
            let h = rel_step * (1.0 + theta[j].abs());
            let rule = fd_rule(j, theta[j], h);
            let (d1, d2) = match rule {
                FdRule::Central => (h, -h),
                FdRule::Forward => (h, 2.0 * h),
                FdRule::Backward => (-h, -2.0 * h),
            };
            probes.push(Probe {
                h,
                rule,
                first: MvnModel::new(&shifted(params, j, d1), grid)?,
                second: MvnModel::new(&shifted(params, j, d2), grid)?,
            });
        }
        Ok(Self { center, probes })
    }

    pub fn center(&self) -> &MvnModel {
        &self.center
    }

    /// Log density and ∇_θ log density of one trajectory.
    pub fn score(&self, values: &[Option<f64>]) -> Result<(f64, [f64; N_PARAMS])> {
        let c = self.center.evaluate(values)?;
        let mut g = [0.0; N_PARAMS];
        g[0] = c.mu_gradient;
        for (k, probe) in self.probes.iter().enumerate() {
            let f1 = probe.first.log_density(values)?;
            let f2 = probe.second.log_density(values)?;
            let f0 = c.log_density;
            g[k + 1] = match probe.rule {
                FdRule::Central => (f1 - f2) / (2.0 * probe.h),
                FdRule::Forward => (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * probe.h),
                FdRule::Backward => (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * probe.h),
            };
        }
        Ok((c.log_density, g))
    }
}

/// Σ_i log f(x_i; θ), reduced in data order.
pub fn total_log_likelihood(
    params: &GpParams,
    grid: &ObservationGrid,
    data: &[Trajectory],
) -> Result<f64> {
    let model = MvnModel::new(params, grid)?;
    let terms = data
        .par_iter()
        .map(|x| model.log_density(&x.values))
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&terms))
}

/// Total log-likelihood and its θ-gradient (sum of per-trajectory scores).
pub fn total_score(
    params: &GpParams,
    grid: &ObservationGrid,
    data: &[Trajectory],
) -> Result<(f64, [f64; N_PARAMS])> {
    let stencil = ScoreStencil::new(params, grid)?;
    let per = data
        .par_iter()
        .map(|x| stencil.score(&x.values))
        .collect::<Result<Vec<_>>>()?;
    let ll: Vec<f64> = per.iter().map(|p| p.0).collect();
    let mut g = [0.0; N_PARAMS];
    for (j, gj) in g.iter_mut().enumerate() {
        let col: Vec<f64> = per.iter().map(|p| p.1[j]).collect();
        *gj = pairwise_sum(&col);
    }
    Ok((pairwise_sum(&ll), g))
}

/// Draws i.i.d. per-subject trajectories from a fixed model.
pub struct GpSimulator {
    model: MvnModel,
}

impl GpSimulator {
    pub fn new(params: &GpParams, grid: &ObservationGrid) -> Result<Self> {
        Ok(Self {
            model: MvnModel::new(params, grid)?,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, n: usize, prefix: &str, rng: &mut R) -> Vec<Trajectory> {
        (0..n)
            .map(|i| {
                let x = self.model.sample(rng);
                Trajectory::complete(format!("{prefix}{i}"), x.as_slice())
            })
            .collect()
    }
}

/// Simulate `n_subjects` complete trajectories, deterministic in `rng_seed`.
pub fn simulate(
    params: &GpParams,
    grid: &ObservationGrid,
    n_subjects: usize,
    rng_seed: u64,
) -> Result<Vec<Trajectory>> {
    if n_subjects == 0 {
        return Err(Error::InvalidInput("n_subjects must be >= 1".into()));
    }
    let sim = GpSimulator::new(params, grid)?;
    let mut rng = rng_from_seed(rng_seed);
    Ok(sim.draw(n_subjects, "sim-", &mut rng))
}

#[derive(Clone, Debug)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Tolerance on the ∞-norm of the gradient of the mean per-trajectory
    /// log-likelihood in unconstrained coordinates.
    pub grad_tol: f64,
    pub n_starts: usize,
    pub seed: u64,
    /// Standard deviation of the multistart perturbation in unconstrained units.
    pub start_spread: f64,
    /// Which of the six parameters are optimized; the rest stay at `init`.
    pub free: [bool; N_PARAMS],
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            n_starts: 5,
            seed: 0,
            start_spread: 0.5,
            free: [true; N_PARAMS],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub params: GpParams,
    pub loglik: f64,
    pub init_loglik: f64,
    pub converged: bool,
    pub hit_max_iter: bool,
    pub iters: usize,
    pub grad_inf: f64,
    pub starts: usize,
}

/// Serialized form of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedParams {
    #[serde(flatten)]
    pub params: GpParams,
    pub grid: ObservationGrid,
    pub fit: FitMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub loglik: f64,
    pub converged: bool,
    pub iters: usize,
}

impl FittedParams {
    pub fn new(result: &FitResult, grid: &ObservationGrid) -> Self {
        Self {
            params: result.params,
            grid: grid.clone(),
            fit: FitMeta {
                loglik: result.loglik,
                converged: result.converged,
                iters: result.iters,
            },
        }
    }
}

struct Objective<'a> {
    data: &'a [Trajectory],
    grid: &'a ObservationGrid,
    init: GpParams,
    free: Vec<usize>,
}

impl Objective<'_> {
    fn params_at(&self, z: &[f64]) -> GpParams {
        let mut u = self.init.to_unconstrained();
        for (k, &j) in self.free.iter().enumerate() {
            u[j] = z[k];
        }
        let from_u = GpParams::from_unconstrained(&u).to_array();
        let mut theta = self.init.to_array();
        for &j in &self.free {
            theta[j] = from_u[j];
        }
        GpParams::from_array(theta)
    }

    /// Minimized quantity: −(1/N) Σ log f, with its gradient in free u-coordinates.
    fn eval(&self, z: &[f64]) -> Option<(f64, Vec<f64>)> {
        let theta = self.params_at(z);
        if theta.validate().is_err() || theta.beta.abs() > BETA_BOX {
            return None;
        }
        let (ll, g) = total_score(&theta, self.grid, self.data).ok()?;
        let n = self.data.len() as f64;
        let jac = theta.jacobian_diag();
        let grad = self.free.iter().map(|&j| -g[j] * jac[j] / n).collect();
        Some((-ll / n, grad))
    }
}

/// Maximum-likelihood fit with multistarts.
///
/// Start 0 is `init`; the remaining starts perturb the free unconstrained
/// coordinates with N(0, start_spread²). The best final log-likelihood wins,
/// so the result is never worse than `init`.
pub fn fit_mle(
    data: &[Trajectory],
    grid: &ObservationGrid,
    init: &GpParams,
    config: &FitConfig,
) -> Result<FitResult> {
    if data.len() < 2 {
        return Err(Error::InvalidInput("fit_mle needs at least 2 trajectories".into()));
    }
    init.validate()?;
    if init.beta.abs() > BETA_BOX {
        return Err(Error::InvalidParams(format!("beta outside [-{BETA_BOX}, {BETA_BOX}]")));
    }
    for x in data {
        if x.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "trajectory {} has length {}, grid has {}",
                x.subject_id,
                x.len(),
                grid.len()
            )));
        }
    }
    let free: Vec<usize> = (0..N_PARAMS).filter(|&j| config.free[j]).collect();
    let init_loglik = total_log_likelihood(init, grid, data)?;
    let objective = Objective {
        data,
        grid,
        init: *init,
        free: free.clone(),
    };
    let bfgs = BfgsConfig {
        max_iter: config.max_iter,
        grad_tol: config.grad_tol,
        ..BfgsConfig::default()
    };

    let u0 = init.to_unconstrained();
    let z0: Vec<f64> = free.iter().map(|&j| u0[j]).collect();
    let mut rng = rng_from_seed(config.seed);
    let mut best: Option<FitResult> = None;
    let n_starts = config.n_starts.max(1);
    for start in 0..n_starts {
        let z_start: Vec<f64> = if start == 0 {
            z0.clone()
        } else {
            free.iter()
                .zip(&z0)
                .map(|(&j, &z)| {
                    let e: f64 = rng.sample(StandardNormal);
                    let v = z + config.start_spread * e;
                    if j == 3 {
                        v.clamp(-0.99 * BETA_BOX, 0.99 * BETA_BOX)
                    } else {
                        v
                    }
                })
                .collect()
        };
        let Some(out) = optim::minimize(|z| objective.eval(z), &z_start, &bfgs) else {
            continue;
        };
        let params = if out.iters == 0 && start == 0 {
            *init
        } else {
            objective.params_at(&out.x)
        };
        let loglik = -out.value * data.len() as f64;
        let candidate = FitResult {
            params,
            loglik,
            init_loglik,
            converged: out.converged,
            hit_max_iter: out.iters >= config.max_iter,
            iters: out.iters,
            grad_inf: out.grad_inf,
            starts: n_starts,
        };
        let better = match &best {
            None => true,
            Some(b) => candidate.loglik > b.loglik,
        };
        if better {
            best = Some(candidate);
        }
    }

    let Some(mut best) = best else {
        return Err(Error::NonConvergence {
            message: "no start produced a finite objective".into(),
            best_loglik: init_loglik,
            best: Some(*init),
        });
    };
    if best.loglik < init_loglik {
        best.params = *init;
        best.loglik = init_loglik;
    }
    if !best.converged && best.iters == 0 {
        return Err(Error::NonConvergence {
            message: format!(
                "no restart improved on the initial point (gradient norm {:e})",
                best.grad_inf
            ),
            best_loglik: best.loglik,
            best: Some(best.params),
        });
    }
    Ok(best)
}

/// Observed information −∇²_θ Σ log f at `params`, by central differences of
/// the total score with relative step 1e-4.
pub fn observed_information(
    params: &GpParams,
    grid: &ObservationGrid,
    data: &[Trajectory],
) -> Result<DMatrix<f64>> {
    let theta = params.to_array();
    let mut hess = DMatrix::zeros(N_PARAMS, N_PARAMS);
    for j in 0..N_PARAMS {
        let h = 1e-4 * (1.0 + theta[j].abs());
        let rule = if j == 0 { FdRule::Central } else { fd_rule(j, theta[j], h) };
        let col: [f64; N_PARAMS] = match rule {
            FdRule::Central => {
                let (_, gp) = total_score(&shifted(params, j, h), grid, data)?;
                let (_, gm) = total_score(&shifted(params, j, -h), grid, data)?;
                std::array::from_fn(|k| (gp[k] - gm[k]) / (2.0 * h))
            }
            FdRule::Forward | FdRule::Backward => {
                let s = if rule == FdRule::Forward { 1.0 } else { -1.0 };
                let (_, g0) = total_score(params, grid, data)?;
                let (_, g1) = total_score(&shifted(params, j, s * h), grid, data)?;
                let (_, g2) = total_score(&shifted(params, j, 2.0 * s * h), grid, data)?;
                std::array::from_fn(|k| s * (-3.0 * g0[k] + 4.0 * g1[k] - g2[k]) / (2.0 * h))
            }
        };
        for k in 0..N_PARAMS {
            hess[(k, j)] = -col[k];
        }
    }
    Ok(symmetrize(&hess))
}

/// Standard errors from the diagonal of the inverse observed information.
pub fn standard_errors(
    params: &GpParams,
    grid: &ObservationGrid,
    data: &[Trajectory],
) -> Result<[f64; N_PARAMS]> {
    let info = observed_information(params, grid, data)?;
    let inv = info
        .try_inverse()
        .ok_or_else(|| Error::Singular("observed information is singular".into()))?;
    Ok(std::array::from_fn(|j| inv[(j, j)].max(0.0).sqrt()))
}

/// Rough starting values from pooled moments: μ from a through-origin slope,
/// residual variance split evenly between noise and process.
pub fn initial_guess(data: &[Trajectory], grid: &ObservationGrid) -> GpParams {
    let t = grid.times();
    let (mut stx, mut stt) = (0.0, 0.0);
    for x in data {
        for (v, ti) in x.values.iter().zip(t) {
            if let Some(v) = v {
                stx += ti * v;
                stt += ti * ti;
            }
        }
    }
    let mu = if stt > 0.0 { stx / stt } else { 0.0 };
    let mut ss = 0.0;
    let mut cnt = 0.0;
    for x in data {
        for (v, ti) in x.values.iter().zip(t) {
            if let Some(v) = v {
                ss += (v - mu * ti).powi(2);
                cnt += 1.0;
            }
        }
    }
    let var = if cnt > 0.0 { (ss / cnt).max(1e-8) } else { 1.0 };
    let span = t[t.len() - 1];
    GpParams {
        mu,
        sigma2: var / 2.0,
        alpha2: var / 2.0,
        beta: 0.0,
        rho2: (span / 4.0).max(1.0),
        nu: 1.0,
    }
}

#[doc(hidden)]
pub fn permute_grid_for_tests(grid: &ObservationGrid, order: &[usize]) -> ObservationGrid {
    grid.permuted_unchecked(order)
}
