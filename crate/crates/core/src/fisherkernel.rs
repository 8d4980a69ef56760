//! Fisher embedding of trajectories under a fitted GP model.
//!
//! φ(x) = ∇_θ log f(x; θ̂) is the Fisher score, ψ(x) = I^{-1/2} φ(x) the
//! whitened Fisher vector, and K(x, x') = ψ(x)ᵀψ(x') the Fisher kernel.
//! I is the empirical second moment of the scores over a reference cohort.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpmodel::{FitMeta, GpParams, ObservationGrid, ScoreStencil, Trajectory, N_PARAMS};
use crate::linalg::{inverse_sqrt_sym, symmetrize};
use crate::numeric::pairwise_sum;

/// Fewer reference trajectories than this cannot give a full-rank 6×6 estimate.
pub const MIN_REFERENCE: usize = N_PARAMS + 1;

/// Information eigenvalues at or below this fraction of the largest count as
/// unsupported: the scores there are finite-difference noise.
pub const SUPPORT_RTOL: f64 = 1e-12;

pub struct FisherEmbedding {
    theta_hat: GpParams,
    grid: ObservationGrid,
    info: DMatrix<f64>,
    eps: f64,
    info_inv_sqrt: DMatrix<f64>,
    /// Rows (λ_k + eps)^{-1/2} u_kᵀ for the supported eigenpairs, largest first.
    reduced: DMatrix<f64>,
    stencil: ScoreStencil,
    fit: Option<FitMeta>,
    warnings: Vec<String>,
}

impl std::fmt::Debug for FisherEmbedding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FisherEmbedding")
            .field("theta_hat", &self.theta_hat)
            .field("eps", &self.eps)
            .field("info", &self.info)
            .finish_non_exhaustive()
    }
}

/// Default regularization 1e-6 · trace(info)/6.
pub fn default_eps(info: &DMatrix<f64>) -> f64 {
    let e = 1e-6 * info.trace() / N_PARAMS as f64;
    if e > 0.0 {
        e
    } else {
        1e-12
    }
}

/// Per-trajectory Fisher scores at θ, in data order.
pub fn scores(
    theta: &GpParams,
    grid: &ObservationGrid,
    data: &[Trajectory],
) -> Result<Vec<[f64; N_PARAMS]>> {
    let stencil = ScoreStencil::new(theta, grid)?;
    scores_with(&stencil, data)
}

fn scores_with(stencil: &ScoreStencil, data: &[Trajectory]) -> Result<Vec<[f64; N_PARAMS]>> {
    data.par_iter()
        .map(|x| stencil.score(&x.values).map(|s| s.1))
        .collect()
}

/// (1/n) Σ φφᵀ, each entry reduced in data order.
fn second_moment(scores: &[[f64; N_PARAMS]]) -> DMatrix<f64> {
    let n = scores.len() as f64;
    let mut m = DMatrix::zeros(N_PARAMS, N_PARAMS);
    for a in 0..N_PARAMS {
        for b in 0..=a {
            let terms: Vec<f64> = scores.iter().map(|s| s[a] * s[b]).collect();
            let v = pairwise_sum(&terms) / n;
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

/// Empirical information (1/n) Σ φ(z_i)φ(z_i)ᵀ + eps·I.
pub fn estimate_information(
    theta_hat: &GpParams,
    grid: &ObservationGrid,
    data: &[Trajectory],
    eps: f64,
) -> Result<DMatrix<f64>> {
    if data.is_empty() {
        return Err(Error::InvalidInput("information needs at least one trajectory".into()));
    }
    let s = scores(theta_hat, grid, data)?;
    Ok(second_moment(&s) + DMatrix::identity(N_PARAMS, N_PARAMS) * eps)
}

impl FisherEmbedding {
    /// Estimate the information from `reference` and build the embedding.
    /// `eps = None` selects [`default_eps`].
    pub fn fit(
        theta_hat: &GpParams,
        grid: &ObservationGrid,
        reference: &[Trajectory],
        eps: Option<f64>,
    ) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::InvalidInput("reference cohort is empty".into()));
        }
        let stencil = ScoreStencil::new(theta_hat, grid)?;
        let info = second_moment(&scores_with(&stencil, reference)?);
        let eps = eps.unwrap_or_else(|| default_eps(&info));
        let mut emb = Self::assemble(*theta_hat, grid.clone(), info, eps, stencil)?;
        if reference.len() < MIN_REFERENCE {
            emb.warnings.push(format!(
                "information estimated from {} trajectories is rank deficient; eps = {eps:e} keeps it invertible",
                reference.len()
            ));
        }
        Ok(emb)
    }

    /// Build from an externally supplied information matrix.
    pub fn from_parts(
        theta_hat: GpParams,
        grid: ObservationGrid,
        info: DMatrix<f64>,
        eps: f64,
    ) -> Result<Self> {
        if info.nrows() != N_PARAMS || info.ncols() != N_PARAMS {
            return Err(Error::InvalidInput("information must be 6×6".into()));
        }
        if !(eps >= 0.0) {
            return Err(Error::InvalidInput("eps must be >= 0".into()));
        }
        let stencil = ScoreStencil::new(&theta_hat, &grid)?;
        Self::assemble(theta_hat, grid, symmetrize(&info), eps, stencil)
    }

    fn assemble(
        theta_hat: GpParams,
        grid: ObservationGrid,
        info: DMatrix<f64>,
        eps: f64,
        stencil: ScoreStencil,
    ) -> Result<Self> {
        let regularized = &info + DMatrix::identity(N_PARAMS, N_PARAMS) * eps;
        let info_inv_sqrt = inverse_sqrt_sym(&regularized, eps)?;
        let reduced = supported_rows(&info, eps);
        Ok(Self {
            theta_hat,
            grid,
            info,
            eps,
            info_inv_sqrt,
            reduced,
            stencil,
            fit: None,
            warnings: Vec::new(),
        })
    }

    pub fn with_fit_meta(mut self, fit: FitMeta) -> Self {
        self.fit = Some(fit);
        self
    }

    pub fn theta_hat(&self) -> &GpParams {
        &self.theta_hat
    }

    pub fn grid(&self) -> &ObservationGrid {
        &self.grid
    }

    /// Unregularized information estimate.
    pub fn info(&self) -> &DMatrix<f64> {
        &self.info
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn info_inv_sqrt(&self) -> &DMatrix<f64> {
        &self.info_inv_sqrt
    }

    /// Number of information directions the reference cohort supports.
    pub fn supported_dim(&self) -> usize {
        self.reduced.nrows()
    }

    /// Fisher vector in the eigenbasis of the information, restricted to the
    /// supported directions. Its inner products agree with the Fisher kernel
    /// up to the dropped, numerically null, directions.
    pub fn reduced_vector(&self, x: &Trajectory) -> Result<DVector<f64>> {
        Ok(&self.reduced * self.fisher_score(x)?)
    }

    pub fn reduced_vectors(&self, data: &[Trajectory]) -> Result<Vec<DVector<f64>>> {
        data.par_iter().map(|x| self.reduced_vector(x)).collect()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn fisher_score(&self, x: &Trajectory) -> Result<DVector<f64>> {
        let (_, g) = self.stencil.score(&x.values)?;
        Ok(DVector::from_column_slice(&g))
    }

    /// ψ = I^{-1/2} φ applied to a precomputed score.
    pub fn whiten(&self, score: &DVector<f64>) -> DVector<f64> {
        &self.info_inv_sqrt * score
    }

    pub fn fisher_vector(&self, x: &Trajectory) -> Result<DVector<f64>> {
        Ok(self.whiten(&self.fisher_score(x)?))
    }

    /// Fisher vectors for a batch, in input order.
    pub fn fisher_vectors(&self, data: &[Trajectory]) -> Result<Vec<DVector<f64>>> {
        data.par_iter().map(|x| self.fisher_vector(x)).collect()
    }

    pub fn kernel(&self, x: &Trajectory, x2: &Trajectory) -> Result<f64> {
        Ok(self.fisher_vector(x)?.dot(&self.fisher_vector(x2)?))
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = EmbeddingDoc {
            params: self.theta_hat,
            grid: self.grid.clone(),
            fit: self.fit.clone(),
            info: self.info.transpose().as_slice().to_vec(),
            eps: self.eps,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: EmbeddingDoc = serde_json::from_str(text)?;
        if doc.info.len() != N_PARAMS * N_PARAMS {
            return Err(Error::InvalidInput("\"info\" must hold 36 numbers".into()));
        }
        let info = DMatrix::from_row_slice(N_PARAMS, N_PARAMS, &doc.info);
        let mut emb = Self::from_parts(doc.params, doc.grid, info, doc.eps)?;
        emb.fit = doc.fit;
        Ok(emb)
    }
}

fn supported_rows(info: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(info));
    let mut order: Vec<usize> = (0..N_PARAMS).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&k| eig.eigenvalues[k] > SUPPORT_RTOL * top)
        .collect();
    let mut rows = DMatrix::zeros(keep.len(), N_PARAMS);
    for (r, &k) in keep.iter().enumerate() {
        let scale = 1.0 / (eig.eigenvalues[k] + eps).sqrt();
        for j in 0..N_PARAMS {
            rows[(r, j)] = scale * eig.eigenvectors[(j, k)];
        }
    }
    rows
}

#[derive(Serialize, Deserialize)]
struct EmbeddingDoc {
    #[serde(flatten)]
    params: GpParams,
    grid: ObservationGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fit: Option<FitMeta>,
    info: Vec<f64>,
    eps: f64,
}
