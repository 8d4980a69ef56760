//! Simulation experiments: power of the Fisher-vector Hotelling test (FvH)
//! against the LMM interaction test on GP mean-shift trials, and the
//! cross-validated pseudo-trial power analysis on a CN/MCI cohort.

use std::collections::HashSet;
use std::fmt;

use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisherkernel::FisherEmbedding;
use crate::gpmodel::{fit_mle, initial_guess, FitConfig, GpParams, GpSimulator, ObservationGrid, Trajectory, N_PARAMS};
use crate::lmm::{fit_lmm_subjects, lmm_interaction_test, LmmConfig, SubjectSeries};
use crate::numeric::{binomial_se, derive_seed, rng_from_seed};
use crate::power::{effect_size, local_alternative_from_cohorts, power_curve, sample_size_for_power, PowerCurve};
use crate::twosample::{hotelling_t2, pooled_covariance, Arm};

pub const DEFAULT_N_EMBEDDING: usize = 100;
pub const DEFAULT_SPAN: f64 = 150.0;
pub const DEFAULT_N_GRID: [usize; 3] = [20, 40, 80];
pub const DEFAULT_T_GRID: [usize; 3] = [25, 75, 150];
pub const DEFAULT_N_SIMS: usize = 1000;
pub const CN_COHORT_SIZE: usize = 86;
pub const MCI_COHORT_SIZE: usize = 11;
pub const N_FOLDS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SimMethod {
    FvH,
    #[serde(rename = "LMM")]
    Lmm,
}

impl fmt::Display for SimMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimMethod::FvH => "FvH",
            SimMethod::Lmm => "LMM",
        })
    }
}

/// One grid cell of the power experiment. The treated arm differs from the
/// control arm only in μ.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub theta_control: GpParams,
    pub theta_treated: GpParams,
    /// Trial length; the t observation times are i·span/t.
    pub span: f64,
    pub n_per_arm: usize,
    pub n_timepoints: usize,
    pub alpha: f64,
    pub n_sims: usize,
    pub seed: u64,
    /// Size of the simulated asymptomatic cohort used to fit the embedding.
    pub n_embedding: usize,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.theta_control.validate()?;
        self.theta_treated.validate()?;
        if self.theta_treated.with_mu(self.theta_control.mu) != self.theta_control {
            return Err(Error::InvalidInput("treated parameters may differ from control only in mu".into()));
        }
        if self.n_per_arm < 4 || self.n_timepoints < 2 || self.n_sims == 0 || self.n_embedding < 2 {
            return Err(Error::InvalidInput("scenario sizes are too small".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput("alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioResult {
    pub n_per_arm: usize,
    pub n_timepoints: usize,
    /// Per-replicate p-values, `None` where the replicate failed.
    pub fvh: Vec<Option<f64>>,
    pub lmm: Vec<Option<f64>>,
    pub theta_hat: GpParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSummary {
    pub method: SimMethod,
    pub n: usize,
    pub t: usize,
    pub power: f64,
    pub se: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

fn summarize(method: SimMethod, n: usize, t: usize, p: &[Option<f64>], alpha: f64) -> PowerSummary {
    let ok: Vec<f64> = p.iter().flatten().copied().collect();
    let rejects = ok.iter().filter(|&&v| v <= alpha).count();
    let power = if ok.is_empty() { f64::NAN } else { rejects as f64 / ok.len() as f64 };
    PowerSummary {
        method,
        n,
        t,
        power,
        se: binomial_se(power, ok.len()),
        n_ok: ok.len(),
        n_failed: p.len() - ok.len(),
    }
}

impl ScenarioResult {
    pub fn summary(&self, alpha: f64) -> [PowerSummary; 2] {
        [
            summarize(SimMethod::FvH, self.n_per_arm, self.n_timepoints, &self.fvh, alpha),
            summarize(SimMethod::Lmm, self.n_per_arm, self.n_timepoints, &self.lmm, alpha),
        ]
    }
}

fn ids(data: &[Trajectory]) -> HashSet<&str> {
    data.iter().map(|x| x.subject_id.as_str()).collect()
}

/// Fit the model on a simulated asymptomatic cohort and build the embedding.
fn embedding_for(scenario: &Scenario, grid: &ObservationGrid) -> Result<(FisherEmbedding, Vec<Trajectory>)> {
    let sim = GpSimulator::new(&scenario.theta_control, grid)?;
    let mut rng = rng_from_seed(derive_seed(scenario.seed, u64::MAX));
    let cohort = sim.draw(scenario.n_embedding, "A-", &mut rng);
    let cfg = FitConfig {
        n_starts: 1,
        seed: scenario.seed,
        ..FitConfig::default()
    };
    let theta_hat = match fit_mle(&cohort, grid, &scenario.theta_control, &cfg) {
        Ok(fit) => fit.params,
        Err(Error::NonConvergence { best: Some(best), .. }) => best,
        Err(e) => return Err(e),
    };
    Ok((FisherEmbedding::fit(&theta_hat, grid, &cohort, None)?, cohort))
}

pub fn run_power_experiment(scenario: &Scenario) -> Result<ScenarioResult> {
    scenario.validate()?;
    let grid = ObservationGrid::spanning(scenario.n_timepoints, scenario.span)?;
    let (embedding, cohort) = embedding_for(scenario, &grid)?;
    let sim_c = GpSimulator::new(&scenario.theta_control, &grid)?;
    let sim_t = GpSimulator::new(&scenario.theta_treated, &grid)?;
    let cohort_ids = ids(&cohort);

    let pairs: Vec<(Option<f64>, Option<f64>)> = (0..scenario.n_sims)
        .into_par_iter()
        .map(|r| -> Result<_> {
            let mut rng = rng_from_seed(derive_seed(scenario.seed, r as u64));
            let treated = sim_t.draw(scenario.n_per_arm, "T-", &mut rng);
            let control = sim_c.draw(scenario.n_per_arm, "C-", &mut rng);
            if treated.iter().chain(&control).any(|x| cohort_ids.contains(x.subject_id.as_str())) {
                return Err(Error::InvalidInput("embedding cohort overlaps trial data".into()));
            }
            let fvh = (|| {
                let vt = embedding.reduced_vectors(&treated).ok()?;
                let vc = embedding.reduced_vectors(&control).ok()?;
                hotelling_t2(&vt, &vc).ok().map(|h| h.p_value)
            })();
            let subjects: Vec<SubjectSeries> = treated
                .iter()
                .map(|x| SubjectSeries::from_trajectory(Arm::T, x, &grid))
                .chain(control.iter().map(|x| SubjectSeries::from_trajectory(Arm::C, x, &grid)))
                .collect();
            let lmm = fit_lmm_subjects(&subjects, &LmmConfig::default())
                .and_then(|f| lmm_interaction_test(&f, scenario.alpha))
                .ok()
                .map(|t| t.p_value);
            Ok((fvh, lmm))
        })
        .collect::<Result<_>>()?;
    let (fvh, lmm) = pairs.into_iter().unzip();
    Ok(ScenarioResult {
        n_per_arm: scenario.n_per_arm,
        n_timepoints: scenario.n_timepoints,
        fvh,
        lmm,
        theta_hat: *embedding.theta_hat(),
    })
}

/// Settings for the full (n, t) grid.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub theta_control: GpParams,
    /// μ_treated − μ_control.
    pub mu_shift: f64,
    pub span: f64,
    pub n_grid: Vec<usize>,
    pub t_grid: Vec<usize>,
    pub alpha: f64,
    pub n_sims: usize,
    pub seed: u64,
    pub n_embedding: usize,
}

impl ExperimentConfig {
    pub fn new(theta_control: GpParams, mu_shift: f64) -> Self {
        Self {
            theta_control,
            mu_shift,
            span: DEFAULT_SPAN,
            n_grid: DEFAULT_N_GRID.to_vec(),
            t_grid: DEFAULT_T_GRID.to_vec(),
            alpha: 0.05,
            n_sims: DEFAULT_N_SIMS,
            seed: 0,
            n_embedding: DEFAULT_N_EMBEDDING,
        }
    }

    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut out = Vec::new();
        let mut k = 0;
        for &n in &self.n_grid {
            for &t in &self.t_grid {
                out.push(Scenario {
                    theta_control: self.theta_control,
                    theta_treated: self.theta_control.with_mu(self.theta_control.mu + self.mu_shift),
                    span: self.span,
                    n_per_arm: n,
                    n_timepoints: t,
                    alpha: self.alpha,
                    n_sims: self.n_sims,
                    seed: derive_seed(self.seed, k),
                    n_embedding: self.n_embedding,
                });
                k += 1;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentTable {
    pub alpha: f64,
    pub results: Vec<ScenarioResult>,
}

impl ExperimentTable {
    pub fn summary(&self) -> Vec<PowerSummary> {
        self.results.iter().flat_map(|r| r.summary(self.alpha)).collect()
    }

    pub fn find(&self, method: SimMethod, n: usize, t: usize) -> Option<PowerSummary> {
        self.summary().into_iter().find(|s| s.method == method && s.n == n && s.t == t)
    }

    /// `method,n,t,replicate,p_value`; failed replicates have an empty p-value.
    pub fn replicates_csv(&self) -> String {
        let mut out = String::from("method,n,t,replicate,p_value\n");
        for r in &self.results {
            for (method, ps) in [(SimMethod::FvH, &r.fvh), (SimMethod::Lmm, &r.lmm)] {
                for (i, p) in ps.iter().enumerate() {
                    let p = p.map(|v| v.to_string()).unwrap_or_default();
                    out.push_str(&format!("{method},{},{},{i},{p}\n", r.n_per_arm, r.n_timepoints));
                }
            }
        }
        out
    }

    /// `method,n,t,power,se`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,n,t,power,se\n");
        for s in self.summary() {
            out.push_str(&format!("{},{},{},{},{}\n", s.method, s.n, s.t, s.power, s.se));
        }
        out
    }
}

/// Scenarios run one after another; replicates inside each run in parallel.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentTable> {
    let results = config
        .scenarios()
        .iter()
        .map(run_power_experiment)
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentTable {
        alpha: config.alpha,
        results,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub treated: Vec<String>,
    pub control: Vec<String>,
    pub held_out: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// The 86-CN / 11-MCI design: 8 folds of 11 pseudo-treated CN subjects.
pub fn build_fold_plan(cn_ids: &[String], mci_ids: &[String], seed: u64) -> Result<FoldPlan> {
    if cn_ids.len() != CN_COHORT_SIZE || mci_ids.len() != MCI_COHORT_SIZE {
        return Err(Error::InvalidInput(format!(
            "expected {CN_COHORT_SIZE} CN and {MCI_COHORT_SIZE} MCI subjects (got {} and {}); use build_fold_plan_sized for other cohorts",
            cn_ids.len(),
            mci_ids.len()
        )));
    }
    build_fold_plan_sized(cn_ids, mci_ids, N_FOLDS, seed)
}

/// Shuffle the CN ids and cut them into `n_folds` groups of |MCI|. When the
/// slots outnumber the CN subjects, the last fold is topped up with ids drawn
/// from the earlier folds.
pub fn build_fold_plan_sized(
    cn_ids: &[String],
    mci_ids: &[String],
    n_folds: usize,
    seed: u64,
) -> Result<FoldPlan> {
    let size = mci_ids.len();
    let slots = n_folds * size;
    let n = cn_ids.len();
    if n_folds == 0 || size == 0 {
        return Err(Error::InvalidInput("need at least one fold and one control subject".into()));
    }
    if slots < n || slots - n >= size || n < size + (slots - n) {
        return Err(Error::InvalidInput(format!(
            "{n} CN subjects cannot fill {n_folds} folds of {size}"
        )));
    }
    let distinct: HashSet<&String> = cn_ids.iter().chain(mci_ids).collect();
    if distinct.len() != n + size {
        return Err(Error::InvalidInput("subject ids must be unique across cohorts".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<String> = cn_ids.to_vec();
    order.shuffle(&mut rng);
    let last_start = (n_folds - 1) * size;
    let mut last: Vec<String> = order[last_start..].to_vec();
    let repeats: Vec<String> = order[..last_start]
        .choose_multiple(&mut rng, slots - n)
        .cloned()
        .collect();
    last.extend(repeats);

    let mut folds = Vec::with_capacity(n_folds);
    for f in 0..n_folds {
        let treated: Vec<String> = if f + 1 == n_folds {
            last.clone()
        } else {
            order[f * size..(f + 1) * size].to_vec()
        };
        let in_fold: HashSet<&String> = treated.iter().collect();
        let held_out = cn_ids.iter().filter(|id| !in_fold.contains(id)).cloned().collect();
        folds.push(Fold {
            treated,
            control: mci_ids.to_vec(),
            held_out,
        });
    }
    Ok(FoldPlan { folds })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub theta_hat: Option<GpParams>,
    pub effect: Option<f64>,
    pub curve: Option<PowerCurve>,
    /// Smallest total sample size reaching 80% power.
    pub n_for_80: Option<usize>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPowerReport {
    pub rho: f64,
    pub alpha: f64,
    pub folds: Vec<FoldOutcome>,
    /// Mean of the successful folds' effect sizes.
    pub average_effect: f64,
    pub averaged: PowerCurve,
    pub averaged_n_for_80: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct FoldPowerConfig {
    pub rho: f64,
    pub alpha: f64,
    pub n_grid: Vec<usize>,
    pub fit: FitConfig,
    /// Starting point for every fold's fit; a moment-based guess when `None`.
    pub init: Option<GpParams>,
}

fn by_id<'a>(data: &'a [Trajectory], wanted: &[String]) -> Result<Vec<&'a Trajectory>> {
    wanted
        .iter()
        .map(|id| {
            data.iter()
                .find(|x| &x.subject_id == id)
                .ok_or_else(|| Error::InvalidInput(format!("subject {id} has no trajectory")))
        })
        .collect()
}

fn fold_power(
    fold: &Fold,
    cn: &[Trajectory],
    mci: &[Trajectory],
    grid: &ObservationGrid,
    cfg: &FoldPowerConfig,
) -> Result<(GpParams, f64, PowerCurve, Option<usize>)> {
    let held: Vec<Trajectory> = by_id(cn, &fold.held_out)?.into_iter().cloned().collect();
    let treated: Vec<Trajectory> = by_id(cn, &fold.treated)?.into_iter().cloned().collect();
    let control: Vec<Trajectory> = by_id(mci, &fold.control)?.into_iter().cloned().collect();
    let fit_ids = ids(&held);
    if treated.iter().chain(&control).any(|x| fit_ids.contains(x.subject_id.as_str())) {
        return Err(Error::InvalidInput("kernel-fitting data overlaps pseudo-trial data".into()));
    }
    let init = cfg.init.unwrap_or_else(|| initial_guess(&held, grid));
    let theta_hat = match fit_mle(&held, grid, &init, &cfg.fit) {
        Ok(f) => f.params,
        Err(Error::NonConvergence { best: Some(b), .. }) => b,
        Err(e) => return Err(e),
    };
    let emb = FisherEmbedding::fit(&theta_hat, grid, &held, None)?;
    let va = emb.reduced_vectors(&treated)?;
    let vs = emb.reduced_vectors(&control)?;
    let alt = local_alternative_from_cohorts(&va, &vs, cfg.rho)?;
    let effect = effect_size(&alt.shift(), &pooled_covariance(&va, &vs))?;
    let curve = power_curve(&cfg.n_grid, 1.0, va[0].len(), cfg.alpha, effect)?;
    let n80 = n_for_80(effect, va[0].len(), cfg.alpha);
    Ok((theta_hat, effect, curve, n80))
}

fn n_for_80(effect: f64, p: usize, alpha: f64) -> Option<usize> {
    if effect > 0.0 {
        sample_size_for_power(0.8, p, alpha, effect, 1.0).ok().map(|(t, c)| t + c)
    } else {
        None
    }
}

/// Per-fold power curves plus one curve at the average effect size.
pub fn run_fold_power(
    plan: &FoldPlan,
    cn: &[Trajectory],
    mci: &[Trajectory],
    grid: &ObservationGrid,
    cfg: &FoldPowerConfig,
) -> Result<FoldPowerReport> {
    let folds: Vec<FoldOutcome> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| match fold_power(fold, cn, mci, grid, cfg) {
            Ok((theta, effect, curve, n80)) => FoldOutcome {
                fold: i,
                theta_hat: Some(theta),
                effect: Some(effect),
                curve: Some(curve),
                n_for_80: n80,
                error: None,
            },
            Err(e) => FoldOutcome {
                fold: i,
                theta_hat: None,
                effect: None,
                curve: None,
                n_for_80: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let effects: Vec<f64> = folds.iter().filter_map(|f| f.effect).collect();
    if effects.is_empty() {
        return Err(Error::InvalidInput("every fold failed".into()));
    }
    let average_effect = crate::numeric::mean(&effects);
    // Folds can differ in supported dimension; the largest is conservative.
    let p = folds
        .iter()
        .filter_map(|f| f.curve.as_ref().map(|c| c.p))
        .max()
        .unwrap_or(N_PARAMS);
    let averaged = power_curve(&cfg.n_grid, 1.0, p, cfg.alpha, average_effect)?;
    Ok(FoldPowerReport {
        rho: cfg.rho,
        alpha: cfg.alpha,
        folds,
        average_effect,
        averaged_n_for_80: n_for_80(average_effect, p, cfg.alpha),
        averaged,
    })
}
