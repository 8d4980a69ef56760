use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kernel_rct::gpmodel::{FitConfig, GpParams};
use kernel_rct::twosample::{PooledWeights, MIN_N_PERM};
use serde::{Deserialize, Serialize};

pub const METHODS: [&str; 4] = ["mmd", "kernel-hotelling", "hotelling-f", "lmm"];

/// One run's settings. Every field has a default, so `{}` is a valid config.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub alpha: f64,
    pub rho: f64,
    /// Kernel Hotelling regularization.
    pub gamma: f64,
    pub n_perm: usize,
    pub method: String,
    pub pooled_weights: PooledWeights,
    /// Not echoed, so runs into different directories produce identical files.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    /// Raw cohort CSV for fit/embed/power/pipeline, long-format CSV for test.
    pub input: Option<PathBuf>,
    /// Fitted-parameter JSON consumed by `embed`.
    pub params: Option<PathBuf>,
    /// Embedding JSON consumed by `test` and `power`.
    pub embedding: Option<PathBuf>,
    pub preprocess: PreprocessSection,
    pub fit: FitSection,
    pub power: PowerSection,
    pub folds: FoldSection,
    pub simulate: SimulateSection,
    pub synth: SynthSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub start_range: [u32; 2],
    pub window: usize,
    pub strict150: bool,
    /// Keep every `thin`-th week of the window as the model grid.
    pub thin: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub n_starts: usize,
    pub start_spread: f64,
    /// Starting point; a moment-based guess when absent.
    pub init: Option<GpParams>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerSection {
    /// Total sample sizes, increasing.
    pub n_grid: Vec<usize>,
    /// n_T / n_C.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldSection {
    pub enabled: bool,
    pub n_folds: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub theta_control: GpParams,
    pub mu_shift: f64,
    pub span: f64,
    pub n_grid: Vec<usize>,
    pub t_grid: Vec<usize>,
    pub n_sims: usize,
    pub n_embedding: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_cn: usize,
    pub n_mci: usize,
    pub missing_rate: f64,
    pub cn: GpParams,
    pub mci: GpParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            alpha: 0.05,
            rho: kernel_rct::power::DEFAULT_RHO,
            gamma: 1e-3,
            n_perm: kernel_rct::twosample::DEFAULT_N_PERM,
            method: "hotelling-f".into(),
            pooled_weights: PooledWeights::Printed,
            out: PathBuf::from("out"),
            input: None,
            params: None,
            embedding: None,
            preprocess: PreprocessSection::default(),
            fit: FitSection::default(),
            power: PowerSection::default(),
            folds: FoldSection::default(),
            simulate: SimulateSection::default(),
            synth: SynthSection::default(),
        }
    }
}

impl Default for PreprocessSection {
    fn default() -> Self {
        let (lo, hi) = kernel_rct::ingest::DEFAULT_START_RANGE;
        Self {
            start_range: [lo, hi],
            window: kernel_rct::ingest::DEFAULT_WINDOW,
            strict150: false,
            thin: 1,
        }
    }
}

impl Default for FitSection {
    fn default() -> Self {
        let d = FitConfig::default();
        Self {
            max_iter: d.max_iter,
            grad_tol: d.grad_tol,
            n_starts: d.n_starts,
            start_spread: d.start_spread,
            init: None,
        }
    }
}

impl Default for PowerSection {
    fn default() -> Self {
        Self {
            n_grid: (1..=40).map(|k| 10 * k).collect(),
            ratio: 1.0,
        }
    }
}

impl Default for FoldSection {
    fn default() -> Self {
        Self {
            enabled: true,
            n_folds: kernel_rct::simharness::N_FOLDS,
        }
    }
}

impl Default for SimulateSection {
    fn default() -> Self {
        use kernel_rct::simharness::*;
        Self {
            theta_control: GpParams {
                mu: -0.02,
                sigma2: 2.0,
                alpha2: 3.0,
                beta: -0.5,
                rho2: 0.3,
                nu: 1.0,
            },
            mu_shift: 0.002,
            span: DEFAULT_SPAN,
            n_grid: DEFAULT_N_GRID.to_vec(),
            t_grid: DEFAULT_T_GRID.to_vec(),
            n_sims: DEFAULT_N_SIMS,
            n_embedding: DEFAULT_N_EMBEDDING,
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        let cn = GpParams {
            mu: 0.0,
            sigma2: 1.0,
            alpha2: 1.0,
            beta: 0.0,
            rho2: 25.0,
            nu: 1.0,
        };
        Self {
            n_cn: kernel_rct::simharness::CN_COHORT_SIZE,
            n_mci: kernel_rct::simharness::MCI_COHORT_SIZE,
            missing_rate: 0.05,
            cn,
            mci: cn.with_mu(-0.007),
        }
    }
}

fn check(ok: bool, what: &str) -> Result<()> {
    if !ok {
        bail!("config: {what}");
    }
    Ok(())
}

fn check_params(p: &GpParams, key: &str) -> Result<()> {
    p.validate().with_context(|| format!("config: {key}"))?;
    Ok(())
}

fn increasing(v: &[usize]) -> bool {
    !v.is_empty() && v[0] > 0 && v.windows(2).all(|w| w[1] > w[0])
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        check(
            self.alpha > 0.0 && self.alpha < 1.0,
            "alpha must lie in (0, 1)",
        )?;
        check((0.0..=1.0).contains(&self.rho), "rho must lie in [0, 1]")?;
        check(
            self.gamma > 0.0 && self.gamma.is_finite(),
            "gamma must be positive",
        )?;
        check(
            self.n_perm >= MIN_N_PERM,
            &format!("n_perm must be at least {MIN_N_PERM}"),
        )?;
        check(
            METHODS.contains(&self.method.as_str()),
            &format!(
                "unknown method `{}`; valid methods: {}",
                self.method,
                METHODS.join(", ")
            ),
        )?;

        let pp = &self.preprocess;
        check(
            pp.start_range[0] <= pp.start_range[1],
            "preprocess.start_range must be [lo, hi] with lo <= hi",
        )?;
        check(pp.window >= 2, "preprocess.window must be at least 2")?;
        check(
            pp.thin >= 1 && pp.thin <= pp.window / 2,
            "preprocess.thin must lie in [1, window/2]",
        )?;

        let f = &self.fit;
        check(f.max_iter >= 1, "fit.max_iter must be at least 1")?;
        check(f.grad_tol > 0.0, "fit.grad_tol must be positive")?;
        check(f.n_starts >= 1, "fit.n_starts must be at least 1")?;
        check(
            f.start_spread >= 0.0 && f.start_spread.is_finite(),
            "fit.start_spread must be >= 0",
        )?;
        if let Some(p) = &f.init {
            check_params(p, "fit.init")?;
        }

        check(
            increasing(&self.power.n_grid),
            "power.n_grid must be positive and increasing",
        )?;
        check(
            self.power.ratio > 0.0 && self.power.ratio.is_finite(),
            "power.ratio must be positive",
        )?;
        check(self.folds.n_folds >= 1, "folds.n_folds must be at least 1")?;

        let s = &self.simulate;
        check_params(&s.theta_control, "simulate.theta_control")?;
        check(s.mu_shift.is_finite(), "simulate.mu_shift must be finite")?;
        check(
            s.span > 0.0 && s.span.is_finite(),
            "simulate.span must be positive",
        )?;
        check(
            increasing(&s.n_grid),
            "simulate.n_grid must be positive and increasing",
        )?;
        check(
            increasing(&s.t_grid),
            "simulate.t_grid must be positive and increasing",
        )?;
        check(s.n_sims >= 1, "simulate.n_sims must be at least 1")?;
        check(
            s.n_embedding >= 2,
            "simulate.n_embedding must be at least 2",
        )?;

        let y = &self.synth;
        check(
            y.n_cn >= 1 && y.n_mci >= 1,
            "synth cohorts must be non-empty",
        )?;
        check(
            (0.0..1.0).contains(&y.missing_rate),
            "synth.missing_rate must lie in [0, 1)",
        )?;
        check_params(&y.cn, "synth.cn")?;
        check_params(&y.mci, "synth.mci")?;
        Ok(())
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            max_iter: self.fit.max_iter,
            grad_tol: self.fit.grad_tol,
            n_starts: self.fit.n_starts,
            seed: self.seed,
            start_spread: self.fit.start_spread,
            ..FitConfig::default()
        }
    }

    pub fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .context("no input file: set `input` in the config or pass --input")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        c.validate().unwrap();
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.rho, 0.4);
        assert_eq!(c.power.n_grid.len(), 40);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"alhpa": 0.1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"fit": {"n_start": 2}}"#).is_err());
    }

    #[test]
    fn ranges_are_checked() {
        for doc in [
            r#"{"alpha": 1.5}"#,
            r#"{"rho": -0.1}"#,
            r#"{"n_perm": 10}"#,
            r#"{"method": "t-test"}"#,
            r#"{"power": {"n_grid": [20, 10]}}"#,
            r#"{"synth": {"missing_rate": 1.0}}"#,
            r#"{"preprocess": {"thin": 0}}"#,
        ] {
            let c: RunConfig = serde_json::from_str(doc).unwrap();
            assert!(c.validate().is_err(), "{doc}");
        }
    }

    #[test]
    fn survives_a_round_trip() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(
            serde_json::to_value(&c).unwrap(),
            serde_json::to_value(&back).unwrap()
        );
    }
}
