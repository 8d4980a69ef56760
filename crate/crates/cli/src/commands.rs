use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use kernel_rct::fisherkernel::FisherEmbedding;
use kernel_rct::gpmodel::{
    fit_mle, initial_guess, FitResult, FittedParams, ObservationGrid, Trajectory,
};
use kernel_rct::ingest::{
    exclusions_json, load_csv, load_long_csv, preprocess_all, save_csv, synth_cohort,
    trajectories_from_long, Cohort, Exclusion, ExclusionReason, PreprocessConfig, RawSeries,
    SynthConfig, WindowedSeries,
};
use kernel_rct::lmm::{fit_lmm, lmm_interaction_test};
use kernel_rct::power::{
    effect_size, local_alternative_from_cohorts, power_curve, sample_size_for_power, PowerCurve,
};
use kernel_rct::simharness::{
    build_fold_plan_sized, run_experiment, run_fold_power, ExperimentConfig, FoldPowerConfig,
};
use kernel_rct::twosample::{
    hotelling_test, kernel_hotelling_test, mmd_permutation_test, pooled_covariance, Arm,
    LinearKernel, Sample, TestResult,
};

use serde::Serialize;

use crate::config::RunConfig;

/// The optimizer stopped without meeting its tolerance.
#[derive(Debug)]
pub struct NotConverged(pub String);

impl fmt::Display for NotConverged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NotConverged {}

struct Output<'a> {
    dir: &'a Path,
}

impl<'a> Output<'a> {
    fn open(cfg: &'a RunConfig) -> Result<Self> {
        fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
        let out = Self { dir: &cfg.out };
        out.json("config.echo.json", cfg)?;
        Ok(out)
    }

    fn text(&self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    }

    fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        self.text(name, &body)
    }
}

/// Historical cohorts after preprocessing, on the model grid.
struct Cohorts {
    grid: ObservationGrid,
    cn: Vec<Trajectory>,
    mci: Vec<Trajectory>,
    excluded: Vec<Exclusion>,
}

fn preprocess_config(cfg: &RunConfig) -> PreprocessConfig {
    PreprocessConfig {
        start_range: (cfg.preprocess.start_range[0], cfg.preprocess.start_range[1]),
        window: cfg.preprocess.window,
        strict150: cfg.preprocess.strict150,
    }
}

fn model_grid(cfg: &RunConfig) -> Result<ObservationGrid> {
    let thin = cfg.preprocess.thin;
    let times = (1..=cfg.preprocess.window)
        .filter(|k| k % thin == 0)
        .map(|k| k as f64)
        .collect();
    Ok(ObservationGrid::unit(times)?)
}

/// Restrict a window to integer weeks of `grid`.
fn on_grid(w: &WindowedSeries, grid: &ObservationGrid) -> Result<Option<Trajectory>> {
    let mut values = Vec::with_capacity(grid.len());
    for &t in grid.times() {
        let k = t as usize;
        if t != k as f64 || k == 0 || k > w.window() {
            bail!(
                "grid time {t} is not a week within the {}-week window",
                w.window()
            );
        }
        values.push(w.values[k]);
    }
    Ok(Trajectory::new(w.subject_id.clone(), values).ok())
}

fn load_cohorts(raw: &[RawSeries], cfg: &RunConfig, grid: ObservationGrid) -> Result<Cohorts> {
    let (kept, mut excluded) = preprocess_all(raw, &preprocess_config(cfg));
    let (mut cn, mut mci) = (Vec::new(), Vec::new());
    for w in &kept {
        match on_grid(w, &grid)? {
            Some(x) if w.cohort == Cohort::CN => cn.push(x),
            Some(x) => mci.push(x),
            None => excluded.push(Exclusion {
                subject_id: w.subject_id.clone(),
                reason: ExclusionReason::TooFewObservations,
            }),
        }
    }
    if cn.is_empty() {
        bail!("no CN subject survived preprocessing");
    }
    Ok(Cohorts {
        grid,
        cn,
        mci,
        excluded,
    })
}

fn load_embedding(cfg: &RunConfig) -> Result<FisherEmbedding> {
    let path = cfg
        .embedding
        .as_deref()
        .context("no embedding: set `embedding` in the config")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    FisherEmbedding::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run_fit(cohorts: &Cohorts, cfg: &RunConfig) -> Result<FitResult> {
    let init = cfg
        .fit
        .init
        .unwrap_or_else(|| initial_guess(&cohorts.cn, &cohorts.grid));
    Ok(fit_mle(
        &cohorts.cn,
        &cohorts.grid,
        &init,
        &cfg.fit_config(),
    )?)
}

fn not_converged(fit: &FitResult, cfg: &RunConfig) -> NotConverged {
    NotConverged(format!(
        "fit stopped after {} iterations with gradient norm {:e} (tolerance {:e})",
        fit.iters, fit.grad_inf, cfg.fit.grad_tol
    ))
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let raw = load_csv(cfg.input()?)?;
    let cohorts = load_cohorts(&raw, cfg, model_grid(cfg)?)?;
    let out = Output::open(cfg)?;
    out.text(
        "exclusions.json",
        &(exclusions_json(&cohorts.excluded)? + "\n"),
    )?;
    let fit = run_fit(&cohorts, cfg)?;
    out.json("params.json", &FittedParams::new(&fit, &cohorts.grid))?;
    println!(
        "fitted {} CN trajectories: loglik {:.4}, {} iterations",
        cohorts.cn.len(),
        fit.loglik,
        fit.iters
    );
    if !fit.converged {
        return Err(not_converged(&fit, cfg).into());
    }
    Ok(())
}

pub fn embed(cfg: &RunConfig) -> Result<()> {
    let path = cfg
        .params
        .as_deref()
        .context("no fitted parameters: set `params` in the config")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let fitted: FittedParams =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    fitted.params.validate()?;
    let raw = load_csv(cfg.input()?)?;
    let cohorts = load_cohorts(&raw, cfg, fitted.grid.clone())?;
    let emb = FisherEmbedding::fit(&fitted.params, &cohorts.grid, &cohorts.cn, None)?
        .with_fit_meta(fitted.fit);
    write_embedding(&Output::open(cfg)?, &emb)?;
    println!(
        "embedding estimated from {} CN trajectories",
        cohorts.cn.len()
    );
    Ok(())
}

fn write_embedding(out: &Output, emb: &FisherEmbedding) -> Result<()> {
    for w in emb.warnings() {
        eprintln!("warning: {w}");
    }
    out.text("embedding.json", &(emb.to_json()? + "\n"))
}

fn verdict(r: &TestResult) -> String {
    format!(
        "{}: statistic {:.6} vs threshold {:.6}, p = {:.4}, {} at alpha = {}",
        r.method,
        r.statistic,
        r.threshold,
        r.p_value,
        if r.reject { "reject" } else { "do not reject" },
        r.alpha
    )
}

pub fn test(cfg: &RunConfig) -> Result<()> {
    let rows = load_long_csv(cfg.input()?)?;
    let result = if cfg.method == "lmm" {
        lmm_interaction_test(&fit_lmm(&rows)?, cfg.alpha)?
    } else {
        let emb = load_embedding(cfg)?;
        let (t, c) = trajectories_from_long(&rows, emb.grid())?;
        if t.is_empty() || c.is_empty() {
            bail!(
                "both arms need at least one subject (got {} T, {} C)",
                t.len(),
                c.len()
            );
        }
        let vt = emb.reduced_vectors(&t)?;
        let vc = emb.reduced_vectors(&c)?;
        match cfg.method.as_str() {
            "mmd" => mmd_permutation_test(
                &Sample::new(Arm::T, vt),
                &Sample::new(Arm::C, vc),
                &LinearKernel,
                cfg.alpha,
                cfg.n_perm,
                cfg.seed,
            )?,
            "kernel-hotelling" => kernel_hotelling_test(
                &vt,
                &vc,
                cfg.gamma,
                cfg.pooled_weights,
                cfg.alpha,
                cfg.n_perm,
                cfg.seed,
            )?,
            "hotelling-f" => hotelling_test(&vt, &vc, cfg.alpha)?,
            m => bail!("unknown method `{m}`"),
        }
    };
    Output::open(cfg)?.json("test_result.json", &result)?;
    println!("{}", verdict(&result));
    Ok(())
}

fn n_for_80(effect: f64, p: usize, cfg: &RunConfig) -> Option<usize> {
    sample_size_for_power(0.8, p, cfg.alpha, effect, cfg.power.ratio)
        .ok()
        .map(|(t, c)| t + c)
}

fn cohort_power(emb: &FisherEmbedding, cohorts: &Cohorts, cfg: &RunConfig) -> Result<PowerCurve> {
    if cohorts.mci.is_empty() {
        bail!("no MCI subject survived preprocessing");
    }
    let va = emb.reduced_vectors(&cohorts.cn)?;
    let vs = emb.reduced_vectors(&cohorts.mci)?;
    let alt = local_alternative_from_cohorts(&va, &vs, cfg.rho)?;
    let effect = effect_size(&alt.shift(), &pooled_covariance(&va, &vs))?;
    let p = va[0].len();
    let curve = power_curve(&cfg.power.n_grid, cfg.power.ratio, p, cfg.alpha, effect)?;
    match n_for_80(effect, p, cfg) {
        Some(n) => println!("effect size {effect:.4}; 80% power at n = {n}"),
        None => println!("effect size {effect:.4}; 80% power not reachable"),
    }
    Ok(curve)
}

fn write_curve(out: &Output, curve: &PowerCurve) -> Result<()> {
    out.text("power_curve.csv", &curve.to_csv())?;
    out.text("power_curve.json", &(curve.to_json()? + "\n"))
}

pub fn power(cfg: &RunConfig) -> Result<()> {
    let emb = load_embedding(cfg)?;
    let raw = load_csv(cfg.input()?)?;
    let cohorts = load_cohorts(&raw, cfg, emb.grid().clone())?;
    let curve = cohort_power(&emb, &cohorts, cfg)?;
    write_curve(&Output::open(cfg)?, &curve)
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let s = &cfg.simulate;
    let mut exp = ExperimentConfig::new(s.theta_control, s.mu_shift);
    exp.span = s.span;
    exp.n_grid = s.n_grid.clone();
    exp.t_grid = s.t_grid.clone();
    exp.alpha = cfg.alpha;
    exp.n_sims = s.n_sims;
    exp.seed = cfg.seed;
    exp.n_embedding = s.n_embedding;
    let table = run_experiment(&exp)?;
    let out = Output::open(cfg)?;
    out.text("replicates.csv", &table.replicates_csv())?;
    out.text("summary.csv", &table.summary_csv())?;
    for row in table.summary() {
        println!(
            "{:>3} n={:<3} t={:<3} power {:.3} (se {:.3}, {} failed)",
            row.method, row.n, row.t, row.power, row.se, row.n_failed
        );
    }
    Ok(())
}

fn synth_raw(cfg: &RunConfig) -> Result<Vec<RawSeries>> {
    let y = &cfg.synth;
    let sc = SynthConfig {
        missing_rate: y.missing_rate,
        seed: cfg.seed,
        ..SynthConfig::default()
    };
    Ok(synth_cohort(&y.cn, &y.mci, y.n_cn, y.n_mci, &sc)?)
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let raw = synth_raw(cfg)?;
    Output::open(cfg)?;
    let path = cfg.out.join("cohort.csv");
    save_csv(&path, &raw)?;
    println!("wrote {} subjects to {}", raw.len(), path.display());
    Ok(())
}

fn fold_curves_csv(report: &kernel_rct::simharness::FoldPowerReport) -> String {
    let mut out = String::from("fold,n_total,n_T,n_C,power\n");
    let mut push = |label: &str, curve: &PowerCurve| {
        for r in &curve.rows {
            out.push_str(&format!(
                "{label},{},{},{},{}\n",
                r.n_total, r.n_t, r.n_c, r.power
            ));
        }
    };
    for f in &report.folds {
        if let Some(c) = &f.curve {
            push(&f.fold.to_string(), c);
        }
    }
    push("average", &report.averaged);
    out
}

pub fn pipeline(cfg: &RunConfig) -> Result<()> {
    let out = Output::open(cfg)?;
    let raw = match &cfg.input {
        Some(p) => load_csv(p)?,
        None => {
            let raw = synth_raw(cfg)?;
            save_csv(cfg.out.join("cohort.csv"), &raw)?;
            raw
        }
    };
    let cohorts = load_cohorts(&raw, cfg, model_grid(cfg)?)?;
    out.text(
        "exclusions.json",
        &(exclusions_json(&cohorts.excluded)? + "\n"),
    )?;

    let fit = run_fit(&cohorts, cfg)?;
    out.json("params.json", &FittedParams::new(&fit, &cohorts.grid))?;
    if !fit.converged {
        return Err(not_converged(&fit, cfg).into());
    }
    let meta = FittedParams::new(&fit, &cohorts.grid).fit;
    let emb =
        FisherEmbedding::fit(&fit.params, &cohorts.grid, &cohorts.cn, None)?.with_fit_meta(meta);
    write_embedding(&out, &emb)?;
    write_curve(&out, &cohort_power(&emb, &cohorts, cfg)?)?;

    if cfg.folds.enabled {
        let ids = |v: &[Trajectory]| v.iter().map(|x| x.subject_id.clone()).collect::<Vec<_>>();
        let plan = build_fold_plan_sized(
            &ids(&cohorts.cn),
            &ids(&cohorts.mci),
            cfg.folds.n_folds,
            cfg.seed,
        )?;
        let fcfg = FoldPowerConfig {
            rho: cfg.rho,
            alpha: cfg.alpha,
            n_grid: cfg.power.n_grid.clone(),
            fit: cfg.fit_config(),
            init: cfg.fit.init,
        };
        let report = run_fold_power(&plan, &cohorts.cn, &cohorts.mci, &cohorts.grid, &fcfg)?;
        out.json("folds.json", &report)?;
        out.text("fold_curves.csv", &fold_curves_csv(&report))?;
        for f in &report.folds {
            match (&f.error, f.n_for_80) {
                (Some(e), _) => println!("fold {}: failed ({e})", f.fold),
                (None, Some(n)) => println!("fold {}: 80% power at n = {n}", f.fold),
                (None, None) => println!("fold {}: 80% power not reachable", f.fold),
            }
        }
        match report.averaged_n_for_80 {
            Some(n) => println!("averaged: 80% power at n = {n}"),
            None => println!("averaged: 80% power not reachable"),
        }
    }
    Ok(())
}
