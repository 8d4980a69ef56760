//! Raw weekly series: CSV input/output, baseline anchoring and windowing,
//! and a synthetic cohort generator with the same layout.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseIssue, Result};
use crate::gpmodel::{GpParams, GpSimulator, ObservationGrid, Trajectory};
use crate::lmm::LongRow;
use crate::numeric::{derive_seed, rng_from_seed};
use crate::twosample::Arm;

pub const MAX_RECORDS: usize = 250;
pub const DEFAULT_WINDOW: usize = 150;
pub const DEFAULT_START_RANGE: (u32, u32) = (5, 15);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cohort {
    CN,
    MCI,
}

impl Cohort {
    pub fn as_str(&self) -> &'static str {
        match self {
            Cohort::CN => "CN",
            Cohort::MCI => "MCI",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "CN" => Some(Cohort::CN),
            "MCI" => Some(Cohort::MCI),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeekRecord {
    pub week: u32,
    /// `None` when the week is recorded but incomplete.
    pub value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries {
    pub subject_id: String,
    pub cohort: Cohort,
    /// Strictly increasing in `week`.
    pub records: Vec<WeekRecord>,
}

impl RawSeries {
    fn value_at(&self) -> HashMap<u32, f64> {
        self.records
            .iter()
            .filter_map(|r| r.value.map(|v| (r.week, v)))
            .collect()
    }

    pub fn last_week(&self) -> Option<u32> {
        self.records.last().map(|r| r.week)
    }
}

#[derive(Clone, Debug)]
pub struct PreprocessConfig {
    /// Inclusive range searched for the anchor week.
    pub start_range: (u32, u32),
    pub window: usize,
    /// Exclude subjects whose record ends before the window does.
    pub strict150: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            start_range: DEFAULT_START_RANGE,
            window: DEFAULT_WINDOW,
            strict150: false,
        }
    }
}

/// A baseline-subtracted window: `values[k]` is offset k from the anchor, so
/// `values[0] == Some(0.0)` and `values.len() == window + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedSeries {
    pub subject_id: String,
    pub cohort: Cohort,
    pub anchor_week: u32,
    pub values: Vec<Option<f64>>,
}

impl WindowedSeries {
    pub fn window(&self) -> usize {
        self.values.len() - 1
    }

    /// Drop offset 0; the result lives on the weekly grid 1..=window.
    pub fn to_trajectory(&self) -> Trajectory {
        Trajectory {
            subject_id: self.subject_id.clone(),
            values: self.values[1..].to_vec(),
        }
    }

    /// Subtract the offset-0 value again; a no-op on preprocessed output.
    pub fn reanchored(&self) -> Self {
        let base = self.values[0].unwrap_or(0.0);
        Self {
            values: self.values.iter().map(|v| v.map(|x| x - base)).collect(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    NoAnchorInRange,
    ShortWindow,
    TooFewObservations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub subject_id: String,
    pub reason: ExclusionReason,
}

pub fn preprocess(
    raw: &RawSeries,
    config: &PreprocessConfig,
) -> std::result::Result<WindowedSeries, ExclusionReason> {
    let values = raw.value_at();
    let (lo, hi) = config.start_range;
    let anchor = (lo..=hi)
        .find(|w| values.contains_key(w))
        .ok_or(ExclusionReason::NoAnchorInRange)?;
    let end = anchor as u64 + config.window as u64;
    if config.strict150 && raw.last_week().is_none_or(|w| (w as u64) < end) {
        return Err(ExclusionReason::ShortWindow);
    }
    let base = values[&anchor];
    let window: Vec<Option<f64>> = (0..=config.window as u32)
        .map(|k| values.get(&(anchor + k)).map(|v| v - base))
        .collect();
    if window[1..].iter().filter(|v| v.is_some()).count() < 2 {
        return Err(ExclusionReason::TooFewObservations);
    }
    Ok(WindowedSeries {
        subject_id: raw.subject_id.clone(),
        cohort: raw.cohort,
        anchor_week: anchor,
        values: window,
    })
}

/// Preprocess a cohort, keeping input order and collecting exclusions.
pub fn preprocess_all(
    raws: &[RawSeries],
    config: &PreprocessConfig,
) -> (Vec<WindowedSeries>, Vec<Exclusion>) {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for r in raws {
        match preprocess(r, config) {
            Ok(w) => kept.push(w),
            Err(reason) => excluded.push(Exclusion {
                subject_id: r.subject_id.clone(),
                reason,
            }),
        }
    }
    (kept, excluded)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn check_header(rdr: &mut csv::Reader<impl Read>, want: &[&str]) -> Result<()> {
    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != want {
        return Err(Error::Parse(vec![ParseIssue {
            line: 1,
            message: format!("expected header `{}`, found `{}`", want.join(","), got.join(",")),
        }]));
    }
    Ok(())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

/// Parse a raw cohort file (`subject_id,week,value,cohort`).
pub fn read_raw_csv<R: Read>(input: R) -> Result<Vec<RawSeries>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &["subject_id", "week", "value", "cohort"])?;
    let mut issues = Vec::new();
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, (Cohort, Vec<(WeekRecord, usize)>)> = HashMap::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                issues.push(ParseIssue { line, message: e.to_string() });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let id = rec[0].to_string();
        if id.is_empty() {
            issues.push(ParseIssue { line, message: "empty subject_id".into() });
            continue;
        }
        let Ok(week) = rec[1].parse::<u32>() else {
            issues.push(ParseIssue { line, message: format!("week `{}` is not a non-negative integer", &rec[1]) });
            continue;
        };
        let value = if rec[2].is_empty() {
            None
        } else {
            match rec[2].parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => {
                    issues.push(ParseIssue { line, message: format!("value `{}` is not a finite number", &rec[2]) });
                    continue;
                }
            }
        };
        let Some(cohort) = Cohort::parse(&rec[3]) else {
            issues.push(ParseIssue { line, message: format!("cohort `{}` is not CN or MCI", &rec[3]) });
            continue;
        };
        let entry = by_id.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (cohort, Vec::new())
        });
        if entry.0 != cohort {
            issues.push(ParseIssue { line, message: format!("subject {id} has conflicting cohort labels") });
            continue;
        }
        entry.1.push((WeekRecord { week, value }, line));
    }

    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let (cohort, mut recs) = by_id.remove(&id).unwrap();
        recs.sort_by_key(|(r, line)| (r.week, *line));
        for w in recs.windows(2) {
            if w[0].0.week == w[1].0.week {
                issues.push(ParseIssue {
                    line: w[1].1,
                    message: format!(
                        "duplicate week {} for subject {id} (first seen on line {})",
                        w[1].0.week, w[0].1
                    ),
                });
            }
        }
        if recs.len() > MAX_RECORDS {
            issues.push(ParseIssue {
                line: recs[MAX_RECORDS].1,
                message: format!("subject {id} has more than {MAX_RECORDS} weekly records"),
            });
        }
        out.push(RawSeries {
            subject_id: id,
            cohort,
            records: recs.into_iter().map(|(r, _)| r).collect(),
        });
    }
    if !issues.is_empty() {
        issues.sort_by_key(|i| i.line);
        return Err(Error::Parse(issues));
    }
    Ok(out)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<RawSeries>> {
    read_raw_csv(open(path.as_ref())?)
}

fn fmt_value(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_raw_csv<W: Write>(out: W, series: &[RawSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject_id", "week", "value", "cohort"])?;
    for s in series {
        for r in &s.records {
            w.write_record([
                s.subject_id.as_str(),
                &r.week.to_string(),
                &fmt_value(r.value),
                s.cohort.as_str(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, series: &[RawSeries]) -> Result<()> {
    write_raw_csv(File::create(path)?, series)
}

/// `subject_id,offset_week,value`, offsets 0..=window, empty value when missing.
pub fn write_trajectory_csv<W: Write>(out: W, series: &[WindowedSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject_id", "offset_week", "value"])?;
    for s in series {
        for (k, v) in s.values.iter().enumerate() {
            w.write_record([s.subject_id.as_str(), &k.to_string(), &fmt_value(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn exclusions_json(excluded: &[Exclusion]) -> Result<String> {
    Ok(serde_json::to_string_pretty(excluded)?)
}

/// Parse two-arm long-format data (`subject_id,week,group,value`).
pub fn read_long_csv<R: Read>(input: R) -> Result<Vec<LongRow>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &["subject_id", "week", "group", "value"])?;
    let mut issues = Vec::new();
    let mut rows = Vec::new();
    let mut seen: HashMap<(String, u64), usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                issues.push(ParseIssue { line, message: e.to_string() });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let week = match rec[1].parse::<f64>() {
            Ok(w) if w.is_finite() && w > 0.0 => w,
            _ => {
                issues.push(ParseIssue { line, message: format!("week `{}` must be a positive number", &rec[1]) });
                continue;
            }
        };
        let group = match &rec[2] {
            "T" => Arm::T,
            "C" => Arm::C,
            g => {
                issues.push(ParseIssue { line, message: format!("group `{g}` is not T or C") });
                continue;
            }
        };
        if rec[3].is_empty() {
            continue;
        }
        let value = match rec[3].parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                issues.push(ParseIssue { line, message: format!("value `{}` is not a finite number", &rec[3]) });
                continue;
            }
        };
        if let Some(first) = seen.insert((rec[0].to_string(), week.to_bits()), line) {
            issues.push(ParseIssue {
                line,
                message: format!("duplicate week {week} for subject {} (first seen on line {first})", &rec[0]),
            });
            continue;
        }
        rows.push(LongRow {
            subject: rec[0].to_string(),
            week,
            group,
            value,
        });
    }
    if !issues.is_empty() {
        return Err(Error::Parse(issues));
    }
    Ok(rows)
}

pub fn load_long_csv(path: impl AsRef<Path>) -> Result<Vec<LongRow>> {
    read_long_csv(open(path.as_ref())?)
}

pub fn write_long_csv<W: Write>(out: W, rows: &[LongRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject_id", "week", "group", "value"])?;
    for r in rows {
        w.write_record([
            r.subject.as_str(),
            &r.week.to_string(),
            &r.group.to_string(),
            &r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Arm-split trajectories from long-format rows whose weeks fall on `grid`.
pub fn trajectories_from_long(
    rows: &[LongRow],
    grid: &ObservationGrid,
) -> Result<(Vec<Trajectory>, Vec<Trajectory>)> {
    let pos: HashMap<u64, usize> = grid
        .times()
        .iter()
        .enumerate()
        .map(|(i, t)| (t.to_bits(), i))
        .collect();
    let mut order: Vec<(String, Arm)> = Vec::new();
    let mut by_id: HashMap<String, Vec<Option<f64>>> = HashMap::new();
    for r in rows {
        let &i = pos.get(&r.week.to_bits()).ok_or_else(|| {
            Error::InvalidInput(format!("week {} of subject {} is not on the model grid", r.week, r.subject))
        })?;
        let vals = by_id.entry(r.subject.clone()).or_insert_with(|| {
            order.push((r.subject.clone(), r.group));
            vec![None; grid.len()]
        });
        vals[i] = Some(r.value);
    }
    let (mut t, mut c) = (Vec::new(), Vec::new());
    for (id, arm) in order {
        let traj = Trajectory::new(id.clone(), by_id.remove(&id).unwrap())?;
        match arm {
            Arm::T => t.push(traj),
            Arm::C => c.push(traj),
        }
    }
    Ok((t, c))
}

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub missing_rate: f64,
    pub n_weeks: u32,
    pub window: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            missing_rate: 0.05,
            n_weeks: MAX_RECORDS as u32,
            window: DEFAULT_WINDOW,
            seed: 0,
        }
    }
}

/// Raw series whose preprocessed windows are draws from the GP model: the
/// anchor week is the first present week in 5..=15 and
/// raw(anchor + k) = baseline + y(k) for y ~ GP on weeks 1..=window.
pub fn synth_cohort(
    params_cn: &GpParams,
    params_mci: &GpParams,
    n_cn: usize,
    n_mci: usize,
    config: &SynthConfig,
) -> Result<Vec<RawSeries>> {
    if !(0.0..1.0).contains(&config.missing_rate) {
        return Err(Error::InvalidInput("missing_rate must lie in [0, 1)".into()));
    }
    let (lo, hi) = DEFAULT_START_RANGE;
    if (config.n_weeks as usize) <= hi as usize + config.window {
        return Err(Error::InvalidInput(format!(
            "n_weeks must exceed {} to hold the window",
            hi as usize + config.window
        )));
    }
    let grid = ObservationGrid::weekly(config.window);
    let sims = [
        (Cohort::CN, n_cn, GpSimulator::new(params_cn, &grid)?),
        (Cohort::MCI, n_mci, GpSimulator::new(params_mci, &grid)?),
    ];
    let mut out = Vec::with_capacity(n_cn + n_mci);
    let mut counter = 0u64;
    for (cohort, n, sim) in &sims {
        for i in 0..*n {
            let mut rng = rng_from_seed(derive_seed(config.seed, counter));
            counter += 1;
            let y = sim.draw(1, "", &mut rng).remove(0);
            let mut present: Vec<bool> = (0..config.n_weeks)
                .map(|_| rng.random::<f64>() >= config.missing_rate)
                .collect();
            if !(lo..=hi).any(|w| present[w as usize]) {
                let w = rng.random_range(lo..=hi);
                present[w as usize] = true;
            }
            let anchor = (lo..=hi).find(|&w| present[w as usize]).unwrap();
            let baseline = 10.0 + 2.0 * rng.sample::<f64, _>(StandardNormal);
            let last = y.values[config.window - 1].unwrap();
            let mut records = Vec::new();
            for w in 0..config.n_weeks {
                let noise: f64 = rng.sample(StandardNormal);
                if !present[w as usize] {
                    continue;
                }
                let value = if w < anchor {
                    baseline + params_cn.sigma2.sqrt() * noise
                } else if w == anchor {
                    baseline
                } else if ((w - anchor) as usize) <= config.window {
                    baseline + y.values[(w - anchor) as usize - 1].unwrap()
                } else {
                    baseline + last + params_cn.sigma2.sqrt() * noise
                };
                records.push(WeekRecord { week: w, value: Some(value) });
            }
            out.push(RawSeries {
                subject_id: format!("{}-{:03}", cohort.as_str(), i + 1),
                cohort: *cohort,
                records,
            });
        }
    }
    Ok(out)
}
