//! Seeded experiment drivers and file-level operations used by the CLI.
//!
//! Every driver returns an outcome value and can write its artifacts to a
//! directory. Deterministic artifacts (CSV, JSON reports, the manifest) are
//! bit-identical for a fixed seed; wall times go to separate `timings`
//! files so they never perturb the deterministic ones.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ctd::{Ctd, MultiIndex};
use crate::error::{Error, Result};
use crate::io::{read_ctd, write_ctd};
use crate::maxentry::{search, MaxEntrySearchConfig, MaxEntryTrace, SearchMethod, Termination};
use crate::reduce::{reduce, NormKind, ReductionAlgorithm, ReductionConfig, ReductionMeta};
use crate::sepfunc::{
    ackley, ackley_grid, ackley_separated, build_gaussian_expansion, optimize_function, AckleyGridConfig,
    AckleyParams, CompassConfig, OptimizeConfig,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    DemoConvergence,
    DemoTwoMaxima,
    Compare,
    Ackley,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Experiment::DemoConvergence => "demo-convergence",
            Experiment::DemoTwoMaxima => "demo-two-maxima",
            Experiment::Compare => "compare",
            Experiment::Ackley => "ackley",
        };
        f.write_str(s)
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_string()))
            .map_err(|_| Error::InvalidConfig(format!("unknown experiment {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AckleySettings {
    pub params: AckleyParams,
    /// Accuracy of the Gaussian expansion of the radial term.
    pub expansion_epsilon: f64,
    /// Inner radius below which the expansion is not certified.
    pub delta: f64,
    pub grid: AckleyGridConfig,
    /// Location of the maximum; `None` is the origin.
    pub center: Option<Vec<f64>>,
    pub compass: CompassConfig,
}

impl Default for AckleySettings {
    fn default() -> Self {
        AckleySettings {
            params: AckleyParams::default(),
            expansion_epsilon: 1e-8,
            delta: 3e-6,
            grid: AckleyGridConfig::default(),
            center: None,
            compass: CompassConfig::default(),
        }
    }
}

/// Everything needed to re-run an experiment. Fields that an experiment
/// does not use are carried along unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub trials: usize,
    pub dims: usize,
    pub modes: usize,
    /// Rank of the random background.
    pub background_rank: usize,
    /// Factor entries of the background are uniform on this interval.
    pub background_range: [f64; 2],
    /// Planted maximum value for the demos; spike magnitude for `compare`.
    pub spike: f64,
    pub reduction: ReductionConfig,
    /// Search settings. `compare` runs both methods and ignores `method`.
    pub search: MaxEntrySearchConfig,
    /// Iteration cap of the extended two-maxima run.
    pub extended_k_max: usize,
    pub ackley: AckleySettings,
}

impl ExperimentConfig {
    pub fn defaults_for(experiment: Experiment) -> Self {
        let frobenius = ReductionConfig::new(1e-6, NormKind::Frobenius, ReductionAlgorithm::Interpolative);
        let mut cfg = ExperimentConfig {
            experiment,
            seed: 0,
            trials: 1,
            dims: 6,
            modes: 32,
            background_rank: 3,
            background_range: [0.9, 1.0],
            spike: 3.5,
            reduction: frobenius.clone(),
            search: MaxEntrySearchConfig {
                method: SearchMethod::Squaring,
                reduction: Some(frobenius),
                k_max: 100,
                termination: Termination::RankThreshold(1),
                max_per_term: 1,
            },
            extended_k_max: 60,
            ackley: AckleySettings::default(),
        };
        match experiment {
            Experiment::DemoConvergence | Experiment::Ackley => {}
            Experiment::DemoTwoMaxima => cfg.search.termination = Termination::FixedIterations(6),
            Experiment::Compare => {
                let snorm = ReductionConfig::new(1e-6, NormKind::SNorm, ReductionAlgorithm::Interpolative);
                cfg.trials = 100;
                cfg.dims = 8;
                cfg.background_rank = 4;
                cfg.spike = 4.0;
                cfg.reduction = snorm.clone();
                cfg.search.reduction = Some(snorm);
            }
        }
        cfg
    }

    /// Applies a JSON document on top of this config. Objects merge key by
    /// key; anything else replaces the current value. A run manifest is
    /// accepted too (its `config` member is used).
    pub fn merge_json(&self, text: &str) -> Result<Self> {
        let mut patch: Value = serde_json::from_str(text)?;
        if let Some(inner) = patch.get("config").filter(|_| patch.get("tool").is_some()) {
            patch = inner.clone();
        }
        let cfg = apply_patch(self, patch)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Keeps the reduction used inside the search in step with `reduction`.
    pub fn sync_search_reduction(&mut self) {
        if self.search.reduction.is_some() {
            self.search.reduction = Some(self.reduction.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.dims == 0 || self.modes == 0 || self.background_rank == 0 {
            return Err(Error::InvalidConfig("dims, modes and background_rank must be at least 1".into()));
        }
        let [lo, hi] = self.background_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidConfig(format!("bad background range [{lo}, {hi}]")));
        }
        if !(self.spike.is_finite() && self.spike > 0.0) {
            return Err(Error::InvalidConfig("spike must be positive".into()));
        }
        if self.extended_k_max == 0 {
            return Err(Error::InvalidConfig("extended_k_max must be at least 1".into()));
        }
        self.reduction.validate()?;
        self.search.validate()?;
        self.ackley.params.validate()?;
        self.ackley.compass.validate()
    }

    fn mode_vec(&self) -> Vec<usize> {
        vec![self.modes; self.dims]
    }
}

/// Overrides the fields of `base` with those present in the JSON object
/// `text`; nested objects merge key by key.
pub fn merge_json_into<T: Serialize + DeserializeOwned>(base: &T, text: &str) -> Result<T> {
    apply_patch(base, serde_json::from_str(text)?)
}

fn apply_patch<T: Serialize + DeserializeOwned>(base: &T, patch: Value) -> Result<T> {
    if !patch.is_object() {
        return Err(Error::InvalidConfig("config file must hold a JSON object".into()));
    }
    let mut value = serde_json::to_value(base)?;
    merge(&mut value, patch);
    serde_json::from_value(value).map_err(|e| Error::InvalidConfig(format!("config file: {e}")))
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
}

/// Random background plus planted spikes.
#[derive(Clone, Debug)]
pub struct PlantedInstance {
    pub tensor: Ctd,
    pub locations: Vec<MultiIndex>,
    /// Entries of `tensor` at `locations`.
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub enum SpikeSize {
    /// Add a spike of this magnitude.
    Magnitude(f64),
    /// Add whatever makes the entry equal to this value.
    Peak(f64),
}

/// Background of the given rank with factor entries uniform on
/// `[low, high]`, plus one spike per entry of `spikes` at distinct random
/// locations.
pub fn planted_instance(modes: &[usize], rank: usize, range: [f64; 2], spikes: &[SpikeSize], seed: u64) -> Result<PlantedInstance> {
    let entries = modes.iter().fold(1usize, |acc, &m| acc.saturating_mul(m));
    if entries < spikes.len() {
        return Err(Error::InvalidConfig(format!("{} spikes do not fit in {entries} entries", spikes.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = Ctd::random(modes, rank, range[0], range[1], &mut rng)?;
    let mut locations: Vec<MultiIndex> = Vec::with_capacity(spikes.len());
    while locations.len() < spikes.len() {
        let loc = MultiIndex::new(modes.iter().map(|&m| rng.random_range(0..m)).collect());
        if !locations.contains(&loc) {
            locations.push(loc);
        }
    }
    let mut tensor = background.clone();
    for (loc, size) in locations.iter().zip(spikes) {
        let magnitude = match *size {
            SpikeSize::Magnitude(m) => m,
            SpikeSize::Peak(p) => p - background.eval(loc)?,
        };
        tensor = tensor.add(&Ctd::spike(modes, loc, magnitude)?)?;
    }
    let values = locations.iter().map(|l| tensor.eval(l)).collect::<Result<Vec<_>>>()?;
    Ok(PlantedInstance { tensor, locations, values })
}

/// Seed of trial `trial`, derived from the master seed.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial as u64);
    rng.next_u64()
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(name.to_string())
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<String> {
    fs::write(dir.join(name), text)?;
    Ok(name.to_string())
}

fn write_manifest(dir: &Path, cfg: &ExperimentConfig, mut outputs: Vec<String>) -> Result<PathBuf> {
    outputs.push("manifest.json".into());
    let manifest = Manifest { tool: "ctdopt", version: VERSION, config: cfg.clone(), outputs };
    write_json(dir, "manifest.json", &manifest)?;
    Ok(dir.join("manifest.json"))
}

fn timing_csv(trace: &MaxEntryTrace) -> String {
    let mut out = String::from("k,seconds\n");
    for (r, t) in trace.iterations.iter().zip(&trace.wall_times) {
        out.push_str(&format!("{},{t:e}\n", r.k));
    }
    out
}

fn expect(cfg: &ExperimentConfig, experiment: Experiment) -> Result<()> {
    cfg.validate()?;
    if cfg.experiment != experiment {
        return Err(Error::InvalidConfig(format!("config is for {}, not {experiment}", cfg.experiment)));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub planted_location: MultiIndex,
    pub planted_value: f64,
    pub found_location: Option<MultiIndex>,
    pub found_value: Option<f64>,
    pub correct: bool,
    pub iterations: usize,
    pub final_rank: usize,
}

#[derive(Clone, Debug)]
pub struct ConvergenceOutcome {
    pub report: ConvergenceReport,
    pub trace: MaxEntryTrace,
}

/// One planted spike on a random background, located by the configured
/// search. The trace holds the per-term maxima of every iterate.
pub fn run_demo_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceOutcome> {
    expect(cfg, Experiment::DemoConvergence)?;
    let inst = planted_instance(&cfg.mode_vec(), cfg.background_rank, cfg.background_range, &[SpikeSize::Peak(cfg.spike)], cfg.seed)?;
    let trace = search(&inst.tensor, &cfg.search)?;
    let best = trace.best().cloned();
    let report = ConvergenceReport {
        planted_location: inst.locations[0].clone(),
        planted_value: inst.values[0],
        correct: best.as_ref().is_some_and(|b| b.index == inst.locations[0]),
        found_location: best.as_ref().map(|b| b.index.clone()),
        found_value: best.map(|b| b.value),
        iterations: trace.iteration_count(),
        final_rank: trace.final_iterate.rank(),
    };
    Ok(ConvergenceOutcome { report, trace })
}

impl ConvergenceOutcome {
    pub fn write(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let outputs = vec![
            write_text(dir, "convergence.csv", &self.trace.to_csv())?,
            write_json(dir, "report.json", &self.report)?,
            write_json(dir, "trace.json", &self.trace)?,
            write_text(dir, "timings.csv", &timing_csv(&self.trace))?,
        ];
        write_manifest(dir, cfg, outputs)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TwoMaximaReport {
    pub locations: Vec<MultiIndex>,
    pub values: Vec<f64>,
    pub fixed_iterations: usize,
    pub fixed_rank: usize,
    /// Both planted locations are among the candidates of the fixed run.
    pub both_present: bool,
    pub extended_iterations: usize,
    pub extended_rank: usize,
    pub extended_location: Option<MultiIndex>,
    pub extended_value: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TwoMaximaOutcome {
    pub report: TwoMaximaReport,
    pub fixed: MaxEntryTrace,
    pub extended: MaxEntryTrace,
}

/// Two spikes planted to the same value. The configured search (normally
/// a fixed iteration count) shows both survivors; the extended run keeps
/// squaring until one term remains or `extended_k_max` is reached.
pub fn run_demo_two_maxima(cfg: &ExperimentConfig) -> Result<TwoMaximaOutcome> {
    expect(cfg, Experiment::DemoTwoMaxima)?;
    let peak = SpikeSize::Peak(cfg.spike);
    let inst = planted_instance(&cfg.mode_vec(), cfg.background_rank, cfg.background_range, &[peak, peak], cfg.seed)?;
    let fixed = search(&inst.tensor, &cfg.search)?;
    let extended_cfg = MaxEntrySearchConfig {
        k_max: cfg.extended_k_max,
        termination: Termination::RankThreshold(1),
        ..cfg.search.clone()
    };
    let extended = search(&inst.tensor, &extended_cfg)?;
    let found = |loc: &MultiIndex| fixed.candidates.iter().any(|c| &c.index == loc);
    let report = TwoMaximaReport {
        both_present: inst.locations.iter().all(found),
        locations: inst.locations,
        values: inst.values,
        fixed_iterations: fixed.iteration_count(),
        fixed_rank: fixed.final_iterate.rank(),
        extended_iterations: extended.iteration_count(),
        extended_rank: extended.final_iterate.rank(),
        extended_location: extended.best().map(|c| c.index.clone()),
        extended_value: extended.best().map(|c| c.value),
    };
    Ok(TwoMaximaOutcome { report, fixed, extended })
}

impl TwoMaximaOutcome {
    pub fn write(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let outputs = vec![
            write_text(dir, "two_maxima_fixed.csv", &self.fixed.to_csv())?,
            write_text(dir, "two_maxima_extended.csv", &self.extended.to_csv())?,
            write_json(dir, "report.json", &self.report)?,
            write_json(dir, "trace_fixed.json", &self.fixed)?,
            write_json(dir, "trace_extended.json", &self.extended)?,
            write_text(dir, "timings_fixed.csv", &timing_csv(&self.fixed))?,
            write_text(dir, "timings_extended.csv", &timing_csv(&self.extended))?,
        ];
        write_manifest(dir, cfg, outputs)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodOutcome {
    pub iterations: usize,
    pub correct: bool,
    pub found: Option<MultiIndex>,
    pub value: Option<f64>,
    pub final_rank: usize,
    /// Every reduction in the run met its tolerance.
    pub tolerance_met: bool,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub location: MultiIndex,
    pub squaring: MethodOutcome,
    pub power: MethodOutcome,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareSummary {
    pub trials: usize,
    pub squaring_correct: usize,
    pub power_correct: usize,
    /// Trials in which squaring needed strictly fewer iterations.
    pub squaring_fewer_iterations: usize,
    pub squaring_median_iterations: f64,
    pub power_median_iterations: f64,
    pub squaring_max_iterations: usize,
    pub power_max_iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareTiming {
    pub squaring_median_seconds: f64,
    pub power_median_seconds: f64,
    pub squaring_total_seconds: f64,
    pub power_total_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct CompareOutcome {
    pub trials: Vec<TrialRecord>,
    pub summary: CompareSummary,
    pub timing: CompareTiming,
}

fn run_method(u: &Ctd, cfg: &MaxEntrySearchConfig, method: SearchMethod, planted: &MultiIndex) -> Result<MethodOutcome> {
    let start = Instant::now();
    let trace = search(u, &MaxEntrySearchConfig { method, ..cfg.clone() })?;
    let seconds = start.elapsed().as_secs_f64();
    let best = trace.best();
    Ok(MethodOutcome {
        iterations: trace.iteration_count(),
        correct: best.is_some_and(|b| &b.index == planted),
        found: best.map(|b| b.index.clone()),
        value: best.map(|b| b.value),
        final_rank: trace.final_iterate.rank(),
        tolerance_met: trace.iterations.iter().all(|r| r.tolerance_met),
        seconds,
    })
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Power method against squaring on independent planted instances. Trials
/// run in parallel; results are ordered by trial index.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<CompareOutcome> {
    expect(cfg, Experiment::Compare)?;
    let modes = cfg.mode_vec();
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(cfg.seed, trial);
            let inst = planted_instance(&modes, cfg.background_rank, cfg.background_range, &[SpikeSize::Magnitude(cfg.spike)], seed)?;
            let loc = &inst.locations[0];
            Ok(TrialRecord {
                trial,
                seed,
                squaring: run_method(&inst.tensor, &cfg.search, SearchMethod::Squaring, loc)?,
                power: run_method(&inst.tensor, &cfg.search, SearchMethod::PowerMethod, loc)?,
                location: inst.locations[0].clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let iters = |f: fn(&TrialRecord) -> &MethodOutcome| trials.iter().map(|t| f(t).iterations).collect::<Vec<_>>();
    let secs = |f: fn(&TrialRecord) -> &MethodOutcome| trials.iter().map(|t| f(t).seconds).collect::<Vec<_>>();
    let sq = iters(|t| &t.squaring);
    let pm = iters(|t| &t.power);
    let as_f64 = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    let summary = CompareSummary {
        trials: trials.len(),
        squaring_correct: trials.iter().filter(|t| t.squaring.correct).count(),
        power_correct: trials.iter().filter(|t| t.power.correct).count(),
        squaring_fewer_iterations: trials.iter().filter(|t| t.squaring.iterations < t.power.iterations).count(),
        squaring_median_iterations: median(&as_f64(&sq)),
        power_median_iterations: median(&as_f64(&pm)),
        squaring_max_iterations: sq.iter().copied().max().unwrap_or(0),
        power_max_iterations: pm.iter().copied().max().unwrap_or(0),
    };
    let sq_t = secs(|t| &t.squaring);
    let pm_t = secs(|t| &t.power);
    let timing = CompareTiming {
        squaring_median_seconds: median(&sq_t),
        power_median_seconds: median(&pm_t),
        squaring_total_seconds: sq_t.iter().sum(),
        power_total_seconds: pm_t.iter().sum(),
    };
    Ok(CompareOutcome { trials, summary, timing })
}

impl CompareOutcome {
    /// Long-format CSV, one row per trial and method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,seed,method,iterations,correct,final_rank,value\n");
        for t in &self.trials {
            for (name, m) in [("squaring", &t.squaring), ("power_method", &t.power)] {
                let value = m.value.map(|v| format!("{v:e}")).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{name},{},{},{},{value}\n",
                    t.trial, t.seed, m.iterations, m.correct, m.final_rank
                ));
            }
        }
        out
    }

    pub fn timings_csv(&self) -> String {
        let mut out = String::from("trial,method,seconds\n");
        for t in &self.trials {
            out.push_str(&format!("{},squaring,{:e}\n", t.trial, t.squaring.seconds));
            out.push_str(&format!("{},power_method,{:e}\n", t.trial, t.power.seconds));
        }
        out
    }

    pub fn write(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let outputs = vec![
            write_text(dir, "compare.csv", &self.to_csv())?,
            write_json(dir, "summary.json", &self.summary)?,
            write_json(dir, "trials.json", &self.trials)?,
            write_text(dir, "timings.csv", &self.timings_csv())?,
            write_json(dir, "timing_summary.json", &self.timing)?,
        ];
        write_manifest(dir, cfg, outputs)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AckleyReport {
    pub expansion_terms: usize,
    pub expansion_h: f64,
    pub expansion_sup_error: f64,
    pub grid_points: usize,
    pub grid_points_before_dedup: usize,
    pub radial_points: usize,
    pub cosine_points: usize,
    pub crossover_radius: f64,
    pub innermost_radius: f64,
    pub initial_rank: usize,
    pub reduced_rank: usize,
    pub reduction_error: f64,
    pub squaring_iterations: usize,
    pub tensor_point: Vec<f64>,
    pub tensor_value: f64,
    pub tensor_distance: f64,
    pub refined_point: Vec<f64>,
    pub refined_value: f64,
    pub refined_distance: f64,
    pub compass_evaluations: usize,
    /// `|u(x*) - max| / max` at the refined point.
    pub relative_value_error: f64,
    pub max_value: f64,
}

#[derive(Clone, Debug)]
pub struct AckleyOutcome {
    pub report: AckleyReport,
    pub trace: MaxEntryTrace,
    pub seconds: f64,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Expansion, grid, sampling, reduction, squaring search and compass
/// refinement for the Ackley function.
pub fn run_ackley(cfg: &ExperimentConfig) -> Result<AckleyOutcome> {
    expect(cfg, Experiment::Ackley)?;
    let start = Instant::now();
    let s = &cfg.ackley;
    let p = s.params;
    let x_max = s.grid.half_width * (p.d as f64).sqrt();
    let g = build_gaussian_expansion(p.b, p.d as f64, s.expansion_epsilon, s.delta, x_max.max(2.0 * s.delta))?;
    let center = s.center.clone().unwrap_or_else(|| vec![0.0; p.d]);
    let grid = ackley_grid(&p, &g, &s.grid, Some(&center))?;
    let f = ackley_separated(&p, &g, Some(&center))?;
    let objective = |x: &[f64]| {
        let y: Vec<f64> = x.iter().zip(&center).map(|(a, c)| a - c).collect();
        ackley(&p, &y)
    };
    let opt = OptimizeConfig { initial_reduction: cfg.reduction.clone(), search: cfg.search.clone(), compass: s.compass.clone() };
    let r = optimize_function(&f, &grid.grid, &opt, Some(&objective))?;
    let ts = r.tensor_stage();
    let max_value = p.max_value();
    let report = AckleyReport {
        expansion_terms: g.term_count(),
        expansion_h: g.h,
        expansion_sup_error: g.sup_error,
        grid_points: grid.points,
        grid_points_before_dedup: grid.points_before_dedup,
        radial_points: grid.radial_points,
        cosine_points: grid.cosine_points,
        crossover_radius: grid.crossover_radius,
        innermost_radius: grid.innermost_radius,
        initial_rank: r.initial_rank,
        reduced_rank: r.reduced_rank,
        reduction_error: r.initial_reduction.relative_error,
        squaring_iterations: r.search_iterations,
        tensor_distance: distance(&ts.point, &center),
        tensor_point: ts.point.clone(),
        tensor_value: ts.value,
        refined_distance: distance(&r.refined.point, &center),
        refined_point: r.refined.point.clone(),
        refined_value: r.refined.value,
        compass_evaluations: r.refined.evaluations,
        relative_value_error: (r.refined.value - max_value).abs() / max_value,
        max_value,
    };
    Ok(AckleyOutcome { report, trace: r.trace, seconds: start.elapsed().as_secs_f64() })
}

impl AckleyOutcome {
    pub fn write(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let outputs = vec![
            write_json(dir, "report.json", &self.report)?,
            write_text(dir, "trace.csv", &self.trace.to_csv())?,
            write_text(dir, "timings.csv", &timing_csv(&self.trace))?,
            write_text(dir, "total_seconds.txt", &format!("{:e}\n", self.seconds))?,
        ];
        write_manifest(dir, cfg, outputs)
    }
}

/// Reduces the CTD in `input`; writes `reduced.json` (the CTD) and
/// `reduce_meta.json` to `out`.
pub fn reduce_file(input: &Path, cfg: &ReductionConfig, out: &Path) -> Result<ReductionMeta> {
    let u = read_ctd(input)?;
    let r = reduce(&u, cfg)?;
    fs::create_dir_all(out)?;
    write_ctd(&out.join("reduced.json"), &r.ctd)?;
    #[derive(Serialize)]
    struct Doc<'a> {
        tool: &'static str,
        version: &'static str,
        input: String,
        config: &'a ReductionConfig,
        meta: &'a ReductionMeta,
    }
    let doc = Doc { tool: "ctdopt", version: VERSION, input: input.display().to_string(), config: cfg, meta: &r.meta };
    write_json(out, "reduce_meta.json", &doc)?;
    Ok(r.meta)
}

/// Runs the configured search on the CTD in `input`; writes the trace and
/// candidates to `max_entry.json`, the per-iteration data to `trace.csv`
/// and the final iterate to `final_iterate.json`.
pub fn max_entry_file(input: &Path, cfg: &MaxEntrySearchConfig, out: &Path) -> Result<MaxEntryTrace> {
    let u = read_ctd(input)?;
    let trace = search(&u, cfg)?;
    fs::create_dir_all(out)?;
    #[derive(Serialize)]
    struct Doc<'a> {
        tool: &'static str,
        version: &'static str,
        input: String,
        config: &'a MaxEntrySearchConfig,
        trace: &'a MaxEntryTrace,
    }
    let doc = Doc { tool: "ctdopt", version: VERSION, input: input.display().to_string(), config: cfg, trace: &trace };
    write_json(out, "max_entry.json", &doc)?;
    write_text(out, "trace.csv", &trace.to_csv())?;
    write_ctd(&out.join("final_iterate.json"), &trace.final_iterate)?;
    Ok(trace)
}
