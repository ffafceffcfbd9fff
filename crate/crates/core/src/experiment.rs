//! Monte-Carlo harness for the simulated temperature/spike scenario.
//!
//! Each replication simulates one temperature path and one Cox event record,
//! then, on every interval, checks observability, selects the bandwidth,
//! records the relative error `∫(q − q̂_h)² / ∫q²` for every candidate `h`,
//! and runs the exponential and constant goodness-of-fit tests.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gof::{default_family, ContrastProblem, FamilyKind, NelderMeadOptions};
use crate::kernels::{test_constant, Kernel, LagRange};
use crate::localpoly::{BandwidthGrid, Estimator, EstimatorConfig};
use crate::path::{EventRecord, Interval, SampledPath};
use crate::simulate::{simulate_cox, simulate_temperature, SeasonalOUParams, SpikeModelParams, HOURS_PER_YEAR};

/// Intensity `q` of the simulated Cox process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntensityModel {
    /// `a₀ e^{a₁ x}`.
    Exponential { a0: f64, a1: f64 },
    Constant { c: f64 },
}

impl IntensityModel {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            IntensityModel::Exponential { a0, a1 } => a0 * (a1 * x).exp(),
            IntensityModel::Constant { c } => c,
        }
    }
}

/// Intensity section: `λ_t = n q(θ_t)` events per `time_unit_hours`.
///
/// Without an explicit unit the whole simulated window is one time unit, so
/// the expected event count does not grow with the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityConfig {
    #[serde(flatten)]
    pub model: IntensityModel,
    #[serde(default = "one")]
    pub n: u64,
    #[serde(default)]
    pub time_unit_hours: Option<f64>,
}

fn one() -> u64 {
    1
}

impl Default for IntensityConfig {
    fn default() -> Self {
        Self {
            model: IntensityModel::Exponential { a0: 1033.8, a1: -0.2 },
            n: 1,
            time_unit_hours: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub t_hours: f64,
    pub step: f64,
    pub seed: u64,
    pub replications: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { t_hours: HOURS_PER_YEAR, step: 1.0, seed: 1, replications: 50 }
    }
}

/// Candidate bandwidths `{h_min + step·i ≤ h_max}` with
/// `h_min = |I| ‖K‖₁ ‖K‖∞ / hmin_count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub hmin_count: f64,
    pub step: f64,
    pub h_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { hmin_count: 200.0, step: 0.1, h_max: 11.0 }
    }
}

impl GridSpec {
    pub fn build(&self, cfg: &EstimatorConfig) -> Result<BandwidthGrid> {
        if !(self.step > 0.0 && self.hmin_count > 0.0 && self.h_max > 0.0) {
            return Err(Error::invalid("grid step, count and maximum must be positive"));
        }
        let h_min = cfg.min_bandwidth(self.hmin_count);
        let values: Vec<f64> = (0..)
            .map(|i| h_min + self.step * i as f64)
            .take_while(|&h| h <= self.h_max * (1.0 + 1e-12))
            .collect();
        BandwidthGrid::new(values, cfg, self.hmin_count)
    }
}

/// Estimation and testing settings of a Monte-Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub intervals: Vec<Interval>,
    pub degree: usize,
    pub alpha: f64,
    pub grid: GridSpec,
    pub gamma: f64,
    pub eval_grid_size: usize,
    /// Observability threshold `ν`; with `ν ≤ 0` the local time only has to
    /// be positive on all of `I`.
    pub min_nu: f64,
    pub run_tests: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            intervals: vec![
                Interval { lo: -1.0, hi: 29.0 },
                Interval { lo: -3.0, hi: 31.0 },
                Interval { lo: -5.0, hi: 33.0 },
            ],
            degree: 1,
            alpha: 1.0,
            grid: GridSpec::default(),
            gamma: 0.05,
            eval_grid_size: 512,
            min_nu: 0.0,
            run_tests: true,
        }
    }
}

/// Scenario document with sections `temperature`, `intensity`, `spike`,
/// `run` and optionally `experiment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub temperature: SeasonalOUParams,
    pub intensity: IntensityConfig,
    pub spike: Option<SpikeModelParams>,
    pub run: RunConfig,
    pub experiment: ExperimentConfig,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.temperature.validate()?;
        if let Some(s) = &self.spike {
            s.validate()?;
        }
        if let Some(u) = self.intensity.time_unit_hours {
            if !(u > 0.0 && u.is_finite()) {
                return Err(Error::invalid("intensity time unit must be positive"));
            }
        }
        if self.intensity.n == 0 {
            return Err(Error::invalid("intensity scale n must be at least 1"));
        }
        if let IntensityModel::Constant { c } = self.intensity.model {
            if !(c >= 0.0) {
                return Err(Error::invalid("constant intensity must be nonnegative"));
            }
        }
        if !(self.run.step > 0.0 && self.run.t_hours >= self.run.step) {
            return Err(Error::invalid("run needs step > 0 and t_hours >= step"));
        }
        let e = &self.experiment;
        if !(e.alpha > 0.0) {
            return Err(Error::invalid("alpha must be positive"));
        }
        if !(e.gamma > 0.0 && e.gamma < 1.0) {
            return Err(Error::invalid("gamma must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Hours per intensity time unit.
    pub fn time_unit(&self) -> f64 {
        self.intensity.time_unit_hours.unwrap_or(self.run.t_hours)
    }

    /// Estimator settings for one interval.
    pub fn estimator_config(&self, interval: Interval) -> EstimatorConfig {
        let e = &self.experiment;
        let mut cfg = EstimatorConfig::new(interval, e.degree)
            .with_n(self.intensity.n)
            .with_alpha(e.alpha)
            .with_grid_size(e.eval_grid_size);
        cfg.min_nu = e.min_nu;
        cfg
    }
}

/// Seed of replication `index`: `master XOR index`.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    master ^ index
}

/// Independent sub-stream seed (splitmix64 finalizer).
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulated temperature (time in `time_unit_hours`) and Cox events.
pub fn simulate_replication(scenario: &ScenarioConfig, seed: u64) -> Result<(SampledPath, EventRecord)> {
    let run = &scenario.run;
    let hours = simulate_temperature(&scenario.temperature, run.t_hours, run.step, stream_seed(seed, 0))?;
    let path = hours.rescale_time(scenario.time_unit())?;
    let model = scenario.intensity.model;
    let events = simulate_cox(&path, |x| model.eval(x), scenario.intensity.n, stream_seed(seed, 1))?;
    Ok((path, events))
}

/// Outcome of one goodness-of-fit test inside a replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRecord {
    pub family: FamilyKind,
    pub theta_hat: Vec<f64>,
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
}

/// Per-replication, per-interval record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationDetail {
    pub replication: usize,
    pub seed: u64,
    pub interval: Interval,
    pub events_in_interval: usize,
    pub achieved_nu: f64,
    pub converged: bool,
    pub h_hat: f64,
    pub error: f64,
    /// Relative error of `q̂_h` for every candidate, in grid order.
    #[serde(skip)]
    pub errors_by_h: Vec<f64>,
    pub tests: Vec<TestRecord>,
    /// Why the replication did not converge, if it did not.
    pub failure: Option<String>,
}

/// Table-style aggregate for one interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub interval: Interval,
    pub replications: usize,
    pub converged: usize,
    pub e_hat: f64,
    /// Standard error of `e_hat`.
    pub e_hat_se: f64,
    pub e_oracle: f64,
    pub h_oracle: f64,
    pub pct_converged: f64,
    /// Percentage of converged replications where the family was not rejected.
    pub pct_not_rejected: BTreeMap<String, f64>,
    /// 95% normal interval for the mean of each exponential parameter.
    pub theta_hat_ci: Vec<Option<(f64, f64)>>,
    /// Mean of each exponential parameter.
    pub theta_hat_mean: Vec<f64>,
}

/// `∫(q − q̂)² / ∫q²` on the estimator grid, missing points counted as zero.
pub fn relative_error(grid: &[f64], weights: &[f64], q: impl Fn(f64) -> f64, qhat: &[f64], defined: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..grid.len() {
        let t = q(grid[k]);
        let e = if defined[k] { qhat[k] } else { 0.0 };
        num += weights[k] * (t - e).powi(2);
        den += weights[k] * t * t;
    }
    num / den
}

struct IntervalContext {
    cfg: EstimatorConfig,
    grid: BandwidthGrid,
}

fn analyse(
    scenario: &ScenarioConfig,
    ctx: &IntervalContext,
    a_of_k: f64,
    path: &SampledPath,
    events: &EventRecord,
    replication: usize,
    seed: u64,
) -> Result<ReplicationDetail> {
    let cfg = &ctx.cfg;
    let model = scenario.intensity.model;
    let est = Estimator::new(path, events, cfg)?;
    let mut detail = ReplicationDetail {
        replication,
        seed,
        interval: cfg.interval,
        events_in_interval: est.events_in_interval(),
        achieved_nu: 0.0,
        converged: false,
        h_hat: f64::NAN,
        error: f64::NAN,
        errors_by_h: Vec::new(),
        tests: Vec::new(),
        failure: None,
    };
    let sel = match est.select_bandwidth(&ctx.grid) {
        Ok(s) => s,
        Err(Error::EstimationImpossible(msg)) => {
            detail.failure = Some(msg);
            return Ok(detail);
        }
        Err(e) => return Err(e),
    };
    detail.achieved_nu = sel.achieved_nu;
    detail.h_hat = sel.h_hat;
    let observable = if cfg.min_nu > 0.0 {
        sel.achieved_nu >= cfg.min_nu * (1.0 - 1e-9)
    } else {
        sel.achieved_nu > 0.0
    };
    let computed = sel.curve.defined.iter().all(|&d| d);
    detail.errors_by_h = sel
        .curves
        .iter()
        .map(|c| relative_error(est.grid(), est.trapezoid(), |x| model.eval(x), &c.values, &c.defined))
        .collect();
    detail.error = detail.errors_by_h[sel.index];
    if !observable {
        detail.failure = Some(format!("local time vanishes on part of {} (nu = {:.3})", cfg.interval, sel.achieved_nu));
        return Ok(detail);
    }
    if !computed {
        detail.failure = Some(format!("design matrix singular somewhere on {} at h = {}", cfg.interval, sel.h_hat));
        return Ok(detail);
    }
    detail.converged = true;

    if scenario.experiment.run_tests {
        let problem = ContrastProblem::new(&est, sel.h_hat)?;
        for kind in [FamilyKind::Exponential, FamilyKind::Constant] {
            let family = default_family(kind, &problem, cfg)?;
            match problem.test(family.as_ref(), scenario.experiment.gamma, a_of_k, &NelderMeadOptions::default()) {
                Ok(r) => detail.tests.push(TestRecord {
                    family: kind,
                    theta_hat: r.theta_hat,
                    statistic: r.statistic,
                    p_value: r.p_value,
                    reject: r.reject,
                }),
                Err(e) => log::warn!("replication {replication}: {kind:?} test failed: {e}"),
            }
        }
    }
    Ok(detail)
}

/// All replication details for every configured interval, ordered by
/// interval then replication.
pub fn run_details(scenario: &ScenarioConfig) -> Result<Vec<Vec<ReplicationDetail>>> {
    scenario.validate()?;
    let reps = scenario.run.replications;
    if reps < 1 {
        return Err(Error::invalid("at least one replication is required"));
    }
    let e = &scenario.experiment;
    if e.intervals.is_empty() {
        return Err(Error::invalid("no estimation interval configured"));
    }
    let contexts: Vec<IntervalContext> = e
        .intervals
        .iter()
        .map(|&i| {
            let cfg = scenario.estimator_config(i);
            let grid = e.grid.build(&cfg)?;
            Ok(IntervalContext { cfg, grid })
        })
        .collect::<Result<_>>()?;
    let a_of_k = test_constant(&Kernel::epanechnikov(), e.degree, LagRange::KernelSupport)?.a_of_k;

    let per_rep: Vec<Vec<ReplicationDetail>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = replication_seed(scenario.run.seed, r as u64);
            let (path, events) = simulate_replication(scenario, seed)?;
            contexts
                .iter()
                .map(|ctx| analyse(scenario, ctx, a_of_k, &path, &events, r, seed))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    Ok((0..contexts.len())
        .map(|i| per_rep.iter().map(|row| row[i].clone()).collect())
        .collect())
}

fn mean_ci(xs: &[f64]) -> (f64, Option<(f64, f64)>) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, None);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, None);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    let half = 1.959_963_984_540_054 * (var / n).sqrt();
    (m, Some((m - half, m + half)))
}

/// Aggregates the details of one interval.
pub fn summarize(details: &[ReplicationDetail], grid: &BandwidthGrid) -> McSummary {
    let interval = details.first().map(|d| d.interval).unwrap_or(Interval { lo: 0.0, hi: 1.0 });
    let ok: Vec<&ReplicationDetail> = details.iter().filter(|d| d.converged).collect();
    let errs: Vec<f64> = ok.iter().map(|d| d.error).collect();
    let (e_hat, _) = mean_ci(&errs);
    let e_hat_se = if errs.len() > 1 {
        let var = errs.iter().map(|x| (x - e_hat).powi(2)).sum::<f64>() / (errs.len() - 1) as f64;
        (var / errs.len() as f64).sqrt()
    } else {
        f64::NAN
    };
    let (mut e_oracle, mut h_oracle) = (f64::NAN, f64::NAN);
    if !ok.is_empty() {
        for (j, &h) in grid.values().iter().enumerate() {
            let m = ok.iter().map(|d| d.errors_by_h[j]).sum::<f64>() / ok.len() as f64;
            if !(m >= e_oracle) {
                e_oracle = m;
                h_oracle = h;
            }
        }
    }
    let mut pct_not_rejected = BTreeMap::new();
    let mut theta: Vec<Vec<f64>> = vec![Vec::new(); 2];
    for kind in [FamilyKind::Exponential, FamilyKind::Constant] {
        let recs: Vec<&TestRecord> =
            ok.iter().flat_map(|d| d.tests.iter().filter(|t| t.family == kind)).collect();
        if recs.is_empty() {
            continue;
        }
        let accepted = recs.iter().filter(|t| !t.reject).count();
        let key = match kind {
            FamilyKind::Exponential => "exponential",
            FamilyKind::Constant => "constant",
        };
        pct_not_rejected.insert(key.to_string(), 100.0 * accepted as f64 / recs.len() as f64);
        if kind == FamilyKind::Exponential {
            for t in recs {
                theta[0].push(t.theta_hat[0]);
                theta[1].push(t.theta_hat[1]);
            }
        }
    }
    let stats: Vec<(f64, Option<(f64, f64)>)> = theta.iter().map(|v| mean_ci(v)).collect();
    McSummary {
        interval,
        replications: details.len(),
        converged: ok.len(),
        e_hat,
        e_hat_se,
        e_oracle,
        h_oracle,
        pct_converged: if details.is_empty() { 0.0 } else { 100.0 * ok.len() as f64 / details.len() as f64 },
        pct_not_rejected,
        theta_hat_ci: stats.iter().map(|s| s.1).collect(),
        theta_hat_mean: stats.iter().map(|s| s.0).collect(),
    }
}

/// Summaries and details for every configured interval.
pub fn run_mc(scenario: &ScenarioConfig) -> Result<(Vec<McSummary>, Vec<Vec<ReplicationDetail>>)> {
    let details = run_details(scenario)?;
    let summaries = scenario
        .experiment
        .intervals
        .iter()
        .zip(&details)
        .map(|(&i, d)| {
            let grid = scenario.experiment.grid.build(&scenario.estimator_config(i))?;
            Ok(summarize(d, &grid))
        })
        .collect::<Result<_>>()?;
    Ok((summaries, details))
}

/// One point of a rate study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub n: u64,
    pub mean_error: f64,
    pub converged: usize,
}

/// Slope of `log(mean ê)` against `log n` plus the points it was fitted on.
///
/// The first interval of the scenario is used; the bandwidth floor scales
/// with `n` (`hmin_count · n`) and tests are skipped.
pub fn rate_check(scenario: &ScenarioConfig, n_values: &[u64]) -> Result<(f64, Vec<RatePoint>)> {
    if n_values.len() < 3 {
        return Err(Error::invalid("rate check needs at least three values of n"));
    }
    let lo = *n_values.iter().min().unwrap() as f64;
    let hi = *n_values.iter().max().unwrap() as f64;
    if hi < 8.0 * lo {
        return Err(Error::invalid("rate check values of n must span at least a factor 8"));
    }
    let mut points = Vec::new();
    for &n in n_values {
        let mut s = scenario.clone();
        s.intensity.n = n;
        s.experiment.run_tests = false;
        s.experiment.intervals.truncate(1);
        s.experiment.grid.hmin_count = scenario.experiment.grid.hmin_count * n as f64;
        let (summary, _) = run_mc(&s)?;
        points.push(RatePoint { n, mean_error: summary[0].e_hat, converged: summary[0].converged });
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_error.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok((sxy / sxx, points))
}
