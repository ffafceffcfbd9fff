//! Goodness-of-fit test of `H₀: q = g_θ` on an interval.
//!
//! The contrast compares the nonparametric estimate with the *smoothed*
//! family, which removes the smoothing bias from the comparison:
//!
//! ```text
//! M_n(θ) = ‖q̂_h − S_h g_θ‖²_I − n⁻² Σ_events ∫_I w² K_h² dx
//! S_h g(x) = ∫ w(x,h,z) K_h(X_s − x) 1{X_s ∈ I} g(X_s) ds
//! ```
//!
//! `θ̂ = argmin_Θ M_n`. Under `H₀`, `n √h M_n(θ̂) / √𝓥_n` is asymptotically
//! standard normal with `𝓥_n = A(K) ∫_I (g_θ̂(y) / ∫K_h(y − X_s)1{X_s∈I} ds)² dy`.

pub mod family;
pub mod optim;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{test_constant, LagRange};
use crate::localpoly::{Estimator, EstimatorConfig, SmoothingOperator};
use crate::path::{EventRecord, SampledPath};
use crate::special::{norm_cdf, norm_quantile};

pub use family::{Constant, Exponential, ParamBox, ParametricFamily, PolynomialFamily, PolynomialForm, PolynomialSpec};
pub use optim::{Minimum, NelderMeadOptions};

/// Fraction of masked or starved grid points tolerated before warning or failing.
pub const COVERAGE_LIMIT: f64 = 0.05;

/// Outcome of [`test`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub theta_hat: Vec<f64>,
    pub contrast_value: f64,
    pub statistic: f64,
    pub variance_estimate: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub level: f64,
}

impl TestReport {
    /// `reject ⟺ |M| ≥ ĉ ⟺ p ≤ γ`.
    pub fn is_consistent(&self) -> bool {
        let by_value = self.contrast_value.abs() >= self.critical_value;
        let by_p = self.p_value <= self.level;
        self.reject == by_value && self.reject == by_p
    }
}

/// Result of [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitOutcome {
    pub theta: Vec<f64>,
    pub contrast_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub starts: usize,
}

/// `S_h` pushed through cubic interpolation onto the evaluation grid, so a
/// family only needs evaluating at the grid nodes.
#[derive(Debug, Clone)]
struct NodeOperator {
    starts: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl NodeOperator {
    fn build(op: &SmoothingOperator, samples: &[f64], nodes: &[f64]) -> Option<Self> {
        let m = nodes.len();
        if m < 4 {
            return None;
        }
        let lo = nodes[0];
        let dx = (nodes[m - 1] - lo) / (m - 1) as f64;
        let stencil = |y: f64| {
            let j = (((y - lo) / dx).floor() as isize).clamp(1, m as isize - 3) as usize;
            let s = (y - nodes[j]) / dx;
            let w = [
                -s * (s - 1.0) * (s - 2.0) / 6.0,
                (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
                -(s + 1.0) * s * (s - 2.0) / 2.0,
                (s + 1.0) * s * (s - 1.0) / 6.0,
            ];
            (j - 1, w)
        };
        let mut starts = Vec::with_capacity(op.rows.len());
        let mut rows = Vec::with_capacity(op.rows.len());
        for (k, row) in op.rows.iter().enumerate() {
            if row.is_empty() {
                starts.push(0);
                rows.push(Vec::new());
                continue;
            }
            let s0 = op.starts[k];
            let first = stencil(samples[s0]).0;
            let last = stencil(samples[s0 + row.len() - 1]).0 + 3;
            let mut dense = vec![0.0; last - first + 1];
            for (i, &c) in row.iter().enumerate() {
                let (base, w) = stencil(samples[s0 + i]);
                for (t, wt) in w.iter().enumerate() {
                    dense[base + t - first] += c * wt;
                }
            }
            starts.push(first);
            rows.push(dense);
        }
        Some(Self { starts, rows })
    }
}

/// Precomputed pieces of `M_n(·)` at a fixed bandwidth.
#[derive(Debug, Clone)]
pub struct ContrastProblem {
    h: f64,
    n: f64,
    grid: Vec<f64>,
    /// Trapezoid weights, zero at masked points.
    weights: Vec<f64>,
    defined: Vec<bool>,
    qhat: Vec<f64>,
    correction: f64,
    samples: Vec<f64>,
    op: SmoothingOperator,
    nodes: Option<NodeOperator>,
    kernel_occupation: Vec<f64>,
    events: usize,
    occupation_time: f64,
    masked_fraction: f64,
}

impl ContrastProblem {
    pub fn new(est: &Estimator, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("test bandwidth must be positive"));
        }
        let lw = est.local_weights(h);
        let curve = est.estimate_from(&lw);
        let defined = curve.defined.clone();
        let masked = curve.masked_count();
        let masked_fraction = masked as f64 / defined.len() as f64;
        if masked == defined.len() {
            return Err(Error::EstimationImpossible(format!("no positive definite design matrix at h = {h}")));
        }
        if masked_fraction > COVERAGE_LIMIT {
            log::warn!(
                "{:.1}% of the grid is masked at h = {h}; the contrast ignores those points",
                100.0 * masked_fraction
            );
        }
        let weights = est
            .trapezoid()
            .iter()
            .zip(&defined)
            .map(|(&w, &d)| if d { w } else { 0.0 })
            .collect();
        let op = est.smoothing_operator_from(&lw);
        let samples = est.sample_values().to_vec();
        let nodes = NodeOperator::build(&op, &samples, est.grid());
        Ok(Self {
            h,
            n: est.config().n as f64,
            grid: est.grid().to_vec(),
            weights,
            defined,
            qhat: curve.values_or_zero(),
            correction: est.squared_weight_integral(&lw),
            samples,
            op,
            nodes,
            kernel_occupation: est.kernel_occupation(h),
            events: est.events_in_interval(),
            occupation_time: est.occupation_time(),
            masked_fraction,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }
    pub fn masked_fraction(&self) -> f64 {
        self.masked_fraction
    }
    /// `n⁻² Σ_events ∫_I w² K_h² dx`.
    pub fn correction(&self) -> f64 {
        self.correction
    }
    /// `q̂_h` with masked points set to zero.
    pub fn estimate(&self) -> &[f64] {
        &self.qhat
    }
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
    pub fn defined(&self) -> &[bool] {
        &self.defined
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `S_h g` on the grid, exact path sum.
    pub fn smoothed(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        let at: Vec<f64> = self.samples.iter().map(|&x| g(x)).collect();
        let mut out = vec![0.0; self.grid.len()];
        self.op.apply(&at, &mut out);
        out
    }

    fn smoothed_fast(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        let Some(nodes) = &self.nodes else {
            return self.smoothed(g);
        };
        let at: Vec<f64> = self.grid.iter().map(|&x| g(x)).collect();
        nodes
            .rows
            .iter()
            .zip(&nodes.starts)
            .map(|(row, &s)| row.iter().zip(&at[s..]).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn from_smoothed(&self, s: &[f64]) -> f64 {
        let norm: f64 = self
            .weights
            .iter()
            .zip(self.qhat.iter().zip(s))
            .map(|(w, (q, g))| w * (q - g).powi(2))
            .sum();
        norm - self.correction
    }

    /// `M_n(θ)`.
    pub fn value(&self, family: &dyn ParametricFamily, theta: &[f64]) -> f64 {
        self.from_smoothed(&self.smoothed(|x| family.eval(theta, x)))
    }

    /// `M_n(θ)` with the family interpolated between grid nodes; the
    /// optimizer's objective.
    pub fn value_interpolated(&self, family: &dyn ParametricFamily, theta: &[f64]) -> f64 {
        self.from_smoothed(&self.smoothed_fast(|x| family.eval(theta, x)))
    }

    /// Minimizes `M_n` over the family's box.
    pub fn fit(&self, family: &dyn ParametricFamily, opts: &NelderMeadOptions) -> Result<FitOutcome> {
        let bounds = family.bounds();
        let objective = |t: &[f64]| self.value_interpolated(family, t);
        let runs = optim::minimize(&objective, bounds, opts);
        if runs.iter().all(|r| !r.converged) {
            return Err(Error::NonConvergence { iterations: opts.max_iterations });
        }
        let best = &runs[optim::best_index(&runs)];
        if !best.converged {
            log::warn!("best {} start stopped at the iteration cap", family.name());
        }
        Ok(FitOutcome {
            contrast_value: self.value(family, &best.theta),
            theta: best.theta.clone(),
            converged: best.converged,
            iterations: runs.iter().map(|r| r.iterations).sum(),
            starts: runs.len(),
        })
    }

    /// `𝓥_n` for a fitted `θ̂`; `a_of_k` is `A(K)`.
    pub fn variance(&self, family: &dyn ParametricFamily, theta: &[f64], a_of_k: f64) -> Result<f64> {
        let peak = self.kernel_occupation.iter().cloned().fold(0.0, f64::max);
        let floor = peak * 1e-12;
        let starved = self.kernel_occupation.iter().filter(|&&d| !(d > floor)).count();
        if peak <= 0.0 || starved as f64 > COVERAGE_LIMIT * self.grid.len() as f64 {
            return Err(Error::DataStarvation(format!(
                "kernel occupation vanishes on {starved} of {} grid points",
                self.grid.len()
            )));
        }
        let trap = crate::localpoly::trapezoid_weights(&self.grid);
        let v: f64 = self
            .grid
            .iter()
            .zip(&self.kernel_occupation)
            .zip(&trap)
            .filter(|((_, &d), _)| d > floor)
            .map(|((&y, &d), &w)| w * (family.eval(theta, y) / d).powi(2))
            .sum();
        let v = a_of_k * v;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::DataStarvation(format!("test variance is not positive ({v})")));
        }
        Ok(v)
    }

    /// Fits the family and tests `H₀` at level `gamma`.
    pub fn test(
        &self,
        family: &dyn ParametricFamily,
        gamma: f64,
        a_of_k: f64,
        opts: &NelderMeadOptions,
    ) -> Result<TestReport> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::invalid("test level must lie in (0, 1]"));
        }
        let fit = self.fit(family, opts)?;
        self.report(family, &fit.theta, gamma, a_of_k)
    }

    /// Test report at a given `θ̂`.
    pub fn report(&self, family: &dyn ParametricFamily, theta: &[f64], gamma: f64, a_of_k: f64) -> Result<TestReport> {
        let m = self.value(family, theta);
        let v = self.variance(family, theta, a_of_k)?;
        let scale = self.n * self.h.sqrt() / v.sqrt();
        let statistic = m * scale;
        let critical_value = norm_quantile(1.0 - gamma / 2.0) / scale;
        let reject = m.abs() >= critical_value;
        let mut p_value = 2.0 * (1.0 - norm_cdf(statistic.abs()));
        // Keep the decision and the p-value in agreement at the rounding boundary.
        if reject && p_value > gamma {
            p_value = gamma;
        } else if !reject && p_value <= gamma {
            p_value = gamma.next_up();
        }
        Ok(TestReport {
            theta_hat: theta.to_vec(),
            contrast_value: m,
            statistic,
            variance_estimate: v,
            critical_value,
            p_value: p_value.min(1.0),
            reject,
            level: gamma,
        })
    }

    /// `N_I / (n ∫ 1{X_s ∈ I} ds)`, the pilot level for constant boxes.
    pub fn pilot_constant(&self) -> Result<f64> {
        if self.events == 0 || !(self.occupation_time > 0.0) {
            return Err(Error::DataStarvation("no events inside the interval".into()));
        }
        Ok(self.events as f64 / (self.n * self.occupation_time))
    }

    /// Weighted least-squares line through `ln q̂` where `q̂ > 0`.
    pub fn pilot_exponential(&self) -> Result<(f64, f64)> {
        let c = self.pilot_constant()?;
        let pts: Vec<(f64, f64, f64)> = self
            .grid
            .iter()
            .zip(&self.qhat)
            .zip(&self.weights)
            .filter(|((_, &q), &w)| q > 0.0 && w > 0.0)
            .map(|((&x, &q), &w)| (x, q.ln(), w))
            .collect();
        let sw: f64 = pts.iter().map(|p| p.2).sum();
        if pts.len() < 2 || sw <= 0.0 {
            return Ok((c, 0.0));
        }
        let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
        let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
        let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
        if sxx <= 0.0 {
            return Ok((c, 0.0));
        }
        let slope = sxy / sxx;
        Ok(((my - slope * mx).exp(), slope))
    }
}

/// Built-in families with data-derived boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Exponential,
    Constant,
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" | "exponential" => Ok(FamilyKind::Exponential),
            "const" | "constant" => Ok(FamilyKind::Constant),
            other => Err(Error::invalid(format!("unknown family '{other}' (expected exp|const)"))),
        }
    }
}

/// Built-in family with the default box derived from the data.
pub fn default_family(kind: FamilyKind, problem: &ContrastProblem, cfg: &EstimatorConfig) -> Result<Box<dyn ParametricFamily>> {
    Ok(match kind {
        FamilyKind::Constant => Box::new(Constant::around(problem.pilot_constant()?)?),
        FamilyKind::Exponential => {
            let (a0, a1) = problem.pilot_exponential()?;
            Box::new(Exponential::around(a0, a1, &cfg.interval)?)
        }
    })
}

/// `M_n(θ)`.
pub fn contrast(
    path: &SampledPath,
    events: &EventRecord,
    cfg: &EstimatorConfig,
    h: f64,
    family: &dyn ParametricFamily,
    theta: &[f64],
) -> Result<f64> {
    let est = Estimator::new(path, events, cfg)?;
    Ok(ContrastProblem::new(&est, h)?.value(family, theta))
}

/// `θ̂ = argmin_Θ M_n(θ)`.
pub fn fit(
    path: &SampledPath,
    events: &EventRecord,
    cfg: &EstimatorConfig,
    h: f64,
    family: &dyn ParametricFamily,
) -> Result<FitOutcome> {
    let est = Estimator::new(path, events, cfg)?;
    ContrastProblem::new(&est, h)?.fit(family, &NelderMeadOptions::default())
}

/// Full test at level `gamma` with `A(K)` over the kernel-support lag range.
pub fn test(
    path: &SampledPath,
    events: &EventRecord,
    cfg: &EstimatorConfig,
    h: f64,
    family: &dyn ParametricFamily,
    gamma: f64,
) -> Result<TestReport> {
    let est = Estimator::new(path, events, cfg)?;
    let a = test_constant(&cfg.kernel, cfg.degree, LagRange::KernelSupport)?.a_of_k;
    ContrastProblem::new(&est, h)?.test(family, gamma, a, &NelderMeadOptions::default())
}
