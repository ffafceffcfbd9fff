//! Observed data: the sampled covariate path, the event record and the
//! estimation interval, together with occupation integrals and local time.
//!
//! All path integrals are left-Riemann sums on the sample grid: sample `i`
//! carries the weight `t_{i+1} − t_i`, and the last sample carries `T − t_last`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compact estimation interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("interval requires lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// `n` equally spaced points from `lo` to `hi` inclusive.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let step = self.length() / (n - 1) as f64;
        (0..n)
            .map(|i| if i == n - 1 { self.hi } else { self.lo + step * i as f64 })
            .collect()
    }
}

impl std::str::FromStr for Interval {
    type Err = Error;

    /// Parses `lo:hi`.
    fn from_str(s: &str) -> Result<Self> {
        let (lo, hi) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("interval '{s}' must have the form lo:hi")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad interval bound '{v}'")))
        };
        Interval::new(parse(lo)?, parse(hi)?)
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

/// Discretely sampled covariate trajectory on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    times: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
}

impl SampledPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::invalid("path times and values differ in length"));
        }
        if times.len() < 2 {
            return Err(Error::invalid("a path needs at least two samples"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("path horizon must be positive"));
        }
        if times[0] < 0.0 || *times.last().unwrap() > horizon {
            return Err(Error::invalid("path sample times must lie in [0, T]"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("path sample times must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("path values must be finite"));
        }
        Ok(Self { times, values, horizon })
    }

    /// Path whose horizon is its last sample time.
    pub fn from_samples(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let horizon = times.last().copied().unwrap_or(0.0);
        Self::new(times, values, horizon)
    }

    /// Samples `f` on a uniform grid `0, step, …, T`.
    pub fn from_fn(horizon: f64, step: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::invalid("step must be positive"));
        }
        let n = (horizon / step).round() as usize;
        let times: Vec<f64> = (0..=n).map(|i| (i as f64 * step).min(horizon)).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values, horizon)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Left-Riemann weight of sample `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        let next = self.times.get(i + 1).copied().unwrap_or(self.horizon);
        next - self.times[i]
    }

    /// `(value, weight)` pairs of the left-Riemann occupation measure.
    pub fn occupation(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.len()).map(move |i| (self.values[i], self.weight(i)))
    }

    /// Covariate value at time `t` by linear interpolation, held constant
    /// outside the sampled range.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let j = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let (x0, x1) = (self.values[j - 1], self.values[j]);
        x0 + (x1 - x0) * (t - t0) / (t1 - t0)
    }

    /// Rescales time: every time (and the horizon) is divided by `unit`.
    pub fn rescale_time(&self, unit: f64) -> Result<Self> {
        if !(unit > 0.0 && unit.is_finite()) {
            return Err(Error::invalid("time unit must be positive"));
        }
        Self::new(
            self.times.iter().map(|t| t / unit).collect(),
            self.values.clone(),
            self.horizon / unit,
        )
    }

    /// Range `(min, max)` of the sampled values.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Uniform sampling step, if the grid is uniform to relative `1e-9`.
    pub fn uniform_step(&self) -> Option<f64> {
        if self.len() < 2 {
            return None;
        }
        let step = (self.times[self.len() - 1] - self.times[0]) / (self.len() - 1) as f64;
        let ok = self
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.abs().max(1.0));
        ok.then_some(step)
    }
}

/// Ordered event times of the counting process on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventRecord {
    event_times: Vec<f64>,
}

impl EventRecord {
    pub fn new(event_times: Vec<f64>, horizon: f64) -> Result<Self> {
        if event_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("event times must be nondecreasing"));
        }
        if event_times.iter().any(|&t| !(t >= 0.0 && t <= horizon)) {
            return Err(Error::invalid("event times must lie in [0, T]"));
        }
        Ok(Self { event_times })
    }

    /// Builds a record without a horizon check, sorting the input.
    pub fn from_unsorted(mut event_times: Vec<f64>) -> Result<Self> {
        if event_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::invalid("event times must be finite and nonnegative"));
        }
        event_times.sort_by(|a, b| a.total_cmp(b));
        Ok(Self { event_times })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn times(&self) -> &[f64] {
        &self.event_times
    }
    pub fn len(&self) -> usize {
        self.event_times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.event_times.is_empty()
    }

    /// Union of two records.
    pub fn merge(&self, other: &EventRecord) -> EventRecord {
        let mut all = self.event_times.clone();
        all.extend_from_slice(&other.event_times);
        all.sort_by(|a, b| a.total_cmp(b));
        EventRecord { event_times: all }
    }

    pub fn rescale_time(&self, unit: f64) -> EventRecord {
        EventRecord { event_times: self.event_times.iter().map(|t| t / unit).collect() }
    }

    /// Covariate values at the events that fall in `interval`.
    pub fn covariate_values(&self, path: &SampledPath, interval: &Interval) -> Vec<f64> {
        self.event_times
            .iter()
            .map(|&t| path.value_at(t))
            .filter(|&x| interval.contains(x))
            .collect()
    }
}

/// `∫₀ᵀ f(X_s) 1{X_s ∈ I} ds` as a left-Riemann sum.
pub fn occupation_integral(path: &SampledPath, f: impl Fn(f64) -> f64, interval: &Interval) -> f64 {
    path.occupation()
        .filter(|(x, _)| interval.contains(*x))
        .map(|(x, w)| f(x) * w)
        .sum()
}

/// Estimated local time on a grid of `I`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalTimeEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub epsilon: f64,
}

impl LocalTimeEstimate {
    /// Trapezoid integral of the estimate over its grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
            .sum()
    }
}

/// Local time on `grid_size` points of `I`:
/// `l̂(x) = |W_x|⁻¹ ∫₀ᵀ 1{X_s ∈ W_x} ds` with `W_x = [x − ε, x + ε] ∩ I`.
///
/// The occupation time is that of the piecewise-linear interpolant of the
/// samples (the last sample is held until `T`), and the window is clipped to
/// `I` so the estimate does not halve at the interval ends.
pub fn local_time(path: &SampledPath, interval: &Interval, grid_size: usize, epsilon: f64) -> Result<LocalTimeEstimate> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("local time window must be positive"));
    }
    if grid_size < 2 {
        return Err(Error::invalid("local time grid needs at least two points"));
    }
    let grid = interval.grid(grid_size);
    let spacing = interval.length() / (grid_size - 1) as f64;
    let mut occ = vec![0.0; grid_size];
    let index_range = |lo: f64, hi: f64| {
        let first = (((lo - epsilon - interval.lo) / spacing).floor().max(0.0)) as usize;
        let last = (((hi + epsilon - interval.lo) / spacing).ceil().max(0.0) as usize).min(grid_size - 1);
        first..=last
    };
    let times = path.times();
    let values = path.values();
    let mut add_segment = |x0: f64, x1: f64, dt: f64| {
        if dt <= 0.0 {
            return;
        }
        let (lo, hi) = if x0 <= x1 { (x0, x1) } else { (x1, x0) };
        if hi < interval.lo - epsilon || lo > interval.hi + epsilon {
            return;
        }
        for k in index_range(lo, hi) {
            let a = (grid[k] - epsilon).max(interval.lo);
            let b = (grid[k] + epsilon).min(interval.hi);
            let frac = if hi > lo {
                ((hi.min(b) - lo.max(a)).max(0.0)) / (hi - lo)
            } else if lo >= a && lo <= b {
                1.0
            } else {
                0.0
            };
            occ[k] += frac * dt;
        }
    };
    for i in 0..times.len() - 1 {
        add_segment(values[i], values[i + 1], times[i + 1] - times[i]);
    }
    let last = values[values.len() - 1];
    add_segment(last, last, path.horizon() - times[times.len() - 1]);
    let values = grid
        .iter()
        .zip(&occ)
        .map(|(&x, &o)| {
            let width = (x + epsilon).min(interval.hi) - (x - epsilon).max(interval.lo);
            (o / width).max(0.0)
        })
        .collect();
    Ok(LocalTimeEstimate { grid, values, epsilon })
}

/// Outcome of the `D(I, ν)` check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observability {
    pub holds: bool,
    /// `min_x l̂(x) · |I| / T`.
    pub achieved_nu: f64,
}

/// Tests `inf_{x∈I} l̂(x) ≥ ν T/|I|`. With `ν = 0` the check requires a
/// strictly positive local time everywhere.
pub fn check_observability(lt: &LocalTimeEstimate, interval: &Interval, horizon: f64, nu: f64) -> Observability {
    let min = lt.values.iter().copied().fold(f64::INFINITY, f64::min);
    let achieved_nu = min * interval.length() / horizon;
    // relative slack absorbs rounding in the occupation sums
    let holds = if nu <= 0.0 { min > 0.0 } else { achieved_nu >= nu * (1.0 - 1e-9) };
    Observability { holds, achieved_nu }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_path() -> SampledPath {
        SampledPath::from_fn(1.0, 1e-3, |t| t).unwrap()
    }

    #[test]
    fn path_validation() {
        assert!(SampledPath::new(vec![0.0], vec![1.0], 1.0).is_err());
        assert!(SampledPath::new(vec![0.0, 0.0], vec![1.0, 2.0], 1.0).is_err());
        assert!(SampledPath::new(vec![0.0, 2.0], vec![1.0, 2.0], 1.0).is_err());
        assert!(SampledPath::new(vec![0.0, 1.0], vec![1.0], 1.0).is_err());
        assert!(SampledPath::new(vec![0.0, 1.0], vec![1.0, f64::NAN], 1.0).is_err());
        assert!(EventRecord::new(vec![0.5, 0.2], 1.0).is_err());
        assert!(EventRecord::new(vec![0.5, 1.2], 1.0).is_err());
        assert!(Interval::new(1.0, 1.0).is_err());
        assert_eq!("-1:29".parse::<Interval>().unwrap(), Interval { lo: -1.0, hi: 29.0 });
        assert!("3".parse::<Interval>().is_err());
    }

    #[test]
    fn occupation_integrals_on_identity_path() {
        let p = identity_path();
        let i = Interval::new(0.0, 1.0).unwrap();
        assert!((occupation_integral(&p, |_| 1.0, &i) - 1.0).abs() <= 1e-3);
        assert!((occupation_integral(&p, |x| x, &i) - 0.5).abs() <= 1e-3);
    }

    #[test]
    fn interpolation() {
        let p = SampledPath::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, -2.0], 4.0).unwrap();
        assert_eq!(p.value_at(0.5), 1.0);
        assert_eq!(p.value_at(2.0), 0.0);
        assert_eq!(p.value_at(3.5), -2.0);
        assert_eq!(p.value_at(1.0), 2.0);
        assert_eq!(p.weight(2), 1.0);
    }

    #[test]
    fn local_time_of_unit_speed_path() {
        let p = identity_path();
        let i = Interval::new(0.0, 1.0).unwrap();
        let lt = local_time(&p, &i, 101, 0.01).unwrap();
        assert!((lt.values[50] - 1.0).abs() <= 1e-3);
        let far = Interval::new(1.4, 1.6).unwrap();
        let lt = local_time(&p, &far, 11, 0.05).unwrap();
        assert!(lt.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn observability_of_identity_path() {
        let p = identity_path();
        let i = Interval::new(0.0, 1.0).unwrap();
        let lt = local_time(&p, &i, 201, 0.02).unwrap();
        let obs = check_observability(&lt, &i, 1.0, 1.0);
        assert!(obs.holds, "{obs:?}");
        assert!((obs.achieved_nu - 1.0).abs() < 1e-9);
        assert!(check_observability(&lt, &i, 1.0, 0.0).holds);
        assert!(obs.achieved_nu <= 1.0 + 1e-9);
    }

    #[test]
    fn observability_fails_on_unvisited_half() {
        let p = SampledPath::from_fn(1.0, 1e-3, |t| 0.5 * t).unwrap();
        let i = Interval::new(0.0, 1.0).unwrap();
        let lt = local_time(&p, &i, 101, 0.01).unwrap();
        for nu in [0.0, 0.01, 0.5] {
            assert!(!check_observability(&lt, &i, 1.0, nu).holds);
        }
    }

    #[test]
    fn event_record_helpers() {
        let a = EventRecord::new(vec![0.1, 0.5], 1.0).unwrap();
        let b = EventRecord::new(vec![0.3], 1.0).unwrap();
        assert_eq!(a.merge(&b).times(), &[0.1, 0.3, 0.5]);
        let p = identity_path();
        let i = Interval::new(0.2, 1.0).unwrap();
        assert_eq!(a.covariate_values(&p, &i).len(), 1);
    }
}
