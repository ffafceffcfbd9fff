//! Local polynomial intensity estimator and penalized bandwidth selection.
//!
//! At a point `x`, with `z = (X_s − x)/h` and the basis `U` of
//! [`MonomialBasis`](crate::kernels::MonomialBasis),
//!
//! ```text
//! B(x,h)   = ∫ U(z) U(z)ᵀ K_h(X_s − x) 1{X_s ∈ I} ds
//! w(x,h,z) = U(0)ᵀ B(x,h)⁻¹ U(z)              (0 unless B is positive definite)
//! q̂_h(x)   = n⁻¹ Σ_events w(x,h,z_τ) K_h(X_τ − x) 1{X_τ ∈ I}
//! ```
//!
//! The bandwidth minimizes `‖q̂_h − q̂_{h_min}‖²_I + pen_α(h)` where
//! `pen_α(h) = α V̂_h − V̂_h − V̂_{h_min} + 2 V̂_{h,h_min}`.
//!
//! Path integrals are left-Riemann sums; `‖·‖_I` and the inner `dx`
//! integrals use the trapezoid rule on the uniform evaluation grid.
//! Positions where `B` is not positive definite are reported as missing in
//! every [`CurveEstimate`], and enter the criterion with weight zero.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{Kernel, MonomialBasis, MAX_DEGREE};
use crate::linalg::SquareMatrix;
use crate::path::{check_observability, local_time, EventRecord, Interval, SampledPath};

/// Estimator settings.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub interval: Interval,
    /// Local polynomial degree `m`.
    pub degree: usize,
    pub kernel: Kernel,
    /// Intensity scale `n` in `λ_t = n q(X_t)`.
    pub n: u64,
    /// Variance weight `α` of the penalty.
    pub alpha: f64,
    pub eval_grid_size: usize,
    /// Cholesky pivots must exceed `pd_tolerance · trace(B)`.
    pub pd_tolerance: f64,
    /// Optional floor applied to the reported curve, `max(q̂, floor)`.
    pub clip_floor: Option<f64>,
    /// Achieved `ν` below which selection logs a warning.
    pub min_nu: f64,
}

impl EstimatorConfig {
    pub fn new(interval: Interval, degree: usize) -> Self {
        Self {
            interval,
            degree,
            kernel: Kernel::epanechnikov(),
            n: 1,
            alpha: 1.0,
            eval_grid_size: 512,
            pd_tolerance: 1e-10,
            clip_floor: None,
            min_nu: 0.0,
        }
    }

    pub fn with_n(mut self, n: u64) -> Self {
        self.n = n;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_grid_size(mut self, size: usize) -> Self {
        self.eval_grid_size = size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha must be positive"));
        }
        if self.n < 1 {
            return Err(Error::invalid("scale n must be at least 1"));
        }
        if self.degree > MAX_DEGREE {
            return Err(Error::invalid(format!("degree must not exceed {MAX_DEGREE}")));
        }
        if self.eval_grid_size < 2 {
            return Err(Error::invalid("evaluation grid needs at least two points"));
        }
        if !(self.pd_tolerance > 0.0) {
            return Err(Error::invalid("pd tolerance must be positive"));
        }
        Ok(())
    }

    /// `(2/3)|I|/Δ`.
    pub fn max_bandwidth(&self) -> f64 {
        2.0 / 3.0 * self.interval.length() / self.kernel.minorant_delta()
    }

    /// `‖K‖∞ ‖K‖₁ |I| / count`.
    pub fn min_bandwidth(&self, count: f64) -> f64 {
        self.kernel.norm_inf() * self.kernel.norm_l1() * self.interval.length() / count
    }
}

/// Finite, strictly increasing set of candidate bandwidths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthGrid {
    values: Vec<f64>,
}

impl BandwidthGrid {
    /// Builds a grid and checks `h_min ≥ ‖K‖∞‖K‖₁|I|/count` and
    /// `max ≤ (2/3)|I|/Δ`. `count` stands in for `n`: the nominal or observed
    /// number of events.
    pub fn new(values: Vec<f64>, cfg: &EstimatorConfig, count: f64) -> Result<Self> {
        let grid = Self::from_values(values)?;
        let floor = cfg.min_bandwidth(count);
        if grid.h_min() < floor * (1.0 - 1e-12) {
            return Err(Error::invalid(format!(
                "smallest bandwidth {} is below the lower bound {floor}",
                grid.h_min()
            )));
        }
        let ceiling = cfg.max_bandwidth();
        if grid.h_max() > ceiling * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "largest bandwidth {} exceeds the ceiling {ceiling}",
                grid.h_max()
            )));
        }
        Ok(grid)
    }

    /// Grid with only positivity and ordering checks.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyGrid("no candidate bandwidths".into()));
        }
        if values.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::invalid("bandwidths must be positive and finite"));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("bandwidths must be strictly increasing"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn h_min(&self) -> f64 {
        self.values[0]
    }
    pub fn h_max(&self) -> f64 {
        *self.values.last().unwrap()
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How [`default_grid`] lays out candidate bandwidths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GridStyle {
    /// `h_min + step·i` up to `h_max` (default: the ceiling `(2/3)|I|/Δ`).
    Arithmetic { step: f64, h_max: Option<f64> },
    /// `|I|/k` for integer `k`, within the admissible range.
    Divisor,
}

impl std::str::FromStr for GridStyle {
    type Err = Error;

    /// `arithmetic:<step>[:<h_max>]` or `divisor`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        match parts.next() {
            Some("divisor") if parts.next().is_none() => Ok(GridStyle::Divisor),
            Some("arithmetic") => {
                let step = match parts.next() {
                    Some(v) => v.parse().map_err(|_| Error::invalid(format!("bad grid step '{v}'")))?,
                    None => 0.1,
                };
                let h_max = parts
                    .next()
                    .map(|v| v.parse().map_err(|_| Error::invalid(format!("bad grid maximum '{v}'"))))
                    .transpose()?;
                if !(step > 0.0) {
                    return Err(Error::invalid("grid step must be positive"));
                }
                Ok(GridStyle::Arithmetic { step, h_max })
            }
            _ => Err(Error::invalid(format!("unknown grid style '{s}'"))),
        }
    }
}

/// Candidate bandwidths with `h_min = |I|‖K‖₁‖K‖∞/count`.
pub fn default_grid(cfg: &EstimatorConfig, count: f64, style: GridStyle) -> Result<BandwidthGrid> {
    if !(count > 0.0) {
        return Err(Error::invalid("event count for the bandwidth floor must be positive"));
    }
    let h_min = cfg.min_bandwidth(count);
    let ceiling = cfg.max_bandwidth();
    let values: Vec<f64> = match style {
        GridStyle::Arithmetic { step, h_max } => {
            let top = h_max.unwrap_or(ceiling).min(ceiling);
            (0..)
                .map(|i| h_min + step * i as f64)
                .take_while(|&h| h <= top * (1.0 + 1e-12))
                .collect()
        }
        GridStyle::Divisor => {
            let len = cfg.interval.length();
            let k_lo = (len / ceiling).ceil().max(1.0) as u64;
            let k_hi = (len / h_min).floor() as u64;
            let mut v: Vec<f64> = (k_lo..=k_hi).rev().map(|k| len / k as f64).collect();
            v.retain(|&h| h >= h_min * (1.0 - 1e-12) && h <= ceiling * (1.0 + 1e-12));
            v
        }
    };
    if values.is_empty() {
        return Err(Error::EmptyGrid(format!(
            "no bandwidth between h_min = {h_min} and the ceiling {ceiling}"
        )));
    }
    BandwidthGrid::new(values, cfg, count)
}

/// Design matrix `B(x, h)` and its positive-definiteness verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub matrix: SquareMatrix,
    pub positive_definite: bool,
}

/// Estimated curve on the evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveEstimate {
    pub grid: Vec<f64>,
    /// NaN where `defined` is false.
    pub values: Vec<f64>,
    pub defined: Vec<bool>,
}

impl CurveEstimate {
    pub fn defined_fraction(&self) -> f64 {
        self.defined.iter().filter(|&&d| d).count() as f64 / self.defined.len() as f64
    }

    pub fn masked_count(&self) -> usize {
        self.defined.iter().filter(|&&d| !d).count()
    }

    /// Values with missing points replaced by zero.
    pub fn values_or_zero(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.defined)
            .map(|(&v, &d)| if d { v } else { 0.0 })
            .collect()
    }

    fn clipped(mut self, floor: Option<f64>) -> Self {
        if let Some(f) = floor {
            for (v, d) in self.values.iter_mut().zip(&self.defined) {
                if *d {
                    *v = v.max(f);
                }
            }
        }
        self
    }
}

/// `V̂_h`, `V̂_{h,h_min}` and the number of grid points where a needed
/// design matrix was not positive definite while events were nearby.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceTerms {
    pub v_h: f64,
    pub v_cross: f64,
    pub masked_points: usize,
}

/// Per-bandwidth diagnostics of the selection criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CandidateScore {
    pub h: f64,
    pub criterion: f64,
    pub v_hat: f64,
    pub v_cross: f64,
    pub penalty: f64,
    pub defined_fraction: f64,
}

/// Outcome of [`select_bandwidth`].
#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    pub h_hat: f64,
    /// Index of `h_hat` in the grid.
    pub index: usize,
    pub candidates: Vec<CandidateScore>,
    /// `q̂_{ĥ}` (with the configured floor applied).
    pub curve: CurveEstimate,
    /// `q̂_h` for every candidate, unclipped, in grid order.
    #[serde(skip)]
    pub curves: Vec<CurveEstimate>,
    /// `min l̂ · |I|/T` with local-time window `h_min/2`.
    pub achieved_nu: f64,
}

/// `α V̂_h − V̂_h − V̂_{h_min} + 2 V̂_{h,h_min}`.
pub fn penalty(v_h: f64, v_hmin: f64, v_cross: f64, alpha: f64) -> f64 {
    alpha * v_h - v_h - v_hmin + 2.0 * v_cross
}

/// Trapezoid weights of a uniform grid.
pub(crate) fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let half = 0.5 * (grid[i + 1] - grid[i]);
        w[i] += half;
        w[i + 1] += half;
    }
    w
}

/// Local weight coefficients `c(x) = B(x,h)⁻¹ U(0)` on the evaluation grid,
/// so that `w(x,h,z) = Σ_j c_j(x) z^j/j!`.
#[derive(Debug, Clone)]
pub struct LocalWeights {
    pub h: f64,
    basis: MonomialBasis,
    coeffs: Vec<f64>,
    defined: Vec<bool>,
}

impl LocalWeights {
    #[inline]
    pub fn is_defined(&self, k: usize) -> bool {
        self.defined[k]
    }

    pub fn defined(&self) -> &[bool] {
        &self.defined
    }

    pub fn coefficients(&self, k: usize) -> &[f64] {
        let d = self.basis.dim();
        &self.coeffs[k * d..(k + 1) * d]
    }

    /// `w(x_k, h, z)`, zero where `B` is not positive definite.
    #[inline]
    pub fn weight(&self, k: usize, z: f64) -> f64 {
        if !self.defined[k] {
            return 0.0;
        }
        self.basis.dot(self.coefficients(k), z)
    }
}

/// Linear map `g ↦ ∫ w K_h 1{X_s ∈ I} g(X_s) ds` onto the evaluation grid.
///
/// Row `k` touches a contiguous run of the value-sorted occupation samples,
/// so each row is one dense dot product.
#[derive(Debug, Clone)]
pub struct SmoothingOperator {
    pub(crate) starts: Vec<usize>,
    pub(crate) rows: Vec<Vec<f64>>,
    defined: Vec<bool>,
}

impl SmoothingOperator {
    /// Applies the operator to `g` evaluated at [`Estimator::sample_values`].
    pub fn apply(&self, g_at_samples: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.rows[k];
            let g = &g_at_samples[self.starts[k]..self.starts[k] + row.len()];
            *o = dot(row, g);
        }
    }

    pub fn defined(&self) -> &[bool] {
        &self.defined
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, ra) = a.split_at(a.len() - a.len() % 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Prepared data for repeated estimation on one `(path, events, config)`.
#[derive(Debug, Clone)]
pub struct Estimator {
    cfg: EstimatorConfig,
    basis: MonomialBasis,
    path: SampledPath,
    /// Occupation samples inside `I`, sorted by value.
    occ_x: Vec<f64>,
    occ_w: Vec<f64>,
    /// Covariate values at the events inside `I`, sorted.
    ev_x: Vec<f64>,
    grid: Vec<f64>,
    trap: Vec<f64>,
}

impl Estimator {
    pub fn new(path: &SampledPath, events: &EventRecord, cfg: &EstimatorConfig) -> Result<Self> {
        cfg.validate()?;
        let interval = cfg.interval;
        let mut occ: Vec<(f64, f64)> = path
            .occupation()
            .filter(|(x, w)| interval.contains(*x) && *w > 0.0)
            .collect();
        occ.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (occ_x, occ_w) = occ.into_iter().unzip();
        let mut ev_x = events.covariate_values(path, &interval);
        ev_x.sort_by(|a, b| a.total_cmp(b));
        let grid = interval.grid(cfg.eval_grid_size);
        let trap = trapezoid_weights(&grid);
        Ok(Self {
            cfg: cfg.clone(),
            basis: MonomialBasis::new(cfg.degree),
            path: path.clone(),
            occ_x,
            occ_w,
            ev_x,
            grid,
            trap,
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
    pub fn trapezoid(&self) -> &[f64] {
        &self.trap
    }
    pub fn path(&self) -> &SampledPath {
        &self.path
    }
    /// Number of events whose covariate value lies in `I`.
    pub fn events_in_interval(&self) -> usize {
        self.ev_x.len()
    }
    /// Covariate values of the in-interval events, sorted.
    pub fn event_values(&self) -> &[f64] {
        &self.ev_x
    }
    /// Value-sorted occupation samples inside `I`; functions passed to
    /// [`SmoothingOperator::apply`] are evaluated here.
    pub fn sample_values(&self) -> &[f64] {
        &self.occ_x
    }
    /// `∫₀ᵀ 1{X_s ∈ I} ds`.
    pub fn occupation_time(&self) -> f64 {
        self.occ_w.iter().sum()
    }

    fn window(values: &[f64], x: f64, half_width: f64) -> std::ops::Range<usize> {
        let a = values.partition_point(|&v| v < x - half_width);
        let b = values.partition_point(|&v| v <= x + half_width);
        a..b
    }

    fn reach(&self, h: f64) -> f64 {
        self.cfg.kernel.support_radius() * h
    }

    /// Power sums `Σ w K_h z^p` for `p = 0..=2m`.
    fn power_sums(&self, x: f64, h: f64, out: &mut [f64; 2 * MAX_DEGREE + 1]) {
        let kernel = &self.cfg.kernel;
        let top = 2 * self.cfg.degree;
        out.iter_mut().for_each(|s| *s = 0.0);
        let range = Self::window(&self.occ_x, x, self.reach(h));
        let inv_h = 1.0 / h;
        if top == 2 {
            let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for i in range {
                let z = (self.occ_x[i] - x) * inv_h;
                let kw = kernel.eval(z) * inv_h * self.occ_w[i];
                s0 += kw;
                s1 += kw * z;
                s2 += kw * z * z;
            }
            out[0] = s0;
            out[1] = s1;
            out[2] = s2;
            return;
        }
        for i in range {
            let z = (self.occ_x[i] - x) * inv_h;
            let mut term = kernel.eval(z) * inv_h * self.occ_w[i];
            for s in out.iter_mut().take(top + 1) {
                *s += term;
                term *= z;
            }
        }
    }

    fn assemble(&self, sums: &[f64]) -> SquareMatrix {
        let d = self.basis.dim();
        let mut fact = [1.0f64; MAX_DEGREE + 1];
        for j in 1..d {
            fact[j] = fact[j - 1] * j as f64;
        }
        let mut b = SquareMatrix::zeros(d);
        for j in 0..d {
            for k in 0..d {
                b.set(j, k, sums[j + k] / (fact[j] * fact[k]));
            }
        }
        b
    }

    /// `B(x, h)` for an arbitrary `x`.
    pub fn design_matrix(&self, x: f64, h: f64) -> DesignMatrix {
        let mut sums = [0.0; 2 * MAX_DEGREE + 1];
        self.power_sums(x, h, &mut sums);
        let matrix = self.assemble(&sums);
        let positive_definite = matrix.cholesky(self.cfg.pd_tolerance).is_ok();
        DesignMatrix { matrix, positive_definite }
    }

    /// Weight coefficients at every grid point.
    pub fn local_weights(&self, h: f64) -> LocalWeights {
        let d = self.basis.dim();
        let mut coeffs = vec![0.0; self.grid.len() * d];
        let mut defined = vec![false; self.grid.len()];
        let mut sums = [0.0; 2 * MAX_DEGREE + 1];
        for (k, &x) in self.grid.iter().enumerate() {
            self.power_sums(x, h, &mut sums);
            let b = self.assemble(&sums);
            if let Ok(ch) = b.cholesky(self.cfg.pd_tolerance) {
                let c = &mut coeffs[k * d..(k + 1) * d];
                c[0] = 1.0;
                ch.solve_in_place(c);
                defined[k] = true;
            }
        }
        LocalWeights { h, basis: self.basis, coeffs, defined }
    }

    fn curve_from_weights(&self, lw: &LocalWeights) -> CurveEstimate {
        let kernel = &self.cfg.kernel;
        let scale = 1.0 / self.cfg.n as f64;
        let h = lw.h;
        let values = self
            .grid
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                if !lw.is_defined(k) {
                    return f64::NAN;
                }
                let s: f64 = self.ev_x[Self::window(&self.ev_x, x, self.reach(h))]
                    .iter()
                    .map(|&xe| {
                        let z = (xe - x) / h;
                        lw.weight(k, z) * kernel.eval(z) / h
                    })
                    .sum();
                s * scale
            })
            .collect();
        CurveEstimate { grid: self.grid.clone(), values, defined: lw.defined.clone() }
    }

    /// `q̂_h` on the evaluation grid.
    pub fn estimate(&self, h: f64) -> CurveEstimate {
        self.curve_from_weights(&self.local_weights(h)).clipped(self.cfg.clip_floor)
    }

    /// `q_h(x) = ∫ w K_h 1{X_s ∈ I} q(X_s) ds` for a known `q`.
    pub fn conditional_mean(&self, q: impl Fn(f64) -> f64, h: f64) -> CurveEstimate {
        let lw = self.local_weights(h);
        let kernel = &self.cfg.kernel;
        let values = self
            .grid
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                if !lw.is_defined(k) {
                    return f64::NAN;
                }
                Self::window(&self.occ_x, x, self.reach(h))
                    .map(|i| {
                        let z = (self.occ_x[i] - x) / h;
                        lw.weight(k, z) * kernel.eval(z) / h * q(self.occ_x[i]) * self.occ_w[i]
                    })
                    .sum()
            })
            .collect();
        CurveEstimate { grid: self.grid.clone(), values, defined: lw.defined.clone() }
    }

    /// `Σ_s w K_h 1{X_s ∈ I} (X_s − x)^k ds` at grid point `k_idx`, the
    /// quantity that reproduces polynomials.
    pub fn weighted_moment(&self, lw: &LocalWeights, k_idx: usize, power: u32) -> f64 {
        let x = self.grid[k_idx];
        let h = lw.h;
        Self::window(&self.occ_x, x, self.reach(h))
            .map(|i| {
                let z = (self.occ_x[i] - x) / h;
                lw.weight(k_idx, z) * self.cfg.kernel.eval(z) / h * (self.occ_x[i] - x).powi(power as i32) * self.occ_w[i]
            })
            .sum()
    }

    fn variance_from_weights(&self, lw: &LocalWeights, base: &LocalWeights) -> VarianceTerms {
        let kernel = &self.cfg.kernel;
        let (h, hm) = (lw.h, base.h);
        let reach = self.reach(h.min(hm));
        let mut sq = vec![0.0; self.grid.len()];
        let mut cross = vec![0.0; self.grid.len()];
        let mut masked_points = 0;
        for (k, &x) in self.grid.iter().enumerate() {
            let events = &self.ev_x[Self::window(&self.ev_x, x, self.reach(h))];
            if events.is_empty() {
                continue;
            }
            if !lw.is_defined(k) || !base.is_defined(k) {
                masked_points += 1;
            }
            sq[k] = events
                .iter()
                .map(|&xe| {
                    let z = (xe - x) / h;
                    let a = lw.weight(k, z) * kernel.eval(z) / h;
                    a * a
                })
                .sum();
            cross[k] = self.ev_x[Self::window(&self.ev_x, x, reach)]
                .iter()
                .map(|&xe| {
                    let z = (xe - x) / h;
                    let zm = (xe - x) / hm;
                    lw.weight(k, z) * kernel.eval(z) / h * base.weight(k, zm) * kernel.eval(zm) / hm
                })
                .sum();
        }
        let n2 = (self.cfg.n as f64).powi(2);
        VarianceTerms {
            v_h: dot(&self.trap, &sq) / n2,
            v_cross: dot(&self.trap, &cross) / n2,
            masked_points,
        }
    }

    /// `(V̂_h, V̂_{h,h_min})`.
    pub fn variance_terms(&self, h: f64, h_min: f64) -> VarianceTerms {
        let lw = self.local_weights(h);
        let base = if h == h_min { lw.clone() } else { self.local_weights(h_min) };
        self.variance_from_weights(&lw, &base)
    }

    /// Trapezoid `∫_I f²`.
    pub fn squared_norm(&self, f: &[f64]) -> f64 {
        self.trap.iter().zip(f).map(|(w, v)| w * v * v).sum()
    }

    /// Penalized bandwidth choice over `grid`, ties resolved to the smallest `h`.
    pub fn select_bandwidth(&self, grid: &BandwidthGrid) -> Result<SelectionResult> {
        let h_min = grid.h_min();
        let lt = local_time(&self.path, &self.cfg.interval, self.cfg.eval_grid_size, 0.5 * h_min)?;
        let obs = check_observability(&lt, &self.cfg.interval, self.path.horizon(), self.cfg.min_nu);
        if !obs.holds {
            log::warn!(
                "covariate barely visits {}: achieved nu = {:.4} (threshold {})",
                self.cfg.interval,
                obs.achieved_nu,
                self.cfg.min_nu
            );
        }

        let base = self.local_weights(h_min);
        let base_curve = self.curve_from_weights(&base);
        let base_vals = base_curve.values_or_zero();
        let v_min = self.variance_from_weights(&base, &base).v_h;

        let scored: Vec<(CandidateScore, CurveEstimate)> = grid
            .values()
            .par_iter()
            .map(|&h| {
                let (lw, curve) = if h == h_min {
                    (base.clone(), base_curve.clone())
                } else {
                    let lw = self.local_weights(h);
                    let c = self.curve_from_weights(&lw);
                    (lw, c)
                };
                let vt = self.variance_from_weights(&lw, &base);
                let diff: Vec<f64> = curve.values_or_zero().iter().zip(&base_vals).map(|(a, b)| a - b).collect();
                let pen = penalty(vt.v_h, v_min, vt.v_cross, self.cfg.alpha);
                let score = CandidateScore {
                    h,
                    criterion: self.squared_norm(&diff) + pen,
                    v_hat: vt.v_h,
                    v_cross: vt.v_cross,
                    penalty: pen,
                    defined_fraction: curve.defined_fraction(),
                };
                (score, curve)
            })
            .collect();

        if scored.iter().all(|(s, _)| s.defined_fraction == 0.0) {
            return Err(Error::EstimationImpossible(format!(
                "no bandwidth yields a positive definite design matrix on {}",
                self.cfg.interval
            )));
        }

        let mut best = None::<usize>;
        for (i, (s, _)) in scored.iter().enumerate() {
            if s.defined_fraction == 0.0 || !s.criterion.is_finite() {
                continue;
            }
            match best {
                Some(b) if scored[b].0.criterion <= s.criterion => {}
                _ => best = Some(i),
            }
        }
        let index = best.ok_or_else(|| Error::EstimationImpossible("criterion is not finite".into()))?;
        let (candidates, curves): (Vec<_>, Vec<_>) = scored.into_iter().unzip();
        Ok(SelectionResult {
            h_hat: candidates[index].h,
            index,
            curve: curves[index].clone().clipped(self.cfg.clip_floor),
            candidates,
            curves,
            achieved_nu: obs.achieved_nu,
        })
    }

    /// Smoothing operator at bandwidth `h` (see [`SmoothingOperator`]).
    pub fn smoothing_operator(&self, h: f64) -> SmoothingOperator {
        let lw = self.local_weights(h);
        self.smoothing_operator_from(&lw)
    }

    pub fn smoothing_operator_from(&self, lw: &LocalWeights) -> SmoothingOperator {
        let kernel = &self.cfg.kernel;
        let h = lw.h;
        let mut starts = Vec::with_capacity(self.grid.len());
        let mut rows = Vec::with_capacity(self.grid.len());
        for (k, &x) in self.grid.iter().enumerate() {
            let range = Self::window(&self.occ_x, x, self.reach(h));
            starts.push(range.start);
            if !lw.is_defined(k) {
                rows.push(Vec::new());
                continue;
            }
            rows.push(
                range
                    .map(|i| {
                        let z = (self.occ_x[i] - x) / h;
                        lw.weight(k, z) * kernel.eval(z) / h * self.occ_w[i]
                    })
                    .collect(),
            );
        }
        SmoothingOperator { starts, rows, defined: lw.defined.clone() }
    }

    /// `∫ K_h(y − X_s) 1{X_s ∈ I} ds` on the evaluation grid.
    pub fn kernel_occupation(&self, h: f64) -> Vec<f64> {
        let kernel = &self.cfg.kernel;
        self.grid
            .iter()
            .map(|&y| {
                Self::window(&self.occ_x, y, self.reach(h))
                    .map(|i| kernel.eval((y - self.occ_x[i]) / h) / h * self.occ_w[i])
                    .sum()
            })
            .collect()
    }

    /// `n⁻² Σ_events ∫_I w² K_h² dx`, the bias correction of the contrast
    /// (identical to `V̂_h`).
    pub fn squared_weight_integral(&self, lw: &LocalWeights) -> f64 {
        self.variance_from_weights(lw, lw).v_h
    }

    /// `q̂_h` from precomputed weights.
    pub fn estimate_from(&self, lw: &LocalWeights) -> CurveEstimate {
        self.curve_from_weights(lw)
    }
}

/// `B(x, h)` from a path.
pub fn design_matrix(path: &SampledPath, cfg: &EstimatorConfig, h: f64, x: f64) -> Result<DesignMatrix> {
    Ok(Estimator::new(path, &EventRecord::empty(), cfg)?.design_matrix(x, h))
}

pub fn estimate(path: &SampledPath, events: &EventRecord, cfg: &EstimatorConfig, h: f64) -> Result<CurveEstimate> {
    Ok(Estimator::new(path, events, cfg)?.estimate(h))
}

pub fn conditional_mean(
    path: &SampledPath,
    q: impl Fn(f64) -> f64,
    cfg: &EstimatorConfig,
    h: f64,
) -> Result<CurveEstimate> {
    Ok(Estimator::new(path, &EventRecord::empty(), cfg)?.conditional_mean(q, h))
}

pub fn variance_terms(
    path: &SampledPath,
    events: &EventRecord,
    cfg: &EstimatorConfig,
    h: f64,
    h_min: f64,
) -> Result<VarianceTerms> {
    Ok(Estimator::new(path, events, cfg)?.variance_terms(h, h_min))
}

pub fn select_bandwidth(
    path: &SampledPath,
    events: &EventRecord,
    cfg: &EstimatorConfig,
    grid: &BandwidthGrid,
) -> Result<SelectionResult> {
    Estimator::new(path, events, cfg)?.select_bandwidth(grid)
}
