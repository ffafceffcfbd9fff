//! Generative models: seasonal Ornstein–Uhlenbeck temperature, Cox events by
//! thinning, spike prices, and a multipower-variation jump detector.
//!
//! Every simulator takes an explicit seed and draws from a ChaCha stream, so
//! identical seeds give bit-identical output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{EventRecord, SampledPath};
use crate::special::normal_abs_moment;

/// Hours in a (non-leap) year.
pub const HOURS_PER_YEAR: f64 = 8760.0;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exact OU step `x e^{−ϑδ} + σ √((1 − e^{−2ϑδ})/(2ϑ)) ξ`; Brownian when `ϑ = 0`.
#[inline]
fn ou_step(x: f64, vartheta: f64, sigma: f64, dt: f64, xi: f64) -> f64 {
    if vartheta == 0.0 {
        return x + sigma * dt.sqrt() * xi;
    }
    let decay = (-vartheta * dt).exp();
    let sd = sigma * ((1.0 - decay * decay) / (2.0 * vartheta)).sqrt();
    x * decay + sd * xi
}

/// Temperature `θ_t = Γ_t + X_t` with
/// `Γ_t = a + bt + c₁ sin((2πt + τ₁)/8760) + c₂ sin((2πt + τ₂)/24)` and
/// `dX = −ϑ X dt + σ dW`, time in hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeasonalOUParams {
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub vartheta: f64,
    pub sigma: f64,
    pub x0: f64,
}

impl Default for SeasonalOUParams {
    fn default() -> Self {
        Self {
            a: 12.06,
            b: 0.0000072,
            c1: 7.81,
            c2: -3.18,
            tau1: -16924.50,
            tau2: 10.84,
            vartheta: 0.011,
            sigma: 0.46,
            x0: 0.0,
        }
    }
}

impl SeasonalOUParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.vartheta > 0.0) {
            return Err(Error::invalid("mean reversion vartheta must be positive"));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::invalid("sigma must be nonnegative"));
        }
        Ok(())
    }

    pub fn trend(&self, t: f64) -> f64 {
        use std::f64::consts::PI;
        self.a
            + self.b * t
            + self.c1 * ((2.0 * PI * t + self.tau1) / HOURS_PER_YEAR).sin()
            + self.c2 * ((2.0 * PI * t + self.tau2) / 24.0).sin()
    }

    /// `σ²/(2ϑ)`.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.vartheta)
    }
}

fn uniform_times(horizon: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("step must be positive"));
    }
    if !(horizon >= step) {
        return Err(Error::invalid("horizon must cover at least one step"));
    }
    let n = (horizon / step).round() as usize;
    Ok((0..n).map(|i| i as f64 * step).collect())
}

/// Samples `θ` at `0, step, …` up to `t_hours`; the last sample is held to
/// the horizon.
pub fn simulate_temperature(params: &SeasonalOUParams, t_hours: f64, step: f64, seed: u64) -> Result<SampledPath> {
    params.validate()?;
    let times = uniform_times(t_hours, step)?;
    let mut r = rng(seed);
    let mut x = params.x0;
    let mut values = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            let xi: f64 = r.sample(StandardNormal);
            x = ou_step(x, params.vartheta, params.sigma, step, xi);
        }
        values.push(params.trend(t) + x);
    }
    SampledPath::new(times, values, t_hours)
}

/// Events with intensity `n q(X_t)` on `[t_0, T]` by Lewis–Shedler thinning.
///
/// Candidates arrive at rate `λ_max = 1.01 · n · max_i q(X_{t_i})` and are
/// kept with probability `n q(X_t) / λ_max`, `X_t` linearly interpolated.
pub fn simulate_cox(path: &SampledPath, q: impl Fn(f64) -> f64, n: u64, seed: u64) -> Result<EventRecord> {
    let mut peak = 0.0f64;
    for &x in path.values() {
        let v = q(x);
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("intensity must be nonnegative and finite, got q({x}) = {v}")));
        }
        peak = peak.max(v);
    }
    let horizon = path.horizon();
    if peak == 0.0 || n == 0 {
        return EventRecord::new(Vec::new(), horizon);
    }
    let lambda_max = 1.01 * n as f64 * peak;
    let mut r = rng(seed);
    let mut t = path.times()[0];
    let mut events = Vec::new();
    let mut overshoot = false;
    loop {
        let gap: f64 = r.sample(Exp1);
        t += gap / lambda_max;
        if t > horizon {
            break;
        }
        let u: f64 = r.random();
        let ratio = n as f64 * q(path.value_at(t)) / lambda_max;
        overshoot |= ratio > 1.0;
        if u < ratio {
            events.push(t);
        }
    }
    if overshoot {
        log::warn!("intensity exceeded the thinning envelope between samples");
    }
    EventRecord::new(events, horizon)
}

/// Law of the spike sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpLaw {
    /// Magnitude `offset + Exp(scale)`, positive with probability `p_up`.
    SignedExponential {
        scale: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default = "half")]
        p_up: f64,
    },
    /// Every jump has this size.
    Fixed { size: f64 },
}

fn half() -> f64 {
    0.5
}

/// Magnitudes `10 + Exp(10)`, well above the default detection threshold for
/// unit diffusion on an hourly grid.
impl Default for JumpLaw {
    fn default() -> Self {
        JumpLaw::SignedExponential { scale: 10.0, offset: 10.0, p_up: 0.5 }
    }
}

impl JumpLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            JumpLaw::SignedExponential { scale, offset, p_up } => {
                if !(scale >= 0.0 && offset >= 0.0 && (0.0..=1.0).contains(&p_up)) {
                    return Err(Error::invalid("signed exponential law needs scale, offset >= 0 and p_up in [0,1]"));
                }
            }
            JumpLaw::Fixed { size } => {
                if !size.is_finite() {
                    return Err(Error::invalid("jump size must be finite"));
                }
            }
        }
        Ok(())
    }

    fn draw(&self, r: &mut ChaCha8Rng) -> f64 {
        match *self {
            JumpLaw::SignedExponential { scale, offset, p_up } => {
                let e: f64 = r.sample(Exp1);
                let u: f64 = r.random();
                let m = offset + scale * e;
                if u < p_up {
                    m
                } else {
                    -m
                }
            }
            JumpLaw::Fixed { size } => size,
        }
    }
}

/// Continuous price component `dY = −ϑ(Y − mean) dt + σ dW`; Brownian when
/// `vartheta = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseProcess {
    pub mean: f64,
    pub vartheta: f64,
    pub sigma: f64,
    pub y0: f64,
}

impl Default for BaseProcess {
    fn default() -> Self {
        Self { mean: 0.0, vartheta: 0.0, sigma: 1.0, y0: 0.0 }
    }
}

/// Spot price `S = Y + Z` with `dZ = −β Z dt + jumps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeModelParams {
    pub beta: f64,
    #[serde(default)]
    pub jump_law: JumpLaw,
    #[serde(default)]
    pub base: BaseProcess,
}

impl SpikeModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::invalid("spike mean reversion beta must be positive"));
        }
        if !(self.base.vartheta >= 0.0 && self.base.sigma >= 0.0) {
            return Err(Error::invalid("base process needs vartheta, sigma >= 0"));
        }
        self.jump_law.validate()
    }
}

/// Spot price sampled at `0, step, …` up to `t`; jumps occur at the event
/// times and decay exactly between samples.
pub fn simulate_spot(spike: &SpikeModelParams, events: &EventRecord, t: f64, step: f64, seed: u64) -> Result<SampledPath> {
    spike.validate()?;
    let times = uniform_times(t, step)?;
    let mut r = rng(seed);
    let jumps: Vec<(f64, f64)> = events.times().iter().map(|&s| (s, spike.jump_law.draw(&mut r))).collect();
    let base = spike.base;
    let mut y = base.y0 - base.mean;
    let mut z = 0.0;
    let mut next = 0;
    let mut values = Vec::with_capacity(times.len());
    let decay = (-spike.beta * step).exp();
    for (i, &ti) in times.iter().enumerate() {
        if i > 0 {
            let xi: f64 = r.sample(StandardNormal);
            y = ou_step(y, base.vartheta, base.sigma, step, xi);
            z *= decay;
        }
        while next < jumps.len() && jumps[next].0 <= ti {
            let (s, j) = jumps[next];
            z += j * (-spike.beta * (ti - s)).exp();
            next += 1;
        }
        values.push(base.mean + y + z);
    }
    SampledPath::new(times, values, t)
}

/// Settings of [`detect_jumps`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorOptions {
    pub mpv_order: usize,
    pub threshold_mult: f64,
    pub exponent: f64,
    pub segment_hours: f64,
    /// Skip the increment right after a flagged one, which is usually the
    /// reversal of the same spike rather than a new jump.
    pub suppress_reversals: bool,
}

impl Default for DetectorOptions {
    fn default() -> Self {
        Self {
            mpv_order: 20,
            threshold_mult: 5.0,
            exponent: 0.49,
            segment_hours: HOURS_PER_YEAR,
            suppress_reversals: false,
        }
    }
}

/// Detected jumps plus per-segment volatility.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpDetection {
    pub events: EventRecord,
    /// Index `i` of each flagged increment `S_{i+1} − S_i`.
    pub flagged: Vec<usize>,
    /// `σ̂` for each segment, in segment order.
    pub sigma_hat: Vec<f64>,
    /// Increment index ranges of the segments.
    pub segments: Vec<std::ops::Range<usize>>,
}

/// `σ̂` from multipower variation of order `k` over `increments`:
/// `σ̂² = μ_{2/k}^{−k} (mΔ)⁻¹ Σ_i Π_{j<k} |Δ_{i+j}S|^{2/k}` with `m` the
/// number of products.
pub fn multipower_sigma(increments: &[f64], order: usize, step: f64) -> Result<f64> {
    if order == 0 {
        return Err(Error::invalid("multipower order must be positive"));
    }
    if increments.len() < order {
        return Err(Error::invalid(format!(
            "{} increments are too few for a multipower product of order {order}",
            increments.len()
        )));
    }
    let p = 2.0 / order as f64;
    let logs: Vec<f64> = increments.iter().map(|d| p * d.abs().ln()).collect();
    let mut sum = 0.0;
    let mut zeros = 0usize;
    let mut total = 0.0;
    for (i, &l) in logs.iter().enumerate() {
        if l.is_finite() {
            sum += l;
        } else {
            zeros += 1;
        }
        if i >= order {
            let out = logs[i - order];
            if out.is_finite() {
                sum -= out;
            } else {
                zeros -= 1;
            }
        }
        if i + 1 >= order && zeros == 0 {
            total += sum.exp();
        }
    }
    let products = increments.len() - order + 1;
    let mu = normal_abs_moment(p);
    let var = total / mu.powi(order as i32) / (products as f64 * step);
    Ok(var.sqrt())
}

/// Flags increments with `|Δ_iS| > mult · σ̂ · Δ^exponent` followed by an
/// increment of opposite sign; each segment gets its own `σ̂`, and a trailing
/// segment shorter than the others joins the previous one.
pub fn detect_jumps(prices: &SampledPath, opts: &DetectorOptions) -> Result<JumpDetection> {
    if prices.len() < 2 {
        return Err(Error::invalid("price series needs at least two samples"));
    }
    let step = prices
        .uniform_step()
        .ok_or_else(|| Error::invalid("jump detection needs a uniform time grid"))?;
    if !(opts.segment_hours > 0.0 && opts.threshold_mult > 0.0) {
        return Err(Error::invalid("segment length and threshold multiplier must be positive"));
    }
    let s = prices.values();
    let inc: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).collect();
    let per = ((opts.segment_hours / step).round() as usize).max(1);
    let mut segments = Vec::new();
    let mut start = 0;
    while start < inc.len() {
        let end = (start + per).min(inc.len());
        if end - start < per && !segments.is_empty() {
            let last: &mut std::ops::Range<usize> = segments.last_mut().unwrap();
            last.end = end;
        } else {
            segments.push(start..end);
        }
        start = end;
    }

    let mut flagged = Vec::new();
    let mut sigma_hat = Vec::with_capacity(segments.len());
    for seg in &segments {
        let sigma = multipower_sigma(&inc[seg.clone()], opts.mpv_order, step)?;
        sigma_hat.push(sigma);
        let threshold = opts.threshold_mult * sigma * step.powf(opts.exponent);
        for i in seg.clone() {
            if opts.suppress_reversals && flagged.last() == Some(&(i.wrapping_sub(1))) {
                continue;
            }
            if i + 1 < inc.len() && inc[i].abs() > threshold && inc[i] * inc[i + 1] < 0.0 {
                flagged.push(i);
            }
        }
    }
    let times = flagged.iter().map(|&i| prices.times()[i]).collect();
    Ok(JumpDetection {
        events: EventRecord::new(times, prices.horizon())?,
        flagged,
        sigma_hat,
        segments,
    })
}
