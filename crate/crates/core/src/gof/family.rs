//! Parametric intensity families `g_θ` with compact parameter boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::Interval;

/// Compact box `Θ = Π [lo_j, hi_j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ParamBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::invalid("parameter box bounds must be nonempty and of equal length"));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(a.is_finite() && b.is_finite() && a <= b) {
                return Err(Error::invalid(format!("empty or unbounded parameter range [{a}, {b}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
    pub fn lo(&self) -> &[f64] {
        &self.lo
    }
    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && theta.iter().zip(self.lo.iter().zip(&self.hi)).all(|(t, (a, b))| a <= t && t <= b)
    }

    /// Box point for normalized coordinates `u ∈ [0,1]^d`, clamped.
    pub fn point(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(u, (a, b))| a + u.clamp(0.0, 1.0) * (b - a))
            .collect()
    }
}

/// `P = {g_θ, θ ∈ Θ}`.
pub trait ParametricFamily: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize {
        self.bounds().dim()
    }

    fn eval(&self, theta: &[f64], x: f64) -> f64;

    /// `∂_θ g_θ(x)`.
    fn grad(&self, theta: &[f64], x: f64) -> Vec<f64>;

    fn bounds(&self) -> &ParamBox;

    /// Lipschitz constant of `θ ↦ g_θ(x)` over `Θ`, uniformly in `x ∈ I`,
    /// estimated from the gradient norm on a lattice. Exact for families
    /// whose gradient norm peaks at box corners and interval ends.
    fn lipschitz(&self, interval: &Interval) -> f64 {
        let b = self.bounds();
        let d = b.dim();
        let levels = 3usize;
        let total = levels.pow(d.min(4) as u32);
        let xs = interval.grid(101);
        let mut best = 0.0f64;
        for idx in 0..total {
            let mut rem = idx;
            let u: Vec<f64> = (0..d)
                .map(|_| {
                    let l = rem % levels;
                    rem /= levels;
                    l as f64 / (levels - 1) as f64
                })
                .collect();
            let theta = b.point(&u);
            for &x in &xs {
                let g = self.grad(&theta, x);
                best = best.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        }
        best
    }
}

/// `g(x) = a₀ e^{a₁ x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Exponential {
    bounds: ParamBox,
}

impl Exponential {
    /// Box `[a0_lo, a0_hi] × [a1_lo, a1_hi]` with `a0_lo > 0`.
    pub fn new(bounds: ParamBox) -> Result<Self> {
        if bounds.dim() != 2 {
            return Err(Error::invalid("exponential family has two parameters"));
        }
        if !(bounds.lo()[0] > 0.0) {
            return Err(Error::invalid("exponential family needs a0 > 0"));
        }
        Ok(Self { bounds })
    }

    /// Box around a pilot `(â₀, â₁)`: `a₀ ∈ [â₀/10, 10â₀]`,
    /// `a₁ ∈ â₁ ± ln 10 / max|x|` over `I`.
    pub fn around(a0: f64, a1: f64, interval: &Interval) -> Result<Self> {
        if !(a0 > 0.0 && a0.is_finite() && a1.is_finite()) {
            return Err(Error::invalid("exponential pilot needs a0 > 0 and finite a1"));
        }
        let reach = interval.lo.abs().max(interval.hi.abs()).max(f64::MIN_POSITIVE);
        let spread = std::f64::consts::LN_10 / reach;
        Self::new(ParamBox::new(vec![a0 / 10.0, a1 - spread], vec![a0 * 10.0, a1 + spread])?)
    }
}

impl ParametricFamily for Exponential {
    fn name(&self) -> &str {
        "exponential"
    }
    fn eval(&self, theta: &[f64], x: f64) -> f64 {
        theta[0] * (theta[1] * x).exp()
    }
    fn grad(&self, theta: &[f64], x: f64) -> Vec<f64> {
        let e = (theta[1] * x).exp();
        vec![e, theta[0] * x * e]
    }
    fn bounds(&self) -> &ParamBox {
        &self.bounds
    }
}

/// `g(x) = c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constant {
    bounds: ParamBox,
}

impl Constant {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0) {
            return Err(Error::invalid("constant family needs c > 0"));
        }
        Ok(Self { bounds: ParamBox::new(vec![lo], vec![hi])? })
    }

    /// Box `[ĉ/10, 10ĉ]`.
    pub fn around(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid("constant pilot must be positive"));
        }
        Self::new(c / 10.0, c * 10.0)
    }
}

impl ParametricFamily for Constant {
    fn name(&self) -> &str {
        "constant"
    }
    fn eval(&self, theta: &[f64], _x: f64) -> f64 {
        theta[0]
    }
    fn grad(&self, _theta: &[f64], _x: f64) -> Vec<f64> {
        vec![1.0]
    }
    fn bounds(&self) -> &ParamBox {
        &self.bounds
    }
    fn lipschitz(&self, _interval: &Interval) -> f64 {
        1.0
    }
}

/// Functional form of a [`PolynomialFamily`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolynomialForm {
    /// `Σ θ_j x^j`.
    Polynomial,
    /// `exp(Σ θ_j x^j)`.
    LogPolynomial,
}

/// User-described family, typically read from a JSON document such as
/// `{"form": "log_polynomial", "lower": [0, -1], "upper": [10, 1]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialSpec {
    pub form: PolynomialForm,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialFamily {
    name: String,
    form: PolynomialForm,
    bounds: ParamBox,
}

impl PolynomialFamily {
    pub fn new(spec: PolynomialSpec) -> Result<Self> {
        let bounds = ParamBox::new(spec.lower, spec.upper)?;
        let name = spec.name.unwrap_or_else(|| match spec.form {
            PolynomialForm::Polynomial => "polynomial".into(),
            PolynomialForm::LogPolynomial => "log_polynomial".into(),
        });
        Ok(Self { name, form: spec.form, bounds })
    }

    fn poly(theta: &[f64], x: f64) -> f64 {
        theta.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

impl ParametricFamily for PolynomialFamily {
    fn name(&self) -> &str {
        &self.name
    }
    fn eval(&self, theta: &[f64], x: f64) -> f64 {
        match self.form {
            PolynomialForm::Polynomial => Self::poly(theta, x),
            PolynomialForm::LogPolynomial => Self::poly(theta, x).exp(),
        }
    }
    fn grad(&self, theta: &[f64], x: f64) -> Vec<f64> {
        let scale = match self.form {
            PolynomialForm::Polynomial => 1.0,
            PolynomialForm::LogPolynomial => self.eval(theta, x),
        };
        let mut p = 1.0;
        (0..theta.len())
            .map(|_| {
                let v = scale * p;
                p *= x;
                v
            })
            .collect()
    }
    fn bounds(&self) -> &ParamBox {
        &self.bounds
    }
}
