//! Smoothing kernels and the constants derived from them.
//!
//! A [`Kernel`] carries its norms and the minorant `K(u) ≥ K_min·1{|u| ≤ Δ}`
//! that guarantees invertibility of the local design matrix once the covariate
//! has spent enough time on the estimation interval. The moment matrix, the
//! asymptotic equivalent weight `w(u)` and the variance constant `A(K)` of the
//! goodness-of-fit statistic are computed by fixed-node composite Simpson
//! quadrature so the constants are reproducible bit for bit.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;

/// Node count used for every one-dimensional kernel integral.
pub const QUADRATURE_NODES: usize = 20_001;

/// Default node count per axis for the nested integral in [`test_constant`].
pub const TEST_CONSTANT_NODES: usize = 2_001;

/// Largest supported local polynomial degree.
pub const MAX_DEGREE: usize = 7;

#[derive(Clone)]
enum Shape {
    Epanechnikov,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// A compactly supported kernel with precomputed norms.
#[derive(Clone)]
pub struct Kernel {
    name: String,
    shape: Shape,
    support_radius: f64,
    integral: f64,
    norm_l1: f64,
    norm_l2_sq: f64,
    norm_inf: f64,
    minorant_delta: f64,
    minorant_kmin: f64,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name)
            .field("support_radius", &self.support_radius)
            .field("norm_l1", &self.norm_l1)
            .field("norm_l2_sq", &self.norm_l2_sq)
            .field("norm_inf", &self.norm_inf)
            .field("minorant_delta", &self.minorant_delta)
            .field("minorant_kmin", &self.minorant_kmin)
            .finish()
    }
}

impl Kernel {
    /// `K(u) = 0.75 (1 − u²) 1{|u| ≤ 1}` with the minorant taken at `Δ = 1/2`.
    pub fn epanechnikov() -> Self {
        Self {
            name: "epanechnikov".to_string(),
            shape: Shape::Epanechnikov,
            support_radius: 1.0,
            integral: 1.0,
            norm_l1: 1.0,
            norm_l2_sq: 0.6,
            norm_inf: 0.75,
            minorant_delta: 0.5,
            minorant_kmin: 0.5625,
        }
    }

    /// Looks up a built-in kernel by name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(Self::epanechnikov()),
            other => Err(Error::invalid(format!("unknown kernel '{other}'"))),
        }
    }

    /// Registers a user kernel. Norms are obtained by quadrature over the
    /// support and the minorant value by a dense scan of `[−Δ, Δ]`.
    pub fn custom<F>(name: &str, f: F, support_radius: f64, minorant_delta: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(support_radius > 0.0 && support_radius <= 1.0) {
            return Err(Error::invalid("kernel support radius must lie in (0, 1]"));
        }
        if !(minorant_delta > 0.0 && minorant_delta <= support_radius) {
            return Err(Error::invalid("minorant width must lie in (0, support radius]"));
        }
        let r = support_radius;
        let integral = simpson(&f, -r, r, QUADRATURE_NODES);
        let norm_l1 = simpson(|u| f(u).abs(), -r, r, QUADRATURE_NODES);
        let norm_l2_sq = simpson(|u| f(u) * f(u), -r, r, QUADRATURE_NODES);
        let scan = |a: f64, b: f64| {
            (0..QUADRATURE_NODES).map(move |i| a + (b - a) * i as f64 / (QUADRATURE_NODES - 1) as f64)
        };
        let norm_inf = scan(-r, r).map(|u| f(u).abs()).fold(0.0, f64::max);
        let minorant_kmin = scan(-minorant_delta, minorant_delta).map(&f).fold(f64::INFINITY, f64::min);
        if !(minorant_kmin > 0.0) {
            return Err(Error::invalid("kernel must be bounded below by a positive constant near 0"));
        }
        if !norm_inf.is_finite() {
            return Err(Error::invalid("kernel must be bounded"));
        }
        Ok(Self {
            name: name.to_string(),
            shape: Shape::Custom(Arc::new(f)),
            support_radius,
            integral,
            norm_l1,
            norm_l2_sq,
            norm_inf,
            minorant_delta,
            minorant_kmin,
        })
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if u.abs() > self.support_radius {
            return 0.0;
        }
        match &self.shape {
            Shape::Epanechnikov => 0.75 * (1.0 - u * u),
            Shape::Custom(f) => f(u),
        }
    }

    /// `K_h(u) = K(u/h)/h`.
    #[inline]
    pub fn eval_scaled(&self, u: f64, h: f64) -> f64 {
        self.eval(u / h) / h
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }
    /// Signed integral `∫K`.
    pub fn integral(&self) -> f64 {
        self.integral
    }
    pub fn norm_l1(&self) -> f64 {
        self.norm_l1
    }
    pub fn norm_l2_sq(&self) -> f64 {
        self.norm_l2_sq
    }
    pub fn norm_inf(&self) -> f64 {
        self.norm_inf
    }
    pub fn minorant_delta(&self) -> f64 {
        self.minorant_delta
    }
    pub fn minorant_kmin(&self) -> f64 {
        self.minorant_kmin
    }
}

/// `U(x) = (1, x, x²/2!, …, x^m/m!)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonomialBasis {
    pub degree: usize,
}

impl MonomialBasis {
    pub fn new(degree: usize) -> Self {
        Self { degree }
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.fill(x, &mut out);
        out
    }

    #[inline]
    pub fn fill(&self, x: f64, out: &mut [f64]) {
        out[0] = 1.0;
        for j in 1..=self.degree {
            out[j] = out[j - 1] * x / j as f64;
        }
    }

    /// `Σ_j c_j x^j / j!` by Horner's rule.
    #[inline]
    pub fn dot(&self, coeffs: &[f64], x: f64) -> f64 {
        let mut acc = coeffs[self.degree];
        for j in (0..self.degree).rev() {
            acc = coeffs[j] + acc * x / (j + 1) as f64;
        }
        acc
    }
}

/// Composite Simpson rule on `[a, b]` with `nodes` equally spaced nodes.
/// An even node count is bumped to the next odd one.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, nodes: usize) -> f64 {
    let nodes = if nodes % 2 == 0 { nodes + 1 } else { nodes.max(3) };
    let intervals = nodes - 1;
    let step = (b - a) / intervals as f64;
    let mut acc = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + step * i as f64);
    }
    acc * step / 3.0
}

/// Moment `∫ z^p K(z) dz`.
pub fn kernel_moment(kernel: &Kernel, p: usize) -> f64 {
    let r = kernel.support_radius();
    simpson(|z| z.powi(p as i32) * kernel.eval(z), -r, r, QUADRATURE_NODES)
}

/// `∫ U(z) U(z)ᵀ K(z) dz`.
pub fn moment_matrix(kernel: &Kernel, degree: usize) -> Result<SquareMatrix> {
    if degree > MAX_DEGREE {
        return Err(Error::invalid(format!("degree {degree} exceeds the supported maximum {MAX_DEGREE}")));
    }
    let dim = degree + 1;
    let moments: Vec<f64> = (0..=2 * degree).map(|p| kernel_moment(kernel, p)).collect();
    let mut fact = vec![1.0; dim];
    for j in 1..dim {
        fact[j] = fact[j - 1] * j as f64;
    }
    let mut m = SquareMatrix::zeros(dim);
    for j in 0..dim {
        for k in 0..dim {
            m.set(j, k, moments[j + k] / (fact[j] * fact[k]));
        }
    }
    m.cholesky(1e-12)?;
    Ok(m)
}

/// The equivalent kernel weight `u ↦ U(0)ᵀ M⁻¹ U(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticWeight {
    basis: MonomialBasis,
    coeffs: Vec<f64>,
}

impl AsymptoticWeight {
    pub fn eval(&self, u: f64) -> f64 {
        self.basis.dot(&self.coeffs, u)
    }

    /// First row of `M⁻¹`.
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }
}

pub fn asymptotic_weight(kernel: &Kernel, degree: usize) -> Result<AsymptoticWeight> {
    let m = moment_matrix(kernel, degree)?;
    let ch = m.cholesky(1e-12)?;
    let mut coeffs = vec![0.0; degree + 1];
    coeffs[0] = 1.0;
    ch.solve_in_place(&mut coeffs);
    Ok(AsymptoticWeight { basis: MonomialBasis::new(degree), coeffs })
}

/// Range of the outer (lag) integral in [`test_constant`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagRange {
    /// Lags restricted to the kernel support `[−r, r]`. This is the
    /// convention behind the published Epanechnikov value 413113/985600.
    #[default]
    KernelSupport,
    /// Every lag where the integrand is nonzero, `[−2r, 2r]`
    /// (167/385 for Epanechnikov with degree ≤ 1).
    Full,
}

impl std::str::FromStr for LagRange {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "support" | "kernel_support" => Ok(LagRange::KernelSupport),
            "full" => Ok(LagRange::Full),
            other => Err(Error::invalid(format!("unknown lag range '{other}' (expected support|full)"))),
        }
    }
}

/// Variance constant of the goodness-of-fit statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestConstant {
    /// `∫ (∫ w(u) w(u+p) K(u) K(u+p) du)² dp`.
    pub inner: f64,
    /// `A(K) = 2 (∫K)² · inner`.
    pub a_of_k: f64,
}

pub fn test_constant(kernel: &Kernel, degree: usize, lags: LagRange) -> Result<TestConstant> {
    test_constant_with_nodes(kernel, degree, lags, TEST_CONSTANT_NODES)
}

/// [`test_constant`] with an explicit node count per axis.
///
/// The inner integral runs over the overlap of the two shifted supports and
/// the outer integral is split at zero, so each Simpson panel sees a smooth
/// integrand.
pub fn test_constant_with_nodes(
    kernel: &Kernel,
    degree: usize,
    lags: LagRange,
    nodes: usize,
) -> Result<TestConstant> {
    let w = asymptotic_weight(kernel, degree)?;
    let r = kernel.support_radius();
    let correlation = |p: f64| {
        let lo = (-r).max(-r - p);
        let hi = r.min(r - p);
        if hi <= lo {
            return 0.0;
        }
        simpson(
            |u| w.eval(u) * w.eval(u + p) * kernel.eval(u) * kernel.eval(u + p),
            lo,
            hi,
            nodes,
        )
    };
    let reach = match lags {
        LagRange::KernelSupport => r,
        LagRange::Full => 2.0 * r,
    };
    let sq = |p: f64| {
        let c = correlation(p);
        c * c
    };
    let inner = simpson(sq, -reach, 0.0, nodes) + simpson(sq, 0.0, reach, nodes);
    let k1 = kernel.integral();
    Ok(TestConstant { inner, a_of_k: 2.0 * k1 * k1 * inner })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epanechnikov_values() {
        let k = Kernel::epanechnikov();
        assert_eq!(k.eval(0.0), 0.75);
        assert_eq!(k.eval(1.5), 0.0);
        assert_eq!(k.eval(-1.0), 0.0);
        assert_eq!(k.norm_l1(), 1.0);
        assert_eq!(k.norm_inf(), 0.75);
        assert_eq!(k.minorant_kmin(), k.eval(0.5));
        let r = k.support_radius();
        let l1 = simpson(|u| k.eval(u).abs(), -r, r, QUADRATURE_NODES);
        assert!((l1 - k.norm_l1()).abs() < 1e-8);
        // ∫ (3/4)² (1 − u²)² du = 3/5
        let l2 = simpson(|u| k.eval(u).powi(2), -1.0, 1.0, QUADRATURE_NODES);
        assert!((l2 - 0.6).abs() < 1e-10);
        assert!((k.norm_l2_sq() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn custom_kernel_matches_builtin() {
        let k = Kernel::custom("epa", |u: f64| 0.75 * (1.0 - u * u), 1.0, 0.5).unwrap();
        let e = Kernel::epanechnikov();
        assert!((k.norm_l1() - e.norm_l1()).abs() < 1e-8);
        assert!((k.norm_l2_sq() - e.norm_l2_sq()).abs() < 1e-8);
        assert!((k.norm_inf() - e.norm_inf()).abs() < 1e-12);
        assert!((k.minorant_kmin() - e.minorant_kmin()).abs() < 1e-12);
    }

    #[test]
    fn custom_kernel_rejects_bad_shapes() {
        assert!(Kernel::custom("wide", |_| 0.25, 2.0, 0.5).is_err());
        assert!(Kernel::custom("hole", |u: f64| u.abs(), 1.0, 0.5).is_err());
        assert!(Kernel::by_name("gaussian").is_err());
    }

    #[test]
    fn minorant_holds() {
        let k = Kernel::epanechnikov();
        for i in 0..=1000 {
            let u = -0.5 + i as f64 / 1000.0;
            assert!(k.eval(u) >= k.minorant_kmin());
        }
    }

    #[test]
    fn monomial_basis_components() {
        let b = MonomialBasis::new(4);
        assert_eq!(b.eval(2.0), vec![1.0, 2.0, 2.0, 8.0 / 6.0, 16.0 / 24.0]);
        assert_eq!(b.eval(0.0), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(b.eval(-3.0)[2], 4.5);
        let c = [1.0, -2.0, 0.5, 3.0, 0.25];
        let direct: f64 = b.eval(1.3).iter().zip(&c).map(|(u, c)| u * c).sum();
        assert!((b.dot(&c, 1.3) - direct).abs() < 1e-14);
    }

    #[test]
    fn moment_matrix_closed_forms() {
        let k = Kernel::epanechnikov();
        let m1 = moment_matrix(&k, 1).unwrap();
        assert!((m1.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(m1.get(0, 1).abs() < 1e-14 && m1.get(1, 0).abs() < 1e-14);
        assert!((m1.get(1, 1) - 0.2).abs() < 1e-12);
        let m0 = moment_matrix(&k, 0).unwrap();
        assert!((m0.get(0, 0) - 1.0).abs() < 1e-12);
        // moments 1, 0, 1/5, 0, 3/35
        let want = [1.0, 0.0, 0.2, 0.0, 3.0 / 35.0];
        for (p, w) in want.iter().enumerate() {
            assert!((kernel_moment(&k, p) - w).abs() < 1e-10, "moment {p}");
        }
        let m2 = moment_matrix(&k, 2).unwrap();
        assert!((m2.get(0, 2) - 0.1).abs() < 1e-10);
        assert!((m2.get(2, 2) - 3.0 / 35.0 / 4.0).abs() < 1e-10);
    }

    #[test]
    fn asymptotic_weight_identities() {
        let k = Kernel::epanechnikov();
        for m in [0, 1] {
            let w = asymptotic_weight(&k, m).unwrap();
            for u in [-1.0, -0.3, 0.0, 0.7] {
                assert!((w.eval(u) - 1.0).abs() < 1e-10);
            }
        }
        for m in 0..=3 {
            let w = asymptotic_weight(&k, m).unwrap();
            let mass = simpson(|u| w.eval(u) * k.eval(u), -1.0, 1.0, QUADRATURE_NODES);
            assert!((mass - 1.0).abs() < 1e-8, "m={m}");
            let inv = moment_matrix(&k, m).unwrap().cholesky(1e-12).unwrap().inverse();
            assert!((w.eval(0.0) - inv.get(0, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn test_constant_reproduces_published_value() {
        let k = Kernel::epanechnikov();
        let c = test_constant(&k, 1, LagRange::KernelSupport).unwrap();
        assert!((c.inner - 413_113.0 / 985_600.0).abs() < 1e-9, "{}", c.inner);
        assert!((c.a_of_k - 2.0 * 413_113.0 / 985_600.0).abs() < 2e-9);
        let full = test_constant(&k, 1, LagRange::Full).unwrap();
        assert!((full.inner - 167.0 / 385.0).abs() < 1e-9, "{}", full.inner);
        // m = 0 has the same weight w ≡ 1
        let c0 = test_constant(&k, 0, LagRange::KernelSupport).unwrap();
        assert!((c0.inner - c.inner).abs() < 1e-12);
    }

    #[test]
    fn test_constant_grid_converged() {
        let k = Kernel::epanechnikov();
        for lags in [LagRange::KernelSupport, LagRange::Full] {
            let a = test_constant_with_nodes(&k, 1, lags, 2001).unwrap();
            let b = test_constant_with_nodes(&k, 1, lags, 4001).unwrap();
            assert!((a.inner - b.inner).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_mass_factor_gives_zero_constant() {
        // not reachable for a valid kernel; exercises the (∫K)² factor only
        let k = Kernel { integral: 0.0, ..Kernel::epanechnikov() };
        let c = test_constant_with_nodes(&k, 1, LagRange::KernelSupport, 201).unwrap();
        assert!(c.inner > 0.0);
        assert_eq!(c.a_of_k, 0.0);
    }
}
