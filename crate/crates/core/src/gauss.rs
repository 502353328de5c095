//! Gaussian CDF helpers and a quadrature oracle for Ornstein–Uhlenbeck
//! smoothing `T_ρ f(x) = E_z[f(ρx + √(1-ρ²) z)]` and Gaussian L2 functionals.
//!
//! Smooth integrands use Gauss–Hermite rules normalized to N(0,1), doubling
//! the order until two successive estimates agree. Integrands with kinks or
//! jumps are split at their breakpoints and integrated piecewise with
//! composite Gauss–Legendre against the density.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::linalg::sq;
use crate::model::Activation;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * libm::exp(-0.5 * x * x)
}

/// `Pr[z <= x]`
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `Pr[z >= x]`
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Positive nodes and weights of the 8-point Gauss–Legendre rule.
const GL8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// `Pr[a <= z < b]`, computed on the side of zero that avoids cancellation.
pub fn interval_prob(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if b - a <= 1.0 {
        // Direct quadrature keeps full relative accuracy for narrow bands,
        // where differencing tail masses cancels.
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        return half
            * GL8.iter().map(|&(t, w)| w * (normal_pdf(mid - half * t) + normal_pdf(mid + half * t))).sum::<f64>();
    }
    if a >= 0.0 {
        normal_sf(a) - normal_sf(b)
    } else if b <= 0.0 {
        normal_cdf(b) - normal_cdf(a)
    } else {
        1.0 - normal_cdf(a) - normal_sf(b)
    }
}

/// `Pr[|z| >= m]`
pub fn two_sided_tail(m: f64) -> f64 {
    libm::erfc(m / SQRT_2)
}

/// Inverse of `normal_cdf`: rational first guess refined by Halley steps.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -normal_quantile(1.0 - p);
    }
    #[allow(clippy::excessive_precision)]
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] =
        [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let mut x = if p < 0.02425 {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..3 {
        let e = normal_cdf(x) - p;
        let u = e / normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// A rule for `E_{z~N(0,1)}[f(z)] ≈ Σ w_i f(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Gauss–Hermite rule of order `n`, rescaled to the standard normal.
    /// The Newton root search loses roots beyond about 150 nodes.
    pub fn hermite(n: usize) -> Self {
        // Newton iteration on orthonormal physicists' Hermite polynomials.
        let pim4 = 0.751_125_544_464_942_5;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => libm::sqrt(2.0 * nf + 1.0) - 1.85575 * libm::pow(2.0 * nf + 1.0, -0.16667),
                1 => z - 1.14 * libm::pow(nf, 0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 1.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * libm::sqrt(2.0 / jf) * p2 - libm::sqrt((jf - 1.0) / jf) * p3;
                }
                pp = libm::sqrt(2.0 * nf) * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if libm::fabs(z - z1) <= 1e-15 * libm::fabs(z).max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let scale = 1.0 / libm::sqrt(PI);
        let mut nodes: Vec<f64> = x.iter().map(|t| t * SQRT_2).collect();
        let mut weights: Vec<f64> = w.iter().map(|t| t * scale).collect();
        nodes.reverse();
        weights.reverse();
        // Force exact symmetry of the middle node for odd orders.
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        // Nudge the central weights so constants integrate to exactly 1 when
        // summed in node order.
        let mid = n / 2;
        for _ in 0..4 {
            let total: f64 = weights.iter().sum();
            if total == 1.0 {
                break;
            }
            weights[mid] += 1.0 - total;
        }
        Self { nodes, weights }
    }

    /// Gauss–Legendre rule on `[-1, 1]` (weights sum to 2).
    pub fn legendre(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = libm::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
            let mut pp = 1.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
                }
                pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if libm::fabs(z - z1) <= 1e-16 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Self { nodes, weights }
    }

    pub fn apply(&self, f: &dyn Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// A univariate function on the real line, plus the points where it is not smooth.
pub trait Univariate {
    fn eval(&self, z: f64) -> f64;
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl Univariate for Activation {
    fn eval(&self, z: f64) -> f64 {
        Activation::eval(self, z)
    }
    fn breakpoints(&self) -> Vec<f64> {
        Activation::breakpoints(self)
    }
}

/// The a.e. derivative of an activation as a function in its own right.
pub struct Derivative<'a>(pub &'a Activation);

impl Univariate for Derivative<'_> {
    fn eval(&self, z: f64) -> f64 {
        self.0.derivative(z)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.0.breakpoints()
    }
}

/// Polynomial with coefficients in increasing degree.
pub struct Poly(pub Vec<f64>);

impl Univariate for Poly {
    fn eval(&self, z: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * z + c)
    }
}

/// Closure wrapper with explicit breakpoints.
pub struct FnUni<F: Fn(f64) -> f64> {
    pub f: F,
    pub breaks: Vec<f64>,
}

impl<F: Fn(f64) -> f64> FnUni<F> {
    pub fn smooth(f: F) -> Self {
        Self { f, breaks: Vec::new() }
    }
}

impl<F: Fn(f64) -> f64> Univariate for FnUni<F> {
    fn eval(&self, z: f64) -> f64 {
        (self.f)(z)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.breaks.clone()
    }
}

/// `T_ρ f` as a function; smooth for any ρ < 1.
pub struct Smoothed<'a> {
    pub oracle: &'a GaussOracle,
    pub f: &'a dyn Univariate,
    pub rho: f64,
}

impl Univariate for Smoothed<'_> {
    fn eval(&self, x: f64) -> f64 {
        self.oracle.smooth_unchecked(self.f, self.rho, x)
    }
}

/// Results of the semigroup identity checks for one function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemigroupReport {
    /// `max |T_t T_s f - T_{ts} f|` over the test grid.
    pub composition_residual: f64,
    /// `‖T_t f‖ / ‖f‖`; nonexpansiveness means at most 1.
    pub norm_ratio: f64,
}

/// Both sides of `E[(T_ρ f - f)^2] <= 3(1-ρ) E[f'^2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingBound {
    pub lhs: f64,
    pub rhs: f64,
}

/// Quadrature context with cached rules.
pub struct GaussOracle {
    hermite: Vec<QuadratureRule>,
    legendre: QuadratureRule,
    /// Absolute agreement required between successive refinements.
    pub tol: f64,
    /// Integrals over pieces are truncated to `[-cutoff, cutoff]`.
    pub cutoff: f64,
}

impl Default for GaussOracle {
    fn default() -> Self {
        Self::new(64)
    }
}

impl GaussOracle {
    /// `base_order` Gauss–Hermite nodes (clamped to `8..=64`), doubled once;
    /// integrands that still disagree fall back to composite Gauss–Legendre.
    pub fn new(base_order: usize) -> Self {
        let base = base_order.clamp(8, 64);
        let hermite = (0..2).map(|k| QuadratureRule::hermite(base << k)).collect();
        Self { hermite, legendre: QuadratureRule::legendre(20), tol: 1e-9, cutoff: 12.0 }
    }

    pub fn base_order(&self) -> usize {
        self.hermite[0].order()
    }

    /// `E_{z~N(0,1)}[f(z)]`.
    pub fn expect(&self, f: &dyn Univariate) -> f64 {
        let breaks = f.breakpoints();
        let g = |z: f64| f.eval(z);
        if breaks.is_empty() {
            self.expect_smooth(&g)
        } else {
            self.expect_piecewise(&g, &breaks)
        }
    }

    fn expect_smooth(&self, f: &dyn Fn(f64) -> f64) -> f64 {
        let mut prev = self.hermite[0].apply(f);
        for rule in &self.hermite[1..] {
            let cur = rule.apply(f);
            if libm::fabs(cur - prev) <= self.tol {
                return cur;
            }
            prev = cur;
        }
        self.expect_piecewise(f, &[])
    }

    fn expect_piecewise(&self, f: &dyn Fn(f64) -> f64, breaks: &[f64]) -> f64 {
        let c = self.cutoff;
        let mut edges: Vec<f64> = breaks.iter().copied().filter(|b| b.is_finite() && *b > -c && *b < c).collect();
        edges.push(-c);
        edges.push(c);
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let mut panels = 4usize;
        let mut prev = self.composite(f, &edges, panels);
        while panels < 1024 {
            panels *= 2;
            let cur = self.composite(f, &edges, panels);
            if libm::fabs(cur - prev) <= self.tol {
                return cur;
            }
            prev = cur;
        }
        prev
    }

    fn composite(&self, f: &dyn Fn(f64) -> f64, edges: &[f64], panels: usize) -> f64 {
        let mut total = 0.0;
        for win in edges.windows(2) {
            let (a, b) = (win[0], win[1]);
            let h = (b - a) / panels as f64;
            for p in 0..panels {
                let lo = a + h * p as f64;
                let mid = lo + 0.5 * h;
                let mut s = 0.0;
                for (&t, &w) in self.legendre.nodes.iter().zip(&self.legendre.weights) {
                    let z = mid + 0.5 * h * t;
                    s += w * f(z) * normal_pdf(z);
                }
                total += 0.5 * h * s;
            }
        }
        total
    }

    /// `(T_ρ f)(x)`; errors unless `ρ ∈ (0, 1)`.
    pub fn ou_smooth(&self, f: &dyn Univariate, rho: f64, x: f64) -> Result<f64> {
        check_rho(rho)?;
        Ok(self.smooth_unchecked(f, rho, x))
    }

    fn smooth_unchecked(&self, f: &dyn Univariate, rho: f64, x: f64) -> f64 {
        let s = libm::sqrt(1.0 - rho * rho);
        let breaks: Vec<f64> = f.breakpoints().iter().map(|b| (b - rho * x) / s).collect();
        let g = |z: f64| f.eval(rho * x + s * z);
        if breaks.is_empty() {
            self.expect_smooth(&g)
        } else {
            self.expect_piecewise(&g, &breaks)
        }
    }

    /// `‖f‖_{L2(N)}`.
    pub fn l2_norm(&self, f: &dyn Univariate) -> f64 {
        let sq = FnUni { f: |z: f64| sq(f.eval(z)), breaks: f.breakpoints() };
        libm::sqrt(self.expect(&sq))
    }

    /// `‖T_ρ f‖_{L2(N)}`.
    pub fn smoothed_norm(&self, f: &dyn Univariate, rho: f64) -> Result<f64> {
        check_rho(rho)?;
        Ok(self.l2_norm(&Smoothed { oracle: self, f, rho }))
    }

    /// `‖T_ρ σ'‖_{L2(N)}`. For activations with jumps the derivative is taken
    /// in the distributional sense through `T_ρ σ'(x) = E[z σ(ρx + sz)] / s`.
    pub fn smoothed_derivative_norm(&self, sigma: &Activation, rho: f64) -> Result<f64> {
        check_rho(rho)?;
        if sigma.derivative_is_square_integrable() {
            return Ok(self.l2_norm(&Smoothed { oracle: self, f: &Derivative(sigma), rho }));
        }
        let s = libm::sqrt(1.0 - rho * rho);
        let smoothed = FnUni::smooth(|x: f64| {
            let g = FnUni {
                f: |z: f64| z * sigma.eval(rho * x + s * z),
                breaks: sigma.breakpoints().iter().map(|b| (b - rho * x) / s).collect(),
            };
            self.expect(&g) / s
        });
        Ok(self.l2_norm(&smoothed))
    }

    /// Composition residual of `T_t T_s f = T_{ts} f` on a grid over `[-3, 3]`
    /// and the nonexpansiveness ratio `‖T_t f‖ / ‖f‖`.
    pub fn check_semigroup_identities(&self, f: &dyn Univariate, t: f64, s: f64) -> Result<SemigroupReport> {
        check_rho(t)?;
        check_rho(s)?;
        let inner = Smoothed { oracle: self, f, rho: s };
        let mut residual: f64 = 0.0;
        for k in 0..=24 {
            let x = -3.0 + 0.25 * k as f64;
            let lhs = self.smooth_unchecked(&inner, t, x);
            let rhs = self.smooth_unchecked(f, t * s, x);
            residual = residual.max(libm::fabs(lhs - rhs));
        }
        let nf = self.l2_norm(f);
        let ratio = if nf == 0.0 { 1.0 } else { self.smoothed_norm(f, t)? / nf };
        Ok(SemigroupReport { composition_residual: residual, norm_ratio: ratio })
    }

    /// `E[(T_t f) g]` and `E[f (T_t g)]`, equal by self-adjointness.
    pub fn symmetry_pair(&self, f: &dyn Univariate, g: &dyn Univariate, t: f64) -> Result<(f64, f64)> {
        check_rho(t)?;
        let tf = Smoothed { oracle: self, f, rho: t };
        let tg = Smoothed { oracle: self, f: g, rho: t };
        let a = FnUni { f: |z: f64| tf.eval(z) * g.eval(z), breaks: g.breakpoints() };
        let b = FnUni { f: |z: f64| f.eval(z) * tg.eval(z), breaks: f.breakpoints() };
        Ok((self.expect(&a), self.expect(&b)))
    }

    /// Both sides of the smoothing error bound for an activation. The right
    /// side is infinite when the derivative carries a point mass.
    pub fn check_smoothing_error(&self, sigma: &Activation, rho: f64) -> Result<SmoothingBound> {
        check_rho(rho)?;
        let tf = Smoothed { oracle: self, f: sigma, rho };
        let diff = FnUni { f: |z: f64| sq(tf.eval(z) - sigma.eval(z)), breaks: sigma.breakpoints() };
        let lhs = self.expect(&diff);
        let rhs = if sigma.derivative_is_square_integrable() {
            3.0 * (1.0 - rho) * sq(self.l2_norm(&Derivative(sigma)))
        } else {
            f64::INFINITY
        };
        Ok(SmoothingBound { lhs, rhs })
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParam(alloc::format!("rho must lie in (0, 1), got {rho}")))
    }
}

/// Boxed catalog entry, handy for iterating over heterogeneous test functions.
pub type BoxedUni<'a> = Box<dyn Univariate + 'a>;
