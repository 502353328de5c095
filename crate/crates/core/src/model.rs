//! Samples, activations, hypotheses and the loss/truncation primitives.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, pairwise_sum};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegularityParams {
    /// Sup bound on the activation (labels are truncated to `[-b, b]`).
    pub b: f64,
    /// Bound on the Gaussian L2 norm of the derivative.
    pub l: f64,
    pub eps: f64,
}

impl RegularityParams {
    pub fn new(b: f64, l: f64, eps: f64) -> Result<Self> {
        for (name, v) in [("B", b), ("L", l), ("eps", eps)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParam(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self { b, l, eps })
    }

    /// Default Lipschitz bound for the fitted activation.
    pub fn beta(&self) -> f64 {
        self.b * self.l / libm::sqrt(self.eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SmoothKind {
    Logistic,
    Tanh,
    Erf,
}

/// Monotone link functions. Derivatives at kinks are right derivatives.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Activation {
    Identity,
    /// `max(0, z + bias)`
    GeneralRelu {
        bias: f64,
    },
    /// `1{z + bias >= 0}`
    BiasedThreshold {
        bias: f64,
    },
    /// `amplitude * h(slope * (z + shift))` with `h` one of the smooth kinds.
    BoundedSmooth {
        kind: SmoothKind,
        amplitude: f64,
        slope: f64,
        shift: f64,
    },
    /// Linear interpolation through `(knots, values)`, flat outside.
    PiecewiseLinear {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
    Scaled {
        factor: f64,
        inner: Box<Activation>,
    },
}

impl Activation {
    pub fn relu() -> Self {
        Activation::GeneralRelu { bias: 0.0 }
    }

    /// Identity clamped to `[-b, b]`.
    pub fn clamped_identity(b: f64) -> Self {
        Activation::PiecewiseLinear { knots: alloc::vec![-b, b], values: alloc::vec![-b, b] }
    }

    pub fn piecewise_linear(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::InvalidParam("knots and values must be nonempty and equally long".into()));
        }
        for i in 1..knots.len() {
            if !(knots[i] > knots[i - 1]) {
                return Err(Error::InvalidParam("knots must be strictly increasing".into()));
            }
            if values[i] < values[i - 1] {
                return Err(Error::InvalidParam("values must be non-decreasing".into()));
            }
        }
        Ok(Activation::PiecewiseLinear { knots, values })
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::GeneralRelu { bias } => (z + bias).max(0.0),
            Activation::BiasedThreshold { bias } => {
                if z + bias >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::BoundedSmooth { kind, amplitude, slope, shift } => {
                let u = slope * (z + shift);
                amplitude
                    * match kind {
                        SmoothKind::Logistic => 1.0 / (1.0 + libm::exp(-u)),
                        SmoothKind::Tanh => libm::tanh(u),
                        SmoothKind::Erf => libm::erf(u),
                    }
            }
            Activation::PiecewiseLinear { knots, values } => interp_flat(knots, values, z),
            Activation::Scaled { factor, inner } => factor * inner.eval(z),
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::GeneralRelu { bias } => {
                if z + bias >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            // Zero almost everywhere; the jump itself is not representable.
            Activation::BiasedThreshold { .. } => 0.0,
            Activation::BoundedSmooth { kind, amplitude, slope, shift } => {
                let u = slope * (z + shift);
                amplitude
                    * slope
                    * match kind {
                        SmoothKind::Logistic => {
                            let s = 1.0 / (1.0 + libm::exp(-u));
                            s * (1.0 - s)
                        }
                        SmoothKind::Tanh => {
                            let t = libm::tanh(u);
                            1.0 - t * t
                        }
                        SmoothKind::Erf => 2.0 / libm::sqrt(core::f64::consts::PI) * libm::exp(-u * u),
                    }
            }
            Activation::PiecewiseLinear { knots, values } => {
                let k = knots.partition_point(|&a| a <= z);
                if k == 0 || k == knots.len() {
                    0.0
                } else {
                    (values[k] - values[k - 1]) / (knots[k] - knots[k - 1])
                }
            }
            Activation::Scaled { factor, inner } => factor * inner.derivative(z),
        }
    }

    /// Points where the activation or its derivative is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Activation::Identity | Activation::BoundedSmooth { .. } => Vec::new(),
            Activation::GeneralRelu { bias } | Activation::BiasedThreshold { bias } => alloc::vec![-bias],
            Activation::PiecewiseLinear { knots, .. } => knots.clone(),
            Activation::Scaled { inner, .. } => inner.breakpoints(),
        }
    }

    /// False when the derivative has a point mass (jumps), so `E[σ'²]` is infinite.
    pub fn derivative_is_square_integrable(&self) -> bool {
        match self {
            Activation::BiasedThreshold { .. } => false,
            Activation::Scaled { inner, .. } => inner.derivative_is_square_integrable(),
            _ => true,
        }
    }
}

/// Linear interpolation with constant extension; `knots` non-decreasing.
pub fn interp_flat(knots: &[f64], values: &[f64], z: f64) -> f64 {
    let n = knots.len();
    if z <= knots[0] {
        return values[0];
    }
    if z >= knots[n - 1] {
        return values[n - 1];
    }
    let k = knots.partition_point(|&a| a <= z);
    let (z0, z1) = (knots[k - 1], knots[k]);
    let (v0, v1) = (values[k - 1], values[k]);
    if z1 == z0 {
        return v1;
    }
    v0 + (v1 - v0) * (z - z0) / (z1 - z0)
}

/// Labeled samples with standard-normal covariates, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParam("dimension must be positive".into()));
        }
        if x.len() != dim * y.len() {
            return Err(Error::DimMismatch { expected: dim * y.len(), got: x.len() });
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("samples must be finite".into()));
        }
        Ok(Self { dim, x, y })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    pub fn with_labels(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.dim, self.x.clone(), y)
    }

    /// Contiguous sample range `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self { dim: self.dim, x: self.x[start * self.dim..end * self.dim].to_vec(), y: self.y[start..end].to_vec() }
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.x(i));
            y.push(self.y[i]);
        }
        Self { dim: self.dim, x, y }
    }

    /// Projections `w·x_i`.
    pub fn project(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: w.len() });
        }
        Ok(self.x.chunks_exact(self.dim).map(|xi| dot(xi, w)).collect())
    }
}

/// `sign(y) min(|y|, b)` applied to every label.
pub fn truncate_labels(data: &Dataset, b: f64) -> Dataset {
    let y = data.ys().iter().map(|&y| y.clamp(-b, b)).collect();
    Dataset { dim: data.dim, x: data.x.clone(), y }
}

/// Learner output: a unit direction and a monotone piecewise-linear link.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Hypothesis {
    pub w: Vec<f64>,
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub beta: f64,
    #[cfg_attr(feature = "serde", serde(rename = "B"))]
    pub b: f64,
}

impl Hypothesis {
    /// Constant predictor `c` (the direction is irrelevant; `e_1` is stored).
    pub fn constant(dim: usize, c: f64, beta: f64, b: f64) -> Self {
        let mut w = alloc::vec![0.0; dim];
        w[0] = 1.0;
        Self { w, knots: alloc::vec![0.0], values: alloc::vec![c], beta, b }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn is_constant(&self) -> bool {
        self.values.first() == self.values.last()
    }

    pub fn link(&self, z: f64) -> f64 {
        interp_flat(&self.knots, &self.values, z)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.link(dot(&self.w, x))
    }
}

/// Mean of `(u(w·x) - y)^2`, pairwise-summed.
pub fn squared_loss(data: &Dataset, hyp: &Hypothesis) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if hyp.dim() != data.dim() {
        return Err(Error::DimMismatch { expected: data.dim(), got: hyp.dim() });
    }
    let r: Vec<f64> = (0..data.len())
        .map(|i| {
            let e = hyp.predict(data.x(i)) - data.y(i);
            e * e
        })
        .collect();
    Ok(pairwise_sum(&r) / data.len() as f64)
}

/// Mean of `(σ(w·x) - y)^2` for a known activation.
pub fn activation_loss(data: &Dataset, w: &[f64], sigma: &Activation) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let z = data.project(w)?;
    let r: Vec<f64> = z
        .iter()
        .zip(data.ys())
        .map(|(&zi, &yi)| {
            let e = sigma.eval(zi) - yi;
            e * e
        })
        .collect();
    Ok(pairwise_sum(&r) / data.len() as f64)
}
