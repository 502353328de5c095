//! Uniform band grid on the projection `w·x`, with exact Gaussian band masses.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gauss::{interval_prob, normal_quantile, two_sided_tail};
use crate::model::RegularityParams;

pub const DEFAULT_BAND_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BandPartition {
    /// Band width.
    pub delta: f64,
    /// Half-width of the covered interval `[-m_prime, m_prime]`.
    pub m_prime: f64,
    /// `Pr[z ∈ [a_j, a_{j+1})]` for each band.
    pub band_probs: Vec<f64>,
}

impl BandPartition {
    /// Width `ε²/(B²L²)`, covering every `z` except a two-sided tail of the same mass.
    pub fn from_params(params: &RegularityParams, cap: usize) -> Result<Self> {
        let delta = crate::linalg::sq(params.eps / (params.b * params.l));
        Self::with_tail(delta, delta, cap)
    }

    /// Bands of width `delta` on the smallest half-grid-aligned `[-M', M']`
    /// with `Pr[|z| >= M'] <= tail`.
    pub fn with_tail(delta: f64, tail: f64, cap: usize) -> Result<Self> {
        if !(delta > 0.0) || !(tail > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParam(alloc::format!("band width {delta} and tail {tail} must be positive")));
        }
        let m_star = if tail >= 1.0 { 0.0 } else { -normal_quantile(0.5 * tail) };
        let ratio = 2.0 * m_star / delta;
        if !(ratio < cap as f64) {
            let needed = if ratio.is_finite() { libm::ceil(ratio) as usize } else { usize::MAX };
            return Err(Error::TooManyBands { needed, cap });
        }
        let mut count = (libm::ceil(ratio) as usize).max(1);
        // The quantile is accurate to a few ulps; step up if it landed just short.
        while two_sided_tail(0.5 * delta * count as f64) > tail {
            count += 1;
        }
        if count > cap {
            return Err(Error::TooManyBands { needed: count, cap });
        }
        Self::uniform(delta, count)
    }

    /// `count` bands of width `delta` centred on zero.
    pub fn uniform(delta: f64, count: usize) -> Result<Self> {
        if count == 0 || !(delta > 0.0) {
            return Err(Error::InvalidParam("need at least one band of positive width".into()));
        }
        let m_prime = 0.5 * delta * count as f64;
        let band_probs = (0..count)
            .map(|j| {
                let a = -m_prime + delta * j as f64;
                interval_prob(a, a + delta)
            })
            .collect();
        Ok(Self { delta, m_prime, band_probs })
    }

    pub fn len(&self) -> usize {
        self.band_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.band_probs.is_empty()
    }

    /// Left edge of band `j`; `edge(len())` is `m_prime`.
    pub fn edge(&self, j: usize) -> f64 {
        -self.m_prime + self.delta * j as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.len()).map(|j| self.edge(j)).collect()
    }

    /// Index of the half-open band containing `z`, if any.
    #[inline]
    pub fn band_of(&self, z: f64) -> Option<usize> {
        let t = (z + self.m_prime) / self.delta;
        if t >= 0.0 {
            let j = t as usize;
            if j < self.band_probs.len() {
                // Guard the floor against rounding right at an edge.
                if z < self.edge(j) {
                    return j.checked_sub(1);
                }
                if j + 1 < self.band_probs.len() && z >= self.edge(j + 1) {
                    return Some(j + 1);
                }
                return Some(j);
            }
        }
        None
    }
}
