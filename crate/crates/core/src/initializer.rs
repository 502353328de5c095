//! Starting directions from thresholded labels: each threshold turns the
//! regression problem into a halfspace problem whose normal is `w*`.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gauss::normal_quantile;
use crate::linalg::{dot, normalize, project_out};
use crate::model::{Dataset, RegularityParams};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrid {
    pub thresholds: Vec<f64>,
}

/// `t_i = i √ε` for `i = 1 ..= ⌈B/√ε⌉ + 1`.
pub fn build_threshold_grid(params: &RegularityParams) -> ThresholdGrid {
    let step = libm::sqrt(params.eps);
    let ratio = params.b / step;
    // Shave rounding noise so exact ratios such as 1/0.2 do not gain a step.
    let count = libm::ceil(ratio * (1.0 - 1e-12)) as usize + 1;
    ThresholdGrid { thresholds: (1..=count).map(|i| i as f64 * step).collect() }
}

/// Covariates with labels `1{y >= t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceInstance {
    pub data: Dataset,
    pub positive_rate: f64,
}

pub fn transform_labels(data: &Dataset, t: f64) -> Result<HalfspaceInstance> {
    let labels: Vec<f64> = data.ys().iter().map(|&y| if y >= t { 1.0 } else { 0.0 }).collect();
    let positive_rate = if labels.is_empty() { 0.0 } else { labels.iter().sum::<f64>() / labels.len() as f64 };
    Ok(HalfspaceInstance { data: data.with_labels(labels)?, positive_rate })
}

/// A learner for `1{w*·x >= M}` under Gaussian covariates and label flips.
pub trait HalfspaceLearner {
    fn learn(&self, instance: &HalfspaceInstance, eps: f64, seed: u64) -> Result<Vec<f64>>;
}

/// Chow vector followed by projected stochastic subgradient descent on
/// `mean |ỹ - s((w·x - b)/τ)|` with a logistic `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChowRefine {
    pub temperature: f64,
    pub passes: usize,
    pub step: f64,
    /// Samples drawn for each subgradient step.
    pub batch: usize,
}

impl Default for ChowRefine {
    fn default() -> Self {
        Self { temperature: 0.1, passes: 200, step: 0.1, batch: 8192 }
    }
}

/// `normalize(mean (ỹ - p̂) x)`; centring leaves the population vector unchanged.
pub fn chow_direction(instance: &HalfspaceInstance) -> Result<Vec<f64>> {
    let data = &instance.data;
    let d = data.dim();
    let mut c = alloc::vec![0.0; d];
    for i in 0..data.len() {
        let weight = data.y(i) - instance.positive_rate;
        c.iter_mut().zip(data.x(i)).for_each(|(a, x)| *a += weight * x);
    }
    normalize(&mut c)?;
    Ok(c)
}

impl HalfspaceLearner for ChowRefine {
    fn learn(&self, instance: &HalfspaceInstance, _eps: f64, seed: u64) -> Result<Vec<f64>> {
        let p = instance.positive_rate;
        let data = &instance.data;
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        if p <= 0.0 || p >= 1.0 {
            return Err(Error::UninformativeThreshold { rate: p });
        }
        let mut w = chow_direction(instance)?;
        let offset = normal_quantile(1.0 - p);
        let d = data.dim();
        let n = data.len();
        let batch = self.batch.min(n).max(1);
        let mut rng = stream(seed, Purpose::Halfspace, 0);
        let mut grad = alloc::vec![0.0; d];
        for pass in 1..=self.passes {
            grad.fill(0.0);
            for _ in 0..batch {
                let i = rng.random_range(0..n);
                let x = data.x(i);
                let u = (dot(&w, x) - offset) / self.temperature;
                let s = 1.0 / (1.0 + libm::exp(-u));
                // d/dw |ỹ - s| = -sign(ỹ - s) s(1-s)/τ x, and sign(ỹ - s) = 2ỹ - 1.
                let coef = (1.0 - 2.0 * data.y(i)) * s * (1.0 - s) / self.temperature;
                grad.iter_mut().zip(x).for_each(|(g, xv)| *g += coef * xv);
            }
            project_out(&mut grad, &w);
            let eta = self.step / libm::sqrt(pass as f64) / batch as f64;
            w.iter_mut().zip(&grad).for_each(|(a, g)| *a -= eta * g);
            normalize(&mut w)?;
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitOutput {
    pub vectors: Vec<Vec<f64>>,
    /// Threshold that produced each vector.
    pub thresholds: Vec<f64>,
    /// Thresholds skipped as uninformative, with their positive rates.
    pub skipped: Vec<(f64, f64)>,
}

/// One candidate direction per informative threshold.
pub fn initialize(
    data: &Dataset,
    params: &RegularityParams,
    learner: &dyn HalfspaceLearner,
    seed: u64,
) -> Result<InitOutput> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let grid = build_threshold_grid(params);
    let mut out = InitOutput { vectors: Vec::new(), thresholds: Vec::new(), skipped: Vec::new() };
    for (i, &t) in grid.thresholds.iter().enumerate() {
        let inst = transform_labels(data, t)?;
        match learner.learn(&inst, params.eps, crate::rng::child_seed(seed, Purpose::Halfspace, i as u64)) {
            Ok(w) => {
                out.vectors.push(w);
                out.thresholds.push(t);
            }
            Err(Error::UninformativeThreshold { rate }) => out.skipped.push((t, rate)),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
