//! Synthetic Gaussian single-index data with label corruption, and Monte
//! Carlo probes of the population quantities behind the spectral step.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gauss::GaussOracle;
use crate::initializer::HalfspaceInstance;
use crate::linalg::{angle, dot, normalize, pairwise_sum, project_out, sq, sym_eigen};
use crate::model::{Activation, Dataset};
use crate::partition::BandPartition;
use crate::rng::{child_seed, stream, Purpose};

/// Which projection an adversarial band is placed on.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BandTarget {
    Truth,
    Direction(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NoiseModel {
    None,
    /// Each label independently, with probability `rate`, shifted by `±magnitude`.
    ObliviousBounded {
        rate: f64,
        magnitude: f64,
    },
    /// Exactly `⌊rate n⌋` labels with projection near `center` are pushed to
    /// the bound on the side opposite their clean value.
    AdversarialBand {
        rate: f64,
        target: BandTarget,
        center: f64,
        half_width: f64,
    },
    /// Exactly `⌊rate n⌋` labels from the upper tail of `w*·x` change sign.
    SignFlipTail {
        rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroundTruth {
    pub w_star: Vec<f64>,
    pub sigma: Activation,
    pub noise: NoiseModel,
    /// Labels are truncated to `[-b, b]` after corruption.
    pub b: f64,
}

impl GroundTruth {
    pub fn new(w_star: &[f64], sigma: Activation, noise: NoiseModel, b: f64) -> Result<Self> {
        let rate = match &noise {
            NoiseModel::None => 0.0,
            NoiseModel::ObliviousBounded { rate, .. }
            | NoiseModel::AdversarialBand { rate, .. }
            | NoiseModel::SignFlipTail { rate } => *rate,
        };
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidParam(alloc::format!("corruption rate must lie in [0, 1], got {rate}")));
        }
        if !(b > 0.0) {
            return Err(Error::InvalidParam("truncation bound must be positive".into()));
        }
        let mut w = w_star.to_vec();
        normalize(&mut w)?;
        Ok(Self { w_star: w, sigma, noise, b })
    }

    pub fn dim(&self) -> usize {
        self.w_star.len()
    }
}

/// Output of [`generate_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub data: Dataset,
    /// Sorted indices of corrupted samples.
    pub corrupted: Vec<usize>,
}

const BLOCK_ROWS: usize = 4096;

/// `n` standard-normal rows in dimension `d`, one derived stream per block.
pub fn gaussian_rows(n: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut x = vec![0.0; n * d];
    for (b, chunk) in x.chunks_mut(BLOCK_ROWS * d).enumerate() {
        let mut rng = stream(seed, Purpose::Covariates, b as u64);
        chunk.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
    }
    x
}

pub fn random_unit(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if normalize(&mut v).is_ok() {
            return v;
        }
    }
}

/// Unit vector at angle `theta` from the unit vector `w`, in a random plane.
pub fn direction_at_angle(w: &[f64], theta: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Probe, u64::MAX);
    let mut u = random_unit(w.len(), &mut rng);
    project_out(&mut u, w);
    if normalize(&mut u).is_err() {
        return w.to_vec();
    }
    let mut out: Vec<f64> = w.iter().zip(&u).map(|(a, b)| libm::cos(theta) * a + libm::sin(theta) * b).collect();
    let _ = normalize(&mut out);
    out
}

pub fn generate(truth: &GroundTruth, n: usize, d: usize, seed: u64) -> Result<Dataset> {
    Ok(generate_detailed(truth, n, d, seed)?.data)
}

pub fn generate_detailed(truth: &GroundTruth, n: usize, d: usize, seed: u64) -> Result<Generated> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParam("n and d must be positive".into()));
    }
    if truth.dim() != d {
        return Err(Error::DimMismatch { expected: d, got: truth.dim() });
    }
    let x = gaussian_rows(n, d, seed);
    let proj: Vec<f64> = x.chunks_exact(d).map(|r| dot(r, &truth.w_star)).collect();
    let mut y: Vec<f64> = proj.iter().map(|&z| truth.sigma.eval(z)).collect();
    let mut rng = stream(seed, Purpose::Noise, 0);
    let mut corrupted = match &truth.noise {
        NoiseModel::None => Vec::new(),
        NoiseModel::ObliviousBounded { rate, magnitude } => {
            let mut idx = Vec::new();
            for (i, yi) in y.iter_mut().enumerate() {
                if rng.random::<f64>() < *rate {
                    *yi += if rng.random::<bool>() { *magnitude } else { -*magnitude };
                    idx.push(i);
                }
            }
            idx
        }
        NoiseModel::AdversarialBand { rate, target, center, half_width } => {
            let k = libm::floor(rate * n as f64) as usize;
            let z: Vec<f64> = match target {
                BandTarget::Truth => proj.clone(),
                BandTarget::Direction(v) => {
                    if v.len() != d {
                        return Err(Error::DimMismatch { expected: d, got: v.len() });
                    }
                    x.chunks_exact(d).map(|r| dot(r, v)).collect()
                }
            };
            let idx = pick_near(&z, *center, *half_width, k, &mut rng);
            for &i in &idx {
                y[i] = if y[i] > 0.0 { -truth.b } else { truth.b };
            }
            idx
        }
        NoiseModel::SignFlipTail { rate } => {
            let k = libm::floor(rate * n as f64) as usize;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_unstable_by(|&a, &b| proj[b].total_cmp(&proj[a]).then(a.cmp(&b)));
            let pool = (2 * k).min(n);
            let chosen: Vec<usize> = sample(&mut rng, pool, k).into_iter().map(|j| order[j]).collect();
            for &i in &chosen {
                y[i] = -y[i];
            }
            chosen
        }
    };
    corrupted.sort_unstable();
    y.iter_mut().for_each(|v| *v = v.clamp(-truth.b, truth.b));
    Ok(Generated { data: Dataset::new(d, x, y)?, corrupted })
}

/// Exactly `k` indices: uniformly among those with `|z - center| <= half_width`,
/// topped up with the nearest others when the band holds fewer than `k`.
fn pick_near(z: &[f64], center: f64, half_width: f64, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_unstable_by(|&a, &b| libm::fabs(z[a] - center).total_cmp(&libm::fabs(z[b] - center)).then(a.cmp(&b)));
    let inside = order.iter().take_while(|&&i| libm::fabs(z[i] - center) <= half_width).count();
    if inside >= k {
        sample(rng, inside, k).into_iter().map(|j| order[j]).collect()
    } else {
        order[..k].to_vec()
    }
}

/// Empirical `E[(y - σ(w*·x))^2]`, an upper bound on the best achievable loss.
pub fn estimate_opt(truth: &GroundTruth, data: &Dataset) -> Result<f64> {
    crate::model::activation_loss(data, &truth.w_star, &truth.sigma)
}

/// Labels `1{w*·x >= m}` with exactly `⌊rate n⌋` flips placed at random
/// among the `2⌊rate n⌋` samples closest to the boundary.
pub fn generate_halfspace(w_star: &[f64], m: f64, rate: f64, n: usize, seed: u64) -> Result<HalfspaceInstance> {
    let d = w_star.len();
    let mut w = w_star.to_vec();
    normalize(&mut w)?;
    let x = gaussian_rows(n, d, seed);
    let z: Vec<f64> = x.chunks_exact(d).map(|r| dot(r, &w)).collect();
    let mut labels: Vec<f64> = z.iter().map(|&t| if t >= m { 1.0 } else { 0.0 }).collect();
    let k = libm::floor(rate * n as f64) as usize;
    let mut rng = stream(seed, Purpose::Noise, 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| libm::fabs(z[a] - m).total_cmp(&libm::fabs(z[b] - m)).then(a.cmp(&b)));
    for j in sample(&mut rng, (2 * k).min(n), k) {
        let i = order[j];
        labels[i] = 1.0 - labels[i];
    }
    let positive_rate = labels.iter().sum::<f64>() / n as f64;
    Ok(HalfspaceInstance { data: Dataset::new(d, x, labels)?, positive_rate })
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeRecord {
    pub theta: f64,
    /// Unit component of `w*` orthogonal to `w`.
    pub v_star: Vec<f64>,
    /// Population matrix estimate (row-major).
    pub matrix: Vec<f64>,
    pub v_star_quadratic: Estimate,
    /// Quadratic forms along random unit directions orthogonal to `w` and `v*`.
    pub orthogonal_quadratic: Vec<Estimate>,
    pub top_correlation: Estimate,
    pub top_eigval: Estimate,
    pub second_eigval: Estimate,
    pub eigengap: Estimate,
    /// `E[y T_{cos θ}σ'(w·x) x^{⊥w}]·w*`.
    pub gradient_correlation: Estimate,
    /// `‖T_{cos θ}σ'‖_{L2}` from quadrature.
    pub smoothed_derivative_norm: f64,
}

/// Quantities that the probe needs from one estimate of the matrix.
struct MatrixSummary {
    vmv: f64,
    orth: Vec<f64>,
    corr: f64,
    top: f64,
    second: f64,
}

fn orthonormal_complement(w: &[f64]) -> Vec<Vec<f64>> {
    let d = w.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for k in 0..d {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        project_out(&mut e, w);
        for b in &basis {
            project_out(&mut e, b);
        }
        if crate::linalg::norm(&e) > 1e-6 {
            let _ = normalize(&mut e);
            basis.push(e);
        }
        if basis.len() == d - 1 {
            break;
        }
    }
    basis
}

fn summarize(m: &[f64], d: usize, basis: &[Vec<f64>], v_star: &[f64], dirs: &[Vec<f64>]) -> MatrixSummary {
    let quad = |u: &[f64]| {
        let mut s = 0.0;
        for a in 0..d {
            for b in 0..d {
                s += u[a] * m[a * d + b] * u[b];
            }
        }
        s
    };
    let k = basis.len();
    let mut reduced = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let mut mu = vec![0.0; d];
            crate::linalg::matvec(m, &basis[j], &mut mu);
            reduced[i * k + j] = dot(&basis[i], &mu);
        }
    }
    let (vals, vecs) = sym_eigen(&reduced, k);
    let mut top_vec = vec![0.0; d];
    for i in 0..k {
        top_vec.iter_mut().zip(&basis[i]).for_each(|(t, b)| *t += vecs[i] * b);
    }
    MatrixSummary {
        vmv: quad(v_star),
        orth: dirs.iter().map(|u| quad(u)).collect(),
        corr: libm::fabs(dot(&top_vec, v_star)),
        top: vals[0],
        second: if k > 1 { vals[1] } else { 0.0 },
    }
}

fn jackknife(full: f64, leave_out: &[f64]) -> Estimate {
    let r = leave_out.len() as f64;
    let mean = leave_out.iter().sum::<f64>() / r;
    let var = (r - 1.0) / r * leave_out.iter().map(|v| sq(v - mean)).sum::<f64>();
    Estimate { value: full, se: libm::sqrt(var) }
}

/// Monte Carlo estimates of the population spectral matrix at `w` and of the
/// quantities the alignment analysis bounds. Samples are drawn in `batches`
/// independent batches; products of band means are taken across distinct
/// batches only, so the matrix estimate is unbiased, and standard errors come
/// from a leave-one-batch-out jackknife.
pub fn population_probe(
    truth: &GroundTruth,
    w: &[f64],
    partition: &BandPartition,
    mc_budget: usize,
    batches: usize,
    seed: u64,
    oracle: &GaussOracle,
) -> Result<ProbeRecord> {
    let d = truth.dim();
    if w.len() != d {
        return Err(Error::DimMismatch { expected: d, got: w.len() });
    }
    if batches < 3 || mc_budget < batches {
        return Err(Error::InvalidParam("need at least three batches with samples".into()));
    }
    let mut w = w.to_vec();
    normalize(&mut w)?;
    let theta = angle(&w, &truth.w_star)?;
    let mut v_star = truth.w_star.clone();
    project_out(&mut v_star, &w);
    normalize(&mut v_star)?;
    let rho = libm::cos(theta);
    let rho_in = rho.clamp(1e-6, 1.0 - 1e-9);

    // T_ρσ' tabulated on a grid and interpolated; exact quadrature per sample
    // would dominate the run time.
    let grid_n = 2001;
    let grid: Vec<f64> = (0..grid_n).map(|i| -8.0 + 16.0 * i as f64 / (grid_n - 1) as f64).collect();
    let smoothed = crate::gauss::Smoothed { oracle, f: &crate::gauss::Derivative(&truth.sigma), rho: rho_in };
    let table: Vec<f64> = grid.iter().map(|&x| crate::gauss::Univariate::eval(&smoothed, x)).collect();
    let smoothed_derivative_norm = oracle.smoothed_derivative_norm(&truth.sigma, rho_in)?;

    let bands = partition.len();
    let per_batch = mc_budget / batches;
    // Per batch and band: mean of y x^{⊥w} 1{band}.
    let mut means = vec![0.0; batches * bands * d];
    let mut grad_batches = vec![0.0; batches];
    for (r, grad) in grad_batches.iter_mut().enumerate() {
        let data = generate(truth, per_batch, d, child_seed(seed, Purpose::Probe, r as u64))?;
        let inv = 1.0 / per_batch as f64;
        let mut gsum = Vec::with_capacity(per_batch);
        for i in 0..per_batch {
            let x = data.x(i);
            let y = data.y(i);
            let z = dot(x, &w);
            let xs = dot(x, &truth.w_star) - z * dot(&w, &truth.w_star);
            gsum.push(y * crate::model::interp_flat(&grid, &table, z) * xs);
            if let Some(j) = partition.band_of(z) {
                let base = (r * bands + j) * d;
                for k in 0..d {
                    means[base + k] += inv * y * (x[k] - z * w[k]);
                }
            }
        }
        *grad = pairwise_sum(&gsum) * inv;
    }

    let mut rng = stream(seed, Purpose::Probe, u64::MAX - 1);
    let dirs: Vec<Vec<f64>> = (0..20)
        .filter_map(|_| {
            let mut u = random_unit(d, &mut rng);
            project_out(&mut u, &w);
            project_out(&mut u, &v_star);
            normalize(&mut u).ok().map(|_| u)
        })
        .collect();
    let basis = orthonormal_complement(&w);

    // Cross-batch products: (S Sᵀ - Σ_r m_r m_rᵀ) / (R(R-1)) per band.
    let build = |skip: Option<usize>| -> Vec<f64> {
        let rr = (batches - usize::from(skip.is_some())) as f64;
        let mut m = vec![0.0; d * d];
        let mut s = vec![0.0; d];
        for j in 0..bands {
            s.fill(0.0);
            let mut own = vec![0.0; d * d];
            for r in (0..batches).filter(|&r| Some(r) != skip) {
                let mr = &means[(r * bands + j) * d..(r * bands + j + 1) * d];
                for a in 0..d {
                    s[a] += mr[a];
                    for b in 0..d {
                        own[a * d + b] += mr[a] * mr[b];
                    }
                }
            }
            let scale = 1.0 / (rr * (rr - 1.0) * partition.band_probs[j]);
            for a in 0..d {
                for b in 0..d {
                    m[a * d + b] += (s[a] * s[b] - own[a * d + b]) * scale;
                }
            }
        }
        m
    };
    let full_m = build(None);
    let full = summarize(&full_m, d, &basis, &v_star, &dirs);
    let loo: Vec<MatrixSummary> = (0..batches).map(|r| summarize(&build(Some(r)), d, &basis, &v_star, &dirs)).collect();
    let pick = |f: &dyn Fn(&MatrixSummary) -> f64| jackknife(f(&full), &loo.iter().map(f).collect::<Vec<_>>());

    let grad_mean = grad_batches.iter().sum::<f64>() / batches as f64;
    let grad_se =
        libm::sqrt(grad_batches.iter().map(|g| sq(g - grad_mean)).sum::<f64>() / ((batches - 1) * batches) as f64);
    Ok(ProbeRecord {
        theta,
        v_star_quadratic: pick(&|s| s.vmv),
        orthogonal_quadratic: (0..dirs.len()).map(|k| pick(&|s| s.orth[k])).collect(),
        top_correlation: pick(&|s| s.corr),
        top_eigval: pick(&|s| s.top),
        second_eigval: pick(&|s| s.second),
        eigengap: pick(&|s| s.top - s.second),
        gradient_correlation: Estimate { value: grad_mean, se: grad_se },
        smoothed_derivative_norm,
        v_star,
        matrix: full_m,
    })
}
