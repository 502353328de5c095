//! Band-conditioned gradient statistics, the spectral matrix built from them,
//! and the random-sign descent loop over its top eigenvector.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{dot, matvec, norm, normalize, project_out, sq};
use crate::model::{Dataset, RegularityParams};
use crate::partition::BandPartition;
use crate::rng::{stream, Purpose};

/// Per-band empirical means `ĝ_j = (1/N) Σ y (x - (w·x) w) 1{w·x ∈ E_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandStatistics {
    pub dim: usize,
    pub w: Vec<f64>,
    /// Band-major, `len() * dim` entries.
    pub g_hat: Vec<f64>,
    pub counts: Vec<u32>,
}

impl BandStatistics {
    pub fn band(&self, j: usize) -> &[f64] {
        &self.g_hat[j * self.dim..(j + 1) * self.dim]
    }
}

/// Reusable scratch for repeated statistics passes over one dataset. Each
/// band gets a compact slot on first touch, so the sums stay proportional to
/// the number of occupied bands however fine the partition is.
struct Accumulator {
    /// Slot of each band, `u32::MAX` when untouched.
    slot: Vec<u32>,
    /// Band of each slot, in first-touch order.
    bands: Vec<u32>,
    /// `dim + 1` entries per slot: `Σ y x` then `Σ y (w·x)`.
    sums: Vec<f64>,
    counts: Vec<u32>,
}

impl Accumulator {
    fn new() -> Self {
        Self { slot: Vec::new(), bands: Vec::new(), sums: Vec::new(), counts: Vec::new() }
    }

    fn pass(&mut self, data: &Dataset, w: &[f64], partition: &BandPartition) {
        let d = data.dim();
        if self.slot.len() != partition.len() {
            self.slot = vec![u32::MAX; partition.len()];
        }
        for &j in &self.bands {
            self.slot[j as usize] = u32::MAX;
        }
        self.bands.clear();
        self.sums.clear();
        self.counts.clear();
        for (x, &y) in data.xs().chunks_exact(d).zip(data.ys()) {
            let z = dot(x, w);
            let Some(j) = partition.band_of(z) else { continue };
            let mut s = self.slot[j];
            if s == u32::MAX {
                s = self.bands.len() as u32;
                self.slot[j] = s;
                self.bands.push(j as u32);
                self.sums.resize(self.sums.len() + d + 1, 0.0);
                self.counts.push(0);
            }
            let s = s as usize;
            let acc = &mut self.sums[s * (d + 1)..(s + 1) * (d + 1)];
            for (a, xv) in acc.iter_mut().zip(x) {
                *a += y * xv;
            }
            acc[d] += y * z;
            self.counts[s] += 1;
        }
    }

    /// Calls `f(j, ĝ_j, count)` for every nonempty band in first-touch order,
    /// with `ĝ_j` already projected off `w`.
    fn for_each_band(&self, data: &Dataset, w: &[f64], mut f: impl FnMut(usize, &[f64], u32)) {
        let d = data.dim();
        let n = data.len() as f64;
        let mut g = vec![0.0; d];
        for (s, &j) in self.bands.iter().enumerate() {
            let acc = &self.sums[s * (d + 1)..(s + 1) * (d + 1)];
            for k in 0..d {
                g[k] = (acc[k] - acc[d] * w[k]) / n;
            }
            project_out(&mut g, w);
            f(j as usize, &g, self.counts[s]);
        }
    }

    fn matrix(&self, data: &Dataset, w: &[f64], partition: &BandPartition) -> Vec<f64> {
        let d = data.dim();
        let mut m = vec![0.0; d * d];
        self.for_each_band(data, w, |j, g, _| {
            let inv_p = 1.0 / partition.band_probs[j];
            // Full rows rather than a triangle: the inner zip vectorizes.
            for (row, &ga) in m.chunks_exact_mut(d).zip(g) {
                let ga = ga * inv_p;
                row.iter_mut().zip(g).for_each(|(r, &gb)| *r += ga * gb);
            }
        });
        // Symmetrize the rounding.
        for a in 0..d {
            for b in 0..a {
                let v = 0.5 * (m[a * d + b] + m[b * d + a]);
                m[a * d + b] = v;
                m[b * d + a] = v;
            }
        }
        m
    }
}

fn check_unit(w: &[f64], dim: usize) -> Result<()> {
    if w.len() != dim {
        return Err(Error::DimMismatch { expected: dim, got: w.len() });
    }
    if libm::fabs(norm(w) - 1.0) > 1e-9 {
        return Err(Error::InvalidParam(alloc::format!("direction must be unit norm, got {}", norm(w))));
    }
    Ok(())
}

pub fn compute_band_statistics(data: &Dataset, w: &[f64], partition: &BandPartition) -> Result<BandStatistics> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    check_unit(w, data.dim())?;
    let d = data.dim();
    let mut acc = Accumulator::new();
    acc.pass(data, w, partition);
    let mut g_hat = vec![0.0; d * partition.len()];
    let mut counts = vec![0; partition.len()];
    acc.for_each_band(data, w, |j, g, c| {
        g_hat[j * d..(j + 1) * d].copy_from_slice(g);
        counts[j] = c;
    });
    Ok(BandStatistics { dim: d, w: w.to_vec(), g_hat, counts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub vector: Vec<f64>,
    pub value: f64,
    pub second: f64,
    /// Set when the matrix vanishes on the complement of `w`.
    pub degenerate: bool,
    pub iterations: usize,
}

impl EigenPair {
    pub fn gap(&self) -> f64 {
        self.value - self.second
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMatrix {
    pub dim: usize,
    /// Row-major symmetric `dim * dim` matrix.
    pub m: Vec<f64>,
    pub top_eigvec: Vec<f64>,
    pub top_eigval: f64,
    pub second_eigval: f64,
    pub degenerate: bool,
}

/// `Σ_j ĝ_j ĝ_jᵀ / Pr[z ∈ E_j]` with its top eigenpair on the complement of `w`.
pub fn build_spectral_matrix(stats: &BandStatistics, partition: &BandPartition, seed: u64) -> Result<SpectralMatrix> {
    let d = stats.dim;
    let mut m = vec![0.0; d * d];
    for (j, &p) in partition.band_probs.iter().enumerate() {
        if stats.counts[j] == 0 {
            continue;
        }
        let g = stats.band(j);
        for a in 0..d {
            for b in a..d {
                m[a * d + b] += g[a] * g[b] / p;
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            m[a * d + b] = m[b * d + a];
        }
    }
    let eig = top_eigenpair(&m, &stats.w, seed)?;
    Ok(SpectralMatrix {
        dim: d,
        m,
        top_eigvec: eig.vector,
        top_eigval: eig.value,
        second_eigval: eig.second,
        degenerate: eig.degenerate,
    })
}

const MAX_POWER_ITERS: usize = 10_000;
const RAYLEIGH_TOL: f64 = 1e-10;

fn random_unit_orthogonal(d: usize, avoid: &[&[f64]], seed: u64, index: u64) -> Option<Vec<f64>> {
    let mut rng = stream(seed, Purpose::PowerStart, index);
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for u in avoid {
            project_out(&mut v, u);
        }
        if normalize(&mut v).is_ok() {
            return Some(v);
        }
    }
    None
}

/// Power iteration restricted to the complement of `avoid`. Returns
/// `(vector, rayleigh, iterations, converged)`, or `None` when the matrix
/// vanishes there.
fn restricted_power(m: &[f64], avoid: &[&[f64]], start: Vec<f64>) -> Option<(Vec<f64>, f64, usize, bool, f64)> {
    let d = start.len();
    let mut v = start;
    let mut y = vec![0.0; d];
    let mut lambda = f64::NAN;
    let mut last_change = f64::INFINITY;
    for it in 1..=MAX_POWER_ITERS {
        matvec(m, &v, &mut y);
        for u in avoid {
            project_out(&mut y, u);
        }
        let rq = dot(&v, &y);
        let ny = norm(&y);
        if ny == 0.0 || !ny.is_finite() {
            return None;
        }
        v.iter_mut().zip(&y).for_each(|(a, b)| *a = b / ny);
        last_change = libm::fabs(rq - lambda);
        let converged = last_change <= RAYLEIGH_TOL * libm::fabs(rq);
        lambda = rq;
        if converged {
            // A few polishing steps tighten the vector once the quotient settles.
            for _ in 0..200 {
                matvec(m, &v, &mut y);
                for u in avoid {
                    project_out(&mut y, u);
                }
                let ny = norm(&y);
                if ny == 0.0 {
                    break;
                }
                let delta: f64 = v.iter().zip(&y).map(|(a, b)| sq(a - b / ny)).sum();
                v.iter_mut().zip(&y).for_each(|(a, b)| *a = b / ny);
                if delta < 1e-26 {
                    break;
                }
            }
            matvec(m, &v, &mut y);
            lambda = dot(&v, &y);
            return Some((v, lambda, it, true, last_change));
        }
    }
    Some((v, lambda, MAX_POWER_ITERS, false, last_change))
}

/// Top eigenpair of a symmetric PSD matrix on the complement of the unit
/// vector `w`, plus the second eigenvalue there (by deflation).
pub fn top_eigenpair(m: &[f64], w: &[f64], seed: u64) -> Result<EigenPair> {
    let d = w.len();
    if m.len() != d * d {
        return Err(Error::DimMismatch { expected: d * d, got: m.len() });
    }
    let degenerate = |vector: Vec<f64>| EigenPair { vector, value: 0.0, second: 0.0, degenerate: true, iterations: 0 };
    let Some(start) = random_unit_orthogonal(d, &[w], seed, 0) else {
        // d == 1: nothing is orthogonal to w.
        return Ok(degenerate(vec![0.0; d]));
    };
    let Some((v, value, iterations, converged, last_change)) = restricted_power(m, &[w], start.clone()) else {
        return Ok(degenerate(start));
    };
    if !converged {
        return Err(Error::NoConvergence { iters: iterations, rayleigh: value, last_change });
    }
    let second = match random_unit_orthogonal(d, &[w, &v], seed, 1) {
        Some(s) => restricted_power(m, &[w, &v], s).map_or(0.0, |r| r.1),
        None => 0.0,
    };
    Ok(EigenPair { vector: v, value, second, degenerate: false, iterations })
}

/// `normalize(w - eta v)`; with `v ⊥ w` the norm before normalizing is at least 1.
pub fn spectral_step(w: &[f64], v: &[f64], eta: f64) -> Vec<f64> {
    let mut out: Vec<f64> = w.iter().zip(v).map(|(a, b)| a - eta * b).collect();
    let n = norm(&out);
    out.iter_mut().for_each(|x| *x /= n);
    out
}

/// Step-size schedule `φ_t = θ̄ decay^t`, `η_t = step_fraction · sin φ_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Schedule {
    pub decay: f64,
    pub step_fraction: f64,
    /// Inner iterations per restart.
    pub iterations: usize,
    pub restarts: usize,
}

pub const DEFAULT_RESTART_CAP: usize = 4096;

impl Schedule {
    /// `T = ⌈8 ln(max(L, 2)/ε)⌉`, `K = min(⌈2^T ln 100⌉, restart_cap)`.
    pub fn from_params(params: &RegularityParams, restart_cap: usize) -> Self {
        let t = libm::ceil(8.0 * libm::log(params.l.max(2.0) / params.eps)).max(1.0) as usize;
        let k = libm::ceil(libm::exp2(t as f64) * libm::log(100.0));
        let restarts = if k >= restart_cap as f64 { restart_cap } else { k as usize }.max(1);
        Self { decay: 1.0 - 1.0 / 128.0, step_fraction: 1.0 / 8.0, iterations: t, restarts }
    }

    pub fn phi(&self, theta_bar: f64, t: usize) -> f64 {
        theta_bar * libm::pow(self.decay, t as f64)
    }

    pub fn eta(&self, theta_bar: f64, t: usize) -> f64 {
        self.step_fraction * libm::sin(self.phi(theta_bar, t))
    }
}

/// How the sign of the eigenvector is chosen at each step.
#[derive(Debug, Clone, PartialEq)]
pub enum SignRule {
    /// Fair coin from the restart's stream.
    Random,
    /// Always step towards the given direction. Only meaningful when the
    /// target is known, as in probes of the contraction argument.
    Oracle(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    pub restart: usize,
    pub t: usize,
    pub w: Vec<f64>,
    pub sign: i8,
    pub eta: f64,
    pub phi: f64,
    pub top_eigval: f64,
    pub eigengap: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpectralOutput {
    /// Every iterate of every restart, restart-major, starting points included.
    pub iterates: Vec<Vec<f64>>,
    pub trace: Vec<TraceRecord>,
    pub degenerate_steps: usize,
}

/// Computes spectral matrices at arbitrary directions over a fixed dataset,
/// memoizing results by the exact bits of `w`.
pub struct SpectralEngine<'a> {
    data: &'a Dataset,
    /// The data reordered by projection on the first direction queried.
    /// Nearby directions then visit bands almost in order, which keeps the
    /// accumulation cache-friendly on fine partitions.
    sorted: Option<Dataset>,
    partition: &'a BandPartition,
    seed: u64,
    acc: Accumulator,
    cache: BTreeMap<Vec<u64>, EigenPair>,
}

impl<'a> SpectralEngine<'a> {
    pub fn new(data: &'a Dataset, partition: &'a BandPartition, seed: u64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        Ok(Self { data, sorted: None, partition, seed, acc: Accumulator::new(), cache: BTreeMap::new() })
    }

    /// The spectral matrix at `w` (row-major).
    pub fn matrix(&mut self, w: &[f64]) -> Result<Vec<f64>> {
        check_unit(w, self.data.dim())?;
        let data = self.sorted.get_or_insert_with(|| {
            let z = self.data.project(w).unwrap_or_default();
            let mut order: Vec<usize> = (0..self.data.len()).collect();
            order.sort_unstable_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
            self.data.select(&order)
        });
        self.acc.pass(data, w, self.partition);
        Ok(self.acc.matrix(data, w, self.partition))
    }

    pub fn eigen(&mut self, w: &[f64]) -> Result<EigenPair> {
        let key: Vec<u64> = w.iter().map(|x| x.to_bits()).collect();
        if let Some(e) = self.cache.get(&key) {
            return Ok(e.clone());
        }
        let m = self.matrix(w)?;
        let e = top_eigenpair(&m, w, self.seed)?;
        if self.cache.len() > 4096 {
            self.cache.clear();
        }
        self.cache.insert(key, e.clone());
        Ok(e)
    }

    /// `restarts` runs of `iterations` steps from `w0` with target angle `theta_bar`.
    pub fn optimize(
        &mut self,
        theta_bar: f64,
        w0: &[f64],
        schedule: &Schedule,
        rule: &SignRule,
        record_trace: bool,
    ) -> Result<SpectralOutput> {
        self.optimize_run(0, theta_bar, w0, schedule, rule, record_trace)
    }

    /// As [`optimize`](Self::optimize), drawing signs from the streams of run
    /// `run` so several runs on one engine stay independent.
    pub fn optimize_run(
        &mut self,
        run: u64,
        theta_bar: f64,
        w0: &[f64],
        schedule: &Schedule,
        rule: &SignRule,
        record_trace: bool,
    ) -> Result<SpectralOutput> {
        if !(theta_bar > 0.0 && theta_bar <= core::f64::consts::FRAC_PI_2 + 1e-12) {
            return Err(Error::InvalidParam(alloc::format!("theta_bar must lie in (0, π/2], got {theta_bar}")));
        }
        check_unit(w0, self.data.dim())?;
        let mut out = SpectralOutput::default();
        for k in 0..schedule.restarts {
            let mut rng = stream(self.seed, Purpose::Signs, (run << 32) | k as u64);
            let mut w = w0.to_vec();
            out.iterates.push(w.clone());
            for t in 0..schedule.iterations {
                let eig = self.eigen(&w)?;
                let phi = schedule.phi(theta_bar, t);
                let eta = schedule.eta(theta_bar, t);
                let sign: i8 = match rule {
                    _ if eig.degenerate => 0,
                    SignRule::Random => {
                        if rng.random::<bool>() {
                            1
                        } else {
                            -1
                        }
                    }
                    // Stepping along -v moves towards the target when v·target < 0.
                    SignRule::Oracle(target) => {
                        if dot(&eig.vector, target) <= 0.0 {
                            1
                        } else {
                            -1
                        }
                    }
                };
                if record_trace {
                    out.trace.push(TraceRecord {
                        restart: k,
                        t,
                        w: w.clone(),
                        sign,
                        eta,
                        phi,
                        top_eigval: eig.value,
                        eigengap: eig.gap(),
                        degenerate: eig.degenerate,
                    });
                }
                if eig.degenerate {
                    out.degenerate_steps += 1;
                } else {
                    let v: Vec<f64> = eig.vector.iter().map(|x| *x * sign as f64).collect();
                    w = spectral_step(&w, &v, eta);
                }
                out.iterates.push(w.clone());
            }
        }
        Ok(out)
    }
}

/// One spectral run over a dataset; see [`SpectralEngine::optimize`].
#[allow(clippy::too_many_arguments)]
pub fn spectral_optimization(
    data: &Dataset,
    partition: &BandPartition,
    theta_bar: f64,
    w0: &[f64],
    schedule: &Schedule,
    seed: u64,
    rule: &SignRule,
    record_trace: bool,
) -> Result<SpectralOutput> {
    SpectralEngine::new(data, partition, seed)?.optimize(theta_bar, w0, schedule, rule, record_trace)
}
