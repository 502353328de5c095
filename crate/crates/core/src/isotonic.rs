//! Monotone Lipschitz least squares along a projection:
//! minimize `Σ (v_i - y_i)^2` subject to `0 <= v_{i+1} - v_i <= β (z_{i+1} - z_i)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{pairwise_sum, sq};
use crate::model::{Dataset, Hypothesis};

#[derive(Debug, Clone, PartialEq)]
pub struct IsoInstance {
    /// Sorted projections.
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    /// Lipschitz bound; `f64::INFINITY` gives plain isotonic regression.
    pub beta: f64,
}

impl IsoInstance {
    pub fn new(z: Vec<f64>, y: Vec<f64>, beta: f64) -> Result<Self> {
        if z.len() != y.len() {
            return Err(Error::DimMismatch { expected: z.len(), got: y.len() });
        }
        if z.is_empty() {
            return Err(Error::EmptyData);
        }
        if !(beta > 0.0) {
            return Err(Error::InvalidParam(alloc::format!("beta must be positive, got {beta}")));
        }
        if z.windows(2).any(|p| !(p[1] >= p[0])) {
            return Err(Error::InvalidParam("projections must be sorted".into()));
        }
        Ok(Self { z, y, beta })
    }

    /// Sort `(z, y)` pairs by projection and build an instance.
    pub fn from_unsorted(z: &[f64], y: &[f64], beta: f64) -> Result<Self> {
        let mut idx: Vec<usize> = (0..z.len()).collect();
        idx.sort_unstable_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
        Self::new(idx.iter().map(|&i| z[i]).collect(), idx.iter().map(|&i| y[i]).collect(), beta)
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Upper bounds on consecutive differences. Caps wider than the label
    /// range can never bind and are reported as infinite.
    pub fn caps(&self) -> Vec<f64> {
        let (lo, hi) = self.y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let range = hi - lo;
        self.z
            .windows(2)
            .map(|p| {
                let gap = p[1] - p[0];
                if gap == 0.0 {
                    0.0
                } else {
                    let c = self.beta * gap;
                    if c > range {
                        f64::INFINITY
                    } else {
                        c
                    }
                }
            })
            .collect()
    }

    pub fn objective(&self, v: &[f64]) -> f64 {
        let r: Vec<f64> = v.iter().zip(&self.y).map(|(a, b)| sq(a - b)).collect();
        pairwise_sum(&r)
    }

    /// Largest constraint violation of `v`.
    pub fn violation(&self, v: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..v.len().saturating_sub(1) {
            let diff = v[i + 1] - v[i];
            worst = worst.max(-diff);
            let gap = self.z[i + 1] - self.z[i];
            if self.beta.is_finite() || gap == 0.0 {
                let cap = if gap == 0.0 { 0.0 } else { self.beta * gap };
                worst = worst.max(diff - cap);
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsoSolution {
    pub v: Vec<f64>,
    pub objective: f64,
}

/// Derivative of the running cost-to-go, kept as knots on either side of its
/// root. Each side stores knots under its own lazy transform:
/// left knots are `(pos, val - al*pos - cl)`, right knots are
/// `(pos - shift, val - ar*pos - cr)` and sit in decreasing position order so
/// the knot nearest the root is on top of both stacks.
struct CostDerivative {
    left: Vec<(f64, f64)>,
    right: Vec<(f64, f64)>,
    al: f64,
    cl: f64,
    ar: f64,
    cr: f64,
    shift: f64,
    slope_left: f64,
    slope_right: f64,
    root: f64,
}

impl CostDerivative {
    fn new(y0: f64) -> Self {
        Self {
            left: Vec::new(),
            right: Vec::new(),
            al: 0.0,
            cl: 0.0,
            ar: 0.0,
            cr: 0.0,
            shift: 0.0,
            slope_left: 2.0,
            slope_right: 2.0,
            root: y0,
        }
    }

    fn left_top(&self) -> Option<(f64, f64)> {
        self.left.last().map(|&(p, v)| (p, v + self.al * p + self.cl))
    }

    fn right_top(&self) -> Option<(f64, f64)> {
        self.right.last().map(|&(sp, v)| {
            let p = sp + self.shift;
            (p, v + self.ar * p + self.cr)
        })
    }

    fn push_left(&mut self, p: f64, val: f64) {
        self.left.push((p, val - self.al * p - self.cl));
    }

    fn push_right(&mut self, p: f64, val: f64) {
        self.right.push((p - self.shift, val - self.ar * p - self.cr));
    }

    /// Replace the cost `f` by `v ↦ min_{u ∈ [v-c, v]} f(u)`: flat on
    /// `[root, root + c]`, the right branch moved right by `c`.
    fn window(&mut self, c: f64) {
        if c == 0.0 {
            return;
        }
        let m = self.root;
        self.push_left(m, 0.0);
        if c.is_infinite() {
            self.right.clear();
            self.ar = 0.0;
            self.cr = 0.0;
            self.shift = 0.0;
            self.slope_right = 0.0;
        } else {
            self.shift += c;
            self.cr -= self.ar * c;
            self.push_right(m + c, 0.0);
        }
    }

    /// Add the derivative of `(v - y)^2` and relocate the root.
    fn add_point(&mut self, y: f64) {
        let old_root = self.root;
        let old_slope = self.slope_left;
        self.al += 2.0;
        self.cl -= 2.0 * y;
        self.ar += 2.0;
        self.cr -= 2.0 * y;
        self.slope_left += 2.0;
        self.slope_right += 2.0;
        loop {
            if let Some((p, val)) = self.left_top() {
                if val > 0.0 {
                    self.left.pop();
                    self.push_right(p, val);
                    continue;
                }
            }
            if let Some((p, val)) = self.right_top() {
                if val < 0.0 {
                    self.right.pop();
                    self.push_left(p, val);
                    continue;
                }
            }
            break;
        }
        self.root = match (self.left_top(), self.right_top()) {
            (Some((pl, vl)), Some((pr, vr))) => {
                if vr > vl {
                    pl - vl * (pr - pl) / (vr - vl)
                } else {
                    pl
                }
            }
            (Some((pl, vl)), None) => pl - vl / self.slope_right,
            (None, Some((pr, vr))) => pr - vr / self.slope_left,
            // No knots yet: the derivative is one line through the old root.
            (None, None) => (old_slope * old_root + 2.0 * y) / (old_slope + 2.0),
        };
    }
}

/// Exact solver: dynamic programming over the convex piecewise-quadratic
/// cost-to-go, backtracking with projections onto the feasible windows.
pub fn solve_iso(inst: &IsoInstance) -> IsoSolution {
    let n = inst.len();
    let caps = inst.caps();
    let mut roots = Vec::with_capacity(n);
    let mut cost = CostDerivative::new(inst.y[0]);
    roots.push(cost.root);
    for i in 1..n {
        cost.window(caps[i - 1]);
        cost.add_point(inst.y[i]);
        roots.push(cost.root);
    }
    let mut v = vec![0.0; n];
    v[n - 1] = roots[n - 1];
    for i in (0..n - 1).rev() {
        let hi = v[i + 1];
        let lo = hi - caps[i];
        v[i] = roots[i].clamp(lo.min(hi), hi);
    }
    let objective = inst.objective(&v);
    IsoSolution { v, objective }
}

pub const DENSE_LIMIT: usize = 500;

/// Dense fallback: primal active-set method on the box-constrained problem in
/// the consecutive differences, with the level eliminated in closed form.
pub fn solve_iso_dense(inst: &IsoInstance) -> Result<IsoSolution> {
    let n = inst.len();
    if n > DENSE_LIMIT {
        return Err(Error::InvalidParam(alloc::format!("dense solver handles n <= {DENSE_LIMIT}, got {n}")));
    }
    if n == 1 {
        return Ok(IsoSolution { v: inst.y.clone(), objective: 0.0 });
    }
    let m = n - 1;
    let upper = inst.caps();
    // Centered cumulative-sum design: column j is 1{i > j} minus its mean.
    let mut pl = vec![0.0; n * m];
    for j in 0..m {
        let mean = (n - 1 - j) as f64 / n as f64;
        for i in 0..n {
            pl[i * m + j] = if i > j { 1.0 } else { 0.0 } - mean;
        }
    }
    let ymean = inst.y.iter().sum::<f64>() / n as f64;
    let py: Vec<f64> = inst.y.iter().map(|v| v - ymean).collect();
    let mut h = vec![0.0; m * m];
    let mut g = vec![0.0; m];
    for a in 0..m {
        for i in 0..n {
            g[a] += pl[i * m + a] * py[i];
        }
        for b in a..m {
            let s: f64 = (0..n).map(|i| pl[i * m + a] * pl[i * m + b]).sum();
            h[a * m + b] = s;
            h[b * m + a] = s;
        }
    }
    let d = box_qp(&h, &g, &upper)?;
    let mut v = vec![0.0; n];
    for i in 1..n {
        v[i] = v[i - 1] + d[i - 1];
    }
    let shift = (0..n).map(|i| inst.y[i] - v[i]).sum::<f64>() / n as f64;
    v.iter_mut().for_each(|x| *x += shift);
    let objective = inst.objective(&v);
    Ok(IsoSolution { v, objective })
}

#[derive(Clone, Copy, PartialEq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// `min ½ dᵀHd - gᵀd` over `0 <= d <= upper` for positive definite `H`.
fn box_qp(h: &[f64], g: &[f64], upper: &[f64]) -> Result<Vec<f64>> {
    let m = g.len();
    let mut d = vec![0.0; m];
    let mut state = vec![Bound::Lower; m];
    let scale = h.iter().fold(1.0f64, |a, x| a.max(libm::fabs(*x)));
    let tol = 1e-12 * scale;
    for _ in 0..(50 * m + 100) {
        let free: Vec<usize> = (0..m).filter(|&k| state[k] == Bound::Free).collect();
        let target = solve_free(h, g, &d, &free)?;
        // Step towards the subspace minimizer, stopping at the first bound hit.
        let mut alpha = 1.0;
        let mut blocking = None;
        for (fi, &k) in free.iter().enumerate() {
            let t = target[fi];
            if t < 0.0 && d[k] - t > 0.0 {
                let a = d[k] / (d[k] - t);
                if a < alpha {
                    alpha = a;
                    blocking = Some((k, Bound::Lower));
                }
            } else if t > upper[k] && t - d[k] > 0.0 {
                let a = (upper[k] - d[k]) / (t - d[k]);
                if a < alpha {
                    alpha = a;
                    blocking = Some((k, Bound::Upper));
                }
            }
        }
        for (fi, &k) in free.iter().enumerate() {
            d[k] += alpha * (target[fi] - d[k]);
            d[k] = d[k].clamp(0.0, upper[k]);
        }
        if let Some((k, b)) = blocking {
            state[k] = b;
            d[k] = if b == Bound::Lower { 0.0 } else { upper[k] };
            continue;
        }
        // Subspace optimum reached: release the bound with the worst multiplier.
        let mut worst = tol;
        let mut release = None;
        for k in 0..m {
            if state[k] == Bound::Free || upper[k] == 0.0 {
                continue;
            }
            let grad: f64 = (0..m).map(|j| h[k * m + j] * d[j]).sum::<f64>() - g[k];
            let violation = if state[k] == Bound::Lower { -grad } else { grad };
            if violation > worst {
                worst = violation;
                release = Some(k);
            }
        }
        match release {
            Some(k) => state[k] = Bound::Free,
            None => return Ok(d),
        }
    }
    Err(Error::NoConvergence { iters: 50 * m + 100, rayleigh: f64::NAN, last_change: f64::NAN })
}

/// Minimizer over the free coordinates with the others held fixed (Cholesky).
fn solve_free(h: &[f64], g: &[f64], d: &[f64], free: &[usize]) -> Result<Vec<f64>> {
    let m = g.len();
    let f = free.len();
    let mut a = vec![0.0; f * f];
    let mut rhs = vec![0.0; f];
    let mut is_free = vec![false; m];
    free.iter().for_each(|&k| is_free[k] = true);
    for (r, &k) in free.iter().enumerate() {
        rhs[r] = g[k] - (0..m).filter(|&j| !is_free[j]).map(|j| h[k * m + j] * d[j]).sum::<f64>();
        for (c, &j) in free.iter().enumerate() {
            a[r * f + c] = h[k * m + j];
        }
    }
    for j in 0..f {
        let mut s = a[j * f + j];
        for k in 0..j {
            s -= a[j * f + k] * a[j * f + k];
        }
        if !(s > 0.0) {
            return Err(Error::InvalidParam("dense QP lost positive definiteness".into()));
        }
        let ljj = libm::sqrt(s);
        a[j * f + j] = ljj;
        for i in (j + 1)..f {
            let mut s = a[i * f + j];
            for k in 0..j {
                s -= a[i * f + k] * a[j * f + k];
            }
            a[i * f + j] = s / ljj;
        }
    }
    for i in 0..f {
        let s: f64 = (0..i).map(|k| a[i * f + k] * rhs[k]).sum();
        rhs[i] = (rhs[i] - s) / a[i * f + i];
    }
    for i in (0..f).rev() {
        let s: f64 = ((i + 1)..f).map(|k| a[k * f + i] * rhs[k]).sum();
        rhs[i] = (rhs[i] - s) / a[i * f + i];
    }
    Ok(rhs)
}

/// Piecewise-linear hypothesis through the fitted points, flat outside the
/// data range. Collinear interior knots are dropped. Returns the hypothesis
/// and whether any value had to be clamped to `[-b, b]`.
pub fn interpolate_hypothesis(inst: &IsoInstance, sol: &IsoSolution, w: &[f64], b: f64) -> (Hypothesis, bool) {
    let mut knots: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut clamped = false;
    for (&z, &v) in inst.z.iter().zip(&sol.v) {
        let v = if v.abs() > b {
            clamped = true;
            v.clamp(-b, b)
        } else {
            v
        };
        if let Some(&last) = knots.last() {
            if z == last {
                continue;
            }
        }
        while knots.len() >= 2 {
            let k = knots.len();
            let (z0, v0, z1, v1) = (knots[k - 2], values[k - 2], knots[k - 1], values[k - 1]);
            let pred = v0 + (v1 - v0) * (z - z0) / (z1 - z0);
            if libm::fabs(pred - v) <= 1e-12 * (1.0 + libm::fabs(v)) {
                knots.pop();
                values.pop();
            } else {
                break;
            }
        }
        knots.push(z);
        values.push(v);
    }
    (Hypothesis { w: w.to_vec(), knots, values, beta: inst.beta, b }, clamped)
}

/// Fit the link along `w` on `data`.
pub struct CandidateFit {
    pub hypothesis: Hypothesis,
    pub objective: f64,
    pub clamped: bool,
}

pub fn fit_direction(data: &Dataset, w: &[f64], beta: f64, b: f64) -> Result<CandidateFit> {
    let z = data.project(w)?;
    let inst = IsoInstance::from_unsorted(&z, data.ys(), beta)?;
    let sol = solve_iso(&inst);
    let (hypothesis, clamped) = interpolate_hypothesis(&inst, &sol, w, b);
    Ok(CandidateFit { hypothesis, objective: sol.objective / data.len() as f64, clamped })
}
