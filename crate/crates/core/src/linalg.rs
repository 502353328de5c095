//! Small dense helpers. Vectors are slices, matrices are row-major `d*d` slices.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn normalize(a: &mut [f64]) -> Result<()> {
    let n = norm(a);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    a.iter_mut().for_each(|x| *x /= n);
    Ok(())
}

pub fn normalized(a: &[f64]) -> Result<Vec<f64>> {
    let mut v = a.to_vec();
    normalize(&mut v)?;
    Ok(v)
}

/// `a -= (a·u) u` for a unit vector `u`.
#[inline]
pub fn project_out(a: &mut [f64], u: &[f64]) {
    let c = dot(a, u);
    a.iter_mut().zip(u).for_each(|(x, ui)| *x -= c * ui);
}

/// Angle in `[0, π]` between two nonzero vectors.
pub fn angle(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch { expected: u.len(), got: v.len() });
    }
    let nu = norm(u);
    let nv = norm(v);
    if !(nu > 0.0) || !(nv > 0.0) {
        return Err(Error::ZeroVector);
    }
    // atan2 of |u×v| and u·v stays accurate near 0 and π, unlike acos.
    let c = dot(u, v) / (nu * nv);
    let mut s2 = 0.0;
    for i in 0..u.len() {
        for j in (i + 1)..u.len() {
            let m = (u[i] * v[j] - u[j] * v[i]) / (nu * nv);
            s2 += m * m;
        }
    }
    Ok(libm::atan2(libm::sqrt(s2), c))
}

/// `y = M x` for a row-major square matrix.
pub fn matvec(m: &[f64], x: &[f64], y: &mut [f64]) {
    let d = x.len();
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = dot(&m[i * d..(i + 1) * d], x);
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching eigenvectors
/// as rows of a row-major matrix.
pub fn sym_eigen(m: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = m.to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += a[i * d + j] * a[i * d + j];
            }
        }
        let scale: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = libm::copysign(1.0, theta) / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[j * d + j].total_cmp(&a[i * d + i]));
    let vals = order.iter().map(|&i| a[i * d + i]).collect();
    let mut vecs = vec![0.0; d * d];
    for (r, &i) in order.iter().enumerate() {
        for k in 0..d {
            vecs[r * d + k] = v[k * d + i];
        }
    }
    (vals, vecs)
}

/// Spectral norm of a symmetric matrix.
pub fn sym_op_norm(m: &[f64], d: usize) -> f64 {
    let (vals, _) = sym_eigen(m, d);
    vals.iter().fold(0.0, |acc: f64, x| acc.max(libm::fabs(*x)))
}

/// Pairwise sum, used where reproducible accumulation over long arrays matters.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 64 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[inline]
pub fn sq(x: f64) -> f64 {
    x * x
}
