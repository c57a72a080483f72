//! Least squares, ridge and weighted lasso by coordinate descent, with
//! contiguous-block cross-validation.
//!
//! Penalized fits minimise `(1/2n)‖y − Aβ‖² + λ Σ wₖ|βₖ|`. Internally every
//! fit works on Gram statistics so that cross-validation folds and bootstrap
//! replicates never touch the raw rows again.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const CD_TOLERANCE: f64 = 1e-9;
pub const CD_MAX_SWEEPS: usize = 100_000;
pub const ADAPTIVE_EPS: f64 = 1e-9;
pub const DEFAULT_FOLDS: usize = 10;
pub const LAMBDA_COUNT: usize = 100;
pub const LAMBDA_RATIO: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Penalty {
    Lasso,
    AdaptiveLasso,
}

/// Per-coefficient penalty multipliers. `∞` drops a column, `0` leaves it
/// unpenalized.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyWeights(Vec<f64>);

impl PenaltyWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::InvalidConfig("penalty weights must be non-negative".into()));
        }
        Ok(Self(w))
    }

    pub fn uniform(p: usize) -> Self {
        Self(vec![1.0; p])
    }

    /// `wₖ = 1/(|βₖ| + ε)` from a preliminary (ridge) estimate.
    pub fn adaptive(ridge: &[f64], eps: f64) -> Self {
        Self(ridge.iter().map(|b| 1.0 / (libm::fabs(*b) + eps)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub rss: f64,
}

fn check_rows(a: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if a.nrows() != y.len() {
        return Err(Error::Dimension(format!("design has {} rows, response {}", a.nrows(), y.len())));
    }
    Ok(())
}

fn residual_ss(a: &DMatrix<f64>, y: &[f64], beta: &[f64]) -> f64 {
    let mut r: Vec<f64> = y.to_vec();
    for (k, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (ri, v) in r.iter_mut().zip(a.column(k).iter()) {
                *ri -= b * v;
            }
        }
    }
    r.iter().map(|v| v * v).sum()
}

/// Minimum-norm least squares through the SVD.
pub fn ols(a: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit> {
    check_rows(a, y)?;
    let k = a.ncols();
    if k == 0 || a.nrows() == 0 {
        return Ok(OlsFit { coefficients: vec![0.0; k], rss: y.iter().map(|v| v * v).sum() });
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * a.nrows().max(k) as f64 * f64::EPSILON;
    let b = DVector::from_column_slice(y);
    let beta = svd.solve(&b, eps).map_err(|e| Error::Dimension(e.into()))?;
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let rss = residual_ss(a, y, &coefficients);
    Ok(OlsFit { coefficients, rss })
}

/// Least squares with every column scaled to unit norm before the SVD, which
/// keeps wide dynamic ranges (high-degree monomials) well resolved.
pub(crate) fn ols_equilibrated(a: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit> {
    check_rows(a, y)?;
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let mut scaled = a.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        if norms[k] > 0.0 {
            col /= norms[k];
        }
    }
    let fit = ols(&scaled, y)?;
    let coefficients: Vec<f64> = fit
        .coefficients
        .iter()
        .zip(&norms)
        .map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 })
        .collect();
    let rss = residual_ss(a, y, &coefficients);
    Ok(OlsFit { coefficients, rss })
}

fn is_constant_column(a: &DMatrix<f64>, k: usize) -> bool {
    let col = a.column(k);
    col[0] != 0.0 && col.iter().all(|v| *v == col[0])
}

/// Ridge regression minimising `‖y − Aβ‖² + λ_r‖β‖²`; constant columns are
/// not penalized.
pub fn ridge(a: &DMatrix<f64>, y: &[f64], lambda_r: f64) -> Result<Vec<f64>> {
    check_rows(a, y)?;
    if !(lambda_r > 0.0) || !lambda_r.is_finite() {
        return Err(Error::InvalidConfig("ridge strength must be positive".into()));
    }
    let mut g = a.tr_mul(a);
    for k in 0..a.ncols() {
        if !is_constant_column(a, k) {
            g[(k, k)] += lambda_r;
        }
    }
    let c = a.tr_mul(&DVector::from_column_slice(y));
    Ok(match g.clone().cholesky() {
        Some(ch) => ch.solve(&c).iter().copied().collect(),
        None => pinv_solve_sym(&g, c.as_slice(), 1e-13),
    })
}

/// Solves the symmetric positive semi-definite system `G x = b` with a
/// pseudo-inverse after Jacobi scaling. Coordinates with a zero diagonal get 0.
pub(crate) fn pinv_solve_sym(g: &DMatrix<f64>, b: &[f64], rcond: f64) -> Vec<f64> {
    let p = b.len();
    let d: Vec<f64> = (0..p).map(|k| if g[(k, k)] > 0.0 { 1.0 / libm::sqrt(g[(k, k)]) } else { 0.0 }).collect();
    let scaled = DMatrix::from_fn(p, p, |i, j| g[(i, j)] * d[i] * d[j]);
    let eig = scaled.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(*v));
    let bs: Vec<f64> = b.iter().zip(&d).map(|(v, s)| v * s).collect();
    let mut x = vec![0.0; p];
    if top <= 0.0 {
        return x;
    }
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > rcond * top {
            let v = eig.eigenvectors.column(i);
            let proj: f64 = v.iter().zip(&bs).map(|(a, b)| a * b).sum::<f64>() / ev;
            for (xk, vk) in x.iter_mut().zip(v.iter()) {
                *xk += proj * vk;
            }
        }
    }
    x.iter().zip(&d).map(|(v, s)| v * s).collect()
}

#[inline]
fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Covariance-update coordinate descent on `(1/2n)(βᵀGβ − 2βᵀc) + λΣw|β|`.
/// `beta` is the warm start and receives the solution. Returns the number of
/// sweeps.
pub(crate) fn cd_solve(g: &DMatrix<f64>, c: &[f64], n: f64, lambda: f64, w: &[f64], beta: &mut [f64]) -> Result<usize> {
    let p = c.len();
    let free = |k: usize| w[k].is_finite() && g[(k, k)] > 0.0;
    for k in 0..p {
        if !free(k) {
            beta[k] = 0.0;
        }
    }
    let mut q = vec![0.0; p];
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (qi, gij) in q.iter_mut().zip(g.column(j).iter()) {
                *qi += gij * b;
            }
        }
    }
    let objective = |beta: &[f64], q: &[f64]| -> f64 {
        let mut quad = 0.0;
        let mut pen = 0.0;
        for k in 0..p {
            quad += beta[k] * (q[k] - 2.0 * c[k]);
            if beta[k] != 0.0 {
                pen += w[k] * libm::fabs(beta[k]);
            }
        }
        quad / (2.0 * n) + lambda * pen
    };
    let mut last = if cfg!(debug_assertions) { objective(beta, &q) } else { 0.0 };
    let all: Vec<usize> = (0..p).filter(|&k| free(k)).collect();
    let mut active: Vec<usize> = Vec::new();
    let mut full = true;
    let mut active_sweeps = 0;
    let mut sweeps = 0;
    let mut max_change = f64::INFINITY;
    loop {
        if sweeps >= CD_MAX_SWEEPS {
            return Err(Error::NonConvergence { sweeps, max_change });
        }
        sweeps += 1;
        max_change = 0.0;
        let coords = if full { &all } else { &active };
        for &k in coords {
            let gkk = g[(k, k)];
            let rho = c[k] - q[k] + gkk * beta[k];
            let next = soft_threshold(rho, n * lambda * w[k]) / gkk;
            let delta = next - beta[k];
            if delta != 0.0 {
                beta[k] = next;
                for (qi, gik) in q.iter_mut().zip(g.column(k).iter()) {
                    *qi += gik * delta;
                }
                max_change = max_change.max(libm::fabs(delta));
            }
        }
        if cfg!(debug_assertions) {
            let now = objective(beta, &q);
            let scale: f64 = 1.0 + beta.iter().zip(c).map(|(b, ck)| libm::fabs(b * ck)).sum::<f64>() / n;
            debug_assert!(now <= last + 1e-9 * scale, "lasso objective increased: {last} -> {now}");
            last = now;
        }
        if full {
            if max_change < CD_TOLERANCE {
                return Ok(sweeps);
            }
            active = all.iter().copied().filter(|&k| beta[k] != 0.0).collect();
            full = false;
            active_sweeps = 0;
        } else if max_change < CD_TOLERANCE {
            full = true;
        } else {
            active_sweeps += 1;
            // Ill-conditioned active sets crawl; jump to the exact minimiser
            // on the current sign pattern and let a full sweep confirm it.
            if active_sweeps % POLISH_EVERY == 0 && polish_active(g, c, n, lambda, w, beta, &mut q, &objective) {
                if cfg!(debug_assertions) {
                    last = objective(beta, &q);
                }
                full = true;
            }
        }
    }
}

const POLISH_EVERY: usize = 25;
/// Relative eigenvalue below which a ridge direction counts as an exact
/// collinearity.
const RIDGE_RCOND: f64 = 1e-14;

/// Relative eigenvalue below which an active-set direction counts as singular.
const POLISH_RCOND: f64 = 1e-12;

/// Moves towards the minimiser of the smooth objective on the current sign
/// pattern, `G_AA β_A = c_A − nλ w_A sign(β_A)`, stopping where the first
/// coefficient reaches zero. Directions where `G_AA` is singular (exactly
/// collinear columns) carry only the linear term, so the step then follows
/// that term down to the next zero. The objective cannot increase along
/// either segment; the step is still rejected if rounding says otherwise.
fn polish_active(
    g: &DMatrix<f64>,
    c: &[f64],
    n: f64,
    lambda: f64,
    w: &[f64],
    beta: &mut [f64],
    q: &mut [f64],
    objective: &dyn Fn(&[f64], &[f64]) -> f64,
) -> bool {
    let active: Vec<usize> = (0..beta.len()).filter(|&k| beta[k] != 0.0).collect();
    let k = active.len();
    if k == 0 {
        return false;
    }
    // Jacobi scaling keeps the eigenvalue cut independent of column norms
    let d: Vec<f64> = active.iter().map(|&a| 1.0 / libm::sqrt(g[(a, a)])).collect();
    let ga = DMatrix::from_fn(k, k, |i, j| g[(active[i], active[j])] * d[i] * d[j]);
    let r: Vec<f64> = (0..k)
        .map(|i| {
            let a = active[i];
            (c[a] - n * lambda * w[a] * libm::copysign(1.0, beta[a])) * d[i]
        })
        .collect();
    let x: Vec<f64> = (0..k).map(|i| beta[active[i]] / d[i]).collect();
    let eig = ga.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    if !(top > 0.0) {
        return false;
    }
    // range target keeps the null-space part of x; `down` descends the
    // linear term inside the null space
    let mut target = x.clone();
    let mut down = vec![0.0; k];
    for (e, &ev) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(e);
        let vr: f64 = v.iter().zip(&r).map(|(a, b)| a * b).sum();
        if ev > POLISH_RCOND * top {
            let vx: f64 = v.iter().zip(&x).map(|(a, b)| a * b).sum();
            for i in 0..k {
                target[i] += (vr / ev - vx) * v[i];
            }
        } else {
            for i in 0..k {
                down[i] += vr * v[i];
            }
        }
    }
    if target.iter().chain(&down).any(|v| !v.is_finite()) {
        return false;
    }
    let dir: Vec<f64> = (0..k).map(|i| target[i] - x[i]).collect();
    let (mut t, mut blocking) = first_zero(&x, &dir, 1.0);
    let mut y: Vec<f64> = (0..k).map(|i| x[i] + t * dir[i]).collect();
    if blocking.is_none() && down.iter().any(|v| *v != 0.0) {
        (t, blocking) = first_zero(&y, &down, f64::INFINITY);
        if blocking.is_some() {
            for i in 0..k {
                y[i] += t * down[i];
            }
        }
    }
    let mut trial = beta.to_vec();
    for (i, &a) in active.iter().enumerate() {
        let v = y[i] * d[i];
        trial[a] = if Some(i) == blocking || v * beta[a] < 0.0 { 0.0 } else { v };
    }
    let mut tq = vec![0.0; q.len()];
    for (j, &b) in trial.iter().enumerate() {
        if b != 0.0 {
            for (qi, gij) in tq.iter_mut().zip(g.column(j).iter()) {
                *qi += gij * b;
            }
        }
    }
    if objective(&trial, &tq) > objective(beta, q) {
        return false;
    }
    beta.copy_from_slice(&trial);
    q.copy_from_slice(&tq);
    true
}

/// Largest `t <= limit` keeping `x + t·dir` inside the orthant of `x`, and
/// the coordinate that reaches zero first.
fn first_zero(x: &[f64], dir: &[f64], limit: f64) -> (f64, Option<usize>) {
    let mut t = limit;
    let mut blocking = None;
    for i in 0..x.len() {
        if dir[i] != 0.0 && (dir[i] > 0.0) != (x[i] > 0.0) {
            let ti = -x[i] / dir[i];
            if ti <= t {
                t = ti;
                blocking = Some(i);
            }
        }
    }
    (t, blocking)
}

/// Weighted lasso by cyclic coordinate descent from a cold start.
pub fn lasso_cd(a: &DMatrix<f64>, y: &[f64], lambda: f64, w: &PenaltyWeights) -> Result<Vec<f64>> {
    lasso_cd_warm(a, y, lambda, w, &vec![0.0; a.ncols()])
}

pub fn lasso_cd_warm(a: &DMatrix<f64>, y: &[f64], lambda: f64, w: &PenaltyWeights, init: &[f64]) -> Result<Vec<f64>> {
    check_rows(a, y)?;
    if w.len() != a.ncols() || init.len() != a.ncols() {
        return Err(Error::Dimension("weights or warm start do not match the design".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig("lambda must be non-negative".into()));
    }
    let g = a.tr_mul(a);
    let c = a.tr_mul(&DVector::from_column_slice(y));
    let mut beta = init.to_vec();
    cd_solve(&g, c.as_slice(), a.nrows() as f64, lambda, w.as_slice(), &mut beta)?;
    Ok(beta)
}

/// Largest violation of the lasso optimality conditions at `beta`.
pub fn kkt_violation(a: &DMatrix<f64>, y: &[f64], beta: &[f64], lambda: f64, w: &PenaltyWeights) -> f64 {
    let n = a.nrows() as f64;
    let fitted = a * DVector::from_column_slice(beta);
    let r = fitted - DVector::from_column_slice(y);
    let grad = a.tr_mul(&r) / n;
    let mut worst: f64 = 0.0;
    for k in 0..beta.len() {
        let wk = w.as_slice()[k];
        if !wk.is_finite() {
            continue;
        }
        let bound = lambda * wk;
        let v = if beta[k] != 0.0 {
            libm::fabs(grad[k] + bound * libm::copysign(1.0, beta[k]))
        } else {
            (libm::fabs(grad[k]) - bound).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Smallest λ at which every penalized coefficient is zero (no unpenalized
/// columns besides an intercept handled by centring).
pub fn lambda_max(a: &DMatrix<f64>, y: &[f64], w: &PenaltyWeights) -> f64 {
    let c = a.tr_mul(&DVector::from_column_slice(y));
    lambda_max_from(c.as_slice(), a.nrows() as f64, w.as_slice())
}

fn lambda_max_from(c: &[f64], n: f64, w: &[f64]) -> f64 {
    c.iter()
        .zip(w)
        .filter(|(_, wk)| wk.is_finite() && **wk > 0.0)
        .map(|(ck, wk)| libm::fabs(*ck) / (n * wk))
        .fold(0.0, f64::max)
}

/// `count` log-spaced values from `top` down to `ratio·top`.
pub fn lambda_grid(top: f64, count: usize, ratio: f64) -> Vec<f64> {
    if count == 1 {
        return vec![top];
    }
    let step = libm::log(ratio) / (count - 1) as f64;
    (0..count).map(|i| top * libm::exp(step * i as f64)).collect()
}

/// Ridge strengths searched by cross-validation, scaled by the sample count.
pub fn ridge_grid(n: usize) -> Vec<f64> {
    (0..39).map(|i| n as f64 * libm::pow(10.0, -16.0 + 0.5 * i as f64)).collect()
}

// --- Gram statistics ----------------------------------------------------------

/// Uncentred sums over (weighted) rows of `[z, y]`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Moments {
    pub n: f64,
    pub sz: Vec<f64>,
    pub szz: DMatrix<f64>,
    pub sy: f64,
    pub szy: Vec<f64>,
    pub syy: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * i + l] * b[4 * i + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Columns `c0..c0+4` interleaved row by row.
fn panel(cols: &[&[f64]], c0: usize, n: usize) -> Vec<f64> {
    let mut p = vec![0.0; 4 * n];
    for (l, col) in cols[c0..c0 + 4].iter().enumerate() {
        for (i, &v) in col[..n].iter().enumerate() {
            p[4 * i + l] = v;
        }
    }
    p
}

/// `acc[r][c] = Σ_i x[4i + r]·y[4i + c]` over two interleaved panels.
#[cfg(target_arch = "x86_64")]
fn block4(x: &[f64], y: &[f64]) -> [[f64; 4]; 4] {
    use core::arch::x86_64::*;
    let mut out = [[0.0; 4]; 4];
    // SAFETY: SSE2 is part of the x86_64 baseline and every load reads two
    // lanes inside a 4-element chunk.
    unsafe {
        let mut acc = [_mm_setzero_pd(); 8];
        for (xs, ys) in x.chunks_exact(4).zip(y.chunks_exact(4)) {
            let y01 = _mm_loadu_pd(ys.as_ptr());
            let y23 = _mm_loadu_pd(ys.as_ptr().add(2));
            for r in 0..4 {
                let xr = _mm_set1_pd(xs[r]);
                acc[2 * r] = _mm_add_pd(acc[2 * r], _mm_mul_pd(xr, y01));
                acc[2 * r + 1] = _mm_add_pd(acc[2 * r + 1], _mm_mul_pd(xr, y23));
            }
        }
        for r in 0..4 {
            _mm_storeu_pd(out[r].as_mut_ptr(), acc[2 * r]);
            _mm_storeu_pd(out[r].as_mut_ptr().add(2), acc[2 * r + 1]);
        }
    }
    out
}

/// Portable version with the same summation order.
#[cfg(not(target_arch = "x86_64"))]
fn block4(x: &[f64], y: &[f64]) -> [[f64; 4]; 4] {
    let mut acc = [[0.0; 4]; 4];
    for (xs, ys) in x.chunks_exact(4).zip(y.chunks_exact(4)) {
        for r in 0..4 {
            for c in 0..4 {
                acc[r][c] += xs[r] * ys[c];
            }
        }
    }
    acc
}

/// Symmetric `g[a][b] = Σ_i u_a[i]·v_b[i]`, where `u` and `v` hold columns of
/// equal length and `u_a·v_b = u_b·v_a`. Columns are packed into 4-wide
/// panels so the inner loop works on 4×4 blocks.
fn gram(u: &[&[f64]], v: &[&[f64]]) -> DMatrix<f64> {
    let q = u.len();
    let n = u.first().map_or(0, |c| c.len());
    let mut g = DMatrix::zeros(q, q);
    let full = q / 4 * 4;
    let pu: Vec<Vec<f64>> = (0..full).step_by(4).map(|c| panel(u, c, n)).collect();
    let pv: Vec<Vec<f64>> = (0..full).step_by(4).map(|c| panel(v, c, n)).collect();
    for (ba, xa) in pu.iter().enumerate() {
        for (bb, yb) in pv.iter().enumerate().skip(ba) {
            let acc = block4(xa, yb);
            for r in 0..4 {
                for c in 0..4 {
                    g[(4 * ba + r, 4 * bb + c)] = acc[r][c];
                }
            }
        }
    }
    for a in 0..full {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    for b in full..q {
        for a in 0..=b {
            let s = dot(u[a], v[b]);
            g[(a, b)] = s;
            g[(b, a)] = s;
        }
    }
    g
}

impl Moments {
    pub fn from_rows(z: &DMatrix<f64>, y: &[f64], rows: Range<usize>) -> Self {
        let n = z.nrows();
        let q = z.ncols();
        let cols: Vec<&[f64]> = (0..q).map(|k| &z.as_slice()[k * n + rows.start..k * n + rows.end]).collect();
        let ys = &y[rows.clone()];
        Self {
            n: rows.len() as f64,
            sz: cols.iter().map(|c| c.iter().sum()).collect(),
            szz: gram(&cols, &cols),
            sy: ys.iter().sum(),
            szy: cols.iter().map(|c| dot(c, ys)).collect(),
            syy: dot(ys, ys),
        }
    }

    /// Sums with row `i` counted `counts[i]` times.
    pub fn weighted(z: &DMatrix<f64>, y: &[f64], counts: &[u32]) -> Self {
        let n = z.nrows();
        let q = z.ncols();
        let rows: Vec<usize> = (0..n).filter(|&i| counts[i] > 0).collect();
        let w: Vec<f64> = rows.iter().map(|&i| counts[i] as f64).collect();
        let m = rows.len();
        let mut plain = vec![0.0; m * q];
        let mut scaled = vec![0.0; m * q];
        for k in 0..q {
            let col = &z.as_slice()[k * n..(k + 1) * n];
            for (t, &i) in rows.iter().enumerate() {
                plain[k * m + t] = col[i];
                scaled[k * m + t] = col[i] * w[t];
            }
        }
        let plain_cols: Vec<&[f64]> = plain.chunks_exact(m.max(1)).take(q).collect();
        let scaled_cols: Vec<&[f64]> = scaled.chunks_exact(m.max(1)).take(q).collect();
        let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let wy: Vec<f64> = ys.iter().zip(&w).map(|(a, b)| a * b).collect();
        Self {
            n: w.iter().sum(),
            sz: scaled_cols.iter().map(|c| c.iter().sum()).collect(),
            szz: gram(&scaled_cols, &plain_cols),
            sy: wy.iter().sum(),
            szy: scaled_cols.iter().map(|c| dot(c, &ys)).collect(),
            syy: dot(&wy, &ys),
        }
    }

    pub fn minus(&self, o: &Self) -> Self {
        Self {
            n: self.n - o.n,
            sz: self.sz.iter().zip(&o.sz).map(|(a, b)| a - b).collect(),
            szz: &self.szz - &o.szz,
            sy: self.sy - o.sy,
            szy: self.szy.iter().zip(&o.szy).map(|(a, b)| a - b).collect(),
            syy: self.syy - o.syy,
        }
    }

    /// Centred problem with every usable column scaled to unit sample
    /// standard deviation.
    pub fn standardized(&self) -> StdProblem {
        let q = self.sz.len();
        let n = self.n;
        let means: Vec<f64> = self.sz.iter().map(|s| s / n).collect();
        let mean_y = self.sy / n;
        let mut scales = vec![1.0; q];
        let mut active = vec![false; q];
        for k in 0..q {
            let var = (self.szz[(k, k)] - self.sz[k] * means[k]) / (n - 1.0);
            if var > 1e-12 {
                scales[k] = libm::sqrt(var);
                active[k] = true;
            }
        }
        let gram = DMatrix::from_fn(q, q, |a, b| {
            if active[a] && active[b] {
                (self.szz[(a, b)] - self.sz[a] * means[b]) / (scales[a] * scales[b])
            } else {
                0.0
            }
        });
        let xty = (0..q)
            .map(|k| if active[k] { (self.szy[k] - self.sz[k] * mean_y) / scales[k] } else { 0.0 })
            .collect();
        StdProblem { n, mean_y, means, scales, active, gram, xty, yty: self.syy - self.sy * mean_y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct StdProblem {
    pub n: f64,
    pub mean_y: f64,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub active: Vec<bool>,
    pub gram: DMatrix<f64>,
    pub xty: Vec<f64>,
    pub yty: f64,
}

impl StdProblem {
    /// Maps standardized coefficients to the scale of `z`, returning the
    /// slopes and the intercept.
    pub fn to_z_scale(&self, gamma: &[f64]) -> (Vec<f64>, f64) {
        let alpha: Vec<f64> = gamma.iter().zip(&self.scales).map(|(g, s)| g / s).collect();
        let offset = self.mean_y - alpha.iter().zip(&self.means).map(|(a, m)| a * m).sum::<f64>();
        (alpha, offset)
    }

    pub fn ridge(&self, lambda_r: f64) -> Vec<f64> {
        self.ridge_path(&[lambda_r]).pop().unwrap_or_default()
    }

    /// Ridge solutions for each strength from one eigendecomposition.
    /// Directions with eigenvalues below `RIDGE_RCOND` of the largest are
    /// treated as exact collinearities and get no weight, so tiny strengths
    /// approach the minimum-norm least-squares solution.
    pub fn ridge_path(&self, lambdas: &[f64]) -> Vec<Vec<f64>> {
        let idx: Vec<usize> = (0..self.xty.len()).filter(|&k| self.active[k]).collect();
        let g = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.gram[(idx[a], idx[b])]);
        let eig = g.symmetric_eigen();
        let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
        let proj: Vec<f64> = (0..idx.len())
            .map(|e| idx.iter().enumerate().map(|(a, &k)| eig.eigenvectors[(a, e)] * self.xty[k]).sum())
            .collect();
        lambdas
            .iter()
            .map(|&lambda_r| {
                let mut out = vec![0.0; self.xty.len()];
                for (e, &ev) in eig.eigenvalues.iter().enumerate() {
                    if ev > RIDGE_RCOND * top {
                        let f = proj[e] / (ev + lambda_r);
                        for (a, &k) in idx.iter().enumerate() {
                            out[k] += f * eig.eigenvectors[(a, e)];
                        }
                    }
                }
                out
            })
            .collect()
    }

    pub fn masked_weights(&self, w: &[f64]) -> Vec<f64> {
        w.iter().zip(&self.active).map(|(v, a)| if *a { *v } else { f64::INFINITY }).collect()
    }

    pub fn lasso(&self, lambda: f64, w: &[f64], beta: &mut [f64]) -> Result<usize> {
        let w = self.masked_weights(w);
        cd_solve(&self.gram, &self.xty, self.n, lambda, &w, beta)
    }

    pub fn lambda_max(&self, w: &[f64]) -> f64 {
        lambda_max_from(&self.xty, self.n, &self.masked_weights(w))
    }
}

/// Contiguous blocks of near-equal size.
pub fn contiguous_folds(n: usize, k: usize) -> Vec<Range<usize>> {
    let base = n / k;
    let extra = n % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

pub(crate) struct Folds<'a> {
    z: &'a DMatrix<f64>,
    y: &'a [f64],
    blocks: Vec<Range<usize>>,
    block_moments: Vec<Moments>,
    pub total: Moments,
}

impl<'a> Folds<'a> {
    pub fn new(z: &'a DMatrix<f64>, y: &'a [f64], k: usize) -> Result<Self> {
        let n = z.nrows();
        if k < 2 || k > n {
            return Err(Error::InvalidConfig(format!("{k} folds for {n} rows")));
        }
        let blocks = contiguous_folds(n, k);
        let block_moments: Vec<Moments> = blocks.iter().map(|r| Moments::from_rows(z, y, r.clone())).collect();
        let total = Moments::from_rows(z, y, 0..n);
        Ok(Self { z, y, blocks, block_moments, total })
    }

    fn held_out_mse(&self, f: usize, alpha: &[f64], offset: f64) -> f64 {
        let rows = self.blocks[f].clone();
        let n = self.z.nrows();
        let mut r: Vec<f64> = self.y[rows.clone()].iter().map(|v| v - offset).collect();
        for (k, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                let col = &self.z.as_slice()[k * n + rows.start..k * n + rows.end];
                for (ri, v) in r.iter_mut().zip(col) {
                    *ri -= a * v;
                }
            }
        }
        r.iter().map(|v| v * v).sum::<f64>() / rows.len() as f64
    }

    fn summarize(per_fold: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let k = per_fold.len() as f64;
        let len = per_fold[0].len();
        let mut mean = vec![0.0; len];
        let mut se = vec![0.0; len];
        for l in 0..len {
            let m = per_fold.iter().map(|f| f[l]).sum::<f64>() / k;
            let var = per_fold.iter().map(|f| (f[l] - m) * (f[l] - m)).sum::<f64>() / (k - 1.0);
            mean[l] = m;
            se[l] = libm::sqrt(var / k);
        }
        (mean, se)
    }

    pub fn cv_lasso(&self, w: &[f64], grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut per_fold = Vec::with_capacity(self.blocks.len());
        for f in 0..self.blocks.len() {
            let sp = self.total.minus(&self.block_moments[f]).standardized();
            let mut beta = vec![0.0; w.len()];
            let mut mses = Vec::with_capacity(grid.len());
            for &lambda in grid {
                sp.lasso(lambda, w, &mut beta)?;
                let (alpha, offset) = sp.to_z_scale(&beta);
                mses.push(self.held_out_mse(f, &alpha, offset));
            }
            per_fold.push(mses);
        }
        Ok(Self::summarize(&per_fold))
    }

    pub fn cv_ridge(&self, grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let per_fold: Vec<Vec<f64>> = (0..self.blocks.len())
            .map(|f| {
                let sp = self.total.minus(&self.block_moments[f]).standardized();
                sp.ridge_path(grid)
                    .iter()
                    .map(|gamma| {
                        let (alpha, offset) = sp.to_z_scale(gamma);
                        self.held_out_mse(f, &alpha, offset)
                    })
                    .collect()
            })
            .collect();
        Self::summarize(&per_fold)
    }
}

fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// Cross-validated lasso path. Coefficients are on the scale of the columns
/// of `A`; the intercept is fitted by centring and reported separately.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub coefs: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub lambda_star: f64,
    pub star: usize,
}

impl LassoPath {
    pub fn coefs_at_star(&self) -> &[f64] {
        &self.coefs[self.star]
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    if grid.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidConfig("lambda values must be positive and finite".into()));
    }
    if grid.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::InvalidConfig("lambda grid must be strictly descending".into()));
    }
    Ok(())
}

pub fn cv_select_lambda(
    a: &DMatrix<f64>,
    y: &[f64],
    w: &PenaltyWeights,
    folds: usize,
    grid: &[f64],
) -> Result<LassoPath> {
    check_rows(a, y)?;
    validate_grid(grid)?;
    if w.len() != a.ncols() {
        return Err(Error::Dimension("weights do not match the design".into()));
    }
    let n = a.nrows();
    let col_means: Vec<f64> = a.column_iter().map(|c| c.sum() / n as f64).collect();
    let z = DMatrix::from_fn(n, a.ncols(), |i, k| a[(i, k)] - col_means[k]);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let f = Folds::new(&z, &yc, folds)?;
    let (cv_mean, cv_se) = f.cv_lasso(w.as_slice(), grid)?;
    let star = argmin_first(&cv_mean);
    let sp = f.total.standardized();
    let mut beta = vec![0.0; a.ncols()];
    let mut coefs = Vec::with_capacity(grid.len());
    let mut intercepts = Vec::with_capacity(grid.len());
    for &lambda in grid {
        sp.lasso(lambda, w.as_slice(), &mut beta)?;
        let (alpha, offset) = sp.to_z_scale(&beta);
        intercepts.push(offset + y_mean - alpha.iter().zip(&col_means).map(|(a, m)| a * m).sum::<f64>());
        coefs.push(alpha);
    }
    Ok(LassoPath { lambdas: grid.to_vec(), coefs, intercepts, cv_mean, cv_se, lambda_star: grid[star], star })
}

/// Outcome of the cross-validated (adaptive) lasso on a pre-centred problem.
#[derive(Debug, Clone)]
pub(crate) struct PenalizedFit {
    pub problem: StdProblem,
    pub lambda_ridge: Option<f64>,
    pub lambda_star: f64,
    /// Standardized coefficients at `lambda_star`.
    pub gamma: Vec<f64>,
}

pub(crate) fn adaptive_weights(sp: &StdProblem, lambda_r: f64) -> Vec<f64> {
    PenaltyWeights::adaptive(&sp.ridge(lambda_r), ADAPTIVE_EPS).0
}

pub(crate) fn penalized_fit(z: &DMatrix<f64>, y: &[f64], folds: usize, penalty: Penalty) -> Result<PenalizedFit> {
    let q = z.ncols();
    let f = Folds::new(z, y, folds)?;
    let problem = f.total.standardized();
    let (weights, lambda_ridge) = match penalty {
        Penalty::Lasso => (vec![1.0; q], None),
        Penalty::AdaptiveLasso => {
            let grid = ridge_grid(z.nrows());
            let (mean, _) = f.cv_ridge(&grid);
            let lr = grid[argmin_first(&mean)];
            (adaptive_weights(&problem, lr), Some(lr))
        }
    };
    let top = problem.lambda_max(&weights);
    if !(top > 0.0) || !top.is_finite() {
        return Ok(PenalizedFit {
            problem,
            lambda_ridge,
            lambda_star: 0.0,
            gamma: vec![0.0; q],
        });
    }
    let lambdas = lambda_grid(top, LAMBDA_COUNT, LAMBDA_RATIO);
    let (cv_mean, _) = f.cv_lasso(&weights, &lambdas)?;
    let star = argmin_first(&cv_mean);
    let mut gamma = vec![0.0; q];
    for &lambda in &lambdas[..=star] {
        problem.lasso(lambda, &weights, &mut gamma)?;
    }
    Ok(PenalizedFit { problem, lambda_ridge, lambda_star: lambdas[star], gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn normal_equations(a: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
        let g = a.tr_mul(a);
        let c = a.tr_mul(&DVector::from_column_slice(y));
        g.lu().solve(&c).unwrap().iter().copied().collect()
    }

    /// Columns orthonormal under `AᵀA = n·I`.
    fn orthonormal(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let q = gaussian(n, p, seed).qr().q();
        q * libm::sqrt(n as f64)
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn ols_small_cases() {
        let a = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let fit = ols(&a, &[2.0, 4.0, 6.0]).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-14);
        assert!(fit.rss < 1e-24);

        let a = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let fit = ols(&a, &[0.0, 3.0, 4.0]).unwrap();
        assert_eq!(fit.coefficients[0], 0.0);
        assert!((fit.rss - 25.0).abs() < 1e-12);

        // duplicated columns split evenly under minimum norm
        let a = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let fit = ols(&a, &[2.0, 4.0, 6.0]).unwrap();
        assert!(close(&fit.coefficients, &[1.0, 1.0], 1e-12));
    }

    #[test]
    fn ols_matches_normal_equations() {
        let a = gaussian(50, 5, 1);
        let y: Vec<f64> = gaussian(50, 1, 2).iter().copied().collect();
        let fit = ols(&a, &y).unwrap();
        assert!(close(&fit.coefficients, &normal_equations(&a, &y), 1e-10));
        let eq = ols_equilibrated(&a, &y).unwrap();
        assert!(close(&eq.coefficients, &fit.coefficients, 1e-10));
    }

    #[test]
    fn ridge_limits_and_closed_form() {
        let a = gaussian(60, 4, 3);
        let y: Vec<f64> = gaussian(60, 1, 4).iter().copied().collect();
        let o = ols(&a, &y).unwrap().coefficients;
        assert!(close(&ridge(&a, &y, 1e-9).unwrap(), &o, 1e-6));

        let mut ac = a.clone();
        ac.column_mut(0).fill(1.0);
        let b = ridge(&ac, &y, 1e12).unwrap();
        assert!(b[1..].iter().all(|v| v.abs() < 1e-8));
        let mean = y.iter().sum::<f64>() / 60.0;
        assert!((b[0] - mean).abs() < 1e-6);

        let q = gaussian(30, 3, 5).qr().q();
        let y: Vec<f64> = gaussian(30, 1, 6).iter().copied().collect();
        let bo = q.tr_mul(&DVector::from_column_slice(&y));
        let br = ridge(&q, &y, 0.7).unwrap();
        for k in 0..3 {
            assert!((br[k] - bo[k] / 1.7).abs() < 1e-12);
        }
        assert!(ridge(&q, &y, 0.0).is_err());
    }

    #[test]
    fn orthonormal_lasso_is_soft_threshold() {
        for inst in 0..100u64 {
            let n = 40;
            let p = 6;
            let a = orthonormal(n, p, 100 + inst);
            let y: Vec<f64> = gaussian(n, 1, 500 + inst).iter().map(|v| v * 2.0).collect();
            let lambda = 0.05 + 0.01 * inst as f64;
            let beta = lasso_cd(&a, &y, lambda, &PenaltyWeights::uniform(p)).unwrap();
            let z = a.tr_mul(&DVector::from_column_slice(&y)) / n as f64;
            for k in 0..p {
                let expected = soft_threshold(z[k], lambda);
                assert!((beta[k] - expected).abs() < 1e-8, "instance {inst}");
            }
        }
    }

    #[test]
    fn lambda_max_zeroes_solution() {
        let a = gaussian(50, 5, 7);
        let y: Vec<f64> = gaussian(50, 1, 8).iter().copied().collect();
        let w = PenaltyWeights::new(vec![1.0, 2.0, 0.5, 1.0, 3.0]).unwrap();
        let top = lambda_max(&a, &y, &w);
        assert!(lasso_cd(&a, &y, top, &w).unwrap().iter().all(|b| *b == 0.0));
        assert!(lasso_cd(&a, &y, top * 0.99, &w).unwrap().iter().any(|b| *b != 0.0));

        // coarse bound with the smallest positive weight
        let c = a.tr_mul(&DVector::from_column_slice(&y));
        let coarse = c.amax() / (50.0 * 0.5);
        assert!(coarse >= top);
    }

    #[test]
    fn zero_lambda_is_ols() {
        let a = gaussian(80, 5, 9);
        let y: Vec<f64> = gaussian(80, 1, 10).iter().copied().collect();
        let beta = lasso_cd(&a, &y, 0.0, &PenaltyWeights::uniform(5)).unwrap();
        assert!(close(&beta, &ols(&a, &y).unwrap().coefficients, 1e-7));
    }

    #[test]
    fn infinite_weight_drops_column() {
        let a = gaussian(40, 3, 11);
        let y: Vec<f64> = a.column(1).iter().map(|v| 4.0 * v).collect();
        let w = PenaltyWeights::new(vec![1.0, f64::INFINITY, 1.0]).unwrap();
        let beta = lasso_cd(&a, &y, 0.01, &w).unwrap();
        assert_eq!(beta[1], 0.0);
        assert!(PenaltyWeights::new(vec![-1.0]).is_err());
        assert!(PenaltyWeights::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn warm_path_matches_cold() {
        let a = gaussian(100, 8, 12);
        let y: Vec<f64> =
            (0..100).map(|i| 2.0 * a[(i, 0)] - a[(i, 3)] + 0.3 * a[(i, 5)] + 0.1 * libm::sin(i as f64)).collect();
        let w = PenaltyWeights::uniform(8);
        let grid = lambda_grid(lambda_max(&a, &y, &w), 30, 1e-3);
        let mut warm = vec![0.0; 8];
        for &l in &grid {
            warm = lasso_cd_warm(&a, &y, l, &w, &warm).unwrap();
            let cold = lasso_cd(&a, &y, l, &w).unwrap();
            assert!(close(&warm, &cold, 1e-7));
        }
    }

    #[test]
    fn uniform_adaptive_weights_rescale_lambda() {
        let a = gaussian(70, 4, 13);
        let y: Vec<f64> = (0..70).map(|i| a[(i, 0)] - 0.5 * a[(i, 2)]).collect();
        let w = PenaltyWeights::adaptive(&[0.25; 4], ADAPTIVE_EPS);
        let scale = w.as_slice()[0];
        assert!((scale - 1.0 / (0.25 + 1e-9)).abs() < 1e-12);
        let lambda = 0.02;
        let adaptive = lasso_cd(&a, &y, lambda, &w).unwrap();
        let plain = lasso_cd(&a, &y, lambda * scale, &PenaltyWeights::uniform(4)).unwrap();
        assert!(close(&adaptive, &plain, 1e-9));
    }

    #[test]
    fn cv_recovers_dominant_column() {
        let a = gaussian(200, 6, 14);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let y: Vec<f64> = (0..200)
            .map(|i| {
                let e: f64 = StandardNormal.sample(&mut rng);
                3.0 * a[(i, 2)] + 1e-3 * e
            })
            .collect();
        let w = PenaltyWeights::uniform(6);
        let grid = lambda_grid(lambda_max(&a, &y, &w), 50, 1e-4);
        let path = cv_select_lambda(&a, &y, &w, 10, &grid).unwrap();
        assert!(path.coefs_at_star()[2].abs() > 2.9);
        assert_eq!(path.lambda_star, grid[path.star]);
        assert_eq!(path.cv_mean.len(), 50);
        assert!(path.cv_se.iter().all(|s| s.is_finite() && *s >= 0.0));

        assert!(cv_select_lambda(&a, &y, &w, 10, &[0.5, 0.5, 0.1]).is_err());
        assert!(cv_select_lambda(&a, &y, &w, 10, &[]).is_err());
        assert!(cv_select_lambda(&a, &y, &w, 201, &grid).is_err());
    }

    #[test]
    fn fold_moments_subtract_exactly() {
        let z = gaussian(53, 4, 16);
        let y: Vec<f64> = gaussian(53, 1, 17).iter().copied().collect();
        let f = Folds::new(&z, &y, 10).unwrap();
        let blocks = contiguous_folds(53, 10);
        assert_eq!(blocks.iter().map(|b| b.len()).sum::<usize>(), 53);
        assert!(blocks.iter().all(|b| b.len() == 5 || b.len() == 6));
        let train = f.total.minus(&f.block_moments[3]);
        let rows: Vec<usize> = (0..53).filter(|i| !blocks[3].contains(i)).collect();
        let zt = z.select_rows(&rows);
        let yt: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let direct = Moments::from_rows(&zt, &yt, 0..rows.len());
        assert!((train.szz.clone() - direct.szz).amax() < 1e-12);
        assert!((train.syy - direct.syy).abs() < 1e-12);

        let mut counts = vec![0u32; 53];
        for &i in &rows {
            counts[i] = 1;
        }
        let weighted = Moments::weighted(&z, &y, &counts);
        assert!((weighted.szz - train.szz).amax() < 1e-12);
    }

    #[test]
    fn blocked_gram_matches_product() {
        for q in [1, 4, 7, 10] {
            let z = gaussian(37, q, 20 + q as u64);
            let cols: Vec<&[f64]> = z.as_slice().chunks(37).collect();
            assert!((gram(&cols, &cols) - z.tr_mul(&z)).amax() < 1e-12);
        }
    }

    #[test]
    fn standardized_problem_matches_explicit_centering() {
        let z = gaussian(30, 3, 18);
        let y: Vec<f64> = gaussian(30, 1, 19).iter().copied().collect();
        let sp = Moments::from_rows(&z, &y, 0..30).standardized();
        let means: Vec<f64> = z.column_iter().map(|c| c.sum() / 30.0).collect();
        let ym = y.iter().sum::<f64>() / 30.0;
        let zs = DMatrix::from_fn(30, 3, |i, k| (z[(i, k)] - means[k]) / sp.scales[k]);
        let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
        assert!((zs.tr_mul(&zs) - &sp.gram).amax() < 1e-12);
        let c = zs.tr_mul(&DVector::from_column_slice(&yc));
        assert!(close(c.as_slice(), &sp.xty, 1e-12));
        for k in 0..3 {
            assert!((zs.column(k).norm_squared() / 29.0 - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kkt_holds_at_solution(seed in 0u64..10_000, frac in 0.01f64..0.9, wseed in 0u64..1000) {
            let a = gaussian(40, 6, seed);
            let y: Vec<f64> = gaussian(40, 1, seed + 1).iter().copied().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(wseed);
            let w = PenaltyWeights::new((0..6).map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                0.2 + v.abs()
            }).collect()).unwrap();
            let lambda = frac * lambda_max(&a, &y, &w);
            let beta = lasso_cd(&a, &y, lambda, &w).unwrap();
            prop_assert!(kkt_violation(&a, &y, &beta, lambda, &w) < 1e-6);
        }

        #[test]
        fn pinv_solves_consistent_systems(seed in 0u64..10_000) {
            let a = gaussian(20, 4, seed);
            let g = a.tr_mul(&a);
            let x = gaussian(4, 1, seed + 7);
            let b = &g * &x;
            let sol = pinv_solve_sym(&g, b.as_slice(), 1e-14);
            prop_assert!(close(&sol, x.as_slice(), 1e-8));
        }
    }
}
