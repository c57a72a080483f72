//! Savitzky-Golay smoothing and differentiation of sampled states.
//!
//! Each output sample is the value (or first derivative) of the least-squares
//! polynomial fitted over a window of samples. Interior samples use the
//! centred window, so the filter there is a fixed convolution. The first and
//! last `window/2` samples reuse the polynomial fitted to the first or last
//! full window, evaluated at the sample's offset, rather than padding the
//! signal.
//!
//! In automatic mode the window is picked per column by generalized
//! cross-validation, `GCV(w) = n·RSS(w) / (n - tr H_w)²` with
//! `tr H_w ≈ n·h0(w)` where `h0` is the centre weight of the smoother.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};

/// Upper bound on automatically selected windows.
pub const MAX_AUTO_WINDOW: usize = 501;
/// Smallest dataset accepted by automatic window selection.
pub const MIN_AUTO_SAMPLES: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WindowSelection {
    Fixed,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SgParams {
    /// Window length in samples (odd). Ignored when selection is `Auto`.
    pub window: usize,
    pub poly_order: usize,
    pub selection: WindowSelection,
}

impl Default for SgParams {
    fn default() -> Self {
        Self::auto()
    }
}

impl SgParams {
    /// Quartic fits with the window chosen by GCV.
    pub fn auto() -> Self {
        Self { window: 0, poly_order: 4, selection: WindowSelection::Auto }
    }

    pub fn fixed(window: usize, poly_order: usize) -> Self {
        Self { window, poly_order, selection: WindowSelection::Fixed }
    }

    /// Checks the window against the order and a signal of length `n`.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        let w = self.window;
        if self.poly_order < 1 {
            return Err(Error::InvalidConfig("polynomial order must be at least 1".into()));
        }
        if w.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("window must be odd, got {w}")));
        }
        if w < self.poly_order + 2 {
            return Err(Error::InvalidConfig(format!(
                "window {w} too short for polynomial order {}",
                self.poly_order
            )));
        }
        if w > n {
            return Err(Error::InvalidConfig(format!("window {w} longer than signal of {n} samples")));
        }
        Ok(())
    }

    /// Smallest odd window admissible for the polynomial order (at least 5).
    pub fn min_window(&self) -> usize {
        let w = (self.poly_order + 2).max(5);
        w | 1
    }
}

/// Smoothed states and their time derivatives on the dataset's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedDerivatives {
    pub states: DMatrix<f64>,
    pub derivatives: DMatrix<f64>,
    /// Parameters applied to each state column (always `Fixed` with the
    /// window that was used).
    pub params_used: Vec<SgParams>,
}

/// Least-squares polynomial projector for one window length.
struct SgKernel {
    half: usize,
    /// (order+1) × window; row `j` maps window samples to the coefficient of
    /// `s^j` with `s = (i - half) / half`.
    projector: DMatrix<f64>,
}

impl SgKernel {
    fn new(window: usize, poly_order: usize) -> Self {
        let half = window / 2;
        let scale = half as f64;
        let vander = DMatrix::from_fn(window, poly_order + 1, |i, j| {
            crate::powu((i as f64 - scale) / scale, j as u32)
        });
        let qr = vander.qr();
        let r_inv = qr
            .r()
            .try_inverse()
            .expect("Vandermonde matrix on distinct nodes has full column rank");
        let projector = r_inv * qr.q().transpose();
        Self { half, projector }
    }

    /// Weights that evaluate the fitted polynomial (or its derivative with
    /// respect to `s`) at offset `s`.
    fn weights(&self, s: f64, deriv: usize) -> Vec<f64> {
        let order = self.projector.nrows() - 1;
        let basis = DVector::from_fn(order + 1, |j, _| match deriv {
            0 => crate::powu(s, j as u32),
            _ if j == 0 => 0.0,
            _ => j as f64 * crate::powu(s, j as u32 - 1),
        });
        (self.projector.transpose() * basis).iter().copied().collect()
    }

    fn apply(&self, y: &[f64], deriv: usize, dt: f64) -> Vec<f64> {
        let n = y.len();
        let w = 2 * self.half + 1;
        let h = self.half as f64;
        // d/dt = d/ds · ds/dt with s = (t - t_c) / (half·dt)
        let scale = if deriv == 0 { 1.0 } else { 1.0 / (h * dt) };
        let mut out = vec![0.0; n];
        let center = self.weights(0.0, deriv);
        for i in self.half..n - self.half {
            let win = &y[i - self.half..i + self.half + 1];
            out[i] = scale * dot(&center, win);
        }
        let head = &y[..w];
        let tail = &y[n - w..];
        for i in 0..self.half {
            let s = (i as f64 - h) / h;
            out[i] = scale * dot(&self.weights(s, deriv), head);
            let k = n - 1 - i;
            out[k] = scale * dot(&self.weights(-s, deriv), tail);
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Filters one signal: `deriv = 0` gives the smoothed values, `deriv = 1` the
/// first derivative in units of `y` per second.
pub fn sg_filter(y: &[f64], dt: f64, params: &SgParams, deriv: usize) -> Result<Vec<f64>> {
    if deriv > 1 {
        return Err(Error::InvalidConfig(format!("derivative order {deriv} not supported")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    params.validate_for(y.len())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("non-finite sample in signal".into()));
    }
    Ok(SgKernel::new(params.window, params.poly_order).apply(y, deriv, dt))
}

/// GCV score of every candidate window, in increasing window order.
pub fn gcv_scores(y: &[f64], poly_order: usize) -> Vec<(usize, f64)> {
    let n = y.len();
    let probe = SgParams { window: 0, poly_order, selection: WindowSelection::Auto };
    let lo = probe.min_window();
    let hi = {
        let cap = (n / 10).min(MAX_AUTO_WINDOW).min(n);
        let cap = if cap.is_multiple_of(2) { cap.saturating_sub(1) } else { cap };
        cap.max(lo)
    };
    let nf = n as f64;
    (lo..=hi)
        .step_by(2)
        .filter(|&w| w <= n)
        .map(|w| {
            let kernel = SgKernel::new(w, poly_order);
            let fitted = kernel.apply(y, 0, 1.0);
            let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
            let h0 = kernel.weights(0.0, 0)[kernel.half];
            let dof = nf - nf * h0;
            (w, nf * rss / (dof * dof))
        })
        .collect()
}

/// Window minimising the GCV score (smallest window on ties).
pub fn select_window(y: &[f64], poly_order: usize) -> Result<usize> {
    if y.len() < MIN_AUTO_SAMPLES {
        return Err(Error::InvalidDataset(format!(
            "automatic window selection needs at least {MIN_AUTO_SAMPLES} samples, got {}",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("non-finite sample in signal".into()));
    }
    let mut best = (0, f64::INFINITY);
    for (w, score) in gcv_scores(y, poly_order) {
        if score < best.1 {
            best = (w, score);
        }
    }
    if best.0 == 0 {
        return Err(Error::InvalidDataset("no admissible smoothing window".into()));
    }
    Ok(best.0)
}

/// Smooths and differentiates every state column; inputs are not touched.
pub fn smooth_and_differentiate(ds: &TimeSeriesDataset, params: &SgParams) -> Result<SmoothedDerivatives> {
    let n = ds.len();
    let m = ds.n_states();
    let dt = ds.dt();
    let mut states = DMatrix::zeros(n, m);
    let mut derivatives = DMatrix::zeros(n, m);
    let mut params_used = Vec::with_capacity(m);
    for j in 0..m {
        let y: Vec<f64> = ds.states().column(j).iter().copied().collect();
        let used = match params.selection {
            WindowSelection::Fixed => SgParams { selection: WindowSelection::Fixed, ..*params },
            WindowSelection::Auto => SgParams::fixed(select_window(&y, params.poly_order)?, params.poly_order),
        };
        let smooth = sg_filter(&y, dt, &used, 0)?;
        let deriv = sg_filter(&y, dt, &used, 1)?;
        states.set_column(j, &DVector::from_vec(smooth));
        derivatives.set_column(j, &DVector::from_vec(deriv));
        params_used.push(used);
    }
    Ok(SmoothedDerivatives { states, derivatives, params_used })
}

/// Second-order central differences (one-sided at the ends).
pub fn central_difference(y: &[f64], dt: f64) -> Vec<f64> {
    let n = y.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        let d = (y[1] - y[0]) / dt;
        return vec![d, d];
    }
    for i in 1..n - 1 {
        out[i] = (y[i + 1] - y[i - 1]) / (2.0 * dt);
    }
    out[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * dt);
    out[n - 1] = (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * dt);
    out
}
