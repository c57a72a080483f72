//! The ARGOSc identification pipeline, run independently for every state:
//!
//! 1. smooth the states and estimate their derivatives;
//! 2. build and standardize the polynomial library in states and inputs;
//! 3. cross-validated (adaptive) lasso, then trim the library to the highest
//!    selected degree and fit again;
//! 4. threshold the refit coefficients over a grid, refit each support by
//!    least squares and keep the support with the lowest BIC;
//! 5. repeat step 4 on bootstrap resamples of the rows and keep the terms
//!    whose percentile interval excludes zero and contains the estimate.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{FitDiagnostics, Interval, ModelTerm, SparseModel, StateEquation, TermDescriptor, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::features::{build_design_matrix, standardize, trim_indices, CustomTerm, DesignMatrix, LibrarySpec};
use crate::regress::{adaptive_weights, penalized_fit, pinv_solve_sym, Moments, Penalty, StdProblem, DEFAULT_FOLDS};
use crate::smooth::{smooth_and_differentiate, SgParams};

const PINV_RCOND: f64 = 1e-12;

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipelineConfig {
    pub degree: u32,
    pub penalty: Penalty,
    /// Ascending thresholds on original-scale coefficients.
    pub eta_grid: Vec<f64>,
    pub bootstrap_samples: usize,
    pub alpha: f64,
    pub sg: SgParams,
    pub seed: u64,
    pub folds: usize,
    /// `false` drops the inputs from the library (plain ARGOS).
    pub include_inputs: bool,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub custom: Vec<CustomTerm>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            degree: 5,
            penalty: Penalty::AdaptiveLasso,
            eta_grid: default_eta_grid(),
            bootstrap_samples: 2000,
            alpha: 0.05,
            sg: SgParams::auto(),
            seed: 0,
            folds: DEFAULT_FOLDS,
            include_inputs: true,
            custom: Vec::new(),
        }
    }
}

/// 1e-8, 1e-7, …, 1e1.
pub fn default_eta_grid() -> Vec<f64> {
    (-8..=1).map(|e| libm::pow(10.0, e as f64)).collect()
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::InvalidConfig("degree must be at least 1".into()));
        }
        if self.bootstrap_samples < 100 {
            return Err(Error::InvalidConfig(format!(
                "at least 100 bootstrap samples required, got {}",
                self.bootstrap_samples
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.eta_grid.is_empty()
            || self.eta_grid.iter().any(|e| !(*e > 0.0) || !e.is_finite())
            || self.eta_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidConfig("eta grid must be positive and strictly ascending".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig("at least two folds required".into()));
        }
        Ok(())
    }

    fn library(&self) -> LibrarySpec {
        LibrarySpec { degree: self.degree, custom: self.custom.clone(), include_constant: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThresholdStep {
    pub eta: f64,
    pub support: Vec<TermDescriptor>,
    pub coefficients: Vec<f64>,
    pub rss: f64,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TermInterval {
    pub term: TermDescriptor,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Replicates in which the term had a non-zero coefficient.
    pub selected_count: usize,
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateTrace {
    pub initial_support: Vec<TermDescriptor>,
    pub initial_lambda: f64,
    pub ridge_lambda: Option<f64>,
    pub trimmed_degree: u32,
    pub trimmed_library: Vec<TermDescriptor>,
    pub refit: Vec<(TermDescriptor, f64)>,
    pub refit_lambda: f64,
    pub thresholds: Vec<ThresholdStep>,
    pub chosen: usize,
    pub intervals: Vec<TermInterval>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionTrace {
    pub windows: Vec<usize>,
    pub states: Vec<StateTrace>,
}

/// Gaussian BIC up to constants.
pub fn bic(rss: f64, n: usize, k: usize) -> f64 {
    let n = n as f64;
    n * libm::log(rss.max(1e-300) / n) + k as f64 * libm::log(n)
}

/// 1-based order statistics `(⌊Bα/2⌋, B − ⌊Bα/2⌋ + 1)` bounding the
/// percentile interval; the lower index is at least 1.
pub fn order_statistics(b: usize, alpha: f64) -> (usize, usize) {
    let lo = (libm::floor(b as f64 * alpha / 2.0 + 1e-9) as usize).max(1);
    (lo, b - lo + 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapInterval {
    pub lower: f64,
    pub upper: f64,
    pub selected_count: usize,
}

/// Row multiplicities of bootstrap replicate `r`.
pub fn resample_counts(n: usize, seed: u64, r: usize) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}

/// Percentile intervals of `fit` over `b` pairs-bootstrap resamples of
/// `n_rows` rows. `fit` receives row multiplicities and returns one value
/// per term (0 when unselected).
pub fn bootstrap_ci<F>(n_rows: usize, b: usize, alpha: f64, seed: u64, mut fit: F) -> Result<Vec<BootstrapInterval>>
where
    F: FnMut(&[u32]) -> Result<Vec<f64>>,
{
    if b < 100 {
        return Err(Error::InvalidConfig(format!("at least 100 bootstrap samples required, got {b}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig("alpha must lie in (0, 1)".into()));
    }
    let mut draws: Vec<Vec<f64>> = Vec::new();
    for r in 0..b {
        let values = fit(&resample_counts(n_rows, seed, r))?;
        if draws.is_empty() {
            draws = vec![Vec::with_capacity(b); values.len()];
        } else if values.len() != draws.len() {
            return Err(Error::Dimension("bootstrap replicates disagree on the term count".into()));
        }
        for (d, v) in draws.iter_mut().zip(values) {
            d.push(v);
        }
    }
    let (lo, up) = order_statistics(b, alpha);
    Ok(draws
        .into_iter()
        .map(|mut d| {
            let selected_count = d.iter().filter(|v| **v != 0.0).count();
            d.sort_by(f64::total_cmp);
            BootstrapInterval { lower: d[lo - 1], upper: d[up - 1], selected_count }
        })
        .collect())
}

/// Library columns and their link to the standardized matrix used by the
/// penalized fits: library column `cols[a]` equals `means[a] + scales[a]·z_a`.
struct Problem<'a> {
    lib: &'a DesignMatrix,
    constant: Option<usize>,
    cols: Vec<usize>,
    pos: Vec<Option<usize>>,
    means: Vec<f64>,
    scales: Vec<f64>,
    z: DMatrix<f64>,
    ybar: f64,
}

impl<'a> Problem<'a> {
    fn new(lib: &'a DesignMatrix, ybar: f64) -> Self {
        let (zfull, rec) = standardize(lib);
        let cols = rec.penalizable();
        let mut pos = vec![None; lib.p()];
        for (a, &k) in cols.iter().enumerate() {
            pos[k] = Some(a);
        }
        Self {
            lib,
            constant: rec.constant,
            means: cols.iter().map(|&k| rec.means[k]).collect(),
            scales: cols.iter().map(|&k| rec.scales[k]).collect(),
            z: zfull.values.select_columns(&cols),
            cols,
            pos,
            ybar,
        }
    }

    fn p(&self) -> usize {
        self.lib.p()
    }

    /// Standardized penalized coefficients to library-scale coefficients.
    fn raw(&self, sp: &StdProblem, gamma: &[f64]) -> Vec<f64> {
        let (alpha, offset) = sp.to_z_scale(gamma);
        let mut beta = vec![0.0; self.p()];
        let mut c0 = self.ybar + offset;
        for (a, &k) in self.cols.iter().enumerate() {
            beta[k] = alpha[a] / self.scales[a];
            c0 -= beta[k] * self.means[a];
        }
        if let Some(c) = self.constant {
            beta[c] = c0;
        }
        beta
    }

    /// Least squares on `support` (library indices) from Gram statistics.
    /// Returns library-length coefficients and the residual sum of squares.
    fn subset_ols(&self, mom: &Moments, support: &[usize]) -> (Vec<f64>, f64) {
        let has_const = support.iter().any(|k| Some(*k) == self.constant);
        let idx: Vec<usize> = support.iter().filter_map(|&k| self.pos[k]).collect();
        let n = mom.n;
        let k = idx.len();
        let mut beta = vec![0.0; self.p()];
        let (g, c, yy) = if has_const {
            let g = DMatrix::from_fn(k, k, |i, j| {
                let (a, b) = (idx[i], idx[j]);
                mom.szz[(a, b)] - mom.sz[a] * mom.sz[b] / n
            });
            let c: Vec<f64> = idx.iter().map(|&a| mom.szy[a] - mom.sz[a] * mom.sy / n).collect();
            (g, c, mom.syy - mom.sy * mom.sy / n)
        } else {
            let sh: Vec<f64> = idx.iter().map(|&a| self.means[a] / self.scales[a]).collect();
            let ybar = self.ybar;
            let g = DMatrix::from_fn(k, k, |i, j| {
                let (a, b) = (idx[i], idx[j]);
                n * sh[i] * sh[j] + sh[i] * mom.sz[b] + sh[j] * mom.sz[a] + mom.szz[(a, b)]
            });
            let c: Vec<f64> = idx
                .iter()
                .zip(&sh)
                .map(|(&a, s)| s * (mom.sy + n * ybar) + mom.szy[a] + ybar * mom.sz[a])
                .collect();
            (g, c, mom.syy + 2.0 * ybar * mom.sy + n * ybar * ybar)
        };
        let theta = if k > 0 { pinv_solve_sym(&g, &c, PINV_RCOND) } else { Vec::new() };
        let mut rss = yy;
        for i in 0..k {
            rss -= 2.0 * theta[i] * c[i];
            for j in 0..k {
                rss += theta[i] * g[(i, j)] * theta[j];
            }
        }
        let mut c0 = self.ybar + mom.sy / n;
        for (i, &a) in idx.iter().enumerate() {
            let kk = self.cols[a];
            if has_const {
                // θ multiplies the centred z column
                beta[kk] = theta[i] / self.scales[a];
                c0 -= theta[i] * mom.sz[a] / n + beta[kk] * self.means[a];
            } else {
                beta[kk] = theta[i] / self.scales[a];
            }
        }
        if has_const {
            beta[self.constant.unwrap()] = c0;
        }
        (beta, rss.max(0.0))
    }

    /// Residual sum of squares from explicit residuals, each row weighted
    /// by its multiplicity when `counts` is given.
    fn direct_rss(&self, y: &[f64], counts: Option<&[u32]>, beta: &[f64]) -> f64 {
        let mut r = y.to_vec();
        for (k, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (ri, v) in r.iter_mut().zip(self.lib.values.column(k).iter()) {
                    *ri -= b * v;
                }
            }
        }
        match counts {
            Some(w) => r.iter().zip(w).map(|(v, &c)| c as f64 * v * v).sum(),
            None => r.iter().map(|v| v * v).sum(),
        }
    }
}

fn support_of(beta: &[f64], eta: f64) -> Vec<usize> {
    (0..beta.len()).filter(|&k| libm::fabs(beta[k]) >= eta).collect()
}

struct Selection {
    steps: Vec<(Vec<usize>, Vec<f64>, f64, f64)>,
    chosen: usize,
}

/// Below this fraction of the total sum of squares the RSS obtained from
/// Gram statistics is dominated by cancellation.
const GRAM_RSS_FLOOR: f64 = 1e-6;

/// Relative RSS below which a fit counts as exact. Supports that all fit to
/// this level tie on RSS, so BIC picks the smallest.
const EXACT_FIT_RSS: f64 = 1e-20;

/// Threshold grid, least squares per support and BIC. The RSS comes from
/// explicit residuals on the full data, and on a resample whenever the Gram
/// value is too small to trust.
fn select_threshold(
    problem: &Problem,
    mom: &Moments,
    beta: &[f64],
    etas: &[f64],
    y: &[f64],
    counts: Option<&[u32]>,
) -> Selection {
    let n_eff = libm::round(mom.n) as usize;
    let mut steps: Vec<(Vec<usize>, Vec<f64>, f64, f64)> = Vec::with_capacity(etas.len());
    for &eta in etas {
        let support = support_of(beta, eta);
        if let Some(prev) = steps.last().filter(|s| s.0 == support) {
            let repeat = prev.clone();
            steps.push(repeat);
            continue;
        }
        let (coefs, mut rss) = problem.subset_ols(mom, &support);
        if counts.is_none() || rss <= GRAM_RSS_FLOOR * mom.syy {
            rss = problem.direct_rss(y, counts, &coefs);
        }
        let rss = rss.max(EXACT_FIT_RSS * mom.syy);
        let score = bic(rss, n_eff, support.len());
        steps.push((support, coefs, rss, score));
    }
    let mut chosen = 0;
    for (i, s) in steps.iter().enumerate() {
        let best = &steps[chosen];
        if s.3 < best.3 || (s.3 == best.3 && s.0.len() < best.0.len()) {
            chosen = i;
        }
    }
    Selection { steps, chosen }
}

/// Runs the pipeline on prepared states, derivatives and inputs.
pub fn fit_argosc_prepared(
    x: &DMatrix<f64>,
    dx: &DMatrix<f64>,
    u: &DMatrix<f64>,
    cfg: &PipelineConfig,
) -> Result<(SparseModel, Vec<StateTrace>)> {
    cfg.validate()?;
    if dx.nrows() != x.nrows() || dx.ncols() != x.ncols() {
        return Err(Error::Dimension("derivatives must match the states".into()));
    }
    let u = if cfg.include_inputs { u.clone() } else { DMatrix::zeros(x.nrows(), 0) };
    if x.nrows() < cfg.folds {
        return Err(Error::InvalidConfig(format!("{} rows cannot support {} folds", x.nrows(), cfg.folds)));
    }
    let theta0 = build_design_matrix(x, &u, &cfg.library())?;
    let mut equations = Vec::with_capacity(x.ncols());
    let mut traces = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let y: Vec<f64> = dx.column(j).iter().copied().collect();
        let (eq, trace) = fit_state(&theta0, &y, cfg)?;
        equations.push(eq);
        traces.push(trace);
    }
    Ok((SparseModel { n_states: x.ncols(), n_inputs: u.ncols(), equations }, traces))
}

/// Smooths `ds` and identifies one equation per state.
pub fn fit_argosc(ds: &TimeSeriesDataset, cfg: &PipelineConfig) -> Result<(SparseModel, SelectionTrace)> {
    cfg.validate()?;
    let sd = smooth_and_differentiate(ds, &cfg.sg)?;
    let (model, states) = fit_argosc_prepared(&sd.states, &sd.derivatives, ds.inputs(), cfg)?;
    let windows = sd.params_used.iter().map(|p| p.window).collect();
    Ok((model, SelectionTrace { windows, states }))
}

fn describe(lib: &DesignMatrix, cols: &[usize]) -> Vec<TermDescriptor> {
    cols.iter().map(|&k| lib.terms[k].clone()).collect()
}

fn fit_state(theta0: &DesignMatrix, y: &[f64], cfg: &PipelineConfig) -> Result<(StateEquation, StateTrace)> {
    let n = y.len();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();

    let p0 = Problem::new(theta0, ybar);
    let fit0 = penalized_fit(&p0.z, &yc, cfg.folds, cfg.penalty)?;
    let beta0 = p0.raw(&fit0.problem, &fit0.gamma);
    let support0: Vec<usize> =
        (0..beta0.len()).filter(|&k| beta0[k] != 0.0 && Some(k) != p0.constant).collect();

    let keep = trim_indices(&theta0.terms, &support0);
    let theta1 = theta0.select_columns(&keep);
    let trimmed_degree = theta1.terms.iter().filter(|t| !t.is_custom()).map(|t| t.degree()).max().unwrap_or(0);

    let p1 = Problem::new(&theta1, ybar);
    let fit1 = penalized_fit(&p1.z, &yc, cfg.folds, cfg.penalty)?;
    let beta1 = p1.raw(&fit1.problem, &fit1.gamma);
    let full_mom = Moments::from_rows(&p1.z, &yc, 0..n);
    let sel = select_threshold(&p1, &full_mom, &beta1, &cfg.eta_grid, y, None);
    let estimate = sel.steps[sel.chosen].1.clone();

    let lambda1 = fit1.lambda_star;
    let lambda_r = fit1.lambda_ridge;
    let intervals = bootstrap_ci(n, cfg.bootstrap_samples, cfg.alpha, cfg.seed, |counts| {
        let mom = Moments::weighted(&p1.z, &yc, counts);
        let sp = mom.standardized();
        let mut gamma = fit1.gamma.clone();
        if lambda1 > 0.0 {
            let w = match lambda_r {
                Some(lr) => adaptive_weights(&sp, lr),
                None => vec![1.0; gamma.len()],
            };
            sp.lasso(lambda1, &w, &mut gamma)?;
        } else {
            gamma.iter_mut().for_each(|g| *g = 0.0);
        }
        let beta = p1.raw(&sp, &gamma);
        let s = select_threshold(&p1, &mom, &beta, &cfg.eta_grid, y, Some(counts));
        Ok(s.steps[s.chosen].1.clone())
    })?;

    let interval = |k: usize| Interval { lower: intervals[k].lower, upper: intervals[k].upper, estimate: estimate[k] };
    let kept: Vec<usize> = (0..theta1.p()).filter(|&k| estimate[k] != 0.0 && interval(k).is_significant()).collect();
    let final_beta = if kept.is_empty() { vec![0.0; theta1.p()] } else { p1.subset_ols(&full_mom, &kept).0 };
    let terms: Vec<ModelTerm> = kept
        .iter()
        .map(|&k| ModelTerm { term: theta1.terms[k].clone(), value: final_beta[k], ci: Some(interval(k)) })
        .collect();
    debug_assert!(terms.iter().all(|t| t.ci.is_some_and(|ci| ci.is_significant())));

    let chosen = &sel.steps[sel.chosen];
    let eq = StateEquation {
        terms,
        diagnostics: FitDiagnostics {
            lambda_star: Some(lambda1),
            eta: Some(cfg.eta_grid[sel.chosen]),
            bic: Some(chosen.3),
            bootstrap_samples: cfg.bootstrap_samples,
        },
    };
    let trace = StateTrace {
        initial_support: describe(theta0, &support0),
        initial_lambda: fit0.lambda_star,
        ridge_lambda: fit0.lambda_ridge,
        trimmed_degree,
        trimmed_library: theta1.terms.clone(),
        refit: theta1.terms.iter().cloned().zip(beta1.iter().copied()).filter(|(_, b)| *b != 0.0).collect(),
        refit_lambda: lambda1,
        thresholds: sel
            .steps
            .iter()
            .zip(&cfg.eta_grid)
            .map(|((s, coefs, rss, score), &eta)| ThresholdStep {
                eta,
                support: describe(&theta1, s),
                coefficients: s.iter().map(|&k| coefs[k]).collect(),
                rss: *rss,
                bic: *score,
            })
            .collect(),
        chosen: sel.chosen,
        intervals: (0..theta1.p())
            .map(|k| TermInterval {
                term: theta1.terms[k].clone(),
                estimate: estimate[k],
                lower: intervals[k].lower,
                upper: intervals[k].upper,
                selected_count: intervals[k].selected_count,
                retained: kept.contains(&k),
            })
            .collect(),
    };
    Ok((eq, trace))
}

/// Human-readable summary of one state's trace.
pub fn describe_trace(trace: &StateTrace, names: &[String]) -> String {
    let label = |t: &TermDescriptor| t.label(names);
    let mut s = format!(
        "initial support ({}): {}\ntrimmed degree {} ({} columns), lambda* = {:.3e}\n",
        trace.initial_support.len(),
        trace.initial_support.iter().map(label).collect::<Vec<_>>().join(", "),
        trace.trimmed_degree,
        trace.trimmed_library.len(),
        trace.refit_lambda,
    );
    for (i, step) in trace.thresholds.iter().enumerate() {
        s += &format!(
            "{} eta {:.0e}: k = {}, BIC = {:.4}\n",
            if i == trace.chosen { "*" } else { " " },
            step.eta,
            step.support.len(),
            step.bic
        );
    }
    for iv in trace.intervals.iter().filter(|iv| iv.estimate != 0.0 || iv.retained) {
        s += &format!(
            "{} {}: {:.6} [{:.6}, {:.6}] selected {}\n",
            if iv.retained { "+" } else { "-" },
            label(&iv.term),
            iv.estimate,
            iv.lower,
            iv.upper,
            iv.selected_count
        );
    }
    s
}
