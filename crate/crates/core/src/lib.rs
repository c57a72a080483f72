//! Identification of governing equations for forced dynamical systems from
//! noisy time series.
//!
//! The pipeline smooths and differentiates the measured states, builds a
//! library of monomials in states and inputs, selects terms with a
//! cross-validated (adaptive) lasso, refines the support over a threshold
//! grid by BIC and keeps only the terms whose bootstrap confidence interval
//! excludes zero. A sequentially thresholded least squares baseline and the
//! three forced benchmark systems are included for comparison.
//!
//! The crate is `no_std` and only needs `alloc`; file formats and the
//! command line live in the `argosc` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod pipeline;
pub mod simulate;
pub mod regress;
pub mod sindyc;
pub mod smooth;

pub use data::{
    default_names, render_model, FitDiagnostics, Interval, ModelTerm, Provenance, SparseModel, StateEquation, TermDescriptor,
    TimeSeriesDataset,
};
pub use error::{Error, Result};

/// `x^e` by repeated multiplication.
#[inline]
pub(crate) fn powu(x: f64, e: u32) -> f64 {
    match e {
        0 => 1.0,
        1 => x,
        2 => x * x,
        _ => {
            let mut acc = 1.0;
            for _ in 0..e {
                acc *= x;
            }
            acc
        }
    }
}
