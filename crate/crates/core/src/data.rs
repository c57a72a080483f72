//! Shared domain types: sampled trajectories, library term descriptors and
//! fitted sparse models.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative tolerance on the spacing of the time grid.
pub const GRID_TOLERANCE: f64 = 1e-9;

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub system: String,
    pub parameters: Vec<(String, f64)>,
    /// Signal-to-noise ratio of the measurement noise; `None` means noise free.
    pub snr_db: Option<f64>,
    pub seed: Option<u64>,
}

/// A uniformly sampled trajectory of a forced system.
///
/// Rows are samples. `states` is n×m, `inputs` n×r and `truth`, when present,
/// holds the noise-free states with the same shape as `states`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    t: Vec<f64>,
    states: DMatrix<f64>,
    inputs: DMatrix<f64>,
    truth: Option<DMatrix<f64>>,
    meta: Provenance,
}

impl TimeSeriesDataset {
    pub fn new(
        t: Vec<f64>,
        states: DMatrix<f64>,
        inputs: DMatrix<f64>,
        truth: Option<DMatrix<f64>>,
        meta: Provenance,
    ) -> Result<Self> {
        let n = t.len();
        if n < 2 {
            return Err(Error::InvalidDataset(format!("need at least 2 samples, got {n}")));
        }
        if states.nrows() != n || inputs.nrows() != n {
            return Err(Error::InvalidDataset(format!(
                "row counts differ: t has {n}, states {}, inputs {}",
                states.nrows(),
                inputs.nrows()
            )));
        }
        if states.ncols() == 0 {
            return Err(Error::InvalidDataset("dataset has no state columns".into()));
        }
        if let Some(truth) = &truth {
            if truth.shape() != states.shape() {
                return Err(Error::InvalidDataset(format!(
                    "truth shape {:?} differs from states shape {:?}",
                    truth.shape(),
                    states.shape()
                )));
            }
        }
        check_grid(&t)?;
        check_finite("states", &states)?;
        check_finite("inputs", &inputs)?;
        if let Some(truth) = &truth {
            check_finite("truth", truth)?;
        }
        Ok(Self { t, states, inputs, truth, meta })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.states.ncols()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    /// Sampling interval, taken as the mean spacing of the grid.
    pub fn dt(&self) -> f64 {
        (self.t[self.t.len() - 1] - self.t[0]) / (self.t.len() - 1) as f64
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn truth(&self) -> Option<&DMatrix<f64>> {
        self.truth.as_ref()
    }

    pub fn meta(&self) -> &Provenance {
        &self.meta
    }

    pub fn with_meta(mut self, meta: Provenance) -> Self {
        self.meta = meta;
        self
    }

    /// Replaces the observed states, keeping grid, inputs and truth.
    pub fn with_states(&self, states: DMatrix<f64>) -> Result<Self> {
        Self::new(
            self.t.clone(),
            states,
            self.inputs.clone(),
            self.truth.clone(),
            self.meta.clone(),
        )
    }

    /// Rows `start..end` as a new dataset with the same provenance.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidDataset(format!(
                "row range {start}..{end} outside 0..{}",
                self.len()
            )));
        }
        let rows = end - start;
        Self::new(
            self.t[start..end].to_vec(),
            self.states.rows(start, rows).into_owned(),
            self.inputs.rows(start, rows).into_owned(),
            self.truth.as_ref().map(|m| m.rows(start, rows).into_owned()),
            self.meta.clone(),
        )
    }
}

fn check_grid(t: &[f64]) -> Result<()> {
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("non-finite timestamp".into()));
    }
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidDataset("non-increasing time grid".into()));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    for (i, w) in t.windows(2).enumerate() {
        let step = w[1] - w[0];
        if libm::fabs(step - dt) > GRID_TOLERANCE * dt.max(libm::fabs(w[1])) {
            return Err(Error::InvalidDataset(format!(
                "non-uniform time grid at sample {}: step {step} vs mean {dt}",
                i + 1
            )));
        }
    }
    Ok(())
}

fn check_finite(what: &str, m: &DMatrix<f64>) -> Result<()> {
    for (j, col) in m.column_iter().enumerate() {
        if let Some(i) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite entry in {what} column {} at row {i}",
                j + 1
            )));
        }
    }
    Ok(())
}

/// One candidate function of the library.
///
/// `exponents` has one entry per state followed by one per input. The
/// all-zero monomial is the constant term. Custom terms carry a tag and keep
/// all-zero exponents.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TermDescriptor {
    pub exponents: Vec<u32>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub custom_tag: Option<String>,
}

impl TermDescriptor {
    pub fn monomial(exponents: Vec<u32>) -> Self {
        Self { exponents, custom_tag: None }
    }

    pub fn constant(n_vars: usize) -> Self {
        Self::monomial(alloc::vec![0; n_vars])
    }

    pub fn custom(n_vars: usize, tag: impl Into<String>) -> Self {
        Self { exponents: alloc::vec![0; n_vars], custom_tag: Some(tag.into()) }
    }

    /// Variable `index` to the first power.
    pub fn variable(n_vars: usize, index: usize) -> Self {
        let mut e = alloc::vec![0; n_vars];
        e[index] = 1;
        Self::monomial(e)
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn is_custom(&self) -> bool {
        self.custom_tag.is_some()
    }

    pub fn is_constant(&self) -> bool {
        !self.is_custom() && self.degree() == 0
    }

    /// True when any exponent past the first `n_states` variables is non-zero.
    pub fn involves_inputs(&self, n_states: usize) -> bool {
        self.exponents.iter().skip(n_states).any(|&e| e > 0)
    }

    /// Evaluates a monomial at one sample of the m+r variables.
    pub fn eval_monomial(&self, vars: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(vars)
            .fold(1.0, |acc, (&e, &x)| acc * crate::powu(x, e))
    }

    /// Readable label such as `x1^2·u1`.
    pub fn label(&self, names: &[String]) -> String {
        if let Some(tag) = &self.custom_tag {
            return tag.clone();
        }
        if self.degree() == 0 {
            return "1".into();
        }
        let mut out = String::new();
        for (name, &e) in names.iter().zip(&self.exponents) {
            if e == 0 {
                continue;
            }
            if !out.is_empty() {
                out.push('·');
            }
            out.push_str(name);
            if e > 1 {
                let _ = write!(out, "^{e}");
            }
        }
        out
    }
}

impl Ord for TermDescriptor {
    /// Graded lexicographic order: total degree first, then exponents with
    /// earlier variables ranking first (`x` before `u`, `x²` before `x·u`).
    /// Custom terms follow every monomial, ordered by tag.
    fn cmp(&self, other: &Self) -> Ordering {
        match (&self.custom_tag, &other.custom_tag) {
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (Some(a), Some(b)) => a.cmp(b).then_with(|| self.exponents.cmp(&other.exponents)),
            (None, None) => self
                .degree()
                .cmp(&other.degree())
                .then_with(|| other.exponents.cmp(&self.exponents)),
        }
    }
}

impl PartialOrd for TermDescriptor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One retained library term of a state equation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelTerm {
    pub term: TermDescriptor,
    pub value: f64,
    /// Percentile bootstrap interval, absent for methods without a bootstrap.
    pub ci: Option<Interval>,
}

/// Bootstrap interval of a retained term together with the point estimate it
/// was checked against before the final refit.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub estimate: f64,
}

impl Interval {
    /// Excludes zero and contains the point estimate.
    pub fn is_significant(&self) -> bool {
        (self.lower > 0.0 || self.upper < 0.0) && self.lower <= self.estimate && self.estimate <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitDiagnostics {
    pub lambda_star: Option<f64>,
    pub eta: Option<f64>,
    pub bic: Option<f64>,
    pub bootstrap_samples: usize,
}

/// Right-hand side of one state, `dx_j/dt = Σ value·term`.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateEquation {
    pub terms: Vec<ModelTerm>,
    pub diagnostics: FitDiagnostics,
}

impl StateEquation {
    pub fn coefficient(&self, term: &TermDescriptor) -> Option<f64> {
        self.terms.iter().find(|t| &t.term == term).map(|t| t.value)
    }

    pub fn support(&self) -> Vec<TermDescriptor> {
        let mut s: Vec<_> = self.terms.iter().map(|t| t.term.clone()).collect();
        s.sort();
        s
    }
}

/// Identified governing equations, one per state.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SparseModel {
    pub n_states: usize,
    /// Number of input variables the term descriptors index (0 when the
    /// library excluded inputs).
    pub n_inputs: usize,
    pub equations: Vec<StateEquation>,
}

impl SparseModel {
    pub fn n_vars(&self) -> usize {
        self.n_states + self.n_inputs
    }

    /// Default variable names `x1..xm, u1..ur`.
    pub fn default_names(&self) -> Vec<String> {
        default_names(self.n_states, self.n_inputs)
    }
}

pub fn default_names(n_states: usize, n_inputs: usize) -> Vec<String> {
    (1..=n_states)
        .map(|i| format!("x{i}"))
        .chain((1..=n_inputs).map(|i| format!("u{i}")))
        .collect()
}

/// Renders one line per state, terms in descriptor order, coefficients with
/// three decimals.
pub fn render_model(model: &SparseModel, names: &[String]) -> Result<String> {
    if names.len() != model.n_vars() {
        return Err(Error::Dimension(format!(
            "model has {} variables but {} names were given",
            model.n_vars(),
            names.len()
        )));
    }
    let mut out = String::new();
    for (j, eq) in model.equations.iter().enumerate() {
        if j > 0 {
            out.push('\n');
        }
        let _ = write!(out, "d{}/dt = ", names[j]);
        let mut terms: Vec<&ModelTerm> = eq.terms.iter().collect();
        terms.sort_by(|a, b| a.term.cmp(&b.term));
        if terms.is_empty() {
            out.push('0');
            continue;
        }
        for (k, t) in terms.iter().enumerate() {
            let mag = libm::fabs(t.value);
            match (k, t.value.is_sign_negative()) {
                (0, false) => {}
                (0, true) => out.push('-'),
                (_, false) => out.push_str(" + "),
                (_, true) => out.push_str(" - "),
            }
            if t.term.is_constant() {
                let _ = write!(out, "{mag:.3}");
            } else {
                let _ = write!(out, "{mag:.3}·{}", t.term.label(names));
            }
        }
    }
    Ok(out)
}

impl core::fmt::Display for SparseModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match render_model(self, &self.default_names()) {
            Ok(s) => f.write_str(&s),
            Err(e) => f.write_str(&e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn term(e: &[u32], value: f64) -> ModelTerm {
        ModelTerm { term: TermDescriptor::monomial(e.to_vec()), value, ci: None }
    }

    #[test]
    fn dataset_rejects_nan_and_bad_grids() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, f64::NAN, 2.0]);
        let u = DMatrix::zeros(3, 1);
        let err = TimeSeriesDataset::new(vec![0.0, 0.1, 0.2], x, u.clone(), None, Provenance::default());
        assert!(matches!(err, Err(Error::InvalidDataset(_))));

        let x = DMatrix::zeros(3, 1);
        let err = TimeSeriesDataset::new(vec![0.0, 0.2, 0.1], x.clone(), u.clone(), None, Provenance::default())
            .unwrap_err();
        assert!(err.to_string().contains("non-increasing time grid"));

        let err = TimeSeriesDataset::new(vec![0.0, 0.1, 0.3], x, u, None, Provenance::default()).unwrap_err();
        assert!(err.to_string().contains("non-uniform"));
    }

    #[test]
    fn graded_lex_order_puts_states_first() {
        let mut terms = [TermDescriptor::monomial(vec![0, 2]),
            TermDescriptor::custom(2, "sin"),
            TermDescriptor::monomial(vec![1, 1]),
            TermDescriptor::monomial(vec![0, 1]),
            TermDescriptor::monomial(vec![2, 0]),
            TermDescriptor::monomial(vec![1, 0]),
            TermDescriptor::monomial(vec![0, 0])];
        terms.sort();
        let labels: Vec<String> = terms.iter().map(|t| t.label(&names(&["x", "u"]))).collect();
        assert_eq!(labels, ["1", "x", "u", "x^2", "x·u", "u^2", "sin"]);
    }

    #[test]
    fn renders_single_term_and_empty_equations() {
        let model = SparseModel {
            n_states: 2,
            n_inputs: 1,
            equations: vec![
                StateEquation { terms: vec![term(&[0, 1, 0], 1.0)], ..Default::default() },
                StateEquation::default(),
            ],
        };
        let text = render_model(&model, &model.default_names()).unwrap();
        assert_eq!(text, "dx1/dt = 1.000·x2\ndx2/dt = 0");
        assert!(render_model(&model, &names(&["a", "b"])).is_err());
    }

    #[test]
    fn renders_lorenz_structure() {
        let beta = 8.0 / 3.0;
        let model = SparseModel {
            n_states: 3,
            n_inputs: 1,
            equations: vec![
                StateEquation {
                    terms: vec![term(&[0, 1, 0, 0], 10.0), term(&[1, 0, 0, 0], -10.0), term(&[0, 0, 0, 1], 1.0)],
                    ..Default::default()
                },
                StateEquation {
                    terms: vec![term(&[1, 0, 1, 0], -1.0), term(&[1, 0, 0, 0], 28.0), term(&[0, 1, 0, 0], -1.0)],
                    ..Default::default()
                },
                StateEquation {
                    terms: vec![term(&[1, 1, 0, 0], 1.0), term(&[0, 0, 1, 0], -beta)],
                    ..Default::default()
                },
            ],
        };
        let text = render_model(&model, &model.default_names()).unwrap();
        assert_eq!(
            text,
            "dx1/dt = -10.000·x1 + 10.000·x2 + 1.000·u1\n\
             dx2/dt = 28.000·x1 - 1.000·x2 - 1.000·x1·x3\n\
             dx3/dt = -2.667·x3 + 1.000·x1·x2"
        );
    }

    #[test]
    fn constant_term_renders_without_label() {
        let model = SparseModel {
            n_states: 1,
            n_inputs: 0,
            equations: vec![StateEquation {
                terms: vec![term(&[1], -2.0), term(&[0], 0.5)],
                ..Default::default()
            }],
        };
        assert_eq!(model.to_string(), "dx1/dt = 0.500 - 2.000·x1");
    }
}
