//! Candidate library Θ(X, U): every monomial in the combined state and input
//! variables up to a total degree, followed by optional custom functions.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::data::{default_names, TermDescriptor};
use crate::error::{Error, Result};

pub type TermFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A user-supplied library function of one sample of the m+r variables.
#[derive(Clone)]
pub struct CustomTerm {
    pub tag: String,
    pub f: TermFn,
}

impl CustomTerm {
    pub fn new(tag: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { tag: tag.into(), f: Arc::new(f) }
    }
}

impl core::fmt::Debug for CustomTerm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "CustomTerm({})", self.tag)
    }
}

#[derive(Debug, Clone)]
pub struct LibrarySpec {
    pub degree: u32,
    pub custom: Vec<CustomTerm>,
    pub include_constant: bool,
}

impl LibrarySpec {
    pub fn polynomial(degree: u32) -> Self {
        Self { degree, custom: Vec::new(), include_constant: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::InvalidConfig("library degree must be at least 1".into()));
        }
        let mut tags: Vec<&str> = self.custom.iter().map(|c| c.tag.as_str()).collect();
        tags.sort_unstable();
        if tags.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("custom term tags must be unique".into()));
        }
        Ok(())
    }
}

/// Evaluated library: column `k` is `terms[k]` evaluated on every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub terms: Vec<TermDescriptor>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.terms.len()
    }

    pub fn constant_index(&self) -> Option<usize> {
        self.terms.iter().position(TermDescriptor::is_constant)
    }

    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix {
        DesignMatrix {
            values: self.values.select_columns(cols),
            terms: cols.iter().map(|&k| self.terms[k].clone()).collect(),
        }
    }

    /// Rows in the given order, repeats allowed.
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix { values: self.values.select_rows(rows), terms: self.terms.clone() }
    }
}

/// All exponent vectors over `n_vars` variables with total degree ≤ `degree`,
/// in descriptor order.
pub fn monomials(n_vars: usize, degree: u32) -> Vec<TermDescriptor> {
    fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<TermDescriptor>) {
        if pos == cur.len() {
            out.push(TermDescriptor::monomial(cur.clone()));
            return;
        }
        for e in 0..=left {
            cur[pos] = e;
            rec(pos + 1, left - e, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![0; n_vars];
    rec(0, degree, &mut cur, &mut out);
    out.sort();
    out
}

/// Builds Θ(X, U) with columns in graded-lex order and custom terms last.
pub fn build_design_matrix(x: &DMatrix<f64>, u: &DMatrix<f64>, spec: &LibrarySpec) -> Result<DesignMatrix> {
    spec.validate()?;
    let n = x.nrows();
    if u.nrows() != n {
        return Err(Error::Dimension(format!("X has {n} rows but U has {}", u.nrows())));
    }
    let (m, r) = (x.ncols(), u.ncols());
    let n_vars = m + r;
    let var_col = |v: usize| if v < m { x.column(v) } else { u.column(v - m) };

    // powers[v][e] = column of var v raised to e
    let d = spec.degree as usize;
    let mut powers: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n_vars);
    for v in 0..n_vars {
        let col = var_col(v);
        let mut table = vec![vec![1.0; n]];
        for e in 1..=d {
            let prev = &table[e - 1];
            let next: Vec<f64> = prev.iter().zip(col.iter()).map(|(p, c)| p * c).collect();
            table.push(next);
        }
        powers.push(table);
    }

    let mut terms: Vec<TermDescriptor> = monomials(n_vars, spec.degree)
        .into_iter()
        .filter(|t| spec.include_constant || !t.is_constant())
        .collect();
    let mut custom = spec.custom.clone();
    custom.sort_by(|a, b| a.tag.cmp(&b.tag));
    let p = terms.len() + custom.len();
    let mut values = DMatrix::zeros(n, p);
    let names = default_names(m, r);

    for (k, term) in terms.iter().enumerate() {
        let mut col = values.column_mut(k);
        col.fill(1.0);
        for (v, &e) in term.exponents.iter().enumerate() {
            if e > 0 {
                for (dst, src) in col.iter_mut().zip(&powers[v][e as usize]) {
                    *dst *= src;
                }
            }
        }
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteColumn { column: term.label(&names) });
        }
    }
    let mut row = vec![0.0; n_vars];
    let base = terms.len();
    for (c, ct) in custom.iter().enumerate() {
        let k = base + c;
        for i in 0..n {
            for (v, slot) in row.iter_mut().enumerate() {
                *slot = var_col(v)[i];
            }
            let val = (ct.f)(&row);
            if !val.is_finite() {
                return Err(Error::NonFiniteColumn { column: ct.tag.clone() });
            }
            values[(i, k)] = val;
        }
        terms.push(TermDescriptor::custom(n_vars, ct.tag.clone()));
    }
    Ok(DesignMatrix { values, terms })
}

/// Columns kept by [`trim_library`]: all monomials up to the largest degree
/// among the selected monomials (at least 1) plus the selected custom terms.
pub fn trim_indices(terms: &[TermDescriptor], selected: &[usize]) -> Vec<usize> {
    let top = selected
        .iter()
        .filter_map(|&k| terms.get(k))
        .filter(|t| !t.is_custom())
        .map(TermDescriptor::degree)
        .max()
        .unwrap_or(0)
        .max(1);
    terms
        .iter()
        .enumerate()
        .filter(|(k, t)| if t.is_custom() { selected.contains(k) } else { t.degree() <= top })
        .map(|(k, _)| k)
        .collect()
}

pub fn trim_library(dm: &DesignMatrix, selected: &[usize]) -> DesignMatrix {
    dm.select_columns(&trim_indices(&dm.terms, selected))
}

/// Per-column centring and scaling applied by [`standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRecord {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub zero_variance: Vec<bool>,
    pub constant: Option<usize>,
}

impl ScalingRecord {
    /// Maps coefficients of the standardized matrix back to the raw columns.
    /// The centring offsets are absorbed by the constant column.
    pub fn unstandardize(&self, coefs: &[f64]) -> Result<Vec<f64>> {
        if coefs.len() != self.means.len() {
            return Err(Error::Dimension(format!(
                "{} coefficients for {} columns",
                coefs.len(),
                self.means.len()
            )));
        }
        let mut out = vec![0.0; coefs.len()];
        let mut shift = 0.0;
        for k in 0..coefs.len() {
            if Some(k) == self.constant {
                continue;
            }
            out[k] = coefs[k] / self.scales[k];
            shift += out[k] * self.means[k];
        }
        match self.constant {
            Some(c) => out[c] = coefs[c] - shift,
            None if shift != 0.0 => {
                return Err(Error::InvalidConfig("centred columns need a constant column to absorb the means".into()))
            }
            None => {}
        }
        Ok(out)
    }

    /// Columns available to a penalized fit (non-constant, non-zero variance).
    pub fn penalizable(&self) -> Vec<usize> {
        (0..self.means.len())
            .filter(|&k| Some(k) != self.constant && !self.zero_variance[k])
            .collect()
    }
}

/// Centres every non-constant column and scales it to unit sample standard
/// deviation (n - 1 denominator). The constant column is left as is;
/// zero-variance columns are centred, keep scale 1 and are flagged.
pub fn standardize(dm: &DesignMatrix) -> (DesignMatrix, ScalingRecord) {
    let n = dm.n_rows();
    let p = dm.p();
    let constant = dm.constant_index();
    let mut values = dm.values.clone();
    let mut means = vec![0.0; p];
    let mut scales = vec![1.0; p];
    let mut zero_variance = vec![false; p];
    for k in 0..p {
        if Some(k) == constant {
            continue;
        }
        let mut col = values.column_mut(k);
        let mean = col.iter().sum::<f64>() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = if n > 1 { libm::sqrt(ss / (n - 1) as f64) } else { 0.0 };
        means[k] = mean;
        let magnitude = col.iter().fold(0.0f64, |a, v| a.max(libm::fabs(*v)));
        if sd <= 1e-12 * magnitude.max(f64::MIN_POSITIVE) || sd == 0.0 {
            zero_variance[k] = true;
            col.iter_mut().for_each(|v| *v -= mean);
        } else {
            scales[k] = sd;
            col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
        }
    }
    (
        DesignMatrix { values, terms: dm.terms.clone() },
        ScalingRecord { means, scales, zero_variance, constant },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::ols;
    use proptest::prelude::*;

    fn binom(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n - k + i) / i)
    }

    /// Brute-force count of exponent vectors with sum ≤ d.
    fn brute_count(n_vars: usize, d: u32) -> usize {
        let mut count = 0;
        let total = (d as usize + 1).pow(n_vars as u32);
        for code in 0..total {
            let mut c = code;
            let mut sum = 0;
            for _ in 0..n_vars {
                sum += c % (d as usize + 1);
                c /= d as usize + 1;
            }
            if sum <= d as usize {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn two_variable_quadratic_library() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let u = DMatrix::from_column_slice(3, 1, &[0.5, -1.0, 2.0]);
        let dm = build_design_matrix(&x, &u, &LibrarySpec::polynomial(2)).unwrap();
        assert_eq!(dm.p(), 6);
        let names = default_names(1, 1);
        let labels: Vec<String> = dm.terms.iter().map(|t| t.label(&names)).collect();
        assert_eq!(labels, ["1", "x1", "u1", "x1^2", "x1·u1", "u1^2"]);
        assert_eq!(dm.values[(2, 4)], 6.0);
        assert_eq!(dm.values[(1, 5)], 1.0);
    }

    #[test]
    fn column_counts_match_binomial() {
        for (m, r, d) in [(2usize, 1usize, 5u32), (3, 1, 5), (2, 1, 3), (3, 0, 5), (1, 2, 4)] {
            let expected = binom((m + r) as u64 + d as u64, d as u64) as usize;
            assert_eq!(brute_count(m + r, d), expected);
            let x = DMatrix::from_element(4, m, 1.1);
            let u = DMatrix::from_element(4, r, 0.9);
            let dm = build_design_matrix(&x, &u, &LibrarySpec::polynomial(d)).unwrap();
            assert_eq!(dm.p(), expected);
            let mut spec = LibrarySpec::polynomial(d);
            spec.include_constant = false;
            assert_eq!(build_design_matrix(&x, &u, &spec).unwrap().p(), expected - 1);
        }
        assert_eq!(monomials(4, 5).len(), 126);
    }

    #[test]
    fn zero_state_zeroes_state_terms() {
        let x = DMatrix::zeros(5, 1);
        let u = DMatrix::from_element(5, 1, 2.0);
        let dm = build_design_matrix(&x, &u, &LibrarySpec::polynomial(3)).unwrap();
        for (k, t) in dm.terms.iter().enumerate() {
            if t.exponents[0] > 0 {
                assert!(dm.values.column(k).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn custom_terms_follow_monomials_in_tag_order() {
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let u = DMatrix::zeros(2, 1);
        let mut spec = LibrarySpec::polynomial(1);
        spec.custom = vec![CustomTerm::new("sin_x1", |v: &[f64]| libm::sin(v[0])), CustomTerm::new("cos_x1", |v: &[f64]| libm::cos(v[0]))];
        let dm = build_design_matrix(&x, &u, &spec).unwrap();
        assert_eq!(dm.terms[3].custom_tag.as_deref(), Some("cos_x1"));
        assert_eq!(dm.terms[4].custom_tag.as_deref(), Some("sin_x1"));
        assert_eq!(dm.values[(1, 4)], libm::sin(1.0));

        spec.custom.push(CustomTerm::new("cos_x1", |_: &[f64]| 0.0));
        assert!(build_design_matrix(&x, &u, &spec).is_err());
    }

    #[test]
    fn overflow_names_the_column() {
        let x = DMatrix::from_column_slice(2, 1, &[1e80, 1.0]);
        let u = DMatrix::zeros(2, 1);
        match build_design_matrix(&x, &u, &LibrarySpec::polynomial(5)) {
            Err(Error::NonFiniteColumn { column }) => assert_eq!(column, "x1^4"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trimming_rules() {
        let x = DMatrix::from_element(3, 1, 1.5);
        let u = DMatrix::from_element(3, 1, 0.5);
        let mut spec = LibrarySpec::polynomial(5);
        spec.custom = vec![CustomTerm::new("phi", |v: &[f64]| v[0] * 2.0)];
        let dm = build_design_matrix(&x, &u, &spec).unwrap();
        let idx = |e: &[u32]| dm.terms.iter().position(|t| t.exponents == e && !t.is_custom()).unwrap();

        let trimmed = trim_library(&dm, &[idx(&[2, 0]), idx(&[0, 0])]);
        assert_eq!(trimmed.p(), 6);
        assert!(trimmed.terms.iter().all(|t| t.degree() <= 2 && !t.is_custom()));

        let phi = dm.p() - 1;
        let trimmed = trim_library(&dm, &[idx(&[1, 0]), phi]);
        assert_eq!(trimmed.terms.last().unwrap().custom_tag.as_deref(), Some("phi"));

        let all: Vec<usize> = (0..dm.p()).collect();
        assert_eq!(trim_library(&dm, &all), dm);

        // nothing selected still keeps the linear library
        assert_eq!(trim_library(&dm, &[]).p(), 3);
    }

    #[test]
    fn standardize_small_column() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let u = DMatrix::from_element(3, 1, 4.0);
        let dm = build_design_matrix(&x, &u, &LibrarySpec::polynomial(1)).unwrap();
        let (s, rec) = standardize(&dm);
        // sample sd of {1,2,3} is 1; the population sd would give ±1.2247
        let expected = [-1.0, 0.0, 1.0];
        for i in 0..3 {
            assert!((s.values[(i, 1)] - expected[i]).abs() < 1e-12);
            assert_eq!(s.values[(i, 0)], 1.0);
        }
        assert_eq!(rec.constant, Some(0));
        assert!(rec.zero_variance[2]);
        assert!(!rec.zero_variance[1]);
        assert_eq!(rec.penalizable(), vec![1]);
    }

    #[test]
    fn back_transform_recovers_raw_ols() {
        let n = 40;
        // pseudo-random values; smooth periodic signals make quadratic columns collinear
        let mut s = 12345u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let x = DMatrix::from_fn(n, 2, |_, j| next() * (2.0 + j as f64) + 1.0);
        let u = DMatrix::from_fn(n, 1, |_, _| next() - 0.5);
        let dm = build_design_matrix(&x, &u, &LibrarySpec::polynomial(2)).unwrap();
        let y: Vec<f64> = (0..n).map(|i| 0.3 + x[(i, 0)] * 2.0 - x[(i, 1)] * u[(i, 0)] + libm::sin(i as f64)).collect();
        let raw = ols(&dm.values, &y).unwrap();
        let (s, rec) = standardize(&dm);
        let std_fit = ols(&s.values, &y).unwrap();
        let back = rec.unstandardize(&std_fit.coefficients).unwrap();
        for (a, b) in raw.coefficients.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }

    proptest! {
        #[test]
        fn columns_match_descriptors_and_permute_with_rows(
            data in proptest::collection::vec(-2.0f64..2.0, 18),
            perm_seed in 0u64..1000,
        ) {
            let n = 6;
            let x = DMatrix::from_column_slice(n, 2, &data[..12]);
            let u = DMatrix::from_column_slice(n, 1, &data[12..]);
            let dm = build_design_matrix(&x, &u, &LibrarySpec::polynomial(3)).unwrap();
            for (k, t) in dm.terms.iter().enumerate() {
                for i in 0..n {
                    let vars = [x[(i, 0)], x[(i, 1)], u[(i, 0)]];
                    prop_assert_eq!(dm.values[(i, k)], t.eval_monomial(&vars));
                }
            }
            let mut perm: Vec<usize> = (0..n).collect();
            let mut s = perm_seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let xp = x.select_rows(&perm);
            let up = u.select_rows(&perm);
            let dmp = build_design_matrix(&xp, &up, &LibrarySpec::polynomial(3)).unwrap();
            prop_assert_eq!(dmp, dm.select_rows(&perm));
        }

        #[test]
        fn trimming_is_idempotent(picks in proptest::collection::vec(0usize..56, 0..6)) {
            let x = DMatrix::from_element(2, 2, 1.3);
            let u = DMatrix::from_element(2, 1, 0.7);
            let dm = build_design_matrix(&x, &u, &LibrarySpec::polynomial(5)).unwrap();
            let once = trim_library(&dm, &picks);
            let picked: Vec<&TermDescriptor> = picks.iter().map(|&k| &dm.terms[k]).collect();
            let again_sel: Vec<usize> = once.terms.iter().enumerate().filter(|(_, t)| picked.contains(t)).map(|(k, _)| k).collect();
            prop_assert_eq!(trim_library(&once, &again_sel), once);
        }
    }
}
