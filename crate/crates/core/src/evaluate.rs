//! Forward simulation of identified models, validation metrics and the
//! benchmark driver behind the result tables.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::data::{SparseModel, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::features::{CustomTerm, TermFn};
use crate::pipeline::{fit_argosc, PipelineConfig, SelectionTrace};
use crate::simulate::{add_noise, integrate, rk4_step, split, BenchmarkConfig, ForcingLaw, Rk4Scratch};
use crate::sindyc::{fit_sindyc, StlsConfig, DEFAULT_THRESHOLDS};

/// Any state magnitude above this counts as a blow-up.
pub const BLOW_UP: f64 = 1e6;

enum CompiledTerm {
    Monomial(Vec<(usize, u32)>),
    Custom(TermFn),
}

/// A model ready for repeated right-hand-side evaluation.
pub struct CompiledModel {
    n_states: usize,
    n_inputs: usize,
    equations: Vec<Vec<(f64, CompiledTerm)>>,
}

impl CompiledModel {
    /// Custom terms are looked up by tag in `custom`.
    pub fn new(model: &SparseModel, custom: &[CustomTerm]) -> Result<Self> {
        let nv = model.n_vars();
        let mut equations = Vec::with_capacity(model.equations.len());
        if model.equations.len() != model.n_states {
            return Err(Error::Dimension(format!(
                "{} equations for {} states",
                model.equations.len(),
                model.n_states
            )));
        }
        for eq in &model.equations {
            let mut terms = Vec::with_capacity(eq.terms.len());
            for t in &eq.terms {
                let compiled = match &t.term.custom_tag {
                    Some(tag) => {
                        let f = custom
                            .iter()
                            .find(|c| &c.tag == tag)
                            .ok_or_else(|| Error::InvalidConfig(format!("no custom term tagged {tag}")))?;
                        CompiledTerm::Custom(f.f.clone())
                    }
                    None => {
                        if t.term.exponents.len() != nv {
                            return Err(Error::Dimension(format!(
                                "term over {} variables in a model with {nv}",
                                t.term.exponents.len()
                            )));
                        }
                        CompiledTerm::Monomial(
                            t.term.exponents.iter().enumerate().filter(|(_, e)| **e > 0).map(|(v, e)| (v, *e)).collect(),
                        )
                    }
                };
                terms.push((t.value, compiled));
            }
            equations.push(terms);
        }
        Ok(Self { n_states: model.n_states, n_inputs: model.n_inputs, equations })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    /// `dx = f̂(vars)` with `vars = [x, u]`.
    pub fn rhs(&self, vars: &[f64], dx: &mut [f64]) {
        for (j, eq) in self.equations.iter().enumerate() {
            let mut acc = 0.0;
            for (c, term) in eq {
                let v = match term {
                    CompiledTerm::Monomial(f) => f.iter().map(|&(i, e)| crate::powu(vars[i], e)).product::<f64>(),
                    CompiledTerm::Custom(f) => f(vars),
                };
                acc += c * v;
            }
            dx[j] = acc;
        }
    }
}

/// Inputs supplied while simulating an identified model.
pub enum InputSource<'a> {
    /// Samples on the simulation grid, interpolated linearly at RK4 stages.
    Samples(&'a DMatrix<f64>),
    /// A feedback law evaluated on the predicted state.
    Feedback(&'a ForcingLaw),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    /// One row per grid point reached before any blow-up.
    pub states: DMatrix<f64>,
    pub divergence_time: Option<f64>,
}

/// RK4 simulation of `model` on `t_grid` (uniform). Stops at the first grid
/// point where a state leaves `[-BLOW_UP, BLOW_UP]` or is not finite.
pub fn simulate_model(
    model: &CompiledModel,
    x0: &[f64],
    inputs: &InputSource,
    t_grid: &[f64],
) -> Result<Trajectory> {
    let m = model.n_states;
    let r = model.n_inputs;
    if x0.len() != m {
        return Err(Error::Dimension(format!("x0 has {} entries, model has {m} states", x0.len())));
    }
    if t_grid.len() < 2 {
        return Err(Error::InvalidDataset("simulation grid needs at least two points".into()));
    }
    if let InputSource::Samples(u) = inputs {
        if r > 0 && (u.nrows() != t_grid.len() || u.ncols() < r) {
            return Err(Error::Dimension("input samples do not cover the grid".into()));
        }
    }
    if r > 0 && matches!(inputs, InputSource::None) {
        return Err(Error::InvalidConfig("model uses inputs but none were supplied".into()));
    }
    let n = t_grid.len();
    let h = t_grid[1] - t_grid[0];
    let mut out = DMatrix::zeros(n, m);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; m];
    let mut vars = vec![0.0; m + r];
    let mut scratch = Rk4Scratch::new(m);
    let mut reached = n;
    let mut divergence_time = None;
    for i in 0..n {
        if x.iter().any(|v| !v.is_finite() || libm::fabs(*v) > BLOW_UP) {
            reached = i;
            divergence_time = Some(t_grid[i]);
            break;
        }
        for j in 0..m {
            out[(i, j)] = x[j];
        }
        if i + 1 == n {
            break;
        }
        let t0 = t_grid[i];
        let mut f = |t: f64, xs: &[f64], dx: &mut [f64]| {
            vars[..m].copy_from_slice(xs);
            match inputs {
                InputSource::Samples(u) => {
                    let s = ((t - t0) / h).clamp(0.0, 1.0);
                    for k in 0..r {
                        vars[m + k] = (1.0 - s) * u[(i, k)] + s * u[(i + 1, k)];
                    }
                }
                InputSource::Feedback(law) => {
                    if r > 0 {
                        vars[m] = law.value(t, xs);
                    }
                }
                InputSource::None => {}
            }
            model.rhs(&vars, dx);
        };
        rk4_step(&mut f, t0, &x, h, &mut scratch, &mut next);
        core::mem::swap(&mut x, &mut next);
    }
    Ok(Trajectory { t: t_grid[..reached].to_vec(), states: out.rows(0, reached).into_owned(), divergence_time })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateScore {
    pub mse: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub states: Vec<StateScore>,
    /// Seconds covered by the scored prefix.
    pub horizon: f64,
    pub divergence_time: Option<f64>,
}

/// MSE and R² of `predicted` against the noise-free `truth`, over the rows
/// the prediction reached.
pub fn score(predicted: &Trajectory, truth: &DMatrix<f64>) -> Result<EvalReport> {
    let rows = predicted.states.nrows();
    if predicted.states.ncols() != truth.ncols() {
        return Err(Error::Dimension("prediction and truth have different state counts".into()));
    }
    if rows > truth.nrows() || (predicted.divergence_time.is_none() && rows != truth.nrows()) {
        return Err(Error::Dimension(format!("{rows} predicted rows against {} truth rows", truth.nrows())));
    }
    if rows == 0 {
        let nan = StateScore { mse: f64::NAN, r2: f64::NAN };
        return Ok(EvalReport { states: vec![nan; truth.ncols()], horizon: 0.0, divergence_time: predicted.divergence_time });
    }
    let states = (0..truth.ncols())
        .map(|j| {
            let x = truth.view((0, j), (rows, 1));
            let p = predicted.states.column(j);
            let mean = x.sum() / rows as f64;
            let sse: f64 = x.iter().zip(p.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            let sst: f64 = x.iter().map(|a| (a - mean) * (a - mean)).sum();
            let r2 = if sst > 0.0 {
                1.0 - sse / sst
            } else if sse == 0.0 {
                1.0
            } else {
                f64::NEG_INFINITY
            };
            StateScore { mse: sse / rows as f64, r2 }
        })
        .collect();
    let horizon = predicted.t.last().copied().unwrap_or(0.0) - predicted.t.first().copied().unwrap_or(0.0);
    Ok(EvalReport { states, horizon, divergence_time: predicted.divergence_time })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    Argosc,
    /// The pipeline with the inputs left out of the library.
    Argos,
    Sindyc,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Argosc => "ARGOSc",
            Method::Argos => "ARGOS",
            Method::Sindyc => "SINDYc",
        }
    }

    pub fn key(&self) -> &'static str {
        match self {
            Method::Argosc => "argosc",
            Method::Argos => "argos",
            Method::Sindyc => "sindyc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "argosc" => Some(Method::Argosc),
            "argos" => Some(Method::Argos),
            "sindyc" => Some(Method::Sindyc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkRequest {
    pub config: BenchmarkConfig,
    pub pipeline: PipelineConfig,
    pub stls: StlsConfig,
    /// SINDYc thresholds tried on the validation window; empty keeps
    /// `stls.threshold`.
    pub sindyc_thresholds: Vec<f64>,
    pub methods: Vec<Method>,
}

impl BenchmarkRequest {
    pub fn new(config: BenchmarkConfig, methods: Vec<Method>) -> Self {
        let pipeline = PipelineConfig { seed: config.seed, ..PipelineConfig::default() };
        Self { config, pipeline, stls: StlsConfig::default(), sindyc_thresholds: DEFAULT_THRESHOLDS.to_vec(), methods }
    }
}

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: Method,
    pub model: SparseModel,
    pub report: EvalReport,
    pub trajectory: Trajectory,
    pub trace: Option<SelectionTrace>,
    /// SINDYc threshold picked on validation data.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkResult {
    pub system: String,
    pub snr_db: Option<f64>,
    pub validation_t: Vec<f64>,
    pub validation_truth: DMatrix<f64>,
    pub methods: Vec<MethodResult>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TableRow {
    pub system: String,
    pub method: String,
    pub snr_db: Option<f64>,
    pub state: usize,
    pub mse: f64,
    pub r2: f64,
    pub divergence_time: Option<f64>,
}

impl BenchmarkResult {
    pub fn rows(&self) -> Vec<TableRow> {
        let mut rows = Vec::new();
        for mr in &self.methods {
            for (j, s) in mr.report.states.iter().enumerate() {
                rows.push(TableRow {
                    system: self.system.clone(),
                    method: mr.method.name().into(),
                    snr_db: self.snr_db,
                    state: j + 1,
                    mse: s.mse,
                    r2: s.r2,
                    divergence_time: mr.report.divergence_time,
                });
            }
        }
        rows
    }

    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }
}

/// Training and validation data of one benchmark cell.
pub struct PreparedData {
    pub train: TimeSeriesDataset,
    pub validation: TimeSeriesDataset,
}

pub fn prepare_data(cfg: &BenchmarkConfig) -> Result<PreparedData> {
    let clean = integrate(cfg)?;
    let observed = match cfg.snr_db {
        Some(snr) => add_noise(&clean, snr, cfg.seed)?,
        None => clean,
    };
    let (train, validation) = split(&observed, cfg.train_seconds)?;
    Ok(PreparedData { train, validation })
}

/// Simulates `model` over the validation window from the true boundary state.
pub fn validate_model(
    model: &SparseModel,
    custom: &[CustomTerm],
    forcing: &ForcingLaw,
    validation: &TimeSeriesDataset,
) -> Result<(Trajectory, EvalReport)> {
    let truth = validation
        .truth()
        .ok_or_else(|| Error::InvalidDataset("validation needs the noise-free truth".into()))?;
    let compiled = CompiledModel::new(model, custom)?;
    let x0: Vec<f64> = truth.row(0).iter().copied().collect();
    let inputs = if forcing.is_feedback() { InputSource::Feedback(forcing) } else { InputSource::Samples(validation.inputs()) };
    let traj = simulate_model(&compiled, &x0, &inputs, validation.t())?;
    let report = score(&traj, truth)?;
    Ok((traj, report))
}

fn mean_observed_mse(traj: &Trajectory, observed: &DMatrix<f64>) -> f64 {
    if traj.divergence_time.is_some() {
        return f64::INFINITY;
    }
    let d = &traj.states - observed;
    d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64
}

/// Simulate, add noise, split, fit every requested method and validate.
pub fn run_benchmark(req: &BenchmarkRequest) -> Result<BenchmarkResult> {
    let data = prepare_data(&req.config)?;
    let forcing = &req.config.forcing;
    let custom = &req.pipeline.custom;
    let mut methods = Vec::with_capacity(req.methods.len());
    for &method in &req.methods {
        let result = match method {
            Method::Argosc | Method::Argos => {
                let cfg = PipelineConfig { include_inputs: method == Method::Argosc, ..req.pipeline.clone() };
                let (model, trace) = fit_argosc(&data.train, &cfg)?;
                let (trajectory, report) = validate_model(&model, custom, forcing, &data.validation)?;
                MethodResult { method, model, report, trajectory, trace: Some(trace), threshold: None }
            }
            Method::Sindyc => {
                let grid = if req.sindyc_thresholds.is_empty() { vec![req.stls.threshold] } else { req.sindyc_thresholds.clone() };
                let mut best: Option<(f64, MethodResult)> = None;
                for &threshold in &grid {
                    let cfg = StlsConfig { threshold, ..req.stls };
                    let model = fit_sindyc(&data.train, &cfg)?;
                    let (trajectory, report) = validate_model(&model, &[], forcing, &data.validation)?;
                    let err = mean_observed_mse(&trajectory, data.validation.states());
                    if best.as_ref().is_none_or(|(e, _)| err < *e) {
                        let r = MethodResult { method, model, report, trajectory, trace: None, threshold: Some(threshold) };
                        best = Some((err, r));
                    }
                }
                best.map(|(_, r)| r).ok_or_else(|| Error::InvalidConfig("no SINDYc threshold given".into()))?
            }
        };
        methods.push(result);
    }
    let validation_truth = data.validation.truth().cloned().unwrap_or_else(|| data.validation.states().clone());
    Ok(BenchmarkResult {
        system: req.config.system.name().into(),
        snr_db: req.config.snr_db,
        validation_t: data.validation.t().to_vec(),
        validation_truth,
        methods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ModelTerm, StateEquation, TermDescriptor};
    use crate::simulate::{integrate_system, System};

    fn model(n_states: usize, n_inputs: usize, eqs: Vec<Vec<(Vec<u32>, f64)>>) -> SparseModel {
        SparseModel {
            n_states,
            n_inputs,
            equations: eqs
                .into_iter()
                .map(|terms| StateEquation {
                    terms: terms
                        .into_iter()
                        .map(|(e, v)| ModelTerm { term: TermDescriptor::monomial(e), value: v, ci: None })
                        .collect(),
                    ..StateEquation::default()
                })
                .collect(),
        }
    }

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * dt).collect()
    }

    #[test]
    fn empty_model_holds_state() {
        let m = CompiledModel::new(&model(1, 0, vec![vec![]]), &[]).unwrap();
        let tr = simulate_model(&m, &[5.0], &InputSource::None, &grid(100, 0.01)).unwrap();
        assert!(tr.states.iter().all(|v| *v == 5.0));
        assert_eq!(tr.divergence_time, None);
    }

    #[test]
    fn true_lorenz_model_matches_integrator() {
        let lorenz = model(
            3,
            1,
            vec![
                vec![(vec![1, 0, 0, 0], -10.0), (vec![0, 1, 0, 0], 10.0), (vec![0, 0, 0, 1], 1.0)],
                vec![(vec![1, 0, 0, 0], 28.0), (vec![0, 1, 0, 0], -1.0), (vec![1, 0, 1, 0], -1.0)],
                vec![(vec![1, 1, 0, 0], 1.0), (vec![0, 0, 1, 0], -8.0 / 3.0)],
            ],
        );
        let sys = System::lorenz();
        let law = sys.default_forcing();
        let ds = integrate_system(&sys, &law, &sys.default_x0(), 1.0, 1e-3, Default::default()).unwrap();
        let m = CompiledModel::new(&lorenz, &[]).unwrap();
        let tr = simulate_model(&m, &sys.default_x0(), &InputSource::Samples(ds.inputs()), ds.t()).unwrap();
        let err = (&tr.states - ds.states()).amax();
        assert!(err < 1e-6, "max deviation {err}");
    }

    #[test]
    fn quadratic_blow_up_time() {
        let m = CompiledModel::new(&model(1, 0, vec![vec![(vec![2], 1.0)]]), &[]).unwrap();
        let tr = simulate_model(&m, &[1.0], &InputSource::None, &grid(2001, 1e-3)).unwrap();
        let td = tr.divergence_time.unwrap();
        assert!((td - 1.0).abs() < 0.01, "blow-up at {td}");
        let last = tr.states[(tr.states.nrows() - 1, 0)];
        assert!(last <= BLOW_UP);
        let truth = DMatrix::from_fn(2001, 1, |i, _| 1.0 / (1.0 - (i as f64 * 1e-3).min(0.999)));
        let rep = score(&tr, &truth).unwrap();
        assert_eq!(rep.divergence_time, Some(td));
    }

    #[test]
    fn score_definitions() {
        let t = grid(50, 0.1);
        let truth = DMatrix::from_fn(50, 2, |i, j| libm::sin(i as f64 * 0.2 + j as f64));
        let exact = Trajectory { t: t.clone(), states: truth.clone(), divergence_time: None };
        let r = score(&exact, &truth).unwrap();
        assert!(r.states.iter().all(|s| s.mse == 0.0 && s.r2 == 1.0));

        let means: Vec<f64> = truth.column_iter().map(|c| c.sum() / 50.0).collect();
        let flat = Trajectory { t: t.clone(), states: DMatrix::from_fn(50, 2, |_, j| means[j]), divergence_time: None };
        let r = score(&flat, &truth).unwrap();
        assert!(r.states.iter().all(|s| s.r2.abs() < 1e-12));

        let short = Trajectory { t: t[..10].to_vec(), states: truth.rows(0, 10).into_owned(), divergence_time: None };
        assert!(score(&short, &truth).is_err());
    }

    #[test]
    fn common_shift_keeps_mse() {
        let t = grid(40, 0.1);
        let truth = DMatrix::from_fn(40, 1, |i, _| libm::cos(i as f64 * 0.3));
        let pred = truth.map(|v| 0.9 * v + 0.05);
        let a = score(&Trajectory { t: t.clone(), states: pred.clone(), divergence_time: None }, &truth).unwrap();
        let shifted = score(&Trajectory { t, states: pred.add_scalar(3.0), divergence_time: None }, &truth.add_scalar(3.0)).unwrap();
        assert!((a.states[0].mse - shifted.states[0].mse).abs() < 1e-12);
        // x̄ moves with the shift, so R² is unchanged as well
        assert!((a.states[0].r2 - shifted.states[0].r2).abs() < 1e-9);
    }

    #[test]
    fn feedback_inputs_follow_prediction() {
        // dx1 = x2, dx2 = u with u = -x1 - x2 recomputed on the prediction
        let m = CompiledModel::new(&model(2, 1, vec![vec![(vec![0, 1, 0], 1.0)], vec![(vec![0, 0, 1], 1.0)]]), &[]).unwrap();
        let law = ForcingLaw::PiFeedback { kp: 1.0, ki: 1.0 };
        let tr = simulate_model(&m, &[1.0, 0.0], &InputSource::Feedback(&law), &grid(3001, 1e-3)).unwrap();
        let closed = CompiledModel::new(&model(2, 0, vec![vec![(vec![0, 1], 1.0)], vec![(vec![1, 0], -1.0), (vec![0, 1], -1.0)]]), &[])
            .unwrap();
        let reference = simulate_model(&closed, &[1.0, 0.0], &InputSource::None, &grid(3001, 1e-3)).unwrap();
        assert!((&tr.states - &reference.states).amax() < 1e-12);
    }

    #[test]
    fn missing_custom_term_is_an_error() {
        let mut md = model(1, 0, vec![vec![]]);
        md.equations[0].terms.push(ModelTerm { term: TermDescriptor::custom(1, "sin_x1"), value: 1.0, ci: None });
        assert!(CompiledModel::new(&md, &[]).is_err());
        let c = CustomTerm::new("sin_x1", |v: &[f64]| libm::sin(v[0]));
        let cm = CompiledModel::new(&md, &[c]).unwrap();
        let mut dx = [0.0];
        cm.rhs(&[0.5], &mut dx);
        assert_eq!(dx[0], libm::sin(0.5));
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Argosc, Method::Argos, Method::Sindyc] {
            assert_eq!(Method::parse(m.key()), Some(m));
        }
        assert_eq!(Method::parse("lasso"), None);
    }
}
