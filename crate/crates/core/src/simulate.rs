//! Ground-truth trajectories of the benchmark systems under their forcing
//! laws, measurement noise injection and train/validation splitting.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Provenance, TimeSeriesDataset};
use crate::error::{Error, Result};

/// Autonomous part of a forced system, `dx/dt = f(x, u)`.
pub trait Dynamics {
    fn dim(&self) -> usize;
    fn rhs(&self, x: &[f64], u: f64, dx: &mut [f64]);
}

/// Built-in benchmark systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum System {
    /// `x1' = x2`, `x2' = mu (1 - x1²) x2 - x1 + u`.
    VanDerPol { mu: f64 },
    /// `x1' = x1 (a - b x2) + u`, `x2' = -x2 (c - d x1)`.
    LotkaVolterra { a: f64, b: f64, c: f64, d: f64 },
    /// Lorenz-63 with the input added to the first equation.
    Lorenz { sigma: f64, rho: f64, beta: f64 },
}

impl System {
    pub fn van_der_pol() -> Self {
        System::VanDerPol { mu: 1.2 }
    }

    pub fn lotka_volterra() -> Self {
        System::LotkaVolterra { a: 8.0, b: 1.0, c: 4.0, d: 1.0 }
    }

    pub fn lorenz() -> Self {
        System::Lorenz { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            System::VanDerPol { .. } => "van_der_pol",
            System::LotkaVolterra { .. } => "lotka_volterra",
            System::Lorenz { .. } => "lorenz",
        }
    }

    pub fn parameters(&self) -> Vec<(String, f64)> {
        let p: &[(&str, f64)] = match *self {
            System::VanDerPol { mu } => &[("mu", mu)],
            System::LotkaVolterra { a, b, c, d } => &[("a", a), ("b", b), ("c", c), ("d", d)],
            System::Lorenz { sigma, rho, beta } => &[("sigma", sigma), ("rho", rho), ("beta", beta)],
        };
        p.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    /// Initial state used when a configuration does not give one.
    pub fn default_x0(&self) -> Vec<f64> {
        match self {
            System::VanDerPol { .. } => vec![2.0, 0.0],
            System::LotkaVolterra { .. } => vec![4.0, 2.0],
            System::Lorenz { .. } => vec![-8.0, 7.0, 27.0],
        }
    }

    /// Forcing law the system is benchmarked with.
    pub fn default_forcing(&self) -> ForcingLaw {
        match self {
            System::VanDerPol { .. } => ForcingLaw::PiFeedback { kp: 1.0, ki: 1.0 },
            System::LotkaVolterra { .. } => ForcingLaw::Sinusoid { ku: 1.0 },
            System::Lorenz { .. } => ForcingLaw::CosCubed { ku: 1.0 },
        }
    }
}

impl Dynamics for System {
    fn dim(&self) -> usize {
        match self {
            System::VanDerPol { .. } | System::LotkaVolterra { .. } => 2,
            System::Lorenz { .. } => 3,
        }
    }

    fn rhs(&self, x: &[f64], u: f64, dx: &mut [f64]) {
        match *self {
            System::VanDerPol { mu } => {
                dx[0] = x[1];
                dx[1] = mu * (1.0 - x[0] * x[0]) * x[1] - x[0] + u;
            }
            System::LotkaVolterra { a, b, c, d } => {
                dx[0] = x[0] * (a - b * x[1]) + u;
                dx[1] = -x[1] * (c - d * x[0]);
            }
            System::Lorenz { sigma, rho, beta } => {
                dx[0] = sigma * (x[1] - x[0]) + u;
                dx[1] = x[0] * (rho - x[2]) - x[1];
                dx[2] = x[0] * x[1] - beta * x[2];
            }
        }
    }
}

/// User-supplied dynamics from a closure `f(x, u, dx)`.
pub struct FnDynamics<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], f64, &mut [f64])> Dynamics for FnDynamics<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, x: &[f64], u: f64, dx: &mut [f64]) {
        (self.f)(x, u, dx)
    }
}

pub type ForcingFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Scalar input signal applied to the system.
#[derive(Clone)]
pub enum ForcingLaw {
    /// State feedback `u = -kp x1 - ki x2`.
    PiFeedback { kp: f64, ki: f64 },
    /// `u = ku sin t`.
    Sinusoid { ku: f64 },
    /// `u = ku cos³ t`.
    CosCubed { ku: f64 },
    Zero,
    Custom { name: String, f: ForcingFn },
}

impl core::fmt::Debug for ForcingLaw {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ForcingLaw::PiFeedback { kp, ki } => write!(f, "PiFeedback {{ kp: {kp}, ki: {ki} }}"),
            ForcingLaw::Sinusoid { ku } => write!(f, "Sinusoid {{ ku: {ku} }}"),
            ForcingLaw::CosCubed { ku } => write!(f, "CosCubed {{ ku: {ku} }}"),
            ForcingLaw::Zero => f.write_str("Zero"),
            ForcingLaw::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl ForcingLaw {
    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            ForcingLaw::PiFeedback { kp, ki } => -kp * x[0] - ki * x[1],
            ForcingLaw::Sinusoid { ku } => ku * libm::sin(t),
            ForcingLaw::CosCubed { ku } => {
                let c = libm::cos(t);
                ku * c * c * c
            }
            ForcingLaw::Zero => 0.0,
            ForcingLaw::Custom { f, .. } => f(t, x),
        }
    }

    /// Whether the law reads the state (and must be recomputed in closed loop).
    pub fn is_feedback(&self) -> bool {
        matches!(self, ForcingLaw::PiFeedback { .. } | ForcingLaw::Custom { .. })
    }

    pub fn name(&self) -> String {
        match self {
            ForcingLaw::PiFeedback { .. } => "pi_feedback".into(),
            ForcingLaw::Sinusoid { .. } => "sinusoid".into(),
            ForcingLaw::CosCubed { .. } => "cos_cubed".into(),
            ForcingLaw::Zero => "zero".into(),
            ForcingLaw::Custom { name, .. } => name.clone(),
        }
    }

    pub fn parameters(&self) -> Vec<(String, f64)> {
        match *self {
            ForcingLaw::PiFeedback { kp, ki } => vec![("kp".into(), kp), ("ki".into(), ki)],
            ForcingLaw::Sinusoid { ku } | ForcingLaw::CosCubed { ku } => vec![("ku".into(), ku)],
            ForcingLaw::Zero | ForcingLaw::Custom { .. } => Vec::new(),
        }
    }
}

/// Everything needed to regenerate one experiment's data.
#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub system: System,
    pub forcing: ForcingLaw,
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    /// `None` for noise-free data.
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub train_seconds: f64,
}

impl BenchmarkConfig {
    /// 30 s at 1 ms sampling, 10 s of training data, default initial state
    /// and forcing for the system.
    pub fn standard(system: System, snr_db: Option<f64>, seed: u64) -> Self {
        Self {
            forcing: system.default_forcing(),
            x0: system.default_x0(),
            system,
            t_end: 30.0,
            dt: 1e-3,
            snr_db,
            seed,
            train_seconds: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.train_seconds > 0.0 && self.t_end > self.train_seconds) || !self.t_end.is_finite() {
            return bad(format!(
                "need t_end > train_seconds > 0, got t_end {} and train_seconds {}",
                self.t_end, self.train_seconds
            ));
        }
        if self.x0.len() != self.system.dim() {
            return bad(format!(
                "{} has {} states but x0 has {} entries",
                self.system.name(),
                self.system.dim(),
                self.x0.len()
            ));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return bad("x0 must be finite".into());
        }
        if let ForcingLaw::PiFeedback { .. } = self.forcing {
            if self.system.dim() < 2 {
                return bad("feedback forcing needs at least two states".into());
            }
        }
        if let Some(snr) = self.snr_db {
            if snr.is_nan() || snr == f64::NEG_INFINITY {
                return bad(format!("invalid SNR {snr}"));
            }
        }
        Ok(())
    }

    pub fn provenance(&self) -> Provenance {
        let mut parameters = self.system.parameters();
        parameters.extend(self.forcing.parameters());
        parameters.extend(self.x0.iter().enumerate().map(|(i, v)| (format!("x0_{}", i + 1), *v)));
        Provenance {
            system: format!("{}+{}", self.system.name(), self.forcing.name()),
            parameters,
            snr_db: self.snr_db.filter(|s| s.is_finite()),
            seed: Some(self.seed),
        }
    }
}

/// Number of samples on the inclusive grid `0, dt, ..., t_end`.
pub fn grid_len(t_end: f64, dt: f64) -> usize {
    libm::floor(t_end / dt + 1e-6) as usize + 1
}

fn axpy(out: &mut [f64], x: &[f64], h: f64, k: &[f64]) {
    for ((o, &xi), &ki) in out.iter_mut().zip(x).zip(k) {
        *o = xi + h * ki;
    }
}

/// One classical Runge-Kutta step of `dx/dt = f(t, x)`.
pub(crate) fn rk4_step<F>(f: &mut F, t: f64, x: &[f64], h: f64, scratch: &mut Rk4Scratch, out: &mut [f64])
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let Rk4Scratch { k1, k2, k3, k4, tmp } = scratch;
    f(t, x, k1);
    axpy(tmp, x, 0.5 * h, k1);
    f(t + 0.5 * h, tmp, k2);
    axpy(tmp, x, 0.5 * h, k2);
    f(t + 0.5 * h, tmp, k3);
    axpy(tmp, x, h, k3);
    f(t + h, tmp, k4);
    for i in 0..x.len() {
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

pub(crate) struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    pub(crate) fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }
}

/// Fixed-step RK4 trajectory of `dynamics` driven by `forcing` on the grid
/// `0, dt, ..., t_end`. Feedback laws are evaluated on the stage states; the
/// stored input column holds `u(t_i, x_i)` on the true state.
pub fn integrate_system<D: Dynamics + ?Sized>(
    dynamics: &D,
    forcing: &ForcingLaw,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    meta: Provenance,
) -> Result<TimeSeriesDataset> {
    let m = dynamics.dim();
    if x0.len() != m {
        return Err(Error::Dimension(format!("x0 has {} entries, system has {m} states", x0.len())));
    }
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(Error::InvalidConfig(format!("need dt > 0 and t_end > 0, got {dt}, {t_end}")));
    }
    let n = grid_len(t_end, dt);
    let t: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    let mut states = DMatrix::zeros(n, m);
    let mut inputs = DMatrix::zeros(n, 1);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; m];
    let mut scratch = Rk4Scratch::new(m);
    let mut rhs = |tt: f64, xx: &[f64], dx: &mut [f64]| dynamics.rhs(xx, forcing.value(tt, xx), dx);
    for i in 0..n {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t: t[i] });
        }
        for j in 0..m {
            states[(i, j)] = x[j];
        }
        inputs[(i, 0)] = forcing.value(t[i], &x);
        if i + 1 < n {
            rk4_step(&mut rhs, t[i], &x, dt, &mut scratch, &mut next);
            core::mem::swap(&mut x, &mut next);
        }
    }
    TimeSeriesDataset::new(t, states.clone(), inputs, Some(states), meta)
}

/// Simulates a benchmark configuration. The observed states equal the truth;
/// use [`add_noise`] for measurement noise.
pub fn integrate(config: &BenchmarkConfig) -> Result<TimeSeriesDataset> {
    config.validate()?;
    let mut meta = config.provenance();
    meta.snr_db = None;
    integrate_system(&config.system, &config.forcing, &config.x0, config.t_end, config.dt, meta)
}

/// Adds zero-mean Gaussian noise to every state column, with per-column
/// variance `mean(truth_j²) / 10^(snr_db/10)`. Column `j` draws from ChaCha8
/// stream `j` of `seed`. Inputs and truth are left untouched; `+∞` returns
/// the truth unchanged.
pub fn add_noise(ds: &TimeSeriesDataset, snr_db: f64, seed: u64) -> Result<TimeSeriesDataset> {
    let truth = ds
        .truth()
        .ok_or_else(|| Error::InvalidDataset("noise injection needs the noise-free truth".into()))?;
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidConfig(format!("invalid SNR {snr_db}")));
    }
    let mut meta = ds.meta().clone();
    meta.seed = Some(seed);
    if snr_db == f64::INFINITY {
        meta.snr_db = None;
        return Ok(ds.with_states(truth.clone())?.with_meta(meta));
    }
    let mut noisy = truth.clone();
    let gain = libm::pow(10.0, snr_db / 10.0);
    for (j, mut col) in noisy.column_iter_mut().enumerate() {
        let power = col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64;
        let sigma = libm::sqrt(power / gain);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        for v in col.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * z;
        }
    }
    meta.snr_db = Some(snr_db);
    Ok(ds.with_states(noisy)?.with_meta(meta))
}

/// Realised SNR per state column, `10 log10(Σ truth² / Σ (x - truth)²)`.
pub fn achieved_snr_db(ds: &TimeSeriesDataset) -> Option<Vec<f64>> {
    let truth = ds.truth()?;
    Some(
        truth
            .column_iter()
            .zip(ds.states().column_iter())
            .map(|(tc, xc)| {
                let signal: f64 = tc.iter().map(|v| v * v).sum();
                let noise: f64 = tc.iter().zip(xc.iter()).map(|(a, b)| (b - a) * (b - a)).sum();
                if noise == 0.0 {
                    f64::INFINITY
                } else {
                    10.0 * libm::log10(signal / noise)
                }
            })
            .collect(),
    )
}

/// Splits into training samples `t < train_seconds` and the remainder, which
/// starts at the boundary sample. At 1 ms sampling with `train_seconds = 10`
/// this yields 10 000 training samples (t = 0 ... 9.999) and a validation
/// part starting at t = 10.
pub fn split(ds: &TimeSeriesDataset, train_seconds: f64) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
    let t = ds.t();
    let t0 = t[0];
    let t_last = t[t.len() - 1];
    if !(train_seconds > t0 && train_seconds < t_last) {
        return Err(Error::InvalidConfig(format!(
            "split point {train_seconds} outside ({t0}, {t_last})"
        )));
    }
    let cut = t0 + train_seconds;
    let eps = 1e-6 * ds.dt();
    let k = t.iter().take_while(|&&ti| ti < cut - eps).count();
    if k < 2 || ds.len() - k < 2 {
        return Err(Error::InvalidConfig(format!(
            "split at {train_seconds} s leaves fewer than two samples on one side"
        )));
    }
    Ok((ds.slice_rows(0, k)?, ds.slice_rows(k, ds.len())?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_growth(t_end: f64, dt: f64) -> TimeSeriesDataset {
        let sys = FnDynamics { dim: 1, f: |x: &[f64], _u: f64, dx: &mut [f64]| dx[0] = x[0] };
        integrate_system(&sys, &ForcingLaw::Zero, &[1.0], t_end, dt, Provenance::default()).unwrap()
    }

    #[test]
    fn constant_system_stays_put() {
        let sys = FnDynamics { dim: 1, f: |_x: &[f64], _u: f64, dx: &mut [f64]| dx[0] = 0.0 };
        let ds = integrate_system(&sys, &ForcingLaw::Zero, &[1.0], 2.0, 0.01, Provenance::default()).unwrap();
        assert!(ds.states().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn exponential_matches_closed_form() {
        let ds = exp_growth(1.0, 1e-3);
        assert_eq!(ds.len(), 1001);
        let end = ds.states()[(1000, 0)];
        assert!((end - core::f64::consts::E).abs() < 1e-10, "{end}");
    }

    #[test]
    fn lorenz_endpoint_converges_at_fourth_order() {
        let endpoint = |dt: f64| {
            let cfg = BenchmarkConfig { t_end: 1.0, dt, train_seconds: 0.5, ..BenchmarkConfig::standard(System::lorenz(), None, 0) };
            let ds = integrate(&cfg).unwrap();
            let n = ds.len() - 1;
            [ds.states()[(n, 0)], ds.states()[(n, 1)], ds.states()[(n, 2)]]
        };
        let dist = |a: [f64; 3], b: [f64; 3]| a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let (a, b, c) = (endpoint(4e-3), endpoint(2e-3), endpoint(1e-3));
        let ratio = dist(a, b) / dist(b, c);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn feedback_input_matches_truth() {
        let cfg = BenchmarkConfig { t_end: 2.0, train_seconds: 1.0, ..BenchmarkConfig::standard(System::van_der_pol(), None, 0) };
        let ds = integrate(&cfg).unwrap();
        let truth = ds.truth().unwrap();
        for i in 0..ds.len() {
            assert_eq!(ds.inputs()[(i, 0)], -truth[(i, 0)] - truth[(i, 1)]);
        }
    }

    #[test]
    fn divergence_reports_timestamp() {
        let sys = FnDynamics { dim: 1, f: |x: &[f64], _u: f64, dx: &mut [f64]| dx[0] = x[0] * x[0] };
        let err = integrate_system(&sys, &ForcingLaw::Zero, &[1.0], 2.0, 1e-2, Provenance::default()).unwrap_err();
        match err {
            Error::Divergence { t } => assert!(t > 0.9 && t < 1.2, "{t}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn noise_hits_target_variance_and_is_deterministic() {
        let n = 10_000;
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 1e-3).collect();
        let c = 3.0;
        let x = DMatrix::from_element(n, 1, c);
        let ds = TimeSeriesDataset::new(t, x.clone(), DMatrix::zeros(n, 1), Some(x), Provenance::default()).unwrap();
        let noisy = add_noise(&ds, 20.0, 7).unwrap();
        let var = noisy.states().iter().map(|v| (v - c) * (v - c)).sum::<f64>() / n as f64;
        assert!((var / (c * c / 100.0) - 1.0).abs() < 0.05, "{var}");
        assert_eq!(noisy, add_noise(&ds, 20.0, 7).unwrap());
        assert_ne!(noisy.states(), add_noise(&ds, 20.0, 8).unwrap().states());
        assert_eq!(noisy.truth(), ds.truth());
        let snr = achieved_snr_db(&noisy).unwrap()[0];
        assert!((snr - 20.0).abs() < 20.0 * 0.05, "{snr}");
        let clean = add_noise(&ds, f64::INFINITY, 7).unwrap();
        assert_eq!(clean.states(), ds.truth().unwrap());
        assert!(add_noise(&ds, f64::NAN, 7).is_err());
    }

    #[test]
    fn split_sizes() {
        let cfg = BenchmarkConfig::standard(System::lotka_volterra(), None, 0);
        let ds = integrate(&cfg).unwrap();
        assert_eq!(ds.len(), 30_001);
        let (train, val) = split(&ds, 10.0).unwrap();
        assert_eq!((train.len(), val.len()), (10_000, 20_001));
        assert!((val.t()[0] - 10.0).abs() < 1e-9);

        let small = exp_growth(3.0, 1.0);
        assert_eq!(small.len(), 4);
        let (a, b) = split(&small, 1.5).unwrap();
        assert_eq!((a.len(), b.len()), (2, 2));
        assert!(split(&small, 3.0).is_err());
        assert!(split(&small, 4.0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = BenchmarkConfig::standard(System::lorenz(), Some(49.0), 1);
        assert!(cfg.validate().is_ok());
        cfg.dt = -1e-3;
        assert!(cfg.validate().is_err());
        let mut cfg = BenchmarkConfig::standard(System::lorenz(), None, 1);
        cfg.x0.pop();
        assert!(cfg.validate().is_err());
    }
}
