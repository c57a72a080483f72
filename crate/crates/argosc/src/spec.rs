//! Experiment specification files (TOML).
//!
//! One file describes one system under one forcing law, the SNR levels to
//! run, the methods to compare and their settings. Unknown keys are errors.
//!
//! ```toml
//! seed = 1
//! snr_db = [25.0, 14.0]
//! methods = ["argosc", "sindyc"]
//!
//! [system]
//! kind = "van_der_pol"
//! mu = 1.2
//!
//! [forcing]
//! kind = "pi_feedback"
//! kp = 1.0
//! ki = 1.0
//! ```

use argosc_core::evaluate::{BenchmarkRequest, Method};
use argosc_core::pipeline::PipelineConfig;
use argosc_core::regress::Penalty;
use argosc_core::simulate::{BenchmarkConfig, ForcingLaw, System};
use argosc_core::sindyc::{Differentiation, StlsConfig, DEFAULT_THRESHOLDS};
use argosc_core::smooth::SgParams;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Spec files shipped with the crate, by name.
pub const BUILTIN: [(&str, &str); 3] = [
    ("van_der_pol", include_str!("../../../specs/van_der_pol.toml")),
    ("lotka_volterra", include_str!("../../../specs/lotka_volterra.toml")),
    ("lorenz", include_str!("../../../specs/lorenz.toml")),
];

/// Built-in specs making up each reproduced table.
pub fn table_specs(table: &str) -> Option<&'static [&'static str]> {
    match table {
        "table1" => Some(&["van_der_pol", "lotka_volterra"]),
        "table2" => Some(&["lorenz"]),
        _ => None,
    }
}

pub fn builtin(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    VanDerPol { mu: f64 },
    LotkaVolterra { a: f64, b: f64, c: f64, d: f64 },
    Lorenz { sigma: f64, rho: f64, beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    PiFeedback { kp: f64, ki: f64 },
    Sinusoid { ku: f64 },
    CosCubed { ku: f64 },
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    /// Defaults to the system's standard initial state.
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_train")]
    pub train_seconds: f64,
}

fn default_t_end() -> f64 {
    30.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_train() -> f64 {
    10.0
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self { x0: None, t_end: default_t_end(), dt: default_dt(), train_seconds: default_train() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowSpec {
    Auto,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingSpec {
    #[serde(default = "default_window_spec")]
    pub selection: WindowSpec,
    #[serde(default)]
    pub window: usize,
    #[serde(default = "default_poly_order")]
    pub poly_order: usize,
}

fn default_window_spec() -> WindowSpec {
    WindowSpec::Auto
}
fn default_poly_order() -> usize {
    4
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        Self { selection: WindowSpec::Auto, window: 0, poly_order: default_poly_order() }
    }
}

impl SmoothingSpec {
    fn params(&self) -> SgParams {
        match self.selection {
            WindowSpec::Auto => SgParams { poly_order: self.poly_order, ..SgParams::auto() },
            WindowSpec::Fixed => SgParams::fixed(self.window, self.poly_order),
        }
    }
}

/// Pipeline settings; anything left out keeps the library default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub degree: Option<u32>,
    pub penalty: Option<Penalty>,
    pub eta_grid: Option<Vec<f64>>,
    pub bootstrap_samples: Option<usize>,
    pub alpha: Option<f64>,
    pub folds: Option<usize>,
    #[serde(default)]
    pub smoothing: SmoothingSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SindycSpec {
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    pub degree: Option<u32>,
    #[serde(default = "default_differentiation")]
    pub differentiation: Differentiation,
}

fn default_thresholds() -> Vec<f64> {
    DEFAULT_THRESHOLDS.to_vec()
}
fn default_max_iter() -> usize {
    20
}
fn default_differentiation() -> Differentiation {
    Differentiation::Sg
}

impl Default for SindycSpec {
    fn default() -> Self {
        Self {
            thresholds: default_thresholds(),
            max_iter: default_max_iter(),
            degree: None,
            differentiation: default_differentiation(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: Option<String>,
    pub seed: u64,
    /// Omitted or empty means a single noise-free cell.
    #[serde(default)]
    pub snr_db: Vec<f64>,
    pub methods: Vec<String>,
    #[serde(default)]
    pub out_dir: Option<String>,
    pub system: SystemSpec,
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub pipeline: PipelineSpec,
    #[serde(default)]
    pub sindyc: SindycSpec,
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let spec: Self = toml::from_str(text).map_err(|e| Failure::Validation(format!("spec: {e}")))?;
        spec.methods()?;
        Ok(spec)
    }

    pub fn system(&self) -> System {
        match self.system {
            SystemSpec::VanDerPol { mu } => System::VanDerPol { mu },
            SystemSpec::LotkaVolterra { a, b, c, d } => System::LotkaVolterra { a, b, c, d },
            SystemSpec::Lorenz { sigma, rho, beta } => System::Lorenz { sigma, rho, beta },
        }
    }

    pub fn forcing(&self) -> ForcingLaw {
        match self.forcing {
            ForcingSpec::PiFeedback { kp, ki } => ForcingLaw::PiFeedback { kp, ki },
            ForcingSpec::Sinusoid { ku } => ForcingLaw::Sinusoid { ku },
            ForcingSpec::CosCubed { ku } => ForcingLaw::CosCubed { ku },
            ForcingSpec::Zero => ForcingLaw::Zero,
        }
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.system().name().to_string())
    }

    pub fn methods(&self) -> Result<Vec<Method>, Failure> {
        if self.methods.is_empty() {
            return Err(Failure::Validation("spec lists no methods".into()));
        }
        self.methods
            .iter()
            .map(|m| Method::parse(m).ok_or_else(|| Failure::Validation(format!("unknown method `{m}`"))))
            .collect()
    }

    /// Noise levels of the cells; `None` is a noise-free cell.
    pub fn snr_levels(&self) -> Vec<Option<f64>> {
        if self.snr_db.is_empty() {
            vec![None]
        } else {
            self.snr_db.iter().map(|&s| s.is_finite().then_some(s)).collect()
        }
    }

    pub fn benchmark(&self, snr_db: Option<f64>) -> BenchmarkConfig {
        let system = self.system();
        let sim = &self.simulation;
        BenchmarkConfig {
            forcing: self.forcing(),
            x0: sim.x0.clone().unwrap_or_else(|| system.default_x0()),
            system,
            t_end: sim.t_end,
            dt: sim.dt,
            snr_db,
            seed: self.seed,
            train_seconds: sim.train_seconds,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let p = &self.pipeline;
        let d = PipelineConfig::default();
        PipelineConfig {
            degree: p.degree.unwrap_or(d.degree),
            penalty: p.penalty.unwrap_or(d.penalty),
            eta_grid: p.eta_grid.clone().unwrap_or(d.eta_grid),
            bootstrap_samples: p.bootstrap_samples.unwrap_or(d.bootstrap_samples),
            alpha: p.alpha.unwrap_or(d.alpha),
            folds: p.folds.unwrap_or(d.folds),
            sg: p.smoothing.params(),
            seed: self.seed,
            ..d
        }
    }

    pub fn stls(&self) -> StlsConfig {
        let s = &self.sindyc;
        let degree = s.degree.or(self.pipeline.degree).unwrap_or(StlsConfig::default().degree);
        StlsConfig {
            threshold: s.thresholds.first().copied().unwrap_or(StlsConfig::default().threshold),
            max_iter: s.max_iter,
            degree,
            differentiation: s.differentiation,
            sg: self.pipeline.smoothing.params(),
        }
    }

    /// Every benchmark cell of the spec, validated.
    pub fn requests(&self) -> Result<Vec<BenchmarkRequest>, Failure> {
        let methods = self.methods()?;
        let pipeline = self.pipeline();
        pipeline.validate()?;
        let stls = self.stls();
        if !self.sindyc.thresholds.is_empty() {
            stls.validate()?;
        }
        self.snr_levels()
            .into_iter()
            .map(|snr| {
                let config = self.benchmark(snr);
                config.validate()?;
                Ok(BenchmarkRequest {
                    config,
                    pipeline: pipeline.clone(),
                    stls,
                    sindyc_thresholds: self.sindyc.thresholds.clone(),
                    methods: methods.clone(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
snr_db = [49.0]
methods = ["argosc", "argos"]

[system]
kind = "lorenz"
sigma = 10.0
rho = 28.0
beta = 2.6666666666666665

[forcing]
kind = "cos_cubed"
ku = 1.0
"#;

    #[test]
    fn builtin_specs_parse() {
        for (name, text) in BUILTIN {
            let spec = ExperimentSpec::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(spec.system().name(), name);
            assert!(!spec.requests().unwrap().is_empty());
        }
    }

    #[test]
    fn defaults_fill_in() {
        let spec = ExperimentSpec::parse(MINIMAL).unwrap();
        let req = &spec.requests().unwrap()[0];
        assert_eq!(req.config.x0, vec![-8.0, 7.0, 27.0]);
        assert_eq!(req.config.seed, 3);
        assert_eq!(req.pipeline.seed, 3);
        assert_eq!(req.pipeline.bootstrap_samples, 2000);
        assert_eq!(req.methods, vec![Method::Argosc, Method::Argos]);
    }

    #[test]
    fn unknown_keys_rejected() {
        let extra = MINIMAL.replace("seed = 3", "seed = 3\ncolour = \"red\"");
        assert!(matches!(ExperimentSpec::parse(&extra), Err(Failure::Validation(_))));
        let extra = MINIMAL.replace("ku = 1.0", "ku = 1.0\nphase = 0.5");
        assert!(ExperimentSpec::parse(&extra).is_err());
        let bad = MINIMAL.replace("\"argos\"", "\"lasso\"");
        assert!(ExperimentSpec::parse(&bad).is_err());
    }

    #[test]
    fn negative_dt_fails_validation() {
        let spec = ExperimentSpec::parse(&format!("{MINIMAL}\n[simulation]\ndt = -0.001\n")).unwrap();
        assert!(matches!(spec.requests(), Err(Failure::Validation(_))));
    }
}
