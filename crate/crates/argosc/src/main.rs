use std::path::PathBuf;
use std::process::ExitCode;

use argosc::commands::{cmd_evaluate, cmd_fit, cmd_reproduce, cmd_simulate, load_spec, FitOptions};
use argosc::Failure;
use argosc_core::evaluate::Method;
use argosc_core::pipeline::PipelineConfig;
use argosc_core::sindyc::StlsConfig;
use clap::{Parser, Subcommand, ValueEnum};

/// Equation discovery for forced dynamical systems.
#[derive(Debug, Parser)]
#[command(name = "argosc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Argosc,
    Argos,
    Sindyc,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Argosc => Method::Argosc,
            MethodArg::Argos => Method::Argos,
            MethodArg::Sindyc => Method::Sindyc,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the spec's system and write one dataset per SNR level.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory (defaults to the spec's `out_dir`, then `.`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a model to a dataset file.
    Fit {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "argosc")]
        method: MethodArg,
        /// Spec whose pipeline and SINDYc sections configure the fit.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Model file to write.
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
        /// Also write the selection trace to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Fit only on samples with t below this value.
        #[arg(long)]
        train_seconds: Option<f64>,
        /// SINDYc threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Run the train/validate protocol of a spec.
    Evaluate {
        #[arg(long)]
        spec: PathBuf,
        /// Restrict to these methods instead of the spec's list.
        #[arg(long, value_enum, value_delimiter = ',')]
        method: Vec<MethodArg>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write selection traces next to the models.
        #[arg(long)]
        trace: bool,
    },
    /// Reproduce a benchmark table from the built-in specs.
    Reproduce {
        #[arg(long, value_parser = ["table1", "table2"])]
        table: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace: bool,
    },
}

fn out_dir(flag: Option<PathBuf>, spec_dir: Option<&str>) -> PathBuf {
    flag.or_else(|| spec_dir.map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { spec, out, seed } => {
            let mut spec = load_spec(&spec)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let dir = out_dir(out, spec.out_dir.as_deref());
            cmd_simulate(&spec, &dir)?;
        }
        Command::Fit { dataset, method, spec, out, trace, seed, train_seconds, threshold } => {
            let (mut pipeline, mut stls) = match spec {
                Some(path) => {
                    let spec = load_spec(&path)?;
                    (spec.pipeline(), spec.stls())
                }
                None => (PipelineConfig::default(), StlsConfig::default()),
            };
            if let Some(s) = seed {
                pipeline.seed = s;
            }
            if let Some(t) = threshold {
                stls.threshold = t;
            }
            pipeline.validate()?;
            stls.validate()?;
            let opts = FitOptions { method: method.into(), pipeline, stls, train_seconds };
            println!("{}", cmd_fit(&dataset, &opts, &out, trace.as_deref())?);
        }
        Command::Evaluate { spec, method, out, seed, trace } => {
            let mut spec = load_spec(&spec)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let dir = out_dir(out, spec.out_dir.as_deref());
            let methods = (!method.is_empty()).then(|| method.into_iter().map(Method::from).collect());
            cmd_evaluate(&spec, methods, &dir, trace)?;
        }
        Command::Reproduce { table, out, seed, trace } => {
            let rep = cmd_reproduce(&table, &out, seed, trace)?;
            if !rep.passed() {
                let failed: Vec<String> = rep.checks.iter().filter(|c| !c.passed).map(|c| c.id.to_string()).collect();
                return Err(Failure::Acceptance(format!("criteria not met: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
