//! The CLI commands as library functions.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use argosc_core::evaluate::{prepare_data, run_benchmark, BenchmarkRequest, Method};
use argosc_core::pipeline::{fit_argosc, PipelineConfig, SelectionTrace};
use argosc_core::simulate::{achieved_snr_db, add_noise, integrate, split};
use argosc_core::sindyc::{fit_sindyc, StlsConfig};
use argosc_core::{SparseModel, TimeSeriesDataset};

use crate::io::{load_dataset, save_dataset, save_model, save_trace, write_atomic, ModelFile};
use crate::report::{cell_stem, checks_for, table_csv, table_text, trajectory_csv, CellOutcome, Check};
use crate::spec::{builtin, table_specs, ExperimentSpec};
use crate::Failure;

/// Environment variable overriding the number of benchmark workers.
pub const WORKERS_ENV: &str = "ARGOSC_WORKERS";

pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    ExperimentSpec::parse(&text)
}

/// Writes one dataset per SNR level of the spec and returns the paths.
/// Nothing is left behind when any level fails.
pub fn cmd_simulate(spec: &ExperimentSpec, out_dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let requests = spec.requests()?;
    let mut written = Vec::new();
    let result = (|| {
        for req in &requests {
            let cfg = &req.config;
            let clean = integrate(cfg)?;
            let ds = match cfg.snr_db {
                Some(snr) => add_noise(&clean, snr, cfg.seed)?,
                None => clean,
            };
            let stem = match cfg.snr_db {
                Some(s) => format!("{}_{}db.csv", spec.display_name(), s),
                None => format!("{}_clean.csv", spec.display_name()),
            };
            let path = out_dir.join(stem);
            save_dataset(&ds, &path)?;
            written.push(path.clone());
            let achieved = achieved_snr_db(&ds)
                .map(|v| v.iter().map(|s| format!("{s:.2}")).collect::<Vec<_>>().join(", "))
                .unwrap_or_else(|| "noise free".into());
            println!(
                "{}: n = {}, m = {}, r = {}, SNR achieved [{}] dB",
                path.display(),
                ds.len(),
                ds.n_states(),
                ds.n_inputs(),
                achieved
            );
        }
        Ok(())
    })();
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
    }
    result.map(|()| written)
}

/// Options of `fit`.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub method: Method,
    pub pipeline: PipelineConfig,
    pub stls: StlsConfig,
    /// Fit only on samples with `t < train_seconds`.
    pub train_seconds: Option<f64>,
}

pub fn fit_dataset(ds: &TimeSeriesDataset, opts: &FitOptions) -> Result<(SparseModel, Option<SelectionTrace>), Failure> {
    let train;
    let ds = match opts.train_seconds {
        Some(s) => {
            train = split(ds, s)?.0;
            &train
        }
        None => ds,
    };
    Ok(match opts.method {
        Method::Argosc | Method::Argos => {
            let cfg = PipelineConfig { include_inputs: opts.method == Method::Argosc, ..opts.pipeline.clone() };
            let (model, trace) = fit_argosc(ds, &cfg)?;
            (model, Some(trace))
        }
        Method::Sindyc => (fit_sindyc(ds, &opts.stls)?, None),
    })
}

/// Fits one dataset file, writes the model (and trace) and returns the
/// rendered equations.
pub fn cmd_fit(dataset: &Path, opts: &FitOptions, model_out: &Path, trace_out: Option<&Path>) -> Result<String, Failure> {
    let ds = load_dataset(dataset)?;
    let (model, trace) = fit_dataset(&ds, opts)?;
    let threshold = (opts.method == Method::Sindyc).then_some(opts.stls.threshold);
    save_model(&ModelFile::new(opts.method.key(), &model, threshold), model_out)?;
    if let (Some(path), Some(trace)) = (trace_out, trace.as_ref()) {
        save_trace(trace, path)?;
    }
    Ok(model.to_string())
}

/// Runs every request on up to `workers` threads. Results keep the request
/// order, so the output does not depend on the worker count.
pub fn run_cells(requests: &[BenchmarkRequest], workers: usize) -> Result<Vec<CellOutcome>, Failure> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<CellOutcome, Failure>>>> = requests.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, requests.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(req) = requests.get(i) else { break };
                let start = Instant::now();
                let outcome = run_benchmark(req)
                    .map(|result| CellOutcome { result, elapsed: start.elapsed() })
                    .map_err(Failure::from);
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(outcome);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap_or_else(|e| e.into_inner()).expect("every cell is visited"))
        .collect()
}

/// Writes the table, the trajectory overlays, the models and optionally the
/// selection traces of finished cells.
pub fn write_outputs(cells: &[CellOutcome], out_dir: &Path, traces: bool) -> Result<String, Failure> {
    let rows: Vec<_> = cells.iter().flat_map(|c| c.result.rows()).collect();
    let table = table_csv(&rows);
    write_atomic(&out_dir.join("table.csv"), table.as_bytes())?;
    for cell in cells {
        let stem = cell_stem(&cell.result);
        write_atomic(&out_dir.join("trajectories").join(format!("{stem}.csv")), trajectory_csv(&cell.result).as_bytes())?;
        for mr in &cell.result.methods {
            let file = ModelFile::new(mr.method.key(), &mr.model, mr.threshold);
            save_model(&file, &out_dir.join("models").join(format!("{stem}_{}.json", mr.method.key())))?;
            if let (true, Some(trace)) = (traces, &mr.trace) {
                save_trace(trace, &out_dir.join("traces").join(format!("{stem}_{}.json", mr.method.key())))?;
            }
        }
    }
    Ok(table_text(&rows))
}

fn print_models(cells: &[CellOutcome]) {
    for cell in cells {
        for mr in &cell.result.methods {
            println!("{} / {} / {}:\n{}", cell.result.system, crate::report::snr_label(cell.result.snr_db), mr.method.name(), mr.model);
        }
        println!("cell time {:.1} s", cell.elapsed.as_secs_f64());
    }
}

/// Runs the evaluation protocol of one spec.
pub fn cmd_evaluate(
    spec: &ExperimentSpec,
    methods: Option<Vec<Method>>,
    out_dir: &Path,
    traces: bool,
) -> Result<Vec<CellOutcome>, Failure> {
    let mut requests = spec.requests()?;
    if let Some(m) = methods {
        requests.iter_mut().for_each(|r| r.methods = m.clone());
    }
    let cells = run_cells(&requests, worker_count())?;
    print_models(&cells);
    print!("{}", write_outputs(&cells, out_dir, traces)?);
    Ok(cells)
}

/// Result of `reproduce`.
#[derive(Debug, Clone)]
pub struct Reproduction {
    pub cells: Vec<CellOutcome>,
    pub checks: Vec<Check>,
    pub table: String,
}

impl Reproduction {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Runs a table's built-in specs, writes the outputs and evaluates the
/// reproduction tolerances. `seed` overrides the specs' seed.
pub fn cmd_reproduce(table: &str, out_dir: &Path, seed: Option<u64>, traces: bool) -> Result<Reproduction, Failure> {
    let names = table_specs(table)
        .ok_or_else(|| Failure::Validation(format!("unknown table `{table}` (expected table1 or table2)")))?;
    let mut requests = Vec::new();
    for name in names {
        let mut spec = ExperimentSpec::parse(builtin(name).expect("table specs are built in"))?;
        if let Some(s) = seed {
            spec.seed = s;
        }
        requests.extend(spec.requests()?);
    }
    let cells = run_cells(&requests, worker_count())?;
    let text = write_outputs(&cells, out_dir, traces)?;
    let checks = checks_for(table, &cells);
    let summary: String = checks.iter().map(|c| c.line() + "\n").collect();
    write_atomic(&out_dir.join("checks.txt"), summary.as_bytes())?;
    let table_csv = fs::read_to_string(out_dir.join("table.csv"))?;
    print_models(&cells);
    print!("{text}{summary}");
    Ok(Reproduction { cells, checks, table: table_csv })
}

/// Training part of the dataset a request would generate.
pub fn training_data(req: &BenchmarkRequest) -> Result<TimeSeriesDataset, Failure> {
    Ok(prepare_data(&req.config)?.train)
}
