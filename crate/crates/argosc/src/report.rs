//! Result tables, trajectory overlays and the reproduction checks.

use std::fmt::Write as _;
use std::time::Duration;

use argosc_core::evaluate::{BenchmarkResult, Method, MethodResult, TableRow};
use argosc_core::TermDescriptor;

/// One finished benchmark cell.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub result: BenchmarkResult,
    pub elapsed: Duration,
}

pub fn snr_label(snr_db: Option<f64>) -> String {
    match snr_db {
        Some(s) => format!("{s}"),
        None => "inf".into(),
    }
}

/// File stem of a cell, e.g. `lorenz_49db`.
pub fn cell_stem(result: &BenchmarkResult) -> String {
    match result.snr_db {
        Some(s) => format!("{}_{}db", result.system, s),
        None => format!("{}_clean", result.system),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

/// Long-format table: one row per (system, SNR, method, state).
pub fn table_csv(rows: &[TableRow]) -> String {
    let mut s = String::from("system,method,snr_db,state,mse,r2,divergence_time\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},x{},{:.6e},{:.6},{}",
            r.system,
            r.method,
            snr_label(r.snr_db),
            r.state,
            r.mse,
            r.r2,
            opt(r.divergence_time)
        );
    }
    s
}

/// Fixed-width rendering of the same rows for the terminal.
pub fn table_text(rows: &[TableRow]) -> String {
    let mut s = format!("{:<16} {:<8} {:>7} {:>6} {:>12} {:>10}  {}\n", "system", "method", "SNR", "state", "MSE", "R2", "diverged");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<16} {:<8} {:>7} {:>6} {:>12.4e} {:>10.4}  {}",
            r.system,
            r.method,
            snr_label(r.snr_db),
            format!("x{}", r.state),
            r.mse,
            r.r2,
            opt(r.divergence_time)
        );
    }
    s
}

/// Validation window overlay: time, truth, then every method's prediction.
/// Samples past a method's divergence are left empty.
pub fn trajectory_csv(result: &BenchmarkResult) -> String {
    let m = result.validation_truth.ncols();
    let mut s = String::from("t");
    for j in 1..=m {
        let _ = write!(s, ",true_x{j}");
    }
    for mr in &result.methods {
        for j in 1..=m {
            let _ = write!(s, ",{}_x{j}", mr.method.key());
        }
    }
    s.push('\n');
    for (i, t) in result.validation_t.iter().enumerate() {
        let _ = write!(s, "{t:.6}");
        for j in 0..m {
            let _ = write!(s, ",{:.10e}", result.validation_truth[(i, j)]);
        }
        for mr in &result.methods {
            let reached = i < mr.trajectory.states.nrows();
            for j in 0..m {
                if reached {
                    let _ = write!(s, ",{:.10e}", mr.trajectory.states[(i, j)]);
                } else {
                    s.push(',');
                }
            }
        }
        s.push('\n');
    }
    s
}

/// Outcome of one reproduction criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: u32,
    pub description: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn line(&self) -> String {
        format!("[{}] {:>2}. {} ({})", if self.passed { "PASS" } else { "FAIL" }, self.id, self.description, self.detail)
    }
}

fn find<'a>(cells: &'a [CellOutcome], system: &str, snr: f64) -> Option<&'a CellOutcome> {
    cells.iter().find(|c| c.result.system == system && c.result.snr_db == Some(snr))
}

fn r2s(mr: &MethodResult) -> Vec<f64> {
    mr.report.states.iter().map(|s| s.r2).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

fn missing(id: u32, description: &str, what: &str) -> Check {
    Check { id, description: description.into(), passed: false, detail: format!("{what} was not run") }
}

/// R² floor (and optional MSE ceiling) for one method in one cell.
fn quality(cells: &[CellOutcome], id: u32, system: &str, snr: f64, r2_min: f64, mse_max: Option<f64>) -> Check {
    let mut description = format!("{system} @ {snr} dB: ARGOSc R2 >= {r2_min}");
    if let Some(m) = mse_max {
        let _ = write!(description, ", MSE <= {m}");
    }
    let Some(cell) = find(cells, system, snr) else { return missing(id, &description, "cell") };
    let Some(mr) = cell.result.method(Method::Argosc) else { return missing(id, &description, "ARGOSc") };
    let r2 = r2s(mr);
    let mse: Vec<f64> = mr.report.states.iter().map(|s| s.mse).collect();
    let passed = mr.report.divergence_time.is_none()
        && r2.iter().all(|&r| r >= r2_min)
        && mse_max.is_none_or(|m| mse.iter().all(|&e| e <= m));
    Check { id, description, passed, detail: format!("R2 [{}], MSE [{}]", fmt_list(&r2), fmt_list(&mse)) }
}

fn sindyc_fails(cells: &[CellOutcome], system: &str, snr: f64) -> (bool, String) {
    match find(cells, system, snr).and_then(|c| c.result.method(Method::Sindyc)) {
        Some(mr) => {
            let r2 = r2s(mr);
            (r2.iter().any(|&r| r < 0.5), format!("SINDYc @ {snr} dB R2 [{}]", fmt_list(&r2)))
        }
        None => (false, format!("SINDYc @ {snr} dB not run")),
    }
}

/// True Lorenz terms and coefficients, per state.
fn lorenz_truth(n_vars: usize) -> Vec<Vec<(TermDescriptor, f64)>> {
    let mono = |e: &[u32]| {
        let mut v = e.to_vec();
        v.resize(n_vars, 0);
        TermDescriptor::monomial(v)
    };
    vec![
        vec![(mono(&[1]), -10.0), (mono(&[0, 1]), 10.0), (mono(&[0, 0, 0, 1]), 1.0)],
        vec![(mono(&[1]), 28.0), (mono(&[0, 1]), -1.0), (mono(&[1, 0, 1]), -1.0)],
        vec![(mono(&[1, 1]), 1.0), (mono(&[0, 0, 1]), -8.0 / 3.0)],
    ]
}

/// Exact support and ≤ 5 % relative coefficient error on the Lorenz model.
pub fn lorenz_recovery(mr: &MethodResult) -> (bool, String) {
    let truth = lorenz_truth(mr.model.n_vars());
    let mut ok = mr.model.equations.len() == 3;
    let mut worst: f64 = 0.0;
    for (eq, true_terms) in mr.model.equations.iter().zip(&truth) {
        let mut want: Vec<TermDescriptor> = true_terms.iter().map(|(t, _)| t.clone()).collect();
        want.sort();
        if eq.support() != want {
            ok = false;
        }
        for (t, v) in true_terms {
            let err = eq.coefficient(t).map_or(1.0, |c| ((c - v) / v).abs());
            worst = worst.max(err);
        }
    }
    (ok && worst <= 0.05, format!("support {}, worst relative error {:.2}%", if ok { "exact" } else { "wrong" }, 100.0 * worst))
}

/// Checks of the first table: Van der Pol and Lotka-Volterra.
pub fn table1_checks(cells: &[CellOutcome]) -> Vec<Check> {
    let mut c1 = quality(cells, 1, "van_der_pol", 25.0, 0.98, Some(0.05));
    if let Some(cell) = find(cells, "van_der_pol", 25.0) {
        let secs = cell.elapsed.as_secs_f64();
        c1.passed &= secs <= 600.0;
        let _ = write!(c1.detail, ", cell runtime {secs:.0} s <= 600 s");
    }
    let c2 = quality(cells, 2, "van_der_pol", 14.0, 0.97, None);
    let mut c3 = Check {
        id: 3,
        description: "lotka_volterra @ 25 and 14 dB: ARGOSc R2 >= 0.95, SINDYc R2 < 0.5 on some state".into(),
        passed: true,
        detail: String::new(),
    };
    let mut parts = Vec::new();
    for snr in [25.0, 14.0] {
        let q = quality(cells, 3, "lotka_volterra", snr, 0.95, None);
        let (s, sd) = sindyc_fails(cells, "lotka_volterra", snr);
        c3.passed &= q.passed && s;
        parts.push(format!("ARGOSc @ {snr} dB {}; {sd}", q.detail));
    }
    c3.detail = parts.join("; ");
    vec![c1, c2, c3]
}

/// Checks of the second table: Lorenz and the no-input ablation.
pub fn table2_checks(cells: &[CellOutcome]) -> Vec<Check> {
    let mut c4 = quality(cells, 4, "lorenz", 49.0, 0.99, None);
    c4.description.push_str(", exact support, coefficients within 5%");
    if let Some(mr) = find(cells, "lorenz", 49.0).and_then(|c| c.result.method(Method::Argosc)) {
        let (ok, detail) = lorenz_recovery(mr);
        c4.passed &= ok;
        let _ = write!(c4.detail, "; {detail}");
    }
    let mut c5 = quality(cells, 5, "lorenz", 37.0, 0.98, None);
    c5.description.push_str(", SINDYc R2 < 0.5 on some state");
    let (s, sd) = sindyc_fails(cells, "lorenz", 37.0);
    c5.passed &= s;
    let _ = write!(c5.detail, "; {sd}");

    let description = "lorenz @ 49 dB: ARGOS without inputs worse than ARGOSc on every state, or divergent";
    let c6 = match find(cells, "lorenz", 49.0).map(|c| (c.result.method(Method::Argosc), c.result.method(Method::Argos))) {
        Some((Some(full), Some(ablated))) => {
            let (a, b) = (r2s(full), r2s(ablated));
            let diverged = ablated.report.divergence_time.is_some();
            let worse = a.iter().zip(&b).all(|(x, y)| y < x);
            Check {
                id: 6,
                description: description.into(),
                passed: diverged || worse,
                detail: format!(
                    "ARGOSc R2 [{}], ARGOS R2 [{}]{}",
                    fmt_list(&a),
                    fmt_list(&b),
                    ablated.report.divergence_time.map(|t| format!(", ARGOS diverged at t = {t:.3}")).unwrap_or_default()
                ),
            }
        }
        _ => missing(6, description, "ARGOSc or ARGOS"),
    };
    vec![c4, c5, c6]
}

pub fn checks_for(table: &str, cells: &[CellOutcome]) -> Vec<Check> {
    match table {
        "table1" => table1_checks(cells),
        "table2" => table2_checks(cells),
        _ => Vec::new(),
    }
}
