//! Pivots study results into reporting tables and renders them as CSV or
//! Markdown. Both formats share one number formatter so that a value always
//! prints identically wherever it appears.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diagnostics::DiagnosticReport;
use crate::driver::CaseResult;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write to {path}: {source}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("study results do not cover the same mesh levels for every coefficient point")]
    RaggedLevels,
}

/// Scientific notation with three significant digits and a signed two-digit
/// exponent: `1.64e-01`, `1.25e+02`. Non-finite values print as Rust does.
pub fn sci3(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.00e+00".to_string();
    }
    let s = format!("{x:.2e}");
    let (mantissa, exp) = s.split_once('e').expect("exponential format");
    let (sign, digits) = match exp.strip_prefix('-') {
        Some(d) => ('-', d),
        None => ('+', exp),
    };
    format!("{mantissa}e{sign}{digits:0>2}")
}

/// Convergence-rate column entry: one decimal place, empty when no rate is
/// available (fewer than two mesh levels).
pub fn rate_str(rate: Option<f64>) -> String {
    match rate {
        Some(r) => format!("{r:.1}"),
        None => String::new(),
    }
}

/// Which error column of a study run a table row reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Quantity {
    DisplacementH1,
    PressureL2,
    FluxW,
    FluxHdiv,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [
        Quantity::DisplacementH1,
        Quantity::PressureL2,
        Quantity::FluxW,
        Quantity::FluxHdiv,
    ];

    /// Default report selection: the three quantities of the convergence
    /// tables, with the flux in its time-step-weighted norm.
    pub const DEFAULT: [Quantity; 3] = [
        Quantity::DisplacementH1,
        Quantity::PressureL2,
        Quantity::FluxW,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Quantity::DisplacementH1 => "displacement",
            Quantity::PressureL2 => "pressure",
            Quantity::FluxW => "flux-w",
            Quantity::FluxHdiv => "flux-hdiv",
        }
    }

    pub fn heading(self) -> &'static str {
        match self {
            Quantity::DisplacementH1 => "Displacement",
            Quantity::PressureL2 => "Pressure",
            Quantity::FluxW => "Flux (weighted)",
            Quantity::FluxHdiv => "Flux (H(div))",
        }
    }

    pub fn from_label(s: &str) -> Option<Quantity> {
        Quantity::ALL.iter().copied().find(|q| q.label() == s)
    }

    fn pick(self, case: &CaseResult) -> f64 {
        match self {
            Quantity::DisplacementH1 => case.disp_h1,
            Quantity::PressureL2 => case.pres_l2,
            Quantity::FluxW => case.flux_w,
            Quantity::FluxHdiv => case.flux_hdiv,
        }
    }
}

/// One table row: a quantity at one coefficient point across all mesh levels.
#[derive(Debug, Clone)]
pub struct ErrorRow {
    pub quantity: Quantity,
    pub kappa: f64,
    pub c0: f64,
    pub errors: Vec<f64>,
    /// Observed order from the last two columns, absent with fewer than two.
    pub rate: Option<f64>,
}

/// Errors of a study grid pivoted to rows of (quantity, coefficient point)
/// against columns of mesh level, finest last.
#[derive(Debug, Clone)]
pub struct ErrorTable {
    pub pairing: String,
    /// Mesh subdivision counts, ascending (so mesh size h = 1/n descends).
    pub levels: Vec<usize>,
    pub rows: Vec<ErrorRow>,
}

/// Pivot flat study results into a table reporting `quantities`, in that
/// block order. Every coefficient point must have been run at every level.
pub fn error_table(
    results: &[CaseResult],
    quantities: &[Quantity],
) -> Result<ErrorTable, ReportError> {
    let mut levels: Vec<usize> = Vec::new();
    let mut points: Vec<(f64, f64)> = Vec::new();
    for r in results {
        if !levels.contains(&r.n_div) {
            levels.push(r.n_div);
        }
        if !points.iter().any(|&(k, c)| k == r.kappa && c == r.c0) {
            points.push((r.kappa, r.c0));
        }
    }
    levels.sort_unstable();
    let mut rows = Vec::new();
    for &quantity in quantities {
        for &(kappa, c0) in &points {
            let mut errors = Vec::with_capacity(levels.len());
            for &n in &levels {
                let case = results
                    .iter()
                    .find(|r| r.n_div == n && r.kappa == kappa && r.c0 == c0)
                    .ok_or(ReportError::RaggedLevels)?;
                errors.push(quantity.pick(case));
            }
            let rate = observed_rate(&errors);
            rows.push(ErrorRow {
                quantity,
                kappa,
                c0,
                errors,
                rate,
            });
        }
    }
    Ok(ErrorTable {
        pairing: results.first().map(|r| r.pairing.clone()).unwrap_or_default(),
        levels,
        rows,
    })
}

/// Convergence order from the last two entries of an error column (each
/// level halves h, so the order is the log2 of the error drop).
pub fn observed_rate(errors: &[f64]) -> Option<f64> {
    if errors.len() < 2 {
        return None;
    }
    let coarse = errors[errors.len() - 2];
    let fine = errors[errors.len() - 1];
    Some((coarse / fine).log2())
}

fn level_headers(levels: &[usize]) -> Vec<String> {
    levels.iter().map(|n| format!("h=1/{n}")).collect()
}

/// CSV rendering: one header line, then one row per (quantity, kappa, c0)
/// with the error columns finest-last and the observed rate at the end.
/// An empty table renders as the header line alone.
pub fn csv_error_table(table: &ErrorTable) -> String {
    let mut out = String::new();
    let mut header = vec!["quantity".to_string(), "kappa".to_string(), "c0".to_string()];
    header.extend(level_headers(&table.levels));
    header.push("rate".to_string());
    let _ = writeln!(out, "{}", header.join(","));
    for row in &table.rows {
        let mut cells = vec![
            row.quantity.label().to_string(),
            sci3(row.kappa),
            sci3(row.c0),
        ];
        cells.extend(row.errors.iter().map(|&e| sci3(e)));
        cells.push(rate_str(row.rate));
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// Markdown rendering: one block per quantity in table order (displacement,
/// then pressure, then flux), each a pipe table of coefficient rows against
/// mesh levels, mirroring the convergence-table layout.
pub fn markdown_error_table(table: &ErrorTable) -> String {
    let mut out = String::new();
    if !table.pairing.is_empty() {
        let _ = writeln!(out, "## {}\n", table.pairing);
    }
    let mut seen: Vec<Quantity> = Vec::new();
    for row in &table.rows {
        if !seen.contains(&row.quantity) {
            seen.push(row.quantity);
        }
    }
    for quantity in seen {
        let _ = writeln!(out, "### {}\n", quantity.heading());
        let mut header = vec!["kappa".to_string(), "c0".to_string()];
        header.extend(level_headers(&table.levels));
        header.push("rate".to_string());
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}|", vec!["---"; header.len()].join("|"));
        for row in table.rows.iter().filter(|r| r.quantity == quantity) {
            let mut cells = vec![sci3(row.kappa), sci3(row.c0)];
            cells.extend(row.errors.iter().map(|&e| sci3(e)));
            cells.push(rate_str(row.rate));
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
        let _ = writeln!(out);
    }
    out
}

/// CSV rendering of diagnostic reports: one row per (report, norm pairing),
/// with the report-level scalars repeated on each row.
pub fn csv_diagnostics(reports: &[DiagnosticReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "pairing,level,kappa,c0,tau,containment,beta_stokes,gamma_composite,\
         norms,beta,alpha_kernel,c_b,c_c"
    );
    for rep in reports {
        for (pairing, c) in &rep.darcy {
            let cells = [
                rep.pairing.clone(),
                rep.n_div.to_string(),
                sci3(rep.kappa),
                sci3(rep.c0),
                sci3(rep.tau),
                sci3(rep.containment),
                sci3(rep.beta_stokes),
                rep.gamma_composite.map(|g| sci3(g)).unwrap_or_default(),
                pairing.label().to_string(),
                sci3(c.beta),
                sci3(c.alpha_kernel),
                sci3(c.c_b),
                sci3(c.c_c),
            ];
            let _ = writeln!(out, "{}", cells.join(","));
        }
    }
    out
}

/// Markdown rendering of diagnostic reports: a summary table of the
/// per-configuration scalars, then one constants table per configuration.
pub fn markdown_diagnostics(reports: &[DiagnosticReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "### Stability summary\n");
    let _ = writeln!(
        out,
        "| pairing | level | kappa | c0 | containment | beta_stokes | gamma |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|---|");
    for rep in reports {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            rep.pairing,
            rep.n_div,
            sci3(rep.kappa),
            sci3(rep.c0),
            sci3(rep.containment),
            sci3(rep.beta_stokes),
            rep.gamma_composite.map(|g| sci3(g)).unwrap_or_default(),
        );
    }
    let _ = writeln!(out);
    for rep in reports {
        let _ = writeln!(
            out,
            "### Flux-pressure constants: {} level {} kappa {} c0 {}\n",
            rep.pairing,
            rep.n_div,
            sci3(rep.kappa),
            sci3(rep.c0)
        );
        let _ = writeln!(out, "| norms | beta | alpha_kernel | C_b | C_c |");
        let _ = writeln!(out, "|---|---|---|---|---|");
        for (pairing, c) in &rep.darcy {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                pairing.label(),
                sci3(c.beta),
                sci3(c.alpha_kernel),
                sci3(c.c_b),
                sci3(c.c_c)
            );
        }
        let _ = writeln!(out);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub markdown: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Formats {
            csv: true,
            markdown: true,
        }
    }
}

/// Write rendered text files `basename.csv` / `basename.md` under `outdir`,
/// creating the directory if needed. Returns the paths written.
pub fn write_rendered(
    outdir: &Path,
    basename: &str,
    csv: Option<String>,
    markdown: Option<String>,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(outdir).map_err(|source| ReportError::Unwritable {
        path: outdir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    for (ext, text) in [("csv", csv), ("md", markdown)] {
        if let Some(text) = text {
            let path = outdir.join(format!("{basename}.{ext}"));
            fs::write(&path, text).map_err(|source| ReportError::Unwritable {
                path: path.clone(),
                source,
            })?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Emit an error table under `outdir` in the selected formats.
pub fn write_error_table(
    table: &ErrorTable,
    outdir: &Path,
    basename: &str,
    formats: Formats,
) -> Result<Vec<PathBuf>, ReportError> {
    write_rendered(
        outdir,
        basename,
        formats.csv.then(|| csv_error_table(table)),
        formats.markdown.then(|| markdown_error_table(table)),
    )
}

/// Emit diagnostic reports under `outdir` in the selected formats.
pub fn write_diagnostics(
    reports: &[DiagnosticReport],
    outdir: &Path,
    basename: &str,
    formats: Formats,
) -> Result<Vec<PathBuf>, ReportError> {
    write_rendered(
        outdir,
        basename,
        formats.csv.then(|| csv_diagnostics(reports)),
        formats.markdown.then(|| markdown_diagnostics(reports)),
    )
}
