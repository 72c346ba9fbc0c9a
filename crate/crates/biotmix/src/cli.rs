//! Command-line front end: flat key=value configuration with flag overrides,
//! four subcommands, and exit codes that separate usage mistakes from
//! numerical failures.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::diagnostics::{run_diagnostics, DiagnosticsError};
use crate::driver::{run_study, DriverError, StudyPoint};
use crate::pairing::{lookup, registry, ElementPairing};
use crate::problem::{verify_manufactured, Params};
use crate::report::{
    error_table, write_diagnostics, write_error_table, ErrorTable, Formats, Quantity, ReportError,
};

/// Usage and configuration mistakes exit with 1, numerical failures with 2.
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("malformed configuration line `{0}` (expected key=value)")]
    MalformedLine(String),
    #[error("invalid value for `{key}`: {why}")]
    BadValue { key: String, why: String },
    #[error("cannot read config file {path}: {source}")]
    UnreadableConfig {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// What a run does; the file key `subcommand` uses the same names as the
/// command-line verbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Converge,
    Diagnose,
    Verify,
    ReproducePaper,
}

impl Verb {
    pub fn label(self) -> &'static str {
        match self {
            Verb::Converge => "converge",
            Verb::Diagnose => "diagnose",
            Verb::Verify => "verify",
            Verb::ReproducePaper => "reproduce-paper",
        }
    }

    fn from_label(s: &str) -> Option<Verb> {
        [
            Verb::Converge,
            Verb::Diagnose,
            Verb::Verify,
            Verb::ReproducePaper,
        ]
        .into_iter()
        .find(|v| v.label() == s)
    }
}

/// Full run description. One flat namespace shared by every subcommand;
/// keys a subcommand does not consult are carried along unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: Verb,
    pub pairings: Vec<String>,
    pub kappa: Vec<f64>,
    pub c0: Vec<f64>,
    /// Mesh subdivision counts (mesh size h = 1/n).
    pub h: Vec<usize>,
    pub tau: f64,
    pub t_final: f64,
    pub norms: Vec<Quantity>,
    pub outdir: PathBuf,
    pub formats: Formats,
    /// Extends canned reproduction sweeps by one further refinement.
    pub deep: bool,
    pub jobs: usize,
    /// Always on; runs are seed-free and reproducible. Present so config
    /// files can state it, rejected if set to false.
    pub deterministic: bool,
    /// Sample count for the manufactured-solution verification.
    pub samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            subcommand: Verb::Converge,
            pairings: vec!["p2-rt0-dg0".to_string()],
            kappa: vec![1.0],
            c0: vec![0.0],
            h: vec![8, 16, 32, 64],
            tau: 1.0,
            t_final: 1.0,
            norms: Quantity::DEFAULT.to_vec(),
            outdir: PathBuf::from("out"),
            formats: Formats::default(),
            deep: false,
            jobs: 1,
            deterministic: true,
            samples: 1000,
        }
    }
}

impl RunConfig {
    /// Per-verb starting point before file and flag overrides. Eigenvalue
    /// diagnostics only run on coarse meshes, so `diagnose` starts from the
    /// coarse level set instead of the convergence one.
    pub fn default_for(verb: Verb) -> Self {
        let mut cfg = RunConfig::default();
        cfg.subcommand = verb;
        if verb == Verb::Diagnose {
            cfg.h = vec![4, 8, 16];
        }
        cfg
    }
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>().map_err(|e| CliError::BadValue {
                key: key.to_string(),
                why: format!("`{t}` is not a number ({e})"),
            })
        })
        .collect()
}

fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>().map_err(|e| CliError::BadValue {
                key: key.to_string(),
                why: format!("`{t}` is not a positive integer ({e})"),
            })
        })
        .collect()
}

fn parse_one_f64(key: &str, value: &str) -> Result<f64, CliError> {
    value.trim().parse::<f64>().map_err(|e| CliError::BadValue {
        key: key.to_string(),
        why: format!("`{value}` is not a number ({e})"),
    })
}

fn parse_one_usize(key: &str, value: &str) -> Result<usize, CliError> {
    value
        .trim()
        .parse::<usize>()
        .map_err(|e| CliError::BadValue {
            key: key.to_string(),
            why: format!("`{value}` is not a positive integer ({e})"),
        })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(CliError::BadValue {
            key: key.to_string(),
            why: format!("`{other}` is not `true` or `false`"),
        }),
    }
}

/// Apply one key=value setting. This is the single mutation point shared by
/// config files and command-line flags, so both spell values identically.
pub fn apply_setting(cfg: &mut RunConfig, key: &str, value: &str) -> Result<(), CliError> {
    match key {
        "subcommand" => {
            cfg.subcommand = Verb::from_label(value.trim()).ok_or_else(|| CliError::BadValue {
                key: key.to_string(),
                why: format!(
                    "`{value}` is not one of converge, diagnose, verify, reproduce-paper"
                ),
            })?;
        }
        "pairing" => {
            cfg.pairings = value
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect();
        }
        "kappa" => cfg.kappa = parse_f64_list(key, value)?,
        "c0" => cfg.c0 = parse_f64_list(key, value)?,
        "h" => cfg.h = parse_usize_list(key, value)?,
        "tau" => cfg.tau = parse_one_f64(key, value)?,
        "t-final" => cfg.t_final = parse_one_f64(key, value)?,
        "norms" => {
            cfg.norms = value
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| {
                    Quantity::from_label(t).ok_or_else(|| CliError::BadValue {
                        key: key.to_string(),
                        why: format!(
                            "`{t}` is not one of displacement, pressure, flux-w, flux-hdiv"
                        ),
                    })
                })
                .collect::<Result<_, _>>()?;
        }
        "outdir" => cfg.outdir = PathBuf::from(value.trim()),
        "format" => {
            let mut formats = Formats {
                csv: false,
                markdown: false,
            };
            for t in value.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                match t {
                    "csv" => formats.csv = true,
                    "markdown" => formats.markdown = true,
                    other => {
                        return Err(CliError::BadValue {
                            key: key.to_string(),
                            why: format!("`{other}` is not one of csv, markdown"),
                        })
                    }
                }
            }
            cfg.formats = formats;
        }
        "deep" => cfg.deep = parse_bool(key, value)?,
        "jobs" => cfg.jobs = parse_one_usize(key, value)?,
        "deterministic" => cfg.deterministic = parse_bool(key, value)?,
        "samples" => cfg.samples = parse_one_usize(key, value)?,
        other => return Err(CliError::UnknownKey(other.to_string())),
    }
    Ok(())
}

/// Parse flat key=value text onto `cfg`. Blank lines and `#` comments are
/// skipped; any unknown key is rejected by name.
pub fn apply_config_text(cfg: &mut RunConfig, text: &str) -> Result<(), CliError> {
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::MalformedLine(line.to_string()))?;
        apply_setting(cfg, key.trim(), value)?;
    }
    Ok(())
}

/// Parse a complete configuration from text, starting at the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    apply_config_text(&mut cfg, text)?;
    validate(&cfg)?;
    Ok(cfg)
}

fn join_f64(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn join_usize(values: &[usize]) -> String {
    values
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Render a configuration as the same key=value text `parse_config` reads;
/// parsing the emission reproduces the configuration exactly.
pub fn emit_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    let formats = {
        let mut parts = Vec::new();
        if cfg.formats.csv {
            parts.push("csv");
        }
        if cfg.formats.markdown {
            parts.push("markdown");
        }
        parts.join(",")
    };
    let norms = cfg
        .norms
        .iter()
        .map(|q| q.label())
        .collect::<Vec<_>>()
        .join(",");
    let _ = writeln!(out, "subcommand={}", cfg.subcommand.label());
    let _ = writeln!(out, "pairing={}", cfg.pairings.join(","));
    let _ = writeln!(out, "kappa={}", join_f64(&cfg.kappa));
    let _ = writeln!(out, "c0={}", join_f64(&cfg.c0));
    let _ = writeln!(out, "h={}", join_usize(&cfg.h));
    let _ = writeln!(out, "tau={:e}", cfg.tau);
    let _ = writeln!(out, "t-final={:e}", cfg.t_final);
    let _ = writeln!(out, "norms={norms}");
    let _ = writeln!(out, "outdir={}", cfg.outdir.display());
    let _ = writeln!(out, "format={formats}");
    let _ = writeln!(out, "deep={}", cfg.deep);
    let _ = writeln!(out, "jobs={}", cfg.jobs);
    let _ = writeln!(out, "deterministic={}", cfg.deterministic);
    let _ = writeln!(out, "samples={}", cfg.samples);
    out
}

/// Validate invariants the solver relies on; every violation names its key.
pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let bad = |key: &str, why: String| CliError::BadValue {
        key: key.to_string(),
        why,
    };
    if cfg.pairings.is_empty() {
        return Err(bad("pairing", "at least one pairing is required".into()));
    }
    for name in &cfg.pairings {
        if lookup(name).is_none() {
            let known = registry()
                .iter()
                .map(|p| p.name())
                .collect::<Vec<_>>()
                .join(", ");
            return Err(bad(
                "pairing",
                format!("`{name}` is not a registered pairing (known: {known})"),
            ));
        }
    }
    if cfg.kappa.is_empty() {
        return Err(bad("kappa", "at least one value is required".into()));
    }
    for &k in &cfg.kappa {
        if !(k > 0.0) {
            return Err(bad(
                "kappa",
                format!("permeability must be positive, got {k}"),
            ));
        }
    }
    if cfg.c0.is_empty() {
        return Err(bad("c0", "at least one value is required".into()));
    }
    for &c in &cfg.c0 {
        if !(c >= 0.0) {
            return Err(bad("c0", format!("storage must be nonnegative, got {c}")));
        }
    }
    if cfg.h.is_empty() {
        return Err(bad("h", "at least one subdivision count is required".into()));
    }
    for &n in &cfg.h {
        if n == 0 {
            return Err(bad("h", "subdivision counts must be at least 1".into()));
        }
    }
    if cfg.subcommand == Verb::Diagnose {
        if let Some(&n) = cfg.h.iter().find(|&&n| n > 16) {
            return Err(bad(
                "h",
                format!("diagnose runs eigenvalue problems; levels are capped at 16, got {n}"),
            ));
        }
    }
    if !(cfg.tau > 0.0) {
        return Err(bad(
            "tau",
            format!("step length must be positive, got {}", cfg.tau),
        ));
    }
    if !(cfg.t_final > 0.0) {
        return Err(bad(
            "t-final",
            format!("final time must be positive, got {}", cfg.t_final),
        ));
    }
    let steps = cfg.t_final / cfg.tau;
    if (steps - steps.round()).abs() > 1e-9 || steps.round() < 1.0 {
        return Err(bad(
            "tau",
            format!(
                "t-final ({}) must be a whole number of steps of tau ({})",
                cfg.t_final, cfg.tau
            ),
        ));
    }
    if cfg.norms.is_empty() {
        return Err(bad("norms", "at least one quantity is required".into()));
    }
    if !(cfg.formats.csv || cfg.formats.markdown) {
        return Err(bad("format", "at least one output format is required".into()));
    }
    if cfg.jobs == 0 {
        return Err(bad("jobs", "job count must be at least 1".into()));
    }
    if !cfg.deterministic {
        return Err(bad(
            "deterministic",
            "runs are always deterministic; this cannot be disabled".into(),
        ));
    }
    if cfg.samples < 100 {
        return Err(bad(
            "samples",
            format!("at least 100 samples are required, got {}", cfg.samples),
        ));
    }
    Ok(())
}

fn n_steps(cfg: &RunConfig) -> usize {
    (cfg.t_final / cfg.tau).round() as usize
}

/// Flags shared by every subcommand. Values are raw strings handed to the
/// same parser as config-file lines, so a flag and its file key behave
/// identically; any flag given on the command line overrides the file.
#[derive(Debug, Args, Default, Clone)]
struct CommonArgs {
    /// Flat key=value config file applied before any flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Element pairing name(s), comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pairing: Option<String>,
    /// Permeability value(s), comma separated.
    #[arg(long, allow_hyphen_values = true)]
    kappa: Option<String>,
    /// Storage coefficient value(s), comma separated.
    #[arg(long, allow_hyphen_values = true)]
    c0: Option<String>,
    /// Mesh subdivision count(s), comma separated (mesh size h = 1/n).
    #[arg(long, allow_hyphen_values = true)]
    h: Option<String>,
    /// Backward-Euler step length.
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<String>,
    /// Final time; must be a whole number of steps.
    #[arg(long = "t-final", allow_hyphen_values = true)]
    t_final: Option<String>,
    /// Reported quantities, comma separated.
    #[arg(long)]
    norms: Option<String>,
    /// Output directory for rendered tables.
    #[arg(long)]
    outdir: Option<String>,
    /// Output formats, comma separated (csv, markdown).
    #[arg(long)]
    format: Option<String>,
    /// Extend canned reproduction sweeps one refinement deeper.
    #[arg(long)]
    deep: bool,
    /// Worker threads for independent solves.
    #[arg(long, allow_hyphen_values = true)]
    jobs: Option<String>,
    /// Always on; accepted for config-file symmetry.
    #[arg(long)]
    deterministic: Option<String>,
    /// Sample count for manufactured-solution verification.
    #[arg(long, allow_hyphen_values = true)]
    samples: Option<String>,
}

impl CommonArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |key: &'static str, v: &Option<String>| {
            if let Some(v) = v {
                out.push((key, v.clone()));
            }
        };
        push("pairing", &self.pairing);
        push("kappa", &self.kappa);
        push("c0", &self.c0);
        push("h", &self.h);
        push("tau", &self.tau);
        push("t-final", &self.t_final);
        push("norms", &self.norms);
        push("outdir", &self.outdir);
        push("format", &self.format);
        push("jobs", &self.jobs);
        push("deterministic", &self.deterministic);
        push("samples", &self.samples);
        if self.deep {
            out.push(("deep", "true".to_string()));
        }
        out
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "biotmix",
    about = "Mixed finite elements and stability diagnostics for three-field Biot poroelasticity"
)]
struct Cli {
    #[command(subcommand)]
    verb: CliVerb,
}

#[derive(Debug, Subcommand)]
enum CliVerb {
    /// Run a convergence study over the configured coefficient/mesh grid.
    Converge(CommonArgs),
    /// Compute stability diagnostics over the configured grid.
    Diagnose(CommonArgs),
    /// Check the manufactured solution against independent residual oracles.
    Verify(CommonArgs),
    /// Emit the canned convergence tables and the coarse H(div) flux table.
    ReproducePaper(CommonArgs),
}

impl CliVerb {
    fn split(&self) -> (Verb, &CommonArgs) {
        match self {
            CliVerb::Converge(a) => (Verb::Converge, a),
            CliVerb::Diagnose(a) => (Verb::Diagnose, a),
            CliVerb::Verify(a) => (Verb::Verify, a),
            CliVerb::ReproducePaper(a) => (Verb::ReproducePaper, a),
        }
    }
}

/// Build the effective configuration: per-verb defaults, then the config
/// file (if any), then explicit flags.
fn effective_config(verb: Verb, args: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default_for(verb);
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|source| CliError::UnreadableConfig {
            path: path.clone(),
            source,
        })?;
        apply_config_text(&mut cfg, &text)?;
    }
    cfg.subcommand = verb;
    for (key, value) in args.overrides() {
        apply_setting(&mut cfg, key, &value)?;
    }
    validate(&cfg)?;
    Ok(cfg)
}

#[derive(Debug, Error)]
enum RunError {
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl RunError {
    /// Unwritable output is a usage problem; everything else that gets this
    /// far is a numerical failure.
    fn exit_code(&self) -> i32 {
        match self {
            RunError::Report(_) => EXIT_USAGE,
            _ => EXIT_NUMERICAL,
        }
    }
}

fn points(cfg: &RunConfig) -> Vec<StudyPoint> {
    cfg.kappa
        .iter()
        .flat_map(|&kappa| cfg.c0.iter().map(move |&c0| StudyPoint { kappa, c0 }))
        .collect()
}

fn study_table(
    pairing: &dyn ElementPairing,
    levels: &[usize],
    pts: &[StudyPoint],
    cfg: &RunConfig,
    quantities: &[Quantity],
) -> Result<(ErrorTable, f64), RunError> {
    let base = Params {
        tau: cfg.tau,
        ..Params::default()
    };
    let results = run_study(pairing, levels, pts, &base, n_steps(cfg), cfg.jobs)?;
    let worst_relres = results.iter().fold(0.0f64, |w, r| w.max(r.relres));
    let table = error_table(&results, quantities)?;
    Ok((table, worst_relres))
}

fn run_converge(cfg: &RunConfig) -> Result<(), RunError> {
    let pts = points(cfg);
    for name in &cfg.pairings {
        let pairing = lookup(name).expect("validated pairing");
        let started = Instant::now();
        let (table, worst_relres) = study_table(pairing, &cfg.h, &pts, cfg, &cfg.norms)?;
        let written = write_error_table(
            &table,
            &cfg.outdir,
            &format!("converge-{name}"),
            cfg.formats,
        )?;
        println!(
            "{name}: {} cases in {:.1}s, worst relative residual {:.2e}",
            pts.len() * cfg.h.len(),
            started.elapsed().as_secs_f64(),
            worst_relres
        );
        for path in written {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn run_diagnose(cfg: &RunConfig) -> Result<(), RunError> {
    let mut reports = Vec::new();
    for name in &cfg.pairings {
        let pairing = lookup(name).expect("validated pairing");
        for &n in &cfg.h {
            for &kappa in &cfg.kappa {
                for &c0 in &cfg.c0 {
                    let params = Params {
                        kappa,
                        c0,
                        tau: cfg.tau,
                        ..Params::default()
                    };
                    reports.push(run_diagnostics(pairing, n, &params)?);
                }
            }
        }
    }
    for rep in &reports {
        let gamma = rep
            .gamma_composite
            .map(|g| format!("{g:.3}"))
            .unwrap_or_else(|| "-".to_string());
        println!(
            "{} level {} kappa {:.0e} c0 {:.0e}: containment {:.2e}, beta_S {:.3}, gamma {}",
            rep.pairing, rep.n_div, rep.kappa, rep.c0, rep.containment, rep.beta_stokes, gamma
        );
    }
    let written = write_diagnostics(&reports, &cfg.outdir, "diagnose", cfg.formats)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run_verify(cfg: &RunConfig) -> Result<(), RunError> {
    let params = Params {
        kappa: cfg.kappa[0],
        c0: cfg.c0[0],
        tau: cfg.tau,
        ..Params::default()
    };
    let started = Instant::now();
    let report = verify_manufactured(params, cfg.samples);
    println!(
        "sampled {} interior points: momentum {:.2e}, mass {:.2e}, flux law {:.2e}",
        cfg.samples, report.momentum, report.mass, report.darcy
    );
    println!(
        "worst equation `{}` at t={:.3}, x=({:.3}, {:.3})",
        report.worst_equation, report.worst_t, report.worst_x[0], report.worst_x[1]
    );
    println!(
        "boundary displacement {:.2e}, boundary normal flux {:.2e}, pressure mean {:.2e}",
        report.boundary_displacement, report.boundary_flux, report.pressure_mean
    );
    println!("done in {:.2}s", started.elapsed().as_secs_f64());
    Ok(())
}

/// The canned reproduction scenarios: per pairing, the three convergence
/// tables (vanishing storage, fixed storage, storage sweep at unit
/// permeability), plus the coarse-mesh H(div)-flux table for the
/// divergence-conforming pairing.
fn run_reproduce(cfg: &RunConfig) -> Result<(), RunError> {
    let mut levels = vec![8usize, 16, 32, 64];
    if cfg.deep {
        levels.push(128);
    }
    // An explicit h list overrides the canned depth (useful for smoke runs).
    if cfg.h != RunConfig::default().h {
        levels = cfg.h.clone();
    }
    let kappa_sweep = [1.0, 1e-4, 1e-8, 1e-12];
    let weighted = [
        Quantity::DisplacementH1,
        Quantity::PressureL2,
        Quantity::FluxW,
    ];
    let unweighted = [
        Quantity::DisplacementH1,
        Quantity::PressureL2,
        Quantity::FluxHdiv,
    ];
    let scenarios: Vec<(String, &dyn ElementPairing, Vec<StudyPoint>, &[Quantity])> = {
        let mut list: Vec<(String, &dyn ElementPairing, Vec<StudyPoint>, &[Quantity])> =
            Vec::new();
        for pairing in registry() {
            let name = pairing.name();
            list.push((
                format!("vanishing-storage-{name}"),
                pairing,
                kappa_sweep
                    .iter()
                    .map(|&kappa| StudyPoint { kappa, c0: 0.0 })
                    .collect(),
                &weighted,
            ));
            list.push((
                format!("fixed-storage-{name}"),
                pairing,
                kappa_sweep
                    .iter()
                    .map(|&kappa| StudyPoint { kappa, c0: 1.0 })
                    .collect(),
                &weighted,
            ));
            list.push((
                format!("storage-sweep-{name}"),
                pairing,
                vec![
                    StudyPoint { kappa: 1.0, c0: 1.0 },
                    StudyPoint {
                        kappa: 1.0,
                        c0: 1e-12,
                    },
                ],
                &weighted,
            ));
        }
        let rt0 = lookup("p2-rt0-dg0").expect("registered pairing");
        list.push((
            "hdiv-flux-p2-rt0-dg0".to_string(),
            rt0,
            [1.0, 1e-4, 1e-8]
                .iter()
                .map(|&kappa| StudyPoint { kappa, c0: 0.0 })
                .collect(),
            &unweighted,
        ));
        list
    };
    for (basename, pairing, pts, quantities) in scenarios {
        let started = Instant::now();
        let (table, worst_relres) = study_table(pairing, &levels, &pts, cfg, quantities)?;
        let written = write_error_table(&table, &cfg.outdir, &basename, cfg.formats)?;
        println!(
            "{basename}: {:.1}s, worst relative residual {:.2e}",
            started.elapsed().as_secs_f64(),
            worst_relres
        );
        for path in written {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

/// Parse arguments, run, and hand back the process exit code.
pub fn main_entry<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let (verb, args) = cli.verb.split();
    let cfg = match effective_config(verb, args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let outcome = match verb {
        Verb::Converge => run_converge(&cfg),
        Verb::Diagnose => run_diagnose(&cfg),
        Verb::Verify => run_verify(&cfg),
        Verb::ReproducePaper => run_reproduce(&cfg),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip_through_emission() {
        let defaults = RunConfig::default();
        let parsed = parse_config(&emit_config(&defaults)).unwrap();
        assert_eq!(parsed, defaults);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("kapa=1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("kapa"), "{msg}");
        assert!(matches!(err, CliError::UnknownKey(_)));
    }

    #[test]
    fn negative_permeability_names_positivity() {
        let mut cfg = RunConfig::default();
        apply_setting(&mut cfg, "kappa", "-1").unwrap();
        let err = validate(&cfg).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("kappa") && msg.contains("positive"), "{msg}");
    }

    #[test]
    fn config_file_values_stand_without_flags() {
        let cfg = parse_config("kappa=1e-8\nc0=0\nh=8,16,32\npairing=p2-rt0-dg0\n").unwrap();
        assert_eq!(cfg.kappa, vec![1e-8]);
        assert_eq!(cfg.c0, vec![0.0]);
        assert_eq!(cfg.h, vec![8, 16, 32]);
        assert_eq!(cfg.pairings, vec!["p2-rt0-dg0".to_string()]);
        assert_eq!(cfg.tau, 1.0);
    }

    #[test]
    fn flags_override_file_values() {
        let mut cfg = RunConfig::default_for(Verb::Converge);
        apply_config_text(&mut cfg, "kappa=1e-8\nh=8,16\n").unwrap();
        let args = CommonArgs {
            kappa: Some("1e-4,1".to_string()),
            ..CommonArgs::default()
        };
        for (key, value) in args.overrides() {
            apply_setting(&mut cfg, key, &value).unwrap();
        }
        assert_eq!(cfg.kappa, vec![1e-4, 1.0]);
        assert_eq!(cfg.h, vec![8, 16]);
    }

    #[test]
    fn fractional_step_count_is_rejected() {
        let mut cfg = RunConfig::default();
        cfg.tau = 0.3;
        let err = validate(&cfg).unwrap_err();
        assert!(err.to_string().contains("tau"));
    }

    #[test]
    fn diagnose_levels_are_capped() {
        let mut cfg = RunConfig::default_for(Verb::Diagnose);
        assert!(validate(&cfg).is_ok());
        cfg.h = vec![32];
        let err = validate(&cfg).unwrap_err();
        assert!(err.to_string().contains("16"), "{err}");
    }

    #[test]
    fn determinism_cannot_be_disabled() {
        let err = parse_config("deterministic=false\n").unwrap_err();
        assert!(err.to_string().contains("deterministic"));
    }

    #[test]
    fn unregistered_pairing_lists_known_names() {
        let err = parse_config("pairing=p3-bdm1-dg1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("p3-bdm1-dg1") && msg.contains("p2-rt0-dg0"), "{msg}");
    }

    proptest! {
        #[test]
        fn any_valid_config_round_trips(
            kappa in proptest::collection::vec(1e-14f64..10.0, 1..4),
            c0 in proptest::collection::vec(0.0f64..2.0, 1..3),
            h in proptest::collection::vec(1usize..100, 1..5),
            steps in 1usize..6,
            tau_scale in 0.1f64..10.0,
            deep in any::<bool>(),
            jobs in 1usize..8,
            samples in 100usize..5000,
        ) {
            let cfg = RunConfig {
                subcommand: Verb::Converge,
                pairings: vec!["p2-rt0-dg0".to_string(), "p2-p1-dg0".to_string()],
                kappa,
                c0,
                h,
                tau: tau_scale,
                t_final: tau_scale * steps as f64,
                norms: vec![Quantity::DisplacementH1, Quantity::FluxHdiv],
                outdir: PathBuf::from("some/dir"),
                formats: Formats { csv: true, markdown: deep },
                deep,
                jobs,
                deterministic: true,
                samples,
            };
            let mut parsed = RunConfig::default();
            apply_config_text(&mut parsed, &emit_config(&cfg)).unwrap();
            prop_assert_eq!(parsed, cfg);
        }
    }
}
