//! The `foldcert` command line.
//!
//! Every command prints a JSON envelope `{metadata, data}` on standard output.
//! When an output directory is given (`--output-dir` or `FOLDCERT_OUTPUT_DIR`)
//! the same envelope and the bulk arrays (curves, sections, traces, grids) are
//! also written there.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 when the
//! computation ran but declined to certify.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use foldcert_core::continuation::{
    detect_folds, refine_fold, scan_folds, trace_branch, ScanConfig, StepConfig, Termination, ARCLENGTH_NORM,
};
use foldcert_core::energy_pde::{build_allen_cahn, lookup_energy, sweep_and_certify, AllenCahnConfig, LoadPath, SweepConfig};
use foldcert_core::genericity::genericity_experiment;
use foldcert_core::io::{self, Metadata};
use foldcert_core::problem_model::{lookup, Expr, ProblemConfig};
use foldcert_core::singular_limit::{convergence_study, ExclusionWindow, FlowTrace, StudyConfig};
use foldcert_core::solve::{enumerate_section, NewtonConfig};
use foldcert_core::transversality::{certify, certify_energy};
use foldcert_core::{Error, FoldRecord, Point, ProblemSpec, Tolerances, Vector};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 271_828;
/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "FOLDCERT_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolArgs {
    /// Zero-set tolerance, relative to 1 + |x|.
    #[arg(long, global = true)]
    pub zero_tol: Option<f64>,
    /// Margins at or below this value count as vanishing.
    #[arg(long, global = true)]
    pub margin_tol: Option<f64>,
    /// Relative singular-value threshold for rank decisions.
    #[arg(long, global = true)]
    pub rank_tol: Option<f64>,
}

impl TolArgs {
    fn apply(&self) -> Result<Tolerances, CliError> {
        let mut t = Tolerances::default();
        for (name, v) in [("zero_tol", self.zero_tol), ("margin_tol", self.margin_tol), ("rank_tol", self.rank_tol)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(CliError::Usage(format!("{name} must be positive")));
                }
            }
        }
        if let Some(v) = self.zero_tol {
            t.zero_tol = v;
        }
        if let Some(v) = self.margin_tol {
            t.margin_tol = v;
        }
        if let Some(v) = self.rank_tol {
            t.rank.rank_tol = v;
        }
        Ok(t)
    }
}

#[derive(Debug, Parser)]
#[command(name = "foldcert", version, about = "Fold certification, continuation and genericity experiments")]
pub struct Cli {
    /// Directory for output files; nothing is written when absent.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV)]
    pub output_dir: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// File format for bulk arrays.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub tol: TolArgs,
    /// Print the JSON shapes of all outputs and exit.
    #[arg(long)]
    pub schema: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify one point of the zero set.
    Certify(CertifyArgs),
    /// Trace the branch through a start point.
    Trace(TraceArgs),
    /// Find and certify all folds in a parameter window.
    Folds(FoldsArgs),
    /// Monte Carlo perturbation experiment.
    Generic(GenericArgs),
    /// Singular limit and convergence of eps-traces.
    Limit(LimitArgs),
    /// Allen-Cahn load sweep with energy certificates.
    Pde(PdeArgs),
    /// Zeros at fixed parameter values.
    Section(SectionArgs),
    /// Run a command described by a TOML file.
    Run(RunArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyArgs {
    /// Catalog name or path to a problem file (.toml or .json).
    #[arg(long)]
    pub problem: String,
    /// Comma-separated `x1,..,xn,t`.
    #[arg(long, allow_hyphen_values = true)]
    pub point: String,
    /// Energy-form certificate (energy catalog names only).
    #[arg(long)]
    #[serde(default)]
    pub energy: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceArgs {
    #[arg(long)]
    pub problem: String,
    /// Comma-separated start point `x1,..,xn,t`.
    #[arg(long, allow_hyphen_values = true)]
    pub start: String,
    /// +1 to trace towards increasing t, -1 towards decreasing t.
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    #[serde(default = "one")]
    pub direction: i8,
    /// Parameter window `a,b`; defaults to the problem's range.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub t_range: Option<String>,
    /// Largest arclength step.
    #[arg(long)]
    #[serde(default)]
    pub max_step: Option<f64>,
}

fn one() -> i8 {
    1
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldsArgs {
    #[arg(long)]
    pub problem: String,
    /// Parameter window `a,b`.
    #[arg(long, allow_hyphen_values = true)]
    pub t_range: String,
    /// Multistart grid points per axis.
    #[arg(long)]
    #[serde(default)]
    pub density: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericArgs {
    #[arg(long)]
    pub problem: String,
    #[arg(long, default_value_t = 100)]
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Bound on |(y, K)|.
    #[arg(long, default_value_t = 0.1)]
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Parameter window `a,b`.
    #[arg(long, default_value = "-1,1", allow_hyphen_values = true)]
    #[serde(default = "default_window")]
    pub t_range: String,
}

fn default_samples() -> usize {
    100
}

fn default_radius() -> f64 {
    0.1
}

fn default_window() -> String {
    "-1,1".into()
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitArgs {
    #[arg(long)]
    pub problem: String,
    /// Comma-separated initial state.
    #[arg(long, allow_hyphen_values = true)]
    pub x_init: String,
    /// `t_start,t_end`; a decreasing span runs backward.
    #[arg(long, allow_hyphen_values = true)]
    pub t_span: String,
    /// Comma-separated eps values; empty builds the limit curve only.
    #[arg(long, default_value = "")]
    #[serde(default)]
    pub eps_list: String,
    /// Exclusion window constant `c` in `c eps^(2/3)`.
    #[arg(long)]
    #[serde(default)]
    pub window_c: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeArgs {
    /// Interior grid nodes.
    #[arg(long, default_value_t = 32)]
    #[serde(default = "default_m")]
    pub m: usize,
    /// Load amplitude as an expression in `t`.
    #[arg(long, default_value = "t", allow_hyphen_values = true)]
    #[serde(default = "default_load")]
    pub load: String,
    /// Multiplicative perturbation: expression in `x1` (node position) or a file of m numbers.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub z: Option<String>,
    /// Additive perturbation: expression in `x1` (node position) or a file of m numbers.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub y: Option<String>,
    /// Interval length L of (0, L).
    #[arg(long, default_value_t = 6.0)]
    #[serde(default = "default_length")]
    pub length: f64,
    /// Load window `a,b`.
    #[arg(long, default_value = "-1,1", allow_hyphen_values = true)]
    #[serde(default = "default_window")]
    pub t_range: String,
}

fn default_m() -> usize {
    32
}

fn default_load() -> String {
    "t".into()
}

fn default_length() -> f64 {
    6.0
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionArgs {
    #[arg(long)]
    pub problem: String,
    /// Comma-separated parameter values.
    #[arg(long, allow_hyphen_values = true)]
    pub t: String,
    #[arg(long)]
    #[serde(default)]
    pub density: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML file; unknown keys are rejected.
    #[arg(long)]
    pub config: PathBuf,
}

/// Top level of a `run --config` file. Command parameters sit next to these keys.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    command: String,
    /// Catalog name or problem file; may also be given under `[params]`.
    #[serde(default)]
    problem: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    format: Option<Format>,
    #[serde(default)]
    tolerances: Option<TolArgs>,
    #[serde(default)]
    params: toml::Table,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => {
                if is_numerical(e) {
                    2
                } else {
                    1
                }
            }
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

/// Errors where the input was valid but the numerics declined.
pub fn is_numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::Evaluation { .. }
            | Error::SvdFailure
            | Error::MaxIterExceeded { .. }
            | Error::SingularJacobian { .. }
            | Error::Diverged { .. }
            | Error::SingularBorderedSystem { .. }
            | Error::RankDeficientStart { .. }
            | Error::InsufficientData(_)
            | Error::DegeneratePairing(_)
            | Error::StepUnderflow { .. }
            | Error::NewtonFailureInStep { .. }
            | Error::NoConvergence { .. }
            | Error::NonTransversalFoldEncountered { .. }
            | Error::NoAttractorFound(_)
    )
}

/// What a command produced: the stdout document and the exit code.
#[derive(Debug)]
pub struct Outcome {
    pub stdout: String,
    pub exit_code: i32,
}

struct Ctx {
    out: Option<PathBuf>,
    seed: u64,
    format: Format,
    tols: Tolerances,
}

impl Ctx {
    fn meta(&self, command: &str, problem: &ProblemSpec) -> Metadata {
        Metadata::new(command, problem.name(), &problem.problem_hash(), self.seed, self.tols)
    }

    fn path(&self, name: &str) -> Option<PathBuf> {
        self.out.as_ref().map(|d| d.join(name))
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        if let Some(p) = self.path(name) {
            fs::write(&p, bytes).map_err(|e| CliError::Core(Error::Io(format!("{}: {e}", p.display()))))?;
        }
        Ok(())
    }

    /// Writes a bulk array either as CSV (through `csv`) or as JSON.
    fn write_bulk<T: Serialize>(
        &self,
        stem: &str,
        meta: &Metadata,
        json_value: &T,
        csv: impl FnOnce(&mut Vec<u8>) -> foldcert_core::Result<()>,
    ) -> Result<Option<String>, CliError> {
        if self.out.is_none() {
            return Ok(None);
        }
        let mut buf = Vec::new();
        let name = match self.format {
            Format::Csv => {
                csv(&mut buf)?;
                format!("{stem}.csv")
            }
            Format::Json => {
                io::write_json(&mut buf, meta, json_value)?;
                format!("{stem}.json")
            }
        };
        self.write(&name, &buf)?;
        Ok(Some(name))
    }

    fn finish<T: Serialize>(&self, file: &str, meta: &Metadata, data: &T, exit_code: i32) -> Result<Outcome, CliError> {
        let mut buf = Vec::new();
        io::write_json(&mut buf, meta, data)?;
        self.write(file, &buf)?;
        Ok(Outcome { stdout: String::from_utf8(buf).expect("utf-8 json"), exit_code })
    }
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().map_err(|_| CliError::Usage(format!("{what}: '{p}' is not a number"))))
        .collect()
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64), CliError> {
    match parse_list(s, what)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        other => Err(CliError::Usage(format!("{what}: expected two values, got {}", other.len()))),
    }
}

fn parse_point(s: &str, n: usize) -> Result<Point, CliError> {
    let v = parse_list(s, "point")?;
    if v.len() != n + 1 {
        return Err(CliError::Usage(format!("point needs {} values (x1..x{n}, t), got {}", n + 1, v.len())));
    }
    Ok(Point::from_slice(&v[..n], v[n]))
}

/// A catalog name, or a problem file ending in `.toml` or `.json`.
pub fn resolve_problem(name: &str) -> Result<ProblemSpec, CliError> {
    let path = Path::new(name);
    let is_file = name.ends_with(".toml") || name.ends_with(".json");
    if !is_file {
        return Ok(lookup(name)?);
    }
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{name}: {e}")))?;
    let cfg: ProblemConfig = if name.ends_with(".toml") {
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{name}: {e}")))?
    } else {
        io::from_json_str(&text)?
    };
    Ok(cfg.into_problem()?)
}

fn check_window(problem: &ProblemSpec, w: (f64, f64)) -> Result<(), CliError> {
    let (lo, hi) = problem.t_range();
    if !(w.0 < w.1 && w.0 > lo && w.1 < hi) {
        return Err(CliError::Usage(format!("window ({}, {}) must lie inside ({lo}, {hi})", w.0, w.1)));
    }
    Ok(())
}

fn cmd_certify(a: &CertifyArgs, ctx: &Ctx) -> Result<Outcome, CliError> {
    if a.energy {
        let ep = lookup_energy(&a.problem)?;
        let p = parse_point(&a.point, ep.problem().dim())?;
        let cert = certify_energy(&ep, &p, &ctx.tols)?;
        return ctx.finish("certificate.json", &ctx.meta("certify", ep.problem()).with("form", "energy"), &cert, 0);
    }
    let problem = resolve_problem(&a.problem)?;
    let p = parse_point(&a.point, problem.dim())?;
    let cert = certify(&problem, &p, &ctx.tols)?;
    ctx.finish("certificate.json", &ctx.meta("certify", &problem), &cert, 0)
}

#[derive(Serialize)]
struct TraceSummary {
    nodes: usize,
    total_arclength: f64,
    termination: Termination,
    curve_file: Option<String>,
    folds: Vec<FoldRecord>,
    failures: Vec<String>,
}

fn cmd_trace(a: &TraceArgs, ctx: &Ctx) -> Result<Outcome, CliError> {
    let problem = resolve_problem(&a.problem)?;
    let start = parse_point(&a.start, problem.dim())?;
    if a.direction != 1 && a.direction != -1 {
        return Err(CliError::Usage("direction must be 1 or -1".into()));
    }
    let mut step = StepConfig::default();
    if let Some(w) = &a.t_range {
        let w = parse_pair(w, "t-range")?;
        check_window(&problem, w)?;
        step.t_bounds = Some(w);
    }
    if let Some(h) = a.max_step {
        step.max_step = h;
    }
    let curve = trace_branch(&problem, &start, a.direction, &step)?;
    let mut folds = Vec::new();
    let mut failures = Vec::new();
    for br in detect_folds(&curve) {
        match refine_fold(&problem, &curve, br, &NewtonConfig::default(), &ctx.tols) {
            Ok(f) => folds.push(f),
            Err(e) => failures.push(e.to_string()),
        }
    }
    let meta = ctx.meta("trace", &problem).with("arclength_norm", ARCLENGTH_NORM);
    let rows = io::curve_rows(&curve);
    let curve_file = ctx.write_bulk("curve", &meta, &curve, |w| io::write_curve_csv(w, &meta, problem.dim(), &rows))?;
    let summary = TraceSummary {
        nodes: curve.len(),
        total_arclength: curve.arclength.last().copied().unwrap_or(0.0),
        termination: curve.termination,
        curve_file,
        folds,
        failures,
    };
    let code = if summary.failures.is_empty() { 0 } else { 2 };
    ctx.finish("trace.json", &meta, &summary, code)
}

#[derive(Serialize)]
struct FoldsSummary {
    folds: Vec<FoldRecord>,
    failures: Vec<String>,
    curve_files: Vec<String>,
}

fn cmd_folds(a: &FoldsArgs, ctx: &Ctx) -> Result<Outcome, CliError> {
    let problem = resolve_problem(&a.problem)?;
    let w = parse_pair(&a.t_range, "t-range")?;
    check_window(&problem, w)?;
    let mut scan = ScanConfig::for_problem(&problem, w);
    scan.tols = ctx.tols;
    if let Some(d) = a.density {
        scan.grid_density = d;
    }
    let found = scan_folds(&problem, &scan)?;
    let meta = ctx.meta("folds", &problem).with("arclength_norm", ARCLENGTH_NORM);
    let mut curve_files = Vec::new();
    for (k, c) in found.curves.iter().enumerate() {
        let rows = io::curve_rows(c);
        if let Some(f) = ctx.write_bulk(&format!("curve_{k}"), &meta, c, |w| io::write_curve_csv(w, &meta, problem.dim(), &rows))? {
            curve_files.push(f);
        }
    }
    let code = if found.failures.is_empty() { 0 } else { 2 };
    let summary = FoldsSummary { folds: found.folds, failures: found.failures, curve_files };
    ctx.finish("folds.json", &meta, &summary, code)
}

fn cmd_generic(a: &GenericArgs, ctx: &Ctx) -> Result<Outcome, CliError> {
    let problem = resolve_problem(&a.problem)?;
    let w = parse_pair(&a.t_range, "t-range")?;
    check_window(&problem, w)?;
    if !(a.radius >= 0.0 && a.radius.is_finite()) {
        return Err(CliError::Usage("radius must be non-negative".into()));
    }
    let mut scan = ScanConfig::for_problem(&problem, w);
    scan.tols = ctx.tols;
    let report = genericity_experiment(&problem, a.samples, a.radius, ctx.seed, &scan)?;
    ctx.finish("generic.json", &ctx.meta("generic", &problem), &report, 0)
}

#[derive(Serialize)]
struct SegmentEntry {
    file: Option<String>,
    stability: foldcert_core::singular_limit::Stability,
    t_start: f64,
    t_end: f64,
}

#[derive(Serialize)]
struct JumpEntry {
    t_jump: f64,
    x_minus: Vec<f64>,
    x_plus: Vec<f64>,
    ambiguous: bool,
    inner_trace_file: Option<String>,
    fold: FoldRecord,
}

#[derive(Serialize)]
struct TraceEntry {
    eps: f64,
    file: Option<String>,
    sup_distance: f64,
    window_half_width: f64,
    observed_jump_times: Vec<Option<f64>>,
    accepted_steps: usize,
    rejected_steps: usize,
}

#[derive(Serialize)]
struct LimitManifest {
    t_span: (f64, f64),
    exclusion_window: ExclusionWindow,
    segments: Vec<SegmentEntry>,
    jumps: Vec<JumpEntry>,
    traces: Vec<TraceEntry>,
}

fn write_flow(ctx: &Ctx, stem: &str, meta: &Metadata, trace: &FlowTrace, dim: usize) -> Result<Option<String>, CliError> {
    let rows = io::trace_rows(trace);
    ctx.write_bulk(stem, meta, trace, |w| io::write_trace_csv(w, meta, dim, &rows))
}

fn cmd_limit(a: &LimitArgs, ctx: &Ctx) -> Result<Outcome, CliError> {
    let problem = resolve_problem(&a.problem)?;
    let n = problem.dim();
    let x = parse_list(&a.x_init, "x-init")?;
    if x.len() != n {
        return Err(CliError::Usage(format!("x-init needs {n} values")));
    }
    let span = parse_pair(&a.t_span, "t-span")?;
    let eps = parse_list(&a.eps_list, "eps-list")?;
    if eps.iter().any(|e| !(*e > 0.0)) {
        return Err(CliError::Usage("eps values must be positive".into()));
    }
    let mut cfg = StudyConfig::default();
    cfg.limit.tols = ctx.tols;
    if let Some(c) = a.window_c {
        cfg.window = ExclusionWindow::FoldDelay { c };
    }
    let table = convergence_study(&problem, &Vector::from_vec(x), span, &eps, &cfg)?;
    let meta = ctx.meta("limit", &problem).with("exclusion_window", format!("{:?}", cfg.window));
    let mut manifest =
        LimitManifest { t_span: span, exclusion_window: cfg.window, segments: Vec::new(), jumps: Vec::new(), traces: Vec::new() };
    for (k, seg) in table.limit.segments.iter().enumerate() {
        let trace = FlowTrace {
            epsilon: None,
            times: seg.nodes.iter().map(|p| p.t).collect(),
            states: seg.nodes.iter().map(|p| p.x.clone()).collect(),
            step_stats: Default::default(),
            newton_iters: vec![0; seg.nodes.len()],
        };
        let file = write_flow(ctx, &format!("segment_{k}"), &meta, &trace, n)?;
        manifest.segments.push(SegmentEntry {
            file,
            stability: seg.stability,
            t_start: seg.nodes.first().map_or(f64::NAN, |p| p.t),
            t_end: seg.nodes.last().map_or(f64::NAN, |p| p.t),
        });
    }
    for (k, j) in table.limit.jumps.iter().enumerate() {
        let inner_trace_file = write_flow(ctx, &format!("jump_{k}_inner"), &meta, &j.inner_trace, n)?;
        manifest.jumps.push(JumpEntry {
            t_jump: j.t_jump,
            x_minus: j.x_minus.iter().copied().collect(),
            x_plus: j.x_plus.iter().copied().collect(),
            ambiguous: j.ambiguous,
            inner_trace_file,
            fold: j.fold.clone(),
        });
    }
    for (k, r) in table.rows.iter().enumerate() {
        let file = write_flow(ctx, &format!("trace_{k}"), &meta, &r.trace, n)?;
        manifest.traces.push(TraceEntry {
            eps: r.eps,
            file,
            sup_distance: r.sup_distance,
            window_half_width: r.window_half_width,
            observed_jump_times: r.observed_jump_times.clone(),
            accepted_steps: r.trace.step_stats.accepted,
            rejected_steps: r.trace.step_stats.rejected,
        });
    }
    ctx.finish("limit.json", &meta, &manifest, 0)
}

/// An expression in `x1` (node position) or a file of `m` numbers.
fn spatial_field(src: &str, nodes: &[f64]) -> Result<Vec<f64>, CliError> {
    let path = Path::new(src);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{src}: {e}")))?;
        let vals = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .map(|p| p.parse::<f64>().map_err(|_| CliError::Usage(format!("{src}: '{p}' is not a number"))))
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != nodes.len() {
            return Err(CliError::Usage(format!("{src}: expected {} values, got {}", nodes.len(), vals.len())));
        }
        return Ok(vals);
    }
    let e = Expr::parse(src, 1)?;
    let vals: Vec<f64> = nodes.iter().map(|&x| e.eval(&[x], 0.0)).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Usage(format!("'{src}' is not finite on the grid")));
    }
    Ok(vals)
}

#[derive(Serialize)]
struct PdeSummary {
    m: usize,
    h: f64,
    length: f64,
    folds: Vec<foldcert_core::energy_pde::CertifiedFold>,
    grid_file: Option<String>,
}

fn cmd_pde(a: &PdeArgs, ctx: &Ctx) -> Result<Outcome, CliError> {
    if a.m < 3 {
        return Err(CliError::Usage("m must be at least 3".into()));
    }
    if !(a.length > 0.0) {
        return Err(CliError::Usage("length must be positive".into()));
    }
    let window = parse_pair(&a.t_range, "t-range")?;
    let mut cfg = AllenCahnConfig { length: a.length, load: LoadPath::Expression(a.load.clone()), ..AllenCahnConfig::new(a.m) };
    let nodes = cfg.nodes();
    cfg.z = a.z.as_deref().map(|s| spatial_field(s, &nodes)).transpose()?;
    cfg.y = a.y.as_deref().map(|s| spatial_field(s, &nodes)).transpose()?;
    cfg.t_range = (window.0 - 1.0, window.1 + 1.0);
    let ep = build_allen_cahn(&cfg)?;
    let sweep = SweepConfig { tols: ctx.tols, ..SweepConfig::default() };
    let folds = sweep_and_certify(&ep, window, &sweep)?;
    let meta = ctx.meta("pde", ep.problem()).with("load", &a.load).with("length", a.length);
    let states: Vec<Vec<f64>> = folds.iter().map(|f| f.fold.point.x.iter().copied().collect()).collect();
    let grid_file = if ctx.out.is_some() {
        let mut buf = Vec::new();
        io::write_grid_csv(&mut buf, &meta, &nodes, &states)?;
        ctx.write("grid.csv", &buf)?;
        Some("grid.csv".to_string())
    } else {
        None
    };
    let summary = PdeSummary { m: a.m, h: cfg.h(), length: a.length, folds, grid_file };
    ctx.finish("pde.json", &meta, &summary, 0)
}

fn cmd_section(a: &SectionArgs, ctx: &Ctx) -> Result<Outcome, CliError> {
    let problem = resolve_problem(&a.problem)?;
    let ts = parse_list(&a.t, "t")?;
    if ts.is_empty() {
        return Err(CliError::Usage("t needs at least one value".into()));
    }
    let bounds = problem.scan_box().map(|b| b.to_vec()).unwrap_or_else(|| vec![(-3.0, 3.0); problem.dim()]);
    let density = a.density.unwrap_or(if problem.dim() > 2 { 5 } else { 21 });
    let sections = ts
        .iter()
        .map(|&t| enumerate_section(&problem, t, &bounds, density, &NewtonConfig::default()))
        .collect::<Result<Vec<_>, _>>()?;
    let meta = ctx.meta("section", &problem);
    let rows = io::section_rows(&sections);
    ctx.write_bulk("section", &meta, &sections, |w| io::write_section_csv(w, &meta, problem.dim(), &rows))?;
    ctx.finish("sections.json", &meta, &sections, 0)
}

fn from_params<T: serde::de::DeserializeOwned>(params: toml::Table) -> Result<T, CliError> {
    T::deserialize(toml::Value::Table(params)).map_err(|e| CliError::Usage(format!("config: {e}")))
}

fn cmd_run(a: &RunArgs, base: &Ctx) -> Result<Outcome, CliError> {
    let text = fs::read_to_string(&a.config).map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    let cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    let ctx = Ctx {
        out: cfg.output_dir.or_else(|| base.out.clone()),
        seed: cfg.seed.unwrap_or(base.seed),
        format: cfg.format.unwrap_or(base.format),
        tols: match cfg.tolerances {
            Some(t) => t.apply()?,
            None => base.tols,
        },
    };
    let mut params = cfg.params;
    if let Some(p) = cfg.problem {
        if params.insert("problem".into(), toml::Value::String(p)).is_some() {
            return Err(CliError::Usage("problem given twice".into()));
        }
    }
    // Parameters are parsed before anything runs, so unknown keys fail early.
    let cmd = match cfg.command.as_str() {
        "certify" => Command::Certify(from_params(params.clone())?),
        "trace" => Command::Trace(from_params(params.clone())?),
        "folds" => Command::Folds(from_params(params.clone())?),
        "generic" => Command::Generic(from_params(params.clone())?),
        "limit" => Command::Limit(from_params(params.clone())?),
        "pde" => Command::Pde(from_params(params.clone())?),
        "section" => Command::Section(from_params(params.clone())?),
        other => return Err(CliError::Usage(format!("unknown command '{other}'"))),
    };
    dispatch(&cmd, &ctx)
}

fn dispatch(cmd: &Command, ctx: &Ctx) -> Result<Outcome, CliError> {
    if let Some(d) = &ctx.out {
        fs::create_dir_all(d).map_err(|e| CliError::Usage(format!("{}: {e}", d.display())))?;
    }
    match cmd {
        Command::Certify(a) => cmd_certify(a, ctx),
        Command::Trace(a) => cmd_trace(a, ctx),
        Command::Folds(a) => cmd_folds(a, ctx),
        Command::Generic(a) => cmd_generic(a, ctx),
        Command::Limit(a) => cmd_limit(a, ctx),
        Command::Pde(a) => cmd_pde(a, ctx),
        Command::Section(a) => cmd_section(a, ctx),
        Command::Run(a) => cmd_run(a, ctx),
    }
}

/// JSON shapes of every document the tool writes, derived from small examples.
pub fn schema() -> Result<Value, CliError> {
    let tols = Tolerances::default();
    let fold = lookup("fold1d")?;
    let meta = Metadata::new("certify", fold.name(), &fold.problem_hash(), DEFAULT_SEED, tols);
    let cert = certify(&fold, &Point::from_slice(&[0.0], 0.0), &tols)?;
    let ep = lookup_energy("quartic1d")?;
    let ecert = certify_energy(&ep, &Point::from_slice(&[0.0], 0.0), &tols)?;
    let scan = ScanConfig::for_problem(&fold, (-0.5, 0.5));
    let found = scan_folds(&fold, &scan)?;
    let report = genericity_experiment(&fold, 1, 0.1, DEFAULT_SEED, &scan)?;
    let cubic = lookup("cubicload")?;
    let table = convergence_study(&cubic, &Vector::from_element(1, -1.0), (-0.6, 0.6), &[0.1], &StudyConfig::default())?;
    let section = enumerate_section(&fold, 0.25, &[(-2.0, 2.0)], 5, &NewtonConfig::default())?;
    let sv = |v: &dyn erased::Ser| io::shape_of(&v.value());
    Ok(json!({
        "envelope": {"metadata": sv(&meta), "data": "<document>"},
        "certify": sv(&cert),
        "certify --energy": sv(&ecert),
        "fold_record": sv(&found.folds[0]),
        "branch_curve (--format json)": sv(&found.curves[0]),
        "generic": sv(&report),
        "limit_curve": sv(&table.limit),
        "convergence_row": sv(&table.rows[0]),
        "section (--format json)": [sv(&section)],
        "csv": {
            "metadata_line": "# metadata: <metadata json>",
            "curve": "arclength,t,x1..xn,tangent_t,classification",
            "section": "t,root,x1..xn,residual",
            "trace": "t,x1..xn",
            "grid": "position,u1..uk",
        },
    }))
}

mod erased {
    pub trait Ser {
        fn value(&self) -> serde_json::Value;
    }
    impl<T: serde::Serialize> Ser for T {
        fn value(&self) -> serde_json::Value {
            serde_json::to_value(self).expect("serializable")
        }
    }
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let ctx = Ctx { out: cli.output_dir.clone(), seed: cli.seed, format: cli.format, tols: cli.tol.apply()? };
    if cli.schema {
        let s = serde_json::to_string_pretty(&schema()?).expect("json") + "\n";
        return Ok(Outcome { stdout: s, exit_code: 0 });
    }
    match &cli.command {
        Some(cmd) => dispatch(cmd, &ctx),
        None => Err(CliError::Usage("no command given (see --help)".into())),
    }
}

/// Parses arguments, runs, prints, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            out.exit_code
        }
        Err(e) => {
            eprintln!("foldcert: {e}");
            e.exit_code()
        }
    }
}
