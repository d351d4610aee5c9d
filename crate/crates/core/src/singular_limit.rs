//! The slow-fast dynamics `eps x' + f(x, t) = 0`: stiff integration, the
//! frozen-time flow `theta' + f(theta, t) = 0`, the `eps -> 0` limit curve
//! (stable branches joined by jumps at folds) and convergence measurements.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuation::{detect_folds, refine_fold, trace_branch, FoldRecord, StepConfig};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Vector};
use crate::problem_model::{Point, ProblemSpec};
use crate::solve::{newton_fixed_t, NewtonConfig};
use crate::transversality::{Classification, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    pub rtol: f64,
    pub atol: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub newton_max_iter: usize,
    pub max_steps: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self { rtol: 1e-6, atol: 1e-9, dt_init: 1e-6, dt_min: 1e-14, dt_max: 0.05, newton_max_iter: 12, max_steps: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    /// `None` for the frozen-time flow, whose clock is `s`.
    pub epsilon: Option<f64>,
    pub times: Vec<f64>,
    #[serde(with = "crate::numeric::serde_vectors")]
    pub states: Vec<Vector>,
    pub step_stats: StepStats,
    /// Newton iterations of each accepted step (summed over the doubling pair).
    pub newton_iters: Vec<usize>,
}

impl FlowTrace {
    fn new(epsilon: Option<f64>, t0: f64, x0: &Vector) -> Self {
        Self {
            epsilon,
            times: vec![t0],
            states: vec![x0.clone()],
            step_stats: StepStats::default(),
            newton_iters: vec![0],
        }
    }

    pub fn last_state(&self) -> &Vector {
        self.states.last().expect("non-empty trace")
    }
}

/// Solves `x + h f(x, t) = x_prev` by Newton; `h = dt / eps`.
fn implicit_euler_step(problem: &ProblemSpec, x_prev: &Vector, t: f64, h: f64, max_iter: usize) -> Option<(Vector, usize)> {
    let n = x_prev.len();
    let mut x = x_prev.clone();
    for k in 0..max_iter {
        let f = problem.eval_xt(&x, t).ok()?;
        let r = &x - x_prev + &f * h;
        let scale = 1.0 + x.norm();
        if r.norm() <= 1e-13 * scale && k > 0 {
            return Some((x, k));
        }
        let j = Matrix::identity(n, n) + problem.jacobian_xt(&x, t).ok()? * h;
        let dx = j.lu().solve(&(-r))?;
        x += &dx;
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
        if dx.norm() <= 1e-14 * scale {
            return Some((x, k + 1));
        }
    }
    let f = problem.eval_xt(&x, t).ok()?;
    let r = (&x - x_prev + &f * h).norm();
    (r <= 1e-10 * (1.0 + x.norm())).then_some((x, max_iter))
}

enum StepResult {
    Accepted { x: Vector, dt_next: f64, iters: usize },
    Rejected { dt_next: f64 },
    NewtonFailed,
}

/// One step-doubling attempt of size `dt` for `eps x' = -f(x, t)`, with `t` frozen when `frozen`.
fn attempt(problem: &ProblemSpec, x: &Vector, t: f64, dt: f64, eps: f64, frozen: bool, cfg: &OdeConfig) -> StepResult {
    let at = |s: f64| if frozen { t } else { t + s };
    let Some((full, i1)) = implicit_euler_step(problem, x, at(dt), dt / eps, cfg.newton_max_iter) else {
        return StepResult::NewtonFailed;
    };
    let Some((half, i2)) = implicit_euler_step(problem, x, at(0.5 * dt), 0.5 * dt / eps, cfg.newton_max_iter) else {
        return StepResult::NewtonFailed;
    };
    let Some((two, i3)) = implicit_euler_step(problem, &half, at(dt), 0.5 * dt / eps, cfg.newton_max_iter) else {
        return StepResult::NewtonFailed;
    };
    let err = (&two - &full).amax();
    let tol = cfg.atol + cfg.rtol * two.amax();
    let factor = if err > 0.0 { (0.9 * (tol / err).sqrt()).clamp(0.2, 2.0) } else { 2.0 };
    if err <= tol {
        StepResult::Accepted { x: two, dt_next: dt * factor, iters: i1 + i2 + i3 }
    } else {
        StepResult::Rejected { dt_next: dt * factor.min(0.5) }
    }
}

fn check_span(problem: &ProblemSpec, t_span: (f64, f64)) -> Result<()> {
    let (lo, hi) = problem.t_range();
    for t in [t_span.0, t_span.1] {
        if !problem.contains_t(t) {
            return Err(Error::DomainViolation { t, lo, hi });
        }
    }
    if t_span.0 == t_span.1 {
        return Err(Error::Config("empty time span".into()));
    }
    Ok(())
}

/// Implicit Euler with step-doubling error control for `eps x' + f(x, t) = 0`.
/// A backward span (`t_span.1 < t_span.0`) integrates in decreasing `t`.
pub fn integrate_eps_flow(problem: &ProblemSpec, x0: &Vector, eps: f64, t_span: (f64, f64), cfg: &OdeConfig) -> Result<FlowTrace> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    if x0.len() != problem.dim() || !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: x0.len() });
    }
    check_span(problem, t_span)?;
    let (t0, t1) = t_span;
    let dir = (t1 - t0).signum();
    let mut trace = FlowTrace::new(Some(eps), t0, x0);
    let mut x = x0.clone();
    let mut t = t0;
    let mut dt = cfg.dt_init.min((t1 - t0).abs());
    let mut newton_failed = false;
    while (t1 - t) * dir > 0.0 {
        if trace.step_stats.accepted + trace.step_stats.rejected >= cfg.max_steps {
            return Err(Error::StepUnderflow { t, dt });
        }
        let last = (t1 - t).abs() <= dt * (1.0 + 1e-12);
        let h = if last { (t1 - t).abs() } else { dt };
        // The implicit step runs with signed dt: eps x' = -f  =>  x_{k+1} + (dir h / eps) f = x_k.
        match attempt(problem, &x, t, dir * h, eps, false, cfg) {
            StepResult::Accepted { x: xn, dt_next, iters } => {
                x = xn;
                t = if last { t1 } else { t + dir * h };
                trace.times.push(t);
                trace.states.push(x.clone());
                trace.newton_iters.push(iters);
                trace.step_stats.accepted += 1;
                dt = dt_next.abs().min(cfg.dt_max);
                newton_failed = false;
            }
            StepResult::Rejected { dt_next } => {
                trace.step_stats.rejected += 1;
                dt = dt_next.abs();
            }
            StepResult::NewtonFailed => {
                trace.step_stats.rejected += 1;
                dt = 0.5 * h;
                newton_failed = true;
            }
        }
        if dt < cfg.dt_min {
            return Err(if newton_failed { Error::NewtonFailureInStep { t } } else { Error::StepUnderflow { t, dt } });
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

/// Stability of an equilibrium of `x' = -f(x, t)` from the spectrum of `-D_x f`.
pub fn classify_equilibrium(problem: &ProblemSpec, x: &Vector, t: f64) -> Result<Stability> {
    let j = problem.jacobian_xt(x, t)?;
    let lead = (-j).complex_eigenvalues().iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(if lead < -1e-8 {
        Stability::Stable
    } else if lead > 1e-8 {
        Stability::Unstable
    } else {
        Stability::Marginal
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub ode: OdeConfig,
    /// Stop once `|f(theta, t)| <= het_tol`.
    pub het_tol: f64,
    pub s_max: f64,
    pub escape_radius: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            ode: OdeConfig { dt_init: 1e-3, dt_max: 1e3, ..OdeConfig::default() },
            het_tol: 1e-8,
            s_max: 1e7,
            escape_radius: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerFlow {
    pub trace: FlowTrace,
    #[serde(with = "crate::numeric::serde_vector")]
    pub endpoint: Vector,
    pub stability: Stability,
    pub residual: f64,
}

/// Integrates `theta' = -f(theta, t_frozen)` until the residual drops below
/// `het_tol`, then polishes the endpoint by Newton when that converges nearby.
pub fn inner_gradient_flow(problem: &ProblemSpec, t_frozen: f64, theta0: &Vector, cfg: &FlowConfig) -> Result<InnerFlow> {
    if !problem.contains_t(t_frozen) {
        let (lo, hi) = problem.t_range();
        return Err(Error::DomainViolation { t: t_frozen, lo, hi });
    }
    let mut trace = FlowTrace::new(None, 0.0, theta0);
    let mut x = theta0.clone();
    let mut s = 0.0;
    let mut ds = cfg.ode.dt_init;
    let mut residual = problem.eval_xt(&x, t_frozen)?.norm();
    while residual > cfg.het_tol {
        if s >= cfg.s_max || trace.step_stats.accepted + trace.step_stats.rejected >= cfg.ode.max_steps {
            return Err(Error::NoConvergence { s_max: cfg.s_max, residual });
        }
        match attempt(problem, &x, t_frozen, ds, 1.0, true, &cfg.ode) {
            StepResult::Accepted { x: xn, dt_next, iters } => {
                x = xn;
                s += ds;
                trace.times.push(s);
                trace.states.push(x.clone());
                trace.newton_iters.push(iters);
                trace.step_stats.accepted += 1;
                ds = dt_next.min(cfg.ode.dt_max);
                residual = problem.eval_xt(&x, t_frozen)?.norm();
            }
            StepResult::Rejected { dt_next } => {
                trace.step_stats.rejected += 1;
                ds = dt_next;
            }
            StepResult::NewtonFailed => {
                trace.step_stats.rejected += 1;
                ds *= 0.5;
            }
        }
        if x.amax() > cfg.escape_radius {
            return Err(Error::NoConvergence { s_max: s, residual });
        }
        if ds < cfg.ode.dt_min {
            return Err(Error::StepUnderflow { t: s, dt: ds });
        }
    }
    if let Ok(p) = newton_fixed_t(problem, t_frozen, &x, &NewtonConfig::default()) {
        if (&p.x - &x).norm() <= 1e-4 * (1.0 + x.norm()) {
            x = p.x;
            residual = p.residual;
        }
    }
    let stability = classify_equilibrium(problem, &x, t_frozen)?;
    Ok(InnerFlow { trace, endpoint: x, stability, residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSegment {
    pub nodes: Vec<Point>,
    pub stability: Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub t_jump: f64,
    #[serde(with = "crate::numeric::serde_vector")]
    pub x_minus: Vector,
    #[serde(with = "crate::numeric::serde_vector")]
    pub x_plus: Vector,
    pub fold: FoldRecord,
    pub inner_trace: FlowTrace,
    /// Both seeds reached distinct attractors; the first one was kept.
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCurve {
    pub t_span: (f64, f64),
    pub segments: Vec<LimitSegment>,
    pub jumps: Vec<Jump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitConfig {
    pub flow: FlowConfig,
    pub step: StepConfig,
    pub newton: NewtonConfig,
    pub tols: Tolerances,
    /// Jump seeds sit at `x_fold +- jump_offset (1 + |x_fold|) v`.
    pub jump_offset: f64,
    pub max_jumps: usize,
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self {
            flow: FlowConfig::default(),
            step: StepConfig { max_step: 0.05, ..StepConfig::default() },
            newton: NewtonConfig::default(),
            tols: Tolerances::default(),
            jump_offset: 1e-4,
            max_jumps: 16,
        }
    }
}

fn settle(problem: &ProblemSpec, t: f64, x: &Vector, cfg: &FlowConfig) -> Result<Vector> {
    let flow = inner_gradient_flow(problem, t, x, cfg).map_err(|e| Error::NoAttractorFound(format!("from the initial state: {e}")))?;
    if flow.stability != Stability::Stable {
        return Err(Error::NoAttractorFound(format!("initial state settles on a {:?} equilibrium at t = {t}", flow.stability)));
    }
    Ok(flow.endpoint)
}

fn land(problem: &ProblemSpec, fold: &FoldRecord, cfg: &LimitConfig) -> Result<(Vector, FlowTrace, bool)> {
    let x_f = &fold.point.x;
    let t_f = fold.point.t;
    let delta = cfg.jump_offset * (1.0 + x_f.norm());
    let away = 1e-3 * (1.0 + x_f.norm());
    let mut found: Vec<InnerFlow> = Vec::new();
    for sign in [1.0, -1.0] {
        let seed = x_f + &fold.kernel_v * (sign * delta);
        if let Ok(flow) = inner_gradient_flow(problem, t_f, &seed, &cfg.flow) {
            if flow.stability == Stability::Stable && (&flow.endpoint - x_f).norm() > away {
                found.push(flow);
            }
        }
    }
    let ambiguous = found.len() == 2 && (&found[0].endpoint - &found[1].endpoint).norm() > away;
    let first = found
        .into_iter()
        .next()
        .ok_or_else(|| Error::NoAttractorFound(format!("both jump seeds at the fold t = {t_f} settle back or escape")))?;
    Ok((first.endpoint, first.trace, ambiguous))
}

/// Follows the stable branch through `(x_init, t_span.0)` and jumps at every
/// fold along the frozen-time flow until `t_span.1`.
pub fn build_limit_curve(problem: &ProblemSpec, x_init: &Vector, t_span: (f64, f64), cfg: &LimitConfig) -> Result<LimitCurve> {
    check_span(problem, t_span)?;
    let (t0, t1) = t_span;
    let dir: i8 = if t1 > t0 { 1 } else { -1 };
    let window = (t0.min(t1), t0.max(t1));
    let mut x = settle(problem, t0, x_init, &cfg.flow)?;
    let mut t = t0;
    let mut curve = LimitCurve { t_span, segments: Vec::new(), jumps: Vec::new() };
    let step = StepConfig { t_bounds: Some(window), ..cfg.step.clone() };
    loop {
        let start = Point::new(x.clone(), t);
        let branch = trace_branch(problem, &start, dir, &step)?;
        let bracket = detect_folds(&branch).into_iter().next();
        let Some(br) = bracket else {
            let mut nodes = branch.nodes;
            let last = nodes.last().cloned().unwrap_or(start);
            if last.t != t1 {
                let end = newton_fixed_t(problem, t1, &last.x, &cfg.newton)?;
                nodes.push(Point::new(end.x, t1));
            }
            curve.segments.push(LimitSegment { nodes, stability: Stability::Stable });
            return Ok(curve);
        };
        let fold = refine_fold(problem, &branch, br, &cfg.newton, &cfg.tols)?;
        if fold.certificate.classification != Classification::TransversalSingular {
            return Err(Error::NonTransversalFoldEncountered { t: fold.point.t });
        }
        let mut nodes: Vec<Point> = branch.nodes[..=br.0].to_vec();
        nodes.push(fold.point.clone());
        curve.segments.push(LimitSegment { nodes, stability: Stability::Stable });
        if curve.jumps.len() >= cfg.max_jumps {
            return Err(Error::NoAttractorFound(format!("more than {} jumps", cfg.max_jumps)));
        }
        let (x_plus, inner_trace, ambiguous) = land(problem, &fold, cfg)?;
        t = fold.point.t;
        x = x_plus.clone();
        curve.jumps.push(Jump { t_jump: t, x_minus: fold.point.x.clone(), x_plus, fold, inner_trace, ambiguous });
    }
}

impl LimitCurve {
    /// The limit state at `t`, interpolated along the covering segment and
    /// polished by Newton. At a jump time the post-jump state is returned.
    pub fn state_at(&self, problem: &ProblemSpec, t: f64) -> Option<Vector> {
        for seg in self.segments.iter().rev() {
            for w in seg.nodes.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                if (t - a.t) * (t - b.t) <= 0.0 {
                    let lam = if b.t == a.t { 0.0 } else { (t - a.t) / (b.t - a.t) };
                    let guess = &a.x + (&b.x - &a.x) * lam;
                    return Some(match newton_fixed_t(problem, t, &guess, &NewtonConfig::default()) {
                        Ok(p) if (&p.x - &guess).norm() <= 0.1 * (1.0 + guess.norm()) => p.x,
                        _ => guess,
                    });
                }
            }
        }
        None
    }
}

/// Half-width of the interval excluded around each jump time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExclusionWindow {
    /// `c eps log(1/eps)`.
    EpsLog { c: f64 },
    /// `c eps^(2/3)`, the delay scale of a passage through a fold.
    FoldDelay { c: f64 },
}

impl Default for ExclusionWindow {
    fn default() -> Self {
        ExclusionWindow::FoldDelay { c: 3.0 }
    }
}

impl ExclusionWindow {
    pub fn half_width(&self, eps: f64) -> f64 {
        match *self {
            ExclusionWindow::EpsLog { c } => c * eps * (1.0 / eps).ln(),
            ExclusionWindow::FoldDelay { c } => c * eps.powf(2.0 / 3.0),
        }
    }
}

#[derive(Default, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub limit: LimitConfig,
    pub ode: OdeConfig,
    pub window: ExclusionWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub sup_distance: f64,
    pub window_half_width: f64,
    /// Times at which the trace crosses halfway between `x_minus` and `x_plus`.
    pub observed_jump_times: Vec<Option<f64>>,
    pub trace: FlowTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub limit: LimitCurve,
    pub window: ExclusionWindow,
    pub rows: Vec<ConvergenceRow>,
}

fn observed_jump_time(trace: &FlowTrace, jump: &Jump) -> Option<f64> {
    let d = &jump.x_plus - &jump.x_minus;
    let dd = d.norm_squared();
    let progress = |x: &Vector| (x - &jump.x_minus).dot(&d) / dd;
    let after = |t: f64| (t - jump.t_jump) * (trace.times.last().copied().unwrap_or(t) - trace.times[0]).signum() >= -1e-12;
    let mut prev: Option<(f64, f64)> = None;
    for (t, x) in trace.times.iter().zip(&trace.states) {
        let p = progress(x);
        if let Some((tp, pp)) = prev {
            if after(*t) && pp < 0.5 && p >= 0.5 {
                return Some(tp + (t - tp) * (0.5 - pp) / (p - pp));
            }
        }
        prev = Some((*t, p));
    }
    None
}

/// Integrates each `eps` from the settled initial equilibrium and measures the
/// sup-distance to the limit curve away from the jumps.
pub fn convergence_study(
    problem: &ProblemSpec,
    x_init: &Vector,
    t_span: (f64, f64),
    eps_list: &[f64],
    cfg: &StudyConfig,
) -> Result<ConvergenceTable> {
    let limit = build_limit_curve(problem, x_init, t_span, &cfg.limit)?;
    let x0 = limit.segments[0].nodes[0].x.clone();
    let rows: Result<Vec<ConvergenceRow>> = eps_list
        .par_iter()
        .map(|&eps| {
            let trace = integrate_eps_flow(problem, &x0, eps, t_span, &cfg.ode)?;
            let w = cfg.window.half_width(eps);
            let mut sup: f64 = 0.0;
            for (t, x) in trace.times.iter().zip(&trace.states) {
                if limit.jumps.iter().any(|j| (t - j.t_jump).abs() <= w) {
                    continue;
                }
                if let Some(y) = limit.state_at(problem, *t) {
                    sup = sup.max((x - y).norm());
                }
            }
            let observed_jump_times = limit.jumps.iter().map(|j| observed_jump_time(&trace, j)).collect();
            Ok(ConvergenceRow { eps, sup_distance: sup, window_half_width: w, observed_jump_times, trace })
        })
        .collect();
    Ok(ConvergenceTable { limit, window: cfg.window, rows: rows? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem_model::lookup;

    fn v1(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    fn decay() -> ProblemSpec {
        ProblemSpec::new("decay", 1, (-10.0, 10.0), |x, _| x.clone())
            .unwrap()
            .with_jacobian(|_, _| Matrix::identity(1, 1))
    }

    #[test]
    fn exponential_decay() {
        let tr = integrate_eps_flow(&decay(), &v1(1.0), 0.1, (0.0, 1.0), &OdeConfig::default()).unwrap();
        let x1 = tr.last_state()[0];
        let exact = (-10.0f64).exp();
        assert!((x1 / exact - 1.0).abs() < 0.1, "{x1} {exact}");
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*tr.times.last().unwrap(), 1.0);
    }

    #[test]
    fn linear_tracking_lags_by_eps() {
        let p = lookup("linear1d").unwrap();
        let eps = 0.01;
        let tr = integrate_eps_flow(&p, &v1(0.0), eps, (0.0, 1.0), &OdeConfig::default()).unwrap();
        for (t, x) in tr.times.iter().zip(&tr.states) {
            if *t > 10.0 * eps {
                assert!((x[0] - (t - eps)).abs() <= 2.0 * eps * 0.1, "{t} {}", x[0]);
            }
        }
    }

    #[test]
    fn backward_span_runs() {
        let tr = integrate_eps_flow(&decay(), &v1(1.0), 0.1, (1.0, 0.0), &OdeConfig::default()).unwrap();
        assert!(tr.times.windows(2).all(|w| w[1] < w[0]));
        // backward in t the flow expands
        assert!(tr.last_state()[0] > 1.0);
    }

    #[test]
    fn inner_flow_basins() {
        let p = lookup("cubicload").unwrap();
        let cfg = FlowConfig::default();
        let up = inner_gradient_flow(&p, 0.0, &v1(0.1), &cfg).unwrap();
        assert!((up.endpoint[0] - 1.0).abs() < 1e-10 && up.stability == Stability::Stable);
        let down = inner_gradient_flow(&p, 0.0, &v1(-0.1), &cfg).unwrap();
        assert!((down.endpoint[0] + 1.0).abs() < 1e-10);
        assert!(up.residual <= cfg.het_tol);
        let still = inner_gradient_flow(&p, 0.0, &v1(1.0), &cfg).unwrap();
        assert_eq!(still.endpoint[0], 1.0);
        assert_eq!(still.trace.times.len(), 1);
        let mid = inner_gradient_flow(&p, 0.0, &v1(0.0), &cfg).unwrap();
        assert_eq!(mid.stability, Stability::Unstable);
    }

    #[test]
    fn energy_decays_along_inner_flow() {
        let ep = crate::energy_pde::lookup_energy("cubicload").unwrap();
        let flow = inner_gradient_flow(ep.problem(), 0.2, &v1(-0.3), &FlowConfig::default()).unwrap();
        let e: Vec<f64> = flow.trace.states.iter().map(|x| ep.energy_value(x, 0.2).unwrap()).collect();
        for w in e.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()));
        }
    }

    #[test]
    fn cubic_load_limit_curve_jumps_once() {
        let p = lookup("cubicload").unwrap();
        let lc = build_limit_curve(&p, &v1(-1.0), (-0.6, 0.6), &LimitConfig::default()).unwrap();
        assert_eq!(lc.jumps.len(), 1);
        let j = &lc.jumps[0];
        let tf = 2.0 / (3.0 * 3f64.sqrt());
        assert!((j.t_jump - tf).abs() < 1e-8);
        assert!((j.x_minus[0] + 1.0 / 3f64.sqrt()).abs() < 1e-8);
        let landing = crate::problem_model::cubic_real_roots(-1.0, -tf)[1];
        assert!((j.x_plus[0] - landing).abs() < 1e-6, "{} {landing}", j.x_plus[0]);
        assert!((landing - 2.0 / 3f64.sqrt()).abs() < 1e-6);
        assert!(p.eval_xt(&j.x_plus, j.t_jump).unwrap().norm() <= 1e-10);
        for seg in &lc.segments {
            for n in &seg.nodes {
                assert!(p.eval(n).unwrap().norm() < 1e-8);
            }
        }
        assert!((lc.state_at(&p, 0.6).unwrap()[0] - crate::problem_model::cubic_real_roots(-1.0, -0.6)[0]).abs() < 1e-10);
    }

    #[test]
    fn fold_without_attractor_is_reported() {
        let p = lookup("fold1d").unwrap();
        let e = build_limit_curve(&p, &v1(1.0), (1.0, -1.0), &LimitConfig::default()).unwrap_err();
        assert!(matches!(e, Error::NoAttractorFound(_)), "{e:?}");
        let e = build_limit_curve(&p, &v1(-1.0), (1.0, -1.0), &LimitConfig::default()).unwrap_err();
        assert!(matches!(e, Error::NoAttractorFound(_)), "{e:?}");
    }

    #[test]
    fn unique_branch_has_no_jumps() {
        let p = lookup("linear1d").unwrap();
        let lc = build_limit_curve(&p, &v1(0.3), (-0.5, 0.5), &LimitConfig::default()).unwrap();
        assert!(lc.jumps.is_empty() && lc.segments.len() == 1);
        let tab = convergence_study(&p, &v1(0.3), (-0.5, 0.5), &[1e-1, 5e-2, 2.5e-2], &StudyConfig::default()).unwrap();
        let ratios: Vec<f64> = tab.rows.iter().map(|r| r.sup_distance / r.eps).collect();
        for r in &ratios {
            assert!((r - 1.0).abs() < 0.1, "{ratios:?}");
        }
    }

    #[test]
    fn pitchfork_limit_is_refused() {
        let p = lookup("pitchfork1d").unwrap();
        // stable branch x = sqrt(t) followed backward reaches the pitchfork
        let e = build_limit_curve(&p, &v1(1.0), (1.0, -0.5), &LimitConfig::default()).unwrap_err();
        assert!(matches!(e, Error::NonTransversalFoldEncountered { .. }), "{e:?}");
    }

    #[test]
    fn window_shapes() {
        assert!((ExclusionWindow::EpsLog { c: 5.0 }.half_width(0.1) - 0.5 * 10f64.ln()).abs() < 1e-15);
        assert!((ExclusionWindow::FoldDelay { c: 3.0 }.half_width(1e-3) - 0.03).abs() < 1e-12);
    }
}
