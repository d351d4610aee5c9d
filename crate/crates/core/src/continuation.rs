//! Pseudo-arclength continuation of the zero set, fold detection through
//! sign changes of the tangent's `t`-component, and fold refinement.
//!
//! Tangents are unit vectors in the product norm `|(dx, dt)|^2 = |dx|^2 + dt^2`
//! and are stored as `(dx_1, ..., dx_n, dt)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{lex_cmp, lu_solve, max_abs, Matrix, Vector};
use crate::problem_model::{Point, ProblemSpec};
use crate::solve::{enumerate_section, newton_augmented, sep_tol, NewtonConfig};
use crate::spectral::{kernel_pair, null_vector, rank_report};
use crate::transversality::{certify, check_df_onto, AugmentedPoint, TransversalityCertificate, Tolerances};

/// Norm convention recorded with every curve.
pub const ARCLENGTH_NORM: &str = "euclidean product norm |(dx, dt)|^2 = |dx|^2 + dt^2";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub growth: f64,
    /// Consecutive successes before the step grows.
    pub grow_after: usize,
    pub max_nodes: usize,
    pub corrector_max_iter: usize,
    /// Node residual target, scaled like the Newton tolerance.
    pub curve_tol: f64,
    /// Largest accepted angle (radians) between consecutive tangents.
    pub max_angle: f64,
    /// Tracing stops when `t` leaves this window (defaults to the problem range).
    pub t_bounds: Option<(f64, f64)>,
    /// Tracing stops when `max_i |x_i|` exceeds this bound.
    pub x_bound: Option<f64>,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            initial_step: 0.05,
            min_step: 1e-7,
            max_step: 0.2,
            growth: 1.3,
            grow_after: 3,
            max_nodes: 5000,
            corrector_max_iter: 12,
            curve_tol: 1e-11,
            max_angle: 0.35,
            t_bounds: None,
            x_bound: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeClass {
    Regular,
    NearSingular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    DomainBoundary,
    StateBound,
    StepUnderflow,
    ClosedLoop,
    MaxNodes,
}

/// Which side of `t0` the two local branches occupy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FoldSide {
    Above,
    Below,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefinementMethod {
    AugmentedNewton,
    TangentBisection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub point: Point,
    pub certificate: TransversalityCertificate,
    /// Unit kernel direction of `D_x F` at the fold.
    #[serde(with = "crate::numeric::serde_vector")]
    pub kernel_v: Vector,
    /// `|dt/ds|` at the fold.
    pub tdot: f64,
    /// Second arclength derivative of `t`; absent where `dF` is not onto.
    pub tddot_estimate: Option<f64>,
    pub side: FoldSide,
    pub method: RefinementMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchCurve {
    pub dim: usize,
    pub nodes: Vec<Point>,
    #[serde(with = "crate::numeric::serde_vectors")]
    pub tangents: Vec<Vector>,
    pub classifications: Vec<NodeClass>,
    pub folds: Vec<FoldRecord>,
    pub arclength: Vec<f64>,
    pub termination: Termination,
    pub norm: String,
}

impl BranchCurve {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tangent_t(&self, i: usize) -> f64 {
        self.tangents[i][self.dim]
    }
}

fn node_tolerance(tol: f64, x: &Vector, df: &Matrix) -> f64 {
    tol * (1.0 + x.norm()) * max_abs(df).max(1.0)
}

/// Newton on `(F(z), <normal, z - anchor>) = 0`, starting at `z0`.
///
/// Besides the residual test, the last Newton step must be negligible.
pub fn correct(
    problem: &ProblemSpec,
    z0: &Vector,
    anchor: &Vector,
    normal: &Vector,
    tol: f64,
    max_iter: usize,
) -> Result<Vector> {
    let n = problem.dim();
    let mut z = z0.clone();
    let mut prev_step = f64::INFINITY;
    for iter in 0..max_iter {
        let p = Point::from_stacked(&z);
        let f = problem.eval(&p)?;
        let df = problem.total_differential(&p)?;
        let c = normal.dot(&(&z - anchor));
        let settled = f.norm() == 0.0 || prev_step <= 1e-10 * (1.0 + z.norm());
        if f.norm() <= node_tolerance(tol, &p.x, &df) && c.abs() <= 1e-13 * (1.0 + z.norm()) && settled {
            return Ok(z);
        }
        let mut m = Matrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n + 1)).copy_from(&df);
        m.set_row(n, &normal.transpose());
        let rhs = Vector::from_fn(n + 1, |i, _| if i < n { -f[i] } else { -c });
        let step = lu_solve(&m, &rhs).ok_or(Error::SingularJacobian { iteration: iter })?;
        let s = step.norm();
        if iter >= 1 && s > 2.0 * prev_step {
            return Err(Error::Diverged { radius: s });
        }
        prev_step = s;
        z += step;
    }
    let p = Point::from_stacked(&z);
    let residual = problem.eval(&p)?.norm();
    Err(Error::MaxIterExceeded { iterations: max_iter, residual })
}

/// Unit tangent at `z`, oriented to have positive inner product with `prev`.
pub fn tangent_at(problem: &ProblemSpec, z: &Vector, prev: &Vector) -> Result<Vector> {
    let n = problem.dim();
    let df = problem.total_differential(&Point::from_stacked(z))?;
    let mut m = Matrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n + 1)).copy_from(&df);
    m.set_row(n, &prev.transpose());
    let mut e = Vector::zeros(n + 1);
    e[n] = 1.0;
    let tau = match lu_solve(&m, &e) {
        Some(t) if t.norm() > 0.0 => t.normalize(),
        _ => null_vector(&df)?,
    };
    Ok(if tau.dot(prev) < 0.0 { -tau } else { tau })
}

fn classify_node(problem: &ProblemSpec, p: &Point) -> Result<NodeClass> {
    let kp = kernel_pair(&problem.jacobian_x(p)?)?;
    Ok(if kp.sigma_min <= 1e-3 * kp.sigma_max.max(1.0) { NodeClass::NearSingular } else { NodeClass::Regular })
}

/// Traces the branch through `start`. `direction = +1` starts with
/// increasing `t` (or, at a turning point, with a positive first component).
pub fn trace_branch(problem: &ProblemSpec, start: &Point, direction: i8, cfg: &StepConfig) -> Result<BranchCurve> {
    let n = problem.dim();
    let f0 = problem.eval(start)?;
    let df0 = problem.total_differential(start)?;
    let start_tol = node_tolerance(cfg.curve_tol.max(1e-9), &start.x, &df0);
    if f0.norm() > start_tol {
        return Err(Error::StartNotOnCurve { residual: f0.norm() });
    }
    let tols = Tolerances::default();
    let rank = rank_report(&df0, &tols.rank)?;
    if !rank.surjective {
        return Err(Error::RankDeficientStart { rank: rank.numerical_rank, dim: n });
    }
    let sign = if direction >= 0 { 1.0 } else { -1.0 };
    let mut tau = null_vector(&df0)?;
    let lead = if tau[n].abs() > 1e-12 { tau[n] } else { tau.iter().copied().find(|c| c.abs() > 1e-12).unwrap_or(1.0) };
    if lead * sign < 0.0 {
        tau = -tau;
    }
    let (t_lo, t_hi) = cfg.t_bounds.unwrap_or(problem.t_range());
    let in_window = |t: f64| t >= t_lo && t <= t_hi && problem.contains_t(t);

    let mut z = start.stacked();
    let z_start = z.clone();
    let mut curve = BranchCurve {
        dim: n,
        nodes: vec![start.clone()],
        tangents: vec![tau.clone()],
        classifications: vec![classify_node(problem, start)?],
        folds: Vec::new(),
        arclength: vec![0.0],
        termination: Termination::MaxNodes,
        norm: ARCLENGTH_NORM.to_string(),
    };
    let mut h = cfg.initial_step;
    let mut successes = 0usize;
    let cos_max = cfg.max_angle.cos();

    while curve.nodes.len() < cfg.max_nodes {
        let pred = &z + &tau * h;
        let pred_t = pred[n];
        if !problem.contains_t(pred_t) && !in_window(pred_t) && (pred_t <= t_lo || pred_t >= t_hi) {
            // Predictor already outside the window: finish here.
            let step_fits = h <= cfg.min_step;
            if step_fits || !problem.contains_t(pred_t) {
                curve.termination = Termination::DomainBoundary;
                break;
            }
        }
        let attempt = correct(problem, &pred, &pred, &tau, cfg.curve_tol, cfg.corrector_max_iter)
            .and_then(|z_new| tangent_at(problem, &z_new, &tau).map(|t_new| (z_new, t_new)));
        let accepted = match attempt {
            Ok((z_new, t_new)) => {
                let dist = (&z_new - &z).norm();
                if t_new.dot(&tau) >= cos_max && dist <= 2.0 * h && dist > 0.0 {
                    Some((z_new, t_new, dist))
                } else {
                    None
                }
            }
            Err(_) => None,
        };
        let Some((z_new, t_new, dist)) = accepted else {
            h *= 0.5;
            successes = 0;
            if h < cfg.min_step {
                curve.termination = Termination::StepUnderflow;
                break;
            }
            continue;
        };
        if !in_window(z_new[n]) {
            curve.termination = Termination::DomainBoundary;
            break;
        }
        if let Some(b) = cfg.x_bound {
            if z_new.rows(0, n).amax() > b {
                curve.termination = Termination::StateBound;
                break;
            }
        }
        let p_new = Point::from_stacked(&z_new);
        let s = curve.arclength.last().copied().unwrap_or(0.0) + dist;
        curve.classifications.push(classify_node(problem, &p_new)?);
        curve.nodes.push(p_new);
        curve.tangents.push(t_new.clone());
        curve.arclength.push(s);
        let back_home = (&z_new - &z_start).norm();
        if curve.nodes.len() > 3 && s > 4.0 * h && back_home <= sep_tol(&z_start).max(0.5 * h) && t_new.dot(&curve.tangents[0]) > 0.9 {
            curve.termination = Termination::ClosedLoop;
            break;
        }
        z = z_new;
        tau = t_new;
        successes += 1;
        if successes >= cfg.grow_after {
            h = (h * cfg.growth).min(cfg.max_step);
            successes = 0;
        }
    }
    Ok(curve)
}

/// Index pairs `(i, i+1)` across which the tangent's `t`-component changes sign.
pub fn detect_folds(curve: &BranchCurve) -> Vec<(usize, usize)> {
    (0..curve.len().saturating_sub(1))
        .filter(|&i| (curve.tangent_t(i) >= 0.0) != (curve.tangent_t(i + 1) >= 0.0))
        .map(|i| (i, i + 1))
        .collect()
}

fn tangent_t_sign_along(problem: &ProblemSpec, z: &Vector, chord: &Vector) -> Result<f64> {
    let df = problem.total_differential(&Point::from_stacked(z))?;
    let tau = null_vector(&df)?;
    let n = problem.dim();
    let oriented = if tau.dot(chord) < 0.0 { -tau } else { tau };
    Ok(oriented[n])
}

fn bisect_turning_point(problem: &ProblemSpec, za: &Vector, zb: &Vector, tol: f64) -> Result<Vector> {
    let chord = zb - za;
    let normal = chord.normalize();
    let at = |theta: f64| -> Result<Vector> {
        let anchor = za + &chord * theta;
        correct(problem, &anchor, &anchor, &normal, tol, 30)
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut z_lo = at(lo)?;
    let s_lo = tangent_t_sign_along(problem, &z_lo, &chord)?;
    for _ in 0..80 {
        if (hi - lo) * chord.norm() < 1e-15 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let z_mid = at(mid)?;
        let s_mid = tangent_t_sign_along(problem, &z_mid, &chord)?;
        if (s_mid >= 0.0) == (s_lo >= 0.0) {
            lo = mid;
            z_lo = z_mid;
        } else {
            hi = mid;
        }
    }
    Ok(z_lo)
}

/// Second difference of `t` along the curve through a fold, by arclength.
fn estimate_tddot(problem: &ProblemSpec, z0: &Vector, chord: &Vector, tol: f64) -> Result<f64> {
    let n = problem.dim();
    let df = problem.total_differential(&Point::from_stacked(z0))?;
    let mut tau = null_vector(&df)?;
    if tau.dot(chord) < 0.0 {
        tau = -tau;
    }
    let ds = 1e-3;
    let zp = correct(problem, &(z0 + &tau * ds), &(z0 + &tau * ds), &tau, tol, 30)?;
    let zm = correct(problem, &(z0 - &tau * ds), &(z0 - &tau * ds), &tau, tol, 30)?;
    Ok((zp[n] - 2.0 * z0[n] + zm[n]) / (ds * ds))
}

/// Pins the singular point inside a bracket and certifies it.
///
/// Bordered Newton is tried first; when the bordered system is singular or
/// fails, the turning point of the tangent is located by bisection along
/// the bracket chord instead.
pub fn refine_fold(
    problem: &ProblemSpec,
    curve: &BranchCurve,
    bracket: (usize, usize),
    newton: &NewtonConfig,
    tols: &Tolerances,
) -> Result<FoldRecord> {
    let n = problem.dim();
    let za = curve.nodes[bracket.0].stacked();
    let zb = curve.nodes[bracket.1].stacked();
    let chord = &zb - &za;
    let mid = Point::from_stacked(&((&za + &zb) * 0.5));
    let v0 = kernel_pair(&problem.jacobian_x(&mid)?)?.v;
    let q0 = AugmentedPoint::new(mid.x.clone(), mid.t, v0);
    let reach = 2.0 * chord.norm() + 1e-8;

    let augmented = newton_augmented(problem, &q0, newton)
        .ok()
        .filter(|out| (out.point.point().stacked() - mid.stacked()).norm() <= reach);
    let (point, kernel_v, method) = match augmented {
        Some(out) => (out.point.point(), out.point.v.clone(), RefinementMethod::AugmentedNewton),
        None => {
            let z = bisect_turning_point(problem, &za, &zb, 1e-13)?;
            let p = Point::from_stacked(&z);
            let v = kernel_pair(&problem.jacobian_x(&p)?)?.v;
            (p, v, RefinementMethod::TangentBisection)
        }
    };
    let certificate = certify(problem, &point, tols)?;
    let z0 = point.stacked();
    let df = problem.total_differential(&point)?;
    let tdot = null_vector(&df)?[n].abs();
    let tddot_estimate = if check_df_onto(problem, &point, tols)?.surjective {
        Some(estimate_tddot(problem, &z0, &chord, 1e-13)?)
    } else {
        None
    };
    let side = match tddot_estimate {
        Some(a) if a > 0.0 => FoldSide::Above,
        Some(a) if a < 0.0 => FoldSide::Below,
        _ => FoldSide::Undetermined,
    };
    Ok(FoldRecord { point, certificate, kernel_v, tdot, tddot_estimate, side, method })
}

/// Log-log fit of the distance between the two zeros near a fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationFit {
    pub exponent: f64,
    /// `(offset, distance)` for each offset that resolved two zeros.
    pub samples: Vec<(f64, f64)>,
}

pub fn quadratic_separation_check(
    problem: &ProblemSpec,
    fold: &FoldRecord,
    offsets: &[f64],
    newton: &NewtonConfig,
) -> Result<SeparationFit> {
    let sides: &[f64] = match fold.side {
        FoldSide::Above => &[1.0],
        FoldSide::Below => &[-1.0],
        FoldSide::Undetermined => &[1.0, -1.0],
    };
    let curvature = fold.tddot_estimate.map(f64::abs).filter(|a| *a > 0.0).unwrap_or(2.0);
    let x0 = &fold.point.x;
    let v = &fold.kernel_v;
    let mut samples = Vec::new();
    for &delta in offsets {
        let s = (2.0 * delta / curvature).sqrt();
        for &sg in sides {
            let t = fold.point.t + sg * delta;
            let a = crate::solve::newton_fixed_t(problem, t, &(x0 + v * s), newton);
            let b = crate::solve::newton_fixed_t(problem, t, &(x0 - v * s), newton);
            if let (Ok(a), Ok(b)) = (a, b) {
                let near = |x: &Vector| (x - x0).norm() <= 10.0 * s + 1e-8;
                let d = (&a.x - &b.x).norm();
                if near(&a.x) && near(&b.x) && d > sep_tol(&a.x) {
                    samples.push((delta, d));
                    break;
                }
            }
        }
    }
    if samples.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} of {} offsets resolved two distinct zeros",
            samples.len(),
            offsets.len()
        )));
    }
    let k = samples.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = samples.iter().map(|(d, s)| (d.ln(), s.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(SeparationFit { exponent: sxy / sxx, samples })
}

/// Result of tracing from a set of starts and refining every bracket.
#[derive(Debug, Clone, Default)]
pub struct FoldSearch {
    pub folds: Vec<FoldRecord>,
    pub curves: Vec<BranchCurve>,
    pub failures: Vec<String>,
}

fn same_fold(a: &Point, b: &Point) -> bool {
    let za = a.stacked();
    (za - b.stacked()).norm() <= 1e-6 * (1.0 + a.x.norm())
}

/// Traces both directions from every start, refines all brackets and
/// deduplicates the folds. Results are ordered by `(t, x)`.
pub fn find_folds_from_starts(
    problem: &ProblemSpec,
    starts: &[Point],
    step: &StepConfig,
    newton: &NewtonConfig,
    tols: &Tolerances,
) -> FoldSearch {
    type PerStart = (Vec<BranchCurve>, Vec<Result<FoldRecord>>, Vec<String>);
    let per_start: Vec<PerStart> = starts
        .par_iter()
        .map(|s| {
            let mut curves = Vec::new();
            let mut folds = Vec::new();
            let mut failures = Vec::new();
            for dir in [1i8, -1] {
                match trace_branch(problem, s, dir, step) {
                    Ok(c) => {
                        for br in detect_folds(&c) {
                            folds.push(refine_fold(problem, &c, br, newton, tols));
                        }
                        curves.push(c);
                    }
                    Err(e) => failures.push(format!("trace from t={}: {e}", s.t)),
                }
            }
            (curves, folds, failures)
        })
        .collect();
    let mut out = FoldSearch::default();
    for (curves, folds, failures) in per_start {
        out.curves.extend(curves);
        out.failures.extend(failures);
        for f in folds {
            match f {
                Ok(f) => {
                    if !out.folds.iter().any(|g| same_fold(&g.point, &f.point)) {
                        out.folds.push(f);
                    }
                }
                Err(e) => out.failures.push(format!("fold refinement: {e}")),
            }
        }
    }
    out.folds.sort_by(|a, b| a.point.t.total_cmp(&b.point.t).then_with(|| lex_cmp(&a.point.x, &b.point.x)));
    out
}

/// Grid-based fold scan: sections at several `t`, then tracing from every zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub bounds: Vec<(f64, f64)>,
    pub t_window: (f64, f64),
    /// Parameter values at which sections are enumerated.
    pub t_values: Vec<f64>,
    pub grid_density: usize,
    pub step: StepConfig,
    pub newton: NewtonConfig,
    pub tols: Tolerances,
}

impl ScanConfig {
    /// Scan over `t_window` inside `bounds` with five section values.
    pub fn new(bounds: Vec<(f64, f64)>, t_window: (f64, f64)) -> Self {
        let (a, b) = t_window;
        let pad = 1e-3 * (b - a);
        let t_values = (0..5).map(|k| a + pad + (b - a - 2.0 * pad) * k as f64 / 4.0).collect();
        let x_bound = bounds.iter().fold(0.0_f64, |m, (lo, hi)| m.max(lo.abs()).max(hi.abs())) * 2.0;
        Self {
            bounds,
            t_window,
            t_values,
            grid_density: 21,
            step: StepConfig { t_bounds: Some(t_window), x_bound: Some(x_bound), ..StepConfig::default() },
            newton: NewtonConfig::default(),
            tols: Tolerances::default(),
        }
    }

    /// Scan box from the problem's catalog entry (or `[-3, 3]^n`).
    pub fn for_problem(problem: &ProblemSpec, t_window: (f64, f64)) -> Self {
        let bounds = problem.scan_box().map(|b| b.to_vec()).unwrap_or_else(|| vec![(-3.0, 3.0); problem.dim()]);
        let mut cfg = Self::new(bounds, t_window);
        if problem.dim() > 2 {
            cfg.grid_density = 5;
        }
        cfg
    }
}

pub fn scan_folds(problem: &ProblemSpec, scan: &ScanConfig) -> Result<FoldSearch> {
    let mut starts: Vec<Point> = Vec::new();
    for &t in &scan.t_values {
        let sec = enumerate_section(problem, t, &scan.bounds, scan.grid_density, &scan.newton)?;
        starts.extend(sec.zeros.into_iter().map(|x| Point::new(x, t)));
    }
    Ok(find_folds_from_starts(problem, &starts, &scan.step, &scan.newton, &scan.tols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem_model::lookup;
    use crate::transversality::Classification;

    fn v1(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    fn fold_curve() -> (ProblemSpec, BranchCurve) {
        let p = lookup("fold1d").unwrap();
        let cfg = StepConfig { t_bounds: Some((-2.0, 1.5)), ..StepConfig::default() };
        let c = trace_branch(&p, &Point::from_slice(&[1.0], 1.0), -1, &cfg).unwrap();
        (p, c)
    }

    #[test]
    fn fold_branch_follows_parabola() {
        let (p, c) = fold_curve();
        let tols = Tolerances::default();
        assert!(c.nodes.iter().any(|n| n.x[0] < -1.0), "did not pass the fold");
        for (node, tau) in c.nodes.iter().zip(&c.tangents) {
            assert!((node.x[0] * node.x[0] - node.t).abs() < 1e-8);
            let df = p.total_differential(node).unwrap();
            assert!((&df * tau).norm() < 1e-8);
            assert!(p.eval(node).unwrap().norm() <= tols.zero_tolerance(&node.x));
        }
        for w in c.tangents.windows(2) {
            assert!(w[0].dot(&w[1]) > 0.0);
        }
        assert_eq!(c.termination, Termination::DomainBoundary);
    }

    #[test]
    fn linear_branch_is_straight() {
        let p = lookup("linear1d").unwrap();
        let cfg = StepConfig { t_bounds: Some((-1.0, 1.0)), ..StepConfig::default() };
        let c = trace_branch(&p, &Point::from_slice(&[0.0], 0.0), 1, &cfg).unwrap();
        let s = 0.5f64.sqrt();
        for tau in &c.tangents {
            assert!((tau[0] - s).abs() < 1e-12 && (tau[1] - s).abs() < 1e-12);
        }
        assert!(detect_folds(&c).is_empty());
    }

    #[test]
    fn start_checks() {
        let p = lookup("fold1d").unwrap();
        let cfg = StepConfig::default();
        assert!(matches!(
            trace_branch(&p, &Point::from_slice(&[1.0], 0.5), 1, &cfg),
            Err(Error::StartNotOnCurve { .. })
        ));
        let pf = lookup("pitchfork1d").unwrap();
        assert!(matches!(
            trace_branch(&pf, &Point::from_slice(&[0.0], 0.0), 1, &cfg),
            Err(Error::RankDeficientStart { .. })
        ));
    }

    #[test]
    fn fold_detection_and_refinement() {
        let (p, c) = fold_curve();
        let br = detect_folds(&c);
        assert_eq!(br.len(), 1);
        let f = refine_fold(&p, &c, br[0], &NewtonConfig::default(), &Tolerances::default()).unwrap();
        assert!(f.point.x[0].abs() < 1e-10 && f.point.t.abs() < 1e-10);
        assert_eq!(f.method, RefinementMethod::AugmentedNewton);
        assert_eq!(f.certificate.classification, Classification::TransversalSingular);
        assert!(f.tdot < 1e-10);
        // t = x^2 near the vertex, and arclength agrees with x to second order.
        assert!((f.tddot_estimate.unwrap() - 2.0).abs() < 1e-4, "{:?}", f.tddot_estimate);
        assert_eq!(f.side, FoldSide::Above);
    }

    #[test]
    fn cubic_load_has_two_folds() {
        let p = lookup("cubicload").unwrap();
        let scan = ScanConfig::for_problem(&p, (-1.0, 1.0));
        let found = scan_folds(&p, &scan).unwrap();
        assert_eq!(found.folds.len(), 2, "{:?}", found.failures);
        let tf = 2.0 / (3.0 * 3f64.sqrt());
        let xf = 1.0 / 3f64.sqrt();
        let (a, b) = (&found.folds[0], &found.folds[1]);
        assert!((a.point.t + tf).abs() < 1e-10 && (a.point.x[0] - xf).abs() < 1e-10);
        assert!((b.point.t - tf).abs() < 1e-10 && (b.point.x[0] + xf).abs() < 1e-10);
        for f in &found.folds {
            assert_eq!(f.certificate.classification, Classification::TransversalSingular);
        }
    }

    #[test]
    fn pitchfork_fold_is_non_transversal() {
        let p = lookup("pitchfork1d").unwrap();
        let cfg = StepConfig { t_bounds: Some((-1.0, 1.0)), ..StepConfig::default() };
        let c = trace_branch(&p, &Point::from_slice(&[1.0], 1.0), -1, &cfg).unwrap();
        let br = detect_folds(&c);
        assert_eq!(br.len(), 1);
        let f = refine_fold(&p, &c, br[0], &NewtonConfig::default(), &Tolerances::default()).unwrap();
        assert_eq!(f.certificate.classification, Classification::NonTransversal, "{f:?}");
        assert!(f.certificate.failures.contains(&crate::transversality::Condition::T2));
        assert!(f.tddot_estimate.is_none());
        assert!(f.point.x[0].abs() < 1e-6);
    }

    #[test]
    fn separation_exponent_at_fold() {
        let (p, c) = fold_curve();
        let f = refine_fold(&p, &c, detect_folds(&c)[0], &NewtonConfig::default(), &Tolerances::default()).unwrap();
        let fit = quadratic_separation_check(&p, &f, &[1e-2, 1e-3, 1e-4], &NewtonConfig::default()).unwrap();
        assert!((fit.exponent - 0.5).abs() < 0.02, "{fit:?}");
        for (d, s) in &fit.samples {
            assert!((s - 2.0 * d.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn separation_needs_a_fold() {
        let p = lookup("linear1d").unwrap();
        let pt = Point::from_slice(&[0.0], 0.0);
        let cert = certify(&p, &pt, &Tolerances::default()).unwrap();
        let record = FoldRecord {
            point: pt,
            certificate: cert,
            kernel_v: v1(1.0),
            tdot: 0.7,
            tddot_estimate: None,
            side: FoldSide::Undetermined,
            method: RefinementMethod::AugmentedNewton,
        };
        let e = quadratic_separation_check(&p, &record, &[1e-2, 1e-3, 1e-4], &NewtonConfig::default()).unwrap_err();
        assert!(matches!(e, Error::InsufficientData(_)));
    }

    #[test]
    fn fold_count_is_stable_under_step_halving() {
        for name in ["fold1d", "cubicload", "foldprod2d"] {
            let p = lookup(name).unwrap();
            let mut scan = ScanConfig::for_problem(&p, (-1.0, 1.0));
            let a = scan_folds(&p, &scan).unwrap().folds.len();
            scan.step.initial_step *= 0.5;
            scan.step.max_step *= 0.5;
            let b = scan_folds(&p, &scan).unwrap().folds.len();
            assert_eq!(a, b, "{name}");
        }
    }

    #[test]
    fn traced_zeros_agree_with_section() {
        let p = lookup("cubicload").unwrap();
        let cfg = StepConfig { t_bounds: Some((-1.0, 1.0)), ..StepConfig::default() };
        let c = trace_branch(&p, &Point::from_slice(&[-1.2], -0.528), 1, &cfg).unwrap();
        let t = 0.1;
        let sec = crate::solve::enumerate_section(&p, t, &[(-2.0, 2.0)], 41, &NewtonConfig::default()).unwrap();
        // Every crossing of t = 0.1 by the curve, polished at fixed t, is a listed zero.
        let mut crossings = 0;
        for w in c.nodes.windows(2) {
            if (w[0].t - t) * (w[1].t - t) < 0.0 {
                let lam = (t - w[0].t) / (w[1].t - w[0].t);
                let guess = &w[0].x + (&w[1].x - &w[0].x) * lam;
                let root = crate::solve::newton_fixed_t(&p, t, &guess, &NewtonConfig::default()).unwrap();
                assert!(sec.zeros.iter().any(|z| (z - &root.x).norm() <= sep_tol(z)));
                crossings += 1;
            }
        }
        assert_eq!(crossings, 3);
    }
}
