//! Newton solvers: fixed-`t` Newton, multistart section enumeration, and
//! bordered Newton for singular points with their kernel direction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{lex_cmp, lu_solve, max_abs, Matrix, Vector};
use crate::problem_model::ProblemSpec;
use crate::spectral::svd;
use crate::transversality::{dg_total, AugmentedPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regularization {
    Off,
    Tikhonov(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub max_iter: usize,
    /// Residual target, scaled by `(1 + |x|) * max(1, max|J|)`.
    pub abs_tol: f64,
    /// Backtracking factor on the `|F|^2` merit function.
    pub damping: f64,
    pub min_step: f64,
    pub regularization: Regularization,
    /// Iterates farther than this from the start count as divergence.
    pub trust_radius: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            abs_tol: 1e-12,
            damping: 0.5,
            min_step: 2f64.powi(-20),
            regularization: Regularization::Off,
            trust_radius: 1e6,
        }
    }
}

impl NewtonConfig {
    fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("Newton needs abs_tol > 0 and max_iter >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub x: Vector,
    pub iterations: usize,
    pub residual: f64,
    /// Residual norm at each iterate, starting with the initial guess.
    pub history: Vec<f64>,
}

fn tolerance(cfg: &NewtonConfig, x: &Vector, jac: &Matrix) -> f64 {
    cfg.abs_tol * (1.0 + x.norm()) * max_abs(jac).max(1.0)
}

/// Solves `F(x, t) = 0` for `x` at fixed `t` by damped Newton.
pub fn newton_fixed_t(problem: &ProblemSpec, t: f64, x_init: &Vector, cfg: &NewtonConfig) -> Result<NewtonOutcome> {
    cfg.validate()?;
    let mut x = x_init.clone();
    let mut f = problem.eval_xt(&x, t)?;
    let mut history = vec![f.norm()];
    for iter in 0..cfg.max_iter {
        let jac = problem.jacobian_xt(&x, t)?;
        if f.norm() <= tolerance(cfg, &x, &jac) {
            return finish(problem, t, x, iter, history, cfg);
        }
        let step = match lu_solve(&jac, &(-&f)) {
            Some(s) => s,
            None => match cfg.regularization {
                Regularization::Tikhonov(lambda) => {
                    let jt = jac.transpose();
                    let n = x.len();
                    let lhs = &jt * &jac + Matrix::identity(n, n) * lambda;
                    lu_solve(&lhs, &(-(&jt * &f))).ok_or(Error::SingularJacobian { iteration: iter })?
                }
                Regularization::Off => return Err(Error::SingularJacobian { iteration: iter }),
            },
        };
        let merit = f.norm_squared();
        let mut alpha = 1.0;
        let (x_new, f_new) = loop {
            let cand = &x + &step * alpha;
            match problem.eval_xt(&cand, t) {
                Ok(fc) if fc.norm_squared() <= (1.0 - 1e-4 * alpha) * merit || alpha <= cfg.min_step => {
                    break (cand, fc)
                }
                Err(e) if alpha <= cfg.min_step => return Err(e),
                _ => alpha *= cfg.damping,
            }
        };
        x = x_new;
        f = f_new;
        history.push(f.norm());
        if (&x - x_init).norm() > cfg.trust_radius {
            return Err(Error::Diverged { radius: cfg.trust_radius });
        }
    }
    let jac = problem.jacobian_xt(&x, t)?;
    if f.norm() <= tolerance(cfg, &x, &jac) {
        return finish(problem, t, x, cfg.max_iter, history, cfg);
    }
    Err(Error::MaxIterExceeded { iterations: cfg.max_iter, residual: f.norm() })
}

// Independent final evaluation of the residual contract.
fn finish(
    problem: &ProblemSpec,
    t: f64,
    x: Vector,
    iterations: usize,
    history: Vec<f64>,
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome> {
    let residual = problem.eval_xt(&x, t)?.norm();
    let jac = problem.jacobian_xt(&x, t)?;
    if residual > tolerance(cfg, &x, &jac) {
        return Err(Error::MaxIterExceeded { iterations, residual });
    }
    Ok(NewtonOutcome { x, iterations, residual, history })
}

/// Zeros found at one parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSetSection {
    pub t: f64,
    #[serde(with = "crate::numeric::serde_vectors")]
    pub zeros: Vec<Vector>,
    pub residuals: Vec<f64>,
    /// `None` when fewer than two zeros were found.
    pub min_pairwise_separation: Option<f64>,
    pub multistart_count: usize,
    pub failed_starts: usize,
}

/// Deduplication radius `1e-6 (1 + |x|)`.
pub fn sep_tol(x: &Vector) -> f64 {
    1e-6 * (1.0 + x.norm())
}

/// Runs Newton from each start (in parallel) and merges the distinct roots.
pub fn enumerate_from_starts(problem: &ProblemSpec, t: f64, starts: &[Vector], cfg: &NewtonConfig) -> ZeroSetSection {
    let results: Vec<Option<NewtonOutcome>> =
        starts.par_iter().map(|s| newton_fixed_t(problem, t, s, cfg).ok()).collect();
    let failed_starts = results.iter().filter(|r| r.is_none()).count();
    let mut found: Vec<NewtonOutcome> = results.into_iter().flatten().collect();
    found.sort_by(|a, b| lex_cmp(&a.x, &b.x));
    let mut zeros: Vec<Vector> = Vec::new();
    let mut residuals = Vec::new();
    for r in found {
        if zeros.iter().all(|z| (z - &r.x).norm() > sep_tol(z)) {
            zeros.push(r.x);
            residuals.push(r.residual);
        }
    }
    let mut min_sep: Option<f64> = None;
    for i in 0..zeros.len() {
        for j in (i + 1)..zeros.len() {
            let d = (&zeros[i] - &zeros[j]).norm();
            min_sep = Some(min_sep.map_or(d, |m| m.min(d)));
        }
    }
    ZeroSetSection {
        t,
        zeros,
        residuals,
        min_pairwise_separation: min_sep,
        multistart_count: starts.len(),
        failed_starts,
    }
}

/// Tensor grid of `density` nodes per axis over `bounds`.
pub fn grid_points(bounds: &[(f64, f64)], density: usize) -> Vec<Vector> {
    let n = bounds.len();
    let density = density.max(2);
    let total = density.pow(n as u32);
    (0..total)
        .map(|mut k| {
            Vector::from_fn(n, |i, _| {
                let idx = k % density;
                k /= density;
                let (lo, hi) = bounds[i];
                lo + (hi - lo) * idx as f64 / (density - 1) as f64
            })
        })
        .collect()
}

/// Multistart enumeration of the section `C(t)` from a tensor grid.
pub fn enumerate_section(
    problem: &ProblemSpec,
    t: f64,
    bounds: &[(f64, f64)],
    grid_density: usize,
    cfg: &NewtonConfig,
) -> Result<ZeroSetSection> {
    if bounds.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: bounds.len() });
    }
    if grid_density < 2 {
        return Err(Error::Config("grid density must be at least 2".into()));
    }
    Ok(enumerate_from_starts(problem, t, &grid_points(bounds, grid_density), cfg))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedOutcome {
    pub point: AugmentedPoint,
    pub iterations: usize,
    pub residual: f64,
    /// Reciprocal condition number of the bordered Jacobian at each iterate.
    pub rcond_history: Vec<f64>,
}

/// Below this reciprocal condition number the bordered system counts as singular.
pub const BORDERED_RCOND_MIN: f64 = 1e-12;

fn bordered_residual(problem: &ProblemSpec, z: &Vector, n: usize) -> Result<Vector> {
    let q = unpack(z, n);
    let g = crate::transversality::augmented_g(problem, &q)?;
    Ok(Vector::from_fn(2 * n + 1, |i, _| if i < 2 * n { g[i] } else { q.v.norm_squared() - 1.0 }))
}

fn unpack(z: &Vector, n: usize) -> AugmentedPoint {
    AugmentedPoint::new(z.rows(0, n).into_owned(), z[n], z.rows(n + 1, n).into_owned())
}

fn pack(q: &AugmentedPoint) -> Vector {
    let n = q.x.len();
    Vector::from_fn(2 * n + 1, |i, _| {
        if i < n {
            q.x[i]
        } else if i == n {
            q.t
        } else {
            q.v[i - n - 1]
        }
    })
}

/// Bordered Newton on `(F(x,t), D_x F(x,t) v, |v|^2 - 1) = 0` in `(x, t, v)`.
pub fn newton_augmented(problem: &ProblemSpec, q_init: &AugmentedPoint, cfg: &NewtonConfig) -> Result<AugmentedOutcome> {
    cfg.validate()?;
    let n = problem.dim();
    let vn = q_init.v.norm();
    if !(0.5..=2.0).contains(&vn) {
        return Err(Error::Config(format!("initial |v| = {vn} outside [0.5, 2]")));
    }
    // Differenced Jacobians limit how well D_x F v can be resolved.
    let tol_factor = if problem.has_analytic_jacobian() { 1.0 } else { 1e4 };
    let mut z = pack(q_init);
    let mut rcond_history = Vec::new();
    let mut r = bordered_residual(problem, &z, n)?;
    for iter in 0..cfg.max_iter {
        let q = unpack(&z, n);
        let dg = dg_total(problem, &q)?;
        let mut jac = Matrix::zeros(2 * n + 1, 2 * n + 1);
        jac.view_mut((0, 0), (2 * n, 2 * n + 1)).copy_from(&dg);
        for k in 0..n {
            jac[(2 * n, n + 1 + k)] = 2.0 * q.v[k];
        }
        let sigma = svd(&jac)?.sigma;
        let rcond = sigma.last().copied().unwrap_or(0.0) / sigma[0].max(f64::MIN_POSITIVE);
        rcond_history.push(rcond);
        if rcond < BORDERED_RCOND_MIN {
            return Err(Error::SingularBorderedSystem { rcond });
        }
        let tol = tol_factor * tolerance(cfg, &q.x, &jac);
        if r.norm() <= tol {
            return finish_augmented(problem, z, n, iter, rcond_history, tol);
        }
        let step = lu_solve(&jac, &(-&r)).ok_or(Error::SingularBorderedSystem { rcond })?;
        let merit = r.norm_squared();
        let mut alpha = 1.0;
        loop {
            let cand = &z + &step * alpha;
            match bordered_residual(problem, &cand, n) {
                Ok(rc) if rc.norm_squared() <= (1.0 - 1e-4 * alpha) * merit || alpha <= cfg.min_step => {
                    z = cand;
                    r = rc;
                    break;
                }
                Err(e) if alpha <= cfg.min_step => return Err(e),
                _ => alpha *= cfg.damping,
            }
        }
        if (&z - pack(q_init)).norm() > cfg.trust_radius {
            return Err(Error::Diverged { radius: cfg.trust_radius });
        }
    }
    Err(Error::MaxIterExceeded { iterations: cfg.max_iter, residual: r.norm() })
}

fn finish_augmented(
    problem: &ProblemSpec,
    z: Vector,
    n: usize,
    iterations: usize,
    rcond_history: Vec<f64>,
    tol: f64,
) -> Result<AugmentedOutcome> {
    let residual = bordered_residual(problem, &z, n)?.norm();
    if residual > tol {
        return Err(Error::MaxIterExceeded { iterations, residual });
    }
    let mut point = unpack(&z, n);
    point.v /= point.v.norm();
    Ok(AugmentedOutcome { point, iterations, residual, rcond_history })
}
