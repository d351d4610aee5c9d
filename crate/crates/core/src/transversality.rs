//! Transversality certificates at singular zeros and the two structural
//! checks: surjectivity of `dF` and regularity of the augmented map
//! `G(x, t, v) = (F(x, t), D_x F(x, t) v)`.

use serde::{Deserialize, Serialize};

use crate::energy_pde::EnergyProblem;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Vector};
use crate::problem_model::{Point, ProblemSpec};
use crate::spectral::{kernel_pair, rank_report, KernelPair, RankReport, TolPolicy};

/// Tolerances recorded in every certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Points with `|F| > zero_tol (1 + |x|)` are refused.
    pub zero_tol: f64,
    /// Margins at or below this value count as vanishing (after `|v| = |w*| = 1`).
    pub margin_tol: f64,
    pub rank: TolPolicy,
    /// Relative bound on `|H - H^T|` for energy problems.
    pub symmetry_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            zero_tol: 1e-9,
            margin_tol: 1e-6,
            rank: TolPolicy { scale_floor: 1.0, ..TolPolicy::default() },
            symmetry_tol: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn zero_tolerance(&self, x: &Vector) -> f64 {
        self.zero_tol * (1.0 + x.norm())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Regular,
    TransversalSingular,
    NonTransversal,
}

/// Conditions that can fail: the general form `T1..T3` and the energy form `E1..E3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    T1,
    T2,
    T3,
    E1,
    E2,
    E3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalityCertificate {
    pub point: Point,
    pub classification: Classification,
    #[serde(flatten)]
    pub kernel: KernelPair,
    /// `|<d_t F, w*>|`; absent at regular points.
    pub t2_margin: Option<f64>,
    /// `|<D_x^2 F[v, v], w*>|`; absent at regular points.
    pub t3_margin: Option<f64>,
    pub failures: Vec<Condition>,
    /// Small singular value without the required spectral gap.
    pub ambiguous_kernel: bool,
    pub residual_norm: f64,
    pub tolerances: Tolerances,
}

impl TransversalityCertificate {
    /// Whether the first two conditions hold (vacuously at regular points).
    pub fn passes_t1_t2(&self) -> bool {
        match self.classification {
            Classification::Regular => true,
            _ => !self.failures.contains(&Condition::T1) && !self.failures.contains(&Condition::T2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCertificate {
    pub point: Point,
    pub classification: Classification,
    #[serde(flatten)]
    pub kernel: KernelPair,
    /// `|<d_t D_x E, v>|`.
    pub e2_margin: Option<f64>,
    /// `|D_x^3 E[v, v, v]|`.
    pub e3_margin: Option<f64>,
    pub failures: Vec<Condition>,
    pub ambiguous_kernel: bool,
    /// `min(|v - w*|, |v + w*|)`; zero up to rounding for a symmetric Hessian.
    pub self_duality_defect: f64,
    pub hessian_asymmetry: f64,
    pub residual_norm: f64,
    pub tolerances: Tolerances,
}

/// A point of `X x (t_lo, t_hi) x (R^n \ {0})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedPoint {
    #[serde(with = "crate::numeric::serde_vector")]
    pub x: Vector,
    pub t: f64,
    #[serde(with = "crate::numeric::serde_vector")]
    pub v: Vector,
}

impl AugmentedPoint {
    pub fn new(x: Vector, t: f64, v: Vector) -> Self {
        Self { x, t, v }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x.clone(), self.t)
    }
}

fn check_on_zero_set(problem: &ProblemSpec, p: &Point, tols: &Tolerances) -> Result<f64> {
    let residual = problem.eval(p)?.norm();
    let tol = tols.zero_tolerance(&p.x);
    if residual > tol {
        return Err(Error::NotOnZeroSet { residual, tol });
    }
    Ok(residual)
}

fn is_singular(kp: &KernelPair, tols: &Tolerances) -> bool {
    kp.sigma_min <= tols.rank.threshold(kp.sigma_max)
}

/// The kernel is not one-dimensional: a second singular value below the rank
/// threshold, or no clear gap above the smallest one. Returns `(fails, ambiguous)`.
fn kernel_dimension_fails(kp: &KernelPair, tols: &Tolerances) -> (bool, bool) {
    if kp.sigma_next <= tols.rank.threshold(kp.sigma_max) {
        return (true, false);
    }
    let ambiguous = kp.gap_ratio < tols.rank.gap_min;
    (ambiguous, ambiguous)
}

/// Certifies the transversality conditions at a zero of `F`.
pub fn certify(problem: &ProblemSpec, p: &Point, tols: &Tolerances) -> Result<TransversalityCertificate> {
    let residual_norm = check_on_zero_set(problem, p, tols)?;
    let j = problem.jacobian_x(p)?;
    let kernel = kernel_pair(&j)?;
    let mut cert = TransversalityCertificate {
        point: p.clone(),
        classification: Classification::Regular,
        kernel,
        t2_margin: None,
        t3_margin: None,
        failures: Vec::new(),
        ambiguous_kernel: false,
        residual_norm,
        tolerances: *tols,
    };
    if !is_singular(&cert.kernel, tols) {
        return Ok(cert);
    }
    let v = &cert.kernel.v;
    let w = &cert.kernel.w_star;
    let t2 = problem.dt_f(p)?.dot(w).abs();
    let t3 = problem.d2x_dir(p, v)?.dot(w).abs();
    let (t1_fails, ambiguous) = kernel_dimension_fails(&cert.kernel, tols);
    cert.ambiguous_kernel = ambiguous;
    if t1_fails {
        cert.failures.push(Condition::T1);
    }
    if t2 <= tols.margin_tol {
        cert.failures.push(Condition::T2);
    }
    if t3 <= tols.margin_tol {
        cert.failures.push(Condition::T3);
    }
    cert.t2_margin = Some(t2);
    cert.t3_margin = Some(t3);
    cert.classification = if cert.failures.is_empty() {
        Classification::TransversalSingular
    } else {
        Classification::NonTransversal
    };
    Ok(cert)
}

/// Certifies the energy form of the conditions for `F = D_x E`.
pub fn certify_energy(ep: &EnergyProblem, p: &Point, tols: &Tolerances) -> Result<EnergyCertificate> {
    let problem = ep.problem();
    let residual_norm = check_on_zero_set(problem, p, tols)?;
    let h = problem.jacobian_x(p)?;
    let norm = h.norm();
    let hessian_asymmetry = (&h - h.transpose()).norm();
    if hessian_asymmetry > tols.symmetry_tol * norm {
        return Err(Error::HessianAsymmetry { asymmetry: hessian_asymmetry, norm });
    }
    let kernel = kernel_pair(&h)?;
    let self_duality_defect = (&kernel.v - &kernel.w_star).norm().min((&kernel.v + &kernel.w_star).norm());
    let mut cert = EnergyCertificate {
        point: p.clone(),
        classification: Classification::Regular,
        kernel,
        e2_margin: None,
        e3_margin: None,
        failures: Vec::new(),
        ambiguous_kernel: false,
        self_duality_defect,
        hessian_asymmetry,
        residual_norm,
        tolerances: *tols,
    };
    if !is_singular(&cert.kernel, tols) {
        return Ok(cert);
    }
    let v = cert.kernel.v.clone();
    let e2 = ep.weight() * problem.dt_f(p)?.dot(&v).abs();
    let e3 = ep.d3_dir(&p.x, p.t, &v)?.abs();
    let (t1_fails, ambiguous) = kernel_dimension_fails(&cert.kernel, tols);
    cert.ambiguous_kernel = ambiguous;
    if t1_fails {
        cert.failures.push(Condition::E1);
    }
    if e2 <= tols.margin_tol {
        cert.failures.push(Condition::E2);
    }
    if e3 <= tols.margin_tol {
        cert.failures.push(Condition::E3);
    }
    cert.e2_margin = Some(e2);
    cert.e3_margin = Some(e3);
    cert.classification = if cert.failures.is_empty() {
        Classification::TransversalSingular
    } else {
        Classification::NonTransversal
    };
    Ok(cert)
}

/// `G(x, t, v) = (F(x, t), D_x F(x, t) v)`.
pub fn augmented_g(problem: &ProblemSpec, q: &AugmentedPoint) -> Result<Vector> {
    let p = q.point();
    let f = problem.eval(&p)?;
    let jv = problem.jacobian_x(&p)? * &q.v;
    let n = problem.dim();
    Ok(Vector::from_fn(2 * n, |i, _| if i < n { f[i] } else { jv[i - n] }))
}

/// `D_x^2 F[a, b]` by polarization of the directional second derivative.
pub fn bilinear(problem: &ProblemSpec, p: &Point, a: &Vector, b: &Vector) -> Result<Vector> {
    let plus = problem.d2x_dir(p, &(a + b))?;
    let minus = problem.d2x_dir(p, &(a - b))?;
    Ok((plus - minus) * 0.25)
}

/// The `2n x (2n+1)` differential of `G`, columns ordered `(x~, t~, v~)`.
pub fn dg_total(problem: &ProblemSpec, q: &AugmentedPoint) -> Result<Matrix> {
    let n = problem.dim();
    let p = q.point();
    let j = problem.jacobian_x(&p)?;
    let dt = problem.dt_f(&p)?;
    let dtdx_v = problem.dt_dx_dir(&p, &q.v)?;
    let mut m = Matrix::zeros(2 * n, 2 * n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&j);
    m.view_mut((0, n), (n, 1)).copy_from(&dt);
    let mut e = Vector::zeros(n);
    for k in 0..n {
        e[k] = 1.0;
        let col = bilinear(problem, &p, &q.v, &e)?;
        m.view_mut((n, k), (n, 1)).copy_from(&col);
        e[k] = 0.0;
    }
    m.view_mut((n, n), (n, 1)).copy_from(&dtdx_v);
    m.view_mut((n, n + 1), (n, n)).copy_from(&j);
    Ok(m)
}

/// Residual tolerance for zeros of `G`; differenced Jacobians cannot resolve
/// `D_x F v` below roughly the square root of machine precision.
pub fn g_tolerance(problem: &ProblemSpec, q: &AugmentedPoint, tols: &Tolerances) -> f64 {
    let base = tols.zero_tolerance(&q.x);
    if problem.has_analytic_jacobian() {
        base
    } else {
        base * 100.0
    }
}

pub(crate) fn check_zero_of_g(problem: &ProblemSpec, q: &AugmentedPoint, tols: &Tolerances) -> Result<()> {
    let residual = augmented_g(problem, q)?.norm();
    let tol = g_tolerance(problem, q, tols);
    if residual > tol {
        return Err(Error::NotOnZeroSetOfG { residual, tol });
    }
    Ok(())
}

/// Whether `dG` is onto at a zero of `G`; the report's `surjective` flag is the answer.
pub fn check_regular_value_g(problem: &ProblemSpec, q: &AugmentedPoint, tols: &Tolerances) -> Result<RankReport> {
    check_zero_of_g(problem, q, tols)?;
    rank_report(&dg_total(problem, q)?, &tols.rank)
}

/// Whether `dF = [D_x F | d_t F]` is onto at a zero of `F`.
pub fn check_df_onto(problem: &ProblemSpec, p: &Point, tols: &Tolerances) -> Result<RankReport> {
    check_on_zero_set(problem, p, tols)?;
    rank_report(&problem.total_differential(p)?, &tols.rank)
}
