//! Parameterized square systems `F(x, t) = 0` with uniform derivative access.
//!
//! A [`ProblemSpec`] carries the map itself plus optional analytic
//! derivatives. Every derivative accessor falls back to a central finite
//! difference of `F` when no analytic callback was supplied.

mod catalog;
pub mod expr;
mod polynomial;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numeric::{all_finite, Matrix, Vector};

pub use catalog::{builtin_catalog, cubic_real_roots, fold_product, lookup};
pub use expr::Expr;
pub use polynomial::{QuadraticSystem, SingularKind};

pub type VecFn = Arc<dyn Fn(&Vector, f64) -> Vector + Send + Sync>;
pub type MatFn = Arc<dyn Fn(&Vector, f64) -> Matrix + Send + Sync>;
pub type DirFn = Arc<dyn Fn(&Vector, f64, &Vector) -> Vector + Send + Sync>;
pub type SectionFn = Arc<dyn Fn(f64) -> Vec<Vector> + Send + Sync>;

/// Relative step for first-order central differences.
pub const H_FIRST: f64 = 1e-6;
/// Relative step for second-order directional differences.
pub const H_SECOND: f64 = 1e-4;

/// A point `(x, t)` of the product space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    #[serde(with = "crate::numeric::serde_vector")]
    pub x: Vector,
    pub t: f64,
}

impl Point {
    pub fn new(x: Vector, t: f64) -> Self {
        Self { x, t }
    }

    pub fn from_slice(x: &[f64], t: f64) -> Self {
        Self { x: Vector::from_column_slice(x), t }
    }

    /// The point as one vector `(x_1, ..., x_n, t)`.
    pub fn stacked(&self) -> Vector {
        crate::numeric::join(&self.x, self.t)
    }

    pub fn from_stacked(z: &Vector) -> Self {
        let n = z.len() - 1;
        Self { x: z.rows(0, n).into_owned(), t: z[n] }
    }
}

/// A parameterized map `F: R^n x (t_lo, t_hi) -> R^n`.
///
/// Immutable after construction; evaluation is reentrant.
#[derive(Clone)]
pub struct ProblemSpec {
    name: String,
    descriptor: String,
    dim: usize,
    t_range: (f64, f64),
    smoothness_order: u32,
    f: VecFn,
    dx: Option<MatFn>,
    dt: Option<VecFn>,
    d2x_dir: Option<DirFn>,
    dt_dx_dir: Option<DirFn>,
    scan_box: Option<Vec<(f64, f64)>>,
    exact_section: Option<SectionFn>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("t_range", &self.t_range)
            .field("smoothness_order", &self.smoothness_order)
            .field("analytic_jacobian", &self.dx.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn new<F>(name: impl Into<String>, dim: usize, t_range: (f64, f64), f: F) -> Result<Self>
    where
        F: Fn(&Vector, f64) -> Vector + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::InvalidProblem("dimension must be positive".into()));
        }
        let (lo, hi) = t_range;
        if !(lo < hi) || lo.is_nan() || hi.is_nan() {
            return Err(Error::InvalidProblem(format!("empty parameter interval ({lo}, {hi})")));
        }
        let name = name.into();
        Ok(Self {
            descriptor: name.clone(),
            name,
            dim,
            t_range,
            smoothness_order: 2,
            f: Arc::new(f),
            dx: None,
            dt: None,
            d2x_dir: None,
            dt_dx_dir: None,
            scan_box: None,
            exact_section: None,
        })
    }

    pub fn with_jacobian<G>(mut self, g: G) -> Self
    where
        G: Fn(&Vector, f64) -> Matrix + Send + Sync + 'static,
    {
        self.dx = Some(Arc::new(g));
        self
    }

    pub fn with_dt<G>(mut self, g: G) -> Self
    where
        G: Fn(&Vector, f64) -> Vector + Send + Sync + 'static,
    {
        self.dt = Some(Arc::new(g));
        self
    }

    /// `D_x^2 F(x,t)[v,v]`.
    pub fn with_d2x_dir<G>(mut self, g: G) -> Self
    where
        G: Fn(&Vector, f64, &Vector) -> Vector + Send + Sync + 'static,
    {
        self.d2x_dir = Some(Arc::new(g));
        self
    }

    /// `d_t D_x F(x,t)[v]`.
    pub fn with_dt_dx_dir<G>(mut self, g: G) -> Self
    where
        G: Fn(&Vector, f64, &Vector) -> Vector + Send + Sync + 'static,
    {
        self.dt_dx_dir = Some(Arc::new(g));
        self
    }

    pub fn with_smoothness_order(mut self, k: u32) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidProblem(format!("smoothness order {k} < 2")));
        }
        self.smoothness_order = k;
        Ok(self)
    }

    pub fn with_scan_box(mut self, b: Vec<(f64, f64)>) -> Self {
        self.scan_box = Some(b);
        self
    }

    /// Closed-form section `C(t)`; only consulted by tests and reports.
    pub fn with_exact_section<G>(mut self, g: G) -> Self
    where
        G: Fn(f64) -> Vec<Vector> + Send + Sync + 'static,
    {
        self.exact_section = Some(Arc::new(g));
        self
    }

    pub fn with_descriptor(mut self, d: impl Into<String>) -> Self {
        self.descriptor = d.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_range(&self) -> (f64, f64) {
        self.t_range
    }

    pub fn smoothness_order(&self) -> u32 {
        self.smoothness_order
    }

    pub fn scan_box(&self) -> Option<&[(f64, f64)]> {
        self.scan_box.as_deref()
    }

    pub fn exact_section(&self, t: f64) -> Option<Vec<Vector>> {
        self.exact_section.as_ref().map(|g| g(t))
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.dx.is_some()
    }

    /// True when every derivative used by the certificates is analytic.
    pub fn has_analytic_derivatives(&self) -> bool {
        self.dx.is_some() && self.dt.is_some() && self.d2x_dir.is_some() && self.dt_dx_dir.is_some()
    }

    /// Short content hash of the problem descriptor, recorded in output metadata.
    pub fn problem_hash(&self) -> String {
        let digest = Sha256::digest(self.descriptor.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// `F(x, t) + y + K x`, with every analytic derivative carried over
    /// (the Jacobian shifted by `K`).
    pub fn with_affine_shift(&self, y: &Vector, k: &Matrix) -> Result<Self> {
        let n = self.dim;
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.len() });
        }
        if k.shape() != (n, n) {
            return Err(Error::DimensionMismatch { expected: n, got: if k.nrows() != n { k.nrows() } else { k.ncols() } });
        }
        let mut out = self.clone();
        let (y, k) = (Arc::new(y.clone()), Arc::new(k.clone()));
        let f = self.f.clone();
        let (y1, k1) = (y.clone(), k.clone());
        out.f = Arc::new(move |x, t| f(x, t) + &*y1 + &*k1 * x);
        if let Some(dx) = self.dx.clone() {
            let k2 = k.clone();
            out.dx = Some(Arc::new(move |x, t| dx(x, t) + &*k2));
        }
        out.exact_section = None;
        out.descriptor = format!("{} + y + K x", self.descriptor);
        Ok(out)
    }

    pub fn contains_t(&self, t: f64) -> bool {
        t > self.t_range.0 && t < self.t_range.1
    }

    fn check_domain(&self, x: &Vector, t: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if !self.contains_t(t) {
            return Err(Error::DomainViolation { t, lo: self.t_range.0, hi: self.t_range.1 });
        }
        if !all_finite(x) {
            return Err(eval_error(x, t, "non-finite input"));
        }
        Ok(())
    }

    fn raw(&self, x: &Vector, t: f64) -> Result<Vector> {
        let y = (self.f)(x, t);
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: y.len() });
        }
        if !all_finite(&y) {
            return Err(eval_error(x, t, "F"));
        }
        Ok(y)
    }

    /// `F(x, t)`.
    pub fn eval(&self, p: &Point) -> Result<Vector> {
        self.eval_xt(&p.x, p.t)
    }

    pub fn eval_xt(&self, x: &Vector, t: f64) -> Result<Vector> {
        self.check_domain(x, t)?;
        self.raw(x, t)
    }

    /// `D_x F(x, t)`, columns indexed by the perturbed coordinate.
    pub fn jacobian_x(&self, p: &Point) -> Result<Matrix> {
        self.jacobian_xt(&p.x, p.t)
    }

    pub fn jacobian_xt(&self, x: &Vector, t: f64) -> Result<Matrix> {
        self.check_domain(x, t)?;
        match &self.dx {
            Some(g) => finite_matrix(g(x, t), x, t, "D_x F"),
            None => self.fd_jacobian(x, t),
        }
    }

    /// `d_t F(x, t)`.
    pub fn dt_f(&self, p: &Point) -> Result<Vector> {
        self.dt_xt(&p.x, p.t)
    }

    pub fn dt_xt(&self, x: &Vector, t: f64) -> Result<Vector> {
        self.check_domain(x, t)?;
        match &self.dt {
            Some(g) => finite_vector(g(x, t), x, t, "d_t F"),
            None => self.fd_dt(x, t),
        }
    }

    /// `D_x^2 F(x, t)[v, v]`.
    pub fn d2x_dir(&self, p: &Point, v: &Vector) -> Result<Vector> {
        self.d2x_dir_xt(&p.x, p.t, v)
    }

    pub fn d2x_dir_xt(&self, x: &Vector, t: f64, v: &Vector) -> Result<Vector> {
        self.check_domain(x, t)?;
        self.check_direction(v)?;
        match &self.d2x_dir {
            Some(g) => finite_vector(g(x, t, v), x, t, "D_x^2 F"),
            None => self.fd_d2x_dir(x, t, v),
        }
    }

    /// `d_t D_x F(x, t)[v]`.
    pub fn dt_dx_dir(&self, p: &Point, v: &Vector) -> Result<Vector> {
        self.dt_dx_dir_xt(&p.x, p.t, v)
    }

    pub fn dt_dx_dir_xt(&self, x: &Vector, t: f64, v: &Vector) -> Result<Vector> {
        self.check_domain(x, t)?;
        self.check_direction(v)?;
        match &self.dt_dx_dir {
            Some(g) => finite_vector(g(x, t, v), x, t, "d_t D_x F"),
            None => self.fd_dt_dx_dir(x, t, v),
        }
    }

    /// The `n x (n+1)` block matrix `[D_x F | d_t F]`.
    pub fn total_differential(&self, p: &Point) -> Result<Matrix> {
        let j = self.jacobian_x(p)?;
        let dt = self.dt_f(p)?;
        let n = self.dim;
        let mut m = Matrix::zeros(n, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&j);
        m.set_column(n, &dt);
        Ok(m)
    }

    fn check_direction(&self, v: &Vector) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        if !all_finite(v) {
            return Err(Error::InvalidProblem("non-finite direction".into()));
        }
        Ok(())
    }

    /// Central-difference Jacobian with step `1e-6 * max(1, |x|)`.
    pub fn fd_jacobian(&self, x: &Vector, t: f64) -> Result<Matrix> {
        let n = self.dim;
        let h = H_FIRST * x.norm().max(1.0);
        let mut jac = Matrix::zeros(n, n);
        let mut xp = x.clone();
        for j in 0..n {
            let orig = xp[j];
            xp[j] = orig + h;
            let fp = self.raw(&xp, t)?;
            xp[j] = orig - h;
            let fm = self.raw(&xp, t)?;
            xp[j] = orig;
            jac.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        Ok(jac)
    }

    pub fn fd_dt(&self, x: &Vector, t: f64) -> Result<Vector> {
        let h = H_FIRST * x.norm().max(1.0);
        let fp = self.raw(x, t + h)?;
        let fm = self.raw(x, t - h)?;
        Ok((fp - fm) / (2.0 * h))
    }

    /// Second directional difference along `v/|v|`, rescaled by `|v|^2`.
    pub fn fd_d2x_dir(&self, x: &Vector, t: f64, v: &Vector) -> Result<Vector> {
        let s = v.norm();
        if s == 0.0 {
            return Ok(Vector::zeros(self.dim));
        }
        let u = v / s;
        let h = H_SECOND * x.norm().max(1.0);
        let fp = self.raw(&(x + &u * h), t)?;
        let f0 = self.raw(x, t)?;
        let fm = self.raw(&(x - &u * h), t)?;
        Ok((fp - f0 * 2.0 + fm) * (s * s / (h * h)))
    }

    pub fn fd_dt_dx_dir(&self, x: &Vector, t: f64, v: &Vector) -> Result<Vector> {
        let s = v.norm();
        if s == 0.0 {
            return Ok(Vector::zeros(self.dim));
        }
        let u = v / s;
        let h = H_SECOND * x.norm().max(1.0);
        let xp = x + &u * h;
        let xm = x - &u * h;
        let a = self.raw(&xp, t + h)? - self.raw(&xm, t + h)?;
        let b = self.raw(&xp, t - h)? - self.raw(&xm, t - h)?;
        Ok((a - b) * (s / (4.0 * h * h)))
    }
}

fn eval_error(x: &Vector, t: f64, what: &str) -> Error {
    Error::Evaluation { x: x.iter().copied().collect(), t, what: what.to_string() }
}

fn finite_vector(v: Vector, x: &Vector, t: f64, what: &str) -> Result<Vector> {
    if all_finite(&v) {
        Ok(v)
    } else {
        Err(eval_error(x, t, what))
    }
}

fn finite_matrix(m: Matrix, x: &Vector, t: f64, what: &str) -> Result<Matrix> {
    if m.iter().all(|c| c.is_finite()) {
        Ok(m)
    } else {
        Err(eval_error(x, t, what))
    }
}

/// Declarative description of a user problem. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    pub dim: usize,
    pub t_range: [f64; 2],
    /// One expression per component, in the variables `x1..xn` and `t`.
    pub equations: Vec<String>,
    #[serde(default)]
    pub smoothness_order: Option<u32>,
    #[serde(default)]
    pub scan_box: Option<Vec<[f64; 2]>>,
}

impl ProblemConfig {
    pub fn into_problem(self) -> Result<ProblemSpec> {
        if self.equations.len() != self.dim {
            return Err(Error::InvalidProblem(format!(
                "{} equations for {} unknowns; only square systems are supported",
                self.equations.len(),
                self.dim
            )));
        }
        let exprs = self
            .equations
            .iter()
            .map(|src| Expr::parse(src, self.dim))
            .collect::<Result<Vec<_>>>()?;
        let descriptor = format!(
            "config:{}:{}:{:?}:{}",
            self.name,
            self.dim,
            self.t_range,
            self.equations.join(";")
        );
        let mut p = ProblemSpec::new(self.name, self.dim, (self.t_range[0], self.t_range[1]), move |x, t| {
            Vector::from_iterator(exprs.len(), exprs.iter().map(|e| e.eval(x.as_slice(), t)))
        })?
        .with_descriptor(descriptor);
        if let Some(k) = self.smoothness_order {
            p = p.with_smoothness_order(k)?;
        }
        if let Some(b) = self.scan_box {
            if b.len() != self.dim {
                return Err(Error::InvalidProblem("scan_box length differs from dim".into()));
            }
            p = p.with_scan_box(b.into_iter().map(|[lo, hi]| (lo, hi)).collect());
        }
        Ok(p)
    }
}
