//! Gradient problems `F = D_x E` and the finite-difference Allen–Cahn model
//! `E(u, t) = int 1/2 |u'|^2 + W(u) - l(t) p u` with `W(u) = (u^2 - 1)^2 / 4`
//! and homogeneous Dirichlet conditions on `(0, L)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::continuation::{find_folds_from_starts, FoldRecord, StepConfig};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Vector};
use crate::problem_model::{Expr, Point, ProblemSpec};
use crate::solve::{enumerate_from_starts, NewtonConfig};
use crate::transversality::{certify_energy, EnergyCertificate, Tolerances};

pub type EnergyFn = Arc<dyn Fn(&Vector, f64) -> f64 + Send + Sync>;
type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type ScalarDirFn = Arc<dyn Fn(&Vector, f64, &Vector) -> f64 + Send + Sync>;

/// A problem whose map is a scaled gradient: `D_x E = weight * F`.
///
/// The weight is the quadrature factor of a discretized energy (the mesh
/// width for Allen–Cahn) and 1 for plain finite-dimensional energies.
#[derive(Clone)]
pub struct EnergyProblem {
    problem: ProblemSpec,
    energy: EnergyFn,
    d3: Option<ScalarDirFn>,
    weight: f64,
}

impl fmt::Debug for EnergyProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnergyProblem")
            .field("problem", &self.problem)
            .field("weight", &self.weight)
            .field("analytic_d3", &self.d3.is_some())
            .finish()
    }
}

impl EnergyProblem {
    pub fn new<E>(problem: ProblemSpec, energy: E, weight: f64) -> Result<Self>
    where
        E: Fn(&Vector, f64) -> f64 + Send + Sync + 'static,
    {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidProblem(format!("energy weight must be positive, got {weight}")));
        }
        Ok(Self { problem, energy: Arc::new(energy), d3: None, weight })
    }

    pub fn with_d3<G>(mut self, g: G) -> Self
    where
        G: Fn(&Vector, f64, &Vector) -> f64 + Send + Sync + 'static,
    {
        self.d3 = Some(Arc::new(g));
        self
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn energy_fn(&self) -> EnergyFn {
        self.energy.clone()
    }

    pub fn d3_fn(&self) -> Option<ScalarDirFn> {
        self.d3.clone()
    }

    /// Replaces the inner problem, keeping energy, `D^3 E` and weight.
    pub fn with_problem(mut self, problem: ProblemSpec) -> Self {
        self.problem = problem;
        self
    }

    fn check(&self, x: &Vector, t: f64) -> Result<()> {
        if x.len() != self.problem.dim() {
            return Err(Error::DimensionMismatch { expected: self.problem.dim(), got: x.len() });
        }
        if !self.problem.contains_t(t) {
            let (lo, hi) = self.problem.t_range();
            return Err(Error::DomainViolation { t, lo, hi });
        }
        Ok(())
    }

    fn finite(&self, x: &Vector, t: f64, value: f64, what: &str) -> Result<f64> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Evaluation { x: x.as_slice().to_vec(), t, what: what.to_string() })
        }
    }

    pub fn energy_value(&self, x: &Vector, t: f64) -> Result<f64> {
        self.check(x, t)?;
        self.finite(x, t, (self.energy)(x, t), "energy")
    }

    /// `D_x^3 E[v, v, v]`.
    pub fn d3_dir(&self, x: &Vector, t: f64, v: &Vector) -> Result<f64> {
        self.check(x, t)?;
        if v.len() != x.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: v.len() });
        }
        match &self.d3 {
            Some(g) => self.finite(x, t, g(x, t, v), "d3"),
            None => self.fd_d3_dir(x, t, v),
        }
    }

    /// Third central difference of `E` along `v`.
    pub fn fd_d3_dir(&self, x: &Vector, t: f64, v: &Vector) -> Result<f64> {
        let s = v.norm();
        if s == 0.0 {
            return Ok(0.0);
        }
        let u = v / s;
        let h = 1e-3 * x.norm().max(1.0);
        let e = |k: f64| (self.energy)(&(x + &u * (k * h)), t);
        let d = (e(2.0) - 2.0 * e(1.0) + 2.0 * e(-1.0) - e(-2.0)) / (2.0 * h * h * h);
        self.finite(x, t, d * s * s * s, "d3")
    }

    /// `d_t D_x E = weight * d_t F`.
    pub fn dt_gradient(&self, x: &Vector, t: f64) -> Result<Vector> {
        Ok(self.problem.dt_xt(x, t)? * self.weight)
    }

    /// Central-difference gradient of `E`.
    pub fn fd_gradient(&self, x: &Vector, t: f64) -> Result<Vector> {
        self.check(x, t)?;
        let h = 1e-5 * x.norm().max(1.0);
        let mut g = Vector::zeros(x.len());
        let mut xp = x.clone();
        for i in 0..x.len() {
            xp[i] = x[i] + h;
            let ep = (self.energy)(&xp, t);
            xp[i] = x[i] - h;
            let em = (self.energy)(&xp, t);
            xp[i] = x[i];
            g[i] = (ep - em) / (2.0 * h);
        }
        Ok(g)
    }
}

fn scalar(v: f64) -> Vector {
    Vector::from_element(1, v)
}

fn quartic1d() -> Result<EnergyProblem> {
    let p = ProblemSpec::new("quartic1d", 1, (-10.0, 10.0), |x, t| scalar(x[0].powi(3) - t))?
        .with_descriptor("quartic1d: E = x^4/4 - t x")
        .with_smoothness_order(3)?
        .with_jacobian(|x, _| Matrix::from_element(1, 1, 3.0 * x[0] * x[0]))
        .with_dt(|_, _| scalar(-1.0))
        .with_d2x_dir(|x, _, v| scalar(6.0 * x[0] * v[0] * v[0]))
        .with_dt_dx_dir(|_, _, _| scalar(0.0))
        .with_scan_box(vec![(-3.0, 3.0)]);
    Ok(EnergyProblem::new(p, |x, t| x[0].powi(4) / 4.0 - t * x[0], 1.0)?.with_d3(|x, _, v| 6.0 * x[0] * v[0].powi(3)))
}

fn cubic1d() -> Result<EnergyProblem> {
    let p = ProblemSpec::new("cubic1d", 1, (-10.0, 10.0), |x, t| scalar(x[0] * x[0] - t))?
        .with_descriptor("cubic1d: E = x^3/3 - t x")
        .with_jacobian(|x, _| Matrix::from_element(1, 1, 2.0 * x[0]))
        .with_dt(|_, _| scalar(-1.0))
        .with_d2x_dir(|_, _, v| scalar(2.0 * v[0] * v[0]))
        .with_dt_dx_dir(|_, _, _| scalar(0.0))
        .with_scan_box(vec![(-3.0, 3.0)]);
    Ok(EnergyProblem::new(p, |x, t| x[0].powi(3) / 3.0 - t * x[0], 1.0)?.with_d3(|_, _, v| 2.0 * v[0].powi(3)))
}

fn cubicload_energy() -> Result<EnergyProblem> {
    let p = crate::problem_model::lookup("cubicload")?;
    Ok(EnergyProblem::new(p, |x, t| x[0].powi(4) / 4.0 - x[0] * x[0] / 2.0 - t * x[0], 1.0)?
        .with_d3(|x, _, v| 6.0 * x[0] * v[0].powi(3)))
}

/// Named energies: `quartic1d`, `cubic1d`, `cubicload`, `allencahn<m>`.
pub fn lookup_energy(name: &str) -> Result<EnergyProblem> {
    match name {
        "quartic1d" => quartic1d(),
        "cubic1d" => cubic1d(),
        "cubicload" => cubicload_energy(),
        _ => match name.strip_prefix("allencahn") {
            Some("") => build_allen_cahn(&AllenCahnConfig::sweep_default(32)),
            Some(rest) => {
                let m = rest.parse::<usize>().map_err(|_| Error::NotFound(name.into()))?;
                build_allen_cahn(&AllenCahnConfig::sweep_default(m))
            }
            None => Err(Error::NotFound(name.to_string())),
        },
    }
}

/// Load amplitude `l(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LoadPath {
    Linear { slope: f64, offset: f64 },
    /// An expression in `t`.
    Expression(String),
}

impl LoadPath {
    /// `(l, l')` as callable pair.
    fn compile(&self) -> Result<(ScalarFn, ScalarFn)> {
        match self {
            LoadPath::Linear { slope, offset } => {
                let (a, b) = (*slope, *offset);
                Ok((Arc::new(move |t| a * t + b), Arc::new(move |_| a)))
            }
            LoadPath::Expression(src) => {
                let bad = |e: Error| Error::BadLoadExpression(format!("{src}: {e}"));
                let e = Expr::parse(src, 0).map_err(bad)?;
                let d = e.diff_t().map_err(bad)?;
                Ok((Arc::new(move |t| e.eval(&[], t)), Arc::new(move |t| d.eval(&[], t))))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllenCahnConfig {
    /// Interior nodes.
    pub m: usize,
    /// Length of the interval `(0, L)`.
    pub length: f64,
    pub load: LoadPath,
    /// Spatial load profile; constant 1 when absent.
    pub profile: Option<Vec<f64>>,
    /// Additive perturbation.
    pub y: Option<Vec<f64>>,
    /// Multiplicative perturbation.
    pub z: Option<Vec<f64>>,
    pub t_range: (f64, f64),
}

impl AllenCahnConfig {
    /// Unit interval, `l(t) = t`, no perturbation.
    pub fn new(m: usize) -> Self {
        Self {
            m,
            length: 1.0,
            load: LoadPath::Linear { slope: 1.0, offset: 0.0 },
            profile: None,
            y: None,
            z: None,
            t_range: (-2.0, 2.0),
        }
    }

    /// The configuration used for load sweeps: `L = 6`, where the tilted
    /// double well has a hysteresis loop inside `l in (-1, 1)`.
    pub fn sweep_default(m: usize) -> Self {
        Self { length: 6.0, ..Self::new(m) }
    }

    pub fn h(&self) -> f64 {
        self.length / (self.m + 1) as f64
    }

    /// Node positions `x_i = i h`, `i = 1..m`.
    pub fn nodes(&self) -> Vec<f64> {
        let h = self.h();
        (1..=self.m).map(|i| i as f64 * h).collect()
    }
}

fn laplacian(u: &Vector, h2: f64) -> Vector {
    let m = u.len();
    Vector::from_fn(m, |i, _| {
        let left = if i > 0 { u[i - 1] } else { 0.0 };
        let right = if i + 1 < m { u[i + 1] } else { 0.0 };
        (2.0 * u[i] - left - right) / h2
    })
}

/// Second-difference Dirichlet Laplacian `A_h` (approximating `-u''`).
pub fn laplacian_matrix(m: usize, h: f64) -> Matrix {
    let h2 = h * h;
    Matrix::from_fn(m, m, |i, j| match i.abs_diff(j) {
        0 => 2.0 / h2,
        1 => -1.0 / h2,
        _ => 0.0,
    })
}

pub fn build_allen_cahn(cfg: &AllenCahnConfig) -> Result<EnergyProblem> {
    let m = cfg.m;
    if m < 3 {
        return Err(Error::InvalidProblem(format!("Allen-Cahn grid needs m >= 3, got {m}")));
    }
    if !(cfg.length > 0.0 && cfg.length.is_finite()) {
        return Err(Error::InvalidProblem(format!("domain length must be positive, got {}", cfg.length)));
    }
    let field = |v: &Option<Vec<f64>>, name: &str, default: f64| -> Result<Arc<Vector>> {
        match v {
            Some(d) if d.len() != m => Err(Error::DimensionMismatch { expected: m, got: d.len() })
                .map_err(|e| Error::InvalidProblem(format!("{name}: {e}"))),
            Some(d) => Ok(Arc::new(Vector::from_column_slice(d))),
            None => Ok(Arc::new(Vector::from_element(m, default))),
        }
    };
    let p = field(&cfg.profile, "profile", 1.0)?;
    let y = field(&cfg.y, "y", 0.0)?;
    let z = field(&cfg.z, "z", 0.0)?;
    let (load, dload) = cfg.load.compile()?;
    let h = cfg.h();
    let h2 = h * h;
    let a = Arc::new(laplacian_matrix(m, h));

    let f = {
        let (p, y, z, load) = (p.clone(), y.clone(), z.clone(), load.clone());
        move |u: &Vector, t: f64| {
            let l = load(t);
            let mut r = laplacian(u, h2);
            for i in 0..m {
                r[i] += u[i].powi(3) - u[i] - l * p[i] + y[i] + z[i] * u[i];
            }
            r
        }
    };
    let jac = {
        let (a, z) = (a.clone(), z.clone());
        move |u: &Vector, _: f64| {
            let mut j = (*a).clone();
            for i in 0..m {
                j[(i, i)] += 3.0 * u[i] * u[i] - 1.0 + z[i];
            }
            j
        }
    };
    let dt = {
        let (p, dload) = (p.clone(), dload.clone());
        move |_: &Vector, t: f64| &*p * (-dload(t))
    };
    let name = format!("allencahn{m}");
    let problem = ProblemSpec::new(name.clone(), m, cfg.t_range, f)?
        .with_descriptor(format!("{name}: A_h u + u^3 - u - l(t) p + y + z u, L = {}", cfg.length))
        .with_smoothness_order(4)?
        .with_jacobian(jac)
        .with_dt(dt)
        .with_d2x_dir(move |u, _, v| Vector::from_fn(m, |i, _| 6.0 * u[i] * v[i] * v[i]))
        .with_dt_dx_dir(move |_, _, _| Vector::zeros(m))
        .with_scan_box(vec![(-1.5, 1.5); m]);

    let energy = move |u: &Vector, t: f64| {
        let l = load(t);
        let mut grad = 0.0;
        let mut prev = 0.0;
        for i in 0..=m {
            let next = if i < m { u[i] } else { 0.0 };
            let d = (next - prev) / h;
            grad += 0.5 * d * d;
            prev = next;
        }
        let mut pot = 0.0;
        for i in 0..m {
            let w = (u[i] * u[i] - 1.0).powi(2) / 4.0;
            pot += w - l * p[i] * u[i] + y[i] * u[i] + 0.5 * z[i] * u[i] * u[i];
        }
        h * (grad + pot)
    };
    Ok(EnergyProblem::new(problem, energy, h)?
        .with_d3(move |u, _, v| h * (0..m).map(|i| 6.0 * u[i] * v[i].powi(3)).sum::<f64>()))
}

/// Starts and controls for a load sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Constant initial states `u = c` polished by Newton at both window ends.
    pub start_levels: Vec<f64>,
    pub step: StepConfig,
    pub newton: NewtonConfig,
    pub tols: Tolerances,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            start_levels: vec![-1.2, -1.0, -0.5, 0.0, 0.5, 1.0, 1.2],
            step: StepConfig { max_step: 0.5, x_bound: Some(3.0), ..StepConfig::default() },
            newton: NewtonConfig::default(),
            tols: Tolerances::default(),
        }
    }
}

/// A fold with its energy-form certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedFold {
    pub fold: FoldRecord,
    pub energy: EnergyCertificate,
}

/// Sweeps the load over `window`, tracing every equilibrium found at the
/// window ends, and certifies each fold in energy form.
pub fn sweep_and_certify(ep: &EnergyProblem, window: (f64, f64), cfg: &SweepConfig) -> Result<Vec<CertifiedFold>> {
    let problem = ep.problem();
    let (lo, hi) = problem.t_range();
    if !(window.0 > lo && window.1 < hi && window.0 < window.1) {
        return Err(Error::DomainViolation { t: if window.0 <= lo { window.0 } else { window.1 }, lo, hi });
    }
    let n = problem.dim();
    let guesses: Vec<Vector> = cfg.start_levels.iter().map(|&c| Vector::from_element(n, c)).collect();
    let mut starts = Vec::new();
    for t in [window.0, window.1] {
        let sec = enumerate_from_starts(problem, t, &guesses, &cfg.newton);
        starts.extend(sec.zeros.into_iter().map(|x| Point::new(x, t)));
    }
    let step = StepConfig { t_bounds: Some(window), ..cfg.step.clone() };
    let found = find_folds_from_starts(problem, &starts, &step, &cfg.newton, &cfg.tols);
    found
        .folds
        .into_iter()
        .map(|fold| {
            let energy = certify_energy(ep, &fold.point, &cfg.tols)?;
            Ok(CertifiedFold { fold, energy })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transversality::{Classification, Condition};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trivial_equilibrium() {
        let ep = build_allen_cahn(&AllenCahnConfig { load: LoadPath::Linear { slope: 0.0, offset: 0.0 }, ..AllenCahnConfig::new(3) })
            .unwrap();
        let f = ep.problem().eval(&Point::new(Vector::zeros(3), 0.3)).unwrap();
        assert_eq!(f.norm(), 0.0);
        assert!((ep.energy_value(&Vector::zeros(3), 0.0).unwrap() - 0.25 * 3.0 / 4.0).abs() < 1e-15);
        assert_eq!(ep.d3_dir(&Vector::zeros(3), 0.0, &Vector::from_element(3, 0.7)).unwrap(), 0.0);
    }

    #[test]
    fn laplacian_spectrum() {
        let a = laplacian_matrix(3, 0.25);
        let mut ev: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let r2 = 2f64.sqrt();
        for (got, want) in ev.iter().zip([16.0 * (2.0 - r2), 32.0, 16.0 * (2.0 + r2)]) {
            assert!((got - want).abs() < 1e-12, "{got} {want}");
        }
    }

    #[test]
    fn unit_interval_hessian_at_rest_is_positive() {
        for m in [3, 8, 32, 64] {
            let ep = build_allen_cahn(&AllenCahnConfig::new(m)).unwrap();
            let j = ep.problem().jacobian_x(&Point::new(Vector::zeros(m), 0.0)).unwrap();
            let min = j.symmetric_eigen().eigenvalues.min();
            let h = 1.0 / (m + 1) as f64;
            let lam1 = 4.0 / (h * h) * (std::f64::consts::PI * h / 2.0).sin().powi(2);
            assert!((min - (lam1 - 1.0)).abs() < 1e-9 && min > 0.0);
        }
    }

    #[test]
    fn one_dimensional_energies() {
        let q = lookup_energy("quartic1d").unwrap();
        assert_eq!(q.energy_value(&scalar(1.0), 0.0).unwrap(), 0.25);
        assert_eq!(q.d3_dir(&scalar(1.0), 0.0, &scalar(1.0)).unwrap(), 6.0);
        assert!((q.fd_d3_dir(&scalar(1.0), 0.0, &scalar(1.0)).unwrap() - 6.0).abs() < 1e-5);
    }

    #[test]
    fn tanh_profile_energy_matches_quadrature() {
        let cfg = AllenCahnConfig { load: LoadPath::Expression("0.1*sin(t)".into()), ..AllenCahnConfig::sweep_default(40) };
        let ep = build_allen_cahn(&cfg).unwrap();
        let xs = cfg.nodes();
        let u = Vector::from_iterator(cfg.m, xs.iter().map(|&s| (3.0 * (s - 3.0)).tanh()));
        let t = 0.4;
        // composite trapezoid on the piecewise-linear interpolant for the gradient term,
        // mass-lumped nodal sums for the rest
        let h = cfg.h();
        let mut full = vec![0.0];
        full.extend(u.iter().copied());
        full.push(0.0);
        let grad: f64 = full.windows(2).map(|w| h * 0.5 * ((w[1] - w[0]) / h).powi(2)).sum();
        let l = 0.1 * f64::sin(t);
        let pot: f64 = full.iter().map(|&v| h * ((v * v - 1.0).powi(2) / 4.0 - l * v)).sum::<f64>() - h * 0.5;
        let e = ep.energy_value(&u, t).unwrap();
        assert!((e - (grad + pot)).abs() < 1e-10, "{e} {}", grad + pot);
    }

    #[test]
    fn gradient_and_derivative_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = 8;
        let cfg = AllenCahnConfig {
            y: Some((0..m).map(|_| rng.random_range(-0.1..0.1)).collect()),
            z: Some((0..m).map(|_| rng.random_range(-0.1..0.1)).collect()),
            load: LoadPath::Expression("t + 0.2*t^3".into()),
            ..AllenCahnConfig::sweep_default(m)
        };
        let ep = build_allen_cahn(&cfg).unwrap();
        let h = ep.weight();
        for _ in 0..20 {
            let u = Vector::from_fn(m, |_, _| rng.random_range(-1.2..1.2));
            let v = Vector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let t = rng.random_range(-1.0..1.0);
            let f = ep.problem().eval_xt(&u, t).unwrap();
            let g = ep.fd_gradient(&u, t).unwrap() / h;
            assert!((&f - &g).norm() <= 1e-8 * (1.0 + f.norm()), "{}", (&f - &g).norm());
            let j = ep.problem().jacobian_xt(&u, t).unwrap();
            assert!((&j - j.transpose()).norm() == 0.0);
            let a = ep.d3_dir(&u, t, &v).unwrap();
            let b = ep.fd_d3_dir(&u, t, &v).unwrap();
            assert!((a - b).abs() <= 1e-4 * (1.0 + a.abs()), "{a} {b}");
            let dt = ep.dt_gradient(&u, t).unwrap();
            let dt_fd = (ep.problem().eval_xt(&u, t + 1e-6).unwrap() - ep.problem().eval_xt(&u, t - 1e-6).unwrap()) * (h / 2e-6);
            assert!((&dt - &dt_fd).norm() < 1e-7 * (1.0 + dt.norm()));
        }
    }

    #[test]
    fn bad_configs() {
        assert!(matches!(build_allen_cahn(&AllenCahnConfig::new(2)), Err(Error::InvalidProblem(_))));
        let cfg = AllenCahnConfig { load: LoadPath::Expression("t +".into()), ..AllenCahnConfig::new(4) };
        assert!(matches!(build_allen_cahn(&cfg), Err(Error::BadLoadExpression(_))));
        let cfg = AllenCahnConfig { z: Some(vec![0.0; 3]), ..AllenCahnConfig::new(4) };
        assert!(build_allen_cahn(&cfg).is_err());
    }

    /// Odd load profile and `z` shifted so that `u = 0` is singular at `l = 0`:
    /// the even kernel mode is orthogonal to the load.
    #[test]
    fn tuned_symmetric_case_is_not_transversal() {
        let m = 31;
        let base = AllenCahnConfig::sweep_default(m);
        let h = base.h();
        let lam1 = laplacian_matrix(m, h).symmetric_eigen().eigenvalues.min();
        let mid = base.length / 2.0;
        let cfg = AllenCahnConfig {
            profile: Some(base.nodes().iter().map(|&s| (s - mid) / mid).collect()),
            z: Some(vec![1.0 - lam1; m]),
            ..base
        };
        let ep = build_allen_cahn(&cfg).unwrap();
        let p = Point::new(Vector::zeros(m), 0.0);
        let hess = ep.problem().jacobian_x(&p).unwrap();
        let mut ev: Vec<f64> = hess.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-10 && ev[1] > 0.1);
        let c = certify_energy(&ep, &p, &Tolerances::default()).unwrap();
        assert_eq!(c.classification, Classification::NonTransversal);
        assert!(c.failures.contains(&Condition::E2));
    }

    #[test]
    fn sweep_finds_transversal_fold_pair() {
        let ep = lookup_energy("allencahn32").unwrap();
        let folds = sweep_and_certify(&ep, (-1.0, 1.0), &SweepConfig::default()).unwrap();
        assert!(folds.len() >= 2, "{}", folds.len());
        for f in &folds {
            assert_eq!(f.energy.classification, Classification::TransversalSingular);
            assert!(f.energy.self_duality_defect <= 1e-8);
        }
        // the pair is symmetric under (u, l) -> (-u, -l)
        let ts: Vec<f64> = folds.iter().map(|f| f.fold.point.t).collect();
        assert!(ts.iter().any(|&t| ts.iter().any(|&s| (s + t).abs() < 1e-8 && t > 0.0)));
    }
}
