//! Perturbation families `F + y + K x` and `E + <l, x> + K(x, x) / 2`,
//! explicit rescue constructions, a Monte-Carlo genericity experiment and the
//! full-regularity check of the extended augmented differential.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuation::{scan_folds, FoldSearch, ScanConfig};
use crate::energy_pde::EnergyProblem;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Vector};
use crate::problem_model::ProblemSpec;
use crate::spectral::{rank_report, RankReport};
use crate::transversality::{check_zero_of_g, dg_total, AugmentedPoint, Classification, Tolerances};

/// Additive and linear perturbation `(y, K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSample {
    #[serde(with = "crate::numeric::serde_vector")]
    pub y: Vector,
    #[serde(with = "crate::numeric::serde_matrix")]
    pub k: Matrix,
    pub radius: f64,
    pub seed: u64,
}

impl PerturbationSample {
    pub fn zero(n: usize) -> Self {
        Self { y: Vector::zeros(n), k: Matrix::zeros(n, n), radius: 0.0, seed: 0 }
    }

    /// `sqrt(|y|^2 + |K|_F^2)`.
    pub fn norm(&self) -> f64 {
        (self.y.norm_squared() + self.k.norm_squared()).sqrt()
    }
}

/// Linear functional `l` and symmetric bilinear form `K` of an energy perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricPerturbation {
    #[serde(with = "crate::numeric::serde_vector")]
    pub ell: Vector,
    #[serde(with = "crate::numeric::serde_matrix")]
    pub kform: Matrix,
}

impl SymmetricPerturbation {
    /// Stores the symmetric part of `k`.
    pub fn new(ell: Vector, k: Matrix) -> Result<Self> {
        let n = ell.len();
        if k.shape() != (n, n) {
            return Err(Error::DimensionMismatch { expected: n, got: k.nrows() });
        }
        let kform = Matrix::from_fn(n, n, |i, j| 0.5 * (k[(i, j)] + k[(j, i)]));
        Ok(Self { ell, kform })
    }
}

/// `F~ = F + y + K x`; analytic derivative callbacks compose exactly.
pub fn perturb_problem(problem: &ProblemSpec, s: &PerturbationSample) -> Result<ProblemSpec> {
    problem.with_affine_shift(&s.y, &s.k)
}

/// `E~ = E + <l, x> + K(x, x) / 2`. With `D_x E = w F` the map becomes
/// `F + (l + K x) / w`; `D^3 E` is unchanged.
pub fn perturb_energy(ep: &EnergyProblem, sp: &SymmetricPerturbation) -> Result<EnergyProblem> {
    let w = ep.weight();
    let problem = ep.problem().with_affine_shift(&(&sp.ell / w), &(&sp.kform / w))?;
    let energy = ep.energy_fn();
    let (ell, k) = (sp.ell.clone(), sp.kform.clone());
    let mut out = EnergyProblem::new(problem, move |x, t| energy(x, t) + ell.dot(x) + 0.5 * x.dot(&(&k * x)), w)?;
    if let Some(d3) = ep.d3_fn() {
        out = out.with_d3(move |x, t, v| d3(x, t, v));
    }
    Ok(out)
}

/// SplitMix64 finalizer applied to `master + index`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Entries of `y` and `K` i.i.d. uniform on `[-a, a]`, `a = radius / sqrt(n + n^2)`,
/// so that `|(y, K)| <= radius`.
pub fn sample_perturbation(n: usize, radius: f64, seed: u64) -> PerturbationSample {
    if radius <= 0.0 {
        return PerturbationSample { seed, ..PerturbationSample::zero(n) };
    }
    let a = radius / ((n + n * n) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = Vector::from_fn(n, |_, _| rng.random_range(-a..=a));
    let k = Matrix::from_fn(n, n, |_, _| rng.random_range(-a..=a));
    let mut s = PerturbationSample { y, k, radius, seed };
    let norm = s.norm();
    if norm > radius {
        s.y *= radius / norm;
        s.k *= radius / norm;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleOutcome {
    AllFoldsTransversal,
    SomeNonTransversal,
    InconclusiveNumerics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub index: usize,
    pub seed: u64,
    pub outcome: SampleOutcome,
    pub folds: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericityReport {
    pub problem: String,
    pub n_samples: usize,
    pub radius: f64,
    pub master_seed: u64,
    pub distribution: String,
    pub unperturbed_outcome: SampleOutcome,
    pub unperturbed_folds: usize,
    /// `SomeNonTransversal / n_samples`.
    pub failure_fraction: f64,
    /// `SomeNonTransversal / (n_samples - inconclusive)`.
    pub conclusive_failure_fraction: f64,
    pub inconclusive_fraction: f64,
    pub scan_box: Vec<(f64, f64)>,
    pub t_window: (f64, f64),
    pub t_values: Vec<f64>,
    pub samples: Vec<SampleResult>,
}

/// Classifies a fold search. A certified non-transversal fold is a failure;
/// otherwise any numerical breakdown makes the sample inconclusive.
pub fn classify_search(search: &FoldSearch) -> SampleOutcome {
    if search.folds.iter().any(|f| f.certificate.classification == Classification::NonTransversal) {
        SampleOutcome::SomeNonTransversal
    } else if !search.failures.is_empty() {
        SampleOutcome::InconclusiveNumerics
    } else {
        SampleOutcome::AllFoldsTransversal
    }
}

fn run_sample(problem: &ProblemSpec, s: &PerturbationSample, scan: &ScanConfig) -> (SampleOutcome, usize, Vec<String>) {
    let search = perturb_problem(problem, s).and_then(|p| scan_folds(&p, scan));
    match search {
        Ok(found) => (classify_search(&found), found.folds.len(), found.failures),
        Err(e) => (SampleOutcome::InconclusiveNumerics, 0, vec![e.to_string()]),
    }
}

pub fn genericity_experiment(
    problem: &ProblemSpec,
    n_samples: usize,
    radius: f64,
    master_seed: u64,
    scan: &ScanConfig,
) -> Result<GenericityReport> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::Config(format!("radius must be non-negative, got {radius}")));
    }
    let n = problem.dim();
    let (unperturbed_outcome, unperturbed_folds, _) = run_sample(problem, &PerturbationSample::zero(n), scan);
    let samples: Vec<SampleResult> = (0..n_samples)
        .into_par_iter()
        .map(|index| {
            let seed = derive_seed(master_seed, index as u64);
            let s = sample_perturbation(n, radius, seed);
            let (outcome, folds, notes) = run_sample(problem, &s, scan);
            SampleResult { index, seed, outcome, folds, notes }
        })
        .collect();
    let count = |o: SampleOutcome| samples.iter().filter(|s| s.outcome == o).count();
    let failures = count(SampleOutcome::SomeNonTransversal);
    let inconclusive = count(SampleOutcome::InconclusiveNumerics);
    let frac = |k: usize, d: usize| if d == 0 { 0.0 } else { k as f64 / d as f64 };
    Ok(GenericityReport {
        problem: problem.name().to_string(),
        n_samples,
        radius,
        master_seed,
        distribution: format!("y, K entries iid uniform on [-a, a], a = radius / sqrt(n + n^2), n = {n}"),
        unperturbed_outcome,
        unperturbed_folds,
        failure_fraction: frac(failures, n_samples),
        conclusive_failure_fraction: frac(failures, n_samples - inconclusive),
        inconclusive_fraction: frac(inconclusive, n_samples),
        scan_box: scan.bounds.clone(),
        t_window: scan.t_window,
        t_values: scan.t_values.clone(),
        samples,
    })
}

/// `K = w l^T / <l, v>`, so that `K v = w`.
pub fn rescue_linear(v: &Vector, w: &Vector, ell: &Vector) -> Result<Matrix> {
    let n = v.len();
    if w.len() != n || ell.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: if w.len() != n { w.len() } else { ell.len() } });
    }
    let p = ell.dot(v);
    if p == 0.0 || !p.is_finite() {
        return Err(Error::DegeneratePairing(p));
    }
    let l = ell / p;
    Ok(w * l.transpose())
}

/// Symmetric `K` with `K x = l`.
///
/// With `p = <l, x>`: `K = l l^T / p` when `|p|` is well away from zero,
/// otherwise `K = l x*^T + x* l^T - p x* x*^T` with `x* = x / |x|^2`.
pub fn rescue_symmetric(x: &Vector, ell: &Vector) -> Result<Matrix> {
    let n = x.len();
    if ell.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: ell.len() });
    }
    if x.norm() == 0.0 {
        return Err(Error::ZeroInput("x"));
    }
    if ell.norm() == 0.0 {
        return Err(Error::ZeroInput("ell"));
    }
    let p = ell.dot(x);
    if p.abs() >= 0.1 * ell.norm() * x.norm() {
        return Ok(Matrix::from_fn(n, n, |i, j| (ell[i] * ell[j]) / p));
    }
    let xs = x / x.norm_squared();
    Ok(Matrix::from_fn(n, n, |i, j| ell[i] * xs[j] + xs[i] * ell[j] - p * (xs[i] * xs[j])))
}

/// Rank of the differential of `(x, t, v, y, K) -> G` at a zero of `G`.
///
/// Columns are `dG` followed by `n` identity columns for `y` and one column
/// per entry `K_ij`, which contributes `(x_j e_i, v_j e_i)`.
pub fn check_full_regularity(problem: &ProblemSpec, q: &AugmentedPoint, tols: &Tolerances) -> Result<RankReport> {
    check_zero_of_g(problem, q, tols)?;
    let n = problem.dim();
    let dg = dg_total(problem, q)?;
    let cols = 2 * n + 1 + n + n * n;
    let mut m = Matrix::zeros(2 * n, cols);
    m.view_mut((0, 0), (2 * n, 2 * n + 1)).copy_from(&dg);
    for i in 0..n {
        m[(i, 2 * n + 1 + i)] = 1.0;
    }
    let base = 3 * n + 1;
    for i in 0..n {
        for j in 0..n {
            let c = base + i * n + j;
            m[(i, c)] = q.x[j];
            m[(n + i, c)] = q.v[j];
        }
    }
    rank_report(&m, &tols.rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuation::{detect_folds, refine_fold, trace_branch, StepConfig};
    use crate::problem_model::{lookup, Point};
    use crate::solve::NewtonConfig;

    fn v(d: &[f64]) -> Vector {
        Vector::from_column_slice(d)
    }

    fn single(y: f64, k: f64) -> PerturbationSample {
        PerturbationSample { y: v(&[y]), k: Matrix::from_element(1, 1, k), radius: 1.0, seed: 0 }
    }

    fn fold_of(p: &ProblemSpec, start: f64) -> Point {
        let t0 = p.eval_xt(&v(&[start]), 0.0).unwrap()[0];
        // start on the curve: solve for t with x fixed (F is affine in t here)
        let st = Point::from_slice(&[start], t0);
        let cfg = StepConfig { t_bounds: Some((-2.0, 2.0)), ..StepConfig::default() };
        let c = trace_branch(p, &st, -1, &cfg).unwrap();
        let br = detect_folds(&c);
        refine_fold(p, &c, br[0], &NewtonConfig::default(), &Tolerances::default()).unwrap().point
    }

    #[test]
    fn identity_and_shift() {
        let base = lookup("fold1d").unwrap();
        let same = perturb_problem(&base, &single(0.0, 0.0)).unwrap();
        let x = v(&[0.3]);
        assert_eq!(same.eval_xt(&x, 0.2).unwrap(), base.eval_xt(&x, 0.2).unwrap());

        let shifted = perturb_problem(&base, &single(0.1, 0.0)).unwrap();
        let f = fold_of(&shifted, 1.0);
        assert!(f.x[0].abs() < 1e-10 && (f.t - 0.1).abs() < 1e-10);

        let tilted = perturb_problem(&base, &single(0.0, 0.2)).unwrap();
        let f = fold_of(&tilted, 1.0);
        assert!((f.x[0] + 0.1).abs() < 1e-10 && (f.t + 0.01).abs() < 1e-10, "{f:?}");
    }

    #[test]
    fn derivative_composition_is_exact() {
        let base = lookup("foldprod4d").unwrap();
        let s = sample_perturbation(4, 0.3, 9);
        let p = perturb_problem(&base, &s).unwrap();
        let x = v(&[0.2, -0.1, 0.5, 0.3]);
        let d = p.jacobian_xt(&x, 0.4).unwrap() - (base.jacobian_xt(&x, 0.4).unwrap() + &s.k);
        assert!(d.amax() <= 1e-14);
        assert_eq!(p.dt_xt(&x, 0.4).unwrap(), base.dt_xt(&x, 0.4).unwrap());
        assert_eq!(p.d2x_dir_xt(&x, 0.4, &x).unwrap(), base.d2x_dir_xt(&x, 0.4, &x).unwrap());
    }

    #[test]
    fn sampling() {
        let z = sample_perturbation(3, 0.0, 4);
        assert_eq!(z.norm(), 0.0);
        let a = sample_perturbation(3, 0.1, 4);
        assert_eq!(a, sample_perturbation(3, 0.1, 4));
        assert_ne!(a, sample_perturbation(3, 0.1, 5));
        for seed in 0..200 {
            assert!(sample_perturbation(4, 0.1, seed).norm() <= 0.1 + 1e-15);
        }
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
    }

    #[test]
    fn rescue_examples() {
        let e = |i: usize, n: usize| Vector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 });
        let k = rescue_linear(&e(0, 3), &e(1, 3), &e(0, 3)).unwrap();
        assert_eq!(k, e(1, 3) * e(0, 3).transpose());
        assert_eq!(rescue_linear(&e(0, 3), &Vector::zeros(3), &e(0, 3)).unwrap(), Matrix::zeros(3, 3));
        assert!(matches!(rescue_linear(&e(0, 3), &e(1, 3), &e(1, 3)), Err(Error::DegeneratePairing(_))));

        let k = rescue_symmetric(&e(0, 2), &e(0, 2)).unwrap();
        assert_eq!(k, e(0, 2) * e(0, 2).transpose());
        let k = rescue_symmetric(&e(0, 2), &e(1, 2)).unwrap();
        assert_eq!(k, Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert!(matches!(rescue_symmetric(&Vector::zeros(2), &e(1, 2)), Err(Error::ZeroInput(_))));
    }

    #[test]
    fn full_regularity_at_fold_and_pitchfork() {
        let tols = Tolerances::default();
        for name in ["fold1d", "pitchfork1d"] {
            let p = lookup(name).unwrap();
            let q = AugmentedPoint::new(v(&[0.0]), 0.0, v(&[1.0]));
            let r = check_full_regularity(&p, &q, &tols).unwrap();
            assert!(r.surjective && r.numerical_rank == 2, "{name}");
        }
        let p = lookup("fold1d").unwrap();
        let off = AugmentedPoint::new(v(&[1.0]), 0.0, v(&[1.0]));
        assert!(matches!(check_full_regularity(&p, &off, &tols), Err(Error::NotOnZeroSetOfG { .. })));
    }

    #[test]
    fn energy_perturbation() {
        let ep = crate::energy_pde::lookup_energy("quartic1d").unwrap();
        let sp = SymmetricPerturbation::new(v(&[0.0]), Matrix::from_element(1, 1, 0.5)).unwrap();
        let pe = perturb_energy(&ep, &sp).unwrap();
        let x = v(&[0.7]);
        let h0 = ep.problem().jacobian_xt(&x, 0.1).unwrap()[(0, 0)];
        let h1 = pe.problem().jacobian_xt(&x, 0.1).unwrap()[(0, 0)];
        assert!((h1 - h0 - 0.5).abs() < 1e-15);
        assert_eq!(pe.d3_dir(&x, 0.1, &x).unwrap(), ep.d3_dir(&x, 0.1, &x).unwrap());
        let g = pe.fd_gradient(&x, 0.1).unwrap();
        assert!((g[0] - pe.problem().eval_xt(&x, 0.1).unwrap()[0]).abs() < 1e-8);

        let id = perturb_energy(&ep, &SymmetricPerturbation::new(v(&[0.0]), Matrix::zeros(1, 1)).unwrap()).unwrap();
        assert_eq!(id.energy_value(&x, 0.2).unwrap(), ep.energy_value(&x, 0.2).unwrap());
    }

    #[test]
    fn allen_cahn_diagonal_form_matches_z() {
        use crate::energy_pde::{build_allen_cahn, AllenCahnConfig};
        let m = 6;
        let z: Vec<f64> = (0..m).map(|i| 0.05 * i as f64).collect();
        let base = build_allen_cahn(&AllenCahnConfig::new(m)).unwrap();
        let direct = build_allen_cahn(&AllenCahnConfig { z: Some(z.clone()), ..AllenCahnConfig::new(m) }).unwrap();
        let h = base.weight();
        let kform = Matrix::from_diagonal(&Vector::from_iterator(m, z.iter().map(|zi| h * zi)));
        let via = perturb_energy(&base, &SymmetricPerturbation::new(Vector::zeros(m), kform).unwrap()).unwrap();
        let u = Vector::from_fn(m, |i, _| 0.3 - 0.1 * i as f64);
        let a = direct.problem().eval_xt(&u, 0.3).unwrap();
        let b = via.problem().eval_xt(&u, 0.3).unwrap();
        assert!((a - b).norm() < 1e-12);
        assert!((direct.energy_value(&u, 0.3).unwrap() - via.energy_value(&u, 0.3).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn small_experiments() {
        let fold = lookup("fold1d").unwrap();
        let scan = ScanConfig::for_problem(&fold, (-1.0, 1.0));
        let r = genericity_experiment(&fold, 20, 0.1, 7, &scan).unwrap();
        assert_eq!(r.unperturbed_outcome, SampleOutcome::AllFoldsTransversal);
        assert_eq!(r.failure_fraction, 0.0);
        let pf = lookup("pitchfork1d").unwrap();
        let scan = ScanConfig::for_problem(&pf, (-1.0, 1.0));
        let r = genericity_experiment(&pf, 0, 0.0, 7, &scan).unwrap();
        assert_eq!(r.unperturbed_outcome, SampleOutcome::SomeNonTransversal);
        let r0 = genericity_experiment(&pf, 3, 0.0, 7, &scan).unwrap();
        assert!(r0.samples.iter().all(|s| s.outcome == r0.unperturbed_outcome));
    }

    #[test]
    fn fold_drift_is_linear_in_radius() {
        let base = lookup("fold1d").unwrap();
        // the fold of x^2 + k x - t + y sits at (-k/2, y - k^2/4)
        for r in [1e-1, 1e-2, 1e-3] {
            let s = sample_perturbation(1, r, 3);
            let f = fold_of(&perturb_problem(&base, &s).unwrap(), 1.0);
            let drift = (f.x[0].powi(2) + f.t.powi(2)).sqrt();
            assert!(drift <= 1.0 * r, "{drift} {r}");
        }
    }
}
