//! Rank-revealing linear algebra on dense matrices via the SVD.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Matrix, Vector};

const GAP_FLOOR: f64 = 1e-300;

/// Thresholds shared by every rank decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolPolicy {
    /// Singular values at or below `rank_tol * max(sigma_max, scale_floor)` count as zero.
    pub rank_tol: f64,
    /// A kernel is one-dimensional only if `gap_ratio >= gap_min`.
    pub gap_min: f64,
    /// Lower bound on the reference scale; keeps the test meaningful for 1x1 systems.
    pub scale_floor: f64,
}

impl Default for TolPolicy {
    fn default() -> Self {
        Self { rank_tol: 1e-8, gap_min: 1e4, scale_floor: 0.0 }
    }
}

impl TolPolicy {
    pub fn threshold(&self, sigma_max: f64) -> f64 {
        self.rank_tol * sigma_max.max(self.scale_floor)
    }
}

/// Smallest singular triple of a square matrix with its spectral gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelPair {
    #[serde(with = "crate::numeric::serde_vector")]
    pub v: Vector,
    #[serde(with = "crate::numeric::serde_vector")]
    pub w_star: Vector,
    pub sigma_min: f64,
    /// Second-smallest singular value; `f64::MAX` for 1x1 matrices.
    pub sigma_next: f64,
    pub sigma_max: f64,
    pub gap_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rows: usize,
    pub cols: usize,
    pub numerical_rank: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub surjective: bool,
    /// Absolute threshold the singular values were compared against.
    pub rank_tolerance_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Invertibility {
    pub invertible: bool,
    /// `sigma_max / sigma_min` (infinite for exactly singular input).
    pub condition: f64,
}

/// Full SVD with singular values sorted in descending order.
pub struct SortedSvd {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

pub fn svd(m: &Matrix) -> Result<SortedSvd> {
    if m.iter().any(|c| !c.is_finite()) {
        return Err(Error::SvdFailure);
    }
    let dec = m.clone().try_svd(true, true, f64::EPSILON, 0).ok_or(Error::SvdFailure)?;
    let u = dec.u.ok_or(Error::SvdFailure)?;
    let v_t = dec.v_t.ok_or(Error::SvdFailure)?;
    let k = dec.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let sigma = order.iter().map(|&i| dec.singular_values[i]).collect();
    let u_sorted = Matrix::from_fn(u.nrows(), k, |r, c| u[(r, order[c])]);
    let v_sorted = Matrix::from_fn(v_t.ncols(), k, |r, c| v_t[(order[c], r)]);
    Ok(SortedSvd { u: u_sorted, sigma, v: v_sorted })
}

fn first_significant(v: &Vector) -> f64 {
    v.iter().copied().find(|c| c.abs() > 1e-10).unwrap_or(0.0)
}

/// One inverse-iteration step on both singular vectors through the bordered
/// matrix `[J w; v^T 0]`, which stays well conditioned when `J` is singular.
fn bordered_refine(j: &Matrix, v: &Vector, w: &Vector) -> Option<(Vector, Vector)> {
    let n = j.nrows();
    let mut m = Matrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(j);
    m.view_mut((0, n), (n, 1)).copy_from(w);
    m.view_mut((n, 0), (1, n)).copy_from(&v.transpose());
    let mut rhs = Vector::zeros(n + 1);
    rhs[n] = 1.0;
    let phi = m.clone().lu().solve(&rhs)?.rows(0, n).into_owned();
    let psi = m.transpose().lu().solve(&rhs)?.rows(0, n).into_owned();
    let (pn, qn) = (phi.norm(), psi.norm());
    if !(pn.is_finite() && qn.is_finite() && pn > 0.0 && qn > 0.0) {
        return None;
    }
    let vr = phi / pn;
    let wr = psi / qn;
    let vr = if vr.dot(v) < 0.0 { -vr } else { vr };
    let wr = if wr.dot(w) < 0.0 { -wr } else { wr };
    Some((vr, wr))
}

/// Right and left singular vectors of the smallest singular value of `j`.
///
/// Sign convention: the first non-negligible component of `v` is positive;
/// `w_star` flips with it so that `J v = sigma_min w_star`.
pub fn kernel_pair(j: &Matrix) -> Result<KernelPair> {
    if !j.is_square() || j.nrows() == 0 {
        return Err(Error::DimensionMismatch { expected: j.nrows(), got: j.ncols() });
    }
    let n = j.nrows();
    let dec = svd(j)?;
    let mut v = dec.v.column(n - 1).into_owned();
    let mut w = dec.u.column(n - 1).into_owned();
    if first_significant(&v) < 0.0 {
        v = -v;
        w = -w;
    }
    let sigma_min = dec.sigma[n - 1];
    let sigma_next = if n >= 2 { dec.sigma[n - 2] } else { f64::MAX };
    if n >= 2 && sigma_next > 10.0 * sigma_min {
        if let Some((vr, wr)) = bordered_refine(j, &v, &w) {
            v = vr;
            w = wr;
        }
    }
    let gap_ratio = (sigma_next / sigma_min.max(GAP_FLOOR)).min(f64::MAX);
    Ok(KernelPair { v, w_star: w, sigma_min, sigma_next, sigma_max: dec.sigma[0], gap_ratio })
}

pub fn rank_report(m: &Matrix, tol: &TolPolicy) -> Result<RankReport> {
    let (rows, cols) = m.shape();
    let singular_values = if rows == 0 || cols == 0 { Vec::new() } else { svd(m)?.sigma };
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let threshold = tol.threshold(sigma_max);
    let numerical_rank = singular_values.iter().filter(|&&s| s > threshold).count();
    Ok(RankReport {
        rows,
        cols,
        numerical_rank,
        singular_values,
        surjective: numerical_rank == rows,
        rank_tolerance_used: threshold,
    })
}

pub fn is_invertible(j: &Matrix, tol: &TolPolicy) -> Result<Invertibility> {
    let kp = kernel_pair(j)?;
    let condition = if kp.sigma_min > 0.0 { kp.sigma_max / kp.sigma_min } else { f64::INFINITY };
    Ok(Invertibility { invertible: kp.sigma_min > tol.threshold(kp.sigma_max), condition })
}

/// Unit null vector of an `r x (r+1)` matrix (right singular vector of the
/// smallest singular value after padding to a square matrix).
pub fn null_vector(m: &Matrix) -> Result<Vector> {
    let (r, c) = m.shape();
    if c != r + 1 {
        return Err(Error::DimensionMismatch { expected: r + 1, got: c });
    }
    let mut padded = Matrix::zeros(c, c);
    padded.view_mut((0, 0), (r, c)).copy_from(m);
    let dec = svd(&padded)?;
    Ok(dec.v.column(c - 1).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).qr().q()
    }

    #[test]
    fn zero_scalar() {
        let kp = kernel_pair(&Matrix::zeros(1, 1)).unwrap();
        assert_eq!((kp.v[0].abs(), kp.w_star[0].abs(), kp.sigma_min), (1.0, 1.0, 0.0));
        assert_eq!(kp.v[0], 1.0);
    }

    #[test]
    fn diagonal_kernel() {
        let j = Matrix::from_diagonal(&Vector::from_vec(vec![0.0, 3.0]));
        let kp = kernel_pair(&j).unwrap();
        assert_eq!(kp.v.as_slice(), &[1.0, 0.0]);
        assert_eq!(kp.w_star[0].abs(), 1.0);
        assert_eq!(kp.sigma_min, 0.0);
        assert_eq!(kp.sigma_next, 3.0);
        assert!(kp.gap_ratio >= 1e2);
    }

    #[test]
    fn recovers_constructed_null_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_orthogonal(&mut rng, 3);
        let v = random_orthogonal(&mut rng, 3);
        let j = &u * Matrix::from_diagonal(&Vector::from_vec(vec![5.0, 2.0, 1e-14])) * v.transpose();
        let kp = kernel_pair(&j).unwrap();
        let expected = v.column(2).into_owned();
        let err = (&kp.v - &expected).norm().min((&kp.v + &expected).norm());
        assert!(err < 1e-12, "{err}");
        assert!(kp.sigma_min < 1e-13);
        assert!((kp.sigma_next - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank_examples() {
        let tol = TolPolicy::default();
        let r = rank_report(&Matrix::from_row_slice(1, 2, &[0.0, -1.0]), &tol).unwrap();
        assert!(r.numerical_rank == 1 && r.surjective);
        let r = rank_report(&Matrix::zeros(1, 2), &tol).unwrap();
        assert!(r.numerical_rank == 0 && !r.surjective);
        let r = rank_report(&Matrix::identity(3, 3), &tol).unwrap();
        assert!(r.numerical_rank == 3 && r.surjective);
    }

    #[test]
    fn invertibility_examples() {
        let tol = TolPolicy::default();
        let d = is_invertible(&Matrix::from_diagonal(&Vector::from_vec(vec![2.0, -1.0])), &tol).unwrap();
        assert!(d.invertible && (d.condition - 2.0).abs() < 1e-14);
        let d = is_invertible(&Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.0])), &tol).unwrap();
        assert!(!d.invertible);
        // Hilbert 4x4: the reference 2-norm condition number is 15513.7387...
        let h = Matrix::from_fn(4, 4, |i, j| 1.0 / (i + j + 1) as f64);
        let d = is_invertible(&h, &tol).unwrap();
        assert!(d.invertible);
        assert!((d.condition / 15513.738738929 - 1.0).abs() < 1e-8, "{}", d.condition);
    }

    #[test]
    fn null_vector_of_fold_differential() {
        let n = null_vector(&Matrix::from_row_slice(1, 2, &[2.0, -1.0])).unwrap();
        assert!((2.0 * n[0] - n[1]).abs() < 1e-15 && (n.norm() - 1.0).abs() < 1e-15);
    }

    fn matrix_strategy() -> impl Strategy<Value = Matrix> {
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-10.0f64..10.0, r * c).prop_map(move |d| Matrix::from_row_slice(r, c, &d))
        })
    }

    proptest! {
        #[test]
        fn svd_reconstructs(m in matrix_strategy()) {
            let dec = svd(&m).unwrap();
            let rec = &dec.u * Matrix::from_diagonal(&Vector::from_vec(dec.sigma.clone())) * dec.v.transpose();
            prop_assert!((&m - rec).norm() <= 1e-10 * m.norm().max(1e-300));
            prop_assert!(dec.sigma.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn transpose_swaps_kernel_and_cokernel(d in proptest::collection::vec(-5.0f64..5.0, 16), tiny in 0.0f64..1e-6) {
            // Replace the smallest singular value so the kernel is well separated.
            let dec = svd(&Matrix::from_row_slice(4, 4, &d)).unwrap();
            let mut sigma = dec.sigma.clone();
            sigma[3] = tiny;
            let j = &dec.u * Matrix::from_diagonal(&Vector::from_vec(sigma)) * dec.v.transpose();
            let a = kernel_pair(&j).unwrap();
            let b = kernel_pair(&j.transpose()).unwrap();
            prop_assume!(a.sigma_next > 1e-2);
            let close = |x: &Vector, y: &Vector| (x - y).norm().min((x + y).norm());
            prop_assert!(close(&a.v, &b.w_star) < 1e-8);
            prop_assert!(close(&a.w_star, &b.v) < 1e-8);
            prop_assert!((a.v.norm() - 1.0).abs() < 1e-12 && (a.w_star.norm() - 1.0).abs() < 1e-12);
            prop_assert!((&j * &a.v - &a.w_star * a.sigma_min).norm() < 1e-10 * j.norm());
        }

        #[test]
        fn rank_is_monotone_in_tolerance(m in matrix_strategy(), e1 in -16.0f64..0.0, e2 in -16.0f64..0.0) {
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let r_lo = rank_report(&m, &TolPolicy { rank_tol: 10f64.powf(lo), ..TolPolicy::default() }).unwrap();
            let r_hi = rank_report(&m, &TolPolicy { rank_tol: 10f64.powf(hi), ..TolPolicy::default() }).unwrap();
            prop_assert!(r_hi.numerical_rank <= r_lo.numerical_rank);
        }
    }
}
