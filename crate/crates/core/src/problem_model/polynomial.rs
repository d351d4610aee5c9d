//! Random quadratic systems with a prescribed zero and prescribed
//! singular structure at that zero. Used as test beds for the
//! transversality equivalences.

use rand::Rng;

use super::{Point, ProblemSpec};
use crate::numeric::{Matrix, Vector};

/// Structure of `D_x F` and the derivatives at the constructed zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularKind {
    /// `D_x F` invertible.
    Regular,
    /// One-dimensional kernel, all three conditions hold generically.
    Transversal,
    /// One-dimensional kernel with `d_t F` in the range of `D_x F`.
    T2Failure,
    /// One-dimensional kernel with `<D_x^2 F[v,v], w*> = 0`.
    T3Failure,
    /// Two-dimensional kernel.
    DoubleKernel,
}

/// `F(x,t) = A d + s b + (d^T Q_i d)_i + s C d`, with `d = x - x0`, `s = t - t0`.
#[derive(Debug, Clone)]
pub struct QuadraticSystem {
    pub x0: Vector,
    pub t0: f64,
    pub a: Matrix,
    pub b: Vector,
    pub q: Vec<Matrix>,
    pub c: Matrix,
    pub kind: SingularKind,
    /// Right and left null vectors of `A` for the singular kinds.
    pub kernel: Option<(Vector, Vector)>,
}

fn random_matrix<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    random_matrix(rng, n, n).qr().q()
}

impl QuadraticSystem {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, kind: SingularKind) -> Self {
        assert!(n >= 1);
        let kind = if kind == SingularKind::DoubleKernel && n < 2 { SingularKind::Transversal } else { kind };
        let u = random_orthogonal(rng, n);
        let v = random_orthogonal(rng, n);
        let mut s: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        match kind {
            SingularKind::Regular => {}
            SingularKind::DoubleKernel => {
                s[n - 1] = 0.0;
                s[n - 2] = 0.0;
            }
            _ => s[n - 1] = 0.0,
        }
        let a = &u * Matrix::from_diagonal(&Vector::from_vec(s)) * v.transpose();
        let x0 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let t0 = rng.random_range(-1.0..1.0);
        let mut b = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let mut q: Vec<Matrix> = (0..n)
            .map(|_| {
                let m = random_matrix(rng, n, n);
                (&m + m.transpose()) * 0.5
            })
            .collect();
        let c = random_matrix(rng, n, n);
        let kernel = (kind != SingularKind::Regular).then(|| (v.column(n - 1).into_owned(), u.column(n - 1).into_owned()));

        if let Some((kv, kw)) = &kernel {
            match kind {
                SingularKind::T2Failure => {
                    let r = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                    b = &a * r;
                }
                SingularKind::T3Failure => {
                    let vv = kv * kv.transpose();
                    let defect: f64 = (0..n).map(|i| kw[i] * kv.dot(&(&q[i] * kv))).sum();
                    for (i, qi) in q.iter_mut().enumerate() {
                        *qi -= &vv * (kw[i] * defect);
                    }
                }
                _ => {}
            }
        }
        Self { x0, t0, a, b, q, c, kind, kernel }
    }

    pub fn center(&self) -> Point {
        Point::new(self.x0.clone(), self.t0)
    }

    pub fn problem(&self) -> ProblemSpec {
        let n = self.x0.len();
        let sys = std::sync::Arc::new(self.clone());
        let (s1, s2, s3, s4, s5) = (sys.clone(), sys.clone(), sys.clone(), sys.clone(), sys.clone());
        ProblemSpec::new(format!("quadratic{n}d"), n, (self.t0 - 5.0, self.t0 + 5.0), move |x, t| s1.f(x, t))
            .expect("valid")
            .with_smoothness_order(3)
            .expect("valid")
            .with_jacobian(move |x, t| s2.jac(x, t))
            .with_dt(move |x, _| {
                let d = x - &s3.x0;
                &s3.b + &s3.c * d
            })
            .with_d2x_dir(move |_, _, v| Vector::from_fn(n, |i, _| 2.0 * v.dot(&(&s4.q[i] * v))))
            .with_dt_dx_dir(move |_, _, v| &s5.c * v)
            .with_scan_box(vec![(-3.0, 3.0); n])
    }

    fn f(&self, x: &Vector, t: f64) -> Vector {
        let d = x - &self.x0;
        let s = t - self.t0;
        let n = d.len();
        let quad = Vector::from_fn(n, |i, _| d.dot(&(&self.q[i] * &d)));
        &self.a * &d + &self.b * s + quad + &self.c * &d * s
    }

    fn jac(&self, x: &Vector, t: f64) -> Matrix {
        let d = x - &self.x0;
        let s = t - self.t0;
        let n = d.len();
        let mut j = &self.a + &self.c * s;
        for i in 0..n {
            let row = (&self.q[i] * &d) * 2.0;
            for k in 0..n {
                j[(i, k)] += row[k];
            }
        }
        j
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn center_is_a_zero_with_prescribed_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in [SingularKind::Regular, SingularKind::Transversal, SingularKind::T2Failure, SingularKind::T3Failure] {
            let sys = QuadraticSystem::random(&mut rng, 4, kind);
            let p = sys.problem();
            let c = sys.center();
            assert!(p.eval(&c).unwrap().norm() < 1e-15);
            if let Some((v, w)) = &sys.kernel {
                let j = p.jacobian_x(&c).unwrap();
                assert!((&j * v).norm() < 1e-14);
                assert!((j.transpose() * w).norm() < 1e-14);
                if kind == SingularKind::T2Failure {
                    assert!(p.dt_f(&c).unwrap().dot(w).abs() < 1e-14);
                }
                if kind == SingularKind::T3Failure {
                    assert!(p.d2x_dir(&c, v).unwrap().dot(w).abs() < 1e-13);
                }
            }
        }
    }
}
