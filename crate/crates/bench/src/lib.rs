//! Shared inputs for the benchmarks.

use foldcert_core::problem_model::fold_product;
use foldcert_core::{Matrix, ProblemSpec};

/// A well-conditioned `n x n` matrix with a one-dimensional kernel.
pub fn rank_one_deficient(n: usize) -> Matrix {
    let mut m = Matrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 + if i == j { n as f64 } else { 0.0 });
    let last = m.column(0) * 0.5 + m.column(1) * 0.25;
    m.set_column(n - 1, &last);
    m
}

pub fn product_problem(n: usize) -> ProblemSpec {
    fold_product(n)
}
