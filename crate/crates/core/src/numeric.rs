//! Dense vector/matrix aliases and a few helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Largest absolute entry of a matrix (0 for empty matrices).
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn all_finite(v: &Vector) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Solves `a * x = b` by partial-pivot LU. Returns `None` when the
/// factorization is exactly singular or produces non-finite values.
pub fn lu_solve(a: &Matrix, b: &Vector) -> Option<Vector> {
    let x = a.clone().lu().solve(b)?;
    all_finite(&x).then_some(x)
}

/// Stacks `x` and a trailing scalar into one vector.
pub fn join(x: &Vector, t: f64) -> Vector {
    let n = x.len();
    Vector::from_fn(n + 1, |i, _| if i < n { x[i] } else { t })
}

/// Lexicographic comparison used for deterministic ordering of roots.
pub fn lex_cmp(a: &Vector, b: &Vector) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// serde adapter storing a `DVector<f64>` as a plain JSON array.
pub mod serde_vector {
    use super::Vector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        let data = Vec::<f64>::deserialize(d)?;
        Ok(Vector::from_vec(data))
    }
}

/// serde adapter for `Vec<DVector<f64>>`.
pub mod serde_vectors {
    use super::Vector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vector], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = v.iter().map(|c| c.as_slice()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vector>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Ok(rows.into_iter().map(Vector::from_vec).collect())
    }
}

/// serde adapter storing a `DMatrix<f64>` as a list of rows.
pub mod serde_matrix {
    use super::Matrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}
