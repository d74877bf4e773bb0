//! Thin wrappers over sparse CSR storage and the LDL^T factorization used
//! for every symmetric positive-definite solve in the crate.

use sprs::{CsMat, TriMat};
use sprs_ldl::LdlNumeric;

use crate::{Error, Result};

/// Builds a CSR matrix from (row, col, value) triplets, summing duplicates.
/// Assembly order is fixed by the caller, so results are bit-reproducible.
pub fn csr_from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> CsMat<f64> {
    let mut tri = TriMat::new((n, n));
    for &(r, c, v) in triplets {
        tri.add_triplet(r, c, v);
    }
    tri.to_csr()
}

/// y = A x for square CSR `a`.
pub fn mul_vec(a: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.cols(), x.len());
    let mut y = vec![0.0; a.rows()];
    for (row, vec) in a.outer_iterator().enumerate() {
        let mut acc = 0.0;
        for (col, &v) in vec.iter() {
            acc += v * x[col];
        }
        y[row] = acc;
    }
    y
}

/// x^T A y.
pub fn quad_form(a: &CsMat<f64>, x: &[f64], y: &[f64]) -> f64 {
    let ay = mul_vec(a, y);
    dot(x, &ay)
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Maximum absolute asymmetry |A - A^T| over stored entries.
pub fn asymmetry(a: &CsMat<f64>) -> f64 {
    let at = a.transpose_view().to_csr();
    let mut worst = 0.0f64;
    for (row, vec) in a.outer_iterator().enumerate() {
        for (col, &v) in vec.iter() {
            let vt = at.get(row, col).copied().unwrap_or(0.0);
            worst = worst.max((v - vt).abs());
        }
    }
    worst
}

/// LDL^T factorization of a sparse SPD matrix, in natural (identity) order
/// for determinism. Positive definiteness is asserted via the D diagonal.
/// Systems of size 0 and 1 are handled directly (the factorization backend
/// requires n > 1).
pub enum SpdFactor {
    Empty,
    Scalar(f64),
    Ldl { ldl: LdlNumeric<f64, usize>, n: usize },
}

impl SpdFactor {
    pub fn new(mat: &CsMat<f64>) -> Result<Self> {
        match mat.rows() {
            0 => Ok(SpdFactor::Empty),
            1 => {
                let d = mat.get(0, 0).copied().unwrap_or(0.0);
                if !(d > 0.0) {
                    return Err(Error::LinearSolve(
                        "matrix is not positive definite (non-positive pivot)".into(),
                    ));
                }
                Ok(SpdFactor::Scalar(d))
            }
            n => {
                let ldl = LdlNumeric::new(mat.view()).map_err(|e| {
                    Error::LinearSolve(format!("LDL^T factorization failed: {e}"))
                })?;
                if ldl.d().iter().any(|&d| !(d > 0.0)) {
                    return Err(Error::LinearSolve(
                        "matrix is not positive definite (non-positive pivot)".into(),
                    ));
                }
                Ok(SpdFactor::Ldl { ldl, n })
            }
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            SpdFactor::Empty => Vec::new(),
            SpdFactor::Scalar(d) => vec![rhs[0] / d],
            SpdFactor::Ldl { ldl, n } => {
                debug_assert_eq!(rhs.len(), *n);
                ldl.solve(rhs)
            }
        }
    }

    pub fn size(&self) -> usize {
        match self {
            SpdFactor::Empty => 0,
            SpdFactor::Scalar(_) => 1,
            SpdFactor::Ldl { n, .. } => *n,
        }
    }
}

/// Dense symmetric solve by Cholesky, for the small reduced systems of the
/// active-set oracle (<= 12 unknowns) and active-set subproblems.
pub fn dense_spd_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::LinearSolve(
                        "dense Cholesky: non-positive pivot".into(),
                    ));
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    // forward then backward substitution
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_factor_solves() {
        // 2D Laplacian-ish SPD matrix
        let t = vec![
            (0usize, 0usize, 4.0),
            (0, 1, -1.0),
            (1, 0, -1.0),
            (1, 1, 4.0),
            (1, 2, -1.0),
            (2, 1, -1.0),
            (2, 2, 4.0),
        ];
        let a = csr_from_triplets(3, &t);
        let f = SpdFactor::new(&a).unwrap();
        let x = f.solve(&[1.0, 2.0, 3.0]);
        let r = mul_vec(&a, &x);
        for (ri, bi) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn spd_factor_rejects_indefinite() {
        let t = vec![(0usize, 0usize, 1.0), (1, 1, -1.0)];
        let a = csr_from_triplets(2, &t);
        assert!(SpdFactor::new(&a).is_err());
    }

    #[test]
    fn dense_solve_matches() {
        let a = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let x = dense_spd_solve(&a, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
    }
}
