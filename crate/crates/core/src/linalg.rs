//! Small dense linear-algebra helpers shared by the CIS, subspace and oracle
//! eigenproblems and the response solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenpairs of a real symmetric matrix, eigenvalues ascending.
///
/// Eigenvector signs are fixed so that the component of largest magnitude is
/// positive (first such index on ties), which makes every downstream quantity
/// reproducible run to run.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(matrix: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::Structure(format!(
            "eigensolver needs a square matrix, got {}x{}",
            n,
            matrix.ncols()
        )));
    }
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("matrix has non-finite entries".into()));
    }
    let sym = (matrix + matrix.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).clone_owned();
        fix_sign(v.as_mut_slice());
        vectors.set_column(col, &v);
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Flip `v` so that its largest-magnitude entry is positive.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        // 1e-12 slack keeps near-ties on the lowest index
        if x.abs() > v[best].abs() + 1e-12 {
            best = i;
        }
    }
    if v.get(best).copied().unwrap_or(0.0) < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Solve `a x = b` by LU factorization.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::SingularSystem(format!("{}x{} LU factorization failed", a.nrows(), a.ncols())))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_with_sign_rule() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let e = sym_eigen(&m).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        // (1,-1)/sqrt2: tie on magnitude, first index made positive
        let s = 0.5_f64.sqrt();
        assert!((e.vectors[(0, 0)] - s).abs() < 1e-12);
        assert!((e.vectors[(1, 0)] + s).abs() < 1e-12);
        assert!((e.vectors[(0, 1)] - s).abs() < 1e-12);
        assert!((e.vectors[(1, 1)] - s).abs() < 1e-12);
    }

    #[test]
    fn eigen_rejects_nan() {
        let m = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(sym_eigen(&m).is_err());
    }
}
