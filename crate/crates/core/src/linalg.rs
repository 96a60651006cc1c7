//! Small dense helpers shared by the solvers and the oracles.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors stored column-wise, same order as `values`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(a: &DMatrix<f64>, label: &str) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::dim(format!("{label} (square)"), a.nrows(), a.ncols()));
        }
        let sym = symmetrize(a);
        let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
            .ok_or_else(|| Error::Eigen(label.to_string()))?;
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(a.nrows(), n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Eigen(label.to_string()));
        }
        Ok(Self { values, vectors })
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `V f(Λ) Vᵀ` for a scalar function `f` of the eigenvalues.
    pub fn function(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = scale_columns(&self.vectors, |j| f(self.values[j]));
        symmetrize(&(scaled * self.vectors.transpose()))
    }

    /// `V f(Λ) Vᵀ x` without forming the matrix.
    pub fn apply_function(&self, x: &DVector<f64>, f: impl Fn(f64) -> f64) -> DVector<f64> {
        let mut coeffs = self.vectors.tr_mul(x);
        for (c, &rho) in coeffs.iter_mut().zip(self.values.iter()) {
            *c *= f(rho);
        }
        &self.vectors * coeffs
    }
}

fn scale_columns(a: &DMatrix<f64>, f: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let mut out = a.clone();
    for j in 0..a.ncols() {
        let s = f(j);
        out.column_mut(j).scale_mut(s);
    }
    out
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Symmetric square root and inverse square root of an SPD matrix.
pub fn spd_sqrt_pair(a: &DMatrix<f64>, label: &str) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymEigen::new(a, label)?;
    if eig.min() <= 0.0 {
        return Err(Error::Singular {
            operator: label.to_string(),
        });
    }
    Ok((eig.function(f64::sqrt), eig.function(|x| 1.0 / x.sqrt())))
}

/// `xᵀ A y`.
pub fn inner(a: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    x.dot(&(a * y))
}

/// Norm weighted by an SPD matrix, `sqrt(xᵀ A x)`.
pub fn weighted_norm(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    inner(a, x, x).max(0.0).sqrt()
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// `‖a − b‖ / max(‖b‖, floor)` in the Frobenius/Euclidean norm.
pub fn rel_diff_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn rel_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub(crate) fn check_len(what: &str, v: &DVector<f64>, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::dim(what, expected, v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("vector", format!("{what} has non-finite entries")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let eig = SymEigen::new(&a, "a").unwrap();
        assert!(eig.values[0] <= eig.values[1] && eig.values[1] <= eig.values[2]);
        assert!(rel_diff_mat(&eig.function(|x| x), &a) < 1e-14);
    }

    #[test]
    fn sqrt_pair_inverts() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (s, si) = spd_sqrt_pair(&a, "a").unwrap();
        assert!(rel_diff_mat(&(&s * &s), &a) < 1e-14);
        assert!((&s * &si - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(spd_sqrt_pair(&a, "a"), Err(Error::Singular { .. })));
    }
}
