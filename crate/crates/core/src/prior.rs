//! Prior on the discrepancy coefficients.
//!
//! The state-space weight is `L = D M⁻¹ D` with `D = γ(ε K_N + M)` the
//! discretized `γ(−εΔ + I)` under zero Neumann conditions. Every solve with
//! `L` or a shifted `αL + λI` goes through one dense eigendecomposition.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, SymEigen};
use crate::mesh::{assemble_mass, assemble_stiffness, Mesh1D};

/// Scalar hyperparameters of the discrepancy prior and noise model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PriorSpec {
    /// Magnitude coefficient of the elliptic operator.
    pub gamma: f64,
    /// Smoothness coefficient of the elliptic operator.
    pub epsilon: f64,
    /// Controller length scale.
    pub zeta: f64,
    /// Noise variance.
    pub alpha: f64,
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("epsilon", self.epsilon),
            ("zeta", self.zeta),
            ("alpha", self.alpha),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// SPD state weight `L` held in spectral form `L = V diag(ρ) Vᵀ`, `VᵀV = I`.
#[derive(Debug, Clone)]
pub struct EllipticPrior {
    matrix: DMatrix<f64>,
    eigen: SymEigen,
}

impl EllipticPrior {
    /// Wraps an arbitrary SPD matrix as the state weight.
    pub fn from_matrix(l: DMatrix<f64>) -> Result<Self> {
        let l = symmetrize(&l);
        let eigen = SymEigen::new(&l, "state weight L")?;
        if eigen.min() <= 0.0 {
            return Err(Error::Singular {
                operator: "state weight L (not positive definite)".into(),
            });
        }
        Ok(Self { matrix: l, eigen })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Eigenvalues `ρ_j`, ascending.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigen.values
    }

    /// Orthonormal eigenvectors `l_j` as columns.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigen.vectors
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    /// `L⁻¹ x`.
    pub fn solve(&self, x: &DVector<f64>) -> DVector<f64> {
        self.eigen.apply_function(x, |rho| 1.0 / rho)
    }

    /// `(αL + λI)⁻¹ x`.
    pub fn solve_shifted(&self, alpha: f64, lambda: f64, x: &DVector<f64>) -> DVector<f64> {
        self.eigen.apply_function(x, |rho| 1.0 / (alpha * rho + lambda))
    }

    /// `L^{-1/2} x` with the symmetric square root.
    pub fn apply_inv_sqrt(&self, x: &DVector<f64>) -> DVector<f64> {
        self.eigen.apply_function(x, |rho| 1.0 / rho.sqrt())
    }

    pub fn apply_sqrt(&self, x: &DVector<f64>) -> DVector<f64> {
        self.eigen.apply_function(x, f64::sqrt)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.eigen.function(|rho| 1.0 / rho)
    }

    pub fn sqrt(&self) -> DMatrix<f64> {
        self.eigen.function(f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> DMatrix<f64> {
        self.eigen.function(|rho| 1.0 / rho.sqrt())
    }
}

/// Builds `L = D M⁻¹ D` on the given mesh.
pub fn build_elliptic_prior(mesh: &Mesh1D, gamma: f64, epsilon: f64) -> Result<EllipticPrior> {
    for (name, v) in [("gamma", gamma), ("epsilon", epsilon)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::param(name, format!("must be positive, got {v}")));
        }
    }
    let mass = assemble_mass(mesh);
    let k_neumann = assemble_stiffness(mesh, 1.0, 0.0)?;
    let d = (k_neumann * epsilon + &mass) * gamma;
    let chol = mass.cholesky().ok_or_else(|| Error::Singular {
        operator: "state mass matrix".into(),
    })?;
    let l = &d * chol.solve(&d);
    EllipticPrior::from_matrix(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rel_diff, rel_diff_mat};

    #[test]
    fn spectral_form_is_orthonormal_and_reconstructs() {
        let mesh = Mesh1D::uniform(200).unwrap();
        let prior = build_elliptic_prior(&mesh, 1.0, 1e-2).unwrap();
        let v = prior.eigenvectors();
        let gram = v.tr_mul(v);
        assert!((gram - DMatrix::identity(200, 200)).amax() <= 1e-10);
        let rebuilt = v * DMatrix::from_diagonal(prior.eigenvalues()) * v.transpose();
        assert!(rel_diff_mat(&rebuilt, prior.matrix()) <= 1e-8);
        assert!(prior.eigenvalues().min() > 0.0);
    }

    #[test]
    fn vanishing_smoothness_limit() {
        let mesh = Mesh1D::uniform(30).unwrap();
        let gamma = 1.7;
        let prior = build_elliptic_prior(&mesh, gamma, 1e-12).unwrap();
        let m = assemble_mass(&mesh);
        assert!((prior.matrix() - &m * (gamma * gamma)).norm() / m.norm() <= 1e-6);
    }

    #[test]
    fn eigenvalues_scale_with_gamma_squared() {
        let mesh = Mesh1D::uniform(40).unwrap();
        let a = build_elliptic_prior(&mesh, 1.0, 1e-2).unwrap();
        let b = build_elliptic_prior(&mesh, 2.0, 1e-2).unwrap();
        assert!(rel_diff(b.eigenvalues(), &(a.eigenvalues() * 4.0)) <= 1e-12);
    }

    #[test]
    fn eigenvalues_dominate_mass() {
        let mesh = Mesh1D::uniform(50).unwrap();
        let prior = build_elliptic_prior(&mesh, 1.0, 1e-2).unwrap();
        let mass_min = SymEigen::new(&assemble_mass(&mesh), "m").unwrap().min();
        assert!(prior.eigenvalues().min() >= mass_min * (1.0 - 1e-10));
    }

    #[test]
    fn solves_invert() {
        let mesh = Mesh1D::uniform(25).unwrap();
        let prior = build_elliptic_prior(&mesh, 1.0, 1e-2).unwrap();
        let x = mesh.interpolate(|t| (3.0 * t).cos() + t);
        assert!(rel_diff(&prior.apply(&prior.solve(&x)), &x) <= 1e-9);
        let (alpha, lambda) = (0.01, 2.5);
        let y = prior.solve_shifted(alpha, lambda, &x);
        assert!(rel_diff(&(prior.apply(&y) * alpha + &y * lambda), &x) <= 1e-9);
        let h = prior.apply_inv_sqrt(&x);
        assert!(rel_diff(&prior.apply_sqrt(&prior.apply_sqrt(&h)), &prior.apply_sqrt(&x)) <= 1e-9);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mesh = Mesh1D::uniform(5).unwrap();
        assert!(build_elliptic_prior(&mesh, 0.0, 1.0).is_err());
        assert!(build_elliptic_prior(&mesh, 1.0, -1.0).is_err());
        let spec = PriorSpec { gamma: 1.0, epsilon: 1e-2, zeta: 2.0, alpha: -1.0 };
        assert!(spec.validate().is_err());
        assert!(EllipticPrior::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    }
}
