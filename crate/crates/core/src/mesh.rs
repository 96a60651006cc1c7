//! Linear finite elements on a uniform mesh of the unit interval.
//!
//! All element integrals are evaluated in closed form. Matrices are dense;
//! at a few hundred nodes that is cheaper than bookkeeping for a band solver.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Uniform mesh of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    nodes: Vec<f64>,
}

impl Mesh1D {
    pub fn uniform(n_nodes: usize) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::param("n_nodes", format!("need at least 2 nodes, got {n_nodes}")));
        }
        let h = 1.0 / (n_nodes - 1) as f64;
        let nodes = (0..n_nodes).map(|i| i as f64 * h).collect();
        Ok(Self { nodes })
    }

    /// Accepts explicit node coordinates, which must form a uniform grid on `[0, 1]`.
    pub fn from_nodes(nodes: &[f64]) -> Result<Self> {
        let reference = Self::uniform(nodes.len())?;
        let h = reference.spacing();
        for (x, r) in nodes.iter().zip(&reference.nodes) {
            if !x.is_finite() || (x - r).abs() > 1e-12 * h.max(1.0) {
                return Err(Error::param(
                    "nodes",
                    "only uniform meshes of the unit interval are supported",
                ));
            }
        }
        Ok(reference)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.nodes.len() - 1) as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Nodal interpolant of a function.
    pub fn interpolate(&self, f: impl Fn(f64) -> f64) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_iterator(self.n_nodes(), self.nodes.iter().map(|&x| f(x)))
    }

    fn assemble(&self, local: [[f64; 2]; 2]) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut a = DMatrix::zeros(n, n);
        for e in 0..n - 1 {
            for (r, row) in local.iter().enumerate() {
                for (c, val) in row.iter().enumerate() {
                    a[(e + r, e + c)] += val;
                }
            }
        }
        a
    }
}

/// Consistent mass matrix, entries `∫ φ_i φ_j`.
pub fn assemble_mass(mesh: &Mesh1D) -> DMatrix<f64> {
    let h = mesh.spacing();
    mesh.assemble([[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]])
}

/// `∫ κ φ_i' φ_j'` plus the Robin term `h_robin φ_i φ_j` at both end points.
///
/// With `h_robin = 0` this is the pure Neumann stiffness, singular with the
/// constants in its kernel.
pub fn assemble_stiffness(mesh: &Mesh1D, kappa: f64, h_robin: f64) -> Result<DMatrix<f64>> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::param("kappa", format!("must be positive, got {kappa}")));
    }
    if !(h_robin >= 0.0 && h_robin.is_finite()) {
        return Err(Error::param("h_robin", format!("must be non-negative, got {h_robin}")));
    }
    let k = kappa / mesh.spacing();
    let mut a = mesh.assemble([[k, -k], [-k, k]]);
    let n = mesh.n_nodes();
    a[(0, 0)] += h_robin;
    a[(n - 1, n - 1)] += h_robin;
    Ok(a)
}

/// Advection operator with entries `v ∫ φ_j' φ_i` (row `i`, column `j`).
pub fn assemble_advection(mesh: &Mesh1D, v: f64) -> DMatrix<f64> {
    let half = 0.5 * v;
    mesh.assemble([[-half, half], [-half, half]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn mass_three_nodes() {
        let m = assemble_mass(&Mesh1D::uniform(3).unwrap());
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[1. / 6., 1. / 12., 0., 1. / 12., 1. / 3., 1. / 12., 0., 1. / 12., 1. / 6.],
        );
        assert!((m - expected).abs().max() < 1e-15);
    }

    #[test]
    fn mass_partition_of_unity() {
        for n in [2, 3, 7, 50] {
            let m = assemble_mass(&Mesh1D::uniform(n).unwrap());
            assert!((m.sum() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn mass_is_spd_at_200() {
        let m = assemble_mass(&Mesh1D::uniform(200).unwrap());
        assert_eq!(m, m.transpose());
        let eig = crate::linalg::SymEigen::new(&m, "mass").unwrap();
        assert!(eig.min() > 0.0);
        assert!(m.cholesky().is_some());
    }

    #[test]
    fn stiffness_three_nodes() {
        let mesh = Mesh1D::uniform(3).unwrap();
        let k = assemble_stiffness(&mesh, 1.0, 0.0).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[2., -2., 0., -2., 4., -2., 0., -2., 2.]);
        assert!((&k - expected).abs().max() < 1e-14);
        let kr = assemble_stiffness(&mesh, 1.0, 2.0).unwrap();
        let diff = kr - k;
        assert_eq!(diff[(0, 0)], 2.0);
        assert_eq!(diff[(2, 2)], 2.0);
        assert_eq!(diff.abs().sum(), 4.0);
    }

    #[test]
    fn neumann_stiffness_kernel_is_constant() {
        let k = assemble_stiffness(&Mesh1D::uniform(11).unwrap(), 1.0, 0.0).unwrap();
        let ones = DVector::from_element(11, 1.0);
        assert!((k * ones).amax() < 1e-12);
    }

    #[test]
    fn robin_stiffness_is_spd() {
        let k = assemble_stiffness(&Mesh1D::uniform(200).unwrap(), 1.0, 2.0).unwrap();
        assert_eq!(k, k.transpose());
        assert!(k.cholesky().is_some());
    }

    #[test]
    fn stiffness_rejects_bad_kappa() {
        let mesh = Mesh1D::uniform(4).unwrap();
        assert!(assemble_stiffness(&mesh, 0.0, 1.0).is_err());
        assert!(assemble_stiffness(&mesh, -1.0, 1.0).is_err());
        assert!(assemble_stiffness(&mesh, 1.0, -1.0).is_err());
    }

    #[test]
    fn advection_rows() {
        let mesh = Mesh1D::uniform(3).unwrap();
        assert_eq!(assemble_advection(&mesh, 0.0).abs().max(), 0.0);
        let a = assemble_advection(&mesh, 0.5);
        assert_eq!(a.row(1).iter().copied().collect::<Vec<_>>(), vec![-0.25, 0.0, 0.25]);
        assert_eq!(a.row(0).iter().copied().collect::<Vec<_>>(), vec![-0.25, 0.25, 0.0]);
        assert_eq!(a.row(2).iter().copied().collect::<Vec<_>>(), vec![0.0, -0.25, 0.25]);
        let big = assemble_advection(&Mesh1D::uniform(20).unwrap(), 1.3);
        for i in 1..19 {
            assert_eq!(big[(i, i)], 0.0);
        }
    }

    #[test]
    fn mesh_validation() {
        assert!(Mesh1D::uniform(1).is_err());
        let m = Mesh1D::uniform(5).unwrap();
        assert!(m.nodes().windows(2).all(|w| w[1] > w[0]));
        assert!(Mesh1D::from_nodes(&[0.0, 0.25, 0.5, 0.75, 1.0]).is_ok());
        assert!(Mesh1D::from_nodes(&[0.0, 0.2, 0.5, 0.75, 1.0]).is_err());
    }
}
