//! Linear forward models `K u = M z` and their Jacobians.

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{Error, Result};
use crate::linalg::check_len;
use crate::mesh::{assemble_advection, assemble_mass, assemble_stiffness, Mesh1D};

pub type ControlVector = DVector<f64>;
pub type StateVector = DVector<f64>;

/// Steady linear PDE `K u = M z` with a cached factorization.
///
/// The low-fidelity model uses the diffusion operator for `K`; the
/// high-fidelity model adds advection. Because the map is linear its
/// Jacobian is `K⁻¹ M` everywhere.
#[derive(Debug, Clone)]
pub struct LinearForwardModel {
    label: String,
    system: DMatrix<f64>,
    coupling: DMatrix<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    lu_t: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl LinearForwardModel {
    pub fn from_matrices(
        label: impl Into<String>,
        system: DMatrix<f64>,
        coupling: DMatrix<f64>,
    ) -> Result<Self> {
        let label = label.into();
        let n = system.nrows();
        if system.ncols() != n {
            return Err(Error::dim(format!("{label} system columns"), n, system.ncols()));
        }
        if coupling.nrows() != n {
            return Err(Error::dim(format!("{label} coupling rows"), n, coupling.nrows()));
        }
        let lu = system.clone().lu();
        let lu_t = system.transpose().lu();
        let singular = || Error::Singular {
            operator: label.clone(),
        };
        // LU::is_invertible only catches exact zeros on the diagonal of U.
        let diag = lu.u().diagonal().abs();
        if !lu.is_invertible() || diag.min() <= 1e-14 * diag.max() {
            return Err(singular());
        }
        Ok(Self {
            label,
            system,
            coupling,
            lu,
            lu_t,
        })
    }

    /// Low-fidelity model: `-κ u'' = z` with Robin ends.
    pub fn diffusion(mesh: &Mesh1D, kappa: f64, h_robin: f64) -> Result<Self> {
        let k = assemble_stiffness(mesh, kappa, h_robin)?;
        Self::from_matrices("diffusion operator", k, assemble_mass(mesh))
    }

    /// High-fidelity model: `-κ u'' + v u' = z` with Robin ends.
    pub fn advection_diffusion(mesh: &Mesh1D, kappa: f64, v: f64, h_robin: f64) -> Result<Self> {
        if !v.is_finite() {
            return Err(Error::param("v", "velocity must be finite"));
        }
        let k = assemble_stiffness(mesh, kappa, h_robin)? + assemble_advection(mesh, v);
        Self::from_matrices("advection-diffusion operator", k, assemble_mass(mesh))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn state_dim(&self) -> usize {
        self.system.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.coupling.ncols()
    }

    pub fn system(&self) -> &DMatrix<f64> {
        &self.system
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    fn solve_system(&self, rhs: &DVector<f64>, transpose: bool) -> Result<DVector<f64>> {
        let lu = if transpose { &self.lu_t } else { &self.lu };
        let a = if transpose {
            self.system.transpose()
        } else {
            self.system.clone()
        };
        let mut x = lu.solve(rhs).ok_or_else(|| Error::Singular {
            operator: self.label.clone(),
        })?;
        // one sweep of iterative refinement
        let r = rhs - &a * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
        Ok(x)
    }

    /// `u = K⁻¹ M z`.
    pub fn solve(&self, z: &ControlVector) -> Result<StateVector> {
        check_len("control", z, self.control_dim())?;
        self.solve_system(&(&self.coupling * z), false)
    }

    /// `∇S w = K⁻¹ M w`.
    pub fn jacobian_apply(&self, w: &ControlVector) -> Result<StateVector> {
        self.solve(w)
    }

    /// `∇Sᵀ r = Mᵀ K⁻ᵀ r`.
    pub fn jacobian_adjoint_apply(&self, r: &StateVector) -> Result<ControlVector> {
        check_len("state", r, self.state_dim())?;
        let y = self.solve_system(r, true)?;
        Ok(self.coupling.tr_mul(&y))
    }

    /// Dense Jacobian `K⁻¹ M`, one column per control basis function.
    pub fn jacobian_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.control_dim();
        let mut out = DMatrix::zeros(self.state_dim(), n);
        for j in 0..n {
            let col = self.solve_system(&self.coupling.column(j).into_owned(), false)?;
            out.set_column(j, &col);
        }
        Ok(out)
    }

    /// Relative residual `‖K u − M z‖ / ‖M z‖`.
    pub fn relative_residual(&self, z: &ControlVector, u: &StateVector) -> f64 {
        let rhs = &self.coupling * z;
        (&self.system * u - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE)
    }
}

pub fn lf_solve(model: &LinearForwardModel, z: &ControlVector) -> Result<StateVector> {
    model.solve(z)
}

pub fn hf_solve(model: &LinearForwardModel, z: &ControlVector) -> Result<StateVector> {
    model.solve(z)
}

/// Paired control/discrepancy observations `(z_ℓ, y_ℓ)`, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyData {
    controls: DMatrix<f64>,
    discrepancies: DMatrix<f64>,
}

/// Relative singular-value cutoff used to detect dependent controls.
pub const RANK_TOL: f64 = 1e-10;

impl DiscrepancyData {
    pub fn new(controls: DMatrix<f64>, discrepancies: DMatrix<f64>) -> Result<Self> {
        let count = controls.ncols();
        if discrepancies.ncols() != count {
            return Err(Error::dim("discrepancy columns", count, discrepancies.ncols()));
        }
        if count > controls.nrows() {
            return Err(Error::Assumption(format!(
                "{count} controls cannot be linearly independent in dimension {}",
                controls.nrows()
            )));
        }
        if controls.iter().chain(discrepancies.iter()).any(|x| !x.is_finite()) {
            return Err(Error::param("data", "non-finite entries in controls or discrepancies"));
        }
        if count > 0 {
            let sv = controls.clone().singular_values();
            let (lo, hi) = (sv.min(), sv.max());
            if hi == 0.0 || lo <= RANK_TOL * hi {
                return Err(Error::Assumption(format!(
                    "controls are not linearly independent (singular value ratio {:.3e}); \
                     drop or replace a data pair",
                    if hi == 0.0 { 0.0 } else { lo / hi }
                )));
            }
        }
        Ok(Self {
            controls,
            discrepancies,
        })
    }

    /// No observations; calibration then returns the prior mean.
    pub fn empty(control_dim: usize, state_dim: usize) -> Self {
        Self {
            controls: DMatrix::zeros(control_dim, 0),
            discrepancies: DMatrix::zeros(state_dim, 0),
        }
    }

    pub fn len(&self) -> usize {
        self.controls.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn control_dim(&self) -> usize {
        self.controls.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.discrepancies.nrows()
    }

    pub fn controls(&self) -> &DMatrix<f64> {
        &self.controls
    }

    pub fn discrepancies(&self) -> &DMatrix<f64> {
        &self.discrepancies
    }
}

/// Evaluates `y_ℓ = S(z_ℓ) − S̃(z_ℓ)` for each column of `controls`.
pub fn generate_discrepancy_data(
    lf: &LinearForwardModel,
    hf: &LinearForwardModel,
    controls: &DMatrix<f64>,
) -> Result<DiscrepancyData> {
    if lf.state_dim() != hf.state_dim() || lf.control_dim() != hf.control_dim() {
        return Err(Error::dim("high-fidelity state", lf.state_dim(), hf.state_dim()));
    }
    if controls.nrows() != lf.control_dim() {
        return Err(Error::dim("control rows", lf.control_dim(), controls.nrows()));
    }
    // rank check first so a bad design fails before any expensive solve
    DiscrepancyData::new(controls.clone(), DMatrix::zeros(lf.state_dim(), controls.ncols()))?;
    let mut y = DMatrix::zeros(lf.state_dim(), controls.ncols());
    for (l, z) in controls.column_iter().enumerate() {
        let z = z.into_owned();
        let col = hf.solve(&z)? - lf.solve(&z)?;
        y.set_column(l, &col);
    }
    DiscrepancyData::new(controls.clone(), y)
}
