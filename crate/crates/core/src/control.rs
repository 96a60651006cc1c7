//! Reduced-space linear-quadratic control problem
//! `min ½(S(z) − T)ᵀ M_u (S(z) − T) + (β/2) zᵀ M_z z`.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::linalg::{check_len, inner};
use crate::models::{ControlVector, LinearForwardModel, StateVector};

/// Tracking-type objective data.
#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    target: StateVector,
    beta: f64,
    state_mass: DMatrix<f64>,
    control_mass: DMatrix<f64>,
}

impl ObjectiveSpec {
    pub fn new(
        target: StateVector,
        beta: f64,
        state_mass: DMatrix<f64>,
        control_mass: DMatrix<f64>,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::param("beta", format!("must be positive, got {beta}")));
        }
        check_len("target", &target, state_mass.nrows())?;
        if control_mass.nrows() != control_mass.ncols() {
            return Err(Error::dim("control mass columns", control_mass.nrows(), control_mass.ncols()));
        }
        Ok(Self {
            target,
            beta,
            state_mass,
            control_mass,
        })
    }

    pub fn target(&self) -> &StateVector {
        &self.target
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn state_mass(&self) -> &DMatrix<f64> {
        &self.state_mass
    }

    pub fn control_mass(&self) -> &DMatrix<f64> {
        &self.control_mass
    }

    pub fn state_dim(&self) -> usize {
        self.state_mass.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.control_mass.nrows()
    }

    pub fn objective(&self, u: &StateVector, z: &ControlVector) -> Result<f64> {
        check_len("state", u, self.state_dim())?;
        check_len("control", z, self.control_dim())?;
        let r = u - &self.target;
        Ok(0.5 * inner(&self.state_mass, &r, &r) + 0.5 * self.beta * inner(&self.control_mass, z, z))
    }

    /// `∇_u J = M_u (u − T)`, returned as a column vector.
    pub fn state_gradient(&self, u: &StateVector) -> StateVector {
        &self.state_mass * (u - &self.target)
    }

    fn check_model(&self, model: &LinearForwardModel) -> Result<()> {
        if model.state_dim() != self.state_dim() {
            return Err(Error::dim("model state dimension", self.state_dim(), model.state_dim()));
        }
        if model.control_dim() != self.control_dim() {
            return Err(Error::dim("model control dimension", self.control_dim(), model.control_dim()));
        }
        Ok(())
    }
}

/// Reduced objective `J(S(z), z)`.
pub fn reduced_objective(spec: &ObjectiveSpec, model: &LinearForwardModel, z: &ControlVector) -> Result<f64> {
    spec.objective(&model.solve(z)?, z)
}

/// `∇S̃ᵀ M_u (S̃(z) − T) + β M_z z`.
pub fn gradient(spec: &ObjectiveSpec, model: &LinearForwardModel, z: &ControlVector) -> Result<ControlVector> {
    spec.check_model(model)?;
    let u = model.solve(z)?;
    Ok(model.jacobian_adjoint_apply(&spec.state_gradient(&u))? + spec.beta * (&spec.control_mass * z))
}

/// `H w = ∇S̃ᵀ M_u ∇S̃ w + β M_z w`.
pub fn hessian_apply(spec: &ObjectiveSpec, model: &LinearForwardModel, w: &ControlVector) -> Result<ControlVector> {
    spec.check_model(model)?;
    let du = model.jacobian_apply(w)?;
    Ok(model.jacobian_adjoint_apply(&(&spec.state_mass * du))? + spec.beta * (&spec.control_mass * w))
}

/// Reduced Hessian assembled column by column and Cholesky-factorized.
#[derive(Debug, Clone)]
pub struct ReducedHessian {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl ReducedHessian {
    pub fn assemble(spec: &ObjectiveSpec, model: &LinearForwardModel) -> Result<Self> {
        spec.check_model(model)?;
        let n = spec.control_dim();
        // H = Pᵀ M_u P + β M_z with the dense Jacobian P; same as n hessian_apply calls
        let p = model.jacobian_dense()?;
        let h = p.tr_mul(&(&spec.state_mass * &p)) + &spec.control_mass * spec.beta;
        let h = crate::linalg::symmetrize(&h);
        debug_assert_eq!(h.nrows(), n);
        Self::from_matrix(h)
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let chol = matrix.clone().cholesky().ok_or_else(|| Error::Singular {
            operator: "reduced Hessian (not positive definite)".into(),
        })?;
        Ok(Self { matrix, chol })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, w: &ControlVector) -> ControlVector {
        &self.matrix * w
    }

    /// `H⁻¹ r` with one refinement sweep.
    pub fn solve(&self, r: &ControlVector) -> Result<ControlVector> {
        check_len("hessian rhs", r, self.matrix.nrows())?;
        let mut x = self.chol.solve(r);
        let res = r - &self.matrix * &x;
        x += self.chol.solve(&res);
        Ok(x)
    }
}

pub fn hessian_solve(hessian: &ReducedHessian, r: &ControlVector) -> Result<ControlVector> {
    hessian.solve(r)
}

/// Minimizer of the reduced problem together with the data the sensitivity
/// analysis needs at that point.
#[derive(Debug, Clone)]
pub struct LfOptimum {
    pub z_tilde: ControlVector,
    pub u_tilde: StateVector,
    pub gradient_norm: f64,
    pub objective_value: f64,
    pub hessian: ReducedHessian,
}

/// Relative first-order tolerance accepted for the returned minimizer.
pub const OPTIMALITY_TOL: f64 = 1e-8;

/// Solves the normal equations `H z = ∇S̃ᵀ M_u T`.
pub fn solve_lf_optimum(spec: &ObjectiveSpec, model: &LinearForwardModel) -> Result<LfOptimum> {
    let hessian = ReducedHessian::assemble(spec, model)?;
    let rhs = model.jacobian_adjoint_apply(&(&spec.state_mass * &spec.target))?;
    let z_tilde = hessian.solve(&rhs)?;
    let u_tilde = model.solve(&z_tilde)?;
    let g = gradient(spec, model, &z_tilde)?;
    let gradient_norm = g.norm();
    if gradient_norm > OPTIMALITY_TOL * rhs.norm().max(1.0) {
        return Err(Error::Singular {
            operator: format!("reduced Hessian (gradient norm {gradient_norm:.3e} after solve)"),
        });
    }
    let objective_value = spec.objective(&u_tilde, &z_tilde)?;
    Ok(LfOptimum {
        z_tilde,
        u_tilde,
        gradient_norm,
        objective_value,
        hessian,
    })
}

impl LfOptimum {
    /// Rebuilds the optimum data at a given (e.g. persisted) control.
    pub fn at(spec: &ObjectiveSpec, model: &LinearForwardModel, z_tilde: ControlVector) -> Result<Self> {
        let hessian = ReducedHessian::assemble(spec, model)?;
        let u_tilde = model.solve(&z_tilde)?;
        let gradient_norm = gradient(spec, model, &z_tilde)?.norm();
        let objective_value = spec.objective(&u_tilde, &z_tilde)?;
        Ok(Self {
            z_tilde,
            u_tilde,
            gradient_norm,
            objective_value,
            hessian,
        })
    }
}
