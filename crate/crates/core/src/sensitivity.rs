//! Post-optimality update `z̄ = z̃ − H⁻¹ B θ̄`.
//!
//! `B θ̄` is contracted directly from the factored posterior mean; neither
//! `B` nor `θ̄` is formed.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::calibration::PosteriorMean;
use crate::control::{LfOptimum, ObjectiveSpec};
use crate::error::{Error, Result};
use crate::linalg::weighted_norm;
use crate::models::{ControlVector, LinearForwardModel};

/// `B θ̄` for the tracking objective (`∇_uu J = M_u`, `∇_zu J = 0`):
///
/// ```text
/// (1/α) ∇S̃ᵀ M_u Σ_ℓ (u_ℓ − Σ_i b_{i,ℓ}(eᵀg_i) u_{i,ℓ})
///   + (1/α) Σ_ℓ (∇_uJ·u_ℓ) ζ⁻² M_z (z_ℓ − z̃)
///   − (1/α) Σ_{ℓ,i} b_{i,ℓ} (∇_uJ·u_{i,ℓ}) ζ⁻² M_z w_i
/// ```
pub fn apply_b_thetabar(
    pm: &PosteriorMean,
    optimum: &LfOptimum,
    spec: &ObjectiveSpec,
    model: &LinearForwardModel,
) -> Result<ControlVector> {
    let (m, n) = (spec.state_dim(), spec.control_dim());
    if pm.state_dim() != m {
        return Err(Error::dim("posterior state dimension", m, pm.state_dim()));
    }
    if pm.control_dim() != n {
        return Err(Error::dim("posterior control dimension", n, pm.control_dim()));
    }
    if pm.is_empty() {
        return Ok(DVector::zeros(n));
    }
    let zeta2 = pm.zeta * pm.zeta;
    let grad_u = spec.state_gradient(&optimum.u_tilde);
    let sums = pm.spectrum.column_sums();

    let mut state_sum = DVector::zeros(m);
    // coefficients of M_z (z_ℓ − z̃) and M_z w_i in the control-space terms
    let mut data_coef = DVector::zeros(pm.len());
    let mut w_coef = DVector::zeros(pm.len());
    for l in 0..pm.len() {
        let ul = pm.u.column(l);
        state_sum += ul;
        data_coef[l] = grad_u.dot(&ul);
        for i in 0..pm.len() {
            let uil = pm.u_shifted[i].column(l);
            let bil = pm.b[(i, l)];
            state_sum.axpy(-bil * sums[i], &uil, 1.0);
            w_coef[i] += bil * grad_u.dot(&uil);
        }
    }
    let mut out = model.jacobian_adjoint_apply(&(spec.state_mass() * state_sum))?;
    let mut dir = DVector::zeros(n);
    for l in 0..pm.len() {
        dir.axpy(data_coef[l], &(pm.controls.column(l) - &pm.z_tilde), 1.0);
    }
    dir -= &pm.spectrum.w * &w_coef;
    out += spec.control_mass() * dir / zeta2;
    Ok(out / pm.alpha)
}

#[derive(Debug, Clone, Serialize)]
pub struct UpdateDiagnostics {
    /// `‖B θ̄‖₂`.
    pub b_theta_norm: f64,
    /// `‖z̄ − z̃‖` in the `M_z` norm.
    pub step_norm: f64,
    /// Low-fidelity objective at `z̃` and `z̄`.
    pub lf_objective_tilde: f64,
    pub lf_objective_bar: f64,
    /// Relative residual of `H (z̃ − z̄) = B θ̄`.
    pub newton_residual: f64,
}

#[derive(Debug, Clone)]
pub struct UpdateResult {
    pub z_tilde: ControlVector,
    pub b_theta: ControlVector,
    pub z_bar: ControlVector,
    pub diagnostics: UpdateDiagnostics,
}

pub fn update_solution(
    pm: &PosteriorMean,
    optimum: &LfOptimum,
    spec: &ObjectiveSpec,
    model: &LinearForwardModel,
) -> Result<UpdateResult> {
    let b_theta = apply_b_thetabar(pm, optimum, spec, model)?;
    let step = optimum.hessian.solve(&b_theta)?;
    let z_bar = &optimum.z_tilde - &step;
    let residual = (optimum.hessian.apply(&step) - &b_theta).norm() / b_theta.norm().max(f64::MIN_POSITIVE);
    let lf_bar = spec.objective(&model.solve(&z_bar)?, &z_bar)?;
    let diagnostics = UpdateDiagnostics {
        b_theta_norm: b_theta.norm(),
        step_norm: weighted_norm(spec.control_mass(), &step),
        lf_objective_tilde: optimum.objective_value,
        lf_objective_bar: lf_bar,
        newton_residual: if b_theta.norm() == 0.0 { 0.0 } else { residual },
    };
    Ok(UpdateResult {
        z_tilde: optimum.z_tilde.clone(),
        b_theta,
        z_bar,
        diagnostics,
    })
}

/// One row of the objective table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveRow {
    pub name: String,
    /// `J(S(z), z)`, or `None` when no high-fidelity evaluation was available.
    pub value: Option<f64>,
}

/// High-fidelity objective `J(S(z), z)` for each named candidate.
pub fn hf_objective_report(
    candidates: &[(&str, &ControlVector)],
    hf_model: Option<&LinearForwardModel>,
    spec: &ObjectiveSpec,
) -> Result<Vec<ObjectiveRow>> {
    candidates
        .iter()
        .map(|(name, z)| {
            let value = match hf_model {
                Some(model) => Some(spec.objective(&model.solve(z)?, z)?),
                None => None,
            };
            Ok(ObjectiveRow {
                name: name.to_string(),
                value,
            })
        })
        .collect()
}

/// `M_z`-norm distance, the metric used in all reports.
pub fn control_distance(control_mass: &DMatrix<f64>, a: &ControlVector, b: &ControlVector) -> f64 {
    weighted_norm(control_mass, &(a - b))
}
