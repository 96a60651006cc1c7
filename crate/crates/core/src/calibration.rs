//! Closed-form posterior mean of the affine discrepancy
//! `δ(z, θ) = θ₀ + Σᵢ (θᵢ · M_z z) eᵢ`.
//!
//! The coefficient vector lives in `ℝ^{m(n+1)}` and is never formed; the
//! posterior mean is kept as `N` prior-preconditioned data vectors `u_ℓ`,
//! `N²` shifted solves `u_{i,ℓ}`, and a handful of scalars derived from the
//! `N × N` controller Gram matrix `G`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_len, SymEigen};
use crate::models::{ControlVector, DiscrepancyData, StateVector};
use crate::prior::{EllipticPrior, PriorSpec};

/// Coefficients `θ = (θ₀, θ₁, …, θ_m)` split into the intercept block and
/// an `m × n` matrix whose row `i` is `θᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaBlocks {
    pub intercept: DVector<f64>,
    pub slopes: DMatrix<f64>,
}

impl ThetaBlocks {
    pub fn zeros(state_dim: usize, control_dim: usize) -> Self {
        Self {
            intercept: DVector::zeros(state_dim),
            slopes: DMatrix::zeros(state_dim, control_dim),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.intercept.len()
    }

    pub fn control_dim(&self) -> usize {
        self.slopes.ncols()
    }

    pub fn len(&self) -> usize {
        self.state_dim() * (self.control_dim() + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat layout: intercepts first, then `θ₁`, …, `θ_m`.
    pub fn to_flat(&self) -> DVector<f64> {
        let (m, n) = (self.state_dim(), self.control_dim());
        let mut out = DVector::zeros(self.len());
        out.rows_mut(0, m).copy_from(&self.intercept);
        for i in 0..m {
            for j in 0..n {
                out[m + i * n + j] = self.slopes[(i, j)];
            }
        }
        out
    }

    pub fn from_flat(flat: &DVector<f64>, state_dim: usize, control_dim: usize) -> Result<Self> {
        let p = state_dim * (control_dim + 1);
        if flat.len() != p {
            return Err(Error::dim("theta length", p, flat.len()));
        }
        let m = state_dim;
        Ok(Self {
            intercept: flat.rows(0, m).into_owned(),
            slopes: DMatrix::from_fn(m, control_dim, |i, j| flat[m + i * control_dim + j]),
        })
    }

    /// `δ(z, θ)`.
    pub fn eval(&self, z: &ControlVector, control_mass: &DMatrix<f64>) -> StateVector {
        &self.intercept + &self.slopes * (control_mass * z)
    }
}

/// Spectral data of `G = eeᵀ + ζ⁻²(Z − z̃eᵀ)ᵀ M_z (Z − z̃eᵀ)`.
#[derive(Debug, Clone)]
pub struct GSpectrum {
    pub g: DMatrix<f64>,
    /// `λ_i`, ascending.
    pub eigenvalues: DVector<f64>,
    /// `g_i` as columns.
    pub eigenvectors: DMatrix<f64>,
    /// `w_i = Z g_i − (eᵀg_i) z̃` as columns.
    pub w: DMatrix<f64>,
    /// `s_i = eᵀg_i − ζ⁻² w_iᵀ M_z z̃`.
    pub s: DVector<f64>,
}

/// Relative eigenvalue cutoff below which `G` counts as singular.
pub const G_CONDITION_TOL: f64 = 1e-12;

impl GSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `eᵀ g_i`.
    pub fn column_sums(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.eigenvectors.column_iter().map(|c| c.sum()))
    }

    #[cfg(test)]
    pub(crate) fn flip_sign(&mut self, i: usize) {
        self.eigenvectors.column_mut(i).neg_mut();
        self.w.column_mut(i).neg_mut();
        self.s[i] = -self.s[i];
    }
}

pub fn build_g_spectrum(
    controls: &DMatrix<f64>,
    z_tilde: &ControlVector,
    control_mass: &DMatrix<f64>,
    zeta: f64,
) -> Result<GSpectrum> {
    let n = control_mass.nrows();
    check_len("z_tilde", z_tilde, n)?;
    if controls.nrows() != n {
        return Err(Error::dim("control rows", n, controls.nrows()));
    }
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::param("zeta", format!("must be positive, got {zeta}")));
    }
    let count = controls.ncols();
    if count == 0 {
        return Ok(GSpectrum {
            g: DMatrix::zeros(0, 0),
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
            w: DMatrix::zeros(n, 0),
            s: DVector::zeros(0),
        });
    }
    let zeta2 = zeta * zeta;
    let mut shifted = controls.clone();
    for mut col in shifted.column_iter_mut() {
        col -= z_tilde;
    }
    let g = DMatrix::from_element(count, count, 1.0)
        + shifted.tr_mul(&(control_mass * &shifted)) / zeta2;
    let g = crate::linalg::symmetrize(&g);
    let eig = SymEigen::new(&g, "controller Gram matrix G")?;
    if eig.min() <= G_CONDITION_TOL * eig.max() {
        return Err(Error::Assumption(format!(
            "controller data nearly dependent: λ_min(G)/λ_max(G) = {:.3e}; drop a data pair",
            eig.min() / eig.max()
        )));
    }
    let sums = DVector::from_iterator(count, eig.vectors.column_iter().map(|c| c.sum()));
    let mut w = controls * &eig.vectors;
    for (i, mut col) in w.column_iter_mut().enumerate() {
        col.axpy(-sums[i], z_tilde, 1.0);
    }
    let mz_tilde = control_mass * z_tilde;
    let s = DVector::from_fn(count, |i, _| sums[i] - w.column(i).dot(&mz_tilde) / zeta2);
    Ok(GSpectrum {
        g,
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
        w,
        s,
    })
}

/// Factored posterior mean `θ̄`.
#[derive(Debug, Clone)]
pub struct PosteriorMean {
    pub alpha: f64,
    pub zeta: f64,
    pub z_tilde: ControlVector,
    /// Controller data `Z`, one column per observation.
    pub controls: DMatrix<f64>,
    pub spectrum: GSpectrum,
    /// `a_ℓ`.
    pub a: DVector<f64>,
    /// `b_{i,ℓ}` at row `i`, column `ℓ`.
    pub b: DMatrix<f64>,
    /// `u_ℓ = L⁻¹ y_ℓ` as columns.
    pub u: DMatrix<f64>,
    /// `u_shifted[i]` holds `u_{i,ℓ} = (αL + λ_i I)⁻¹ u_ℓ` in column `ℓ`.
    pub u_shifted: Vec<DMatrix<f64>>,
}

pub fn calibrate(
    data: &DiscrepancyData,
    prior_spec: &PriorSpec,
    prior: &EllipticPrior,
    z_tilde: &ControlVector,
    control_mass: &DMatrix<f64>,
) -> Result<PosteriorMean> {
    prior_spec.validate()?;
    let spectrum = build_g_spectrum(data.controls(), z_tilde, control_mass, prior_spec.zeta)?;
    calibrate_with_spectrum(data, prior_spec, prior, z_tilde, control_mass, spectrum)
}

pub(crate) fn calibrate_with_spectrum(
    data: &DiscrepancyData,
    prior_spec: &PriorSpec,
    prior: &EllipticPrior,
    z_tilde: &ControlVector,
    control_mass: &DMatrix<f64>,
    spectrum: GSpectrum,
) -> Result<PosteriorMean> {
    let (m, n, count) = (prior.dim(), control_mass.nrows(), data.len());
    if data.state_dim() != m {
        return Err(Error::dim("discrepancy rows", m, data.state_dim()));
    }
    if data.control_dim() != n {
        return Err(Error::dim("control rows", n, data.control_dim()));
    }
    check_len("z_tilde", z_tilde, n)?;
    let alpha = prior_spec.alpha;
    let zeta2 = prior_spec.zeta * prior_spec.zeta;

    let mz_tilde = control_mass * z_tilde;
    let mut shifted = data.controls().clone();
    for mut col in shifted.column_iter_mut() {
        col -= z_tilde;
    }
    let a = DVector::from_fn(count, |l, _| 1.0 - mz_tilde.dot(&shifted.column(l)) / zeta2);
    // (z_ℓ − z̃)ᵀ M_z Z g_i at (ℓ, i)
    let cross = shifted.tr_mul(&(control_mass * (data.controls() * &spectrum.eigenvectors)));
    let sums = spectrum.column_sums();
    let b = DMatrix::from_fn(count, count, |i, l| cross[(l, i)] / zeta2 + sums[i] * a[l]);

    let mut u = DMatrix::zeros(m, count);
    for (l, y) in data.discrepancies().column_iter().enumerate() {
        u.set_column(l, &prior.solve(&y.into_owned()));
    }
    let u_shifted = spectrum
        .eigenvalues
        .iter()
        .map(|&lambda| {
            let mut out = DMatrix::zeros(m, count);
            for (l, ul) in u.column_iter().enumerate() {
                out.set_column(l, &prior.solve_shifted(alpha, lambda, &ul.into_owned()));
            }
            out
        })
        .collect();

    Ok(PosteriorMean {
        alpha,
        zeta: prior_spec.zeta,
        z_tilde: z_tilde.clone(),
        controls: data.controls().clone(),
        spectrum,
        a,
        b,
        u,
        u_shifted,
    })
}

impl PosteriorMean {
    pub fn len(&self) -> usize {
        self.controls.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.z_tilde.len()
    }

    fn zeta2(&self) -> f64 {
        self.zeta * self.zeta
    }

    /// `δ(z, θ̄) = (1/α) Σ_ℓ [(a_ℓ + ζ⁻²(z_ℓ − z̃)ᵀM_z z) u_ℓ
    ///            − Σ_i b_{i,ℓ} (s_i + ζ⁻² w_iᵀM_z z) u_{i,ℓ}]`.
    pub fn eval_delta(&self, z: &ControlVector, control_mass: &DMatrix<f64>) -> Result<StateVector> {
        check_len("control", z, self.control_dim())?;
        if control_mass.nrows() != self.control_dim() {
            return Err(Error::dim("control mass", self.control_dim(), control_mass.nrows()));
        }
        let mz = control_mass * z;
        let zeta2 = self.zeta2();
        let mut out = DVector::zeros(self.state_dim());
        for l in 0..self.len() {
            let slope = (self.controls.column(l) - &self.z_tilde).dot(&mz) / zeta2;
            out.axpy(self.a[l] + slope, &self.u.column(l), 1.0);
            for i in 0..self.len() {
                let coef = self.spectrum.s[i] + self.spectrum.w.column(i).dot(&mz) / zeta2;
                out.axpy(-self.b[(i, l)] * coef, &self.u_shifted[i].column(l), 1.0);
            }
        }
        Ok(out / self.alpha)
    }

    /// Materializes `θ̄` in block form. Costs `m·n` storage; meant for
    /// verification at small sizes.
    pub fn to_theta(&self) -> ThetaBlocks {
        let (m, n) = (self.state_dim(), self.control_dim());
        let zeta2 = self.zeta2();
        let mut theta = ThetaBlocks::zeros(m, n);
        for l in 0..self.len() {
            let ul = self.u.column(l);
            let dz = self.controls.column(l) - &self.z_tilde;
            theta.intercept.axpy(self.a[l], &ul, 1.0);
            theta.slopes.ger(1.0 / zeta2, &ul, &dz, 1.0);
            for i in 0..self.len() {
                let uil = self.u_shifted[i].column(l);
                let bil = self.b[(i, l)];
                theta.intercept.axpy(-bil * self.spectrum.s[i], &uil, 1.0);
                theta.slopes.ger(-bil / zeta2, &uil, &self.spectrum.w.column(i), 1.0);
            }
        }
        theta.intercept /= self.alpha;
        theta.slopes /= self.alpha;
        theta
    }

    /// Posterior covariance applied to `v`:
    /// `Σ v = M_θ⁻¹ v − Σ_{i,j} λ_i/(λ_i + αρ_j) ψ_{i,j} ψ_{i,j}ᵀ v`,
    /// evaluated blockwise through solves with `L` and `M_z`.
    pub fn covariance_apply(
        &self,
        prior: &EllipticPrior,
        control_mass: &DMatrix<f64>,
        v: &ThetaBlocks,
    ) -> Result<ThetaBlocks> {
        let (m, n) = (self.state_dim(), self.control_dim());
        if v.state_dim() != m || v.control_dim() != n {
            return Err(Error::dim("theta length", m * (n + 1), v.len()));
        }
        if prior.dim() != m {
            return Err(Error::dim("state weight", m, prior.dim()));
        }
        let mut out = prior_covariance_apply(prior, control_mass, &self.z_tilde, self.zeta, v)?;
        let zeta2 = self.zeta2();
        let rho = prior.eigenvalues();
        let lvecs = prior.eigenvectors();
        for i in 0..self.len() {
            let lambda = self.spectrum.eigenvalues[i];
            let si = self.spectrum.s[i];
            let wi = self.spectrum.w.column(i);
            // ψ_{i,j}ᵀ v = l_jᵀ (s_i v₀ + ζ⁻² V₁ w_i) / √(λ_i ρ_j)
            let r = &v.intercept * si + &v.slopes * wi / zeta2;
            let mut coeffs = lvecs.tr_mul(&r);
            for (j, c) in coeffs.iter_mut().enumerate() {
                // d_ij / (λ_i ρ_j) folds both 1/√(λρ) normalizations
                *c *= lambda / (lambda + self.alpha * rho[j]) / (lambda * rho[j]);
            }
            let comb = lvecs * coeffs;
            out.intercept.axpy(-si, &comb, 1.0);
            out.slopes.ger(-1.0 / zeta2, &comb, &wi, 1.0);
        }
        Ok(out)
    }
}

/// Prior covariance `M_θ⁻¹ v`, using `M_θ = L ⊗ K` with
/// `K⁻¹ = [[1 + ζ⁻² z̃ᵀM_z z̃, −ζ⁻² z̃ᵀ], [−ζ⁻² z̃, ζ⁻² M_z⁻¹]]`.
pub fn prior_covariance_apply(
    prior: &EllipticPrior,
    control_mass: &DMatrix<f64>,
    z_tilde: &ControlVector,
    zeta: f64,
    v: &ThetaBlocks,
) -> Result<ThetaBlocks> {
    let n = control_mass.nrows();
    check_len("z_tilde", z_tilde, n)?;
    let zeta2 = zeta * zeta;
    let chol = control_mass.clone().cholesky().ok_or_else(|| Error::Singular {
        operator: "control mass matrix".into(),
    })?;
    let quad = z_tilde.dot(&(control_mass * z_tilde));
    let top = &v.intercept * (1.0 + quad / zeta2) - &v.slopes * z_tilde / zeta2;
    // V₁ M_z⁻¹ = (M_z⁻¹ V₁ᵀ)ᵀ
    let slopes_minv = chol.solve(&v.slopes.transpose()).transpose();
    let mut bottom = slopes_minv / zeta2;
    bottom.ger(-1.0 / zeta2, &v.intercept, z_tilde, 1.0);
    let mut out = ThetaBlocks {
        intercept: prior.solve(&top),
        slopes: DMatrix::zeros(bottom.nrows(), bottom.ncols()),
    };
    for (j, col) in bottom.column_iter().enumerate() {
        out.slopes.set_column(j, &prior.solve(&col.into_owned()));
    }
    Ok(out)
}
