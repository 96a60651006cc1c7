//! Dense reference implementations in the full coefficient space `ℝᵖ`,
//! `p = m(n + 1)`.
//!
//! Everything here forms `p × p` matrices explicitly and is limited to small
//! problems. These routes share no code with the factored solver beyond
//! matrix assembly, so agreement between the two is meaningful.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::calibration::{build_g_spectrum, calibrate, GSpectrum, ThetaBlocks};
use crate::control::{solve_lf_optimum, LfOptimum, ObjectiveSpec};
use crate::error::{Error, Result};
use crate::linalg::{kron, rel_diff, rel_diff_mat, spd_sqrt_pair, SymEigen};
use crate::mesh::{assemble_mass, assemble_stiffness, Mesh1D};
use crate::models::{ControlVector, DiscrepancyData, LinearForwardModel};
use crate::prior::{EllipticPrior, PriorSpec};
use crate::sensitivity::apply_b_thetabar;

/// Largest coefficient dimension the dense routes accept.
pub const DENSE_LIMIT: usize = 1000;

fn guard(m: usize, n: usize) -> Result<usize> {
    let p = m * (n + 1);
    if p > DENSE_LIMIT {
        return Err(Error::SizeGuard { p, limit: DENSE_LIMIT });
    }
    Ok(p)
}

fn row(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v.as_slice())
}

fn col(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn blocks(tl: &DMatrix<f64>, tr: &DMatrix<f64>, bl: &DMatrix<f64>, br: &DMatrix<f64>) -> DMatrix<f64> {
    let (r0, c0) = tl.shape();
    let mut out = DMatrix::zeros(r0 + bl.nrows(), c0 + tr.ncols());
    out.view_mut((0, 0), tl.shape()).copy_from(tl);
    out.view_mut((0, c0), tr.shape()).copy_from(tr);
    out.view_mut((r0, 0), bl.shape()).copy_from(bl);
    out.view_mut((r0, c0), br.shape()).copy_from(br);
    out
}

/// Prior precision `M_θ`.
pub fn m_theta(l: &DMatrix<f64>, z_tilde: &ControlVector, mz: &DMatrix<f64>, zeta: f64) -> Result<DMatrix<f64>> {
    let (m, n) = (l.nrows(), mz.nrows());
    guard(m, n)?;
    let mzt = mz * z_tilde;
    let br = mz * (zeta * zeta) + &mzt * mzt.transpose();
    Ok(blocks(l, &kron(l, &row(&mzt)), &kron(l, &col(&mzt)), &kron(l, &br)))
}

/// Factor `C` with `C Cᵀ = M_θ`.
pub fn c_factor(l: &DMatrix<f64>, z_tilde: &ControlVector, mz: &DMatrix<f64>, zeta: f64) -> Result<DMatrix<f64>> {
    let (m, n) = (l.nrows(), mz.nrows());
    guard(m, n)?;
    let (l_half, _) = spd_sqrt_pair(l, "L")?;
    let (mz_half, _) = spd_sqrt_pair(mz, "M_z")?;
    let mzt = mz * z_tilde;
    Ok(blocks(
        &l_half,
        &DMatrix::zeros(m, m * n),
        &kron(&l_half, &col(&mzt)),
        &kron(&l_half, &(mz_half * zeta)),
    ))
}

/// Closed-form `C⁻¹`.
pub fn c_inverse(l: &DMatrix<f64>, z_tilde: &ControlVector, mz: &DMatrix<f64>, zeta: f64) -> Result<DMatrix<f64>> {
    let (m, n) = (l.nrows(), mz.nrows());
    guard(m, n)?;
    let (_, l_ihalf) = spd_sqrt_pair(l, "L")?;
    let (mz_half, mz_ihalf) = spd_sqrt_pair(mz, "M_z")?;
    Ok(blocks(
        &l_ihalf,
        &DMatrix::zeros(m, m * n),
        &kron(&l_ihalf, &col(&(mz_half * z_tilde * (-1.0 / zeta)))),
        &kron(&l_ihalf, &(mz_ihalf / zeta)),
    ))
}

/// `A_z = [I_m | I_m ⊗ zᵀ M_z]`, so that `δ(z, θ) = A_z θ`.
pub fn delta_operator(z: &ControlVector, mz: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    guard(m, mz.nrows())?;
    let eye = DMatrix::identity(m, m);
    let r = row(&(mz * z));
    let mut out = DMatrix::zeros(m, m * (mz.nrows() + 1));
    out.view_mut((0, 0), (m, m)).copy_from(&eye);
    out.view_mut((0, m), (m, m * mz.nrows())).copy_from(&kron(&eye, &r));
    Ok(out)
}

/// Stacked data operator `A` and data vector `b`.
pub fn data_operator(data: &DiscrepancyData, mz: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (m, n, count) = (data.state_dim(), data.control_dim(), data.len());
    let p = guard(m, n)?;
    let mut a = DMatrix::zeros(m * count, p);
    let mut b = DVector::zeros(m * count);
    for l in 0..count {
        let al = delta_operator(&data.controls().column(l).into_owned(), mz, m)?;
        a.view_mut((l * m, 0), (m, p)).copy_from(&al);
        b.rows_mut(l * m, m).copy_from(&data.discrepancies().column(l));
    }
    Ok((a, b))
}

/// Posterior mean and covariance by direct inversion.
#[derive(Debug, Clone)]
pub struct DensePosterior {
    pub m_theta: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub theta_bar: DVector<f64>,
    pub alpha: f64,
}

pub fn dense_oracle_posterior(
    data: &DiscrepancyData,
    l: &DMatrix<f64>,
    z_tilde: &ControlVector,
    mz: &DMatrix<f64>,
    zeta: f64,
    alpha: f64,
) -> Result<DensePosterior> {
    let m_theta = m_theta(l, z_tilde, mz, zeta)?;
    let (a, b) = data_operator(data, mz)?;
    let precision = &m_theta + a.tr_mul(&a) / alpha;
    let chol = precision.cholesky().ok_or_else(|| Error::Singular {
        operator: "dense posterior precision".into(),
    })?;
    let sigma = chol.inverse();
    let theta_bar = chol.solve(&(a.tr_mul(&b) / alpha));
    Ok(DensePosterior {
        m_theta,
        a,
        b,
        sigma,
        theta_bar,
        alpha,
    })
}

impl DensePosterior {
    /// Gradient of `(1/2α)‖Aθ − b‖² + ½ θᵀ M_θ θ`.
    pub fn neg_log_posterior_gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.a.tr_mul(&(&self.a * theta - &self.b)) / self.alpha + &self.m_theta * theta
    }
}

/// `θᵀ M_θ θ`.
pub fn prior_weighted_norm(
    l: &DMatrix<f64>,
    zeta: f64,
    z_tilde: &ControlVector,
    mz: &DMatrix<f64>,
    theta: &ThetaBlocks,
) -> Result<f64> {
    let mt = m_theta(l, z_tilde, mz, zeta)?;
    let flat = theta.to_flat();
    Ok(flat.dot(&(mt * &flat)))
}

/// Dense mixed derivative
/// `B = ∇S̃ᵀ ∇_uu J [I_m | I_m ⊗ z̃ᵀM_z] + [0 | ∇_u J ⊗ M_z]`.
pub fn build_b_dense(optimum: &LfOptimum, spec: &ObjectiveSpec, model: &LinearForwardModel) -> Result<DMatrix<f64>> {
    let (m, n) = (spec.state_dim(), spec.control_dim());
    let p = guard(m, n)?;
    let mz = spec.control_mass();
    let jac = model.jacobian_dense()?;
    let first = jac.tr_mul(spec.state_mass()) * delta_operator(&optimum.z_tilde, mz, m)?;
    let grad_u = spec.state_gradient(&optimum.u_tilde);
    let mut second = DMatrix::zeros(n, p);
    second.view_mut((0, m), (n, m * n)).copy_from(&kron(&row(&grad_u), mz));
    Ok(first + second)
}

/// Dense gradient `∇_z Ĵ(z, θ)` of `J(S̃(z) + δ(z, θ), z)`, used for
/// finite-difference checks of `B`.
pub fn perturbed_gradient(
    spec: &ObjectiveSpec,
    model: &LinearForwardModel,
    z: &ControlVector,
    theta: &ThetaBlocks,
) -> Result<DVector<f64>> {
    let mz = spec.control_mass();
    let jac = perturbed_affine(model, mz, theta)?;
    let u = model.solve(z)? + theta.eval(z, mz);
    Ok(jac.tr_mul(&spec.state_gradient(&u)) + mz * z * spec.beta())
}

/// Linear part `Q` of the perturbed state map `S̃(z) + δ(z, θ) = Q z + θ₀`.
fn perturbed_affine(model: &LinearForwardModel, mz: &DMatrix<f64>, theta: &ThetaBlocks) -> Result<DMatrix<f64>> {
    Ok(model.jacobian_dense()? + &theta.slopes * mz)
}

/// Exact minimizer of `J(S̃(z) + δ(z, tθ), z)`.
pub fn perturbed_optimum(
    spec: &ObjectiveSpec,
    model: &LinearForwardModel,
    theta: &ThetaBlocks,
    t: f64,
) -> Result<ControlVector> {
    let mz = spec.control_mass();
    let scaled = ThetaBlocks {
        intercept: &theta.intercept * t,
        slopes: &theta.slopes * t,
    };
    let q = perturbed_affine(model, mz, &scaled)?;
    let mu = spec.state_mass();
    let h = q.tr_mul(&(mu * &q)) + mz * spec.beta();
    let rhs = q.tr_mul(&(mu * (spec.target() - &scaled.intercept)));
    let chol = h.cholesky().ok_or_else(|| Error::Singular {
        operator: "perturbed reduced Hessian".into(),
    })?;
    Ok(chol.solve(&rhs))
}

/// `d/dt` of the perturbed minimizer at `t = 0`, by complex-step
/// differentiation of the exactly solved perturbed problem.
pub fn perturbed_optimum_derivative(
    spec: &ObjectiveSpec,
    model: &LinearForwardModel,
    theta: &ThetaBlocks,
) -> Result<ControlVector> {
    const STEP: f64 = 1e-30;
    let to_c = |a: &DMatrix<f64>| a.map(|x| Complex::new(x, 0.0));
    let mz = spec.control_mass();
    let jac = model.jacobian_dense()?;
    let slope = &theta.slopes * mz;
    let q = DMatrix::from_fn(jac.nrows(), jac.ncols(), |i, j| Complex::new(jac[(i, j)], STEP * slope[(i, j)]));
    let mu = to_c(spec.state_mass());
    let qt = q.transpose();
    let h = &qt * &mu * &q + to_c(mz) * Complex::new(spec.beta(), 0.0);
    let d0 = theta.intercept.map(|x| Complex::new(0.0, STEP * x));
    let target = spec.target().map(|x| Complex::new(x, 0.0));
    let rhs = &qt * (&mu * (target - d0));
    let z = h.lu().solve(&rhs).ok_or_else(|| Error::Singular {
        operator: "complex-step perturbed Hessian".into(),
    })?;
    Ok(z.map(|c| c.im / STEP))
}

/// Dense GSVD factors of `A` in the `M_θ` inner product, assembled from the
/// eigenpairs of `G` and `L`: `A = Ξ Φ Ψᵀ M_θ`.
#[derive(Debug, Clone)]
pub struct DenseGsvd {
    pub xi: DMatrix<f64>,
    /// Squared singular values `λ_i / ρ_j`, ordered like the columns of `Ξ`.
    pub phi_sq: DVector<f64>,
    pub psi: DMatrix<f64>,
}

pub fn dense_gsvd(spectrum: &GSpectrum, prior: &EllipticPrior, zeta: f64) -> Result<DenseGsvd> {
    let (m, n, count) = (prior.dim(), spectrum.w.nrows(), spectrum.len());
    let p = guard(m, n)?;
    let zeta2 = zeta * zeta;
    let rho = prior.eigenvalues();
    let lv = prior.eigenvectors();
    let mut xi = DMatrix::zeros(m * count, m * count);
    let mut phi_sq = DVector::zeros(m * count);
    let mut psi = DMatrix::zeros(p, m * count);
    for i in 0..count {
        let lambda = spectrum.eigenvalues[i];
        let gi = col(&spectrum.eigenvectors.column(i).into_owned());
        let wi = col(&(spectrum.w.column(i) * (1.0 / zeta2)));
        for j in 0..m {
            let k = i * m + j;
            let lj = col(&lv.column(j).into_owned());
            xi.set_column(k, &kron(&gi, &lj).column(0));
            phi_sq[k] = lambda / rho[j];
            let scale = 1.0 / (lambda * rho[j]).sqrt();
            let mut v = DVector::zeros(p);
            v.rows_mut(0, m).copy_from(&(lv.column(j) * spectrum.s[i]));
            v.rows_mut(m, m * n).copy_from(&kron(&lj, &wi).column(0));
            psi.set_column(k, &(v * scale));
        }
    }
    Ok(DenseGsvd { xi, phi_sq, psi })
}

/// Random small problem for cross-checking the factored and dense routes.
#[derive(Debug, Clone)]
pub struct TinyFixture {
    pub l: DMatrix<f64>,
    pub control_mass: DMatrix<f64>,
    pub spec: ObjectiveSpec,
    pub model: LinearForwardModel,
    pub data: DiscrepancyData,
    pub prior_spec: PriorSpec,
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = raw.qr().q();
    let d = DVector::from_fn(n, |_, _| rng.random_range(lo..hi));
    crate::linalg::symmetrize(&(&q * DMatrix::from_diagonal(&d) * q.transpose()))
}

impl TinyFixture {
    pub fn random(m: usize, n: usize, count: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // elliptic state weight on an m-node mesh with random coefficients
        let mesh = Mesh1D::uniform(m.max(2))?;
        let gamma = rng.random_range(0.5..2.0);
        let eps = rng.random_range(1e-2..1.0);
        let l = if m >= 2 {
            let mass = assemble_mass(&mesh);
            let d = (assemble_stiffness(&mesh, 1.0, 0.0)? * eps + &mass) * gamma;
            let chol = mass.cholesky().ok_or_else(|| Error::Singular {
                operator: "fixture mass".into(),
            })?;
            crate::linalg::symmetrize(&(&d * chol.solve(&d)))
        } else {
            DMatrix::from_element(1, 1, gamma * gamma)
        };
        let control_mass = random_spd(&mut rng, n, 0.2, 1.5);
        let state_mass = random_spd(&mut rng, m, 0.2, 1.5);
        let system = random_spd(&mut rng, m, 1.0, 3.0)
            + DMatrix::from_fn(m, m, |_, _| rng.random_range(-0.2..0.2));
        let coupling = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let model = LinearForwardModel::from_matrices("tiny model", system, coupling)?;
        let target = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
        let beta = rng.random_range(0.1..1.0);
        let spec = ObjectiveSpec::new(target, beta, state_mass, control_mass.clone())?;
        let controls = DMatrix::from_fn(n, count, |_, _| rng.random_range(-1.5..1.5));
        let y = DMatrix::from_fn(m, count, |_, _| rng.random_range(-1.0..1.0));
        let data = DiscrepancyData::new(controls, y)?;
        let prior_spec = PriorSpec {
            gamma,
            epsilon: eps,
            zeta: rng.random_range(0.5..3.0),
            alpha: rng.random_range(0.05..1.0),
        };
        Ok(Self {
            l,
            control_mass,
            spec,
            model,
            data,
            prior_spec,
        })
    }

    pub fn prior(&self) -> Result<EllipticPrior> {
        EllipticPrior::from_matrix(self.l.clone())
    }

    pub fn optimum(&self) -> Result<LfOptimum> {
        solve_lf_optimum(&self.spec, &self.model)
    }
}

/// Worst relative errors between factored and dense routes on one fixture.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct FixtureErrors {
    pub theta: f64,
    pub delta: f64,
    pub covariance: f64,
    pub b_theta: f64,
}

impl FixtureErrors {
    pub fn max(&self) -> f64 {
        self.theta.max(self.delta).max(self.covariance).max(self.b_theta)
    }
}

pub fn compare_fixture(fx: &TinyFixture, seed: u64) -> Result<FixtureErrors> {
    let prior = fx.prior()?;
    let opt = fx.optimum()?;
    let mz = &fx.control_mass;
    let (m, n) = (fx.spec.state_dim(), fx.spec.control_dim());
    let pm = calibrate(&fx.data, &fx.prior_spec, &prior, &opt.z_tilde, mz)?;
    let dense = dense_oracle_posterior(&fx.data, &fx.l, &opt.z_tilde, mz, fx.prior_spec.zeta, fx.prior_spec.alpha)?;
    let mut errs = FixtureErrors {
        theta: rel_diff(&pm.to_theta().to_flat(), &dense.theta_bar),
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..5 {
        let z = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let factored = pm.eval_delta(&z, mz)?;
        let reference = delta_operator(&z, mz, m)? * &dense.theta_bar;
        errs.delta = errs.delta.max(rel_diff(&factored, &reference));
        let v = DVector::from_fn(m * (n + 1), |_, _| rng.random_range(-1.0..1.0));
        let sv = pm.covariance_apply(&prior, mz, &ThetaBlocks::from_flat(&v, m, n)?)?;
        errs.covariance = errs.covariance.max(rel_diff(&sv.to_flat(), &(&dense.sigma * &v)));
    }
    let bt = apply_b_thetabar(&pm, &opt, &fx.spec, &fx.model)?;
    let b_dense = build_b_dense(&opt, &fx.spec, &fx.model)?;
    errs.b_theta = rel_diff(&bt, &(b_dense * &dense.theta_bar));
    Ok(errs)
}

/// Worst relative residuals of the GSVD and factorization identities.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct GsvdErrors {
    pub kron_gram: f64,
    pub psi_orthonormal: f64,
    pub xi_orthonormal: f64,
    pub reconstruction: f64,
    pub singular_values: f64,
    pub c_factor: f64,
    pub c_inverse: f64,
}

impl GsvdErrors {
    pub fn max(&self) -> f64 {
        [
            self.kron_gram,
            self.psi_orthonormal,
            self.xi_orthonormal,
            self.reconstruction,
            self.singular_values,
            self.c_factor,
            self.c_inverse,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn gsvd_identities(fx: &TinyFixture) -> Result<GsvdErrors> {
    let prior = fx.prior()?;
    let opt = fx.optimum()?;
    let mz = &fx.control_mass;
    let zeta = fx.prior_spec.zeta;
    let z_tilde = &opt.z_tilde;
    let spectrum = build_g_spectrum(fx.data.controls(), z_tilde, mz, zeta)?;
    let mt = m_theta(&fx.l, z_tilde, mz, zeta)?;
    let mt_inv = mt.clone().cholesky().ok_or_else(|| Error::Singular {
        operator: "M_theta".into(),
    })?;
    let (a, _) = data_operator(&fx.data, mz)?;
    let amta = &a * mt_inv.solve(&a.transpose());
    let gk = kron(&spectrum.g, &prior.inverse());
    let gsvd = dense_gsvd(&spectrum, &prior, zeta)?;
    let k = gsvd.xi.ncols();
    let eye = DMatrix::<f64>::identity(k, k);
    let psi_gram = gsvd.psi.tr_mul(&(&mt * &gsvd.psi));
    let xi_gram = gsvd.xi.tr_mul(&gsvd.xi);
    let phi = DMatrix::from_diagonal(&gsvd.phi_sq.map(f64::sqrt));
    let rebuilt = &gsvd.xi * phi * gsvd.psi.transpose() * &mt;
    // eigenvalues of A M_θ⁻¹ Aᵀ against the products λ_i/ρ_j
    let eig = SymEigen::new(&amta, "A M_theta^-1 A^T")?;
    let mut expected: Vec<f64> = gsvd.phi_sq.iter().copied().collect();
    expected.sort_by(f64::total_cmp);
    let expected = DVector::from_vec(expected);
    let c = c_factor(&fx.l, z_tilde, mz, zeta)?;
    let ci = c_inverse(&fx.l, z_tilde, mz, zeta)?;
    let p = mt.nrows();
    Ok(GsvdErrors {
        kron_gram: rel_diff_mat(&amta, &gk),
        psi_orthonormal: (psi_gram - &eye).norm() / (k as f64).sqrt(),
        xi_orthonormal: (xi_gram - &eye).norm() / (k as f64).sqrt(),
        reconstruction: rel_diff_mat(&rebuilt, &a),
        singular_values: rel_diff(&eig.values, &expected),
        c_factor: rel_diff_mat(&(&c * c.transpose()), &mt),
        c_inverse: (&c * &ci - DMatrix::<f64>::identity(p, p)).norm() / (p as f64).sqrt(),
    })
}

/// The fixture grid used by the oracle checks: `m ∈ {2,3,5}`, `n ∈ {2,3}`, `N ∈ {1,2}`.
pub fn fixture_grid() -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for m in [2, 3, 5] {
        for n in [2, 3] {
            for count in [1, 2] {
                out.push((m, n, count));
            }
        }
    }
    out
}

/// Summary of the tiny-scale oracle suite.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub fixtures: usize,
    pub max_factored_error: f64,
    pub max_gsvd_error: f64,
    pub factored_tolerance: f64,
    pub gsvd_tolerance: f64,
    pub passed: bool,
}

pub const FACTORED_TOL: f64 = 1e-8;
pub const GSVD_TOL: f64 = 1e-9;

pub fn run_oracle_suite(seed: u64) -> Result<OracleReport> {
    let mut max_factored: f64 = 0.0;
    let mut max_gsvd: f64 = 0.0;
    let grid = fixture_grid();
    for (k, &(m, n, count)) in grid.iter().enumerate() {
        let fx = TinyFixture::random(m, n, count, seed.wrapping_add(k as u64))?;
        max_factored = max_factored.max(compare_fixture(&fx, seed ^ 0x5eed)?.max());
        max_gsvd = max_gsvd.max(gsvd_identities(&fx)?.max());
    }
    Ok(OracleReport {
        fixtures: grid.len(),
        max_factored_error: max_factored,
        max_gsvd_error: max_gsvd,
        factored_tolerance: FACTORED_TOL,
        gsvd_tolerance: GSVD_TOL,
        passed: max_factored <= FACTORED_TOL && max_gsvd <= GSVD_TOL,
    })
}
