//! The 1D source-control benchmark: diffusion as the low-fidelity model,
//! advection-diffusion as the high-fidelity model, Robin ends on both.

use nalgebra::{DMatrix, DVector};

use crate::control::{solve_lf_optimum, LfOptimum, ObjectiveSpec};
use crate::error::{Error, Result};
use crate::linalg::{weighted_norm, SymEigen};
use crate::mesh::{assemble_mass, Mesh1D};
use crate::models::{ControlVector, LinearForwardModel};
use crate::prior::{build_elliptic_prior, EllipticPrior, PriorSpec};

/// Target profile `T(x) = Σ_k c_k (x − x₀)^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialTarget {
    pub center: f64,
    pub coeffs: Vec<f64>,
}

impl PolynomialTarget {
    pub fn eval(&self, x: f64) -> f64 {
        let s = x - self.center;
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }
}

impl Default for PolynomialTarget {
    /// `T(x) = 50 − 30(x − 0.5)²`.
    fn default() -> Self {
        Self {
            center: 0.5,
            coeffs: vec![50.0, 0.0, -30.0],
        }
    }
}

/// How the benchmark picks its high-fidelity query controls.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlDesign {
    /// `z₁ = z̃`, `z_ℓ = z̃ + scale·ψ_{ℓ−1}` for `ℓ ≥ 2`, where `ψ_k` is the
    /// k-th smoothest non-constant `M_z`-normalized mode (the cosine-like
    /// eigenvectors of the Neumann stiffness in the `M_z` metric).
    OptimumPlusModes { count: usize, scale: f64 },
    /// Explicit controls, one column each.
    Explicit(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkParams {
    pub n_nodes: usize,
    pub kappa: f64,
    pub velocity: f64,
    pub h_robin: f64,
    pub beta: f64,
    pub target: PolynomialTarget,
    pub prior: PriorSpec,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        Self {
            n_nodes: 200,
            kappa: 1.0,
            velocity: 0.5,
            h_robin: 2.0,
            beta: 10.0,
            target: PolynomialTarget::default(),
            prior: PriorSpec {
                gamma: 1.0,
                epsilon: 1e-2,
                zeta: 2.0,
                alpha: 0.01,
            },
        }
    }
}

/// Assembled benchmark: mesh, both models, objective and prior.
#[derive(Debug, Clone)]
pub struct Problem {
    pub params: BenchmarkParams,
    pub mesh: Mesh1D,
    /// Shared mass matrix; state and control use the same basis.
    pub mass: DMatrix<f64>,
    pub lf: LinearForwardModel,
    pub hf: LinearForwardModel,
    pub spec: ObjectiveSpec,
    pub prior: EllipticPrior,
}

impl Problem {
    pub fn new(params: BenchmarkParams) -> Result<Self> {
        params.prior.validate()?;
        let mesh = Mesh1D::uniform(params.n_nodes)?;
        let mass = assemble_mass(&mesh);
        let lf = LinearForwardModel::diffusion(&mesh, params.kappa, params.h_robin)?;
        let hf = LinearForwardModel::advection_diffusion(&mesh, params.kappa, params.velocity, params.h_robin)?;
        let target = mesh.interpolate(|x| params.target.eval(x));
        let spec = ObjectiveSpec::new(target, params.beta, mass.clone(), mass.clone())?;
        let prior = build_elliptic_prior(&mesh, params.prior.gamma, params.prior.epsilon)?;
        Ok(Self {
            params,
            mesh,
            mass,
            lf,
            hf,
            spec,
            prior,
        })
    }

    pub fn benchmark() -> Result<Self> {
        Self::new(BenchmarkParams::default())
    }

    pub fn lf_optimum(&self) -> Result<LfOptimum> {
        solve_lf_optimum(&self.spec, &self.lf)
    }

    /// High-fidelity optimum `z*`, available because the model is linear.
    pub fn hf_optimum(&self) -> Result<LfOptimum> {
        solve_lf_optimum(&self.spec, &self.hf)
    }

    /// Non-constant `M_z`-orthonormal Neumann modes, smoothest first.
    pub fn smooth_modes(&self, count: usize) -> Result<DMatrix<f64>> {
        let n = self.mesh.n_nodes();
        if count >= n {
            return Err(Error::param("count", format!("at most {} modes exist", n - 1)));
        }
        // K_N v = μ M v via the symmetric reduction M^{-1/2} K_N M^{-1/2}
        let (_, m_ihalf) = crate::linalg::spd_sqrt_pair(&self.mass, "control mass")?;
        let k = crate::mesh::assemble_stiffness(&self.mesh, 1.0, 0.0)?;
        let eig = SymEigen::new(&(&m_ihalf * k * &m_ihalf), "Neumann modes")?;
        let mut modes = DMatrix::zeros(n, count);
        for j in 0..count {
            let mut v = &m_ihalf * eig.vectors.column(j + 1);
            // fix the sign so the mode is positive at the left end
            if v[0] < 0.0 {
                v.neg_mut();
            }
            let norm = weighted_norm(&self.mass, &v);
            modes.set_column(j, &(v / norm));
        }
        Ok(modes)
    }

    pub fn design_controls(&self, z_tilde: &ControlVector, design: &ControlDesign) -> Result<DMatrix<f64>> {
        match design {
            ControlDesign::Explicit(z) => Ok(z.clone()),
            ControlDesign::OptimumPlusModes { count, scale } => {
                if *count == 0 {
                    return Ok(DMatrix::zeros(z_tilde.len(), 0));
                }
                let modes = self.smooth_modes(count - 1)?;
                let mut z = DMatrix::zeros(z_tilde.len(), *count);
                z.set_column(0, z_tilde);
                for l in 1..*count {
                    z.set_column(l, &(z_tilde + modes.column(l - 1) * *scale));
                }
                Ok(z)
            }
        }
    }

    pub fn target(&self) -> &DVector<f64> {
        self.spec.target()
    }
}
