//! Prior discrepancy realizations along the segment
//! `ẑ_k = z̃ + (k/K)(z_r − z̃)`, `k = 0..=K`.
//!
//! Each sample draws `ω₀, ω₁ ~ N(0, I_m)` and evaluates
//! `δ(ẑ_k) = L^{-1/2}ω₀ + (k/K) ζ⁻¹ c L^{-1/2}ω₁` with
//! `c = ‖z_r − z̃‖_{M_z}`.
//!
//! Sample `s` uses ChaCha8 stream `s` of the plan seed, so any subset of
//! samples can be regenerated independently and in any order.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{check_len, weighted_norm};
use crate::models::{ControlVector, StateVector};
use crate::prior::EllipticPrior;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub samples: usize,
    pub steps: usize,
    pub reference: ControlVector,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSample {
    /// `L^{-1/2} ω₀`.
    pub base: StateVector,
    /// `L^{-1/2} ω₁`.
    pub slope: StateVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSampleSet {
    pub steps: usize,
    pub zeta: f64,
    /// `c = ‖z_r − z̃‖_{M_z}`.
    pub c: f64,
    pub samples: Vec<PriorSample>,
}

impl PriorSampleSet {
    /// `δ(ẑ_k, ·)` for sample `s`.
    pub fn curve(&self, s: usize, k: usize) -> StateVector {
        let sample = &self.samples[s];
        let t = k as f64 / self.steps as f64;
        &sample.base + &sample.slope * (t * self.c / self.zeta)
    }

    /// All `K + 1` curve points of sample `s`, one column per `k`.
    pub fn curves(&self, s: usize) -> DMatrix<f64> {
        let m = self.samples[s].base.len();
        let mut out = DMatrix::zeros(m, self.steps + 1);
        for k in 0..=self.steps {
            out.set_column(k, &self.curve(s, k));
        }
        out
    }
}

/// Standard normal vector from stream `stream` of `seed`.
pub fn normal_draw(seed: u64, stream: u64, len: usize) -> (DVector<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let first = DVector::from_fn(len, |_, _| StandardNormal.sample(&mut rng));
    let second = DVector::from_fn(len, |_, _| StandardNormal.sample(&mut rng));
    (first, second)
}

pub fn sample_prior(
    plan: &SamplePlan,
    prior: &EllipticPrior,
    zeta: f64,
    z_tilde: &ControlVector,
    control_mass: &DMatrix<f64>,
) -> Result<PriorSampleSet> {
    if plan.samples == 0 {
        return Err(Error::param("samples", "need at least one sample"));
    }
    if plan.steps == 0 {
        return Err(Error::param("steps", "need at least one segment step"));
    }
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::param("zeta", format!("must be positive, got {zeta}")));
    }
    check_len("z_tilde", z_tilde, control_mass.nrows())?;
    check_len("reference control", &plan.reference, control_mass.nrows())?;
    let c = weighted_norm(control_mass, &(&plan.reference - z_tilde));
    let m = prior.dim();
    let samples = (0..plan.samples)
        .map(|s| {
            let (w0, w1) = normal_draw(plan.seed, s as u64, m);
            PriorSample {
                base: prior.apply_inv_sqrt(&w0),
                slope: prior.apply_inv_sqrt(&w1),
            }
        })
        .collect();
    Ok(PriorSampleSet {
        steps: plan.steps,
        zeta,
        c,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{assemble_mass, Mesh1D};
    use crate::prior::build_elliptic_prior;

    fn setup() -> (Mesh1D, EllipticPrior, DMatrix<f64>) {
        let mesh = Mesh1D::uniform(30).unwrap();
        let prior = build_elliptic_prior(&mesh, 1.0, 1e-2).unwrap();
        let mz = assemble_mass(&mesh);
        (mesh, prior, mz)
    }

    #[test]
    fn reference_at_optimum_gives_flat_curves() {
        let (mesh, prior, mz) = setup();
        let zt = mesh.interpolate(|x| 1.0 + x);
        let plan = SamplePlan { samples: 3, steps: 4, reference: zt.clone(), seed: 1 };
        let set = sample_prior(&plan, &prior, 2.0, &zt, &mz).unwrap();
        assert_eq!(set.c, 0.0);
        for s in 0..3 {
            let curves = set.curves(s);
            for k in 1..=4 {
                assert_eq!(curves.column(k), curves.column(0));
            }
        }
    }

    #[test]
    fn first_point_is_base_draw_and_increment_scales_with_zeta() {
        let (mesh, prior, mz) = setup();
        let zt = mesh.interpolate(|x| x);
        let zr = mesh.interpolate(|x| 2.0 * x + 1.0);
        let plan = SamplePlan { samples: 2, steps: 5, reference: zr, seed: 42 };
        let a = sample_prior(&plan, &prior, 1.0, &zt, &mz).unwrap();
        let b = sample_prior(&plan, &prior, 4.0, &zt, &mz).unwrap();
        assert_eq!(a.curve(0, 0), a.samples[0].base);
        let inc_a = a.curve(1, 5) - a.curve(1, 0);
        let inc_b = b.curve(1, 5) - b.curve(1, 0);
        assert!((inc_a - inc_b * 4.0).amax() <= 1e-12 * a.samples[1].slope.amax() * a.c);
        let expected = &a.samples[1].base + &a.samples[1].slope * (0.4 * a.c);
        assert!((a.curve(1, 2) - expected).amax() <= 1e-12);
    }

    #[test]
    fn seed_reproducible_and_streams_independent_of_count() {
        let (mesh, prior, mz) = setup();
        let zt = mesh.interpolate(|x| x);
        let plan = SamplePlan { samples: 5, steps: 2, reference: zt.clone(), seed: 9 };
        let a = sample_prior(&plan, &prior, 2.0, &zt, &mz).unwrap();
        let b = sample_prior(&plan, &prior, 2.0, &zt, &mz).unwrap();
        assert_eq!(a, b);
        let fewer = SamplePlan { samples: 2, ..plan.clone() };
        let c = sample_prior(&fewer, &prior, 2.0, &zt, &mz).unwrap();
        assert_eq!(c.samples[..], a.samples[..2]);
        let other = SamplePlan { seed: 10, ..plan };
        assert_ne!(sample_prior(&other, &prior, 2.0, &zt, &mz).unwrap(), a);
    }

    #[test]
    fn rejects_empty_plan() {
        let (mesh, prior, mz) = setup();
        let zt = mesh.interpolate(|x| x);
        let plan = SamplePlan { samples: 0, steps: 2, reference: zt.clone(), seed: 9 };
        assert!(sample_prior(&plan, &prior, 2.0, &zt, &mz).is_err());
        let plan = SamplePlan { samples: 1, steps: 0, reference: zt.clone(), seed: 9 };
        assert!(sample_prior(&plan, &prior, 2.0, &zt, &mz).is_err());
    }
}
