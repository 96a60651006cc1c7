//! Draws prior discrepancy realizations along the segment from `z_tilde` to
//! a reference control and reports their spread, which is what one looks at
//! when tuning `gamma`, `epsilon` and `zeta`.

use hdsa::sampler::{sample_prior, SamplePlan};
use hdsa::Problem;

fn main() -> hdsa::Result<()> {
    let problem = Problem::benchmark()?;
    let z_tilde = problem.lf_optimum()?.z_tilde;
    let reference = &z_tilde + problem.smooth_modes(1)?.column(0) * 2.0;
    let plan = SamplePlan {
        samples: 200,
        steps: 10,
        reference,
        seed: 7,
    };
    for zeta in [0.5, 2.0, 8.0] {
        let set = sample_prior(&plan, &problem.prior, zeta, &z_tilde, &problem.mass)?;
        let spread = |k: usize| {
            let ms: f64 = (0..plan.samples).map(|s| set.curve(s, k).norm_squared()).sum::<f64>();
            (ms / (plan.samples * problem.mesh.n_nodes()) as f64).sqrt()
        };
        println!(
            "zeta = {zeta:4}: rms discrepancy at z_tilde {:.3}, at z_r {:.3}",
            spread(0),
            spread(plan.steps)
        );
    }
    Ok(())
}
