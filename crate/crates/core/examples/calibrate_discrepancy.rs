//! Calibrates the affine discrepancy from two high-fidelity evaluations and
//! checks how well the posterior mean reproduces the data and predicts a
//! control it has not seen.

use hdsa::linalg::weighted_norm;
use hdsa::models::generate_discrepancy_data;
use hdsa::{calibrate, ControlDesign, Problem};

fn main() -> hdsa::Result<()> {
    let problem = Problem::benchmark()?;
    let z_tilde = problem.lf_optimum()?.z_tilde;
    let controls = problem.design_controls(&z_tilde, &ControlDesign::OptimumPlusModes { count: 2, scale: 2.0 })?;
    let data = generate_discrepancy_data(&problem.lf, &problem.hf, &controls)?;
    let pm = calibrate(&data, &problem.params.prior, &problem.prior, &z_tilde, &problem.mass)?;
    println!("G eigenvalues: {:?}", pm.spectrum.eigenvalues.as_slice());

    let rel = |z: &nalgebra::DVector<f64>| -> hdsa::Result<f64> {
        let truth = problem.hf.solve(z)? - problem.lf.solve(z)?;
        let fit = pm.eval_delta(z, &problem.mass)?;
        Ok(weighted_norm(&problem.mass, &(fit - &truth)) / weighted_norm(&problem.mass, &truth))
    };
    for l in 0..data.len() {
        println!("data pair {}: relative misfit {:.2e}", l + 1, rel(&data.controls().column(l).into_owned())?);
    }
    let unseen = &z_tilde + problem.smooth_modes(2)?.column(1) * 2.0;
    println!("unseen control: relative error {:.2e}", rel(&unseen)?);
    Ok(())
}
