//! Full update on the benchmark: calibrate, apply `z_bar = z_tilde - H^-1 B theta`,
//! and compare both controls with the high-fidelity optimum.

use hdsa::models::generate_discrepancy_data;
use hdsa::sensitivity::{control_distance, hf_objective_report};
use hdsa::{calibrate, update_solution, ControlDesign, Problem};

fn main() -> hdsa::Result<()> {
    let problem = Problem::benchmark()?;
    let opt = problem.lf_optimum()?;
    let controls = problem.design_controls(&opt.z_tilde, &ControlDesign::OptimumPlusModes { count: 2, scale: 2.0 })?;
    let data = generate_discrepancy_data(&problem.lf, &problem.hf, &controls)?;
    let pm = calibrate(&data, &problem.params.prior, &problem.prior, &opt.z_tilde, &problem.mass)?;
    let update = update_solution(&pm, &opt, &problem.spec, &problem.lf)?;
    println!("{:#?}", update.diagnostics);

    let z_star = problem.hf_optimum()?.z_tilde;
    let rows = hf_objective_report(
        &[("z_tilde", &opt.z_tilde), ("z_bar", &update.z_bar), ("z_star", &z_star)],
        Some(&problem.hf),
        &problem.spec,
    )?;
    for row in rows {
        println!("J({}) = {:.6}", row.name, row.value.unwrap_or(f64::NAN));
    }
    let before = control_distance(&problem.mass, &opt.z_tilde, &z_star);
    let after = control_distance(&problem.mass, &update.z_bar, &z_star);
    println!("distance to z*: {before:.4} -> {after:.4} (ratio {:.3})", after / before);
    Ok(())
}
