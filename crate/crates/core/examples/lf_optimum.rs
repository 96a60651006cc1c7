//! Solves the low-fidelity control problem and compares it with the optimum
//! of the high-fidelity model.

use hdsa::control::reduced_objective;
use hdsa::sensitivity::control_distance;
use hdsa::Problem;

fn main() -> hdsa::Result<()> {
    let problem = Problem::benchmark()?;
    let lf = problem.lf_optimum()?;
    let hf = problem.hf_optimum()?;
    println!("low-fidelity objective   {:.6}", lf.objective_value);
    println!("gradient norm at optimum {:.2e}", lf.gradient_norm);
    println!(
        "high-fidelity objective at z_tilde {:.6}, at z* {:.6}",
        reduced_objective(&problem.spec, &problem.hf, &lf.z_tilde)?,
        hf.objective_value
    );
    println!("||z_tilde - z*||_M = {:.4}", control_distance(&problem.mass, &lf.z_tilde, &hf.z_tilde));
    let x = problem.mesh.nodes();
    println!("{:>6} {:>10} {:>10}", "x", "z_tilde", "z*");
    for i in (0..x.len()).step_by(20) {
        println!("{:6.3} {:10.4} {:10.4}", x[i], lf.z_tilde[i], hf.z_tilde[i]);
    }
    Ok(())
}
