//! Assembles the finite-element operators on a coarse mesh and prints them.

use hdsa::mesh::{assemble_advection, assemble_mass, assemble_stiffness, Mesh1D};

fn main() -> hdsa::Result<()> {
    let mesh = Mesh1D::uniform(5)?;
    println!("nodes: {:?}", mesh.nodes());
    println!("mass{:.4}", assemble_mass(&mesh));
    println!("stiffness (kappa = 1, robin h = 2){:.4}", assemble_stiffness(&mesh, 1.0, 2.0)?);
    println!("advection (v = 0.5){:.4}", assemble_advection(&mesh, 0.5));

    let fine = Mesh1D::uniform(200)?;
    let m = assemble_mass(&fine);
    let total: f64 = m.iter().sum();
    println!("sum of mass entries on 200 nodes = {total:.12} (length of the domain)");
    Ok(())
}
