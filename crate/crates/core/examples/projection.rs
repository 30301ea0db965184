//! Project an arbitrary cell field onto the admissible set of weights.

use degenopt::control::{mass, project_admissible};
use degenopt::{AdmissibleSet, BoundarySpec, Mesh};

fn main() -> degenopt::Result<()> {
    let mesh = Mesh::unit_square(4, BoundarySpec::left_dirichlet())?;
    let set = AdmissibleSet::constant(&mesh, 0.2, 1.5, 0.8);
    let feasibility = set.check(&mesh)?;
    println!("{feasibility:?}");

    let g = mesh.sample_cells(|x, _| 3.0 * x);
    let p = project_admissible(&mesh, &g, &set)?;
    let again = project_admissible(&mesh, p.values(), &set)?;

    println!("mass(g) = {:.6}  mass(P g) = {:.12}", mass(&mesh, &g)?, mass(&mesh, p.values())?);
    println!("membership: {:?}", set.membership(&mesh, p.values()));
    let drift = p.values().iter().zip(again.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("idempotence drift = {drift:e}");
    for (c, (gi, pi)) in g.iter().zip(p.values()).enumerate().step_by(5) {
        println!("  cell {c:>2}: g = {gi:.4}  P g = {pi:.6}");
    }
    Ok(())
}
