//! Compare the adjoint gradient of the reduced cost with central differences
//! on a small random instance.

use degenopt::objective::{gradient_check, ReducedProblem};
use degenopt::{BoundarySpec, Mesh, WeightField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> degenopt::Result<()> {
    let mesh = Mesh::unit_square(4, BoundarySpec::left_dirichlet())?;
    let f = mesh.interpolate(|x, _| 1.0 + x);
    let y_d = mesh.interpolate(|_, y| 0.5 * y);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rho = WeightField::new((0..mesh.num_cells()).map(|_| rng.gen_range(0.5..1.5)).collect())?;

    let mut problem = ReducedProblem::new(&mesh, &f, &y_d, 1e-2, 1e-13);
    problem.solver.refine = true;
    let check = gradient_check(&problem, &rho, 1e-6)?;

    for c in 0..mesh.num_cells() {
        println!("{c:>3} {:>+16.9e} {:>+16.9e}", check.adjoint[c], check.finite_difference[c]);
    }
    println!(
        "max relative error {:.3e} at cell {}",
        check.max_relative_error, check.worst_cell
    );
    Ok(())
}
