//! Projected gradient descent on the reference problem in
//! `configs/reference.ini`: recover a weight whose state has a dent in the
//! upper right quadrant.

use std::path::Path;

use degenopt::config::RunConfig;
use degenopt::control::project_admissible;
use degenopt::optimizer::optimize;
use degenopt::solver::SolverOptions;
use degenopt::WeightField;

fn main() -> degenopt::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.ini");
    let cfg = RunConfig::load(&path)?;
    let mesh = cfg.build_mesh()?;
    let set = cfg.admissible_set(&mesh)?;
    let f = cfg.load_field(&mesh);
    let y_d = cfg.target_state(&mesh, SolverOptions::new(cfg.optimizer.solver_tol))?;

    let start = WeightField::constant(&mesh, 1.0)?;
    let rho0 = project_admissible(&mesh, start.values(), &set)?;
    let result = optimize(&mesh, &set, f.values(), y_d.values(), &rho0, &cfg.optimizer)?;

    for r in result.trace.records.iter().step_by(20) {
        println!(
            "{:>4} J = {:.12}  step = {:.3e}  displacement = {:.3e}",
            r.iteration, r.cost.total, r.step, r.displacement
        );
    }
    println!(
        "converged = {} after {} iterations, final displacement {:.3e}",
        result.trace.converged,
        result.trace.records.len() - 1,
        result.trace.final_displacement
    );
    let n = mesh.nx();
    println!("rho on the lower triangles, top row first:");
    for j in (0..mesh.ny()).rev() {
        let row: Vec<String> = (0..n).map(|i| format!("{:.3}", result.rho.values()[2 * (j * n + i)])).collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
