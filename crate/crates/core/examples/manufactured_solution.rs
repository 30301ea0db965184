//! Refinement ladder for the state solver against a manufactured solution.
//!
//! With `ρ = 1`, `y = sin(πx) sin(πy)` solves `-Δy + y = f` for
//! `f = (2π² + 1) y`. The printed L² errors should fall by about 4 per level.

use std::f64::consts::PI;

use degenopt::solver::{l2_error_against, solve_state};
use degenopt::{BoundarySpec, Mesh, WeightField};

fn main() -> degenopt::Result<()> {
    let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    let mut prev: Option<f64> = None;
    println!("{:>4} {:>14} {:>8} {:>6}", "n", "l2_error", "order", "cg");
    for n in [4, 8, 16, 32, 64] {
        let mesh = Mesh::unit_square(n, BoundarySpec::all_dirichlet())?;
        let f = mesh.interpolate(|x, y| (2.0 * PI * PI + 1.0) * exact(x, y));
        let rho = WeightField::constant(&mesh, 1.0)?;
        let (y, report) = solve_state(&mesh, &rho, &f, 1e-12)?;
        let err = l2_error_against(&mesh, y.values(), exact)?;
        let order = prev.map(|p| (p / err).log2()).unwrap_or(f64::NAN);
        println!("{n:>4} {err:>14.6e} {order:>8.3} {:>6}", report.cg_iterations);
        prev = Some(err);
    }
    Ok(())
}
