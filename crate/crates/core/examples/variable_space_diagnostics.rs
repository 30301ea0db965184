//! Convergence diagnostics for a sequence of weights `ρ_k`: the inverse
//! weights in `L¹` and lower semicontinuity of the total variation.

use degenopt::diagnostics::{inverse_weight_convergence, lsc_witness, WeightSequence};
use degenopt::{BoundarySpec, Mesh};

fn main() -> degenopt::Result<()> {
    let mesh = Mesh::unit_square(8, BoundarySpec::left_dirichlet())?;

    let seq = WeightSequence::one_over_k(&mesh, 1000)?;
    let inv = inverse_weight_convergence(&mesh, &seq)?;
    for row in inv.rows.iter().filter(|r| [1, 10, 100, 1000].contains(&r.k)) {
        println!("k = {:>4}  L1 distance {:.4e}  pairing error {:.3e}", row.k, row.l1_distance, row.pairing_error);
    }
    println!("max identity error {:.3e}", inv.max_identity_error());

    let seq = WeightSequence::two_value(&mesh, 200, 1.5, 0.8, 1.0)?;
    let lsc = lsc_witness(&mesh, &seq)?;
    println!(
        "two-value sequence: TV(limit) = {:.6}, liminf TV = {:.6}, violation = {}",
        lsc.limit_tv, lsc.liminf, lsc.violation
    );
    Ok(())
}
