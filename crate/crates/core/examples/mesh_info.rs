//! Build a structured mesh and print its connectivity summary.
//!
//! ```text
//! cargo run --example mesh_info -- 4 2
//! ```

use degenopt::{BoundarySpec, BoundaryTag, Mesh, Rect};

fn main() -> degenopt::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().unwrap_or(4));
    let nx = args.next().unwrap_or(4);
    let ny = args.next().unwrap_or(nx);

    let spec = BoundarySpec {
        left: BoundaryTag::Dirichlet,
        right: BoundaryTag::Neumann,
        bottom: BoundaryTag::Neumann,
        top: BoundaryTag::Neumann,
        allow_pure_neumann: false,
    };
    let mesh = Mesh::structured(nx, ny, Rect::new(0.0, 0.0, 2.0, 1.0), spec)?;
    print!("{}", mesh.summary());
    println!("total_area = {}", mesh.total_area());
    println!("first triangles:");
    for (c, t) in mesh.triangles().iter().take(4).enumerate() {
        println!("  cell {c}: {t:?} area {}", mesh.cell_areas()[c]);
    }
    Ok(())
}
