//! Conforming P1 finite elements for `−div(ρ∇y) + y = f` with homogeneous
//! Dirichlet data on Γ_D and the natural condition on Γ_N.
//!
//! With ρ constant per cell the stiffness integrals are exact, and loads use
//! the consistent mass matrix, so the discrete weak form and the energy
//! equality hold exactly up to the linear solver residual.

pub mod sparse;

use std::ops::Deref;
use std::time::Instant;

use rayon::prelude::*;

use crate::control::WeightField;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
pub use sparse::{pcg, CgOutcome, CsrMatrix};
use sparse::norm2;

/// One value per mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField(Vec<f64>);

impl NodalField {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        mesh.check_nodal(&values, "nodal field")?;
        if let Some(v) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite nodal value at vertex {v}")));
        }
        Ok(NodalField(values))
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        NodalField(vec![0.0; mesh.num_vertices()])
    }

    pub fn interpolate(mesh: &Mesh, f: impl Fn(f64, f64) -> f64) -> Self {
        NodalField(mesh.interpolate(f))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for NodalField {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub cg_iterations: usize,
    /// Relative 2-norm residual of the reduced system.
    pub final_residual: f64,
    pub energy_gap: f64,
    pub wall_time: f64,
}

/// `K_ρ + M` with Dirichlet rows and columns removed, plus the full-size
/// stiffness and mass matrices it came from.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub operator: CsrMatrix,
    /// Free vertex indices in increasing order.
    pub free: Vec<usize>,
}

impl LinearSystem {
    pub fn dimension(&self) -> usize {
        self.free.len()
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&v| full[v]).collect()
    }

    /// Scatter free values into a full vector, zero on Dirichlet vertices.
    pub fn extend(&self, reduced: &[f64], num_vertices: usize) -> Vec<f64> {
        let mut full = vec![0.0; num_vertices];
        for (&v, &x) in self.free.iter().zip(reduced) {
            full[v] = x;
        }
        full
    }

    /// Reduced load `(M f)|_free`.
    pub fn load(&self, f: &[f64]) -> Vec<f64> {
        self.restrict(&self.mass.mul_vec(f))
    }

    /// Solve `operator · x = rhs` on the free vertices and return the full
    /// vector. Iteration cap is `20 · dimension`.
    pub fn solve_reduced(
        &self,
        rhs: &[f64],
        tol: f64,
        warm_start: Option<&[f64]>,
    ) -> Result<(Vec<f64>, CgOutcome)> {
        let n_full = self.stiffness.nrows();
        if self.dimension() == 0 {
            let out = CgOutcome {
                x: vec![],
                iterations: 0,
                residual: 0.0,
            };
            return Ok((vec![0.0; n_full], out));
        }
        let x0 = warm_start.map(|w| self.restrict(w));
        let cap = 20 * self.dimension();
        let out = pcg(&self.operator, rhs, x0.as_deref(), tol, cap)?;
        Ok((self.extend(&out.x, n_full), out))
    }

    /// [`LinearSystem::solve_reduced`] followed by up to
    /// [`MAX_REFINEMENT_STEPS`] corrections `A δ = b − A x`, the residual
    /// taken in compensated arithmetic. The reported residual is the
    /// compensated one.
    pub fn solve_reduced_refined(
        &self,
        rhs: &[f64],
        tol: f64,
        warm_start: Option<&[f64]>,
    ) -> Result<(Vec<f64>, CgOutcome)> {
        let (_, mut out) = self.solve_reduced(rhs, tol, warm_start)?;
        let b_norm = norm2(rhs);
        if self.dimension() == 0 || b_norm == 0.0 {
            return Ok((self.extend(&out.x, self.stiffness.nrows()), out));
        }
        let cap = 20 * self.dimension();
        for _ in 0..MAX_REFINEMENT_STEPS {
            let r = self.operator.residual_compensated(rhs, &out.x);
            let r_norm = norm2(&r);
            out.residual = r_norm / b_norm;
            if r_norm == 0.0 {
                break;
            }
            let corr = pcg(&self.operator, &r, None, tol, cap)?;
            out.iterations += corr.iterations;
            let mut changed = false;
            for (x, d) in out.x.iter_mut().zip(&corr.x) {
                let next = *x + d;
                changed |= next != *x;
                *x = next;
            }
            if !changed {
                break;
            }
        }
        let r = self.operator.residual_compensated(rhs, &out.x);
        out.residual = norm2(&r) / b_norm;
        Ok((self.extend(&out.x, self.stiffness.nrows()), out))
    }

    fn solve_with(
        &self,
        rhs: &[f64],
        opts: SolverOptions,
        warm_start: Option<&[f64]>,
    ) -> Result<(Vec<f64>, CgOutcome)> {
        if opts.refine {
            self.solve_reduced_refined(rhs, opts.tol, warm_start)
        } else {
            self.solve_reduced(rhs, opts.tol, warm_start)
        }
    }
}

/// Per-cell contributions of the P1 stiffness (unit weight) and mass.
fn local_matrices(mesh: &Mesh, cell: usize) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let area = mesh.cell_areas()[cell];
    let g = mesh.basis_gradients(cell);
    let mut k = [[0.0; 3]; 3];
    let mut m = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
            m[a][b] = if a == b { area / 6.0 } else { area / 12.0 };
        }
    }
    (k, m)
}

fn vertex_pattern(mesh: &Mesh) -> Vec<Vec<usize>> {
    let mut pattern = vec![Vec::new(); mesh.num_vertices()];
    for tri in mesh.triangles() {
        for &a in tri {
            pattern[a].extend_from_slice(tri);
        }
    }
    for row in &mut pattern {
        row.sort_unstable();
        row.dedup();
    }
    pattern
}

/// Assemble `K_ρ`, `M` and the reduced operator. Sequential reference mode.
pub fn assemble_system(mesh: &Mesh, rho: &WeightField) -> Result<LinearSystem> {
    assemble_system_with(mesh, rho, false)
}

/// As [`assemble_system`]; with `parallel` the element matrices are computed
/// on the rayon pool. Scatter order is fixed, so both modes produce
/// entrywise-identical matrices.
pub fn assemble_system_with(mesh: &Mesh, rho: &WeightField, parallel: bool) -> Result<LinearSystem> {
    mesh.check_cellwise(rho, "weight")?;
    if let Some(c) = rho.iter().position(|r| !(*r > 0.0)) {
        return Err(Error::invalid(format!("weight must be positive, cell {c} has {}", rho[c])));
    }
    let locals: Vec<_> = if parallel {
        (0..mesh.num_cells())
            .into_par_iter()
            .map(|c| local_matrices(mesh, c))
            .collect()
    } else {
        (0..mesh.num_cells()).map(|c| local_matrices(mesh, c)).collect()
    };

    let pattern = vertex_pattern(mesh);
    let mut stiffness = CsrMatrix::from_pattern(&pattern);
    let mut mass = CsrMatrix::from_pattern(&pattern);
    for (c, (k, m)) in locals.iter().enumerate() {
        let tri = mesh.triangles()[c];
        for a in 0..3 {
            for b in 0..3 {
                stiffness.add(tri[a], tri[b], rho[c] * k[a][b]);
                mass.add(tri[a], tri[b], m[a][b]);
            }
        }
    }
    let free: Vec<usize> = (0..mesh.num_vertices())
        .filter(|&v| !mesh.is_dirichlet(v))
        .collect();
    let operator = stiffness.combine(1.0, &mass, 1.0).restrict(&free);
    Ok(LinearSystem {
        stiffness,
        mass,
        operator,
        free,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    pub parallel: bool,
    /// Follow CG with iterative refinement on a compensated residual, which
    /// makes the solution independent of the warm start to working
    /// precision.
    pub refine: bool,
}

impl SolverOptions {
    pub fn new(tol: f64) -> Self {
        SolverOptions {
            tol,
            parallel: false,
            refine: false,
        }
    }
}

/// Refinement sweeps after the initial CG solve.
pub const MAX_REFINEMENT_STEPS: usize = 3;

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::invalid(format!("solver tolerance must be in (0, 1), got {tol}")));
    }
    Ok(())
}

/// Galerkin solution of the state equation by Jacobi-preconditioned CG.
pub fn solve_state(
    mesh: &Mesh,
    rho: &WeightField,
    f: &[f64],
    tol: f64,
) -> Result<(NodalField, SolveReport)> {
    let system = assemble_system(mesh, rho)?;
    solve_state_in(mesh, &system, rho, f, SolverOptions::new(tol), None)
}

/// State solve on an already assembled system, optionally warm-started.
pub fn solve_state_in(
    mesh: &Mesh,
    system: &LinearSystem,
    rho: &WeightField,
    f: &[f64],
    opts: SolverOptions,
    warm_start: Option<&[f64]>,
) -> Result<(NodalField, SolveReport)> {
    check_tol(opts.tol)?;
    mesh.check_nodal(f, "f")?;
    let start = Instant::now();
    let rhs = system.load(f);
    let (y, out) = system.solve_with(&rhs, opts, warm_start)?;
    let energy_gap = energy_gap(mesh, rho, &y, f)?;
    let report = SolveReport {
        cg_iterations: out.iterations,
        final_residual: out.residual,
        energy_gap,
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((NodalField(y), report))
}

/// Exact `∫ u v` for P1 fields restricted to one cell.
fn cell_product(mesh: &Mesh, cell: usize, u: &[f64], v: &[f64]) -> f64 {
    let tri = mesh.triangles()[cell];
    let (mut diag, mut su, mut sv) = (0.0, 0.0, 0.0);
    for &k in &tri {
        diag += u[k] * v[k];
        su += u[k];
        sv += v[k];
    }
    mesh.cell_areas()[cell] / 12.0 * (diag + su * sv)
}

fn dot2(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `∫ (ρ∇y·∇φ + yφ − fφ)` by exact cellwise quadrature.
pub fn weak_residual(
    mesh: &Mesh,
    rho: &[f64],
    y: &[f64],
    f: &[f64],
    phi: &[f64],
) -> Result<f64> {
    mesh.check_cellwise(rho, "weight")?;
    mesh.check_nodal(y, "y")?;
    mesh.check_nodal(f, "f")?;
    mesh.check_nodal(phi, "phi")?;
    if let Some(&v) = mesh.dirichlet_vertices().iter().find(|&&v| phi[v] != 0.0) {
        return Err(Error::invalid(format!(
            "test function must vanish on the Dirichlet boundary, vertex {v} has {}",
            phi[v]
        )));
    }
    Ok((0..mesh.num_cells())
        .map(|c| {
            let gy = mesh.cell_gradient(c, y);
            let gp = mesh.cell_gradient(c, phi);
            rho[c] * mesh.cell_areas()[c] * dot2(gy, gp) + cell_product(mesh, c, y, phi)
                - cell_product(mesh, c, f, phi)
        })
        .sum())
}

/// `|∫(ρ|∇y|² + y²) − ∫ f y|`, zero for the Galerkin solution.
pub fn energy_gap(mesh: &Mesh, rho: &[f64], y: &[f64], f: &[f64]) -> Result<f64> {
    mesh.check_cellwise(rho, "weight")?;
    mesh.check_nodal(y, "y")?;
    mesh.check_nodal(f, "f")?;
    let mut energy = 0.0;
    let mut work = 0.0;
    for c in 0..mesh.num_cells() {
        let g = mesh.cell_gradient(c, y);
        energy += rho[c] * mesh.cell_areas()[c] * dot2(g, g) + cell_product(mesh, c, y, y);
        work += cell_product(mesh, c, f, y);
    }
    Ok((energy - work).abs())
}

/// Exact `(∫ u²)^{1/2}` of a P1 field.
pub fn l2_norm(mesh: &Mesh, u: &[f64]) -> f64 {
    (0..mesh.num_cells())
        .map(|c| cell_product(mesh, c, u, u))
        .sum::<f64>()
        .sqrt()
}

/// `(∫ ρ|∇y|²)^{1/2}`.
pub fn weighted_gradient_norm(mesh: &Mesh, rho: &[f64], y: &[f64]) -> f64 {
    (0..mesh.num_cells())
        .map(|c| {
            let g = mesh.cell_gradient(c, y);
            rho[c] * mesh.cell_areas()[c] * dot2(g, g)
        })
        .sum::<f64>()
        .sqrt()
}

/// `‖y‖_ρ = (∫(y² + ρ|∇y|²))^{1/2}`.
pub fn weighted_norm(mesh: &Mesh, rho: &[f64], y: &[f64]) -> Result<f64> {
    mesh.check_cellwise(rho, "weight")?;
    mesh.check_nodal(y, "y")?;
    let a = l2_norm(mesh, y);
    let b = weighted_gradient_norm(mesh, rho, y);
    Ok((a * a + b * b).sqrt())
}

/// Both sides of the two Cauchy–Schwarz estimates that embed the weighted
/// space into `W^{1,1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingBounds {
    /// `∫|y|`
    pub lhs1: f64,
    /// `|Ω|^{1/2} (∫y²)^{1/2}`
    pub rhs1: f64,
    /// `∫|∇y|`
    pub lhs2: f64,
    /// `(∫ρ|∇y|²)^{1/2} (∫ρ⁻¹)^{1/2}`
    pub rhs2: f64,
}

impl EmbeddingBounds {
    /// Both inequalities hold up to relative rounding slack `rel`.
    pub fn holds(&self, rel: f64) -> bool {
        self.lhs1 <= self.rhs1 * (1.0 + rel) && self.lhs2 <= self.rhs2 * (1.0 + rel)
    }
}

pub fn embedding_bounds_check(mesh: &Mesh, rho: &[f64], y: &[f64]) -> Result<EmbeddingBounds> {
    mesh.check_cellwise(rho, "weight")?;
    mesh.check_nodal(y, "y")?;
    let mut lhs1 = 0.0;
    let mut lhs2 = 0.0;
    let mut inv = 0.0;
    for c in 0..mesh.num_cells() {
        let area = mesh.cell_areas()[c];
        let vals = mesh.triangles()[c].map(|v| y[v]);
        lhs1 += area * mean_abs_linear(vals);
        let g = mesh.cell_gradient(c, y);
        lhs2 += area * dot2(g, g).sqrt();
        inv += area / rho[c];
    }
    Ok(EmbeddingBounds {
        lhs1,
        rhs1: mesh.total_area().sqrt() * l2_norm(mesh, y),
        lhs2,
        rhs2: weighted_gradient_norm(mesh, rho, y) * inv.sqrt(),
    })
}

/// Mean of `|u|` over a triangle for the linear `u` with the given vertex
/// values.
fn mean_abs_linear(vals: [f64; 3]) -> f64 {
    mean_positive_part(vals) + mean_positive_part(vals.map(|v| -v))
}

/// Mean of `max(u, 0)`; the positive region is cut out as a sub-triangle.
fn mean_positive_part(vals: [f64; 3]) -> f64 {
    let positive = vals.iter().filter(|v| **v > 0.0).count();
    match positive {
        0 => 0.0,
        3 => (vals[0] + vals[1] + vals[2]) / 3.0,
        1 => {
            let (i, &a) = vals
                .iter()
                .enumerate()
                .find(|(_, v)| **v > 0.0)
                .expect("one positive value");
            let others: Vec<f64> = (0..3).filter(|&k| k != i).map(|k| vals[k]).collect();
            let t1 = a / (a - others[0]);
            let t2 = a / (a - others[1]);
            t1 * t2 * a / 3.0
        }
        _ => {
            let mean = (vals[0] + vals[1] + vals[2]) / 3.0;
            mean + mean_positive_part(vals.map(|v| -v))
        }
    }
}

/// Seven-point degree-5 rule on the reference triangle: barycentric points
/// and weights summing to one.
const QUAD7: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_769_8;
    const B1: f64 = 0.470_142_064_105_115_1;
    const A2: f64 = 0.797_426_985_353_087_3;
    const B2: f64 = 0.101_286_507_323_456_3;
    const W1: f64 = 0.132_394_152_788_506_2;
    const W2: f64 = 0.125_939_180_544_827_1;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// `(∫ (y_h − u)²)^{1/2}` for a continuous `u`, with a degree-5 rule per
/// cell.
pub fn l2_error_against(mesh: &Mesh, y: &[f64], exact: impl Fn(f64, f64) -> f64) -> Result<f64> {
    mesh.check_nodal(y, "y")?;
    let mut sum = 0.0;
    for (c, tri) in mesh.triangles().iter().enumerate() {
        let p = tri.map(|v| mesh.vertices()[v]);
        let vals = tri.map(|v| y[v]);
        let mut cell = 0.0;
        for (bary, w) in QUAD7 {
            let x = bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0];
            let yy = bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1];
            let yh = bary[0] * vals[0] + bary[1] * vals[1] + bary[2] * vals[2];
            let e = yh - exact(x, yy);
            cell += w * e * e;
        }
        sum += mesh.cell_areas()[c] * cell;
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundarySpec;

    fn unit(n: usize, spec: BoundarySpec) -> Mesh {
        Mesh::unit_square(n, spec).unwrap()
    }

    #[test]
    fn fully_constrained_system_is_empty() {
        let m = unit(1, BoundarySpec::all_dirichlet());
        let sys = assemble_system(&m, &WeightField::constant(&m, 1.0).unwrap()).unwrap();
        assert_eq!(sys.dimension(), 0);
        let (y, rep) = solve_state(&m, &WeightField::constant(&m, 1.0).unwrap(), &[1.0; 4], 1e-10)
            .unwrap();
        assert_eq!(y.values(), &[0.0; 4]);
        assert_eq!(rep.cg_iterations, 0);
    }

    #[test]
    fn single_interior_vertex_entries() {
        // Hand assembly: the centre vertex of the 2×2 mesh touches six
        // triangles of area 1/8. Stiffness: 2·(1/2 + 1/2) from the two
        // diagonal-aligned triangles plus four triangles contributing 1/2.
        // Mass: six contributions of area/6.
        let m = unit(2, BoundarySpec::all_dirichlet());
        let sys = assemble_system(&m, &WeightField::constant(&m, 1.0).unwrap()).unwrap();
        assert_eq!(sys.dimension(), 1);
        assert_eq!(sys.free, vec![4]);
        assert!((sys.stiffness.get(4, 4) - 4.0).abs() < 1e-14);
        assert!((sys.mass.get(4, 4) - 0.125).abs() < 1e-15);
        assert!((sys.operator.get(0, 0) - 4.125).abs() < 1e-14);
    }

    #[test]
    fn stiffness_is_linear_in_weight() {
        let m = unit(3, BoundarySpec::left_dirichlet());
        let rho: Vec<f64> = (0..m.num_cells()).map(|c| 0.5 + c as f64 * 0.1).collect();
        let twice: Vec<f64> = rho.iter().map(|r| 2.0 * r).collect();
        let a = assemble_system(&m, &WeightField::new(rho).unwrap()).unwrap();
        let b = assemble_system(&m, &WeightField::new(twice).unwrap()).unwrap();
        assert_eq!(a.mass, b.mass);
        for i in 0..m.num_vertices() {
            for (j, v) in a.stiffness.row(i) {
                assert!((2.0 * v - b.stiffness.get(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn parallel_assembly_is_identical() {
        let m = unit(6, BoundarySpec::left_dirichlet());
        let rho: Vec<f64> = (0..m.num_cells()).map(|c| 1.0 + (c as f64).sin().abs()).collect();
        let rho = WeightField::new(rho).unwrap();
        let a = assemble_system_with(&m, &rho, false).unwrap();
        let b = assemble_system_with(&m, &rho, true).unwrap();
        assert_eq!(a.stiffness, b.stiffness);
        assert_eq!(a.operator, b.operator);
    }

    #[test]
    fn refinement_removes_warm_start_dependence() {
        let m = unit(8, BoundarySpec::left_dirichlet());
        let rho: Vec<f64> = (0..m.num_cells()).map(|c| 0.5 + (c as f64).cos().abs()).collect();
        let rho = WeightField::new(rho).unwrap();
        let sys = assemble_system(&m, &rho).unwrap();
        let f = m.interpolate(|x, y| 1.0 + x * y);
        let b = sys.load(&f);
        let (cold, out) = sys.solve_reduced_refined(&b, 1e-10, None).unwrap();
        let warm_start: Vec<f64> = cold.iter().map(|v| v * 1.01).collect();
        let (warm, _) = sys.solve_reduced_refined(&b, 1e-10, Some(&warm_start)).unwrap();
        let scale = cold.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in cold.iter().zip(&warm) {
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * scale);
        }
        assert!(out.residual < 1e-13, "{}", out.residual);
    }

    #[test]
    fn zero_load_gives_zero_state() {
        let m = unit(4, BoundarySpec::left_dirichlet());
        let rho = WeightField::constant(&m, 1.0).unwrap();
        let (y, rep) = solve_state(&m, &rho, &vec![0.0; 25], 1e-10).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        assert_eq!(rep.cg_iterations, 0);
        assert_eq!(rep.energy_gap, 0.0);
    }

    #[test]
    fn nonpositive_weight_rejected() {
        let m = unit(1, BoundarySpec::all_dirichlet());
        assert!(WeightField::new(vec![1.0, -1.0]).is_err());
        let bad = WeightField::new(vec![1.0, 1.0]).unwrap();
        assert!(solve_state(&m, &bad, &[0.0; 4], 2.0).is_err());
    }

    #[test]
    fn weighted_norm_examples() {
        let m = unit(4, BoundarySpec::left_dirichlet());
        let rho: Vec<f64> = (0..m.num_cells()).map(|c| 1.0 + c as f64).collect();
        assert!((weighted_norm(&m, &rho, &vec![1.0; 25]).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(weighted_norm(&m, &rho, &vec![0.0; 25]).unwrap(), 0.0);
        let x = m.interpolate(|x, _| x);
        let ones = vec![1.0; m.num_cells()];
        // ∫x² over P1 interpolant of x is exact since x is linear
        assert!((weighted_norm(&m, &ones, &x).unwrap() - (4.0f64 / 3.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn embedding_examples() {
        let m = unit(4, BoundarySpec::left_dirichlet());
        let ones = vec![1.0; m.num_cells()];
        let b = embedding_bounds_check(&m, &ones, &vec![1.0; 25]).unwrap();
        assert!((b.lhs1 - 1.0).abs() < 1e-14 && (b.rhs1 - 1.0).abs() < 1e-14);
        assert_eq!((b.lhs2, b.rhs2), (0.0, 0.0));
        let fours = vec![4.0; m.num_cells()];
        let b = embedding_bounds_check(&m, &fours, &m.interpolate(|x, _| x)).unwrap();
        assert!((b.lhs2 - 1.0).abs() < 1e-14 && (b.rhs2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mean_abs_of_sign_changing_linear() {
        // u = x − 1/2 on the reference triangle (0,0),(1,0),(0,1): values
        // −1/2, 1/2, −1/2. Positive part lives on x > 1/2, a triangle of
        // area 1/8 where the mean of u is 1/6: ∫u₊ = 1/48. ∫u = −1/12, so
        // ∫|u| = 2/48 + 1/12 = 1/8, mean over area 1/2 is 1/4.
        let m = mean_abs_linear([-0.5, 0.5, -0.5]);
        assert!((m - 0.25).abs() < 1e-15);
        assert_eq!(mean_abs_linear([0.0, 0.0, 0.0]), 0.0);
        assert!((mean_abs_linear([-1.0, -2.0, -3.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn weak_residual_rejects_boundary_values() {
        let m = unit(2, BoundarySpec::all_dirichlet());
        let rho = vec![1.0; 8];
        let mut phi = vec![0.0; 9];
        assert_eq!(weak_residual(&m, &rho, &phi, &phi, &phi).unwrap(), 0.0);
        phi[0] = 1.0;
        assert!(weak_residual(&m, &rho, &vec![0.0; 9], &vec![0.0; 9], &phi).is_err());
    }

    #[test]
    fn quadrature_integrates_quintics() {
        let m = unit(1, BoundarySpec::all_dirichlet());
        let zero = vec![0.0; 4];
        // ∫₀¹∫₀¹ (x y)² = 1/9, a quartic integrand
        let e = l2_error_against(&m, &zero, |x, y| x * y).unwrap();
        assert!((e * e - 1.0 / 9.0).abs() < 1e-14);
        let e = l2_error_against(&m, &zero, |x, y| x * x + y).unwrap();
        // ∫ (x² + y)² = 1/5 + 2·(1/3)(1/2) + 1/3
        assert!((e * e - (0.2 + 1.0 / 3.0 + 1.0 / 3.0)).abs() < 1e-14);
    }
}
