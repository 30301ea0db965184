//! The tracking functional
//!
//! ```text
//! I(ρ, y) = ∫|y − y_d|² + ∫ρ|∇y|² + TV_ε(ρ)
//! ```
//!
//! and its reduced gradient `dJ/dρ` for `J(ρ) = I(ρ, y(ρ))`.
//!
//! With `A = K_ρ + M` on the free vertices and `A y = M f`, the adjoint state
//! solves
//!
//! ```text
//! A p = −2 M (y − y_d) − 2 K_ρ y
//! ```
//!
//! The second load term carries the implicit dependence of the energy term
//! on ρ through y. The cell derivative is then
//! `|c| (|∇y|² + ∇y·∇p) + ∂TV_ε/∂ρ_c`: the first part is the explicit
//! derivative of `∫ρ|∇y|²`, the second is `pᵀ (∂K/∂ρ_c) y`.

use crate::control::{compensated_sum, discrete_tv, discrete_tv_gradient, WeightField};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::solver::{
    assemble_system_with, solve_state_in, LinearSystem, NodalField, SolveReport, SolverOptions,
};

/// Unraveled cost terms. `total` is the weighted sum; with unit weights it
/// is exactly `tracking + weighted_energy + tv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub tracking: f64,
    pub weighted_energy: f64,
    pub tv: f64,
    pub total: f64,
}

/// Per-term multipliers. The unweighted functional is `CostWeights::default()`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub tracking: f64,
    pub energy: f64,
    pub tv: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            tracking: 1.0,
            energy: 1.0,
            tv: 1.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.tracking, self.energy, self.tv]
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(Error::invalid(format!("cost weights must be >= 0: {self:?}")));
        }
        Ok(())
    }
}

pub fn cost(mesh: &Mesh, rho: &[f64], y: &[f64], y_d: &[f64], eps: f64) -> Result<CostBreakdown> {
    cost_weighted(mesh, rho, y, y_d, eps, CostWeights::default())
}

pub fn cost_weighted(
    mesh: &Mesh,
    rho: &[f64],
    y: &[f64],
    y_d: &[f64],
    eps: f64,
    weights: CostWeights,
) -> Result<CostBreakdown> {
    mesh.check_cellwise(rho, "weight")?;
    mesh.check_nodal(y, "y")?;
    mesh.check_nodal(y_d, "y_d")?;
    let mut tracking = Vec::with_capacity(rho.len());
    let mut energy = Vec::with_capacity(rho.len());
    for (c, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.cell_areas()[c];
        let e = tri.map(|v| y[v] - y_d[v]);
        let sum = e[0] + e[1] + e[2];
        tracking.push(area / 12.0 * (e[0] * e[0] + e[1] * e[1] + e[2] * e[2] + sum * sum));
        let g = mesh.cell_gradient(c, y);
        energy.push(rho[c] * area * (g[0] * g[0] + g[1] * g[1]));
    }
    let tracking = compensated_sum(tracking);
    let weighted_energy = compensated_sum(energy);
    let tv = discrete_tv(mesh, rho, eps)?;
    let total = compensated_sum([
        weights.tracking * tracking,
        weights.energy * weighted_energy,
        weights.tv * tv,
    ]);
    Ok(CostBreakdown {
        tracking,
        weighted_energy,
        tv,
        total,
    })
}

/// Adjoint solve on an assembled state operator.
pub fn solve_adjoint_in(
    mesh: &Mesh,
    system: &LinearSystem,
    y: &[f64],
    y_d: &[f64],
    weights: CostWeights,
    tol: f64,
    warm_start: Option<&[f64]>,
) -> Result<(NodalField, SolveReport)> {
    mesh.check_nodal(y, "y")?;
    mesh.check_nodal(y_d, "y_d")?;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::invalid(format!("solver tolerance must be in (0, 1), got {tol}")));
    }
    let start = std::time::Instant::now();
    let misfit: Vec<f64> = y.iter().zip(y_d).map(|(a, b)| a - b).collect();
    let m_misfit = system.mass.mul_vec(&misfit);
    let k_y = system.stiffness.mul_vec(y);
    let load: Vec<f64> = m_misfit
        .iter()
        .zip(&k_y)
        .map(|(m, k)| -2.0 * weights.tracking * m - 2.0 * weights.energy * k)
        .collect();
    let rhs = system.restrict(&load);
    let (p, out) = system.solve_reduced(&rhs, tol, warm_start)?;

    // Energy identity of the adjoint: pᵀ A p = pᵀ rhs.
    let p_free = system.restrict(&p);
    let a_p = system.operator.bilinear(&p_free, &p_free);
    let work: f64 = p_free.iter().zip(&rhs).map(|(a, b)| a * b).sum();
    let report = SolveReport {
        cg_iterations: out.iterations,
        final_residual: out.residual,
        energy_gap: (a_p - work).abs(),
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((NodalField::new(mesh, p)?, report))
}

/// Adjoint state for the unweighted functional.
pub fn solve_adjoint(
    mesh: &Mesh,
    rho: &WeightField,
    y: &[f64],
    y_d: &[f64],
    tol: f64,
) -> Result<(NodalField, SolveReport)> {
    let system = assemble_system_with(mesh, rho, false)?;
    solve_adjoint_in(mesh, &system, y, y_d, CostWeights::default(), tol, None)
}

pub fn reduced_gradient(
    mesh: &Mesh,
    rho: &[f64],
    y: &[f64],
    p: &[f64],
    eps: f64,
) -> Result<Vec<f64>> {
    reduced_gradient_weighted(mesh, rho, y, p, eps, CostWeights::default())
}

pub fn reduced_gradient_weighted(
    mesh: &Mesh,
    rho: &[f64],
    y: &[f64],
    p: &[f64],
    eps: f64,
    weights: CostWeights,
) -> Result<Vec<f64>> {
    mesh.check_nodal(y, "y")?;
    mesh.check_nodal(p, "p")?;
    let mut grad = discrete_tv_gradient(mesh, rho, eps)?;
    for (c, g) in grad.iter_mut().enumerate() {
        let gy = mesh.cell_gradient(c, y);
        let gp = mesh.cell_gradient(c, p);
        let area = mesh.cell_areas()[c];
        *g = weights.tv * *g
            + area
                * (weights.energy * (gy[0] * gy[0] + gy[1] * gy[1])
                    + gy[0] * gp[0]
                    + gy[1] * gp[1]);
    }
    Ok(grad)
}

/// The reduced functional `ρ ↦ I(ρ, y(ρ))` for fixed data.
#[derive(Debug, Clone)]
pub struct ReducedProblem<'a> {
    pub mesh: &'a Mesh,
    pub f: &'a [f64],
    pub y_d: &'a [f64],
    pub tv_eps: f64,
    pub weights: CostWeights,
    pub solver: SolverOptions,
}

/// State, cost and assembled operator at one control.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub y: NodalField,
    pub cost: CostBreakdown,
    pub state_report: SolveReport,
    pub system: LinearSystem,
}

impl<'a> ReducedProblem<'a> {
    pub fn new(mesh: &'a Mesh, f: &'a [f64], y_d: &'a [f64], tv_eps: f64, tol: f64) -> Self {
        ReducedProblem {
            mesh,
            f,
            y_d,
            tv_eps,
            weights: CostWeights::default(),
            solver: SolverOptions::new(tol),
        }
    }

    pub fn evaluate(&self, rho: &WeightField, warm_start: Option<&[f64]>) -> Result<Evaluation> {
        let system = assemble_system_with(self.mesh, rho, self.solver.parallel)?;
        let (y, state_report) =
            solve_state_in(self.mesh, &system, rho, self.f, self.solver, warm_start)?;
        let cost = cost_weighted(self.mesh, rho, &y, self.y_d, self.tv_eps, self.weights)?;
        Ok(Evaluation {
            y,
            cost,
            state_report,
            system,
        })
    }

    /// `J(ρ)` alone.
    pub fn value(&self, rho: &WeightField) -> Result<f64> {
        Ok(self.evaluate(rho, None)?.cost.total)
    }

    /// Reduced gradient at an evaluated control; returns the gradient, the
    /// adjoint and its report.
    pub fn gradient(
        &self,
        rho: &WeightField,
        eval: &Evaluation,
        adjoint_warm_start: Option<&[f64]>,
    ) -> Result<(Vec<f64>, NodalField, SolveReport)> {
        let (p, report) = solve_adjoint_in(
            self.mesh,
            &eval.system,
            &eval.y,
            self.y_d,
            self.weights,
            self.solver.tol,
            adjoint_warm_start,
        )?;
        let g = reduced_gradient_weighted(self.mesh, rho, &eval.y, &p, self.tv_eps, self.weights)?;
        Ok((g, p, report))
    }
}

/// Outcome of comparing the adjoint gradient with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub adjoint: Vec<f64>,
    pub finite_difference: Vec<f64>,
    pub max_relative_error: f64,
    pub worst_cell: usize,
}

/// Compare the reduced gradient with central differences of `J`, perturbing
/// each cell by `rel_step · ρ_c` and re-solving the state. The relative
/// error of a cell is `|g − g_fd| / max(|g|, |g_fd|, floor)`, where `floor`
/// is `1e-8 · max_c |g_fd|` and only guards exact zeros.
pub fn gradient_check(
    problem: &ReducedProblem<'_>,
    rho: &WeightField,
    rel_step: f64,
) -> Result<GradientCheck> {
    let eval = problem.evaluate(rho, None)?;
    let (adjoint, _, _) = problem.gradient(rho, &eval, None)?;
    let mut fd = Vec::with_capacity(rho.len());
    for c in 0..rho.len() {
        let h = rel_step * rho[c];
        let mut plus = rho.to_vec();
        plus[c] += h;
        let mut minus = rho.to_vec();
        minus[c] -= h;
        let jp = problem.value(&WeightField::new(plus)?)?;
        let jm = problem.value(&WeightField::new(minus)?)?;
        fd.push((jp - jm) / (2.0 * h));
    }
    Ok(compare_gradients(adjoint, fd))
}

pub fn compare_gradients(adjoint: Vec<f64>, finite_difference: Vec<f64>) -> GradientCheck {
    let floor = 1e-8
        * finite_difference
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
    let mut max_relative_error = 0.0;
    let mut worst_cell = 0;
    for (c, (a, b)) in adjoint.iter().zip(&finite_difference).enumerate() {
        let err = (a - b).abs() / a.abs().max(b.abs()).max(floor);
        if err > max_relative_error {
            max_relative_error = err;
            worst_cell = c;
        }
    }
    GradientCheck {
        adjoint,
        finite_difference,
        max_relative_error,
        worst_cell,
    }
}
