//! Projected gradient descent with Armijo backtracking on the reduced cost.
//!
//! Each iterate is `ρ_{k+1} = P(ρ_k − s_k g_k / |c|)`, where `P` is
//! [`project_admissible`] and the division by cell area takes the step in
//! the area-weighted metric. The step `s_k` is backtracked from
//! `s_{k−1} / backtrack_factor` until
//!
//! ```text
//! J(ρ_{k+1}) ≤ J(ρ_k) − c · s_k · ⟨g_k, D_k⟩,   D_k = (ρ_k − ρ_{k+1}) / s_k
//! ```
//!
//! and the run stops once `‖D_k‖ ≤ grad_tol` in the area-weighted norm.

use crate::control::{area_norm, bv_norm, l1_distance, project_admissible, AdmissibleSet, WeightField};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::objective::{CostBreakdown, CostWeights, ReducedProblem};
use crate::solver::{l2_norm, weighted_gradient_norm, NodalField, SolverOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub max_iters: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub initial_step: f64,
    pub grad_tol: f64,
    /// TV smoothing; `None` selects `1e-6 · mean(ξ₂)`.
    pub tv_eps: Option<f64>,
    pub solver_tol: f64,
    pub seed: u64,
    pub weights: CostWeights,
    /// Parallel element assembly (results are identical either way).
    pub parallel: bool,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            max_iters: 500,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            initial_step: 1.0,
            grad_tol: 1e-6,
            tv_eps: None,
            solver_tol: 1e-12,
            seed: 0,
            weights: CostWeights::default(),
            parallel: false,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        unit("armijo_c", self.armijo_c)?;
        unit("backtrack_factor", self.backtrack_factor)?;
        unit("solver_tol", self.solver_tol)?;
        positive("initial_step", self.initial_step)?;
        positive("grad_tol", self.grad_tol)?;
        if let Some(eps) = self.tv_eps {
            positive("tv_eps", eps)?;
        }
        self.weights.validate()
    }

    pub fn resolved_tv_eps(&self, set: &AdmissibleSet) -> f64 {
        self.tv_eps.unwrap_or_else(|| {
            let mean = set.xi2.iter().sum::<f64>() / set.xi2.len().max(1) as f64;
            1e-6 * mean
        })
    }
}

/// State of the run at one iterate `ρ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: CostBreakdown,
    /// Step length that produced this iterate (0 for the initial one).
    pub step: f64,
    /// `‖(ρ_{k−1} − ρ_k) / s‖` in the area-weighted norm (0 initially).
    pub displacement: f64,
    /// Sufficient-decrease amount `c · s · ⟨g, D⟩` the step had to achieve.
    pub required_decrease: f64,
    pub bv_norm: f64,
    /// `‖y_k‖` in `L²(Ω)`.
    pub state_norm: f64,
    /// `‖∇y_k‖` in `L²(Ω, ρ_k dx)`.
    pub weighted_gradient_norm: f64,
    /// Conjugate-gradient iterations spent reaching this iterate, including
    /// rejected trial steps and the adjoint solve of the previous iterate.
    pub cg_iterations: usize,
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizeTrace {
    pub records: Vec<IterationRecord>,
    /// Displacement norm measured at the last gradient evaluation.
    pub final_displacement: f64,
    pub converged: bool,
}

impl OptimizeTrace {
    pub fn costs(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.cost.total)
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub rho: WeightField,
    pub y: NodalField,
    pub trace: OptimizeTrace,
}

fn record(
    mesh: &Mesh,
    iteration: usize,
    rho: &WeightField,
    y: &[f64],
    cost: CostBreakdown,
    step: f64,
    displacement: f64,
    required_decrease: f64,
    cg_iterations: usize,
) -> Result<IterationRecord> {
    Ok(IterationRecord {
        iteration,
        cost,
        step,
        displacement,
        required_decrease,
        bv_norm: bv_norm(mesh, rho)?,
        state_norm: l2_norm(mesh, y),
        weighted_gradient_norm: weighted_gradient_norm(mesh, rho, y),
        cg_iterations,
        rho: rho.to_vec(),
    })
}

pub fn optimize(
    mesh: &Mesh,
    set: &AdmissibleSet,
    f: &[f64],
    y_d: &[f64],
    rho0: &WeightField,
    cfg: &OptimizeConfig,
) -> Result<OptimizeResult> {
    cfg.validate()?;
    set.check(mesh)?;
    mesh.check_nodal(f, "f")?;
    mesh.check_nodal(y_d, "y_d")?;
    mesh.check_cellwise(rho0, "rho0")?;

    let mass_tol = 1e-9 * set.mass.abs().max(1.0);
    let mut rho = if set.membership(mesh, rho0).is_member(mass_tol) {
        rho0.clone()
    } else {
        project_admissible(mesh, rho0, set)?
    };

    let problem = ReducedProblem {
        mesh,
        f,
        y_d,
        tv_eps: cfg.resolved_tv_eps(set),
        weights: cfg.weights,
        solver: SolverOptions {
            tol: cfg.solver_tol,
            parallel: cfg.parallel,
            refine: true,
        },
    };
    let areas = mesh.cell_areas();

    let mut eval = problem.evaluate(&rho, None)?;
    let mut trace = OptimizeTrace::default();
    trace.records.push(record(
        mesh,
        0,
        &rho,
        &eval.y,
        eval.cost,
        0.0,
        0.0,
        0.0,
        eval.state_report.cg_iterations,
    )?);

    let mut step = cfg.initial_step;
    let mut adjoint: Option<NodalField> = None;
    let mut last_move: Option<(Vec<f64>, Vec<f64>)> = None;
    for k in 0..cfg.max_iters {
        let (g, p, adj_report) = problem.gradient(&rho, &eval, adjoint.as_deref())?;
        let mut cg_spent = adj_report.cg_iterations;
        let direction: Vec<f64> = g.iter().zip(areas).map(|(g, a)| g / a).collect();
        let j0 = eval.cost.total;

        // Spectral (Barzilai-Borwein) trial step from the last accepted move,
        // falling back to growing the previous step.
        if let Some((d_rho, g_prev)) = &last_move {
            let ss: f64 = d_rho.iter().zip(areas).map(|(r, a)| a * r * r).sum();
            let sy: f64 = d_rho
                .iter()
                .zip(g.iter().zip(g_prev))
                .map(|(r, (a, b))| r * (a - b))
                .sum();
            let bb = ss / sy;
            step = if sy > 0.0 && bb.is_finite() {
                bb.clamp(MIN_TRIAL_STEP, MAX_TRIAL_STEP)
            } else {
                step / cfg.backtrack_factor
            };
        }
        let accepted = loop {
            // Below this floor the displacement is rounding noise in ρ, not a
            // stationarity measure.
            let resolvable = f64::EPSILON * max_abs(&rho) / step <= 1e-2 * cfg.grad_tol;
            if step < 1e-16 || !resolvable {
                return Err(Error::Stalled {
                    iteration: k + 1,
                    step,
                    trace: Box::new(trace),
                });
            }
            let shifted: Vec<f64> = rho
                .iter()
                .zip(&direction)
                .map(|(r, d)| r - step * d)
                .collect();
            let trial = project_admissible(mesh, &shifted, set)?;
            let disp: Vec<f64> = rho.iter().zip(trial.iter()).map(|(a, b)| (a - b) / step).collect();
            let disp_norm = area_norm(mesh, &disp);
            let decrease: f64 = g.iter().zip(rho.iter().zip(trial.iter())).map(|(g, (a, b))| g * (a - b)).sum();
            let required = cfg.armijo_c * decrease;

            let trial_eval = problem.evaluate(&trial, Some(&eval.y))?;
            cg_spent += trial_eval.state_report.cg_iterations;
            let stationary = disp_norm <= cfg.grad_tol;
            if trial_eval.cost.total <= j0 - required
                || (stationary && trial_eval.cost.total <= j0)
            {
                break Some((trial, trial_eval, disp_norm, required));
            }
            if stationary {
                // Inside the stopping tolerance but rounding in J prevents
                // any decrease: keep ρ_k.
                trace.final_displacement = disp_norm;
                break None;
            }
            step *= cfg.backtrack_factor;
            trace.final_displacement = disp_norm;
        };

        let Some((trial, trial_eval, disp_norm, required)) = accepted else {
            trace.converged = true;
            break;
        };
        last_move = Some((
            trial.iter().zip(rho.iter()).map(|(a, b)| a - b).collect(),
            g,
        ));
        rho = trial;
        eval = trial_eval;
        adjoint = Some(p);
        trace.final_displacement = disp_norm;
        trace.records.push(record(
            mesh,
            k + 1,
            &rho,
            &eval.y,
            eval.cost,
            step,
            disp_norm,
            required,
            cg_spent,
        )?);
        if disp_norm <= cfg.grad_tol {
            trace.converged = true;
            break;
        }
    }

    Ok(OptimizeResult {
        rho,
        y: eval.y,
        trace,
    })
}

/// Boundedness of a minimizing sequence: the suprema of `‖ρ_k‖_BV`,
/// `‖y_k‖_{L²}` and `‖∇y_k‖_{L²(ρ_k dx)}` along the trace, and how much the
/// last iterates still move.
#[derive(Debug, Clone, PartialEq)]
pub struct TauBoundednessReport {
    pub sup_bv_norm: f64,
    pub sup_state_norm: f64,
    pub sup_weighted_gradient_norm: f64,
    /// `max_k ‖ρ_k − ρ_last‖_{L¹}` over the last (up to) 10 iterates.
    pub tail_l1: f64,
    pub tail_tol: f64,
    pub sups_finite: bool,
    pub tail_ok: bool,
    /// Iterations whose weight leaves the admissible set (bounds exact,
    /// mass within `1e-9 · max(1, m)`).
    pub infeasible_iterations: Vec<usize>,
}

impl TauBoundednessReport {
    pub fn bounded(&self) -> bool {
        self.sups_finite && self.tail_ok && self.infeasible_iterations.is_empty()
    }
}

pub const TAIL_LENGTH: usize = 10;

/// Clamp for the spectral trial step.
pub const MIN_TRIAL_STEP: f64 = 1e-10;
pub const MAX_TRIAL_STEP: f64 = 1e10;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn tau_boundedness_report(
    mesh: &Mesh,
    set: &AdmissibleSet,
    trace: &OptimizeTrace,
    tail_tol: f64,
) -> Result<TauBoundednessReport> {
    let last = trace
        .records
        .last()
        .ok_or_else(|| Error::invalid("empty optimization trace"))?;
    let sup = |f: fn(&IterationRecord) -> f64| trace.records.iter().map(f).fold(0.0, f64::max);
    let sup_bv_norm = sup(|r| r.bv_norm);
    let sup_state_norm = sup(|r| r.state_norm);
    let sup_weighted_gradient_norm = sup(|r| r.weighted_gradient_norm);
    let start = trace.records.len().saturating_sub(TAIL_LENGTH);
    let tail_l1 = trace.records[start..]
        .iter()
        .map(|r| l1_distance(mesh, &r.rho, &last.rho))
        .fold(0.0, f64::max);
    let mass_tol = 1e-9 * set.mass.abs().max(1.0);
    let infeasible_iterations = trace
        .records
        .iter()
        .filter(|r| {
            r.rho.len() != mesh.num_cells() || !set.membership(mesh, &r.rho).is_member(mass_tol)
        })
        .map(|r| r.iteration)
        .collect();
    Ok(TauBoundednessReport {
        sup_bv_norm,
        sup_state_norm,
        sup_weighted_gradient_norm,
        tail_l1,
        tail_tol,
        sups_finite: [sup_bv_norm, sup_state_norm, sup_weighted_gradient_norm]
            .iter()
            .all(|v| v.is_finite()),
        tail_ok: tail_l1 <= tail_tol,
        infeasible_iterations,
    })
}
