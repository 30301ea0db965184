//! Piecewise-constant weights, their total variation, and the Euclidean
//! projection onto the admissible set
//! `{ρ : ξ₁ ≤ ρ ≤ ξ₂ cellwise, Σ_c |c| ρ_c = m}`.
//!
//! Functions that only measure a field (`mass`, `discrete_tv`, `bv_norm`)
//! take plain cell slices so they also apply to differences and
//! perturbations; the solver requires a validated [`WeightField`].

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Strictly positive, finite, one value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField(Vec<f64>);

impl WeightField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((c, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::invalid(format!(
                "weight must be finite and strictly positive, cell {c} has {v}"
            )));
        }
        Ok(WeightField(values))
    }

    pub fn for_mesh(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        mesh.check_cellwise(&values, "weight")?;
        Self::new(values)
    }

    pub fn constant(mesh: &Mesh, value: f64) -> Result<Self> {
        Self::new(vec![value; mesh.num_cells()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn reciprocal(&self) -> Vec<f64> {
        self.0.iter().map(|r| 1.0 / r).collect()
    }
}

impl Deref for WeightField {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `ρ ↦ Σ_c |c| ρ_c`.
pub fn mass(mesh: &Mesh, rho: &[f64]) -> Result<f64> {
    mesh.check_cellwise(rho, "weight")?;
    Ok(area_dot(mesh.cell_areas(), rho))
}

fn area_dot(areas: &[f64], v: &[f64]) -> f64 {
    areas.iter().zip(v).map(|(a, v)| a * v).sum()
}

/// `φ_ε(t) = √(t² + ε²) − ε`, so that `|t| − ε ≤ φ_ε(t) ≤ |t|`.
pub fn smoothed_abs(t: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        return t.abs();
    }
    // Equivalent to hypot(t, eps) - eps without cancellation for small t.
    t * t / (t.hypot(eps) + eps)
}

fn smoothed_abs_derivative(t: f64, eps: f64) -> f64 {
    t / t.hypot(eps)
}

/// Total variation of a piecewise-constant field: interface length times
/// `φ_ε` of the jump, summed over interior edges. `eps = 0` gives the exact
/// jump TV.
/// Neumaier compensated sum. Cost values are compared across Armijo trials
/// at differences of a few ulps, so plain accumulation is too noisy.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

pub fn discrete_tv(mesh: &Mesh, rho: &[f64], eps: f64) -> Result<f64> {
    mesh.check_cellwise(rho, "weight")?;
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("TV smoothing must be >= 0, got {eps}")));
    }
    Ok(compensated_sum(
        mesh.interior_edges()
            .iter()
            .map(|e| e.length * smoothed_abs(rho[e.cells[0]] - rho[e.cells[1]], eps)),
    ))
}

/// Exact gradient of `discrete_tv(·, eps)` with respect to the cell values.
pub fn discrete_tv_gradient(mesh: &Mesh, rho: &[f64], eps: f64) -> Result<Vec<f64>> {
    mesh.check_cellwise(rho, "weight")?;
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!(
            "TV gradient needs a positive smoothing parameter, got {eps}"
        )));
    }
    let mut grad = vec![0.0; rho.len()];
    for e in mesh.interior_edges() {
        let [a, b] = e.cells;
        let d = e.length * smoothed_abs_derivative(rho[a] - rho[b], eps);
        grad[a] += d;
        grad[b] -= d;
    }
    Ok(grad)
}

/// `‖ρ‖_BV = Σ_c |c| |ρ_c| + TV(ρ)`.
pub fn bv_norm(mesh: &Mesh, rho: &[f64]) -> Result<f64> {
    let l1: f64 = mesh
        .cell_areas()
        .iter()
        .zip(rho)
        .map(|(a, r)| a * r.abs())
        .sum();
    Ok(l1 + discrete_tv(mesh, rho, 0.0)?)
}

/// Area-weighted L¹ distance `Σ_c |c| |a_c − b_c|`.
pub fn l1_distance(mesh: &Mesh, a: &[f64], b: &[f64]) -> f64 {
    mesh.cell_areas()
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y).abs())
        .sum()
}

/// Area-weighted L² norm `(Σ_c |c| v_c²)^{1/2}`.
pub fn area_norm(mesh: &Mesh, v: &[f64]) -> f64 {
    mesh.cell_areas()
        .iter()
        .zip(v)
        .map(|(a, x)| a * x * x)
        .sum::<f64>()
        .sqrt()
}

/// Below this lower bound a weight is flagged as badly conditioned.
pub const CONDITIONING_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleSet {
    pub xi1: Vec<f64>,
    pub xi2: Vec<f64>,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub mass_min: f64,
    pub mass_max: f64,
    pub min_lower_bound: f64,
    /// Some ξ₁ entry is below [`CONDITIONING_FLOOR`].
    pub conditioning_warning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipReport {
    pub bounds_ok: bool,
    pub mass_error: f64,
    pub worst_cell: Option<usize>,
}

impl MembershipReport {
    pub fn is_member(&self, mass_tol: f64) -> bool {
        self.bounds_ok && self.mass_error <= mass_tol
    }
}

impl AdmissibleSet {
    pub fn new(xi1: Vec<f64>, xi2: Vec<f64>, mass: f64) -> Self {
        AdmissibleSet { xi1, xi2, mass }
    }

    pub fn constant(mesh: &Mesh, xi1: f64, xi2: f64, mass: f64) -> Self {
        let n = mesh.num_cells();
        AdmissibleSet::new(vec![xi1; n], vec![xi2; n], mass)
    }

    /// Check bound ordering, positivity and `Σ|c|ξ₁ ≤ m ≤ Σ|c|ξ₂`.
    pub fn check(&self, mesh: &Mesh) -> Result<FeasibilityReport> {
        mesh.check_cellwise(&self.xi1, "xi1")?;
        mesh.check_cellwise(&self.xi2, "xi2")?;
        if !self.mass.is_finite() {
            return Err(Error::invalid("mass must be finite"));
        }
        for (c, (&lo, &hi)) in self.xi1.iter().zip(&self.xi2).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(format!("non-finite bound on cell {c}")));
            }
            if lo <= 0.0 {
                return Err(Error::Infeasible(format!(
                    "xi1 > 0 violated on cell {c}: xi1 = {lo}"
                )));
            }
            if lo > hi {
                return Err(Error::Infeasible(format!(
                    "xi1 <= xi2 violated on cell {c}: {lo} > {hi}"
                )));
            }
        }
        let areas = mesh.cell_areas();
        let mass_min = area_dot(areas, &self.xi1);
        let mass_max = area_dot(areas, &self.xi2);
        let slack = 1e-12 * self.mass.abs().max(1.0);
        if self.mass < mass_min - slack {
            return Err(Error::Infeasible(format!(
                "sum(area * xi1) <= m violated: {mass_min} > {}",
                self.mass
            )));
        }
        if self.mass > mass_max + slack {
            return Err(Error::Infeasible(format!(
                "m <= sum(area * xi2) violated: {} > {mass_max}",
                self.mass
            )));
        }
        let min_lower_bound = self.xi1.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(FeasibilityReport {
            mass_min,
            mass_max,
            min_lower_bound,
            conditioning_warning: min_lower_bound < CONDITIONING_FLOOR,
        })
    }

    /// Bounds are checked exactly, the mass residual is returned.
    pub fn membership(&self, mesh: &Mesh, rho: &[f64]) -> MembershipReport {
        let worst_cell = rho
            .iter()
            .enumerate()
            .find(|(c, r)| !(**r >= self.xi1[*c] && **r <= self.xi2[*c]))
            .map(|(c, _)| c);
        MembershipReport {
            bounds_ok: worst_cell.is_none() && rho.len() == self.xi1.len(),
            mass_error: (area_dot(mesh.cell_areas(), rho) - self.mass).abs(),
            worst_cell,
        }
    }

    pub fn mass_tolerance(&self) -> f64 {
        1e-12 * self.mass.abs().max(1.0)
    }
}

/// Area-weighted Euclidean projection of `g` onto the admissible set.
///
/// The minimizer of `Σ_c |c| (ρ_c − g_c)²` has the form
/// `ρ_c(λ) = clip(g_c − λ, ξ₁_c, ξ₂_c)`; `λ` is located by bisection on the
/// nonincreasing mass residual and then refined by solving the mass equation
/// exactly on the free cells.
pub fn project_admissible(mesh: &Mesh, g: &[f64], set: &AdmissibleSet) -> Result<WeightField> {
    mesh.check_cellwise(g, "g")?;
    if let Some(c) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite input on cell {c}")));
    }
    set.check(mesh)?;
    let areas = mesh.cell_areas();
    let (lo, hi) = (&set.xi1, &set.xi2);
    let m = set.mass;
    let tol = set.mass_tolerance();

    let clipped = |lambda: f64| -> Vec<f64> {
        g.iter()
            .zip(lo.iter().zip(hi))
            .map(|(&gc, (&l, &h))| (gc - lambda).clamp(l, h))
            .collect()
    };
    let residual = |rho: &[f64]| area_dot(areas, rho) - m;

    let mut a = g
        .iter()
        .zip(hi)
        .map(|(gc, h)| gc - h)
        .fold(f64::INFINITY, f64::min);
    let mut b = g
        .iter()
        .zip(lo)
        .map(|(gc, l)| gc - l)
        .fold(f64::NEG_INFINITY, f64::max);

    // residual(a) >= 0 >= residual(b)
    let mut best = clipped(a);
    let mut best_res = residual(&best);
    if best_res.abs() > tol {
        let end = clipped(b);
        let end_res = residual(&end);
        if end_res.abs() < best_res.abs() {
            best = end;
            best_res = end_res;
        }
    }
    let mut lambda = a;
    for _ in 0..200 {
        if best_res.abs() <= tol {
            break;
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let rho = clipped(mid);
        let r = residual(&rho);
        if r > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if r.abs() < best_res.abs() {
            best = rho;
            best_res = r;
            lambda = mid;
        }
    }

    // Refine: with the active set at λ fixed, the mass equation is linear in λ.
    let mut free_area = 0.0;
    let mut free_sum = 0.0;
    let mut fixed_mass = 0.0;
    for c in 0..g.len() {
        let t = g[c] - lambda;
        if t > lo[c] && t < hi[c] {
            free_area += areas[c];
            free_sum += areas[c] * g[c];
        } else {
            fixed_mass += areas[c] * best[c];
        }
    }
    if free_area > 0.0 {
        let exact = (free_sum + fixed_mass - m) / free_area;
        let rho = clipped(exact);
        let r = residual(&rho);
        if r.abs() <= best_res.abs() {
            best = rho;
            best_res = r;
        }
    }

    if best_res.abs() > tol {
        return Err(Error::NumericalFailure {
            message: "projection bisection did not reach the mass tolerance".into(),
            final_residual: best_res.abs(),
            residuals: vec![],
        });
    }
    WeightField::new(best)
}
