//! Convergence of weight sequences `ρ_k → ρ` measured in the variable spaces
//! `L²(Ω, ρ_k dx)`.
//!
//! All fields are piecewise constant, so every integral here is an exact
//! area-weighted sum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{discrete_tv, l1_distance, WeightField};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSequence {
    pub fields: Vec<WeightField>,
    pub limit: Option<WeightField>,
}

impl WeightSequence {
    pub fn new(fields: Vec<WeightField>, limit: Option<WeightField>) -> Self {
        WeightSequence { fields, limit }
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if self.fields.is_empty() {
            return Err(Error::invalid("weight sequence is empty"));
        }
        for (k, f) in self.fields.iter().chain(self.limit.iter()).enumerate() {
            mesh.check_cellwise(f, &format!("sequence entry {k}"))?;
        }
        Ok(())
    }

    fn limit(&self) -> Result<&WeightField> {
        self.limit
            .as_ref()
            .ok_or_else(|| Error::invalid("weight sequence has no limit field"))
    }

    /// `ρ_k ≡ 1 + 1/k`, `k = 1..=count`, with limit `ρ ≡ 1`.
    pub fn one_over_k(mesh: &Mesh, count: usize) -> Result<Self> {
        let fields = (1..=count)
            .map(|k| WeightField::constant(mesh, 1.0 + 1.0 / k as f64))
            .collect::<Result<_>>()?;
        Ok(WeightSequence::new(fields, Some(WeightField::constant(mesh, 1.0)?)))
    }

    /// `count` copies of `ρ ≡ value`, with the same limit.
    pub fn constant(mesh: &Mesh, count: usize, value: f64) -> Result<Self> {
        let field = WeightField::constant(mesh, value)?;
        Ok(WeightSequence::new(vec![field.clone(); count], Some(field)))
    }

    /// Two-valued oscillation: on cells left of the vertical midline
    /// `ρ_k = c + (−1)^k (a − c)/k`, on the rest `c + (−1)^k (b − c)/k`;
    /// limit `ρ ≡ c`.
    pub fn two_value(mesh: &Mesh, count: usize, a: f64, b: f64, c: f64) -> Result<Self> {
        let r = mesh.rect();
        let mid = 0.5 * (r.x0 + r.x1);
        let left: Vec<bool> = mesh.centroids().iter().map(|p| p[0] < mid).collect();
        let fields = (1..=count)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let va = c + sign * (a - c) / k as f64;
                let vb = c + sign * (b - c) / k as f64;
                WeightField::new(left.iter().map(|&l| if l { va } else { vb }).collect())
            })
            .collect::<Result<_>>()?;
        Ok(WeightSequence::new(fields, Some(WeightField::constant(mesh, c)?)))
    }
}

/// `∫ v w dμ` with `dμ = ρ dx`.
pub fn variable_pairing(mesh: &Mesh, rho: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
    mesh.check_cellwise(rho, "weight")?;
    mesh.check_cellwise(v, "v")?;
    mesh.check_cellwise(w, "w")?;
    Ok(mesh
        .cell_areas()
        .iter()
        .zip(rho)
        .zip(v.iter().zip(w))
        .map(|((a, r), (v, w))| a * r * v * w)
        .sum())
}

pub const BATTERY_SEED: u64 = 0x5eed_0f_7e57;

/// Test fields for the weak pairings: the constant, the cell averages of
/// `x` and `y`, and one seeded random field in `[0, 1)`.
pub fn test_battery(mesh: &Mesh) -> Vec<(&'static str, Vec<f64>)> {
    let centroids = mesh.centroids();
    let mut rng = ChaCha8Rng::seed_from_u64(BATTERY_SEED);
    vec![
        ("constant", vec![1.0; mesh.num_cells()]),
        ("x", centroids.iter().map(|p| p[0]).collect()),
        ("y", centroids.iter().map(|p| p[1]).collect()),
        ("random", (0..mesh.num_cells()).map(|_| rng.gen::<f64>()).collect()),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseWeightRow {
    pub k: usize,
    /// `∫|ρ_k⁻¹ − ρ⁻¹|`
    pub l1_distance: f64,
    /// `∫(ρ_k⁻¹)² ρ_k = ∫ρ_k⁻¹`
    pub inverse_integral: f64,
    /// `∫ρ⁻¹`
    pub inverse_target: f64,
    /// `max_φ |∫ρ_k⁻¹φρ_k − ∫ρ⁻¹φρ|` over the battery.
    pub pairing_error: f64,
    /// `max_φ |∫ρ_k⁻¹φρ_k − ∫φ| / ∫|φ|` over the battery.
    pub identity_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseWeightReport {
    pub rows: Vec<InverseWeightRow>,
    /// `sup_k max_c ∫_c ρ_k⁻¹`: equi-integrability over single cells.
    pub sup_cell_inverse_mass: f64,
    /// `(λ, sup_k ∫_{ρ_k⁻¹ > λ} ρ_k⁻¹)` on a fixed λ grid.
    pub superlevel_masses: Vec<(f64, f64)>,
}

impl InverseWeightReport {
    pub fn last(&self) -> &InverseWeightRow {
        self.rows.last().expect("validated sequences are nonempty")
    }

    pub fn max_identity_error(&self) -> f64 {
        self.rows.iter().map(|r| r.identity_error).fold(0.0, f64::max)
    }
}

pub const LAMBDA_GRID: [f64; 9] = [1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6];

pub fn inverse_weight_convergence(mesh: &Mesh, seq: &WeightSequence) -> Result<InverseWeightReport> {
    seq.validate(mesh)?;
    let limit = seq.limit()?;
    let areas = mesh.cell_areas();
    let battery = test_battery(mesh);
    let limit_inv = limit.reciprocal();
    let inverse_target: f64 = areas.iter().zip(&limit_inv).map(|(a, r)| a * r).sum();
    let limit_pairings: Vec<f64> = battery
        .iter()
        .map(|(_, phi)| variable_pairing(mesh, limit, &limit_inv, phi))
        .collect::<Result<_>>()?;
    let direct: Vec<(f64, f64)> = battery
        .iter()
        .map(|(_, phi)| {
            let sum = areas.iter().zip(phi).map(|(a, p)| a * p).sum();
            let abs = areas.iter().zip(phi).map(|(a, p)| a * p.abs()).sum();
            (sum, abs)
        })
        .collect();

    let mut rows = Vec::with_capacity(seq.fields.len());
    let mut sup_cell_inverse_mass = 0.0f64;
    let mut superlevel = vec![0.0f64; LAMBDA_GRID.len()];
    for (i, rho_k) in seq.fields.iter().enumerate() {
        let inv = rho_k.reciprocal();
        let mut pairing_error = 0.0f64;
        let mut identity_error = 0.0f64;
        for (((_, phi), lim), (sum, abs)) in battery.iter().zip(&limit_pairings).zip(&direct) {
            let pk = variable_pairing(mesh, rho_k, &inv, phi)?;
            pairing_error = pairing_error.max((pk - lim).abs());
            let scale = if *abs > 0.0 { *abs } else { 1.0 };
            identity_error = identity_error.max((pk - sum).abs() / scale);
        }
        for (c, r) in inv.iter().enumerate() {
            sup_cell_inverse_mass = sup_cell_inverse_mass.max(areas[c] * r);
        }
        for (s, &lambda) in superlevel.iter_mut().zip(&LAMBDA_GRID) {
            let m: f64 = areas
                .iter()
                .zip(&inv)
                .filter(|(_, r)| **r > lambda)
                .map(|(a, r)| a * r)
                .sum();
            *s = s.max(m);
        }
        rows.push(InverseWeightRow {
            k: i + 1,
            l1_distance: l1_distance(mesh, &inv, &limit_inv),
            inverse_integral: areas.iter().zip(&inv).map(|(a, r)| a * r).sum(),
            inverse_target,
            pairing_error,
            identity_error,
        });
    }
    Ok(InverseWeightReport {
        rows,
        sup_cell_inverse_mass,
        superlevel_masses: LAMBDA_GRID.iter().copied().zip(superlevel).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LscRow {
    pub k: usize,
    pub tv: f64,
    /// `min_{j ≥ k} TV(ρ_j)`
    pub tail_inf: f64,
    /// `TV(ρ − ρ_k)`, the continuity modulus of TV at `ρ_k`.
    pub tv_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LscReport {
    pub limit_tv: f64,
    pub rows: Vec<LscRow>,
    /// Tail infimum over the second half of the sequence.
    pub liminf: f64,
    /// `TV(ρ) − liminf`; positive values are informational when the
    /// sequence does not approach its declared limit.
    pub gap: f64,
    /// `TV(ρ) > min_k [TV(ρ_k) + TV(ρ − ρ_k)] + 1e-10·max(1, TV(ρ))` over the
    /// tail. Impossible in finite dimension by the triangle inequality.
    pub violation: bool,
}

/// Lower semicontinuity of TV along a weight sequence.
pub fn lsc_witness(mesh: &Mesh, seq: &WeightSequence) -> Result<LscReport> {
    seq.validate(mesh)?;
    let limit = seq.limit()?;
    let limit_tv = discrete_tv(mesh, limit, 0.0)?;
    let mut rows = Vec::with_capacity(seq.fields.len());
    for (i, rho_k) in seq.fields.iter().enumerate() {
        let diff: Vec<f64> = limit.iter().zip(rho_k.iter()).map(|(a, b)| a - b).collect();
        rows.push(LscRow {
            k: i + 1,
            tv: discrete_tv(mesh, rho_k, 0.0)?,
            tail_inf: 0.0,
            tv_distance: discrete_tv(mesh, &diff, 0.0)?,
        });
    }
    let mut running = f64::INFINITY;
    for row in rows.iter_mut().rev() {
        running = running.min(row.tv);
        row.tail_inf = running;
    }
    let tail = &rows[rows.len() / 2..];
    let liminf = tail[0].tail_inf;
    let certified = tail
        .iter()
        .map(|r| r.tv + r.tv_distance)
        .fold(f64::INFINITY, f64::min);
    let scale = limit_tv.max(1.0);
    Ok(LscReport {
        limit_tv,
        liminf,
        gap: limit_tv - liminf,
        violation: limit_tv > certified + 1e-10 * scale,
        rows,
    })
}
