//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::PathBuf;
use std::time::Instant;

use degenopt::cli;
use degenopt::config::RunConfig;
use degenopt::control::{project_admissible, AdmissibleSet, WeightField};
use degenopt::diagnostics::{inverse_weight_convergence, WeightSequence};
use degenopt::mesh::{BoundarySpec, BoundaryTag, Mesh, Rect};
use degenopt::objective::{gradient_check, CostWeights, ReducedProblem};
use degenopt::optimizer::{optimize, tau_boundedness_report, OptimizeResult};
use degenopt::solver::{
    embedding_bounds_check, energy_gap, l2_error_against, l2_norm, solve_state, weak_residual,
    SolverOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn mixed_spec() -> BoundarySpec {
    BoundarySpec {
        left: BoundaryTag::Dirichlet,
        right: BoundaryTag::Neumann,
        bottom: BoundaryTag::Neumann,
        top: BoundaryTag::Neumann,
        allow_pure_neumann: false,
    }
}

fn field(values: Vec<f64>) -> WeightField {
    WeightField::new(values).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mms_errors(spec: BoundarySpec, f: fn(f64, f64) -> f64, exact: fn(f64, f64) -> f64) -> Vec<f64> {
    [8, 16, 32, 64]
        .iter()
        .map(|&n| {
            let mesh = Mesh::unit_square(n, spec).unwrap();
            let rho = WeightField::constant(&mesh, 1.0).unwrap();
            let fh = mesh.interpolate(f);
            let (y, _) = solve_state(&mesh, &rho, &fh, 1e-12).unwrap();
            l2_error_against(&mesh, &y, exact).unwrap()
        })
        .collect()
}

fn criterion_1() -> Outcome {
    use std::f64::consts::PI;
    let start = Instant::now();
    let dirichlet = mms_errors(
        BoundarySpec::all_dirichlet(),
        |x, y| (2.0 * PI * PI + 1.0) * (PI * x).sin() * (PI * y).sin(),
        |x, y| (PI * x).sin() * (PI * y).sin(),
    );
    let mixed = mms_errors(
        mixed_spec(),
        |x, y| {
            let c = (PI * x).cos();
            (PI * y).cos() * (PI * PI * (1.0 - 2.0 * c) + 1.0 - c)
        },
        |x, y| (1.0 - (PI * x).cos()) * (PI * y).cos(),
    );
    let orders = |e: &[f64]| -> Vec<f64> { e.windows(2).map(|w| (w[0] / w[1]).log2()).collect() };
    let (od, om) = (orders(&dirichlet), orders(&mixed));
    let min = od.iter().chain(&om).fold(f64::INFINITY, |a, &b| a.min(b));
    let secs = start.elapsed().as_secs_f64();
    check(
        min >= 1.85 && secs <= 60.0,
        format!("orders dirichlet {od:.3?}, mixed {om:.3?}; min {min:.3}; {secs:.2} s"),
    )
}

fn random_test_function(mesh: &Mesh, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..mesh.num_vertices())
        .map(|v| if mesh.is_dirichlet(v) { 0.0 } else { rng.gen_range(-1.0..1.0) })
        .collect()
}

/// Worst `|weak_residual| / (‖f‖‖φ‖)` over 20 random test functions.
fn weak_form_error(mesh: &Mesh, rho: &[f64], y: &[f64], f: &[f64], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f_norm = l2_norm(mesh, f);
    (0..20)
        .map(|_| {
            let phi = random_test_function(mesh, &mut rng);
            let r = weak_residual(mesh, rho, y, f, &phi).unwrap();
            r.abs() / (f_norm * l2_norm(mesh, &phi))
        })
        .fold(0.0, f64::max)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut instances = 0;
    for (n, spec) in [(8, BoundarySpec::all_dirichlet()), (16, mixed_spec()), (12, mixed_spec())] {
        let mesh = Mesh::unit_square(n, spec).unwrap();
        for xi1 in [1.0, 0.1, 1e-4] {
            let rho: Vec<f64> = (0..mesh.num_cells()).map(|_| rng.gen_range(xi1..2.0)).collect();
            let rho = WeightField::new(rho).unwrap();
            let f = mesh.interpolate(|x, y| 1.0 + x * (3.0 * y).sin());
            let (y, _) = solve_state(&mesh, &rho, &f, 1e-12).unwrap();
            worst = worst.max(weak_form_error(&mesh, &rho, &y, &f, rng.gen()));
            instances += 1;
        }
    }
    check(
        worst <= 1e-9,
        format!("{instances} instances x 20 test functions, worst relative residual {worst:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut solves = 0;
    for n in [4, 8, 16] {
        let mesh = Mesh::unit_square(n, mixed_spec()).unwrap();
        let f = mesh.interpolate(|x, y| 1.0 + x - y * y);
        for xi1 in [0.1, 1e-4, 1e-6] {
            let constant = vec![xi1; mesh.num_cells()];
            let random: Vec<f64> = (0..mesh.num_cells()).map(|_| rng.gen_range(xi1..2.0)).collect();
            for rho in [constant, random] {
                let (y, rep) = solve_state(&mesh, &field(rho.clone()), &f, 1e-12).unwrap();
                let gap = energy_gap(&mesh, &rho, &y, &f).unwrap();
                assert_eq!(gap, rep.energy_gap);
                worst = worst.max(gap / (l2_norm(&mesh, &f) * l2_norm(&mesh, &y)));
                solves += 1;
            }
        }
    }
    check(worst <= 1e-9, format!("{solves} solves, worst relative energy gap {worst:.2e}"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=8);
        let rect = Rect::new(0.0, 0.0, rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
        let mesh = Mesh::structured(n, rng.gen_range(1..=8), rect, mixed_spec()).unwrap();
        let rho: Vec<f64> = (0..mesh.num_cells())
            .map(|_| 10f64.powf(rng.gen_range(-6.0..1.0)))
            .collect();
        let y: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if !embedding_bounds_check(&mesh, &rho, &y).unwrap().holds(1e-12) {
            violations += 1;
        }
    }
    check(violations == 0, format!("100 random pairs, {violations} violations"))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for n in [4, 4, 4, 8, 8] {
        let mesh = Mesh::unit_square(n, mixed_spec()).unwrap();
        let (a, b) = (rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0));
        let f = mesh.interpolate(|x, y| a + b * x * y);
        let y_d = mesh.interpolate(|x, y| 0.3 * x + b * y * y);
        let rho: Vec<f64> = (0..mesh.num_cells()).map(|_| rng.gen_range(0.1..2.0)).collect();
        let problem = ReducedProblem {
            mesh: &mesh,
            f: &f,
            y_d: &y_d,
            tv_eps: 1e-2,
            weights: CostWeights::default(),
            solver: SolverOptions { refine: true, ..SolverOptions::new(1e-12) },
        };
        let report = gradient_check(&problem, &field(rho), 1e-6).unwrap();
        worst = worst.max(report.max_relative_error);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-4 && secs <= 120.0,
        format!("5 instances (4x4, 8x8), worst relative error {worst:.2e}; {secs:.2} s"),
    )
}

/// Projection by enumerating every assignment of cells to {lower, free,
/// upper} and keeping the one that satisfies the optimality conditions.
fn brute_force_projection(areas: &[f64], g: &[f64], set: &AdmissibleSet) -> Option<Vec<f64>> {
    let n = g.len();
    let tol = 1e-12;
    let mut code = vec![0u8; n];
    loop {
        let (mut fixed_mass, mut free_area, mut free_g) = (0.0, 0.0, 0.0);
        for c in 0..n {
            match code[c] {
                0 => fixed_mass += areas[c] * set.xi1[c],
                2 => fixed_mass += areas[c] * set.xi2[c],
                _ => {
                    free_area += areas[c];
                    free_g += areas[c] * g[c];
                }
            }
        }
        let candidate = if free_area > 0.0 {
            let lambda = (free_g + fixed_mass - set.mass) / free_area;
            let ok = (0..n).all(|c| {
                let v = g[c] - lambda;
                match code[c] {
                    0 => v <= set.xi1[c] + tol,
                    2 => v >= set.xi2[c] - tol,
                    _ => v >= set.xi1[c] - tol && v <= set.xi2[c] + tol,
                }
            });
            ok.then(|| {
                (0..n)
                    .map(|c| match code[c] {
                        0 => set.xi1[c],
                        2 => set.xi2[c],
                        _ => g[c] - lambda,
                    })
                    .collect()
            })
        } else {
            // All cells at a bound: needs the right mass and a multiplier
            // between the two active groups.
            let lo = (0..n).filter(|&c| code[c] == 0).map(|c| g[c] - set.xi1[c]).fold(f64::MIN, f64::max);
            let hi = (0..n).filter(|&c| code[c] == 2).map(|c| g[c] - set.xi2[c]).fold(f64::MAX, f64::min);
            ((fixed_mass - set.mass).abs() <= tol && lo <= hi + tol)
                .then(|| (0..n).map(|c| if code[c] == 0 { set.xi1[c] } else { set.xi2[c] }).collect())
        };
        if candidate.is_some() {
            return candidate;
        }
        let mut i = 0;
        loop {
            if i == n {
                return None;
            }
            code[i] += 1;
            if code[i] < 3 {
                break;
            }
            code[i] = 0;
            i += 1;
        }
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let grids = [(1, 1), (2, 1), (3, 1), (2, 2), (5, 1), (1, 4)];
    let mut worst = 0.0f64;
    let mut missing = 0;
    for trial in 0..200 {
        let (nx, ny) = grids[trial % grids.len()];
        let rect = Rect::new(0.0, 0.0, rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
        let mesh = Mesh::structured(nx, ny, rect, BoundarySpec::all_dirichlet()).unwrap();
        let n = mesh.num_cells();
        let xi1: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let xi2: Vec<f64> = xi1.iter().map(|l| l + rng.gen_range(0.0..1.5)).collect();
        let areas = mesh.cell_areas();
        let lo: f64 = areas.iter().zip(&xi1).map(|(a, v)| a * v).sum();
        let hi: f64 = areas.iter().zip(&xi2).map(|(a, v)| a * v).sum();
        let mass = lo + rng.gen_range(0.0..=1.0) * (hi - lo);
        let set = AdmissibleSet::new(xi1, xi2, mass);
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..4.0)).collect();
        let fast = project_admissible(&mesh, &g, &set).unwrap();
        match brute_force_projection(areas, &g, &set) {
            Some(oracle) => {
                for (a, b) in fast.iter().zip(&oracle) {
                    worst = worst.max((a - b).abs());
                }
            }
            None => missing += 1,
        }
    }
    check(
        worst <= 1e-8 && missing == 0,
        format!("200 trials, worst componentwise difference {worst:.2e}, oracle misses {missing}"),
    )
}

fn reference_run() -> (Mesh, AdmissibleSet, Vec<f64>, OptimizeResult) {
    let cfg = RunConfig::load(&repo_path("configs/reference.ini")).unwrap();
    let mesh = cfg.build_mesh().unwrap();
    let set = cfg.admissible_set(&mesh).unwrap();
    let f = cfg.load_field(&mesh).into_inner();
    let y_d = cfg
        .target_state(&mesh, SolverOptions::new(cfg.optimizer.solver_tol))
        .unwrap();
    let start = vec![set.mass / mesh.total_area(); mesh.num_cells()];
    let rho0 = project_admissible(&mesh, &start, &set).unwrap();
    let result = optimize(&mesh, &set, &f, &y_d, &rho0, &cfg.optimizer).unwrap();
    (mesh, set, f, result)
}

fn criterion_7(run: &(Mesh, AdmissibleSet, Vec<f64>, OptimizeResult)) -> Outcome {
    let (mesh, set, f, result) = run;
    let trace = &result.trace;
    let costs: Vec<f64> = trace.costs().collect();
    let monotone = costs.windows(2).all(|w| w[1] <= w[0]);
    let infeasible = trace
        .records
        .iter()
        .filter(|r| !set.membership(mesh, &r.rho).is_member(1e-9 * set.mass.abs().max(1.0)))
        .count();
    let weak = weak_form_error(mesh, &result.rho, &result.y, f, 77);
    let (first, last) = (costs[0], *costs.last().unwrap());
    check(
        monotone
            && infeasible == 0
            && trace.converged
            && trace.final_displacement <= 1e-6
            && last < first
            && weak <= 1e-9,
        format!(
            "{} iterations, cost {first:.10e} -> {last:.10e}, monotone {monotone}, infeasible iterates {infeasible}, \
             final displacement {:.2e}, weak residual {weak:.2e}",
            costs.len() - 1,
            trace.final_displacement
        ),
    )
}

fn criterion_8() -> Outcome {
    let mesh = Mesh::unit_square(8, BoundarySpec::all_dirichlet()).unwrap();
    let seq = WeightSequence::one_over_k(&mesh, 1000).unwrap();
    let report = inverse_weight_convergence(&mesh, &seq).unwrap();
    let l1 = report.last().l1_distance;
    let identity = report.max_identity_error();
    check(
        l1 <= 1e-3 && identity <= 1e-12,
        format!("K = 1000: L1 inverse distance {l1:.3e}, pairing identity error {identity:.2e}"),
    )
}

fn criterion_9(run: &(Mesh, AdmissibleSet, Vec<f64>, OptimizeResult)) -> Outcome {
    let (mesh, set, _, result) = run;
    let r = tau_boundedness_report(mesh, set, &result.trace, 1e-4).unwrap();
    check(
        r.sups_finite && r.tail_ok,
        format!(
            "sup bv {:.4}, sup |y| {:.4}, sup |grad y|_rho {:.4}, tail L1 {:.2e}",
            r.sup_bv_norm, r.sup_state_norm, r.sup_weighted_gradient_norm, r.tail_l1
        ),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = repo_path("configs/reference.ini");
    let run = |name: &str, threads: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(name);
        let code = cli::run([
            "degenopt",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
            "optimize",
        ]);
        if code != 0 {
            return Err(format!("optimize run {name} exited with {code}"));
        }
        std::fs::read(out.join("trace.csv")).map_err(|e| e.to_string())
    };
    let a = run("a", "0")?;
    let b = run("b", "0")?;
    let c = run("c", "2")?;
    check(
        a == b && a == c,
        format!(
            "trace.csv {} bytes; sequential runs identical {}, threaded run identical {}",
            a.len(),
            a == b,
            a == c
        ),
    )
}

fn main() {
    let reference = reference_run();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("MMS convergence", Box::new(criterion_1)),
        ("weak-form identity", Box::new(criterion_2)),
        ("energy equality", Box::new(criterion_3)),
        ("embedding bounds", Box::new(criterion_4)),
        ("gradient correctness", Box::new(criterion_5)),
        ("projection oracle", Box::new(criterion_6)),
        ("descent and feasibility", Box::new(|| criterion_7(&reference))),
        ("inverse-weight diagnostics", Box::new(criterion_8)),
        ("boundedness report", Box::new(|| criterion_9(&reference))),
        ("determinism", Box::new(criterion_10)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (status, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {status}  {name}: {detail}", i + 1);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
