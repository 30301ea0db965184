//! Command-line front end. Every command reads a [`RunConfig`], writes its
//! outputs plus a `manifest.txt` into the output directory and returns a
//! process exit code:
//!
//! | code | meaning                        |
//! |------|--------------------------------|
//! | 0    | success                        |
//! | 1    | config or validation error     |
//! | 2    | numerical failure              |
//! | 3    | stalled optimization           |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::config::{OutputFormat, RunConfig};
use crate::control::{mass, project_admissible, WeightField};
use crate::diagnostics::{inverse_weight_convergence, lsc_witness, WeightSequence};
use crate::error::{Error, Result};
use crate::io;
use crate::mesh::Mesh;
use crate::objective::{compare_gradients, gradient_check, ReducedProblem};
use crate::optimizer::{optimize, tau_boundedness_report};
use crate::solver::{assemble_system_with, l2_error_against, l2_norm, solve_state_in, SolverOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_STALLED: i32 = 3;

/// Largest grid accepted by `gradcheck` (two solves per cell).
pub const GRADCHECK_MAX_N: usize = 16;
pub const GRADCHECK_TOL: f64 = 1e-4;
pub const FD_REL_STEP: f64 = 1e-6;
/// Tail tolerance for the boundedness report of `optimize`.
pub const TAIL_TOL: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "degenopt", version, about = "Optimal weights for degenerate elliptic problems")]
pub struct Cli {
    /// Run configuration (INI)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overrides [output] dir
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for element assembly; 0 is the sequential reference mode
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Overrides [optimizer] seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the state equation for the configured weight
    Solve,
    /// Minimize the cost over the admissible set
    Optimize,
    /// Compare the adjoint gradient with central differences
    Gradcheck {
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Variable-space convergence diagnostics for a weight sequence
    Diagnose {
        /// `one_over_k:K=1000`, `constant:K=10,c=2`,
        /// `two_value:K=100,a=0.5,b=1.5,c=1`, or a directory of weight CSVs
        /// with a `limit.csv`
        sequence: String,
    },
    /// Project a cell field onto the admissible set
    Project {
        /// Weight CSV to project; defaults to [project] g
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Print a mesh summary
    MeshInfo,
}

/// Parse arguments and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    execute(&cli)
}

pub fn execute(cli: &Cli) -> i32 {
    let outcome = if cli.threads > 0 {
        match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
            Ok(pool) => pool.install(|| dispatch(cli)),
            Err(e) => Err(Error::Config(format!("cannot start thread pool: {e}"))),
        }
    } else {
        dispatch(cli)
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NumericalFailure { .. } => EXIT_NUMERICAL,
        Error::Stalled { .. } => EXIT_STALLED,
        Error::InvalidArgument(_) | Error::Infeasible(_) | Error::Config(_) | Error::Io { .. } => {
            EXIT_CONFIG
        }
    }
}

struct Context {
    cfg: RunConfig,
    mesh: Mesh,
    out: PathBuf,
    parallel: bool,
    started: Instant,
    command: &'static str,
    outputs: Vec<String>,
}

impl Context {
    fn new(cli: &Cli, command: &'static str) -> Result<Context> {
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
        let mut cfg = RunConfig::load(path)?;
        if let Some(seed) = cli.seed {
            cfg.optimizer.seed = seed;
        }
        cfg.optimizer.parallel = cli.threads > 0;
        let mesh = cfg.build_mesh()?;
        let out = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        Ok(Context {
            parallel: cli.threads > 0,
            cfg,
            mesh,
            out,
            started: Instant::now(),
            command,
            outputs: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions {
            tol: self.cfg.optimizer.solver_tol,
            parallel: self.parallel,
            refine: false,
        }
    }

    fn write_manifest(&mut self, threads: usize) -> Result<()> {
        let hash = Sha256::digest(self.cfg.source.as_bytes());
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "config_sha256 = {}", hex(&hash));
        let _ = writeln!(s, "version = {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "threads = {threads}");
        let _ = writeln!(s, "seed = {}", self.cfg.optimizer.seed);
        let _ = writeln!(s, "wall_time_seconds = {}", self.started.elapsed().as_secs_f64());
        let _ = writeln!(s, "outputs = {}", self.outputs.join(", "));
        io::write_text(&self.out.join("manifest.txt"), &s)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let name = match &cli.command {
        Command::Solve => "solve",
        Command::Optimize => "optimize",
        Command::Gradcheck { .. } => "gradcheck",
        Command::Diagnose { .. } => "diagnose",
        Command::Project { .. } => "project",
        Command::MeshInfo => "mesh-info",
    };
    let mut ctx = Context::new(cli, name)?;
    let code = match &cli.command {
        Command::Solve => cmd_solve(&mut ctx)?,
        Command::Optimize => cmd_optimize(&mut ctx)?,
        Command::Gradcheck { corrupt_gradient } => cmd_gradcheck(&mut ctx, *corrupt_gradient)?,
        Command::Diagnose { sequence } => cmd_diagnose(&mut ctx, sequence)?,
        Command::Project { input } => cmd_project(&mut ctx, input.as_deref())?,
        Command::MeshInfo => {
            print!("{}", ctx.mesh.summary());
            let p = ctx.path("mesh.txt");
            io::write_text(&p, &ctx.mesh.summary())?;
            EXIT_OK
        }
    };
    ctx.write_manifest(cli.threads)?;
    Ok(code)
}

fn report_lines(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn cmd_solve(ctx: &mut Context) -> Result<i32> {
    let mesh = &ctx.mesh;
    let p = &ctx.cfg.problem;
    let rho_values = mesh.sample_cells(|x, y| p.rho.eval(x, y));
    let rho = WeightField::new(rho_values).map_err(|e| Error::Config(format!("[problem] rho: {e}")))?;
    let f = mesh.interpolate(|x, y| p.f.eval(x, y));
    let system = assemble_system_with(mesh, &rho, ctx.parallel)?;
    let (y, report) = solve_state_in(mesh, &system, &rho, &f, ctx.solver(), None)?;
    let scale = l2_norm(mesh, &f) * l2_norm(mesh, &y);
    let relative_gap = if scale > 0.0 { report.energy_gap / scale } else { 0.0 };

    let mut lines = vec![
        ("vertices", mesh.num_vertices().to_string()),
        ("unknowns", system.dimension().to_string()),
        ("cg_iterations", report.cg_iterations.to_string()),
        ("final_residual", io::fmt_f64(report.final_residual)),
        ("energy_gap", io::fmt_f64(report.energy_gap)),
        ("relative_energy_gap", io::fmt_f64(relative_gap)),
        ("wall_time", format!("{:.6}", report.wall_time)),
    ];
    if let Some(exact) = &p.exact {
        let err = l2_error_against(mesh, &y, |x, yy| exact.eval(x, yy))?;
        lines.push(("l2_error", io::fmt_f64(err)));
    }
    let text = report_lines(&lines);
    print!("{text}");

    let csv = ctx.cfg.writes(OutputFormat::Csv);
    let vtk = ctx.cfg.writes(OutputFormat::Vtk);
    let report_path = ctx.path("solve_report.txt");
    io::write_text(&report_path, &text)?;
    if csv {
        let path = ctx.path("state.csv");
        io::write_nodal_csv(&path, &ctx.mesh, &y)?;
    }
    if vtk {
        let path = ctx.path("state.vtk");
        io::write_vtk(&path, &ctx.mesh, "state solve", &[("y", &y)], &[("rho", &rho)])?;
    }
    Ok(EXIT_OK)
}

fn cmd_optimize(ctx: &mut Context) -> Result<i32> {
    let mesh = ctx.mesh.clone();
    let set = ctx.cfg.admissible_set(&mesh)?;
    let f = ctx.cfg.load_field(&mesh);
    let y_d = ctx.cfg.target_state(&mesh, ctx.solver())?;
    let start = vec![set.mass / mesh.total_area(); mesh.num_cells()];
    let rho0 = project_admissible(&mesh, &start, &set)?;
    let cfg = ctx.cfg.optimizer.clone();

    let result = match optimize(&mesh, &set, &f, &y_d, &rho0, &cfg) {
        Ok(r) => r,
        Err(Error::Stalled { iteration, step, trace }) => {
            let path = ctx.path("trace.csv");
            io::write_trace_csv(&path, &trace)?;
            eprintln!("error: optimizer stalled at iteration {iteration} (step {step:.3e})");
            return Ok(EXIT_STALLED);
        }
        Err(e) => return Err(e),
    };

    let tau = tau_boundedness_report(&mesh, &set, &result.trace, TAIL_TOL)?;
    let last = result.trace.last().expect("trace has the initial iterate");
    let summary = report_lines(&[
        ("iterations", (result.trace.records.len() - 1).to_string()),
        ("converged", result.trace.converged.to_string()),
        ("final_displacement", io::fmt_f64(result.trace.final_displacement)),
        ("tracking", io::fmt_f64(last.cost.tracking)),
        ("energy", io::fmt_f64(last.cost.weighted_energy)),
        ("tv", io::fmt_f64(last.cost.tv)),
        ("total", io::fmt_f64(last.cost.total)),
        ("initial_total", io::fmt_f64(result.trace.records[0].cost.total)),
        ("mass", io::fmt_f64(mass(&mesh, &result.rho)?)),
    ]);
    let tau_text = report_lines(&[
        ("sup_bv_norm", io::fmt_f64(tau.sup_bv_norm)),
        ("sup_state_norm", io::fmt_f64(tau.sup_state_norm)),
        ("sup_weighted_gradient_norm", io::fmt_f64(tau.sup_weighted_gradient_norm)),
        ("tail_l1", io::fmt_f64(tau.tail_l1)),
        ("tail_tol", io::fmt_f64(tau.tail_tol)),
        ("sups_finite", tau.sups_finite.to_string()),
        ("tail_ok", tau.tail_ok.to_string()),
        ("infeasible_iterations", format!("{:?}", tau.infeasible_iterations)),
        ("bounded", tau.bounded().to_string()),
    ]);
    print!("{summary}");

    let trace_path = ctx.path("trace.csv");
    io::write_trace_csv(&trace_path, &result.trace)?;
    let p = ctx.path("optimize_report.txt");
    io::write_text(&p, &summary)?;
    let p = ctx.path("tau_report.txt");
    io::write_text(&p, &tau_text)?;
    if ctx.cfg.writes(OutputFormat::Csv) {
        let p = ctx.path("rho.csv");
        io::write_weight_csv(&p, &result.rho)?;
        let p = ctx.path("state.csv");
        io::write_nodal_csv(&p, &mesh, &result.y)?;
    }
    if ctx.cfg.writes(OutputFormat::Vtk) {
        let problem = ReducedProblem {
            mesh: &mesh,
            f: &f,
            y_d: &y_d,
            tv_eps: cfg.resolved_tv_eps(&set),
            weights: cfg.weights,
            solver: ctx.solver(),
        };
        let eval = problem.evaluate(&result.rho, Some(&result.y))?;
        let (_, adjoint, _) = problem.gradient(&result.rho, &eval, None)?;
        let path = ctx.path("optimum.vtk");
        io::write_vtk(
            &path,
            &mesh,
            "optimal weight",
            &[("y", &result.y), ("p", &adjoint)],
            &[("rho", &result.rho)],
        )?;
    }
    Ok(EXIT_OK)
}

fn cmd_gradcheck(ctx: &mut Context, corrupt: bool) -> Result<i32> {
    let mesh = ctx.mesh.clone();
    if mesh.nx() > GRADCHECK_MAX_N || mesh.ny() > GRADCHECK_MAX_N {
        return Err(Error::Config(format!(
            "gradcheck needs a mesh of at most {GRADCHECK_MAX_N}x{GRADCHECK_MAX_N}, got {}x{}",
            mesh.nx(),
            mesh.ny()
        )));
    }
    let f = ctx.cfg.load_field(&mesh);
    let y_d = ctx.cfg.target_state(&mesh, ctx.solver())?;
    let (lo, hi, tv_eps) = match ctx.cfg.admissible_set(&mesh) {
        Ok(set) => {
            let eps = ctx.cfg.optimizer.resolved_tv_eps(&set);
            (set.xi1, set.xi2, eps)
        }
        Err(_) => {
            let n = mesh.num_cells();
            (vec![0.5; n], vec![1.5; n], ctx.cfg.optimizer.tv_eps.unwrap_or(1e-2))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.optimizer.seed);
    let rho = WeightField::new(
        lo.iter()
            .zip(&hi)
            .map(|(l, h)| if h > l { rng.gen_range(*l..*h) } else { *l })
            .collect(),
    )?;
    let problem = ReducedProblem {
        mesh: &mesh,
        f: &f,
        y_d: &y_d,
        tv_eps,
        weights: ctx.cfg.optimizer.weights,
        solver: SolverOptions {
            refine: true,
            ..ctx.solver()
        },
    };
    let mut check = gradient_check(&problem, &rho, FD_REL_STEP)?;
    if corrupt {
        let mut adjoint = check.adjoint;
        adjoint[0] = 2.0 * adjoint[0] + 1.0;
        check = compare_gradients(adjoint, check.finite_difference);
    }
    let ok = check.max_relative_error <= GRADCHECK_TOL;
    let text = report_lines(&[
        ("cells", mesh.num_cells().to_string()),
        ("tv_eps", io::fmt_f64(tv_eps)),
        ("max_relative_error", io::fmt_f64(check.max_relative_error)),
        ("worst_cell", check.worst_cell.to_string()),
        ("adjoint_at_worst", io::fmt_f64(check.adjoint[check.worst_cell])),
        ("fd_at_worst", io::fmt_f64(check.finite_difference[check.worst_cell])),
        ("passed", ok.to_string()),
    ]);
    print!("{text}");
    let path = ctx.path("gradcheck_report.txt");
    io::write_text(&path, &text)?;
    if !ok {
        eprintln!(
            "error: gradient check failed, relative error {:.3e} at cell {}",
            check.max_relative_error, check.worst_cell
        );
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_OK)
}

/// Parse `name:key=value,key=value`.
fn parse_family(spec: &str) -> Option<(String, Vec<(String, String)>)> {
    let (name, params) = spec.split_once(':').unwrap_or((spec, ""));
    let mut out = Vec::new();
    for kv in params.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, v) = kv.split_once('=')?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Some((name.trim().to_string(), out))
}

pub fn load_sequence(mesh: &Mesh, spec: &str) -> Result<WeightSequence> {
    let dir = Path::new(spec);
    if dir.is_dir() {
        return load_sequence_dir(mesh, dir);
    }
    let (name, params) =
        parse_family(spec).ok_or_else(|| Error::Config(format!("bad sequence spec '{spec}'")))?;
    let get = |key: &str, default: Option<f64>| -> Result<f64> {
        match params.iter().find(|(k, _)| k == key) {
            Some((_, v)) => v
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("sequence parameter {key}={v} is not a number"))),
            None => default.ok_or_else(|| Error::Config(format!("sequence '{name}' needs {key}="))),
        }
    };
    let count = get("K", None)?;
    if !(count >= 1.0 && count.fract() == 0.0) {
        return Err(Error::Config(format!("K must be a positive integer, got {count}")));
    }
    let count = count as usize;
    match name.as_str() {
        "one_over_k" => WeightSequence::one_over_k(mesh, count),
        "constant" => WeightSequence::constant(mesh, count, get("c", Some(1.0))?),
        "two_value" => WeightSequence::two_value(
            mesh,
            count,
            get("a", Some(0.5))?,
            get("b", Some(1.5))?,
            get("c", Some(1.0))?,
        ),
        other => Err(Error::Config(format!(
            "unknown sequence family '{other}' (expected one_over_k, constant, two_value or a directory)"
        ))),
    }
}

/// All `*.csv` files except `limit.csv`, in file name order.
fn load_sequence_dir(mesh: &Mesh, dir: &Path) -> Result<WeightSequence> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let limit_path = dir.join("limit.csv");
    if !limit_path.is_file() {
        return Err(Error::Config(format!("{} has no limit.csv", dir.display())));
    }
    let read = |p: &Path| -> Result<WeightField> {
        let values = io::read_weight_csv(p)?;
        WeightField::for_mesh(mesh, values).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
    };
    let fields = files
        .iter()
        .filter(|p| p.file_name() != limit_path.file_name())
        .map(|p| read(p))
        .collect::<Result<Vec<_>>>()?;
    if fields.is_empty() {
        return Err(Error::Config(format!("{} contains no sequence entries", dir.display())));
    }
    Ok(WeightSequence::new(fields, Some(read(&limit_path)?)))
}

fn cmd_diagnose(ctx: &mut Context, spec: &str) -> Result<i32> {
    let mesh = ctx.mesh.clone();
    let seq = load_sequence(&mesh, spec)?;
    let inv = inverse_weight_convergence(&mesh, &seq)?;
    let lsc = lsc_witness(&mesh, &seq)?;
    let f = io::fmt_f64;

    let rows: Vec<Vec<String>> = inv
        .rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                f(r.l1_distance),
                f(r.inverse_integral),
                f(r.inverse_target),
                f(r.pairing_error),
                f(r.identity_error),
            ]
        })
        .collect();
    let p = ctx.path("inverse_weight.csv");
    io::write_table(
        &p,
        &["k", "l1_distance", "inverse_integral", "inverse_target", "pairing_error", "identity_error"],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = lsc
        .rows
        .iter()
        .map(|r| vec![r.k.to_string(), f(r.tv), f(r.tail_inf), f(r.tv_distance)])
        .collect();
    let p = ctx.path("lsc.csv");
    io::write_table(&p, &["k", "tv", "tail_inf", "tv_distance"], &rows)?;

    let last = inv.last();
    let mut summary = vec![
        ("entries", inv.rows.len().to_string()),
        ("final_l1_distance", f(last.l1_distance)),
        ("final_inverse_integral", f(last.inverse_integral)),
        ("inverse_target", f(last.inverse_target)),
        ("max_identity_error", f(inv.max_identity_error())),
        ("sup_cell_inverse_mass", f(inv.sup_cell_inverse_mass)),
        ("limit_tv", f(lsc.limit_tv)),
        ("liminf_tv", f(lsc.liminf)),
        ("tv_gap", f(lsc.gap)),
        ("lsc_violation", lsc.violation.to_string()),
    ];
    let levels: Vec<(String, String)> = inv
        .superlevel_masses
        .iter()
        .map(|(l, m)| (format!("superlevel_mass[{l:e}]"), f(*m)))
        .collect();
    summary.extend(levels.iter().map(|(k, v)| (k.as_str(), v.clone())));
    let text = report_lines(&summary);
    print!("{text}");
    let p = ctx.path("diagnostics_summary.txt");
    io::write_text(&p, &text)?;
    Ok(EXIT_OK)
}

fn cmd_project(ctx: &mut Context, input: Option<&Path>) -> Result<i32> {
    let mesh = ctx.mesh.clone();
    let set = ctx.cfg.admissible_set(&mesh)?;
    let g = match (input, &ctx.cfg.project_input) {
        (Some(path), _) => io::read_weight_csv(path)?,
        (None, Some(expr)) => mesh.sample_cells(|x, y| expr.eval(x, y)),
        (None, None) => {
            return Err(Error::Config("project needs --input CSV or [project] g".into()))
        }
    };
    mesh.check_cellwise(&g, "projection input")?;
    let rho = project_admissible(&mesh, &g, &set)?;
    let member = set.membership(&mesh, &rho);
    let text = report_lines(&[
        ("cells", mesh.num_cells().to_string()),
        ("target_mass", f64_str(set.mass)),
        ("mass", f64_str(mass(&mesh, &rho)?)),
        ("mass_error", f64_str(member.mass_error)),
        ("bounds_ok", member.bounds_ok.to_string()),
    ]);
    print!("{text}");
    let p = ctx.path("projected.csv");
    io::write_weight_csv(&p, &rho)?;
    Ok(EXIT_OK)
}

fn f64_str(v: f64) -> String {
    io::fmt_f64(v)
}
