//! INI-style run configuration.
//!
//! ```ini
//! [mesh]
//! nx = 8
//! ny = 8
//! rect = 0, 0, 1, 1
//! left = dirichlet        # right, bottom, top likewise; default dirichlet
//! allow_pure_neumann = false
//!
//! [problem]
//! f = 1
//! y_d = 0
//! y_d_rho = 1 - 0.1*step(x-0.5)   # instead of y_d: target is the state at this weight
//! rho = 1                 # weight used by `solve`
//! exact = sin(pi*x)*sin(pi*y)   # optional, reports the L² error
//!
//! [admissible]
//! xi1 = 0.1
//! xi2 = 2
//! mass = 1
//!
//! [optimizer]
//! max_iters = 500
//! armijo_c = 1e-4
//! backtrack_factor = 0.5
//! initial_step = 1
//! grad_tol = 1e-6
//! tv_eps = 1e-2           # default 1e-6 * mean(xi2)
//! solver_tol = 1e-12
//! seed = 0
//! w_tracking = 1
//! w_energy = 1
//! w_tv = 1
//!
//! [project]
//! g = x                   # input of the `project` command
//!
//! [output]
//! dir = out
//! formats = csv, vtk
//! ```
//!
//! Expressions use the grammar of [`crate::expr`]. Bounds and `g` are
//! sampled at cell centroids, data fields at vertices.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::control::{AdmissibleSet, WeightField};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::mesh::{BoundarySpec, BoundaryTag, Mesh, Rect};
use crate::objective::CostWeights;
use crate::optimizer::OptimizeConfig;
use crate::solver::{assemble_system_with, solve_state_in, NodalField, SolverOptions};

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

/// Parse `[section]` headers and `key = value` lines. `#` and `;` start
/// comments.
pub fn parse_ini(text: &str) -> Result<Sections> {
    let mut sections: Sections = BTreeMap::new();
    let mut current = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw
            .split(|c| c == '#' || c == ';')
            .next()
            .unwrap_or("")
            .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", n + 1)))?;
            current = name.trim().to_ascii_lowercase();
            sections.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        if current.is_empty() {
            return Err(Error::Config(format!("line {}: key outside of a section", n + 1)));
        }
        let key = key.trim().to_ascii_lowercase();
        let section = sections.entry(current.clone()).or_default();
        if section
            .insert(key.clone(), (n + 1, value.trim().to_string()))
            .is_some()
        {
            return Err(Error::Config(format!("line {}: duplicate key [{current}] {key}", n + 1)));
        }
    }
    Ok(sections)
}

struct Reader<'a> {
    sections: &'a Sections,
}

impl Reader<'_> {
    fn raw(&self, section: &str, key: &str) -> Option<&(usize, String)> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    fn parse<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("line {line}: cannot parse [{section}] {key} = {v}"))
            }),
        }
    }

    fn expr(&self, section: &str, key: &str) -> Result<Option<Expr>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((line, v)) => Expr::parse(v)
                .map(Some)
                .map_err(|e| Error::Config(format!("line {line}: [{section}] {key}: {e}"))),
        }
    }

    fn tag(&self, key: &str) -> Result<BoundaryTag> {
        match self.raw("mesh", key) {
            None => Ok(BoundaryTag::Dirichlet),
            Some((line, v)) => BoundaryTag::parse(v).ok_or_else(|| {
                Error::Config(format!(
                    "line {line}: [mesh] {key} must be dirichlet or neumann, got {v}"
                ))
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Vtk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshSection {
    pub nx: usize,
    pub ny: usize,
    pub rect: Rect,
    pub spec: BoundarySpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSection {
    pub f: Expr,
    pub y_d: Expr,
    /// When set, the target state is the solution for this weight and `f`.
    pub y_d_rho: Option<Expr>,
    pub rho: Expr,
    pub exact: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleSection {
    pub xi1: Expr,
    pub xi2: Expr,
    pub mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSection,
    pub problem: ProblemSection,
    pub admissible: Option<AdmissibleSection>,
    pub optimizer: OptimizeConfig,
    pub project_input: Option<Expr>,
    pub output_dir: PathBuf,
    pub formats: Vec<OutputFormat>,
    /// Config text as read, hashed into run manifests.
    pub source: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        RunConfig::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<RunConfig> {
        let sections = parse_ini(text)?;
        for name in sections.keys() {
            if !["mesh", "problem", "admissible", "optimizer", "project", "output"]
                .contains(&name.as_str())
            {
                return Err(Error::Config(format!("unknown section [{name}]")));
            }
        }
        let r = Reader {
            sections: &sections,
        };

        let nx = r.parse::<usize>("mesh", "nx")?.unwrap_or(8);
        let ny = r.parse::<usize>("mesh", "ny")?.unwrap_or(nx);
        let rect = match r.raw("mesh", "rect") {
            None => Rect::UNIT,
            Some((line, v)) => {
                let parts: Vec<f64> = v
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Config(format!("line {line}: rect must be x0, y0, x1, y1")))?;
                match parts.as_slice() {
                    [x0, y0, x1, y1] => Rect::new(*x0, *y0, *x1, *y1),
                    _ => {
                        return Err(Error::Config(format!(
                            "line {line}: rect needs four numbers x0, y0, x1, y1"
                        )))
                    }
                }
            }
        };
        let spec = BoundarySpec {
            left: r.tag("left")?,
            right: r.tag("right")?,
            bottom: r.tag("bottom")?,
            top: r.tag("top")?,
            allow_pure_neumann: r.parse::<bool>("mesh", "allow_pure_neumann")?.unwrap_or(false),
        };

        let one = Expr::Num(1.0);
        let zero = Expr::Num(0.0);
        let problem = ProblemSection {
            f: r.expr("problem", "f")?.unwrap_or_else(|| zero.clone()),
            y_d: r.expr("problem", "y_d")?.unwrap_or_else(|| zero.clone()),
            y_d_rho: r.expr("problem", "y_d_rho")?,
            rho: r.expr("problem", "rho")?.unwrap_or_else(|| one.clone()),
            exact: r.expr("problem", "exact")?,
        };

        if problem.y_d_rho.is_some() && r.raw("problem", "y_d").is_some() {
            return Err(Error::Config("[problem] set either y_d or y_d_rho, not both".into()));
        }

        let admissible = if sections.contains_key("admissible") {
            Some(AdmissibleSection {
                xi1: r
                    .expr("admissible", "xi1")?
                    .ok_or_else(|| Error::Config("[admissible] xi1 is required".into()))?,
                xi2: r
                    .expr("admissible", "xi2")?
                    .ok_or_else(|| Error::Config("[admissible] xi2 is required".into()))?,
                mass: r.parse::<f64>("admissible", "mass")?,
            })
        } else {
            None
        };

        let d = OptimizeConfig::default();
        let optimizer = OptimizeConfig {
            max_iters: r.parse("optimizer", "max_iters")?.unwrap_or(d.max_iters),
            armijo_c: r.parse("optimizer", "armijo_c")?.unwrap_or(d.armijo_c),
            backtrack_factor: r
                .parse("optimizer", "backtrack_factor")?
                .unwrap_or(d.backtrack_factor),
            initial_step: r.parse("optimizer", "initial_step")?.unwrap_or(d.initial_step),
            grad_tol: r.parse("optimizer", "grad_tol")?.unwrap_or(d.grad_tol),
            tv_eps: r.parse("optimizer", "tv_eps")?.or(d.tv_eps),
            solver_tol: r.parse("optimizer", "solver_tol")?.unwrap_or(d.solver_tol),
            seed: r.parse("optimizer", "seed")?.unwrap_or(d.seed),
            weights: CostWeights {
                tracking: r.parse("optimizer", "w_tracking")?.unwrap_or(1.0),
                energy: r.parse("optimizer", "w_energy")?.unwrap_or(1.0),
                tv: r.parse("optimizer", "w_tv")?.unwrap_or(1.0),
            },
            parallel: false,
        };
        optimizer
            .validate()
            .map_err(|e| Error::Config(format!("[optimizer] {e}")))?;

        let output_dir = r
            .raw("output", "dir")
            .map_or_else(|| PathBuf::from("out"), |(_, v)| PathBuf::from(v));
        let formats = match r.raw("output", "formats") {
            None => vec![OutputFormat::Csv, OutputFormat::Vtk],
            Some((line, v)) => v
                .split(',')
                .map(|f| match f.trim().to_ascii_lowercase().as_str() {
                    "csv" => Ok(OutputFormat::Csv),
                    "vtk" => Ok(OutputFormat::Vtk),
                    other => Err(Error::Config(format!("line {line}: unknown format '{other}'"))),
                })
                .collect::<Result<_>>()?,
        };

        Ok(RunConfig {
            mesh: MeshSection { nx, ny, rect, spec },
            problem,
            admissible,
            optimizer,
            project_input: r.expr("project", "g")?,
            output_dir,
            formats,
            source: text.to_string(),
        })
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        let m = &self.mesh;
        Mesh::structured(m.nx, m.ny, m.rect, m.spec).map_err(|e| Error::Config(format!("[mesh] {e}")))
    }

    pub fn writes(&self, format: OutputFormat) -> bool {
        self.formats.contains(&format)
    }

    pub fn load_field(&self, mesh: &Mesh) -> NodalField {
        let f = &self.problem.f;
        NodalField::interpolate(mesh, |x, y| f.eval(x, y))
    }

    /// `y_d` interpolated, or the state for `y_d_rho` when that is set.
    pub fn target_state(&self, mesh: &Mesh, solver: SolverOptions) -> Result<NodalField> {
        match &self.problem.y_d_rho {
            None => {
                let e = &self.problem.y_d;
                Ok(NodalField::interpolate(mesh, |x, y| e.eval(x, y)))
            }
            Some(e) => {
                let rho = WeightField::new(mesh.sample_cells(|x, y| e.eval(x, y)))
                    .map_err(|err| Error::Config(format!("[problem] y_d_rho: {err}")))?;
                let system = assemble_system_with(mesh, &rho, solver.parallel)?;
                let f = self.load_field(mesh);
                Ok(solve_state_in(mesh, &system, &rho, &f, solver, None)?.0)
            }
        }
    }

    /// Bounds sampled at centroids; fails on any violated feasibility
    /// inequality.
    pub fn admissible_set(&self, mesh: &Mesh) -> Result<AdmissibleSet> {
        let a = self
            .admissible
            .as_ref()
            .ok_or_else(|| Error::Config("missing [admissible] section".into()))?;
        let mass = a
            .mass
            .ok_or_else(|| Error::Config("[admissible] mass is required".into()))?;
        let set = AdmissibleSet::new(
            mesh.sample_cells(|x, y| a.xi1.eval(x, y)),
            mesh.sample_cells(|x, y| a.xi2.eval(x, y)),
            mass,
        );
        set.check(mesh)?;
        Ok(set)
    }
}
