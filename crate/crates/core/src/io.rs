//! CSV and legacy ASCII VTK output.
//!
//! CSV files have a header row, comma separators and floats written with 17
//! significant digits (`{:.16e}`), which round-trips every `f64` exactly.
//!
//! | file            | columns                                   |
//! |-----------------|-------------------------------------------|
//! | nodal field     | `vertex_index,x,y,value`                  |
//! | weight field    | `cell_index,value`                        |
//! | optimizer trace | see [`TRACE_HEADER`]                      |

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::optimizer::OptimizeTrace;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn nodal_csv(mesh: &Mesh, values: &[f64]) -> String {
    let mut s = String::from("vertex_index,x,y,value\n");
    for (i, (p, v)) in mesh.vertices().iter().zip(values).enumerate() {
        let _ = writeln!(s, "{i},{},{},{}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(*v));
    }
    s
}

pub fn write_nodal_csv(path: &Path, mesh: &Mesh, values: &[f64]) -> Result<()> {
    write_file(path, &nodal_csv(mesh, values))
}

pub fn weight_csv(values: &[f64]) -> String {
    let mut s = String::from("cell_index,value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{i},{}", fmt_f64(*v));
    }
    s
}

pub fn write_weight_csv(path: &Path, values: &[f64]) -> Result<()> {
    write_file(path, &weight_csv(values))
}

pub fn parse_weight_csv(text: &str, origin: &str) -> Result<Vec<f64>> {
    let bad = |line: usize, msg: &str| Error::invalid(format!("{origin}:{line}: {msg}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "cell_index,value" => {}
        _ => return Err(bad(1, "expected header 'cell_index,value'")),
    }
    let mut values = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (idx, val) = line
            .split_once(',')
            .ok_or_else(|| bad(n + 1, "expected two columns"))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| bad(n + 1, "bad cell index"))?;
        if idx != values.len() {
            return Err(bad(n + 1, "cell indices must be consecutive from 0"));
        }
        let val: f64 = val.trim().parse().map_err(|_| bad(n + 1, "bad value"))?;
        values.push(val);
    }
    Ok(values)
}

pub fn read_weight_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_weight_csv(&text, &path.display().to_string())
}

pub const TRACE_HEADER: &str = "iteration,tracking,energy,tv,total,step,displacement,\
required_decrease,bv_norm,state_norm,weighted_gradient_norm,cg_iterations";

pub fn trace_csv(trace: &OptimizeTrace) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.iteration,
            fmt_f64(r.cost.tracking),
            fmt_f64(r.cost.weighted_energy),
            fmt_f64(r.cost.tv),
            fmt_f64(r.cost.total),
            fmt_f64(r.step),
            fmt_f64(r.displacement),
            fmt_f64(r.required_decrease),
            fmt_f64(r.bv_norm),
            fmt_f64(r.state_norm),
            fmt_f64(r.weighted_gradient_norm),
            r.cg_iterations
        );
    }
    s
}

pub fn write_trace_csv(path: &Path, trace: &OptimizeTrace) -> Result<()> {
    write_file(path, &trace_csv(trace))
}

/// Generic table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    write_file(path, &s)
}

/// Legacy ASCII VTK unstructured grid of linear triangles with point and
/// cell scalars.
pub fn vtk_unstructured(
    mesh: &Mesh,
    title: &str,
    point_data: &[(&str, &[f64])],
    cell_data: &[(&str, &[f64])],
) -> String {
    let nv = mesh.num_vertices();
    let nc = mesh.num_cells();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{}", title.lines().next().unwrap_or(""));
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {nv} double");
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} 0", fmt_f64(p[0]), fmt_f64(p[1]));
    }
    let _ = writeln!(s, "CELLS {nc} {}", 4 * nc);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nc}");
    for _ in 0..nc {
        let _ = writeln!(s, "5");
    }
    let scalars = |s: &mut String, name: &str, values: &[f64]| {
        let _ = writeln!(s, "SCALARS {name} double 1");
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for v in values {
            let _ = writeln!(s, "{}", fmt_f64(*v));
        }
    };
    if !point_data.is_empty() {
        let _ = writeln!(s, "POINT_DATA {nv}");
        for (name, values) in point_data {
            scalars(&mut s, name, values);
        }
    }
    if !cell_data.is_empty() {
        let _ = writeln!(s, "CELL_DATA {nc}");
        for (name, values) in cell_data {
            scalars(&mut s, name, values);
        }
    }
    s
}

pub fn write_vtk(
    path: &Path,
    mesh: &Mesh,
    title: &str,
    point_data: &[(&str, &[f64])],
    cell_data: &[(&str, &[f64])],
) -> Result<()> {
    write_file(path, &vtk_unstructured(mesh, title, point_data, cell_data))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text)
}
