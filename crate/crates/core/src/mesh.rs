//! Structured triangulations of an axis-aligned rectangle.
//!
//! Every grid cell `[x_i, x_{i+1}] × [y_j, y_{j+1}]` is split along the
//! bottom-left to top-right diagonal into two counterclockwise triangles
//!
//! ```text
//!   v01 ---- v11
//!    |  2k+1 / |
//!    |     /   |
//!    |   / 2k  |
//!   v00 ---- v10
//! ```
//!
//! with `k = j * nx + i`. Vertices are numbered row-major, `j * (nx + 1) + i`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

impl BoundaryTag {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dirichlet" | "d" => Some(BoundaryTag::Dirichlet),
            "neumann" | "n" => Some(BoundaryTag::Neumann),
            _ => None,
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryTag::Dirichlet => f.write_str("dirichlet"),
            BoundaryTag::Neumann => f.write_str("neumann"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// Boundary condition per rectangle side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundarySpec {
    pub left: BoundaryTag,
    pub right: BoundaryTag,
    pub bottom: BoundaryTag,
    pub top: BoundaryTag,
    /// Permit all four sides Neumann. The zeroth-order term keeps the
    /// problem coercive, so this is well posed.
    pub allow_pure_neumann: bool,
}

impl BoundarySpec {
    pub fn all(tag: BoundaryTag) -> Self {
        BoundarySpec {
            left: tag,
            right: tag,
            bottom: tag,
            top: tag,
            allow_pure_neumann: tag == BoundaryTag::Neumann,
        }
    }

    pub fn all_dirichlet() -> Self {
        Self::all(BoundaryTag::Dirichlet)
    }

    /// Dirichlet on `x = x0`, Neumann elsewhere.
    pub fn left_dirichlet() -> Self {
        BoundarySpec {
            left: BoundaryTag::Dirichlet,
            ..Self::all(BoundaryTag::Neumann)
        }
    }

    pub fn tag(&self, side: Side) -> BoundaryTag {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
            Side::Bottom => self.bottom,
            Side::Top => self.top,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let any_dirichlet = [self.left, self.right, self.bottom, self.top]
            .contains(&BoundaryTag::Dirichlet);
        if !any_dirichlet && !self.allow_pure_neumann {
            return Err(Error::invalid(
                "no Dirichlet side; set allow_pure_neumann to permit a pure Neumann problem",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub cell: usize,
    pub side: Side,
    pub tag: BoundaryTag,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorEdge {
    pub vertices: [usize; 2],
    /// The two adjacent cells, lower index first.
    pub cells: [usize; 2],
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nx: usize,
    ny: usize,
    rect: Rect,
    spec: BoundarySpec,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    cell_areas: Vec<f64>,
    /// Gradients of the three barycentric basis functions on each cell.
    basis_gradients: Vec<[Point; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    interior_edges: Vec<InteriorEdge>,
    dirichlet_vertices: Vec<usize>,
    is_dirichlet: Vec<bool>,
}

impl Mesh {
    /// Uniform `nx × ny` grid on `rect`, each grid cell split into two
    /// triangles along the same diagonal.
    pub fn structured(nx: usize, ny: usize, rect: Rect, spec: BoundarySpec) -> Result<Mesh> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid(format!(
                "subdivision counts must be positive, got nx={nx}, ny={ny}"
            )));
        }
        let finite = [rect.x0, rect.y0, rect.x1, rect.y1]
            .iter()
            .all(|v| v.is_finite());
        if !finite || rect.x1 <= rect.x0 || rect.y1 <= rect.y0 {
            return Err(Error::invalid(format!("degenerate rectangle {rect:?}")));
        }
        spec.validate()?;

        let hx = (rect.x1 - rect.x0) / nx as f64;
        let hy = (rect.y1 - rect.y0) / ny as f64;
        let coord = |i: usize, n: usize, lo: f64, hi: f64, h: f64| {
            if i == n {
                hi
            } else {
                lo + i as f64 * h
            }
        };

        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([
                    coord(i, nx, rect.x0, rect.x1, hx),
                    coord(j, ny, rect.y0, rect.y1, hy),
                ]);
            }
        }

        let vid = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let v00 = vid(i, j);
                let v10 = vid(i + 1, j);
                let v11 = vid(i + 1, j + 1);
                let v01 = vid(i, j + 1);
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }

        let mut cell_areas = Vec::with_capacity(triangles.len());
        let mut basis_gradients = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            let (area, grads) = triangle_geometry(tri.map(|v| vertices[v]));
            if area <= 0.0 {
                return Err(Error::invalid("triangle with nonpositive area"));
            }
            cell_areas.push(area);
            basis_gradients.push(grads);
        }

        // Edge -> adjacent cells, keyed by the sorted vertex pair.
        let mut edge_cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (c, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edge_cells.entry((a.min(b), a.max(b))).or_default().push(c);
            }
        }

        let mut boundary_edges = Vec::new();
        let mut interior_edges = Vec::new();
        for ((a, b), cells) in edge_cells {
            let length = distance(vertices[a], vertices[b]);
            match cells.as_slice() {
                [c] => {
                    let side = edge_side(vertices[a], vertices[b], &rect).ok_or_else(|| {
                        Error::invalid("boundary edge not on the rectangle boundary")
                    })?;
                    boundary_edges.push(BoundaryEdge {
                        vertices: [a, b],
                        cell: *c,
                        side,
                        tag: spec.tag(side),
                        length,
                    });
                }
                [c1, c2] => interior_edges.push(InteriorEdge {
                    vertices: [a, b],
                    cells: [(*c1).min(*c2), (*c1).max(*c2)],
                    length,
                }),
                _ => return Err(Error::invalid("nonmanifold edge")),
            }
        }

        let mut is_dirichlet = vec![false; vertices.len()];
        for e in &boundary_edges {
            if e.tag == BoundaryTag::Dirichlet {
                is_dirichlet[e.vertices[0]] = true;
                is_dirichlet[e.vertices[1]] = true;
            }
        }
        let dirichlet_vertices = (0..vertices.len()).filter(|&v| is_dirichlet[v]).collect();

        Ok(Mesh {
            nx,
            ny,
            rect,
            spec,
            vertices,
            triangles,
            cell_areas,
            basis_gradients,
            boundary_edges,
            interior_edges,
            dirichlet_vertices,
            is_dirichlet,
        })
    }

    pub fn unit_square(n: usize, spec: BoundarySpec) -> Result<Mesh> {
        Mesh::structured(n, n, Rect::UNIT, spec)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn boundary_spec(&self) -> BoundarySpec {
        self.spec
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn cell_areas(&self) -> &[f64] {
        &self.cell_areas
    }

    pub fn basis_gradients(&self, cell: usize) -> &[Point; 3] {
        &self.basis_gradients[cell]
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn interior_edges(&self) -> &[InteriorEdge] {
        &self.interior_edges
    }

    pub fn dirichlet_vertices(&self) -> &[usize] {
        &self.dirichlet_vertices
    }

    pub fn is_dirichlet(&self, vertex: usize) -> bool {
        self.is_dirichlet[vertex]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.triangles.len()
    }

    /// `|Ω|` as the sum of cell areas.
    pub fn total_area(&self) -> f64 {
        self.cell_areas.iter().sum()
    }

    pub fn centroid(&self, cell: usize) -> Point {
        let [a, b, c] = self.triangles[cell].map(|v| self.vertices[v]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn centroids(&self) -> Vec<Point> {
        (0..self.num_cells()).map(|c| self.centroid(c)).collect()
    }

    /// Constant gradient of the piecewise-linear interpolant of `u` on each
    /// cell.
    pub fn p1_gradient(&self, u: &[f64]) -> Result<Vec<Point>> {
        self.check_nodal(u, "u")?;
        Ok((0..self.num_cells())
            .map(|c| self.cell_gradient(c, u))
            .collect())
    }

    pub(crate) fn cell_gradient(&self, cell: usize, u: &[f64]) -> Point {
        let tri = &self.triangles[cell];
        let grads = &self.basis_gradients[cell];
        let mut g = [0.0; 2];
        for k in 0..3 {
            g[0] += u[tri[k]] * grads[k][0];
            g[1] += u[tri[k]] * grads[k][1];
        }
        g
    }

    pub(crate) fn check_nodal(&self, u: &[f64], name: &str) -> Result<()> {
        if u.len() != self.num_vertices() {
            return Err(Error::invalid(format!(
                "{name} has {} values, mesh has {} vertices",
                u.len(),
                self.num_vertices()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_cellwise(&self, v: &[f64], name: &str) -> Result<()> {
        if v.len() != self.num_cells() {
            return Err(Error::invalid(format!(
                "{name} has {} values, mesh has {} cells",
                v.len(),
                self.num_cells()
            )));
        }
        Ok(())
    }

    /// Interpolate `f(x, y)` at the vertices.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.vertices.iter().map(|p| f(p[0], p[1])).collect()
    }

    /// Evaluate `f(x, y)` at cell centroids.
    pub fn sample_cells(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.centroids().iter().map(|p| f(p[0], p[1])).collect()
    }

    /// Human-readable summary: counts, areas and the boundary tag layout.
    pub fn summary(&self) -> String {
        let count = |tag| {
            self.boundary_edges
                .iter()
                .filter(|e| e.tag == tag)
                .count()
        };
        let min_area = self.cell_areas.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_area = self.cell_areas.iter().cloned().fold(0.0, f64::max);
        let r = self.rect;
        format!(
            "rectangle       [{}, {}] x [{}, {}]\n\
             grid            {} x {}\n\
             vertices        {}\n\
             triangles       {}\n\
             interior edges  {}\n\
             boundary edges  {} ({} dirichlet, {} neumann)\n\
             dirichlet verts {}\n\
             total area      {}\n\
             cell area       min {} max {}\n\
             sides           left={} right={} bottom={} top={}\n",
            r.x0,
            r.x1,
            r.y0,
            r.y1,
            self.nx,
            self.ny,
            self.num_vertices(),
            self.num_cells(),
            self.interior_edges.len(),
            self.boundary_edges.len(),
            count(BoundaryTag::Dirichlet),
            count(BoundaryTag::Neumann),
            self.dirichlet_vertices.len(),
            self.total_area(),
            min_area,
            max_area,
            self.spec.left,
            self.spec.right,
            self.spec.bottom,
            self.spec.top,
        )
    }
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Signed area and barycentric basis gradients of a triangle.
fn triangle_geometry([p0, p1, p2]: [Point; 3]) -> (f64, [Point; 3]) {
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let grads = [
        [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
        [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
        [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
    ];
    (0.5 * det, grads)
}

fn edge_side(a: Point, b: Point, r: &Rect) -> Option<Side> {
    if a[0] == r.x0 && b[0] == r.x0 {
        Some(Side::Left)
    } else if a[0] == r.x1 && b[0] == r.x1 {
        Some(Side::Right)
    } else if a[1] == r.y0 && b[1] == r.y0 {
        Some(Side::Bottom)
    } else if a[1] == r.y1 && b[1] == r.y1 {
        Some(Side::Top)
    } else {
        None
    }
}
