//! Uniform right-triangle meshes of the unit square.
//!
//! Each of the `n_div` x `n_div` grid squares is split along its
//! lower-left-to-upper-right diagonal. Entity numbering is a pure function of
//! `n_div`: vertices are numbered lexicographically by (row, column), cells by
//! (row, column, lower-then-upper), and edges by their sorted vertex pair.
//! Every edge carries a global orientation (normal fixed by the lo -> hi
//! vertex order); per-cell signs reconcile cell-local outward normals with the
//! global choice, which is what makes lowest-order Raviart-Thomas DOFs glue
//! across cells.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MeshError {
    #[error("n_div must be at least 1")]
    ZeroSubdivision,
    #[error("mesh hierarchy levels must be nonempty and strictly increasing")]
    NonIncreasingLevels,
}

/// Affine map data for one cell: x = v0 + J * xhat.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub v0: [f64; 2],
    /// Jacobian columns are the edge vectors v1 - v0 and v2 - v0.
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    /// Inverse-transpose of the Jacobian, for gradient pushforward.
    pub jinv_t: [[f64; 2]; 2],
}

impl CellGeometry {
    pub fn map(&self, xhat: [f64; 2]) -> [f64; 2] {
        [
            self.v0[0] + self.jac[0][0] * xhat[0] + self.jac[0][1] * xhat[1],
            self.v0[1] + self.jac[1][0] * xhat[0] + self.jac[1][1] * xhat[1],
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub n_div: usize,
    pub vertices: Vec<[f64; 2]>,
    /// Vertex-index triples, counterclockwise.
    pub cells: Vec<[usize; 3]>,
    /// Vertex-index pairs (lo, hi) with lo < hi, sorted lexicographically.
    pub edges: Vec<[usize; 2]>,
    /// Per cell: 3 (edge index, orientation sign) pairs; local edge k lies
    /// opposite local vertex k.
    pub cell_edges: Vec<[(usize, i8); 3]>,
    /// Per edge: incident cells (boundary edges have exactly one).
    pub edge_cells: Vec<Vec<usize>>,
    pub boundary_vertices: Vec<usize>,
    pub boundary_edges: Vec<usize>,
    vertex_on_boundary: Vec<bool>,
    edge_on_boundary: Vec<bool>,
}

impl Mesh {
    pub fn h(&self) -> f64 {
        1.0 / self.n_div as f64
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.vertex_on_boundary[v]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_on_boundary[e]
    }

    pub fn cell_geometry(&self, cell: usize) -> CellGeometry {
        let [a, b, c] = self.cells[cell];
        let p0 = self.vertices[a];
        let p1 = self.vertices[b];
        let p2 = self.vertices[c];
        let jac = [
            [p1[0] - p0[0], p2[0] - p0[0]],
            [p1[1] - p0[1], p2[1] - p0[1]],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let jinv_t = [
            [jac[1][1] / det, -jac[1][0] / det],
            [-jac[0][1] / det, jac[0][0] / det],
        ];
        CellGeometry {
            v0: p0,
            jac,
            det,
            jinv_t,
        }
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        0.5 * self.cell_geometry(cell).det
    }

    /// Unit normal of an edge fixed by its global lo -> hi orientation
    /// (tangent rotated clockwise by 90 degrees).
    pub fn edge_normal(&self, edge: usize) -> [f64; 2] {
        let [lo, hi] = self.edges[edge];
        let a = self.vertices[lo];
        let b = self.vertices[hi];
        let t = [b[0] - a[0], b[1] - a[1]];
        let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
        [t[1] / len, -t[0] / len]
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        let [lo, hi] = self.edges[edge];
        let a = self.vertices[lo];
        let b = self.vertices[hi];
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    /// Plain-text dump: `n_div`, then vertex coordinates, then cell triples.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{}\n", self.n_div));
        for v in &self.vertices {
            out.push_str(&format!("{:.17e} {:.17e}\n", v[0], v[1]));
        }
        for c in &self.cells {
            out.push_str(&format!("{} {} {}\n", c[0], c[1], c[2]));
        }
        out
    }
}

pub fn build_unit_square(n_div: usize) -> Result<Mesh, MeshError> {
    if n_div == 0 {
        return Err(MeshError::ZeroSubdivision);
    }
    let n = n_div;
    let np = n + 1;
    let h = 1.0 / n as f64;

    let mut vertices = Vec::with_capacity(np * np);
    for row in 0..np {
        for col in 0..np {
            vertices.push([col as f64 * h, row as f64 * h]);
        }
    }

    let vid = |row: usize, col: usize| row * np + col;
    let mut cells = Vec::with_capacity(2 * n * n);
    for row in 0..n {
        for col in 0..n {
            let v00 = vid(row, col);
            let v10 = vid(row, col + 1);
            let v01 = vid(row + 1, col);
            let v11 = vid(row + 1, col + 1);
            // Diagonal v00 -> v11; both triangles counterclockwise.
            cells.push([v00, v10, v11]);
            cells.push([v00, v11, v01]);
        }
    }

    Ok(connect(n_div, vertices, cells))
}

/// Smallest possible mesh: the unit reference triangle as its own cell.
/// Exists for degenerate-case sanity checks, not for solves.
pub fn single_triangle() -> Mesh {
    connect(
        1,
        vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        vec![[0, 1, 2]],
    )
}

/// Edge numbering, orientation signs, and boundary sets from raw cells.
/// Boundary detection is topological: an edge with one incident cell is a
/// boundary edge, and its endpoints are boundary vertices.
fn connect(n_div: usize, vertices: Vec<[f64; 2]>, cells: Vec<[usize; 3]>) -> Mesh {
    // Global edge numbering: sorted unique (lo, hi) pairs.
    let mut pairs: Vec<[usize; 2]> = Vec::with_capacity(3 * cells.len());
    for cell in &cells {
        for k in 0..3 {
            let a = cell[(k + 1) % 3];
            let b = cell[(k + 2) % 3];
            pairs.push(if a < b { [a, b] } else { [b, a] });
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let edges = pairs;
    let edge_index = |a: usize, b: usize| -> usize {
        let key = if a < b { [a, b] } else { [b, a] };
        edges.binary_search(&key).expect("edge from cell must exist")
    };

    let mut cell_edges = Vec::with_capacity(cells.len());
    let mut edge_cells = vec![Vec::new(); edges.len()];
    for (ci, cell) in cells.iter().enumerate() {
        let mut entry = [(0usize, 0i8); 3];
        for k in 0..3 {
            let a = cell[(k + 1) % 3];
            let b = cell[(k + 2) % 3];
            let e = edge_index(a, b);
            let [lo, hi] = edges[e];
            let (plo, phi) = (vertices[lo], vertices[hi]);
            let n_global = [phi[1] - plo[1], -(phi[0] - plo[0])];
            // Outward direction: perpendicular of the edge vector pointing
            // away from the opposite vertex.
            let popp = vertices[cell[k]];
            let to_opp = [popp[0] - plo[0], popp[1] - plo[1]];
            let outward_dot = n_global[0] * to_opp[0] + n_global[1] * to_opp[1];
            let sign = if outward_dot < 0.0 { 1i8 } else { -1i8 };
            entry[k] = (e, sign);
            edge_cells[e].push(ci);
        }
        cell_edges.push(entry);
    }

    let edge_on_boundary: Vec<bool> = edge_cells.iter().map(|cs| cs.len() == 1).collect();
    let mut vertex_on_boundary = vec![false; vertices.len()];
    for (e, &on) in edge_on_boundary.iter().enumerate() {
        if on {
            vertex_on_boundary[edges[e][0]] = true;
            vertex_on_boundary[edges[e][1]] = true;
        }
    }
    let boundary_vertices: Vec<usize> = (0..vertices.len())
        .filter(|&v| vertex_on_boundary[v])
        .collect();
    let boundary_edges: Vec<usize> = (0..edges.len()).filter(|&e| edge_on_boundary[e]).collect();

    Mesh {
        n_div,
        vertices,
        cells,
        edges,
        cell_edges,
        edge_cells,
        boundary_vertices,
        boundary_edges,
        vertex_on_boundary,
        edge_on_boundary,
    }
}

pub fn mesh_hierarchy(levels: &[usize]) -> Result<Vec<Mesh>, MeshError> {
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MeshError::NonIncreasingLevels);
    }
    levels.iter().map(|&n| build_unit_square(n)).collect()
}
