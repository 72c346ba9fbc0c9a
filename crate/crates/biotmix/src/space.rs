//! Finite element spaces on a triangulation: global DOF numbering, essential
//! boundary constraints, basis tabulation on cells, nodal interpolation, and
//! L2 projection.
//!
//! Numbering conventions. Scalar Lagrange DOFs run vertices first, then edge
//! nodes (two per edge for the cubic family, ordered from the lower-numbered
//! vertex), then cell nodes. Vector Lagrange spaces interleave components:
//! dof = 2 * node + component. The lowest-order H(div) family has one DOF
//! per edge, the moment against the fixed global edge normal; per-cell signs
//! from the mesh reconcile local outward normals with that choice. Piecewise
//! constants number by cell.

use crate::linsolve::{self, LinSolveError};
use crate::mesh::Mesh;
use crate::refelem::{self, Family, RefElemError};
use crate::sparse::{CscMatrix, SparseError, Triplets};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("family {0:?} cannot be used with vector = {1}")]
    FamilyMismatch(Family, bool),
    #[error("space is {0}, function is {1}")]
    FieldKindMismatch(String, String),
    #[error("coefficient vector has {0} entries, space has {1} dofs")]
    CoefficientLength(usize, usize),
    #[error(transparent)]
    RefElem(#[from] RefElemError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    LinSolve(#[from] LinSolveError),
}

/// Essential boundary condition baked into a space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// No constrained dofs.
    None,
    /// All components vanish on the boundary.
    Clamped,
    /// Normal component vanishes on the boundary: whole edge dofs for the
    /// H(div) family, the normal Cartesian component per boundary node for
    /// vector Lagrange families (both at corners).
    NormalFlux,
}

#[derive(Debug)]
pub struct Space {
    pub family: Family,
    /// Two interleaved components (Lagrange families only; the H(div)
    /// family is intrinsically vector-valued).
    pub vector: bool,
    pub ndofs: usize,
    /// Global dofs per cell in reference-local order.
    pub cell_dofs: Vec<Vec<usize>>,
    /// Constrained dof ids, ascending.
    pub constrained: Vec<usize>,
    pub bc: BoundaryCondition,
    /// Node coordinates per scalar node (Lagrange families; empty otherwise).
    node_coords: Vec<[f64; 2]>,
}

/// A function handed to interpolation or projection.
pub enum FieldFn<'a> {
    Scalar(&'a dyn Fn([f64; 2]) -> f64),
    Vector(&'a dyn Fn([f64; 2]) -> [f64; 2]),
}

/// Basis tabulation on one cell at a set of reference points.
pub enum CellBasis {
    /// values[point][local], grads likewise (physical gradients).
    Scalar {
        values: Vec<Vec<f64>>,
        grads: Vec<Vec<[f64; 2]>>,
    },
    /// grads[point][local][i][j] = d v_i / d x_j.
    Vector {
        values: Vec<Vec<[f64; 2]>>,
        grads: Vec<Vec<[[f64; 2]; 2]>>,
        divs: Vec<Vec<f64>>,
    },
}

impl Space {
    pub fn is_vector_valued(&self) -> bool {
        self.vector || self.family.is_vector_valued()
    }

    pub fn local_dofs(&self) -> usize {
        let base = self.family.dofs_per_cell();
        if self.vector {
            2 * base
        } else {
            base
        }
    }

    /// Sorted complement of the constrained set.
    pub fn free_dofs(&self) -> Vec<usize> {
        let mut constrained = vec![false; self.ndofs];
        for &c in &self.constrained {
            constrained[c] = true;
        }
        (0..self.ndofs).filter(|&i| !constrained[i]).collect()
    }
}

pub fn build_space(
    mesh: &Mesh,
    family: Family,
    vector: bool,
    bc: BoundaryCondition,
) -> Result<Space, SpaceError> {
    if vector && !matches!(family, Family::LagrangeP1 | Family::LagrangeP2 | Family::LagrangeP3) {
        return Err(SpaceError::FamilyMismatch(family, vector));
    }
    if bc == BoundaryCondition::NormalFlux && !vector && family != Family::RaviartThomas0 {
        return Err(SpaceError::FamilyMismatch(family, vector));
    }
    let nv = mesh.vertices.len();
    let ne = mesh.edges.len();
    let nc = mesh.cells.len();

    // Scalar node layout and per-cell scalar dofs.
    let (nnodes, node_coords, scalar_cell_dofs): (usize, Vec<[f64; 2]>, Vec<Vec<usize>>) =
        match family {
            Family::LagrangeP1 => {
                let dofs = mesh.cells.iter().map(|c| c.to_vec()).collect();
                (nv, mesh.vertices.clone(), dofs)
            }
            Family::LagrangeP2 => {
                let mut coords = mesh.vertices.clone();
                for e in 0..ne {
                    let [a, b] = mesh.edges[e];
                    let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
                    coords.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                }
                let dofs = (0..nc)
                    .map(|c| {
                        let mut d = mesh.cells[c].to_vec();
                        for k in 0..3 {
                            d.push(nv + mesh.cell_edges[c][k].0);
                        }
                        d
                    })
                    .collect();
                (nv + ne, coords, dofs)
            }
            Family::LagrangeP3 => {
                let mut coords = mesh.vertices.clone();
                for e in 0..ne {
                    let [a, b] = mesh.edges[e];
                    let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
                    for t in [1.0 / 3.0, 2.0 / 3.0] {
                        coords.push([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]);
                    }
                }
                for c in 0..nc {
                    let [a, b, cc] = mesh.cells[c];
                    let (pa, pb, pc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[cc]);
                    coords.push([
                        (pa[0] + pb[0] + pc[0]) / 3.0,
                        (pa[1] + pb[1] + pc[1]) / 3.0,
                    ]);
                }
                let dofs = (0..nc)
                    .map(|c| {
                        let cell = mesh.cells[c];
                        let mut d = cell.to_vec();
                        for k in 0..3 {
                            let (e, _) = mesh.cell_edges[c][k];
                            // Local first node sits nearer vertex (k+1) % 3;
                            // global slot 0 sits nearer the edge's low vertex.
                            let local_first = cell[(k + 1) % 3];
                            let flipped = local_first != mesh.edges[e][0];
                            if flipped {
                                d.push(nv + 2 * e + 1);
                                d.push(nv + 2 * e);
                            } else {
                                d.push(nv + 2 * e);
                                d.push(nv + 2 * e + 1);
                            }
                        }
                        d.push(nv + 2 * ne + c);
                        d
                    })
                    .collect();
                (nv + 2 * ne + nc, coords, dofs)
            }
            Family::Dg0 => {
                let coords = (0..nc)
                    .map(|c| {
                        let [a, b, cc] = mesh.cells[c];
                        let (pa, pb, pc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[cc]);
                        [
                            (pa[0] + pb[0] + pc[0]) / 3.0,
                            (pa[1] + pb[1] + pc[1]) / 3.0,
                        ]
                    })
                    .collect();
                (nc, coords, (0..nc).map(|c| vec![c]).collect())
            }
            Family::RaviartThomas0 => {
                let dofs = (0..nc)
                    .map(|c| mesh.cell_edges[c].iter().map(|&(e, _)| e).collect())
                    .collect();
                (0, Vec::new(), dofs)
            }
        };

    let (ndofs, cell_dofs) = if family == Family::RaviartThomas0 {
        (ne, scalar_cell_dofs)
    } else if vector {
        let cd = scalar_cell_dofs
            .iter()
            .map(|d| d.iter().flat_map(|&g| [2 * g, 2 * g + 1]).collect())
            .collect();
        (2 * nnodes, cd)
    } else {
        (nnodes, scalar_cell_dofs)
    };

    // Constrained set.
    let mut constrained: Vec<usize> = Vec::new();
    let on_boundary_node = |p: [f64; 2]| -> (bool, bool) {
        let tol = 1e-12;
        let x_bdry = p[0] < tol || p[0] > 1.0 - tol;
        let y_bdry = p[1] < tol || p[1] > 1.0 - tol;
        (x_bdry, y_bdry)
    };
    match (bc, family) {
        (BoundaryCondition::None, _) => {}
        (BoundaryCondition::NormalFlux, Family::RaviartThomas0) => {
            constrained.extend(mesh.boundary_edges.iter().copied());
        }
        (BoundaryCondition::NormalFlux, _) => {
            for (node, &p) in node_coords.iter().enumerate() {
                let (xb, yb) = on_boundary_node(p);
                if xb {
                    constrained.push(2 * node);
                }
                if yb {
                    constrained.push(2 * node + 1);
                }
            }
        }
        (BoundaryCondition::Clamped, Family::RaviartThomas0) => {
            constrained.extend(mesh.boundary_edges.iter().copied());
        }
        (BoundaryCondition::Clamped, _) => {
            for (node, &p) in node_coords.iter().enumerate() {
                let (xb, yb) = on_boundary_node(p);
                if xb || yb {
                    if vector {
                        constrained.push(2 * node);
                        constrained.push(2 * node + 1);
                    } else {
                        constrained.push(node);
                    }
                }
            }
        }
    }
    constrained.sort_unstable();
    constrained.dedup();

    Ok(Space {
        family,
        vector,
        ndofs,
        cell_dofs,
        constrained,
        bc,
        node_coords,
    })
}

/// Evaluate the basis of a space on one cell at reference points, pushed to
/// physical coordinates.
pub fn tabulate(
    space: &Space,
    mesh: &Mesh,
    cell: usize,
    points: &[[f64; 2]],
) -> Result<CellBasis, SpaceError> {
    let geom = mesh.cell_geometry(cell);
    if space.family == Family::RaviartThomas0 {
        let signs = [
            mesh.cell_edges[cell][0].1,
            mesh.cell_edges[cell][1].1,
            mesh.cell_edges[cell][2].1,
        ];
        let mut values = Vec::with_capacity(points.len());
        let mut grads = Vec::with_capacity(points.len());
        let mut divs = Vec::with_capacity(points.len());
        for &p in points {
            let basis = refelem::eval_rt0(p)?;
            let (vals, dv) = refelem::push_forward_rt0(&geom, &basis, signs)?;
            values.push(vals.to_vec());
            divs.push(dv.to_vec());
            // Gradient of each basis is sign/det * I (affine Piola image).
            grads.push(
                signs
                    .iter()
                    .map(|&s| {
                        let g = s as f64 / geom.det;
                        [[g, 0.0], [0.0, g]]
                    })
                    .collect(),
            );
        }
        return Ok(CellBasis::Vector {
            values,
            grads,
            divs,
        });
    }

    let mut scalar_values = Vec::with_capacity(points.len());
    let mut scalar_grads = Vec::with_capacity(points.len());
    for &p in points {
        let b = refelem::eval_scalar(space.family, p)?;
        let g = refelem::push_forward_grads(&geom, &b.grads)?;
        scalar_values.push(b.values);
        scalar_grads.push(g);
    }
    if !space.vector {
        return Ok(CellBasis::Scalar {
            values: scalar_values,
            grads: scalar_grads,
        });
    }
    let nloc = space.family.dofs_per_cell();
    let mut values = Vec::with_capacity(points.len());
    let mut grads = Vec::with_capacity(points.len());
    let mut divs = Vec::with_capacity(points.len());
    for (vals, grs) in scalar_values.iter().zip(&scalar_grads) {
        let mut v = Vec::with_capacity(2 * nloc);
        let mut g = Vec::with_capacity(2 * nloc);
        let mut d = Vec::with_capacity(2 * nloc);
        for i in 0..nloc {
            for comp in 0..2 {
                let mut val = [0.0; 2];
                val[comp] = vals[i];
                let mut grad = [[0.0; 2]; 2];
                grad[comp] = grs[i];
                v.push(val);
                g.push(grad);
                d.push(grs[i][comp]);
            }
        }
        values.push(v);
        grads.push(g);
        divs.push(d);
    }
    Ok(CellBasis::Vector {
        values,
        grads,
        divs,
    })
}

/// Nodal interpolation: point values for Lagrange families, cell averages
/// for piecewise constants, edge-normal moments for the H(div) family.
pub fn interpolate(space: &Space, mesh: &Mesh, f: FieldFn) -> Result<Vec<f64>, SpaceError> {
    match (space.family, space.is_vector_valued(), &f) {
        (Family::RaviartThomas0, _, FieldFn::Vector(func)) => {
            let (gx, gw) = gauss_01(4);
            let mut coef = vec![0.0; space.ndofs];
            for e in 0..mesh.edges.len() {
                let [a, b] = mesh.edges[e];
                let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
                let n = mesh.edge_normal(e);
                let len = mesh.edge_length(e);
                let mut moment = 0.0;
                for (t, w) in gx.iter().zip(&gw) {
                    let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                    let v = func(x);
                    moment += w * len * (v[0] * n[0] + v[1] * n[1]);
                }
                coef[e] = moment;
            }
            Ok(coef)
        }
        (Family::Dg0, false, FieldFn::Scalar(func)) => {
            let rule = refelem::quadrature(8)?;
            let mut coef = vec![0.0; space.ndofs];
            for c in 0..mesh.cells.len() {
                let geom = mesh.cell_geometry(c);
                let mut acc = 0.0;
                for (&p, &w) in rule.points.iter().zip(&rule.weights) {
                    acc += w * geom.det * func(geom.map(p));
                }
                coef[c] = acc / mesh.cell_area(c);
            }
            Ok(coef)
        }
        (_, false, FieldFn::Scalar(func)) => {
            Ok(space.node_coords.iter().map(|&p| func(p)).collect())
        }
        (_, true, FieldFn::Vector(func)) => {
            let mut coef = vec![0.0; space.ndofs];
            for (node, &p) in space.node_coords.iter().enumerate() {
                let v = func(p);
                coef[2 * node] = v[0];
                coef[2 * node + 1] = v[1];
            }
            Ok(coef)
        }
        _ => Err(SpaceError::FieldKindMismatch(
            if space.is_vector_valued() { "vector" } else { "scalar" }.into(),
            match f {
                FieldFn::Scalar(_) => "scalar".into(),
                FieldFn::Vector(_) => "vector".into(),
            },
        )),
    }
}

/// Unconstrained L2 projection: solve the mass system M c = (f, basis).
pub fn l2_project(space: &Space, mesh: &Mesh, f: FieldFn) -> Result<Vec<f64>, SpaceError> {
    let vector = space.is_vector_valued();
    match (&f, vector) {
        (FieldFn::Scalar(_), false) | (FieldFn::Vector(_), true) => {}
        _ => {
            return Err(SpaceError::FieldKindMismatch(
                if vector { "vector" } else { "scalar" }.into(),
                match f {
                    FieldFn::Scalar(_) => "scalar".into(),
                    FieldFn::Vector(_) => "vector".into(),
                },
            ))
        }
    }
    let rule = refelem::quadrature(8)?;
    let mut mass = Triplets::new(space.ndofs, space.ndofs);
    let mut rhs = vec![0.0; space.ndofs];
    for cell in 0..mesh.cells.len() {
        let geom = mesh.cell_geometry(cell);
        let basis = tabulate(space, mesh, cell, &rule.points)?;
        let dofs = &space.cell_dofs[cell];
        match &basis {
            CellBasis::Scalar { values, .. } => {
                let func = match f {
                    FieldFn::Scalar(g) => g,
                    _ => unreachable!(),
                };
                for (q, (&p, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                    let wx = w * geom.det;
                    let fx = func(geom.map(p));
                    for (i, &gi) in dofs.iter().enumerate() {
                        rhs[gi] += wx * fx * values[q][i];
                        for (j, &gj) in dofs.iter().enumerate() {
                            mass.push(gi, gj, wx * values[q][i] * values[q][j])?;
                        }
                    }
                }
            }
            CellBasis::Vector { values, .. } => {
                let func = match f {
                    FieldFn::Vector(g) => g,
                    _ => unreachable!(),
                };
                for (q, (&p, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                    let wx = w * geom.det;
                    let fx = func(geom.map(p));
                    for (i, &gi) in dofs.iter().enumerate() {
                        rhs[gi] += wx * (fx[0] * values[q][i][0] + fx[1] * values[q][i][1]);
                        for (j, &gj) in dofs.iter().enumerate() {
                            let dot = values[q][i][0] * values[q][j][0]
                                + values[q][i][1] * values[q][j][1];
                            mass.push(gi, gj, wx * dot)?;
                        }
                    }
                }
            }
        }
    }
    let (mut sols, _) = linsolve::factor_solve(&mass.to_csc(), &[rhs])?;
    Ok(sols.remove(0))
}

/// Symmetric elimination of essential constraints on an assembled system.
/// Returns the modified matrix; the right-hand side is adjusted in place.
pub fn apply_essential_bcs(
    matrix: &CscMatrix,
    rhs: &mut [f64],
    constrained: &[(usize, f64)],
) -> Result<CscMatrix, SpaceError> {
    Ok(matrix.eliminate_dirichlet(rhs, constrained)?)
}

/// Gauss-Legendre nodes and weights on [0, 1] for edge moments.
fn gauss_01(m: usize) -> (Vec<f64>, Vec<f64>) {
    // Small fixed orders cover every caller.
    match m {
        2 => {
            let d = 0.5 / 3.0f64.sqrt();
            (vec![0.5 - d, 0.5 + d], vec![0.5, 0.5])
        }
        4 => {
            let a = 0.5 - 0.5 * (3.0f64 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
            let b = 0.5 - 0.5 * (3.0f64 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
            let wa = (18.0 - 30.0f64.sqrt()) / 72.0;
            let wb = (18.0 + 30.0f64.sqrt()) / 72.0;
            (
                vec![a, b, 1.0 - b, 1.0 - a],
                vec![wa, wb, wb, wa],
            )
        }
        _ => panic!("unsupported edge rule order {m}"),
    }
}

/// Evaluate a finite element function at reference points of one cell.
/// Scalar spaces return (value, [0.0]); vector spaces return the 2-vector.
pub fn eval_function(
    space: &Space,
    mesh: &Mesh,
    coeffs: &[f64],
    cell: usize,
    points: &[[f64; 2]],
) -> Result<Vec<[f64; 2]>, SpaceError> {
    if coeffs.len() != space.ndofs {
        return Err(SpaceError::CoefficientLength(coeffs.len(), space.ndofs));
    }
    let basis = tabulate(space, mesh, cell, points)?;
    let dofs = &space.cell_dofs[cell];
    let mut out = Vec::with_capacity(points.len());
    match basis {
        CellBasis::Scalar { values, .. } => {
            for vals in &values {
                let mut acc = 0.0;
                for (i, &g) in dofs.iter().enumerate() {
                    acc += coeffs[g] * vals[i];
                }
                out.push([acc, 0.0]);
            }
        }
        CellBasis::Vector { values, .. } => {
            for vals in &values {
                let mut acc = [0.0; 2];
                for (i, &g) in dofs.iter().enumerate() {
                    acc[0] += coeffs[g] * vals[i][0];
                    acc[1] += coeffs[g] * vals[i][1];
                }
                out.push(acc);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_unit_square;

    #[test]
    fn counts_on_level_eight() {
        let mesh = build_unit_square(8).unwrap();
        let disp = build_space(&mesh, Family::LagrangeP2, true, BoundaryCondition::Clamped).unwrap();
        assert_eq!(disp.ndofs, 578);
        assert_eq!(disp.constrained.len(), 128);

        let flux = build_space(
            &mesh,
            Family::RaviartThomas0,
            false,
            BoundaryCondition::NormalFlux,
        )
        .unwrap();
        assert_eq!(flux.ndofs, 208);
        assert_eq!(flux.constrained.len(), 32);

        let pres = build_space(&mesh, Family::Dg0, false, BoundaryCondition::None).unwrap();
        assert_eq!(pres.ndofs, 128);
        assert!(pres.constrained.is_empty());
    }

    #[test]
    fn linear_flux_normal_constraints() {
        let mesh = build_unit_square(8).unwrap();
        let flux =
            build_space(&mesh, Family::LagrangeP1, true, BoundaryCondition::NormalFlux).unwrap();
        assert_eq!(flux.ndofs, 162);
        // 4 corners contribute both components, 28 side vertices one each.
        assert_eq!(flux.constrained.len(), 2 * 4 + 28);
    }

    #[test]
    fn rejects_vector_flag_misuse() {
        let mesh = build_unit_square(2).unwrap();
        assert!(build_space(&mesh, Family::RaviartThomas0, true, BoundaryCondition::None).is_err());
        assert!(build_space(&mesh, Family::Dg0, true, BoundaryCondition::None).is_err());
        assert!(
            build_space(&mesh, Family::Dg0, false, BoundaryCondition::NormalFlux).is_err()
        );
    }

    #[test]
    fn cubic_edge_slots_are_shared_consistently() {
        // The two cells flanking an interior edge must agree on which global
        // dof sits at which physical point.
        let mesh = build_unit_square(2).unwrap();
        let space = build_space(&mesh, Family::LagrangeP3, false, BoundaryCondition::None).unwrap();
        let nodes = refelem::lagrange_nodes(Family::LagrangeP3);
        let mut seen: Vec<Option<[f64; 2]>> = vec![None; space.ndofs];
        for c in 0..mesh.cells.len() {
            let geom = mesh.cell_geometry(c);
            for (i, &g) in space.cell_dofs[c].iter().enumerate() {
                let x = geom.map(nodes[i]);
                match seen[g] {
                    None => seen[g] = Some(x),
                    Some(prev) => {
                        assert!(
                            (prev[0] - x[0]).abs() < 1e-12 && (prev[1] - x[1]).abs() < 1e-12,
                            "dof {g} at {prev:?} vs {x:?}"
                        );
                    }
                }
            }
        }
        assert!(seen.iter().all(|s| s.is_some()));
    }

    #[test]
    fn interpolation_reproduces_space_members() {
        let mesh = build_unit_square(3).unwrap();
        // Quadratic scalar: f(x, y) = 1 + 2x + y + x y is in the space.
        let space = build_space(&mesh, Family::LagrangeP2, false, BoundaryCondition::None).unwrap();
        let f = |p: [f64; 2]| 1.0 + 2.0 * p[0] + p[1] + p[0] * p[1];
        let coef = interpolate(&space, &mesh, FieldFn::Scalar(&f)).unwrap();
        // Check pointwise reproduction at cell quadrature points.
        let rule = refelem::quadrature(4).unwrap();
        for c in 0..mesh.cells.len() {
            let geom = mesh.cell_geometry(c);
            let vals = eval_function(&space, &mesh, &coef, c, &rule.points).unwrap();
            for (&p, v) in rule.points.iter().zip(&vals) {
                let x = geom.map(p);
                assert!((v[0] - f(x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn flux_interpolation_reproduces_flux_members() {
        // A global H(div) member: constant plus a scalar multiple of the
        // position field, which is the local shape on every cell.
        let mesh = build_unit_square(2).unwrap();
        let space = build_space(
            &mesh,
            Family::RaviartThomas0,
            false,
            BoundaryCondition::None,
        )
        .unwrap();
        let f = |p: [f64; 2]| [0.3 + 0.5 * p[0], -0.2 + 0.5 * p[1]];
        let coef = interpolate(&space, &mesh, FieldFn::Vector(&f)).unwrap();
        let rule = refelem::quadrature(2).unwrap();
        for c in 0..mesh.cells.len() {
            let geom = mesh.cell_geometry(c);
            let vals = eval_function(&space, &mesh, &coef, c, &rule.points).unwrap();
            for (&p, v) in rule.points.iter().zip(&vals) {
                let x = geom.map(p);
                let exact = f(x);
                assert!(
                    (v[0] - exact[0]).abs() < 1e-12 && (v[1] - exact[1]).abs() < 1e-12,
                    "cell {c}: {v:?} vs {exact:?}"
                );
            }
        }
    }

    #[test]
    fn projection_is_idempotent_on_space_members() {
        let mesh = build_unit_square(3).unwrap();
        let space = build_space(&mesh, Family::LagrangeP2, false, BoundaryCondition::None).unwrap();
        let f = |p: [f64; 2]| 0.5 - p[0] + 3.0 * p[0] * p[1];
        let nodal = interpolate(&space, &mesh, FieldFn::Scalar(&f)).unwrap();
        let projected = l2_project(&space, &mesh, FieldFn::Scalar(&f)).unwrap();
        for (a, b) in nodal.iter().zip(&projected) {
            assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_projection_matches_cell_averages() {
        let mesh = build_unit_square(4).unwrap();
        let space = build_space(&mesh, Family::Dg0, false, BoundaryCondition::None).unwrap();
        let f = |p: [f64; 2]| p[0] * p[0] + p[1];
        let avg = interpolate(&space, &mesh, FieldFn::Scalar(&f)).unwrap();
        let proj = l2_project(&space, &mesh, FieldFn::Scalar(&f)).unwrap();
        for (a, b) in avg.iter().zip(&proj) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn free_dofs_complement_constrained() {
        let mesh = build_unit_square(4).unwrap();
        let space = build_space(&mesh, Family::LagrangeP2, true, BoundaryCondition::Clamped).unwrap();
        let free = space.free_dofs();
        assert_eq!(free.len() + space.constrained.len(), space.ndofs);
        for &c in &space.constrained {
            assert!(free.binary_search(&c).is_err());
        }
    }

    #[test]
    fn essential_bc_wrapper_applies_values() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 2.0).unwrap();
        t.push(0, 1, 1.0).unwrap();
        t.push(1, 0, 1.0).unwrap();
        t.push(1, 1, 3.0).unwrap();
        let m = t.to_csc();
        let mut rhs = vec![1.0, 1.0];
        let out = apply_essential_bcs(&m, &mut rhs, &[(1, 4.0)]).unwrap();
        assert_eq!(rhs, vec![1.0 - 4.0, 4.0]);
        assert_eq!(out.to_dense(), nalgebra::dmatrix![2.0, 0.0; 0.0, 1.0]);
    }
}
