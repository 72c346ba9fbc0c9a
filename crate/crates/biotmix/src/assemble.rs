//! Assembly of the bilinear forms, norm Gram matrices, and the coupled
//! backward-Euler step system.
//!
//! One step of the three-field discretization solves the symmetric block
//! system (alpha = 1, third equation scaled by the step length tau so the
//! off-diagonal blocks transpose onto each other):
//!
//! ```text
//! [ A       0       B_u^T    0 ] [u]   [ (f, v)                          ]
//! [ 0       tau C   tau B_z^T 0 ] [z] = [ tau (g, w)                      ]
//! [ B_u     tau B_z -D       m ] [p]   [ tau (s, q) + b(u_prev, q) - d(p_prev, q) ]
//! [ 0       0       m^T      0 ] [y]   [ 0                               ]
//! ```
//!
//! with A the elastic form, C the permeability-weighted flux mass, D the
//! storage-weighted pressure mass, B_* the divergence couplings, and m the
//! per-cell area vector enforcing a mean-free pressure through the last
//! multiplier row (present when requested).

use crate::mesh::Mesh;
use crate::problem::{ExactFields, Params};
use crate::refelem::{self, Family};
use crate::space::{tabulate, CellBasis, Space, SpaceError};
use crate::sparse::{CscMatrix, SparseError, Triplets};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssembleError {
    #[error("form {0} needs {1}")]
    FormSpaceMismatch(String, String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    RefElem(#[from] crate::refelem::RefElemError),
}

/// The named bilinear forms of the step system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    /// Elastic form: 2 mu (eps(u), eps(v)) + lambda (div u, div v).
    A,
    /// Displacement-pressure coupling (div u, q); rows test scalar space.
    BUq,
    /// Flux-pressure coupling (div w, q); rows test scalar space.
    BWq,
    /// Permeability-weighted flux mass (kappa^{-1} z, w).
    C,
    /// Storage-weighted pressure mass (c0 p, q).
    D,
    /// Plain L2 mass of the space (scalar or vector by the space kind).
    Mass,
}

/// Quadrature degree for bilinear forms; every integrand here is a product
/// of polynomials of total degree at most four on affine cells.
const FORM_DEGREE: usize = 4;
/// Quadrature degree for right-hand sides and error integrals against
/// non-polynomial data.
pub const DATA_DEGREE: usize = 8;

/// Assemble one named form; rows belong to the test space, columns to the
/// trial space.
pub fn assemble_form(
    kind: FormKind,
    mesh: &Mesh,
    trial: &Space,
    test: &Space,
    params: &Params,
) -> Result<CscMatrix, AssembleError> {
    match kind {
        FormKind::A => {
            if !(trial.vector && test.vector) {
                return Err(AssembleError::FormSpaceMismatch(
                    "elastic".into(),
                    "vector Lagrange trial and test spaces".into(),
                ));
            }
            assemble_vector_pair(mesh, trial, test, |tv, gv, dv, uv, gu, du| {
                let _ = (tv, uv, dv, du);
                let e_test = sym(gv);
                let e_trial = sym(gu);
                let mut acc = 0.0;
                for r in 0..2 {
                    for c in 0..2 {
                        acc += e_test[r][c] * e_trial[r][c];
                    }
                }
                2.0 * params.mu * acc + params.lambda * trace(gv) * trace(gu)
            })
        }
        FormKind::BUq | FormKind::BWq => {
            if !trial.is_vector_valued() || test.is_vector_valued() {
                return Err(AssembleError::FormSpaceMismatch(
                    "divergence coupling".into(),
                    "vector trial and scalar test spaces".into(),
                ));
            }
            assemble_div_coupling(mesh, trial, test)
        }
        FormKind::C => {
            if !trial.is_vector_valued() || !test.is_vector_valued() {
                return Err(AssembleError::FormSpaceMismatch(
                    "flux mass".into(),
                    "vector trial and test spaces".into(),
                ));
            }
            let w = 1.0 / params.kappa;
            assemble_vector_pair(mesh, trial, test, move |tv, _, _, uv, _, _| {
                w * (tv[0] * uv[0] + tv[1] * uv[1])
            })
        }
        FormKind::D => {
            if trial.is_vector_valued() || test.is_vector_valued() {
                return Err(AssembleError::FormSpaceMismatch(
                    "storage mass".into(),
                    "scalar trial and test spaces".into(),
                ));
            }
            assemble_scalar_pair(mesh, trial, test, move |tv, _, uv, _| params.c0 * tv * uv)
        }
        FormKind::Mass => {
            if trial.is_vector_valued() != test.is_vector_valued() {
                return Err(AssembleError::FormSpaceMismatch(
                    "mass".into(),
                    "matching trial and test kinds".into(),
                ));
            }
            if trial.is_vector_valued() {
                assemble_vector_pair(mesh, trial, test, |tv, _, _, uv, _, _| {
                    tv[0] * uv[0] + tv[1] * uv[1]
                })
            } else {
                assemble_scalar_pair(mesh, trial, test, |tv, _, uv, _| tv * uv)
            }
        }
    }
}

/// Weighted Gram matrix of a vector space:
/// w_l2 (v, w) + w_grad (grad v, grad w) + w_div (div v, div w).
/// Covers the H1, H(div), and time-scaled flux norms.
pub fn assemble_vector_gram(
    mesh: &Mesh,
    space: &Space,
    w_l2: f64,
    w_grad: f64,
    w_div: f64,
) -> Result<CscMatrix, AssembleError> {
    if !space.is_vector_valued() {
        return Err(AssembleError::FormSpaceMismatch(
            "vector Gram".into(),
            "a vector space".into(),
        ));
    }
    if w_grad != 0.0 && space.family == Family::RaviartThomas0 {
        return Err(AssembleError::FormSpaceMismatch(
            "gradient Gram".into(),
            "a Lagrange vector space".into(),
        ));
    }
    assemble_vector_pair(mesh, space, space, move |tv, gv, dv, uv, gu, du| {
        let mut acc = w_l2 * (tv[0] * uv[0] + tv[1] * uv[1]) + w_div * dv * du;
        if w_grad != 0.0 {
            for r in 0..2 {
                for c in 0..2 {
                    acc += w_grad * gv[r][c] * gu[r][c];
                }
            }
        }
        acc
    })
}

/// Weighted scalar mass matrix.
pub fn assemble_scalar_gram(
    mesh: &Mesh,
    space: &Space,
    w_l2: f64,
) -> Result<CscMatrix, AssembleError> {
    if space.is_vector_valued() {
        return Err(AssembleError::FormSpaceMismatch(
            "scalar Gram".into(),
            "a scalar space".into(),
        ));
    }
    assemble_scalar_pair(mesh, space, space, move |tv, _, uv, _| w_l2 * tv * uv)
}

fn sym(g: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let off = 0.5 * (g[0][1] + g[1][0]);
    [[g[0][0], off], [off, g[1][1]]]
}

fn trace(g: &[[f64; 2]; 2]) -> f64 {
    g[0][0] + g[1][1]
}

/// Generic cell loop for vector trial x vector test integrands.
fn assemble_vector_pair<F>(
    mesh: &Mesh,
    trial: &Space,
    test: &Space,
    integrand: F,
) -> Result<CscMatrix, AssembleError>
where
    F: Fn(&[f64; 2], &[[f64; 2]; 2], f64, &[f64; 2], &[[f64; 2]; 2], f64) -> f64,
{
    let rule = refelem::quadrature(FORM_DEGREE)?;
    let mut out = Triplets::new(test.ndofs, trial.ndofs);
    let same = std::ptr::eq(trial, test);
    for cell in 0..mesh.cells.len() {
        let geom = mesh.cell_geometry(cell);
        let tb = tabulate(test, mesh, cell, &rule.points)?;
        let ub_store;
        let ub = if same {
            &tb
        } else {
            ub_store = tabulate(trial, mesh, cell, &rule.points)?;
            &ub_store
        };
        let (tvals, tgrads, tdivs) = expect_vector(&tb)?;
        let (uvals, ugrads, udivs) = expect_vector(ub)?;
        let tdofs = &test.cell_dofs[cell];
        let udofs = &trial.cell_dofs[cell];
        let mut local = vec![vec![0.0; udofs.len()]; tdofs.len()];
        for (q, &w) in rule.weights.iter().enumerate() {
            let wx = w * geom.det;
            for i in 0..tdofs.len() {
                for j in 0..udofs.len() {
                    local[i][j] += wx
                        * integrand(
                            &tvals[q][i],
                            &tgrads[q][i],
                            tdivs[q][i],
                            &uvals[q][j],
                            &ugrads[q][j],
                            udivs[q][j],
                        );
                }
            }
        }
        for (i, &gi) in tdofs.iter().enumerate() {
            for (j, &gj) in udofs.iter().enumerate() {
                out.push(gi, gj, local[i][j])?;
            }
        }
    }
    Ok(out.to_csc())
}

fn assemble_scalar_pair<F>(
    mesh: &Mesh,
    trial: &Space,
    test: &Space,
    integrand: F,
) -> Result<CscMatrix, AssembleError>
where
    F: Fn(f64, &[f64; 2], f64, &[f64; 2]) -> f64,
{
    let rule = refelem::quadrature(FORM_DEGREE)?;
    let mut out = Triplets::new(test.ndofs, trial.ndofs);
    let same = std::ptr::eq(trial, test);
    for cell in 0..mesh.cells.len() {
        let geom = mesh.cell_geometry(cell);
        let tb = tabulate(test, mesh, cell, &rule.points)?;
        let ub_store;
        let ub = if same {
            &tb
        } else {
            ub_store = tabulate(trial, mesh, cell, &rule.points)?;
            &ub_store
        };
        let (tvals, tgrads) = expect_scalar(&tb)?;
        let (uvals, ugrads) = expect_scalar(ub)?;
        let tdofs = &test.cell_dofs[cell];
        let udofs = &trial.cell_dofs[cell];
        let mut local = vec![vec![0.0; udofs.len()]; tdofs.len()];
        for (q, &w) in rule.weights.iter().enumerate() {
            let wx = w * geom.det;
            for i in 0..tdofs.len() {
                for j in 0..udofs.len() {
                    local[i][j] += wx
                        * integrand(tvals[q][i], &tgrads[q][i], uvals[q][j], &ugrads[q][j]);
                }
            }
        }
        for (i, &gi) in tdofs.iter().enumerate() {
            for (j, &gj) in udofs.iter().enumerate() {
                out.push(gi, gj, local[i][j])?;
            }
        }
    }
    Ok(out.to_csc())
}

/// (div trial_j, test_i): rows scalar test space, columns vector trial.
fn assemble_div_coupling(
    mesh: &Mesh,
    trial: &Space,
    test: &Space,
) -> Result<CscMatrix, AssembleError> {
    let rule = refelem::quadrature(FORM_DEGREE)?;
    let mut out = Triplets::new(test.ndofs, trial.ndofs);
    for cell in 0..mesh.cells.len() {
        let geom = mesh.cell_geometry(cell);
        let tb = tabulate(test, mesh, cell, &rule.points)?;
        let ub = tabulate(trial, mesh, cell, &rule.points)?;
        let (tvals, _) = expect_scalar(&tb)?;
        let (_, _, udivs) = expect_vector(&ub)?;
        let tdofs = &test.cell_dofs[cell];
        let udofs = &trial.cell_dofs[cell];
        let mut local = vec![vec![0.0; udofs.len()]; tdofs.len()];
        for (q, &w) in rule.weights.iter().enumerate() {
            let wx = w * geom.det;
            for i in 0..tdofs.len() {
                for j in 0..udofs.len() {
                    local[i][j] += wx * tvals[q][i] * udivs[q][j];
                }
            }
        }
        for (i, &gi) in tdofs.iter().enumerate() {
            for (j, &gj) in udofs.iter().enumerate() {
                out.push(gi, gj, local[i][j])?;
            }
        }
    }
    Ok(out.to_csc())
}

fn expect_vector(
    b: &CellBasis,
) -> Result<(&Vec<Vec<[f64; 2]>>, &Vec<Vec<[[f64; 2]; 2]>>, &Vec<Vec<f64>>), AssembleError> {
    match b {
        CellBasis::Vector {
            values,
            grads,
            divs,
        } => Ok((values, grads, divs)),
        CellBasis::Scalar { .. } => Err(AssembleError::FormSpaceMismatch(
            "vector integrand".into(),
            "a vector basis".into(),
        )),
    }
}

fn expect_scalar(b: &CellBasis) -> Result<(&Vec<Vec<f64>>, &Vec<Vec<[f64; 2]>>), AssembleError> {
    match b {
        CellBasis::Scalar { values, grads } => Ok((values, grads)),
        CellBasis::Vector { .. } => Err(AssembleError::FormSpaceMismatch(
            "scalar integrand".into(),
            "a scalar basis".into(),
        )),
    }
}

/// The assembled step system plus the pieces the load and history terms
/// reuse.
#[derive(Debug)]
pub struct BiotSystem {
    pub matrix: CscMatrix,
    pub nu: usize,
    pub nw: usize,
    pub nq: usize,
    pub use_mean_constraint: bool,
    /// Displacement-pressure coupling (rows Q, cols U).
    pub b_u: CscMatrix,
    /// Storage-weighted pressure mass (rows and cols Q).
    pub d: CscMatrix,
    /// Constrained global indices of the block system (displacement and
    /// flux essential conditions), ascending.
    pub constrained: Vec<usize>,
}

impl BiotSystem {
    pub fn offset_u(&self) -> usize {
        0
    }
    pub fn offset_w(&self) -> usize {
        self.nu
    }
    pub fn offset_q(&self) -> usize {
        self.nu + self.nw
    }
    pub fn offset_multiplier(&self) -> Option<usize> {
        self.use_mean_constraint.then_some(self.nu + self.nw + self.nq)
    }
    pub fn total(&self) -> usize {
        self.nu + self.nw + self.nq + usize::from(self.use_mean_constraint)
    }

    /// Free (unconstrained) indices of the block system, ascending.
    pub fn free_dofs(&self) -> Vec<usize> {
        let mut constrained = vec![false; self.total()];
        for &c in &self.constrained {
            constrained[c] = true;
        }
        (0..self.total()).filter(|&i| !constrained[i]).collect()
    }
}

/// Assemble the full backward-Euler step matrix for one element pairing.
pub fn assemble_biot_step(
    mesh: &Mesh,
    u_space: &Space,
    w_space: &Space,
    q_space: &Space,
    params: &Params,
    use_mean_constraint: bool,
) -> Result<BiotSystem, AssembleError> {
    let tau = params.tau;
    let a = assemble_form(FormKind::A, mesh, u_space, u_space, params)?;
    let c = assemble_form(FormKind::C, mesh, w_space, w_space, params)?;
    let d = assemble_form(FormKind::D, mesh, q_space, q_space, params)?;
    let b_u = assemble_form(FormKind::BUq, mesh, u_space, q_space, params)?;
    let b_z = assemble_form(FormKind::BWq, mesh, w_space, q_space, params)?;

    let (nu, nw, nq) = (u_space.ndofs, w_space.ndofs, q_space.ndofs);
    let total = nu + nw + nq + usize::from(use_mean_constraint);
    let (ou, ow, oq) = (0, nu, nu + nw);

    let mut k = Triplets::new(total, total);
    k.push_block(ou, ou, &a.to_triplets())?;
    let mut tc = c.to_triplets();
    tc.scale(tau);
    k.push_block(ow, ow, &tc)?;
    let mut td = d.to_triplets();
    td.scale(-1.0);
    k.push_block(oq, oq, &td)?;
    let tbu = b_u.to_triplets();
    k.push_block(oq, ou, &tbu)?;
    k.push_block_transposed(ou, oq, &tbu)?;
    let mut tbz = b_z.to_triplets();
    tbz.scale(tau);
    k.push_block(oq, ow, &tbz)?;
    k.push_block_transposed(ow, oq, &tbz)?;
    if use_mean_constraint {
        let om = total - 1;
        for cell in 0..mesh.cells.len() {
            let area = mesh.cell_area(cell);
            k.push(oq + cell, om, area)?;
            k.push(om, oq + cell, area)?;
        }
    }

    let mut constrained: Vec<usize> = u_space.constrained.iter().map(|&i| ou + i).collect();
    constrained.extend(w_space.constrained.iter().map(|&i| ow + i));

    Ok(BiotSystem {
        matrix: k.to_csc(),
        nu,
        nw,
        nq,
        use_mean_constraint,
        b_u,
        d,
        constrained,
    })
}

/// Right-hand side of one step at time t, given the previous displacement
/// and pressure coefficient vectors.
pub fn assemble_load(
    system: &BiotSystem,
    mesh: &Mesh,
    u_space: &Space,
    w_space: &Space,
    q_space: &Space,
    params: &Params,
    exact: &ExactFields,
    t: f64,
    u_prev: &[f64],
    p_prev: &[f64],
) -> Result<Vec<f64>, AssembleError> {
    let tau = params.tau;
    let rule = refelem::quadrature(DATA_DEGREE)?;
    let mut rhs = vec![0.0; system.total()];
    let (ou, ow, oq) = (
        system.offset_u(),
        system.offset_w(),
        system.offset_q(),
    );

    for cell in 0..mesh.cells.len() {
        let geom = mesh.cell_geometry(cell);
        // Momentum load against test displacements.
        let ub = tabulate(u_space, mesh, cell, &rule.points)?;
        let (uvals, _, _) = expect_vector(&ub)?;
        let udofs = &u_space.cell_dofs[cell];
        // Fluid load against test fluxes (identically zero data, assembled
        // anyway so a different benchmark slots in unchanged).
        let wb = tabulate(w_space, mesh, cell, &rule.points)?;
        let (wvals, _, _) = expect_vector(&wb)?;
        let wdofs = &w_space.cell_dofs[cell];
        // Mass load against test pressures.
        let qb = tabulate(q_space, mesh, cell, &rule.points)?;
        let (qvals, _) = expect_scalar(&qb)?;
        let qdofs = &q_space.cell_dofs[cell];
        for (q, (&p, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let wx = w * geom.det;
            let x = geom.map(p);
            let f = exact.load_f(t, x);
            for (i, &gi) in udofs.iter().enumerate() {
                rhs[ou + gi] += wx * (f[0] * uvals[q][i][0] + f[1] * uvals[q][i][1]);
            }
            let g = exact.load_g(t, x);
            if g != [0.0, 0.0] {
                for (i, &gi) in wdofs.iter().enumerate() {
                    rhs[ow + gi] += wx * tau * (g[0] * wvals[q][i][0] + g[1] * wvals[q][i][1]);
                }
            }
            let s = exact.load_s(t, x);
            for (i, &gi) in qdofs.iter().enumerate() {
                rhs[oq + gi] += wx * tau * s * qvals[q][i];
            }
        }
    }

    // History: + b(u_prev, q) - d(p_prev, q).
    let bu = system.b_u.matvec(u_prev)?;
    for (i, v) in bu.into_iter().enumerate() {
        rhs[oq + i] += v;
    }
    let dp = system.d.matvec(p_prev)?;
    for (i, v) in dp.into_iter().enumerate() {
        rhs[oq + i] -= v;
    }
    Ok(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_unit_square;
    use crate::space::{build_space, interpolate, BoundaryCondition, FieldFn};
    use crate::sparse::dot;

    fn p2v(mesh: &Mesh, bc: BoundaryCondition) -> Space {
        build_space(mesh, Family::LagrangeP2, true, bc).unwrap()
    }

    #[test]
    fn elastic_energy_of_quadratic_field() {
        // u = (x^2, 0), mu = lambda = 1: a(u, u) = 8/3 + 4/3 = 4.
        let mesh = build_unit_square(4).unwrap();
        let space = p2v(&mesh, BoundaryCondition::None);
        let f = |p: [f64; 2]| [p[0] * p[0], 0.0];
        let u = interpolate(&space, &mesh, FieldFn::Vector(&f)).unwrap();
        let a = assemble_form(FormKind::A, &mesh, &space, &space, &Params::default()).unwrap();
        let au = a.matvec(&u).unwrap();
        let energy = dot(&u, &au);
        assert!((energy - 4.0).abs() < 1e-10, "a(u, u) = {energy}");
    }

    #[test]
    fn flux_mass_scales_inversely_with_permeability() {
        let mesh = build_unit_square(2).unwrap();
        let space = build_space(
            &mesh,
            Family::RaviartThomas0,
            false,
            BoundaryCondition::None,
        )
        .unwrap();
        let c1 = assemble_form(
            FormKind::C,
            &mesh,
            &space,
            &space,
            &Params {
                kappa: 1.0,
                ..Params::default()
            },
        )
        .unwrap();
        let c2 = assemble_form(
            FormKind::C,
            &mesh,
            &space,
            &space,
            &Params {
                kappa: 1e-6,
                ..Params::default()
            },
        )
        .unwrap();
        let scale = c2.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in c1.vals.iter().zip(&c2.vals) {
            assert!((a * 1e6 - b).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn storage_mass_is_scaled_area_diagonal() {
        let mesh = build_unit_square(4).unwrap();
        let space = build_space(&mesh, Family::Dg0, false, BoundaryCondition::None).unwrap();
        let d = assemble_form(
            FormKind::D,
            &mesh,
            &space,
            &space,
            &Params {
                c0: 2.5,
                ..Params::default()
            },
        )
        .unwrap();
        let dense = d.to_dense();
        for c in 0..mesh.cells.len() {
            for cc in 0..mesh.cells.len() {
                let expect = if c == cc { 2.5 * mesh.cell_area(c) } else { 0.0 };
                assert!((dense[(c, cc)] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn divergence_coupling_kills_constants_on_free_flux_dofs() {
        // For interior flux dofs the row sum over constant pressure is the
        // net boundary flux of the basis: zero.
        let mesh = build_unit_square(4).unwrap();
        let flux = build_space(
            &mesh,
            Family::RaviartThomas0,
            false,
            BoundaryCondition::NormalFlux,
        )
        .unwrap();
        let pres = build_space(&mesh, Family::Dg0, false, BoundaryCondition::None).unwrap();
        let b = assemble_form(FormKind::BWq, &mesh, &flux, &pres, &Params::default()).unwrap();
        let ones = vec![1.0; pres.ndofs];
        let bt1 = b.matvec_transpose(&ones).unwrap();
        for &e in &flux.free_dofs() {
            assert!(bt1[e].abs() < 1e-13, "free flux dof {e}: {}", bt1[e]);
        }
    }

    #[test]
    fn mass_row_sums_integrate_basis() {
        // Sum_j M_ij = integral of basis i; for the quadratic family these
        // integrals sum to the domain area.
        let mesh = build_unit_square(2).unwrap();
        let space = build_space(&mesh, Family::LagrangeP2, false, BoundaryCondition::None).unwrap();
        let m = assemble_form(FormKind::Mass, &mesh, &space, &space, &Params::default()).unwrap();
        let ones = vec![1.0; space.ndofs];
        let rows = m.matvec(&ones).unwrap();
        let total: f64 = rows.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_system_counts_and_symmetry() {
        let mesh = build_unit_square(8).unwrap();
        let u = p2v(&mesh, BoundaryCondition::Clamped);
        let w = build_space(
            &mesh,
            Family::RaviartThomas0,
            false,
            BoundaryCondition::NormalFlux,
        )
        .unwrap();
        let q = build_space(&mesh, Family::Dg0, false, BoundaryCondition::None).unwrap();
        let sys = assemble_biot_step(&mesh, &u, &w, &q, &Params::default(), true).unwrap();
        assert_eq!(sys.total(), 915);
        assert_eq!(sys.free_dofs().len(), 755);
        assert!(sys.matrix.symmetry_gap() < 1e-12);
    }

    #[test]
    fn multiplier_column_holds_cell_areas() {
        let mesh = build_unit_square(2).unwrap();
        let u = p2v(&mesh, BoundaryCondition::Clamped);
        let w = build_space(
            &mesh,
            Family::RaviartThomas0,
            false,
            BoundaryCondition::NormalFlux,
        )
        .unwrap();
        let q = build_space(&mesh, Family::Dg0, false, BoundaryCondition::None).unwrap();
        let sys = assemble_biot_step(&mesh, &u, &w, &q, &Params::default(), true).unwrap();
        let om = sys.offset_multiplier().unwrap();
        let (rows, vals) = sys.matrix.col(om);
        assert_eq!(rows.len(), mesh.cells.len());
        let total: f64 = vals.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        for (&r, &v) in rows.iter().zip(vals) {
            assert!((v - mesh.cell_area(r - sys.offset_q())).abs() < 1e-15);
        }
    }

    #[test]
    fn step_rhs_matches_direct_quadrature_for_momentum_block() {
        let mesh = build_unit_square(2).unwrap();
        let u = p2v(&mesh, BoundaryCondition::Clamped);
        let w = build_space(
            &mesh,
            Family::RaviartThomas0,
            false,
            BoundaryCondition::NormalFlux,
        )
        .unwrap();
        let q = build_space(&mesh, Family::Dg0, false, BoundaryCondition::None).unwrap();
        let params = Params::default();
        let sys = assemble_biot_step(&mesh, &u, &w, &q, &params, true).unwrap();
        let exact = crate::problem::exact_fields(params);
        let u_prev = vec![0.0; u.ndofs];
        let p_prev = vec![0.0; q.ndofs];
        let rhs = assemble_load(
            &sys, &mesh, &u, &w, &q, &params, &exact, 1.0, &u_prev, &p_prev,
        )
        .unwrap();
        // With zero history and zero fluid load the flux block must be zero.
        for i in 0..w.ndofs {
            assert_eq!(rhs[sys.offset_w() + i], 0.0);
        }
        // The multiplier entry stays zero.
        assert_eq!(rhs[sys.total() - 1], 0.0);
        // Momentum entries are genuinely nonzero.
        let unorm: f64 = (0..u.ndofs).map(|i| rhs[i] * rhs[i]).sum::<f64>().sqrt();
        assert!(unorm > 1e-3);
    }

    #[test]
    fn history_terms_enter_pressure_rows() {
        let mesh = build_unit_square(2).unwrap();
        let u = p2v(&mesh, BoundaryCondition::Clamped);
        let w = build_space(
            &mesh,
            Family::RaviartThomas0,
            false,
            BoundaryCondition::NormalFlux,
        )
        .unwrap();
        let q = build_space(&mesh, Family::Dg0, false, BoundaryCondition::None).unwrap();
        let params = Params {
            c0: 1.0,
            ..Params::default()
        };
        let sys = assemble_biot_step(&mesh, &u, &w, &q, &params, true).unwrap();
        let exact = crate::problem::exact_fields(params);
        let zero_u = vec![0.0; u.ndofs];
        let zero_p = vec![0.0; q.ndofs];
        let mut p_prev = vec![0.0; q.ndofs];
        p_prev[3] = 2.0;
        let base = assemble_load(
            &sys, &mesh, &u, &w, &q, &params, &exact, 1.0, &zero_u, &zero_p,
        )
        .unwrap();
        let with_hist = assemble_load(
            &sys, &mesh, &u, &w, &q, &params, &exact, 1.0, &zero_u, &p_prev,
        )
        .unwrap();
        let oq = sys.offset_q();
        // Only pressure rows change, by -d(p_prev, q).
        for i in 0..sys.total() {
            let delta = with_hist[i] - base[i];
            if i == oq + 3 {
                assert!((delta + 1.0 * 2.0 * mesh.cell_area(3)).abs() < 1e-14);
            } else {
                assert!(delta.abs() < 1e-14, "row {i} changed by {delta}");
            }
        }
    }
}
