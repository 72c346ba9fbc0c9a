//! Norms, relative errors, and convergence rates.
//!
//! Errors compare a discrete field against a reference field living in a
//! different space on the same mesh (in practice a continuous cubic
//! interpolant of the closed-form solution), integrating the difference
//! cell by cell with a high-order rule. The time-scaled flux norm
//! |||z|||^2 = (tau/kappa) ||z||^2 + tau^2 ||div z||^2 degenerates to the
//! plain H(div) norm at tau = kappa = 1.

use crate::assemble::DATA_DEGREE;
use crate::mesh::Mesh;
use crate::refelem;
use crate::space::{tabulate, CellBasis, Space, SpaceError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    L2,
    /// Full norm: L2 part plus gradient part.
    H1,
    /// L2 part plus divergence part (vector fields only).
    Hdiv,
    /// Time-step and permeability weighted flux norm.
    W { tau: f64, kappa: f64 },
}

impl NormKind {
    fn weights(self) -> (f64, f64, f64) {
        match self {
            NormKind::L2 => (1.0, 0.0, 0.0),
            NormKind::H1 => (1.0, 1.0, 0.0),
            NormKind::Hdiv => (1.0, 0.0, 1.0),
            NormKind::W { tau, kappa } => (tau / kappa, 0.0, tau * tau),
        }
    }
}

struct FieldSample {
    val: [f64; 2],
    grad: [[f64; 2]; 2],
    div: f64,
}

/// A closed-form field used as an error reference without interpolation.
/// Scalar fields use slot 0 of the value and row 0 of the gradient; the
/// divergence closure is ignored for scalar comparisons.
pub struct AnalyticField<'a> {
    pub value: &'a dyn Fn([f64; 2]) -> [f64; 2],
    pub grad: &'a dyn Fn([f64; 2]) -> [[f64; 2]; 2],
    pub div: &'a dyn Fn([f64; 2]) -> f64,
}

impl AnalyticField<'_> {
    fn sample(&self, x: [f64; 2]) -> FieldSample {
        FieldSample {
            val: (self.value)(x),
            grad: (self.grad)(x),
            div: (self.div)(x),
        }
    }
}

fn sample_cell(
    space: &Space,
    mesh: &Mesh,
    cell: usize,
    points: &[[f64; 2]],
    coeffs: &[f64],
) -> Result<Vec<FieldSample>, SpaceError> {
    if coeffs.len() != space.ndofs {
        return Err(SpaceError::CoefficientLength(coeffs.len(), space.ndofs));
    }
    let basis = tabulate(space, mesh, cell, points)?;
    let dofs = &space.cell_dofs[cell];
    let mut out = Vec::with_capacity(points.len());
    match &basis {
        CellBasis::Scalar { values, grads } => {
            for q in 0..points.len() {
                let mut s = FieldSample {
                    val: [0.0; 2],
                    grad: [[0.0; 2]; 2],
                    div: 0.0,
                };
                for (i, &gi) in dofs.iter().enumerate() {
                    let c = coeffs[gi];
                    s.val[0] += c * values[q][i];
                    s.grad[0][0] += c * grads[q][i][0];
                    s.grad[0][1] += c * grads[q][i][1];
                }
                out.push(s);
            }
        }
        CellBasis::Vector {
            values,
            grads,
            divs,
        } => {
            for q in 0..points.len() {
                let mut s = FieldSample {
                    val: [0.0; 2],
                    grad: [[0.0; 2]; 2],
                    div: 0.0,
                };
                for (i, &gi) in dofs.iter().enumerate() {
                    let c = coeffs[gi];
                    s.val[0] += c * values[q][i][0];
                    s.val[1] += c * values[q][i][1];
                    for r in 0..2 {
                        for cc in 0..2 {
                            s.grad[r][cc] += c * grads[q][i][r][cc];
                        }
                    }
                    s.div += c * divs[q][i];
                }
                out.push(s);
            }
        }
    }
    Ok(out)
}

enum RefSide<'a> {
    Zero,
    Discrete(&'a Space, &'a [f64]),
    Analytic(&'a AnalyticField<'a>),
}

fn accumulate(
    mesh: &Mesh,
    a: (&Space, &[f64]),
    b: RefSide<'_>,
    kind: NormKind,
) -> Result<f64, SpaceError> {
    if let RefSide::Discrete(sb, _) = b {
        if a.0.is_vector_valued() != sb.is_vector_valued() {
            return Err(SpaceError::FieldKindMismatch(
                "one field".into(),
                "a field of the other kind".into(),
            ));
        }
    }
    if matches!(kind, NormKind::Hdiv | NormKind::W { .. }) && !a.0.is_vector_valued() {
        return Err(SpaceError::FieldKindMismatch(
            "scalar".into(),
            "a divergence-bearing norm".into(),
        ));
    }
    let (w_l2, w_grad, w_div) = kind.weights();
    let rule = refelem::quadrature(DATA_DEGREE)?;
    let mut acc = 0.0;
    for cell in 0..mesh.cells.len() {
        let geom = mesh.cell_geometry(cell);
        let sa = sample_cell(a.0, mesh, cell, &rule.points, a.1)?;
        let sb = match b {
            RefSide::Discrete(space, coeffs) => {
                Some(sample_cell(space, mesh, cell, &rule.points, coeffs)?)
            }
            RefSide::Zero | RefSide::Analytic(_) => None,
        };
        for (q, &w) in rule.weights.iter().enumerate() {
            let pb_store;
            let pb = match (&sb, &b) {
                (Some(sb), _) => Some(&sb[q]),
                (None, RefSide::Analytic(field)) => {
                    pb_store = field.sample(geom.map(rule.points[q]));
                    Some(&pb_store)
                }
                (None, _) => None,
            };
            let (dv, dg, dd) = match pb {
                Some(pb) => {
                    let pa = &sa[q];
                    let dv = [pa.val[0] - pb.val[0], pa.val[1] - pb.val[1]];
                    let mut dg = [[0.0; 2]; 2];
                    for r in 0..2 {
                        for c in 0..2 {
                            dg[r][c] = pa.grad[r][c] - pb.grad[r][c];
                        }
                    }
                    (dv, dg, pa.div - pb.div)
                }
                None => {
                    let p = &sa[q];
                    (p.val, p.grad, p.div)
                }
            };
            let mut term = w_l2 * (dv[0] * dv[0] + dv[1] * dv[1]) + w_div * dd * dd;
            if w_grad != 0.0 {
                for r in 0..2 {
                    for c in 0..2 {
                        term += w_grad * dg[r][c] * dg[r][c];
                    }
                }
            }
            acc += w * geom.det * term;
        }
    }
    Ok(acc.max(0.0).sqrt())
}

/// Norm of a closed-form field via direct quadrature.
pub fn analytic_norm(
    mesh: &Mesh,
    field: &AnalyticField<'_>,
    kind: NormKind,
) -> Result<f64, SpaceError> {
    let (w_l2, w_grad, w_div) = kind.weights();
    let rule = refelem::quadrature(DATA_DEGREE)?;
    let mut acc = 0.0;
    for cell in 0..mesh.cells.len() {
        let geom = mesh.cell_geometry(cell);
        for (p, &w) in rule.points.iter().zip(&rule.weights) {
            let s = field.sample(geom.map(*p));
            let mut term = w_l2 * (s.val[0] * s.val[0] + s.val[1] * s.val[1]) + w_div * s.div * s.div;
            if w_grad != 0.0 {
                for r in 0..2 {
                    for c in 0..2 {
                        term += w_grad * s.grad[r][c] * s.grad[r][c];
                    }
                }
            }
            acc += w * geom.det * term;
        }
    }
    Ok(acc.max(0.0).sqrt())
}

/// Relative error of a discrete field measured directly against the
/// closed form, bypassing the interpolated reference. Cross-check mode.
pub fn relative_error_vs_analytic(
    mesh: &Mesh,
    space: &Space,
    coeffs: &[f64],
    field: &AnalyticField<'_>,
    kind: NormKind,
) -> Result<f64, SpaceError> {
    let err = accumulate(mesh, (space, coeffs), RefSide::Analytic(field), kind)?;
    let denom = analytic_norm(mesh, field, kind)?;
    if denom < 1e-14 {
        return Ok(err);
    }
    Ok(err / denom)
}

/// Norm of a single discrete field.
pub fn field_norm(
    mesh: &Mesh,
    space: &Space,
    coeffs: &[f64],
    kind: NormKind,
) -> Result<f64, SpaceError> {
    accumulate(mesh, (space, coeffs), RefSide::Zero, kind)
}

/// Norm of the difference of two discrete fields over the same mesh.
pub fn difference_norm(
    mesh: &Mesh,
    space_a: &Space,
    coeffs_a: &[f64],
    space_b: &Space,
    coeffs_b: &[f64],
    kind: NormKind,
) -> Result<f64, SpaceError> {
    accumulate(
        mesh,
        (space_a, coeffs_a),
        RefSide::Discrete(space_b, coeffs_b),
        kind,
    )
}

/// Error of a discrete field against a reference field, divided by the
/// reference norm (absolute error when the reference is numerically zero).
pub fn relative_error(
    mesh: &Mesh,
    space: &Space,
    coeffs: &[f64],
    ref_space: &Space,
    ref_coeffs: &[f64],
    kind: NormKind,
) -> Result<f64, SpaceError> {
    let err = difference_norm(mesh, space, coeffs, ref_space, ref_coeffs, kind)?;
    let denom = field_norm(mesh, ref_space, ref_coeffs, kind)?;
    if denom < 1e-14 {
        return Ok(err);
    }
    Ok(err / denom)
}

/// Observed order between two consecutive mesh halvings.
pub fn rate(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}
