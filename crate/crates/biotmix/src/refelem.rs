//! Reference-triangle basis functions, Piola transforms, and quadrature.
//!
//! The reference cell is the unit triangle {x >= 0, y >= 0, x + y <= 1} with
//! barycentric coordinates (l0, l1, l2) = (1 - x - y, x, y). Local edge k lies
//! opposite local vertex k.
//!
//! Quadrature rules are conical products (Gauss-Legendre in both collapsed
//! directions, with the Jacobian factor absorbed into the weight degree),
//! averaged over the six affine symmetries of the triangle. That construction
//! gives positive weights and exactness to the declared degree without
//! transcribed point tables; the exactness is pinned against an exact
//! factorial-ratio oracle in the tests.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    LagrangeP1,
    LagrangeP2,
    LagrangeP3,
    RaviartThomas0,
    Dg0,
}

impl Family {
    pub fn dofs_per_cell(self) -> usize {
        match self {
            Family::LagrangeP1 => 3,
            Family::LagrangeP2 => 6,
            Family::LagrangeP3 => 10,
            Family::RaviartThomas0 => 3,
            Family::Dg0 => 1,
        }
    }

    pub fn is_vector_valued(self) -> bool {
        matches!(self, Family::RaviartThomas0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RefElemError {
    #[error("point ({0}, {1}) lies outside the reference triangle")]
    PointOutside(f64, f64),
    #[error("quadrature degree {0} unsupported (valid range 1..=10)")]
    BadDegree(usize),
    #[error("cell Jacobian is singular (det = {0})")]
    SingularJacobian(f64),
}

/// Scalar basis values and reference gradients at one point.
#[derive(Debug, Clone)]
pub struct ScalarBasis {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

/// RT0 basis values and divergences at one point (reference, unsigned).
#[derive(Debug, Clone)]
pub struct Rt0Basis {
    pub values: [[f64; 2]; 3],
    pub divs: [f64; 3],
}

/// Umbrella result for [`eval_basis`].
#[derive(Debug, Clone)]
pub enum BasisEval {
    Scalar(ScalarBasis),
    Vector(Rt0Basis),
}

const GEOM_TOL: f64 = 1e-12;

fn inside_reference(p: [f64; 2]) -> bool {
    p[0] >= -GEOM_TOL && p[1] >= -GEOM_TOL && p[0] + p[1] <= 1.0 + GEOM_TOL
}

/// Nodal points of the Lagrange families, in local DOF order.
pub fn lagrange_nodes(family: Family) -> Vec<[f64; 2]> {
    let v = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    match family {
        Family::LagrangeP1 => v.to_vec(),
        Family::LagrangeP2 => {
            let mut nodes = v.to_vec();
            for k in 0..3 {
                let a = v[(k + 1) % 3];
                let b = v[(k + 2) % 3];
                nodes.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            }
            nodes
        }
        Family::LagrangeP3 => {
            let mut nodes = v.to_vec();
            for k in 0..3 {
                let a = v[(k + 1) % 3];
                let b = v[(k + 2) % 3];
                for t in [1.0 / 3.0, 2.0 / 3.0] {
                    nodes.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                }
            }
            nodes.push([1.0 / 3.0, 1.0 / 3.0]);
            nodes
        }
        Family::Dg0 => vec![[1.0 / 3.0, 1.0 / 3.0]],
        Family::RaviartThomas0 => panic!("RT0 is not nodal"),
    }
}

/// Scalar family evaluation (P1/P2/P3/DG0) at a reference point.
pub fn eval_scalar(family: Family, p: [f64; 2]) -> Result<ScalarBasis, RefElemError> {
    if !inside_reference(p) {
        return Err(RefElemError::PointOutside(p[0], p[1]));
    }
    let l = [1.0 - p[0] - p[1], p[0], p[1]];
    let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    let mut values = Vec::new();
    let mut grads = Vec::new();
    let mut push = |v: f64, g: [f64; 2]| {
        values.push(v);
        grads.push(g);
    };
    match family {
        Family::LagrangeP1 => {
            for i in 0..3 {
                push(l[i], dl[i]);
            }
        }
        Family::LagrangeP2 => {
            for i in 0..3 {
                let g = 4.0 * l[i] - 1.0;
                push(l[i] * (2.0 * l[i] - 1.0), [g * dl[i][0], g * dl[i][1]]);
            }
            for k in 0..3 {
                let a = (k + 1) % 3;
                let b = (k + 2) % 3;
                push(
                    4.0 * l[a] * l[b],
                    [
                        4.0 * (l[b] * dl[a][0] + l[a] * dl[b][0]),
                        4.0 * (l[b] * dl[a][1] + l[a] * dl[b][1]),
                    ],
                );
            }
        }
        Family::LagrangeP3 => {
            for i in 0..3 {
                let li = l[i];
                let val = 0.5 * li * (3.0 * li - 1.0) * (3.0 * li - 2.0);
                let dv = 0.5 * (27.0 * li * li - 18.0 * li + 2.0);
                push(val, [dv * dl[i][0], dv * dl[i][1]]);
            }
            for k in 0..3 {
                let a = (k + 1) % 3;
                let b = (k + 2) % 3;
                // Node nearer a, then node nearer b.
                for (c, d) in [(a, b), (b, a)] {
                    let val = 4.5 * l[c] * l[d] * (3.0 * l[c] - 1.0);
                    let gc = l[d] * (6.0 * l[c] - 1.0);
                    let gd = l[c] * (3.0 * l[c] - 1.0);
                    push(
                        val,
                        [
                            4.5 * (gc * dl[c][0] + gd * dl[d][0]),
                            4.5 * (gc * dl[c][1] + gd * dl[d][1]),
                        ],
                    );
                }
            }
            let val = 27.0 * l[0] * l[1] * l[2];
            push(
                val,
                [
                    27.0 * (l[1] * l[2] * dl[0][0] + l[0] * l[2] * dl[1][0] + l[0] * l[1] * dl[2][0]),
                    27.0 * (l[1] * l[2] * dl[0][1] + l[0] * l[2] * dl[1][1] + l[0] * l[1] * dl[2][1]),
                ],
            );
        }
        Family::Dg0 => push(1.0, [0.0, 0.0]),
        Family::RaviartThomas0 => panic!("use eval_rt0 for the vector family"),
    }
    Ok(ScalarBasis { values, grads })
}

/// RT0 evaluation at a reference point. Basis k has unit outward-normal
/// moment on edge k and zero moment on the others; divergence is the
/// constant 2.
pub fn eval_rt0(p: [f64; 2]) -> Result<Rt0Basis, RefElemError> {
    if !inside_reference(p) {
        return Err(RefElemError::PointOutside(p[0], p[1]));
    }
    Ok(Rt0Basis {
        values: [
            [p[0], p[1]],
            [p[0] - 1.0, p[1]],
            [p[0], p[1] - 1.0],
        ],
        divs: [2.0, 2.0, 2.0],
    })
}

/// Umbrella evaluation keyed by family.
pub fn eval_basis(family: Family, p: [f64; 2]) -> Result<BasisEval, RefElemError> {
    Ok(match family {
        Family::RaviartThomas0 => BasisEval::Vector(eval_rt0(p)?),
        _ => BasisEval::Scalar(eval_scalar(family, p)?),
    })
}

use crate::mesh::CellGeometry;

/// Push scalar-basis reference gradients to a physical cell: J^{-T} ghat.
pub fn push_forward_grads(
    geom: &CellGeometry,
    ref_grads: &[[f64; 2]],
) -> Result<Vec<[f64; 2]>, RefElemError> {
    if geom.det.abs() < 1e-300 {
        return Err(RefElemError::SingularJacobian(geom.det));
    }
    Ok(ref_grads
        .iter()
        .map(|g| {
            [
                geom.jinv_t[0][0] * g[0] + geom.jinv_t[0][1] * g[1],
                geom.jinv_t[1][0] * g[0] + geom.jinv_t[1][1] * g[1],
            ]
        })
        .collect())
}

/// Contravariant Piola transform of RT0 values with per-cell orientation
/// signs: v = sign * (1/detJ) J vhat, div = sign * divhat / detJ.
pub fn push_forward_rt0(
    geom: &CellGeometry,
    basis: &Rt0Basis,
    signs: [i8; 3],
) -> Result<([[f64; 2]; 3], [f64; 3]), RefElemError> {
    if geom.det.abs() < 1e-300 {
        return Err(RefElemError::SingularJacobian(geom.det));
    }
    let mut vals = [[0.0; 2]; 3];
    let mut divs = [0.0; 3];
    for k in 0..3 {
        let s = signs[k] as f64 / geom.det;
        let v = basis.values[k];
        vals[k] = [
            s * (geom.jac[0][0] * v[0] + geom.jac[0][1] * v[1]),
            s * (geom.jac[1][0] * v[0] + geom.jac[1][1] * v[1]),
        ];
        divs[k] = s * basis.divs[k];
    }
    Ok((vals, divs))
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre nodes/weights on [0, 1] by Newton iteration on P_m.
fn gauss_legendre_01(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(m);
    let mut ws = Vec::with_capacity(m);
    for i in 1..=m {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (pm, pm1) = legendre_pair(m, x);
            let dp = m as f64 * (x * pm - pm1) / (x * x - 1.0);
            let dx = pm / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (pm, pm1) = legendre_pair(m, x);
        let dp = m as f64 * (x * pm - pm1) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs.push(0.5 * (x + 1.0));
        ws.push(0.5 * w);
    }
    (xs, ws)
}

/// (P_m(x), P_{m-1}(x)) by the three-term recurrence.
fn legendre_pair(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// Symmetric positive rule exact to `degree` on the reference triangle.
pub fn quadrature(degree: usize) -> Result<QuadratureRule, RefElemError> {
    if degree == 0 || degree > 10 {
        return Err(RefElemError::BadDegree(degree));
    }
    if degree == 1 {
        return Ok(QuadratureRule {
            degree,
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
        });
    }
    // Conical product: x = xi (1 - eta), y = eta; dx dy = (1 - eta) dxi deta.
    // Monomial x^a y^b pulls back to xi^a (1-eta)^(a+1) eta^b, so the eta
    // direction carries polynomial degree up to degree + 1.
    let m_xi = (degree + 2) / 2;
    let m_eta = (degree + 3) / 2;
    let (xi, wxi) = gauss_legendre_01(m_xi);
    let (eta, weta) = gauss_legendre_01(m_eta);
    let mut pts: Vec<[f64; 2]> = Vec::new();
    let mut wts: Vec<f64> = Vec::new();
    for (j, &e) in eta.iter().enumerate() {
        for (i, &x) in xi.iter().enumerate() {
            let p = [x * (1.0 - e), e];
            let w = wxi[i] * weta[j] * (1.0 - e);
            // Average over the six symmetries of the triangle.
            let l = [1.0 - p[0] - p[1], p[0], p[1]];
            for perm in [
                [0, 1, 2],
                [1, 2, 0],
                [2, 0, 1],
                [0, 2, 1],
                [2, 1, 0],
                [1, 0, 2],
            ] {
                pts.push([l[perm[1]], l[perm[2]]]);
                wts.push(w / 6.0);
            }
        }
    }
    // Merge coincident points generated by the symmetrization.
    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    'outer: for (p, w) in pts.into_iter().zip(wts) {
        for (q, wq) in points.iter().zip(weights.iter_mut()) {
            if (q[0] - p[0]).abs() < 1e-13 && (q[1] - p[1]).abs() < 1e-13 {
                *wq += w;
                continue 'outer;
            }
        }
        points.push(p);
        weights.push(w);
    }
    Ok(QuadratureRule {
        degree,
        points,
        weights,
    })
}
