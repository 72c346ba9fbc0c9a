//! Stability diagnostics: divergence containment of the flux space in the
//! pressure space, the displacement-pressure inf-sup constant, the
//! flux-pressure stability constants under several weighted norm choices,
//! and the inf-sup constant of the coupled one-step operator.
//!
//! Nothing here feeds the solver; these quantities measure why it behaves
//! the way it does. Every eigenproblem is small by design and goes through
//! the dense path of the generalized eigensolver, so the mesh levels are
//! capped instead of scaling up.

use crate::assemble::{
    assemble_biot_step, assemble_form, assemble_scalar_gram, assemble_vector_gram, AssembleError,
    FormKind,
};
use crate::linsolve::{factor_solve, smallest_generalized_eigenpairs, EigenSelect, LinSolveError};
use crate::mesh::{build_unit_square, Mesh, MeshError};
use crate::pairing::ElementPairing;
use crate::problem::Params;
use crate::refelem::{quadrature, Family, RefElemError};
use crate::space::{tabulate, CellBasis, Space, SpaceError};
use crate::sparse::{CscMatrix, SparseError, Triplets};
use nalgebra::DMatrix;
use thiserror::Error;

/// Pencil eigenvalues below this fraction of the largest one are treated
/// as structural zeros (deflated constants, rank deficiency of the
/// coupling) when looking for the smallest meaningful eigenvalue.
const ZERO_EIG_CUTOFF: f64 = 1e-10;

/// Largest subdivision count the dense eigenproblems accept.
const MAX_EIGEN_DIV: usize = 16;
/// The coupled-operator pencil is roughly three times wider, so it stops
/// one level earlier.
const MAX_COMPOSITE_DIV: usize = 8;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("permeability must be positive, got {0}")]
    NonpositivePermeability(f64),
    #[error("diagnostic eigenproblems are limited to n_div <= {max}, got {got}")]
    MeshTooFine { got: usize, max: usize },
    #[error("containment projection target must be piecewise constant, got {0:?}")]
    ProjectionTarget(Family),
    #[error("divergence containment needs a vector-valued space")]
    ScalarFlux,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    RefElem(#[from] RefElemError),
    #[error(transparent)]
    Assemble(#[from] AssembleError),
    #[error(transparent)]
    LinSolve(#[from] LinSolveError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Worst relative L2 distance between the divergence of a basis function
/// of `w_space` and its projection onto the piecewise constants, over all
/// unconstrained basis functions. Zero certifies div W ⊆ Q.
pub fn containment_residual(
    mesh: &Mesh,
    w_space: &Space,
    q_space: &Space,
) -> Result<f64, DiagnosticsError> {
    if q_space.family != Family::Dg0 {
        return Err(DiagnosticsError::ProjectionTarget(q_space.family));
    }
    if !w_space.is_vector_valued() {
        return Err(DiagnosticsError::ScalarFlux);
    }
    let rule = quadrature(4)?;
    let mut num = vec![0.0; w_space.ndofs];
    let mut den = vec![0.0; w_space.ndofs];
    for cell in 0..mesh.cells.len() {
        let basis = tabulate(w_space, mesh, cell, &rule.points)?;
        let divs = match &basis {
            CellBasis::Vector { divs, .. } => divs,
            CellBasis::Scalar { .. } => unreachable!("vector space tabulates as vector"),
        };
        let jac = mesh.cell_geometry(cell).det.abs();
        let area = mesh.cell_area(cell);
        for local in 0..w_space.local_dofs() {
            let mut i1 = 0.0;
            let mut i2 = 0.0;
            for (q, &wq) in rule.weights.iter().enumerate() {
                let d = divs[q][local];
                i1 += wq * jac * d;
                i2 += wq * jac * d * d;
            }
            // The cellwise projection is the cell mean; accumulating the
            // pointwise deviation from it (rather than i2 - i1^2/area)
            // keeps an exactly-constant divergence at machine zero instead
            // of sqrt(eps).
            let mean = i1 / area;
            let mut dev = 0.0;
            for (q, &wq) in rule.weights.iter().enumerate() {
                let r = divs[q][local] - mean;
                dev += wq * jac * r * r;
            }
            let g = w_space.cell_dofs[cell][local];
            num[g] += dev;
            den[g] += i2;
        }
    }
    let mut constrained = vec![false; w_space.ndofs];
    for &c in &w_space.constrained {
        constrained[c] = true;
    }
    let mut worst: f64 = 0.0;
    for g in 0..w_space.ndofs {
        if constrained[g] {
            continue;
        }
        worst = worst.max(num[g].sqrt() / den[g].sqrt().max(1e-14));
    }
    Ok(worst)
}

/// Inf-sup constant of the divergence coupling between a vector space with
/// its essential constraints and the piecewise-constant pressures, with
/// the vector side measured in the full H1 norm: the square root of the
/// smallest meaningful eigenvalue of the pressure Schur complement.
pub fn stokes_infsup(
    mesh: &Mesh,
    u_space: &Space,
    q_space: &Space,
) -> Result<f64, DiagnosticsError> {
    check_level(mesh, MAX_EIGEN_DIV)?;
    let params = Params::default();
    let a = assemble_vector_gram(mesh, u_space, 1.0, 1.0, 0.0)?;
    let b = assemble_form(FormKind::BUq, mesh, u_space, q_space, &params)?;
    let mq = assemble_scalar_gram(mesh, q_space, 1.0)?;
    let free = u_space.free_dofs();
    let all_q: Vec<usize> = (0..q_space.ndofs).collect();
    let a_ff = a.restrict(&free, &free);
    let b_f = b.restrict(&all_q, &free);
    let vals = schur_spectrum(&a_ff, &b_f, &mq)?;
    Ok(smallest_meaningful(&vals).max(0.0).sqrt())
}

/// Weighted norm choices for the flux-pressure stability constants. The
/// permeability is pulled into the norms so that the constants either stay
/// bounded or visibly degenerate as it vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormPairing {
    /// H(div) flux against plain L2 pressure; no weighting.
    Standard,
    /// Flux in the intersection norm (1/kappa + 1) L2 + div-div, pressure
    /// in plain L2. The matching dual-sum pressure norm has no practical
    /// discrete realization for piecewise constants, so the plain L2 norm
    /// stands in for it.
    Intersection,
    /// 1/kappa-scaled H(div) flux against kappa-scaled L2 pressure.
    ScaledHdiv,
    /// 1/kappa-scaled L2 flux against kappa-scaled L2 pressure: the
    /// divergence-free cousin of the gradient-based dual formulation,
    /// which itself needs continuous pressures.
    ScaledL2,
}

impl NormPairing {
    pub const ALL: [NormPairing; 4] = [
        NormPairing::Standard,
        NormPairing::Intersection,
        NormPairing::ScaledHdiv,
        NormPairing::ScaledL2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            NormPairing::Standard => "standard",
            NormPairing::Intersection => "intersection",
            NormPairing::ScaledHdiv => "scaled-hdiv",
            NormPairing::ScaledL2 => "scaled-l2",
        }
    }

    /// (flux L2 weight, flux div-div weight, pressure L2 weight).
    fn weights(self, kappa: f64) -> (f64, f64, f64) {
        match self {
            NormPairing::Standard => (1.0, 1.0, 1.0),
            NormPairing::Intersection => (1.0 / kappa + 1.0, 1.0, 1.0),
            NormPairing::ScaledHdiv => (1.0 / kappa, 1.0 / kappa, kappa),
            NormPairing::ScaledL2 => (1.0 / kappa, 0.0, kappa),
        }
    }
}

/// Stability constants of the flux-pressure coupling in one norm pairing.
#[derive(Debug, Clone, Copy)]
pub struct DarcyConstants {
    /// Inf-sup constant of the divergence coupling.
    pub beta: f64,
    /// Coercivity of the weighted mass form on the kernel of the coupling;
    /// infinite when the kernel is trivial.
    pub alpha_kernel: f64,
    /// Continuity constant of the divergence coupling.
    pub c_b: f64,
    /// Continuity constant of the weighted mass form.
    pub c_c: f64,
}

/// Brezzi constants of the flux-pressure pair under the chosen norms.
pub fn darcy_brezzi(
    mesh: &Mesh,
    w_space: &Space,
    q_space: &Space,
    pairing: NormPairing,
    kappa: f64,
) -> Result<DarcyConstants, DiagnosticsError> {
    if !(kappa > 0.0) {
        return Err(DiagnosticsError::NonpositivePermeability(kappa));
    }
    check_level(mesh, MAX_EIGEN_DIV)?;
    let (w_l2, w_div, w_q) = pairing.weights(kappa);
    let gw = assemble_vector_gram(mesh, w_space, w_l2, 0.0, w_div)?;
    let gq = assemble_scalar_gram(mesh, q_space, w_q)?;
    let params = Params {
        kappa,
        ..Params::default()
    };
    let c = assemble_form(FormKind::C, mesh, w_space, w_space, &params)?;
    let b = assemble_form(FormKind::BWq, mesh, w_space, q_space, &params)?;
    let free = w_space.free_dofs();
    let all_q: Vec<usize> = (0..q_space.ndofs).collect();
    let gw_ff = gw.restrict(&free, &free);
    let c_ff = c.restrict(&free, &free);
    let b_f = b.restrict(&all_q, &free);

    let vals = schur_spectrum(&gw_ff, &b_f, &gq)?;
    let beta = smallest_meaningful(&vals).max(0.0).sqrt();
    let c_b = vals.last().copied().unwrap_or(0.0).max(0.0).sqrt();

    // Kernel of the coupling from the eigendecomposition of B^T B; the
    // near-null eigenvectors span it to working precision.
    let bd = b_f.to_dense();
    let btb = bd.transpose() * &bd;
    let se = btb.symmetric_eigen();
    let lmax = se
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let cut = lmax.max(1e-300) * ZERO_EIG_CUTOFF;
    let kernel_cols: Vec<usize> = (0..se.eigenvalues.len())
        .filter(|&i| se.eigenvalues[i].abs() <= cut)
        .collect();
    let alpha_kernel = if kernel_cols.is_empty() {
        // Coercivity over an empty subspace holds vacuously.
        f64::INFINITY
    } else {
        let n = free.len();
        let mut z = DMatrix::zeros(n, kernel_cols.len());
        for (jn, &jo) in kernel_cols.iter().enumerate() {
            z.set_column(jn, &se.eigenvectors.column(jo));
        }
        let cz = z.transpose() * c_ff.to_dense() * &z;
        let gz = z.transpose() * gw_ff.to_dense() * &z;
        let (v, _) = smallest_generalized_eigenpairs(
            &dense_to_csc(&cz),
            &dense_to_csc(&gz),
            1,
            &[],
            EigenSelect::SmallestAlgebraic,
        )?;
        v.first().copied().unwrap_or(f64::INFINITY)
    };

    // Largest eigenvalue of (c-form, flux Gram) through negation, since
    // the eigensolver only chases the smallest end.
    let mut neg = c_ff.to_triplets();
    neg.scale(-1.0);
    let (v, _) = smallest_generalized_eigenpairs(
        &neg.to_csc(),
        &gw_ff,
        1,
        &[],
        EigenSelect::SmallestAlgebraic,
    )?;
    let c_c = -v.first().copied().unwrap_or(0.0);

    Ok(DarcyConstants {
        beta,
        alpha_kernel,
        c_b,
        c_c,
    })
}

/// Inf-sup constant of the coupled one-step operator in the norm
/// ‖u‖₁² + (τ/κ)‖w‖² + τ²‖div w‖² + ‖q‖², over the essential-constraint
/// complement with the constant pressure mode removed: the smallest
/// Gram-weighted singular value of the block matrix without its mean
/// multiplier.
pub fn composite_infsup(
    pairing: &dyn ElementPairing,
    mesh: &Mesh,
    params: &Params,
) -> Result<f64, DiagnosticsError> {
    check_level(mesh, MAX_COMPOSITE_DIV)?;
    let u = pairing.displacement_space(mesh)?;
    let w = pairing.flux_space(mesh)?;
    let q = pairing.pressure_space(mesh)?;
    let system = assemble_biot_step(mesh, &u, &w, &q, params, false)?;

    let gu = assemble_vector_gram(mesh, &u, 1.0, 1.0, 0.0)?;
    let gw = assemble_vector_gram(
        mesh,
        &w,
        params.tau / params.kappa,
        0.0,
        params.tau * params.tau,
    )?;
    let gq = assemble_scalar_gram(mesh, &q, 1.0)?;

    let uf = u.free_dofs();
    let wf = w.free_dofs();
    let mut free: Vec<usize> = uf.clone();
    free.extend(wf.iter().map(|&i| system.offset_w() + i));
    free.extend((0..q.ndofs).map(|i| system.offset_q() + i));
    let k_ff = system.matrix.restrict(&free, &free);

    let n = free.len();
    let mut g_t = Triplets::new(n, n);
    g_t.push_block(0, 0, &gu.restrict(&uf, &uf).to_triplets())?;
    g_t.push_block(uf.len(), uf.len(), &gw.restrict(&wf, &wf).to_triplets())?;
    let oq = uf.len() + wf.len();
    g_t.push_block(oq, oq, &gq.to_triplets())?;
    let g = g_t.to_csc();

    // K^T G^{-1} K = Y^T Y with Y = L^{-1} K and G = L L^T.
    let gd = g.to_dense();
    let chol = gd
        .cholesky()
        .ok_or(LinSolveError::MassNotPositiveDefinite)?;
    let kd = k_ff.to_dense();
    let y = chol
        .l()
        .solve_lower_triangular(&kd)
        .ok_or_else(|| LinSolveError::EigenFailed("singular Cholesky factor".into()))?;
    let kgk = y.transpose() * &y;

    let mut constant_pressure = vec![0.0; n];
    for e in constant_pressure.iter_mut().skip(oq) {
        *e = 1.0;
    }
    let (vals, _) = smallest_generalized_eigenpairs(
        &dense_to_csc(&kgk),
        &g,
        1,
        &[constant_pressure],
        EigenSelect::SmallestAlgebraic,
    )?;
    Ok(vals.first().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// Everything the stability toolkit can say about one pairing at one mesh
/// level and one coefficient point.
#[derive(Debug, Clone)]
pub struct DiagnosticReport {
    pub pairing: String,
    pub n_div: usize,
    pub kappa: f64,
    pub c0: f64,
    pub tau: f64,
    /// Containment of the flux divergences in the pressure space.
    pub containment: f64,
    /// Displacement-pressure inf-sup constant.
    pub beta_stokes: f64,
    /// Flux-pressure constants per norm pairing, in `NormPairing::ALL` order.
    pub darcy: Vec<(NormPairing, DarcyConstants)>,
    /// Coupled-operator inf-sup; only on meshes coarse enough for the
    /// wide pencil.
    pub gamma_composite: Option<f64>,
}

/// Run the whole stability suite for one configuration.
pub fn run_diagnostics(
    pairing: &dyn ElementPairing,
    n_div: usize,
    params: &Params,
) -> Result<DiagnosticReport, DiagnosticsError> {
    if !(params.kappa > 0.0) {
        return Err(DiagnosticsError::NonpositivePermeability(params.kappa));
    }
    let mesh = build_unit_square(n_div)?;
    check_level(&mesh, MAX_EIGEN_DIV)?;
    let u = pairing.displacement_space(&mesh)?;
    let w = pairing.flux_space(&mesh)?;
    let q = pairing.pressure_space(&mesh)?;

    let containment = containment_residual(&mesh, &w, &q)?;
    let beta_stokes = stokes_infsup(&mesh, &u, &q)?;
    let mut darcy = Vec::with_capacity(NormPairing::ALL.len());
    for np in NormPairing::ALL {
        darcy.push((np, darcy_brezzi(&mesh, &w, &q, np, params.kappa)?));
    }
    let gamma_composite = if n_div <= MAX_COMPOSITE_DIV {
        Some(composite_infsup(pairing, &mesh, params)?)
    } else {
        None
    };
    Ok(DiagnosticReport {
        pairing: pairing.name().to_string(),
        n_div,
        kappa: params.kappa,
        c0: params.c0,
        tau: params.tau,
        containment,
        beta_stokes,
        darcy,
        gamma_composite,
    })
}

fn check_level(mesh: &Mesh, max: usize) -> Result<(), DiagnosticsError> {
    if mesh.n_div > max {
        return Err(DiagnosticsError::MeshTooFine {
            got: mesh.n_div,
            max,
        });
    }
    Ok(())
}

/// Full spectrum of B G⁻¹ Bᵀ against the pressure Gram, ascending, with
/// the constant-pressure direction deflated whenever there is room for it.
/// Structural zeros from rank deficiency of B are kept; callers skip them.
fn schur_spectrum(
    gram: &CscMatrix,
    b: &CscMatrix,
    gram_q: &CscMatrix,
) -> Result<Vec<f64>, DiagnosticsError> {
    let nq = b.nrows;
    let nf = b.ncols;
    let bt = b.transpose();
    let mut rhs = Vec::with_capacity(nq);
    for i in 0..nq {
        let (rows, vals) = bt.col(i);
        let mut col = vec![0.0; nf];
        for (&r, &v) in rows.iter().zip(vals) {
            col[r] = v;
        }
        rhs.push(col);
    }
    let (xs, _) = factor_solve(gram, &rhs)?;
    let mut s = DMatrix::zeros(nq, nq);
    for (j, x) in xs.iter().enumerate() {
        let col = b.matvec(x)?;
        for i in 0..nq {
            s[(i, j)] = col[i];
        }
    }
    let s = 0.5 * (&s + s.transpose());
    let deflation = if nq > 1 {
        vec![vec![1.0; nq]]
    } else {
        Vec::new()
    };
    let (vals, _) = smallest_generalized_eigenpairs(
        &dense_to_csc(&s),
        gram_q,
        nq,
        &deflation,
        EigenSelect::SmallestAlgebraic,
    )?;
    Ok(vals)
}

/// Smallest entry of an ascending spectrum above the structural-zero
/// cutoff; zero when everything is structurally zero.
fn smallest_meaningful(vals: &[f64]) -> f64 {
    let lmax = vals.last().copied().unwrap_or(0.0).abs();
    let cut = lmax.max(1e-300) * ZERO_EIG_CUTOFF;
    vals.iter().copied().find(|&v| v > cut).unwrap_or(0.0)
}

fn dense_to_csc(m: &DMatrix<f64>) -> CscMatrix {
    let mut t = Triplets::new(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                t.push(i, j, v).expect("dense entry in bounds");
            }
        }
    }
    t.to_csc()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::single_triangle;
    use crate::pairing::lookup;
    use crate::space::{build_space, BoundaryCondition};

    fn dg0(mesh: &Mesh) -> Space {
        build_space(mesh, Family::Dg0, false, BoundaryCondition::None).unwrap()
    }

    #[test]
    fn divergence_containment_splits_the_three_vector_spaces() {
        // Edge-flux and linear divergences are cellwise constant, so both
        // flux candidates land inside the constants; quadratic
        // displacements have linear divergences and land well outside.
        let mesh = build_unit_square(4).unwrap();
        let q = dg0(&mesh);
        let rt0 = build_space(&mesh, Family::RaviartThomas0, false, BoundaryCondition::NormalFlux)
            .unwrap();
        let p1v =
            build_space(&mesh, Family::LagrangeP1, true, BoundaryCondition::NormalFlux).unwrap();
        let p2v = build_space(&mesh, Family::LagrangeP2, true, BoundaryCondition::Clamped).unwrap();
        assert!(containment_residual(&mesh, &rt0, &q).unwrap() < 1e-12);
        assert!(containment_residual(&mesh, &p1v, &q).unwrap() < 1e-12);
        let loose = containment_residual(&mesh, &p2v, &q).unwrap();
        assert!(loose > 0.1, "quadratic control {loose}");
    }

    #[test]
    fn displacement_pressure_infsup_trends() {
        // The quadratic-constant pair holds its constant under refinement;
        // the linear-constant pair decays, which is exactly the classical
        // instability this check exists to expose.
        let mut beta_p2 = Vec::new();
        let mut beta_p1 = Vec::new();
        for n in [4, 8] {
            let mesh = build_unit_square(n).unwrap();
            let q = dg0(&mesh);
            let p2v =
                build_space(&mesh, Family::LagrangeP2, true, BoundaryCondition::Clamped).unwrap();
            let p1v =
                build_space(&mesh, Family::LagrangeP1, true, BoundaryCondition::Clamped).unwrap();
            beta_p2.push(stokes_infsup(&mesh, &p2v, &q).unwrap());
            beta_p1.push(stokes_infsup(&mesh, &p1v, &q).unwrap());
        }
        assert!(beta_p2[1] / beta_p2[0] > 0.8, "{beta_p2:?}");
        assert!(beta_p1[1] < 0.8 * beta_p1[0], "{beta_p1:?}");
    }

    #[test]
    fn single_cell_infsup_is_finite_and_positive() {
        let mesh = single_triangle();
        let q = dg0(&mesh);
        let p2v = build_space(&mesh, Family::LagrangeP2, true, BoundaryCondition::None).unwrap();
        let beta = stokes_infsup(&mesh, &p2v, &q).unwrap();
        assert!(beta.is_finite() && beta > 0.0, "{beta}");
    }

    #[test]
    fn weighted_norms_decide_permeability_sensitivity() {
        // Unweighted norms let the mass-form continuity blow up as the
        // permeability drops; the fully scaled pairing keeps the inf-sup
        // constant put.
        let mesh = build_unit_square(4).unwrap();
        let q = dg0(&mesh);
        let rt0 = build_space(&mesh, Family::RaviartThomas0, false, BoundaryCondition::NormalFlux)
            .unwrap();
        let std1 = darcy_brezzi(&mesh, &rt0, &q, NormPairing::Standard, 1.0).unwrap();
        let std4 = darcy_brezzi(&mesh, &rt0, &q, NormPairing::Standard, 1e-4).unwrap();
        assert!(std4.c_c / std1.c_c > 1e3, "{} {}", std1.c_c, std4.c_c);
        let b1 = darcy_brezzi(&mesh, &rt0, &q, NormPairing::ScaledHdiv, 1.0).unwrap();
        let b4 = darcy_brezzi(&mesh, &rt0, &q, NormPairing::ScaledHdiv, 1e-4).unwrap();
        let b8 = darcy_brezzi(&mesh, &rt0, &q, NormPairing::ScaledHdiv, 1e-8).unwrap();
        let spread = (b1.beta - b4.beta).abs().max((b1.beta - b8.beta).abs()) / b1.beta;
        assert!(spread < 0.01, "beta spread {spread}");
        for c in [&std1, &std4, &b1, &b4, &b8] {
            assert!(c.beta >= 0.0 && c.c_b >= 0.0 && c.c_c >= 0.0 && c.alpha_kernel >= 0.0);
        }
    }

    #[test]
    fn continuous_linear_flux_is_not_a_stable_darcy_pair() {
        let beta_at = |n: usize| {
            let mesh = build_unit_square(n).unwrap();
            let p1v = build_space(&mesh, Family::LagrangeP1, true, BoundaryCondition::NormalFlux)
                .unwrap();
            darcy_brezzi(&mesh, &p1v, &dg0(&mesh), NormPairing::Standard, 1.0)
                .unwrap()
                .beta
        };
        let (b4, b8, b16) = (beta_at(4), beta_at(8), beta_at(16));
        // Negative control: this pair has no mesh-uniform inf-sup constant,
        // so beta decays steadily under refinement. One refinement loses at
        // least a fifth, two refinements more than half.
        assert!(b8 < 0.8 * b4, "level 4 {b4}, level 8 {b8}");
        assert!(b16 < 0.8 * b8, "level 8 {b8}, level 16 {b16}");
        assert!(b16 < 0.5 * b4, "level 4 {b4}, level 16 {b16}");
    }

    #[test]
    fn darcy_constants_ignore_where_the_mesh_sits() {
        let mesh = build_unit_square(4).unwrap();
        let mut shifted = mesh.clone();
        for v in &mut shifted.vertices {
            v[0] += 0.37;
            v[1] -= 1.25;
        }
        let q = dg0(&mesh);
        let rt0 = build_space(&mesh, Family::RaviartThomas0, false, BoundaryCondition::NormalFlux)
            .unwrap();
        let qs = dg0(&shifted);
        let rt0s =
            build_space(&shifted, Family::RaviartThomas0, false, BoundaryCondition::NormalFlux)
                .unwrap();
        for np in [NormPairing::Standard, NormPairing::ScaledHdiv] {
            let a = darcy_brezzi(&mesh, &rt0, &q, np, 1e-4).unwrap();
            let b = darcy_brezzi(&shifted, &rt0s, &qs, np, 1e-4).unwrap();
            let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(1e-300);
            assert!(rel(a.beta, b.beta) < 1e-8, "{} {}", a.beta, b.beta);
            assert!(rel(a.c_c, b.c_c) < 1e-8, "{} {}", a.c_c, b.c_c);
            assert!(rel(a.c_b, b.c_b) < 1e-8, "{} {}", a.c_b, b.c_b);
        }
    }

    #[test]
    fn rejects_nonpositive_permeability() {
        let mesh = build_unit_square(4).unwrap();
        let q = dg0(&mesh);
        let rt0 = build_space(&mesh, Family::RaviartThomas0, false, BoundaryCondition::NormalFlux)
            .unwrap();
        let err = darcy_brezzi(&mesh, &rt0, &q, NormPairing::Standard, 0.0);
        assert!(matches!(
            err,
            Err(DiagnosticsError::NonpositivePermeability(_))
        ));
    }

    #[test]
    fn coupled_operator_infsup_is_coefficient_robust() {
        let mesh = build_unit_square(4).unwrap();
        let gamma = |name: &str, kappa: f64, c0: f64| {
            let params = Params {
                kappa,
                c0,
                ..Params::default()
            };
            composite_infsup(lookup(name).unwrap(), &mesh, &params).unwrap()
        };
        // The coupled operator stays uniformly invertible across the whole
        // coefficient range: every gamma is bounded well away from zero even
        // at vanishing permeability and storage. The constant itself is not
        // flat in kappa (the flux term's contribution to pressure control
        // switches off as kappa -> 0, handing control to the displacement
        // route), so only a floor is pinned here.
        for name in ["p2-rt0-dg0", "p2-p1-dg0"] {
            for kappa in [1.0, 1e-4, 1e-8] {
                for c0 in [0.0, 1.0] {
                    let g = gamma(name, kappa, c0);
                    assert!(g > 0.1, "{name} kappa {kappa} c0 {c0}: gamma {g}");
                }
            }
        }
        // At fixed permeability the constant is insensitive to the storage
        // coefficient sweep, and for the minimally stable pairing it is also
        // within a factor two across the permeability sweep.
        for name in ["p2-rt0-dg0", "p2-p1-dg0"] {
            let sweep: Vec<f64> = [0.0, 1e-6, 1.0]
                .iter()
                .map(|&c0| gamma(name, 1.0, c0))
                .collect();
            let (lo, hi) = sweep
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(l, h), &g| (l.min(g), h.max(g)));
            assert!(hi / lo <= 2.0, "{name}: storage sweep {sweep:?}");
        }
        let kappa_sweep: Vec<f64> = [1.0, 1e-4, 1e-8]
            .iter()
            .map(|&k| gamma("p2-p1-dg0", k, 0.0))
            .collect();
        let (lo, hi) = kappa_sweep
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), &g| (l.min(g), h.max(g)));
        assert!(hi / lo <= 2.0, "permeability sweep {kappa_sweep:?}");
    }

    #[test]
    fn full_report_is_populated_and_nonnegative() {
        let pairing = lookup("p2-rt0-dg0").unwrap();
        let report = run_diagnostics(pairing, 4, &Params::default()).unwrap();
        assert_eq!(report.darcy.len(), NormPairing::ALL.len());
        assert!(report.containment < 1e-12);
        assert!(report.beta_stokes > 0.0);
        assert!(report.gamma_composite.unwrap() > 0.0);
        for (_, c) in &report.darcy {
            assert!(c.beta >= 0.0 && c.alpha_kernel >= 0.0 && c.c_b >= 0.0 && c.c_c >= 0.0);
        }
        let fine = run_diagnostics(pairing, 16, &Params::default()).unwrap();
        assert!(fine.gamma_composite.is_none());
        let err = run_diagnostics(pairing, 32, &Params::default());
        assert!(matches!(err, Err(DiagnosticsError::MeshTooFine { .. })));
    }
}
