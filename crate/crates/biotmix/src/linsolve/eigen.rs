//! Generalized symmetric eigenvalue problems A x = lambda M x with M
//! positive definite: the smallest eigenpairs, with optional deflation of
//! known directions (rigid modes, the constant-pressure direction).
//!
//! Small problems go through a dense congruence to a standard symmetric
//! problem. Large ones use shift-invert Lanczos at zero with full
//! reorthogonalization in the M inner product; deflation there is enforced
//! with a bordered factorization, so a matrix that is singular only along
//! the deflated directions still factors cleanly.

use super::ldl::{LdlFactor, LinSolveError};
use super::ordering::min_degree_ordering;
use crate::sparse::{axpy, CscMatrix, Triplets};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Problems at or below this size are solved densely.
pub const DENSE_EIGEN_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenSelect {
    SmallestAlgebraic,
    SmallestMagnitude,
}

/// k smallest eigenpairs of A x = lambda M x, after deflating the spans of
/// the given vectors. Returned vectors are M-normalized.
pub fn smallest_generalized_eigenpairs(
    a: &CscMatrix,
    m: &CscMatrix,
    k: usize,
    deflation: &[Vec<f64>],
    select: EigenSelect,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), LinSolveError> {
    let n = a.nrows;
    if a.ncols != n || m.nrows != n || m.ncols != n {
        return Err(LinSolveError::BadInput(
            "eigenproblem matrices must be square and conforming".into(),
        ));
    }
    if k == 0 || n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    if n <= DENSE_EIGEN_LIMIT {
        dense_path(a, m, k, deflation, select)
    } else {
        lanczos_path(a, m, k, deflation, select)
    }
}

pub(crate) fn dense_path(
    a: &CscMatrix,
    m: &CscMatrix,
    k: usize,
    deflation: &[Vec<f64>],
    select: EigenSelect,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), LinSolveError> {
    let n = a.nrows;
    let ad = a.to_dense();
    let md = m.to_dense();
    let chol = md
        .clone()
        .cholesky()
        .ok_or(LinSolveError::MassNotPositiveDefinite)?;
    let l = chol.l();
    // T = L^{-1} A L^{-T}, symmetrized against roundoff.
    let x = l
        .solve_lower_triangular(&ad)
        .ok_or_else(|| LinSolveError::EigenFailed("singular Cholesky factor".into()))?;
    let t0 = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| LinSolveError::EigenFailed("singular Cholesky factor".into()))?;
    let mut t = 0.5 * (&t0 + t0.transpose());

    // Deflation: orthonormalize zhat = L^T z, project them out, and park the
    // deflated directions at a large positive eigenvalue.
    let lt = l.transpose();
    let mut zhats: Vec<DVector<f64>> = Vec::new();
    for z in deflation {
        if z.len() != n {
            return Err(LinSolveError::BadInput("deflation vector length".into()));
        }
        let mut zh = &lt * DVector::from_column_slice(z);
        for prev in &zhats {
            let c = prev.dot(&zh);
            zh -= prev * c;
        }
        let nrm = zh.norm();
        if nrm > 1e-12 {
            zhats.push(zh / nrm);
        }
    }
    let big = 10.0 * (t.amax() + 1.0);
    for zh in &zhats {
        let tz = &t * zh;
        let ztz = zh.dot(&tz);
        // P T P for this direction: T - zh tz^T - tz zh^T + ztz zh zh^T.
        t -= &(zh * tz.transpose());
        t -= &(tz * zh.transpose());
        t += &(zh * zh.transpose()) * ztz;
    }
    for zh in &zhats {
        t += &(zh * zh.transpose()) * big;
    }

    let se = t.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    match select {
        EigenSelect::SmallestAlgebraic => {
            idx.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
        }
        EigenSelect::SmallestMagnitude => {
            idx.sort_by(|&i, &j| {
                se.eigenvalues[i]
                    .abs()
                    .partial_cmp(&se.eigenvalues[j].abs())
                    .unwrap()
            });
        }
    }
    let take = k.min(n - zhats.len());
    let mut values = Vec::with_capacity(take);
    let mut vectors = Vec::with_capacity(take);
    for &i in idx.iter().take(take) {
        values.push(se.eigenvalues[i]);
        let y = se.eigenvectors.column(i).into_owned();
        let xv = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| LinSolveError::EigenFailed("singular Cholesky factor".into()))?;
        vectors.push(xv.iter().copied().collect());
    }
    Ok((values, vectors))
}

/// Shift-invert Lanczos at zero. Converges to the eigenvalues of smallest
/// magnitude; for definite pencils these are also the smallest algebraic.
pub(crate) fn lanczos_path(
    a: &CscMatrix,
    m: &CscMatrix,
    k: usize,
    deflation: &[Vec<f64>],
    select: EigenSelect,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), LinSolveError> {
    let n = a.nrows;

    // M-normalized deflation basis.
    let mut zs: Vec<Vec<f64>> = Vec::new();
    for z in deflation {
        if z.len() != n {
            return Err(LinSolveError::BadInput("deflation vector length".into()));
        }
        let mut v = z.clone();
        for prev in &zs {
            let c = super::m_dot(m, prev, &v);
            axpy(-c, prev, &mut v);
        }
        let nrm = super::m_dot(m, &v, &v).sqrt();
        if nrm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= nrm);
            zs.push(v);
        }
    }

    // Factor A, or the bordered [[A, MZ], [ (MZ)^T, 0 ]] when deflating; the
    // border pins solutions M-orthogonal to the deflated span.
    let nb = n + zs.len();
    let factor = {
        let mut t = Triplets::new(nb, nb);
        for j in 0..n {
            let (rows, vals) = a.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                t.push(i, j, v)?;
            }
        }
        for (c, z) in zs.iter().enumerate() {
            let mz = m.matvec(z)?;
            for (i, &v) in mz.iter().enumerate() {
                if v != 0.0 {
                    t.push(i, n + c, v)?;
                    t.push(n + c, i, v)?;
                }
            }
        }
        let bordered = t.to_csc();
        let order = min_degree_ordering(&bordered);
        LdlFactor::new(&bordered, &order)?
    };
    let apply = |x: &[f64]| -> Result<Vec<f64>, LinSolveError> {
        let w = m.matvec(x)?;
        let mut rhs = vec![0.0; nb];
        rhs[..n].copy_from_slice(&w);
        let sol = factor.solve(&rhs);
        Ok(sol[..n].to_vec())
    };

    let steps = (6 * k + 60).clamp(20, n.min(400));
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for z in &zs {
        let c = super::m_dot(m, z, &v);
        axpy(-c, z, &mut v);
    }
    let nrm = super::m_dot(m, &v, &v).sqrt();
    if nrm < 1e-300 {
        return Err(LinSolveError::EigenFailed("degenerate start vector".into()));
    }
    v.iter_mut().for_each(|x| *x /= nrm);

    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    for j in 0..steps {
        let mut w = apply(&basis[j])?;
        if j > 0 {
            let beta = betas[j - 1];
            let prev = basis[j - 1].clone();
            axpy(-beta, &prev, &mut w);
        }
        let alpha = super::m_dot(m, &w, &basis[j]);
        let vj = basis[j].clone();
        axpy(-alpha, &vj, &mut w);
        alphas.push(alpha);
        // Full reorthogonalization against the basis and deflated span.
        for _ in 0..2 {
            for z in &zs {
                let c = super::m_dot(m, z, &w);
                axpy(-c, z, &mut w);
            }
            for q in &basis {
                let c = super::m_dot(m, q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let beta = super::m_dot(m, &w, &w).sqrt();
        if beta < 1e-13 || j + 1 == steps {
            break;
        }
        betas.push(beta);
        w.iter_mut().for_each(|x| *x /= beta);
        basis.push(w);
    }

    let mdim = alphas.len();
    let mut tri = DMatrix::zeros(mdim, mdim);
    for i in 0..mdim {
        tri[(i, i)] = alphas[i];
        if i + 1 < mdim {
            tri[(i, i + 1)] = betas[i];
            tri[(i + 1, i)] = betas[i];
        }
    }
    let se = tri.symmetric_eigen();
    // Operator eigenvalues theta = 1/lambda: the largest |theta| give the
    // smallest |lambda| of the pencil.
    let mut idx: Vec<usize> = (0..mdim).collect();
    idx.sort_by(|&i, &j| {
        se.eigenvalues[j]
            .abs()
            .partial_cmp(&se.eigenvalues[i].abs())
            .unwrap()
    });
    let take = k.min(mdim);
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(take);
    for &i in idx.iter().take(take) {
        let theta = se.eigenvalues[i];
        if theta.abs() < 1e-300 {
            return Err(LinSolveError::EigenFailed(
                "shift-invert operator produced a zero Ritz value".into(),
            ));
        }
        let lambda = 1.0 / theta;
        let s = se.eigenvectors.column(i);
        let mut x = vec![0.0; n];
        for (q, &si) in basis.iter().zip(s.iter()) {
            axpy(si, q, &mut x);
        }
        let nrm = super::m_dot(m, &x, &x).sqrt();
        if nrm > 1e-300 {
            x.iter_mut().for_each(|e| *e /= nrm);
        }
        pairs.push((lambda, x));
    }
    match select {
        EigenSelect::SmallestMagnitude => {
            pairs.sort_by(|a, b| a.0.abs().partial_cmp(&b.0.abs()).unwrap())
        }
        EigenSelect::SmallestAlgebraic => {
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        }
    }
    pairs.truncate(k);
    Ok(pairs.into_iter().unzip())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn laplacian_1d(n: usize) -> CscMatrix {
        let h = 1.0 / (n as f64 + 1.0);
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, 2.0 / (h * h)).unwrap();
            if i + 1 < n {
                t.push(i, i + 1, -1.0 / (h * h)).unwrap();
                t.push(i + 1, i, -1.0 / (h * h)).unwrap();
            }
        }
        t.to_csc()
    }

    fn identity(n: usize) -> CscMatrix {
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, 1.0).unwrap();
        }
        t.to_csc()
    }

    #[test]
    fn dense_matches_dirichlet_laplacian_spectrum() {
        // Eigenvalues of tridiag(-1, 2, -1)/h^2: (2 - 2 cos(k pi h)) / h^2.
        let n = 10;
        let h = 1.0 / (n as f64 + 1.0);
        let a = laplacian_1d(n);
        let (vals, vecs) =
            smallest_generalized_eigenpairs(&a, &identity(n), 3, &[], EigenSelect::SmallestAlgebraic)
                .unwrap();
        for (k, &v) in vals.iter().enumerate() {
            let exact = (2.0 - 2.0 * ((k as f64 + 1.0) * PI * h).cos()) / (h * h);
            assert!(
                (v - exact).abs() < 1e-9 * exact,
                "eigenvalue {k}: {v} vs {exact}"
            );
        }
        // Residual check A x = lambda x.
        for (v, x) in vals.iter().zip(&vecs) {
            let ax = a.matvec(x).unwrap();
            let res: f64 = ax
                .iter()
                .zip(x)
                .map(|(a, x)| (a - v * x) * (a - v * x))
                .sum::<f64>()
                .sqrt();
            assert!(res < 1e-8 * v.abs());
        }
    }

    #[test]
    fn generalized_mass_scaling() {
        // A x = lambda (2 I) x halves the eigenvalues.
        let n = 10;
        let a = laplacian_1d(n);
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, 2.0).unwrap();
        }
        let m = t.to_csc();
        let (v1, _) =
            smallest_generalized_eigenpairs(&a, &identity(n), 2, &[], EigenSelect::SmallestAlgebraic)
                .unwrap();
        let (v2, _) =
            smallest_generalized_eigenpairs(&a, &m, 2, &[], EigenSelect::SmallestAlgebraic).unwrap();
        for (a, b) in v1.iter().zip(&v2) {
            assert!((a - 2.0 * b).abs() < 1e-9 * a.abs());
        }
    }

    #[test]
    fn deflation_skips_known_direction() {
        let n = 12;
        let a = laplacian_1d(n);
        let id = identity(n);
        let (vals, vecs) =
            smallest_generalized_eigenpairs(&a, &id, 2, &[], EigenSelect::SmallestAlgebraic).unwrap();
        let (vals_defl, _) = smallest_generalized_eigenpairs(
            &a,
            &id,
            1,
            &[vecs[0].clone()],
            EigenSelect::SmallestAlgebraic,
        )
        .unwrap();
        assert!((vals_defl[0] - vals[1]).abs() < 1e-8 * vals[1]);
    }

    #[test]
    fn rejects_indefinite_mass() {
        let n = 4;
        let a = laplacian_1d(n);
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, if i == 2 { -1.0 } else { 1.0 }).unwrap();
        }
        assert!(matches!(
            smallest_generalized_eigenpairs(&a, &t.to_csc(), 1, &[], EigenSelect::SmallestAlgebraic),
            Err(LinSolveError::MassNotPositiveDefinite)
        ));
    }

    fn laplacian_2d_dirichlet(nx: usize) -> CscMatrix {
        let n = nx * nx;
        let idx = |i: usize, j: usize| i * nx + j;
        let mut t = Triplets::new(n, n);
        for i in 0..nx {
            for j in 0..nx {
                let c = idx(i, j);
                t.push(c, c, 4.0).unwrap();
                if i + 1 < nx {
                    t.push(c, idx(i + 1, j), -1.0).unwrap();
                    t.push(idx(i + 1, j), c, -1.0).unwrap();
                }
                if j + 1 < nx {
                    t.push(c, idx(i, j + 1), -1.0).unwrap();
                    t.push(idx(i, j + 1), c, -1.0).unwrap();
                }
            }
        }
        t.to_csc()
    }

    #[test]
    fn lanczos_matches_two_dimensional_spectrum() {
        // Discrete eigenvalues: 4 sin^2(p pi / (2(nx+1))) + 4 sin^2(q pi / (2(nx+1))).
        let nx = 40;
        let a = laplacian_2d_dirichlet(nx);
        let m = identity(nx * nx);
        let (vals, vecs) = lanczos_path(&a, &m, 4, &[], EigenSelect::SmallestAlgebraic).unwrap();
        let s = |p: usize| {
            let t = (p as f64) * PI / (2.0 * (nx as f64 + 1.0));
            4.0 * t.sin().powi(2)
        };
        let mut exact = vec![s(1) + s(1), s(1) + s(2), s(2) + s(1), s(2) + s(2)];
        exact.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, (&v, e)) in vals.iter().zip(&exact).enumerate() {
            assert!((v - e).abs() < 1e-8 * e, "eigenvalue {k}: {v} vs {e}");
        }
        for (v, x) in vals.iter().zip(&vecs) {
            let ax = a.matvec(x).unwrap();
            let res: f64 = ax
                .iter()
                .zip(x)
                .map(|(a, x)| (a - v * x) * (a - v * x))
                .sum::<f64>()
                .sqrt();
            assert!(res < 1e-7);
        }
    }

    #[test]
    fn lanczos_deflates_singular_direction() {
        // Neumann chain graph Laplacian: singular with constant kernel.
        let n = 80;
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            let mut diag = 0.0;
            if i > 0 {
                t.push(i, i - 1, -1.0).unwrap();
                diag += 1.0;
            }
            if i + 1 < n {
                t.push(i, i + 1, -1.0).unwrap();
                diag += 1.0;
            }
            t.push(i, i, diag).unwrap();
        }
        let a = t.to_csc();
        let m = identity(n);
        let ones = vec![1.0; n];
        let (vals, _) = lanczos_path(&a, &m, 1, &[ones.clone()], EigenSelect::SmallestAlgebraic)
            .unwrap();
        let (dvals, _) =
            dense_path(&a, &m, 1, &[ones], EigenSelect::SmallestAlgebraic).unwrap();
        // Smallest nonzero eigenvalue of the chain: 2 - 2 cos(pi / n).
        let exact = 2.0 - 2.0 * (PI / n as f64).cos();
        assert!((vals[0] - exact).abs() < 1e-8);
        assert!((dvals[0] - exact).abs() < 1e-8);
    }
}
