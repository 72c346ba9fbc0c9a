//! Direct solution of the symmetric indefinite systems and the generalized
//! eigenvalue problems behind the stability diagnostics.

mod eigen;
mod ldl;
mod ordering;

pub use eigen::{smallest_generalized_eigenpairs, EigenSelect, DENSE_EIGEN_LIMIT};
pub use ldl::{LdlFactor, LinSolveError};
pub use ordering::min_degree_ordering;

use crate::sparse::{axpy, dot, norm2, CscMatrix};

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    /// (positive, negative, zero) pivot counts of the factored matrix.
    pub inertia: (usize, usize, usize),
    /// Largest normwise backward error over the solved right-hand sides.
    pub relres: f64,
    /// Largest refinement iteration count over the right-hand sides.
    pub refinement_steps: usize,
    pub factor_nnz: usize,
}

/// Refinement target; iteration stops early once reached.
const REFINE_TARGET: f64 = 1e-12;
/// Hard acceptance bound; a worse backward error is a solver failure.
const REFINE_REQUIRED: f64 = 1e-9;
const REFINE_MAX_STEPS: usize = 20;

/// Factor a symmetric matrix with a fill-reducing ordering.
pub fn factor(matrix: &CscMatrix) -> Result<LdlFactor, LinSolveError> {
    let order = min_degree_ordering(matrix);
    LdlFactor::new(matrix, &order)
}

/// Factor once, solve all right-hand sides with iterative refinement against
/// the original matrix, and report inertia and the worst backward error.
pub fn factor_solve(
    matrix: &CscMatrix,
    rhs_columns: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, SolveStats), LinSolveError> {
    if matrix.nrows != matrix.ncols {
        return Err(LinSolveError::BadInput(format!(
            "{} x {}",
            matrix.nrows, matrix.ncols
        )));
    }
    let amax = matrix
        .vals
        .iter()
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1e-300);
    if matrix.symmetry_gap() > 1e-10 * amax {
        return Err(LinSolveError::BadInput(
            "matrix is not numerically symmetric".into(),
        ));
    }
    let f = factor(matrix)?;
    // Max column 1-norm, for the normwise backward error.
    let mut anorm = 0.0f64;
    for j in 0..matrix.ncols {
        let (_, vals) = matrix.col(j);
        anorm = anorm.max(vals.iter().map(|v| v.abs()).sum());
    }
    anorm = anorm.max(1e-300);

    let mut solutions = Vec::with_capacity(rhs_columns.len());
    let mut worst = 0.0f64;
    let mut max_steps = 0usize;
    for b in rhs_columns {
        if b.len() != matrix.nrows {
            return Err(LinSolveError::BadInput(
                "right-hand side length mismatch".into(),
            ));
        }
        let bnorm = norm2(b);
        let mut x = f.solve(b);
        let backward = |x: &[f64]| -> Result<(Vec<f64>, f64), LinSolveError> {
            let ax = matrix.matvec(x)?;
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let eta = norm2(&r) / (anorm * norm2(x) + bnorm).max(1e-300);
            Ok((r, eta))
        };
        let (mut r, mut eta) = backward(&x)?;
        let mut best = (x.clone(), eta);
        let mut steps = 0;
        while eta > REFINE_TARGET && steps < REFINE_MAX_STEPS {
            let dx = f.solve(&r);
            axpy(1.0, &dx, &mut x);
            steps += 1;
            let (r_new, eta_new) = backward(&x)?;
            if eta_new < best.1 {
                best = (x.clone(), eta_new);
            }
            // Stop once refinement stagnates.
            let stalled = eta_new >= 0.5 * eta;
            r = r_new;
            eta = eta_new;
            if stalled {
                break;
            }
        }
        worst = worst.max(best.1);
        max_steps = max_steps.max(steps);
        solutions.push(best.0);
    }
    if worst > REFINE_REQUIRED {
        return Err(LinSolveError::RefinementFailed { relres: worst });
    }
    Ok((
        solutions,
        SolveStats {
            inertia: f.inertia(),
            relres: worst,
            refinement_steps: max_steps,
            factor_nnz: f.nnz_factor(),
        },
    ))
}

/// M-inner product helper used by the eigensolver and its tests.
pub(crate) fn m_dot(m: &CscMatrix, a: &[f64], b: &[f64]) -> f64 {
    let mb = m.matvec(b).expect("dimension checked by caller");
    dot(a, &mb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::Triplets;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn csc_from_dense(d: &nalgebra::DMatrix<f64>) -> CscMatrix {
        let mut t = Triplets::new(d.nrows(), d.ncols());
        for j in 0..d.ncols() {
            for i in 0..d.nrows() {
                if d[(i, j)] != 0.0 {
                    t.push(i, j, d[(i, j)]).unwrap();
                }
            }
        }
        t.to_csc()
    }

    #[test]
    fn saddle_two_by_two() {
        // [[2, 1], [1, 0]] x = (3, 1) has solution (1, 1).
        let m = csc_from_dense(&nalgebra::dmatrix![2.0, 1.0; 1.0, 0.0]);
        let (sols, stats) = factor_solve(&m, &[vec![3.0, 1.0]]).unwrap();
        assert!((sols[0][0] - 1.0).abs() < 1e-14);
        assert!((sols[0][1] - 1.0).abs() < 1e-14);
        assert_eq!(stats.inertia, (1, 1, 0));
        assert!(stats.relres <= 1e-12);
    }

    #[test]
    fn one_dimensional_laplacian_solve() {
        // Tridiagonal (-1, 2, -1)/h^2 with n = 10 interior points on (0, 1).
        let n = 10;
        let h = 1.0 / (n as f64 + 1.0);
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, 2.0 / (h * h)).unwrap();
            if i + 1 < n {
                t.push(i, i + 1, -1.0 / (h * h)).unwrap();
                t.push(i + 1, i, -1.0 / (h * h)).unwrap();
            }
        }
        let a = t.to_csc();
        // Solve against u(x) = x(1-x): f = 2, boundary zero.
        let b = vec![2.0; n];
        let (sols, stats) = factor_solve(&a, &[b]).unwrap();
        for i in 0..n {
            let x = (i as f64 + 1.0) * h;
            assert!((sols[0][i] - x * (1.0 - x)).abs() < 1e-12);
        }
        assert_eq!(stats.inertia, (n, 0, 0));
    }

    fn random_symmetric(n: usize, shift: f64, seed: u64) -> nalgebra::DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let mut s = &r + r.transpose();
        for i in 0..n {
            s[(i, i)] += shift;
        }
        s
    }

    #[test]
    fn reconstructs_random_symmetric_matrices() {
        for (seed, shift) in [(1u64, 6.0), (2, 0.0), (3, -4.0)] {
            let d = random_symmetric(30, shift, seed);
            let a = csc_from_dense(&d);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let b: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (sols, stats) = factor_solve(&a, &[b.clone()]).unwrap();
            // Check against dense LU.
            let xd = d.clone().lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
            for i in 0..30 {
                assert!(
                    (sols[0][i] - xd[i]).abs() < 1e-9,
                    "seed {seed} entry {i}: {} vs {}",
                    sols[0][i],
                    xd[i]
                );
            }
            // Inertia against the dense eigendecomposition.
            let eig = nalgebra::SymmetricEigen::new(d);
            let pos = eig.eigenvalues.iter().filter(|&&e| e > 0.0).count();
            assert_eq!(stats.inertia.0, pos, "seed {seed}");
            assert_eq!(stats.inertia.1, 30 - pos, "seed {seed}");
        }
    }

    #[test]
    fn saddle_block_inertia() {
        // [[I, B^T], [B, 0]] with full-rank B: inertia (n, m, 0).
        let (n, m) = (12, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let bmat = nalgebra::DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let mut t = Triplets::new(n + m, n + m);
        for i in 0..n {
            t.push(i, i, 1.0).unwrap();
        }
        for i in 0..m {
            for j in 0..n {
                t.push(n + i, j, bmat[(i, j)]).unwrap();
                t.push(j, n + i, bmat[(i, j)]).unwrap();
            }
        }
        let a = t.to_csc();
        let rhs = vec![1.0; n + m];
        let (_, stats) = factor_solve(&a, &[rhs]).unwrap();
        assert_eq!(stats.inertia, (n, m, 0));
    }

    #[test]
    fn rejects_singular_and_asymmetric() {
        let sing = csc_from_dense(&nalgebra::dmatrix![1.0, 1.0; 1.0, 1.0]);
        assert!(matches!(
            factor_solve(&sing, &[vec![1.0, 1.0]]),
            Err(LinSolveError::Singular { .. })
        ));
        let asym = csc_from_dense(&nalgebra::dmatrix![1.0, 2.0; 0.5, 1.0]);
        assert!(matches!(
            factor_solve(&asym, &[vec![1.0, 1.0]]),
            Err(LinSolveError::BadInput(_))
        ));
    }

    #[test]
    fn factorization_is_deterministic() {
        let d = random_symmetric(40, 0.5, 11);
        let a = csc_from_dense(&d);
        let b = vec![1.0; 40];
        let (s1, _) = factor_solve(&a, &[b.clone()]).unwrap();
        let (s2, _) = factor_solve(&a, &[b]).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn multiple_right_hand_sides() {
        let d = random_symmetric(25, 8.0, 21);
        let a = csc_from_dense(&d);
        let rhs: Vec<Vec<f64>> = (0..4)
            .map(|k| (0..25).map(|i| ((i + k) as f64).sin()).collect())
            .collect();
        let (sols, stats) = factor_solve(&a, &rhs).unwrap();
        assert_eq!(sols.len(), 4);
        assert!(stats.relres <= 1e-12);
        for (x, b) in sols.iter().zip(&rhs) {
            let ax = a.matvec(x).unwrap();
            let resid: f64 = ax.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(resid < 1e-10);
        }
    }
}
