//! Dense linear-algebra primitives shared by every other module.
//!
//! Everything here is a pure function of its inputs: a symmetric generalized
//! eigensolver (Cholesky reduction to a standard symmetric problem), singular
//! value decomposition, rank and conditioning estimation, and real/complex
//! linear solves with explicit singularity reporting.
//!
//! Eigenvectors and singular vectors are post-processed with a deterministic
//! sign convention (the entry of largest magnitude, first occurrence, is made
//! positive) so that every downstream artifact is byte-stable across reruns.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

/// Errors raised by the dense kernels.
#[derive(Debug, Error)]
pub enum LinalgError {
    /// Incompatible or invalid matrix dimensions.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A required factorization (Cholesky, eigendecomposition) failed.
    #[error("decomposition error: {0}")]
    Decomposition(String),
    /// A linear system was too close to singular to solve reliably.
    #[error("singular system: rcond = {rcond:.3e}")]
    SingularSystem {
        /// Reciprocal condition number of the offending matrix.
        rcond: f64,
    },
}

/// Eigenvalues `λ_l = ω_l²` (ascending) and mass-normalized eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Eigenvalues in ascending order (rad²/s²).
    pub values: DVector<f64>,
    /// Column `l` is the eigenvector `φ_l`, normalized to `φᵀMφ = 1`.
    pub vectors: DMatrix<f64>,
}

/// Full singular value decomposition `A = U Σ Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Left singular vectors (orthonormal columns).
    pub u: DMatrix<f64>,
    /// Singular values, non-negative, descending.
    pub singular_values: DVector<f64>,
    /// Right singular vectors (orthonormal columns).
    pub v: DMatrix<f64>,
}

/// Default relative tolerance for [`numerical_rank`].
pub const DEFAULT_RANK_TAU: f64 = 1e-8;

/// Minimum reciprocal condition number accepted by [`solve`] / [`solve_complex`].
pub const SOLVE_RCOND_MIN: f64 = 1e-14;

fn check_square(a: &DMatrix<f64>, what: &str) -> Result<(), LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::Dimension(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Verifies `|A[i,j] − A[j,i]| ≤ tol · max|A|` and returns a symmetrized copy.
pub fn require_symmetric(a: &DMatrix<f64>, tol: f64, what: &str) -> Result<DMatrix<f64>, LinalgError> {
    check_square(a, what)?;
    let scale = a.amax().max(f64::MIN_POSITIVE);
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            if (a[(i, j)] - a[(j, i)]).abs() > tol * scale {
                return Err(LinalgError::Dimension(format!(
                    "{what} is not symmetric at ({i},{j}): {} vs {}",
                    a[(i, j)],
                    a[(j, i)]
                )));
            }
        }
    }
    let mut s = a.clone();
    for i in 0..s.nrows() {
        for j in 0..i {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

/// Flips each column so its largest-magnitude entry (first occurrence) is positive.
pub fn canonical_column_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let col = m.column(j);
        let mut best = 0usize;
        let mut best_abs = 0.0f64;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if m[(best, j)] < 0.0 {
            for i in 0..m.nrows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Solves the generalized symmetric eigenproblem `K φ = λ M φ` for the `q`
/// smallest eigenvalues, with `M` positive definite.
///
/// Uses the Cholesky reduction `M = LLᵀ`, a dense symmetric eigensolver on
/// `L⁻¹ K L⁻ᵀ`, then back-transforms and mass-normalizes. Eigenvalues come out
/// ascending; the vectors carry the deterministic sign convention.
pub fn sym_generalized_eig(
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
    q: usize,
) -> Result<EigenPairs, LinalgError> {
    let k = require_symmetric(k, 1e-12, "stiffness matrix")?;
    let m = require_symmetric(m, 1e-12, "mass matrix")?;
    let n = k.nrows();
    if m.nrows() != n {
        return Err(LinalgError::Dimension(format!(
            "K is {n}x{n} but M is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if q == 0 || q > n {
        return Err(LinalgError::Dimension(format!(
            "requested {q} eigenpairs from an {n}-dimensional pencil"
        )));
    }
    let chol = nalgebra::Cholesky::new(m.clone()).ok_or_else(|| {
        LinalgError::Decomposition("mass matrix is not positive definite".into())
    })?;
    let l = chol.l();
    // B = L⁻¹ K L⁻ᵀ, formed through two triangular solves; K symmetric makes
    // the second solve act on the transpose of the first result.
    let x = l
        .solve_lower_triangular(&k)
        .ok_or_else(|| LinalgError::Decomposition("singular Cholesky factor".into()))?;
    let b = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| LinalgError::Decomposition("singular Cholesky factor".into()))?;
    let b = 0.5 * (&b + b.transpose());
    let eig = nalgebra::SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let mut values = DVector::zeros(q);
    let mut y = DMatrix::zeros(n, q);
    for (out, &idx) in order.iter().take(q).enumerate() {
        values[out] = eig.eigenvalues[idx];
        y.set_column(out, &eig.eigenvectors.column(idx));
    }
    // Back-transform Lᵀ φ = y, then renormalize against M for roundoff.
    let lt = l.transpose();
    let mut vectors = lt
        .solve_upper_triangular(&y)
        .ok_or_else(|| LinalgError::Decomposition("singular Cholesky factor".into()))?;
    for j in 0..q {
        let col = vectors.column(j).clone_owned();
        let norm2 = (&m * &col).dot(&col);
        if norm2 <= 0.0 {
            return Err(LinalgError::Decomposition(
                "eigenvector has non-positive mass norm".into(),
            ));
        }
        vectors.set_column(j, &(col / norm2.sqrt()));
    }
    canonical_column_signs(&mut vectors);
    Ok(EigenPairs { values, vectors })
}

/// Full SVD with descending singular values and the deterministic sign convention.
pub fn svd(a: &DMatrix<f64>) -> SvdResult {
    let svd = a.clone().svd(true, true);
    let mut u = svd.u.expect("SVD with compute_u");
    let v_t = svd.v_t.expect("SVD with compute_v");
    let mut v = v_t.transpose();
    // Sign convention applies to U; V must flip in lockstep to preserve A = UΣVᵀ.
    for j in 0..u.ncols().min(v.ncols()) {
        let col = u.column(j);
        let mut best = 0usize;
        let mut best_abs = 0.0f64;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if u[(best, j)] < 0.0 {
            for i in 0..u.nrows() {
                u[(i, j)] = -u[(i, j)];
            }
            for i in 0..v.nrows() {
                v[(i, j)] = -v[(i, j)];
            }
        }
    }
    SvdResult {
        u,
        singular_values: svd.singular_values,
        v,
    }
}

/// Number of singular values above `tau · σ_max`; 0 for the zero matrix.
pub fn numerical_rank(a: &DMatrix<f64>, tau: f64) -> usize {
    let sv = a.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 || !smax.is_finite() {
        return 0;
    }
    sv.iter().filter(|&&s| s > tau * smax).count()
}

/// Reciprocal condition number `σ_min / σ_max`; 0 for a singular matrix.
pub fn rcond(a: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.nrows(), a.ncols(), "rcond is defined for square matrices");
    let sv = a.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0.0;
    }
    sv.min() / smax
}

/// Sign and log-magnitude of `det(A)` from an LU factorization.
///
/// Returns `(0, -inf)` for an exactly singular matrix.
pub fn sign_logdet(a: &DMatrix<f64>) -> (i8, f64) {
    let lu = nalgebra::LU::new(a.clone());
    let u = lu.u();
    let mut sign = if lu.p().len().is_multiple_of(2) { 1i8 } else { -1i8 };
    let mut log_abs = 0.0f64;
    for i in 0..u.nrows().min(u.ncols()) {
        let d = u[(i, i)];
        if d == 0.0 {
            return (0, f64::NEG_INFINITY);
        }
        if d < 0.0 {
            sign = -sign;
        }
        log_abs += d.abs().ln();
    }
    (sign, log_abs)
}

fn lu_pivot_ratio(u_diag: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &d in u_diag {
        let a = d.abs();
        lo = lo.min(a);
        hi = hi.max(a);
    }
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

/// Solves `A X = B` for real `A` by partial-pivot LU.
///
/// Near-singular systems (pivot ratio below [`SOLVE_RCOND_MIN`]) are rejected
/// with a [`LinalgError::SingularSystem`] carrying the SVD-accurate rcond.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    check_square(a, "system matrix")?;
    if a.nrows() != b.nrows() {
        return Err(LinalgError::Dimension(format!(
            "system is {}x{} but right-hand side has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let lu = nalgebra::LU::new(a.clone());
    let u = lu.u();
    let diag: Vec<f64> = (0..u.nrows().min(u.ncols())).map(|i| u[(i, i)]).collect();
    if lu_pivot_ratio(&diag) < SOLVE_RCOND_MIN {
        return Err(LinalgError::SingularSystem { rcond: rcond(a) });
    }
    lu.solve(b)
        .ok_or(LinalgError::SingularSystem { rcond: rcond(a) })
}

/// Solves `A X = B` for complex `A` (harmonic-response systems).
pub fn solve_complex(
    a: &DMatrix<Complex<f64>>,
    b: &DMatrix<Complex<f64>>,
) -> Result<DMatrix<Complex<f64>>, LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::Dimension(format!(
            "system matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() != b.nrows() {
        return Err(LinalgError::Dimension(format!(
            "system is {}x{} but right-hand side has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let lu = nalgebra::LU::new(a.clone());
    let u = lu.u();
    let diag: Vec<f64> = (0..u.nrows().min(u.ncols()))
        .map(|i| u[(i, i)].norm())
        .collect();
    if lu_pivot_ratio(&diag) < SOLVE_RCOND_MIN {
        let rc = complex_rcond(a);
        return Err(LinalgError::SingularSystem { rcond: rc });
    }
    lu.solve(b).ok_or_else(|| LinalgError::SingularSystem {
        rcond: complex_rcond(a),
    })
}

fn complex_rcond(a: &DMatrix<Complex<f64>>) -> f64 {
    let sv = a.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0.0;
    }
    sv.min() / smax
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn diagonal_generalized_eig_sorts_ascending() {
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let m = DMatrix::identity(2, 2);
        let pairs = sym_generalized_eig(&k, &m, 2).unwrap();
        assert!((pairs.values[0] - 1.0).abs() < 1e-12);
        assert!((pairs.values[1] - 4.0).abs() < 1e-12);
        // Eigenvectors of a diagonal pencil are the (sign-canonical) identity columns.
        assert!((pairs.vectors[(1, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((pairs.vectors[(0, 1)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_pencil_mass_normalizes() {
        let k = DMatrix::from_element(1, 1, 1.0);
        let m = DMatrix::from_element(1, 1, 4.0);
        let pairs = sym_generalized_eig(&k, &m, 1).unwrap();
        assert!((pairs.values[0] - 0.25).abs() < 1e-12);
        assert!((pairs.vectors[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eigenpairs_satisfy_residual_and_mass_orthogonality() {
        let n = 40;
        let a = random_matrix(n, n, 7);
        let k = &a * a.transpose() + DMatrix::<f64>::identity(n, n) * 0.5;
        let b = random_matrix(n, n, 8);
        let m = &b * b.transpose() + DMatrix::<f64>::identity(n, n);
        let q = 12;
        let pairs = sym_generalized_eig(&k, &m, q).unwrap();
        let knorm = k.norm();
        for l in 0..q {
            let phi = pairs.vectors.column(l);
            let res = (&k * phi) - (&m * phi) * pairs.values[l];
            assert!(res.norm() <= 1e-8 * knorm, "residual too large at mode {l}");
        }
        let gram = pairs.vectors.transpose() * &m * &pairs.vectors;
        let eye = DMatrix::<f64>::identity(q, q);
        assert!((gram - eye).amax() < 1e-8);
        for l in 1..q {
            assert!(pairs.values[l] >= pairs.values[l - 1]);
        }
    }

    #[test]
    fn non_pd_mass_is_rejected() {
        let k = DMatrix::identity(3, 3);
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 1.0]));
        assert!(matches!(
            sym_generalized_eig(&k, &m, 2),
            Err(LinalgError::Decomposition(_))
        ));
    }

    #[test]
    fn q_beyond_dimension_is_rejected() {
        let k = DMatrix::identity(3, 3);
        let m = DMatrix::identity(3, 3);
        assert!(matches!(
            sym_generalized_eig(&k, &m, 4),
            Err(LinalgError::Dimension(_))
        ));
    }

    #[test]
    fn svd_identity_and_zero_column() {
        let r = svd(&DMatrix::identity(3, 3));
        for i in 0..3 {
            assert!((r.singular_values[i] - 1.0).abs() < 1e-12);
        }
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]);
        let r = svd(&a);
        assert!((r.singular_values[0] - 3.0).abs() < 1e-12);
        assert!(r.singular_values[1].abs() < 1e-12);
    }

    #[test]
    fn svd_reconstructs_random_matrices() {
        for (rows, cols, seed) in [(5, 3, 1u64), (60, 60, 2), (200, 120, 3)] {
            let a = random_matrix(rows, cols, seed);
            let r = svd(&a);
            let sigma = DMatrix::from_fn(r.u.ncols(), r.v.ncols(), |i, j| {
                if i == j {
                    r.singular_values[i]
                } else {
                    0.0
                }
            });
            let rec = &r.u * sigma * r.v.transpose();
            let smax = r.singular_values.max();
            assert!((rec - &a).amax() <= 1e-10 * smax.max(1.0));
            let utu = r.u.transpose() * &r.u;
            assert!((utu - DMatrix::<f64>::identity(r.u.ncols(), r.u.ncols())).amax() < 1e-10);
            let vtv = r.v.transpose() * &r.v;
            assert!((vtv - DMatrix::<f64>::identity(r.v.ncols(), r.v.ncols())).amax() < 1e-10);
        }
    }

    #[test]
    fn rank_counts_and_rcond() {
        assert_eq!(numerical_rank(&DMatrix::identity(45, 45), 1e-8), 45);
        // Identity with a zero column appended keeps rank 3.
        let mut a = DMatrix::zeros(3, 4);
        for i in 0..3 {
            a[(i, i)] = 1.0;
        }
        assert_eq!(numerical_rank(&a, 1e-8), 3);
        assert_eq!(numerical_rank(&DMatrix::<f64>::zeros(4, 4), 1e-8), 0);
        assert!((rcond(&DMatrix::identity(5, 5)) - 1.0).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-12]));
        assert!((rcond(&d) - 1e-12).abs() < 1e-24);
    }

    #[test]
    fn rank_is_orthogonally_invariant() {
        let a = random_matrix(30, 18, 11);
        let base = numerical_rank(&a, 1e-8);
        let qr = random_matrix(30, 30, 12).qr();
        let q = qr.q();
        assert_eq!(numerical_rank(&(q * &a), 1e-8), base);
        // Row permutation.
        let mut p = DMatrix::<f64>::zeros(30, 30);
        for i in 0..30 {
            p[(i, (i * 7) % 30)] = 1.0;
        }
        assert_eq!(numerical_rank(&(p * &a), 1e-8), base);
    }

    #[test]
    fn orthogonal_matrix_has_unit_rcond() {
        let qr = random_matrix(25, 25, 21).qr();
        let q = qr.q();
        assert!((rcond(&q) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn solve_identity_scaling_and_singularity() {
        let b = random_matrix(4, 2, 31);
        let x = solve(&DMatrix::identity(4, 4), &b).unwrap();
        assert!((x.clone() - &b).amax() < 1e-14);
        let x = solve(&(DMatrix::identity(4, 4) * 2.0), &DMatrix::identity(4, 4)).unwrap();
        assert!((x - DMatrix::<f64>::identity(4, 4) * 0.5).amax() < 1e-14);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        match solve(&singular, &DMatrix::identity(2, 2)) {
            Err(LinalgError::SingularSystem { rcond }) => assert!(rcond < 1e-14),
            other => panic!("expected singular system, got {other:?}"),
        }
    }

    #[test]
    fn complex_solve_matches_real_path_at_zero_frequency() {
        let n = 12;
        let a = random_matrix(n, n, 41);
        let k = &a * a.transpose() + DMatrix::<f64>::identity(n, n);
        let f = random_matrix(n, 1, 42);
        let real = solve(&k, &f).unwrap();
        let kc = k.map(|x| Complex::new(x, 0.0));
        let fc = f.map(|x| Complex::new(x, 0.0));
        let complex = solve_complex(&kc, &fc).unwrap();
        for i in 0..n {
            assert!((complex[(i, 0)].re - real[(i, 0)]).abs() < 1e-10);
            assert!(complex[(i, 0)].im.abs() < 1e-12);
        }
    }

    #[test]
    fn sign_logdet_tracks_lu() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let (sign, log_abs) = sign_logdet(&a);
        assert_eq!(sign, 1); // det = 1
        assert!(log_abs.abs() < 1e-12);
        let (sign, _) = sign_logdet(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]));
        assert_eq!(sign, -1);
        let (sign, log_abs) = sign_logdet(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert_eq!(sign, 0);
        assert!(log_abs.is_infinite());
    }
}
