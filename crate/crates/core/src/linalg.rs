//! Moore-Penrose and generalized-inverse machinery.
//!
//! The pseudoinverse is computed from a singular value decomposition with a
//! truncation threshold relative to the largest singular value, so
//! rank-deficient inputs (constant bands and other degenerate rasters) are
//! handled without special casing. A fast normal-equations path is available
//! for matrices known to have full column rank.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value truncation used when no tolerance is supplied.
pub const DEFAULT_SVD_RTOL: f64 = 1e-12;
/// Relative Frobenius tolerance for the four inverse conditions.
pub const DEFAULT_CHECK_TOL: f64 = 1e-8;

/// Condition gate for the normal-equations path: eigenvalues of `MᵀM` below
/// this fraction of the largest are treated as rank collapse. Squaring the
/// condition number in `MᵀM` limits the fast path to cond(M) ≲ 1e4, which is
/// where it still agrees with the SVD route to 1e-8.
const GRAM_RANK_RTOL: f64 = 1e-8;

/// Outcome of checking a candidate generalized inverse.
///
/// `penrose_conditions` holds, in order: `AGA = A`, `GAG = G`, `(AG)ᵀ = AG`,
/// `(GA)ᵀ = GA`. The first alone makes `G` a generalized inverse; all four
/// make it the Moore-Penrose inverse.
#[derive(Debug, Clone)]
pub struct PenroseReport {
    pub is_gen_inverse: bool,
    pub penrose_conditions: [bool; 4],
    pub max_residual: f64,
}

/// Thin singular value decomposition `m = u · diag(sigma) · vᵀ`.
///
/// One-sided Jacobi (Hestenes) on the columns: rotations orthogonalize
/// column pairs until every pair is numerically orthogonal, the singular
/// values are the final column norms, and `v` accumulates the rotations.
/// Quadratically convergent and accurate down to tiny singular values, where
/// bidiagonalization-based routines can mispair singular vectors on
/// rank-deficient input. Columns with zero norm yield zero columns in `u`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn jacobi_svd(m: &DMatrix<f64>) -> Result<ThinSvd> {
    ensure_finite(m)?;
    if m.is_empty() {
        return Err(Error::InvalidDimensions("svd of an empty matrix".into()));
    }
    if m.nrows() < m.ncols() {
        let t = jacobi_svd(&m.transpose())?;
        return Ok(ThinSvd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    let n = m.ncols();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let col_p = a.column(p);
                let col_q = a.column(q);
                let alpha = col_p.dot(&col_p);
                let beta = col_q.dot(&col_q);
                let gamma = col_p.dot(&col_q);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut a, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
                rotated = true;
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));
    let mut u = DMatrix::zeros(m.nrows(), n);
    let mut sigma = DVector::zeros(n);
    let mut v_sorted = DMatrix::zeros(n, n);
    for (slot, &j) in order.iter().enumerate() {
        sigma[slot] = norms[j];
        if norms[j] > 0.0 {
            u.set_column(slot, &(a.column(j) / norms[j]));
        }
        v_sorted.set_column(slot, &v.column(j));
    }
    Ok(ThinSvd {
        u,
        singular_values: sigma,
        v: v_sorted,
    })
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let vp = m[(r, p)];
        let vq = m[(r, q)];
        m[(r, p)] = c * vp - s * vq;
        m[(r, q)] = s * vp + c * vq;
    }
}

/// Moore-Penrose inverse via SVD with relative truncation.
///
/// Singular values at or below `rel_tolerance * sigma_max` are treated as
/// zero. The zero matrix maps to the zero matrix of transposed shape.
pub fn moore_penrose(m: &DMatrix<f64>, rel_tolerance: f64) -> Result<DMatrix<f64>> {
    if rel_tolerance <= 0.0 {
        return Err(Error::InvalidDimensions(format!(
            "rel_tolerance must be positive, got {rel_tolerance}"
        )));
    }
    let (rows, cols) = m.shape();
    let svd = jacobi_svd(m)?;
    let sigma_max = svd.singular_values.max();
    if sigma_max == 0.0 {
        return Ok(DMatrix::zeros(cols, rows));
    }
    let cutoff = rel_tolerance * sigma_max;
    let inv_sigma =
        DMatrix::from_diagonal(&svd.singular_values.map(
            |s| {
                if s > cutoff {
                    1.0 / s
                } else {
                    0.0
                }
            },
        ));
    Ok(&svd.v * inv_sigma * svd.u.transpose())
}

/// `(MᵀM)⁻¹Mᵀ` for full-column-rank `M`.
///
/// Returns [`Error::RankDeficient`] when a condition estimate on `MᵀM` says
/// the normal equations cannot be trusted; callers fall back to
/// [`moore_penrose`].
pub fn full_rank_left_pinv(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_finite(m)?;
    if m.nrows() < m.ncols() {
        return Err(Error::RankDeficient(format!(
            "{}x{} matrix cannot have full column rank",
            m.nrows(),
            m.ncols()
        )));
    }
    let gram = m.transpose() * m;
    let eigs = gram.clone().symmetric_eigen().eigenvalues;
    let lambda_max = eigs.max();
    let lambda_min = eigs.min();
    if lambda_max <= 0.0 || lambda_min <= GRAM_RANK_RTOL * lambda_max {
        return Err(Error::RankDeficient(format!(
            "gram matrix eigenvalue ratio {:.3e} below {GRAM_RANK_RTOL:.0e}",
            lambda_min / lambda_max
        )));
    }
    let chol = nalgebra::Cholesky::new(gram)
        .ok_or_else(|| Error::RankDeficient("gram matrix is not positive definite".to_string()))?;
    Ok(chol.solve(&m.transpose()))
}

/// Pseudoinverse with the fast path when it applies: normal equations for
/// full-column-rank input, SVD otherwise. Returns the inverse and whether
/// the full-rank path was taken.
pub fn pinv_auto(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    match full_rank_left_pinv(m) {
        Ok(p) => Ok((p, true)),
        Err(Error::RankDeficient(_)) => Ok((moore_penrose(m, DEFAULT_SVD_RTOL)?, false)),
        Err(e) => Err(e),
    }
}

/// Evaluates the four Penrose conditions for a candidate inverse `g` of `a`.
pub fn check_generalized_inverse(
    a: &DMatrix<f64>,
    g: &DMatrix<f64>,
    tol: f64,
) -> Result<PenroseReport> {
    if g.shape() != (a.ncols(), a.nrows()) {
        return Err(Error::ShapeMismatch(format!(
            "candidate inverse is {}x{}, expected {}x{}",
            g.nrows(),
            g.ncols(),
            a.ncols(),
            a.nrows()
        )));
    }
    let ag = a * g;
    let ga = g * a;
    let residuals = [
        rel_frobenius(&(&ag * a - a), a),
        rel_frobenius(&(&ga * g - g), g),
        rel_frobenius(&(ag.transpose() - &ag), &ag),
        rel_frobenius(&(ga.transpose() - &ga), &ga),
    ];
    let conditions = [
        residuals[0] <= tol,
        residuals[1] <= tol,
        residuals[2] <= tol,
        residuals[3] <= tol,
    ];
    Ok(PenroseReport {
        is_gen_inverse: conditions[0],
        penrose_conditions: conditions,
        max_residual: residuals.iter().cloned().fold(0.0, f64::max),
    })
}

/// Scale-free residual: `‖diff‖_F / max(1, ‖reference‖_F)`.
pub fn rel_frobenius(diff: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    diff.norm() / reference.norm().max(1.0)
}

fn ensure_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("matrix contains NaN or infinity".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn assert_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        let dev = (a - b).amax();
        assert!(dev <= tol, "max deviation {dev} > {tol}");
    }

    #[test]
    fn pinv_of_identity() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert_close(&moore_penrose(&i, DEFAULT_SVD_RTOL).unwrap(), &i, 1e-14);
    }

    #[test]
    fn pinv_of_zero_has_transposed_shape() {
        let z = DMatrix::<f64>::zeros(2, 4);
        let p = moore_penrose(&z, DEFAULT_SVD_RTOL).unwrap();
        assert_eq!(p.shape(), (4, 2));
        assert_eq!(p.amax(), 0.0);
    }

    #[test]
    fn pinv_matches_normal_equations_on_full_rank() {
        // Fixed 6x3 full-column-rank matrix; oracle is (MᵀM)⁻¹Mᵀ solved densely.
        let m = dmatrix![
            0.8, -0.3, 0.1;
            0.2, 0.9, -0.5;
            -0.6, 0.4, 0.7;
            0.5, 0.1, 0.3;
            -0.2, -0.8, 0.6;
            0.9, 0.2, -0.4
        ];
        let oracle = (m.transpose() * &m).try_inverse().unwrap() * m.transpose();
        let p = moore_penrose(&m, DEFAULT_SVD_RTOL).unwrap();
        assert_close(&p, &oracle, 1e-10);
    }

    #[test]
    fn left_pinv_of_orthonormal_is_transpose() {
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let m = dmatrix![
            inv_sqrt2, 0.0;
            -inv_sqrt2, 0.0;
            0.0, 1.0
        ];
        assert_close(&full_rank_left_pinv(&m).unwrap(), &m.transpose(), 1e-14);
    }

    #[test]
    fn left_pinv_of_diagonal() {
        let m = dmatrix![2.0, 0.0; 0.0, 4.0];
        let want = dmatrix![0.5, 0.0; 0.0, 0.25];
        assert_close(&full_rank_left_pinv(&m).unwrap(), &want, 1e-14);
    }

    #[test]
    fn left_pinv_agrees_with_svd_route() {
        let m = dmatrix![
            1.2, 0.3;
            -0.7, 2.1;
            0.4, -0.9;
            2.2, 0.6;
            -0.1, 1.4
        ];
        let fast = full_rank_left_pinv(&m).unwrap();
        let svd = moore_penrose(&m, DEFAULT_SVD_RTOL).unwrap();
        assert!(rel_frobenius(&(&fast - &svd), &svd) <= 1e-8);
    }

    #[test]
    fn left_pinv_rejects_rank_deficiency() {
        let m = dmatrix![1.0, 2.0; 2.0, 4.0; 3.0, 6.0];
        assert!(matches!(
            full_rank_left_pinv(&m),
            Err(Error::RankDeficient(_))
        ));
        let (p, fast) = pinv_auto(&m).unwrap();
        assert!(!fast);
        assert!(rel_frobenius(&(&m * &p * &m - &m), &m) <= 1e-10);
    }

    #[test]
    fn check_identity_pair() {
        let i = DMatrix::<f64>::identity(3, 3);
        let r = check_generalized_inverse(&i, &i, DEFAULT_CHECK_TOL).unwrap();
        assert!(r.is_gen_inverse);
        assert_eq!(r.penrose_conditions, [true; 4]);
        assert_eq!(r.max_residual, 0.0);
    }

    #[test]
    fn check_column_row_pair() {
        // a = (1,1)ᵀ/2, g = (1,1): ga = 1 so aga = a.
        let a = dmatrix![0.5; 0.5];
        let g = dmatrix![1.0, 1.0];
        let r = check_generalized_inverse(&a, &g, DEFAULT_CHECK_TOL).unwrap();
        assert!(r.is_gen_inverse);
    }

    #[test]
    fn check_asymmetric_product_fails_condition_three() {
        // a = (1,0)ᵀ, g = (1,7): ga = 1 but ag = [[1,7],[0,0]] is not symmetric.
        let a = dmatrix![1.0; 0.0];
        let g = dmatrix![1.0, 7.0];
        let r = check_generalized_inverse(&a, &g, DEFAULT_CHECK_TOL).unwrap();
        assert!(r.penrose_conditions[0]);
        assert!(!r.penrose_conditions[2]);
        assert!(r.is_gen_inverse);
    }

    #[test]
    fn check_rejects_shape_mismatch() {
        let a = DMatrix::<f64>::zeros(2, 3);
        let g = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(
            check_generalized_inverse(&a, &g, 1e-8),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn rejects_non_finite() {
        let m = dmatrix![1.0, f64::NAN];
        assert!(matches!(
            moore_penrose(&m, DEFAULT_SVD_RTOL),
            Err(Error::NonFinite(_))
        ));
    }
}
