//! Spectral response estimation and solvability diagnostics.
//!
//! The response estimate is the least-squares solution `a = z⁺ · bhat(y)`,
//! which is also exactly the response realized by a dse-wrapped down-sampler
//! built from the same pseudoinverse. The diagnostics quantify whether the
//! coupled equations `y = x a`, `z = b x` admit any solution at all.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics;
use crate::sampling::SpatialOperator;

/// Default residual tolerance for declaring an instance solvable, in
/// image-value units.
pub const DEFAULT_EXISTENCE_TOL: f64 = 1e-6;

/// How a spectral response came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseSource {
    /// Supplied by the user or the synthetic generator.
    Assumed,
    /// Least-squares estimate paired with a dse-wrapped down-sampler.
    EstimatedDse,
    /// Least-squares estimate used with the plain down-sampler.
    EstimatedLsq,
}

/// The `bands x pan_bands` spectral response and its provenance.
#[derive(Debug, Clone)]
pub struct SpectralResponse {
    pub a: DMatrix<f64>,
    pub source: ResponseSource,
}

/// The three solvability residuals, each normalized like the corresponding
/// root-mean-square metric so the first doubles as the consistency metric.
#[derive(Debug, Clone)]
pub struct ExistenceReport {
    /// `‖z a − b(y)‖` over the coarse pan grid.
    pub consistency_residual: f64,
    /// `‖y − y a⁻ a‖` over the fine pan grid.
    pub y_recoverable_residual: f64,
    /// `‖z − b(b⁻(z))‖` over the coarse ms grid.
    pub z_recoverable_residual: f64,
    pub solvable: bool,
}

/// Outcome of the Kronecker solvability diagnostic.
#[derive(Debug, Clone)]
pub struct KroneckerReport {
    /// Numerical rank of the assembled `[z ⊗ I, −I ⊗ yᵀ]` system.
    pub rank: usize,
    /// `min(rows, cols)` of the assembled system.
    pub bound: usize,
    /// Whether the system admits a nonzero `(a, b)` pair, i.e. whether the
    /// rank falls short of the column count.
    pub nonzero_solution_exists: bool,
}

/// Estimates the spectral response as `z⁺ · bhat(y)`.
///
/// Uses the normal-equations pseudoinverse when `z` has full column rank and
/// the SVD route otherwise. The same value minimizes `‖bhat(y) − z m‖_F`
/// over all responses `m`.
pub fn estimate_a_dse(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    bhat: &SpatialOperator,
) -> Result<SpectralResponse> {
    if bhat.out_pixels() != z.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "down-sampler yields {} pixels but z has {} rows",
            bhat.out_pixels(),
            z.nrows()
        )));
    }
    let (z_pinv, _) = linalg::pinv_auto(z)?;
    Ok(SpectralResponse {
        a: estimate_a_with_pinv(y, &z_pinv, bhat)?,
        source: ResponseSource::EstimatedDse,
    })
}

/// The estimation kernel `z_pinv · bhat(y)`, split out so a fusion pipeline
/// can share one pseudoinverse between the estimate and the wrapped operator.
pub fn estimate_a_with_pinv(
    y: &DMatrix<f64>,
    z_pinv: &DMatrix<f64>,
    bhat: &SpatialOperator,
) -> Result<DMatrix<f64>> {
    let coarse_pan = bhat.apply(y)?;
    if z_pinv.ncols() != coarse_pan.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "z_pinv has {} columns but the down-sampled pan has {} pixels",
            z_pinv.ncols(),
            coarse_pan.nrows()
        )));
    }
    Ok(z_pinv * coarse_pan)
}

/// Computes the three solvability residuals with the supplied inverses.
pub fn existence_check(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &SpatialOperator,
    b_inv: &SpatialOperator,
    a_inv: &DMatrix<f64>,
    tol: f64,
) -> Result<ExistenceReport> {
    if a.nrows() != z.ncols() || a.ncols() != y.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "response is {}x{}, expected {}x{}",
            a.nrows(),
            a.ncols(),
            z.ncols(),
            y.ncols()
        )));
    }
    if a_inv.shape() != (a.ncols(), a.nrows()) {
        return Err(Error::ShapeMismatch(format!(
            "response inverse is {}x{}, expected {}x{}",
            a_inv.nrows(),
            a_inv.ncols(),
            a.ncols(),
            a.nrows()
        )));
    }
    let consistency_residual = metrics::consistent_rmse(z, a, b, y)?;
    let y_recoverable_residual = metrics::rms_of(&(y - y * a_inv * a));
    let z_recoverable_residual = metrics::rms_of(&(z - b.apply(&b_inv.apply(z)?)?));
    let solvable = consistency_residual <= tol
        && y_recoverable_residual <= tol
        && z_recoverable_residual <= tol;
    Ok(ExistenceReport {
        consistency_residual,
        y_recoverable_residual,
        z_recoverable_residual,
        solvable,
    })
}

/// Assembles the homogeneous system whose kernel holds every response pair
/// `(a, b)` with `b y = z a`, in row-major vectorization order:
/// `[z ⊗ I_s, −I_hw ⊗ yᵀ]`.
///
/// Desk scale only; the assembled matrix has `hw·s` rows and
/// `S·s + hw·HW` columns.
pub fn kronecker_system(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    max_pixels: usize,
) -> Result<DMatrix<f64>> {
    let (fine_pixels, s) = y.shape();
    let (coarse_pixels, bands) = z.shape();
    if fine_pixels > max_pixels {
        return Err(Error::CapExceeded {
            entries: fine_pixels,
            cap: max_pixels,
        });
    }
    let rows = coarse_pixels * s;
    let cols_a = bands * s;
    let cols_b = coarse_pixels * fine_pixels;
    let mut m = DMatrix::zeros(rows, cols_a + cols_b);
    let eye_s = DMatrix::<f64>::identity(s, s);
    let eye_hw = DMatrix::<f64>::identity(coarse_pixels, coarse_pixels);
    m.view_mut((0, 0), (rows, cols_a))
        .copy_from(&z.kronecker(&eye_s));
    m.view_mut((0, cols_a), (rows, cols_b))
        .copy_from(&(-eye_hw.kronecker(&y.transpose())));
    Ok(m)
}

/// Numerical-rank diagnostic on the assembled Kronecker system.
pub fn kronecker_rank_check(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    max_pixels: usize,
) -> Result<KroneckerReport> {
    let m = kronecker_system(y, z, max_pixels)?;
    let cols = m.ncols();
    let rows = m.nrows();
    let singular_values = linalg::jacobi_svd(&m)?.singular_values;
    let sigma_max = singular_values.max();
    let rank = if sigma_max == 0.0 {
        0
    } else {
        singular_values
            .iter()
            .filter(|&&s| s > 1e-10 * sigma_max)
            .count()
    };
    Ok(KroneckerReport {
        rank,
        bound: rows.min(cols),
        nonzero_solution_exists: rank < cols,
    })
}

/// Largest entry of the assembled system applied to the stacked
/// row-major vectorizations of `a` and the dense operator `b`.
///
/// Zero means `(a, b)` solves `b y = z a` exactly.
pub fn kronecker_kernel_residual(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b_dense: &DMatrix<f64>,
    max_pixels: usize,
) -> Result<f64> {
    let m = kronecker_system(y, z, max_pixels)?;
    let mut v = Vec::with_capacity(m.ncols());
    v.extend(row_major_vec(a));
    v.extend(row_major_vec(b_dense));
    if v.len() != m.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "stacked vectorization has {} entries, system has {} columns",
            v.len(),
            m.ncols()
        )));
    }
    let v = DMatrix::from_column_slice(v.len(), 1, &v);
    Ok((m * v).amax())
}

fn row_major_vec(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |r| (0..m.ncols()).map(move |c| m[(r, c)]))
}
