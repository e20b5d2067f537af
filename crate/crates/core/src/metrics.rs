//! The five residual metrics for one fusion run.
//!
//! Every metric is a root mean square over the element count of the compared
//! arrays, in image-value units. Frobenius accumulations use compensated
//! summation so the zero claims hold at 1e-10 even on large grids.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sampling::SpatialOperator;

/// The residuals of one fusion run. `rmse` is present only when a ground
/// truth was supplied.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub consistent_rmse: f64,
    pub spatial_rmse: f64,
    pub spectral_rmse: f64,
    pub inverse_ability: f64,
    pub rmse: Option<f64>,
}

/// `√(‖z a − b(y)‖_F² / (hw·s))`: zero is necessary for the coupled
/// equations to admit a solution.
pub fn consistent_rmse(
    z: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &SpatialOperator,
    y: &DMatrix<f64>,
) -> Result<f64> {
    if z.ncols() != a.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "response has {} rows, ms has {} bands",
            a.nrows(),
            z.ncols()
        )));
    }
    let by = b.apply(y)?;
    if by.shape() != (z.nrows(), a.ncols()) {
        return Err(Error::ShapeMismatch(format!(
            "down-sampled pan is {}x{}, expected {}x{}",
            by.nrows(),
            by.ncols(),
            z.nrows(),
            a.ncols()
        )));
    }
    Ok(rms_of(&(z * a - by)))
}

/// `√(‖x_rec a − y‖_F² / (HW·s))`.
pub fn spatial_rmse(x_rec: &DMatrix<f64>, a: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if x_rec.ncols() != a.nrows() || x_rec.nrows() != y.nrows() || a.ncols() != y.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "spatial residual shapes disagree: x_rec {}x{}, a {}x{}, y {}x{}",
            x_rec.nrows(),
            x_rec.ncols(),
            a.nrows(),
            a.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    Ok(rms_of(&(x_rec * a - y)))
}

/// `√(‖b(x_rec) − z‖_F² / (hw·S))`.
pub fn spectral_rmse(b: &SpatialOperator, x_rec: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<f64> {
    let bx = b.apply(x_rec)?;
    if bx.shape() != z.shape() {
        return Err(Error::ShapeMismatch(format!(
            "down-sampled recovery is {}x{}, ms is {}x{}",
            bx.nrows(),
            bx.ncols(),
            z.nrows(),
            z.ncols()
        )));
    }
    Ok(rms_of(&(bx - z)))
}

/// The scalar `a_inv · a` for single-band pan; 1 means a true generalized
/// inverse.
pub fn inverse_ability(a_inv: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<f64> {
    if a_inv.nrows() != 1 || a.ncols() != 1 || a_inv.ncols() != a.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "inverse ability is defined for a 1xS row and Sx1 column, got {}x{} and {}x{}",
            a_inv.nrows(),
            a_inv.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    Ok((a_inv * a)[(0, 0)])
}

/// Root mean square distance to the ground truth, normalized by the element
/// count of the compared arrays.
pub fn rmse(x_truth: &DMatrix<f64>, x_rec: &DMatrix<f64>) -> Result<f64> {
    if x_truth.shape() != x_rec.shape() {
        return Err(Error::ShapeMismatch(format!(
            "truth is {}x{}, recovery is {}x{}",
            x_truth.nrows(),
            x_truth.ncols(),
            x_rec.nrows(),
            x_rec.ncols()
        )));
    }
    Ok(rms_of(&(x_truth - x_rec)))
}

/// Root mean square of all entries, via Neumaier-compensated summation of
/// the squares.
pub(crate) fn rms_of(diff: &DMatrix<f64>) -> f64 {
    let n = diff.len();
    if n == 0 {
        return 0.0;
    }
    (compensated_sum_sq(diff.iter().copied()) / n as f64).sqrt()
}

fn compensated_sum_sq(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for v in values {
        let sq = v * v;
        let t = sum + sq;
        if sum.abs() >= sq.abs() {
            compensation += (sum - t) + sq;
        } else {
            compensation += (sq - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}
