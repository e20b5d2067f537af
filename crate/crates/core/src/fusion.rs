//! The four fusion algorithms over the shared operator/matrix vocabulary.
//!
//! Component-substitution form injects the difference between the pan and a
//! synthetic pan built from the up-sampled ms; multiresolution form injects
//! the difference between the pan and its low-passed self. Both share the
//! up-sampled ms as base and differ only in the detail they spread across
//! bands through a response inverse.
//!
//! Evaluation order is fixed: the up-sampled ms is computed once and reused,
//! so repeated runs are bit-identical.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::estimation::SpectralResponse;
use crate::prior;
use crate::raster::RasterCube;
use crate::sampling::SpatialOperator;

/// Relative tolerance on `a_inv · a = 1` before a warning is recorded.
const INVERSE_WARN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FusionMethod {
    MtfGlpCbd,
    Gsa,
    Pcs,
    Pmra,
}

impl FusionMethod {
    pub fn name(&self) -> &'static str {
        match self {
            FusionMethod::MtfGlpCbd => "cbd",
            FusionMethod::Gsa => "gsa",
            FusionMethod::Pcs => "pcs",
            FusionMethod::Pmra => "pmra",
        }
    }
}

/// A recovered high-resolution cube plus the responses that produced it.
#[derive(Debug, Clone)]
pub struct FusionResult {
    pub cube: RasterCube,
    pub method: FusionMethod,
    pub dse: bool,
    pub a_used: SpectralResponse,
    pub a_inv_used: RowDVector<f64>,
    /// Adaptive/covariance weights, when the method derives them.
    pub w_used: Option<RowDVector<f64>>,
    /// Set when `a_inv · a` strayed from 1 beyond tolerance; fusion still
    /// proceeds and the residual identities quantify the consequence.
    pub a_inv_warning: bool,
}

impl FusionResult {
    pub fn matrix(&self) -> DMatrix<f64> {
        self.cube.to_matrix()
    }
}

/// Deviations of the applicable pair of residual identities, evaluated with
/// both sides computed independently.
#[derive(Debug, Clone)]
pub struct IdentityReport {
    /// Max deviation of the pan-residual identity
    /// (`x_rec·a − y` against its closed form).
    pub pan_identity_dev: f64,
    /// Max deviation of the ms-residual identity
    /// (`b(x_rec) − z` against its closed form).
    pub ms_identity_dev: f64,
}

fn single_band_response(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "fusion expects a single-band pan response, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.clone())
}

fn check_fusion_shapes(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    v: &SpatialOperator,
    bands: usize,
    a_inv: &RowDVector<f64>,
) -> Result<()> {
    if z.ncols() != bands {
        return Err(Error::ShapeMismatch(format!(
            "ms has {} bands, response has {bands}",
            z.ncols()
        )));
    }
    if a_inv.len() != bands {
        return Err(Error::ShapeMismatch(format!(
            "response inverse has {} entries, expected {bands}",
            a_inv.len()
        )));
    }
    if v.in_pixels() != z.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "up-sampler expects {} pixels, ms has {}",
            v.in_pixels(),
            z.nrows()
        )));
    }
    if v.out_pixels() != y.nrows() || y.ncols() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "pan must be {}x1, got {}x{}",
            v.out_pixels(),
            y.nrows(),
            y.ncols()
        )));
    }
    Ok(())
}

fn finish(
    x: DMatrix<f64>,
    v: &SpatialOperator,
    method: FusionMethod,
    a_used: SpectralResponse,
    a_inv: RowDVector<f64>,
    w_used: Option<RowDVector<f64>>,
) -> Result<FusionResult> {
    let (h, w) = v.out_shape();
    let a_col = single_band_response(&a_used.a)?;
    let a_inv_warning = ((&a_inv * &a_col)[0] - 1.0).abs() > INVERSE_WARN_TOL;
    Ok(FusionResult {
        cube: RasterCube::from_matrix(h, w, &x)?,
        method,
        dse: false,
        a_used,
        a_inv_used: a_inv,
        w_used,
        a_inv_warning,
    })
}

/// Component-substitution fusion: `x = v(z) + (y − v(z)·a) · a_inv`.
pub fn fuse_pcs(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    v: &SpatialOperator,
    a: &SpectralResponse,
    a_inv: &RowDVector<f64>,
) -> Result<FusionResult> {
    let a_col = single_band_response(&a.a)?;
    check_fusion_shapes(y, z, v, a_col.nrows(), a_inv)?;
    let vz = v.apply(z)?;
    let detail = y - &vz * &a_col;
    let x = &vz + &detail * a_inv;
    finish(x, v, FusionMethod::Pcs, a.clone(), a_inv.clone(), None)
}

/// Multiresolution fusion: `x = v(z) + (y − v(b(y))) · a_inv`.
pub fn fuse_pmra(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    b: &SpatialOperator,
    v: &SpatialOperator,
    a: &SpectralResponse,
    a_inv: &RowDVector<f64>,
) -> Result<FusionResult> {
    let a_col = single_band_response(&a.a)?;
    check_fusion_shapes(y, z, v, a_col.nrows(), a_inv)?;
    let vz = v.apply(z)?;
    let low_passed = v.apply(&b.apply(y)?)?;
    let detail = y - low_passed;
    let x = &vz + &detail * a_inv;
    finish(x, v, FusionMethod::Pmra, a.clone(), a_inv.clone(), None)
}

/// Adaptive component substitution: the response inverse is the regression
/// of the ms bands on the synthetic intensity `z·a`.
pub fn fuse_gsa(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    v: &SpatialOperator,
    a: &SpectralResponse,
) -> Result<FusionResult> {
    let a_col = single_band_response(&a.a)?;
    let w = prior::gsa_weights(z, &DVector::from_column_slice(a_col.as_slice()))?;
    check_fusion_shapes(y, z, v, a_col.nrows(), &w)?;
    let vz = v.apply(z)?;
    let detail = y - &vz * &a_col;
    let x = &vz + &detail * &w;
    finish(x, v, FusionMethod::Gsa, a.clone(), w.clone(), Some(w))
}

/// Covariance-weighted multiresolution baseline: per-band gains are the
/// regression of the ms bands on the low-resolution pan `b(y)`.
pub fn fuse_mtf_glp_cbd(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    b: &SpatialOperator,
    v: &SpatialOperator,
    a: &SpectralResponse,
) -> Result<FusionResult> {
    let a_col = single_band_response(&a.a)?;
    let by = b.apply(y)?;
    if by.ncols() != 1 || by.nrows() != z.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "low-passed pan is {}x{}, expected {}x1",
            by.nrows(),
            by.ncols(),
            z.nrows()
        )));
    }
    let gains = prior::regression_weights(&DVector::from_column_slice(by.as_slice()), z)?;
    check_fusion_shapes(y, z, v, a_col.nrows(), &gains)?;
    let vz = v.apply(z)?;
    let low_passed = v.apply(&by)?;
    let detail = y - low_passed;
    let x = &vz + &detail * &gains;
    finish(
        x,
        v,
        FusionMethod::MtfGlpCbd,
        a.clone(),
        gains.clone(),
        Some(gains),
    )
}

/// Evaluates both sides of the residual identities for a CS-form result:
///
/// * `x_rec·a − y  =  (v(z)·a − y) · (1 − w·a)`
/// * `b(x_rec) − z =  (b(v(z)) − z) + b(y − v(z)·a) · w`
pub fn cs_residual_identities(
    result: &FusionResult,
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &SpatialOperator,
    v: &SpatialOperator,
    w: &RowDVector<f64>,
) -> Result<IdentityReport> {
    let a_col = single_band_response(a)?;
    let x_rec = result.matrix();
    let vz = v.apply(z)?;
    let vza = &vz * &a_col;
    let wa = (w * &a_col)[0];

    let pan_lhs = &x_rec * &a_col - y;
    let pan_rhs = (&vza - y) * (1.0 - wa);
    let ms_lhs = b.apply(&x_rec)? - z;
    let ms_rhs = (b.apply(&vz)? - z) + b.apply(&(y - vza))? * w;

    Ok(IdentityReport {
        pan_identity_dev: (pan_lhs - pan_rhs).amax(),
        ms_identity_dev: (ms_lhs - ms_rhs).amax(),
    })
}

/// Evaluates both sides of the residual identities for an MRA-form result:
///
/// * `x_rec·a − y  =  v(z·a − b(y)) − (y − v(b(y))) · (1 − w·a)`
/// * `b(x_rec) − z =  (b(v(z)) − z) + (b(y) − b(v(b(y)))) · w`
pub fn mra_residual_identities(
    result: &FusionResult,
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &SpatialOperator,
    v: &SpatialOperator,
    w: &RowDVector<f64>,
) -> Result<IdentityReport> {
    let a_col = single_band_response(a)?;
    let x_rec = result.matrix();
    let vz = v.apply(z)?;
    let by = b.apply(y)?;
    let vby = v.apply(&by)?;
    let wa = (w * &a_col)[0];

    let pan_lhs = &x_rec * &a_col - y;
    let pan_rhs = v.apply(&(z * &a_col - &by))? - (y - &vby) * (1.0 - wa);
    let ms_lhs = b.apply(&x_rec)? - z;
    let ms_rhs = (b.apply(&vz)? - z) + (&by - b.apply(&vby)?) * w;

    Ok(IdentityReport {
        pan_identity_dev: (pan_lhs - pan_rhs).amax(),
        ms_identity_dev: (ms_lhs - ms_rhs).amax(),
    })
}

/// Evaluates the residual-identity pair matching the result's form: CS for
/// the substitution methods, MRA for the low-pass methods. `w` is the
/// response inverse the result was built with (any row, not necessarily a
/// generalized inverse).
pub fn residual_identities(
    result: &FusionResult,
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &SpatialOperator,
    v: &SpatialOperator,
    w: &RowDVector<f64>,
) -> Result<IdentityReport> {
    match result.method {
        FusionMethod::Pcs | FusionMethod::Gsa => cs_residual_identities(result, y, z, a, b, v, w),
        FusionMethod::Pmra | FusionMethod::MtfGlpCbd => {
            mra_residual_identities(result, y, z, a, b, v, w)
        }
    }
}

/// Max deviation between the reconstruction error `x_truth − x_mra` and its
/// closed form `(x_truth − v(b(x_truth))) · (I − a·a_inv)`.
///
/// Meaningful only when `(y, z)` were generated from `x_truth` through
/// `(a, b)` and the solvability conditions hold.
pub fn total_error_check(
    x_truth: &DMatrix<f64>,
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    b: &SpatialOperator,
    v: &SpatialOperator,
    a: &SpectralResponse,
    a_inv: &RowDVector<f64>,
) -> Result<f64> {
    let recovered = fuse_pmra(y, z, b, v, a, a_inv)?.matrix();
    let lhs = x_truth - recovered;
    let bands = z.ncols();
    let a_col = single_band_response(&a.a)?;
    let annihilator = DMatrix::<f64>::identity(bands, bands) - &a_col * a_inv;
    let rhs = (x_truth - v.apply(&b.apply(x_truth)?)?) * annihilator;
    Ok((lhs - rhs).amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{self, ResponseSource};
    use crate::linalg;
    use crate::metrics;
    use crate::sampling::{self, SpatialOperator};

    fn smooth_matrix(rows: usize, cols: usize, phase: f64) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |r, c| {
            60.0 + 25.0 * ((r as f64 * 0.31 + c as f64 * 0.97 + phase).sin())
                + 4.0 * ((r as f64 * 0.13 + phase).cos())
        })
    }

    fn assumed(a: DMatrix<f64>) -> SpectralResponse {
        SpectralResponse {
            a,
            source: ResponseSource::Assumed,
        }
    }

    /// A solvable desk instance: x drawn, y = x·a, z = b(x).
    fn solvable_instance() -> (
        DMatrix<f64>,
        DMatrix<f64>,
        DMatrix<f64>,
        SpatialOperator,
        SpatialOperator,
        DMatrix<f64>,
    ) {
        let x = smooth_matrix(64, 3, 0.4);
        let a = DMatrix::from_column_slice(3, 1, &[0.2, 0.5, 0.3]);
        let y = &x * &a;
        let b = SpatialOperator::block_mean_down(2, (8, 8)).unwrap();
        let z = b.apply(&x).unwrap();
        let v = SpatialOperator::replicate_up(2, (4, 4)).unwrap();
        (x, y, z, b, v, a)
    }

    #[test]
    fn pcs_detail_vanishes_when_pan_is_synthetic() {
        let (_, _, z, _, v, a) = solvable_instance();
        let vz = v.apply(&z).unwrap();
        let y = &vz * &a;
        let a_inv = RowDVector::from_vec(vec![1.0, 1.0, 1.0]);
        let r = fuse_pcs(&y, &z, &v, &assumed(a), &a_inv).unwrap();
        assert!((r.matrix() - vz).amax() <= 1e-12);
    }

    #[test]
    fn gsa_detail_vanishes_when_pan_is_synthetic() {
        let (_, _, z, _, v, a) = solvable_instance();
        let vz = v.apply(&z).unwrap();
        let y = &vz * &a;
        let r = fuse_gsa(&y, &z, &v, &assumed(a)).unwrap();
        assert!((r.matrix() - vz).amax() <= 1e-9);
    }

    #[test]
    fn pmra_fixed_point_on_block_constant_pan() {
        let (_, _, z, b, v, a) = solvable_instance();
        // block-constant pan: y = v(coarse) so y − v(b(y)) = 0
        let coarse = smooth_matrix(16, 1, 2.0);
        let y = v.apply(&coarse).unwrap();
        let a_inv = RowDVector::from_vec(vec![0.4, 0.3, 0.3]);
        let r = fuse_pmra(&y, &z, &b, &v, &assumed(a), &a_inv).unwrap();
        assert!((r.matrix() - v.apply(&z).unwrap()).amax() <= 1e-10);
    }

    #[test]
    fn cbd_gains_recover_proportional_bands() {
        // z's bands proportional to the low-passed pan: gains must equal the
        // proportionality constants.
        let y = smooth_matrix(64, 1, 0.9);
        let b = SpatialOperator::block_mean_down(2, (8, 8)).unwrap();
        let v = SpatialOperator::replicate_up(2, (4, 4)).unwrap();
        let by = b.apply(&y).unwrap();
        let consts = [0.5, 2.0, -1.25];
        let z = DMatrix::from_fn(16, 3, |r, c| by[(r, 0)] * consts[c]);
        let a = DMatrix::from_column_slice(3, 1, &[0.3, 0.3, 0.4]);
        let r = fuse_mtf_glp_cbd(&y, &z, &b, &v, &assumed(a)).unwrap();
        let g = r.w_used.unwrap();
        for (k, &c) in consts.iter().enumerate() {
            assert!((g[k] - c).abs() <= 1e-10, "band {k}");
        }
    }

    #[test]
    fn cbd_fixed_point_on_block_constant_pan() {
        let (_, _, z, b, v, a) = solvable_instance();
        let coarse = smooth_matrix(16, 1, 1.3);
        let y = v.apply(&coarse).unwrap();
        let r = fuse_mtf_glp_cbd(&y, &z, &b, &v, &assumed(a)).unwrap();
        assert!((r.matrix() - v.apply(&z).unwrap()).amax() <= 1e-10);
    }

    #[test]
    fn pcs_matches_dense_oracle() {
        let (_, y, z, _, v, a) = solvable_instance();
        let a_inv = RowDVector::from_vec(vec![0.5, 0.25, 0.25]);
        let r = fuse_pcs(&y, &z, &v, &assumed(a.clone()), &a_inv).unwrap();
        let vd = v.materialize().unwrap();
        let oracle = &vd * &z + (&y - &vd * &z * &a) * &a_inv;
        assert!((r.matrix() - oracle).amax() <= 1e-10);
    }

    #[test]
    fn pmra_matches_dense_oracle() {
        let (_, y, z, b, v, a) = solvable_instance();
        let a_inv = RowDVector::from_vec(vec![0.5, 0.25, 0.25]);
        let r = fuse_pmra(&y, &z, &b, &v, &assumed(a), &a_inv).unwrap();
        let vd = v.materialize().unwrap();
        let bd = b.materialize().unwrap();
        let eye = DMatrix::<f64>::identity(64, 64);
        let oracle = &vd * &z + (eye - &vd * &bd) * &y * &a_inv;
        assert!((r.matrix() - oracle).amax() <= 1e-10);
    }

    #[test]
    fn dse_makes_pcs_and_pmra_identical() {
        let y = smooth_matrix(64, 1, 0.0);
        let x = smooth_matrix(64, 4, 1.1);
        let bhat = SpatialOperator::block_mean_down(2, (8, 8)).unwrap();
        let z = bhat.apply(&x).unwrap();
        let (z_pinv, fr) = linalg::pinv_auto(&z).unwrap();
        let a = estimation::estimate_a_with_pinv(&y, &z_pinv, &bhat).unwrap();
        let b = sampling::dse_wrap_with_pinv(bhat, z.clone(), z_pinv, fr).unwrap();
        let v = SpatialOperator::replicate_up(2, (4, 4)).unwrap();
        let m = prior::solve_prior_inverse(
            &DVector::from_column_slice(a.as_slice()),
            &Default::default(),
        )
        .unwrap();
        let resp = assumed(a);
        let pcs = fuse_pcs(&y, &z, &v, &resp, &m.m).unwrap();
        let pmra = fuse_pmra(&y, &z, &b, &v, &resp, &m.m).unwrap();
        assert!((pcs.matrix() - pmra.matrix()).amax() <= 1e-10);
    }

    #[test]
    fn gsa_reproduces_both_constraints_on_solvable_instance() {
        let (_, y, z, b, v, a) = solvable_instance();
        let r = fuse_gsa(&y, &z, &v, &assumed(a.clone())).unwrap();
        assert!(metrics::spatial_rmse(&r.matrix(), &a, &y).unwrap() <= 1e-8);
        assert!(metrics::spectral_rmse(&b, &r.matrix(), &z).unwrap() <= 1e-8);
    }

    #[test]
    fn cs_identities_hold_for_arbitrary_w() {
        let (_, y, z, b, v, a) = solvable_instance();
        // w deliberately NOT a generalized inverse
        let w = RowDVector::from_vec(vec![0.9, -0.4, 0.8]);
        let resp = assumed(a.clone());
        let r = fuse_pcs(&y, &z, &v, &resp, &w).unwrap();
        assert!(r.a_inv_warning);
        let report = cs_residual_identities(&r, &y, &z, &a, &b, &v, &w).unwrap();
        assert!(report.pan_identity_dev <= 1e-8);
        assert!(report.ms_identity_dev <= 1e-8);
    }

    #[test]
    fn mra_identities_hold_for_arbitrary_w() {
        let (_, y, z, b, v, a) = solvable_instance();
        let w = RowDVector::from_vec(vec![-0.2, 1.3, 0.1]);
        let resp = assumed(a.clone());
        let r = fuse_pmra(&y, &z, &b, &v, &resp, &w).unwrap();
        let report = mra_residual_identities(&r, &y, &z, &a, &b, &v, &w).unwrap();
        assert!(report.pan_identity_dev <= 1e-8);
        assert!(report.ms_identity_dev <= 1e-8);
    }

    #[test]
    fn identity_dispatch_follows_the_result_form() {
        let (_, y, z, b, v, a) = solvable_instance();
        let w = RowDVector::from_vec(vec![0.7, 0.2, 0.4]);
        let resp = assumed(a.clone());
        let cs = fuse_pcs(&y, &z, &v, &resp, &w).unwrap();
        let via_dispatch = residual_identities(&cs, &y, &z, &a, &b, &v, &w).unwrap();
        let direct = cs_residual_identities(&cs, &y, &z, &a, &b, &v, &w).unwrap();
        assert_eq!(via_dispatch.pan_identity_dev, direct.pan_identity_dev);
        let cbd = fuse_mtf_glp_cbd(&y, &z, &b, &v, &resp).unwrap();
        let g = cbd.a_inv_used.clone();
        let via_dispatch = residual_identities(&cbd, &y, &z, &a, &b, &v, &g).unwrap();
        let direct = mra_residual_identities(&cbd, &y, &z, &a, &b, &v, &g).unwrap();
        assert_eq!(via_dispatch.ms_identity_dev, direct.ms_identity_dev);
    }

    #[test]
    fn identities_vanish_with_unit_inverse_and_synthetic_pan() {
        let (_, _, z, b, v, a) = solvable_instance();
        let vz = v.apply(&z).unwrap();
        let y = &vz * &a;
        let m = prior::solve_prior_inverse(
            &DVector::from_column_slice(a.as_slice()),
            &Default::default(),
        )
        .unwrap();
        let r = fuse_pcs(&y, &z, &v, &assumed(a.clone()), &m.m).unwrap();
        let report = cs_residual_identities(&r, &y, &z, &a, &b, &v, &m.m).unwrap();
        let pan_lhs = (r.matrix() * &a - &y).amax();
        assert!(pan_lhs <= 1e-9);
        assert!(report.pan_identity_dev <= 1e-9);
    }

    #[test]
    fn total_error_identity_on_solvable_instance() {
        let (x, y, z, b, v, a) = solvable_instance();
        let m = prior::solve_prior_inverse(
            &DVector::from_column_slice(a.as_slice()),
            &Default::default(),
        )
        .unwrap();
        let dev = total_error_check(&x, &y, &z, &b, &v, &assumed(a), &m.m).unwrap();
        assert!(dev <= 1e-8, "total-error deviation {dev}");
    }

    #[test]
    fn total_error_zero_for_block_constant_truth() {
        let coarse = smooth_matrix(16, 3, 0.7);
        let v = SpatialOperator::replicate_up(2, (4, 4)).unwrap();
        let b = SpatialOperator::block_mean_down(2, (8, 8)).unwrap();
        let x = v.apply(&coarse).unwrap();
        let a = DMatrix::from_column_slice(3, 1, &[0.25, 0.5, 0.25]);
        let y = &x * &a;
        let z = b.apply(&x).unwrap();
        let a_inv = RowDVector::from_vec(vec![2.0, 1.0, -1.0]); // arbitrary
        let dev = total_error_check(&x, &y, &z, &b, &v, &assumed(a), &a_inv).unwrap();
        assert!(dev <= 1e-10);
    }
}
