//! Spatial response operators: structural down-samplers and up-samplers.
//!
//! Operators act on pixel matrices of shape `(pixels x bands)` and are kept
//! structural in the fusion path; a full `(out_pixels x in_pixels)` matrix is
//! only ever materialized for desk-scale oracle checks.
//!
//! The block-mean / replicate pair satisfies `down ∘ up = identity`, which the
//! prior fusion algorithms rely on. Bilinear up-sampling deliberately breaks
//! that pairing and exists to reproduce the mismatch between down- and
//! up-sampling that shows up as nonzero spectral residual.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Entry cap for [`SpatialOperator::materialize`]: `out_pixels * in_pixels`.
pub const DEFAULT_MATERIALIZE_CAP: usize = 1 << 20;

/// A linear map between pixel grids, applied per band column.
#[derive(Debug, Clone)]
pub enum SpatialOperator {
    /// Averages each `scale x scale` block; `in_shape` is the fine grid.
    BlockMeanDown {
        scale: usize,
        in_shape: (usize, usize),
    },
    /// Copies each coarse pixel into a `scale x scale` block.
    ReplicateUp {
        scale: usize,
        in_shape: (usize, usize),
    },
    /// Bilinear interpolation with half-pixel alignment and edge clamping.
    BilinearUp {
        scale: usize,
        in_shape: (usize, usize),
    },
    /// A down-sampler re-projected onto the column space of `z`:
    /// `x ↦ z · (z_pinv · inner(x))`.
    DseWrapped {
        inner: Box<SpatialOperator>,
        z: DMatrix<f64>,
        z_pinv: DMatrix<f64>,
        /// False when `z` needed the SVD fallback instead of the
        /// normal-equations pseudoinverse.
        z_full_rank: bool,
    },
    /// Arbitrary dense operator, for tests and user-supplied responses.
    Explicit {
        matrix: DMatrix<f64>,
        in_shape: (usize, usize),
        out_shape: (usize, usize),
    },
}

impl SpatialOperator {
    /// Block-mean down-sampler on an `in_shape` grid divisible by `scale`.
    pub fn block_mean_down(scale: usize, in_shape: (usize, usize)) -> Result<Self> {
        check_divisible(scale, in_shape)?;
        Ok(SpatialOperator::BlockMeanDown { scale, in_shape })
    }

    /// Replicating up-sampler from a coarse `in_shape` grid.
    pub fn replicate_up(scale: usize, in_shape: (usize, usize)) -> Result<Self> {
        check_scale(scale, in_shape)?;
        Ok(SpatialOperator::ReplicateUp { scale, in_shape })
    }

    /// Bilinear up-sampler from a coarse `in_shape` grid.
    pub fn bilinear_up(scale: usize, in_shape: (usize, usize)) -> Result<Self> {
        check_scale(scale, in_shape)?;
        Ok(SpatialOperator::BilinearUp { scale, in_shape })
    }

    /// Wraps a dense matrix as an operator.
    pub fn explicit(
        matrix: DMatrix<f64>,
        in_shape: (usize, usize),
        out_shape: (usize, usize),
    ) -> Result<Self> {
        if matrix.nrows() != out_shape.0 * out_shape.1 || matrix.ncols() != in_shape.0 * in_shape.1
        {
            return Err(Error::ShapeMismatch(format!(
                "explicit operator is {}x{}, expected {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                out_shape.0 * out_shape.1,
                in_shape.0 * in_shape.1
            )));
        }
        Ok(SpatialOperator::Explicit {
            matrix,
            in_shape,
            out_shape,
        })
    }

    pub fn in_shape(&self) -> (usize, usize) {
        match self {
            SpatialOperator::BlockMeanDown { in_shape, .. }
            | SpatialOperator::ReplicateUp { in_shape, .. }
            | SpatialOperator::BilinearUp { in_shape, .. }
            | SpatialOperator::Explicit { in_shape, .. } => *in_shape,
            SpatialOperator::DseWrapped { inner, .. } => inner.in_shape(),
        }
    }

    pub fn out_shape(&self) -> (usize, usize) {
        match self {
            SpatialOperator::BlockMeanDown { scale, in_shape } => {
                (in_shape.0 / scale, in_shape.1 / scale)
            }
            SpatialOperator::ReplicateUp { scale, in_shape }
            | SpatialOperator::BilinearUp { scale, in_shape } => {
                (in_shape.0 * scale, in_shape.1 * scale)
            }
            SpatialOperator::DseWrapped { inner, .. } => inner.out_shape(),
            SpatialOperator::Explicit { out_shape, .. } => *out_shape,
        }
    }

    pub fn in_pixels(&self) -> usize {
        let (h, w) = self.in_shape();
        h * w
    }

    pub fn out_pixels(&self) -> usize {
        let (h, w) = self.out_shape();
        h * w
    }

    /// Applies the operator to every band column of `image`.
    pub fn apply(&self, image: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if image.nrows() != self.in_pixels() {
            return Err(Error::ShapeMismatch(format!(
                "image has {} pixels, operator expects {}",
                image.nrows(),
                self.in_pixels()
            )));
        }
        Ok(match self {
            SpatialOperator::BlockMeanDown { scale, in_shape } => {
                block_mean(*scale, *in_shape, image)
            }
            SpatialOperator::ReplicateUp { scale, in_shape } => replicate(*scale, *in_shape, image),
            SpatialOperator::BilinearUp { scale, in_shape } => bilinear(*scale, *in_shape, image),
            SpatialOperator::DseWrapped {
                inner, z, z_pinv, ..
            } => {
                let coarse = inner.apply(image)?;
                z * (z_pinv * coarse)
            }
            SpatialOperator::Explicit { matrix, .. } => matrix * image,
        })
    }

    /// Dense matrix `D` with `apply(x) = D x`, for oracle tests.
    pub fn materialize(&self) -> Result<DMatrix<f64>> {
        self.materialize_with_cap(DEFAULT_MATERIALIZE_CAP)
    }

    pub fn materialize_with_cap(&self, cap: usize) -> Result<DMatrix<f64>> {
        let entries = self.out_pixels() * self.in_pixels();
        if entries > cap {
            return Err(Error::CapExceeded { entries, cap });
        }
        Ok(match self {
            SpatialOperator::BlockMeanDown { scale, in_shape } => {
                let (out_h, out_w) = self.out_shape();
                let weight = 1.0 / (scale * scale) as f64;
                let mut d = DMatrix::zeros(out_h * out_w, self.in_pixels());
                for oy in 0..out_h {
                    for ox in 0..out_w {
                        let row = oy * out_w + ox;
                        for dy in 0..*scale {
                            for dx in 0..*scale {
                                let col = (oy * scale + dy) * in_shape.1 + ox * scale + dx;
                                d[(row, col)] = weight;
                            }
                        }
                    }
                }
                d
            }
            SpatialOperator::ReplicateUp { scale, in_shape } => {
                let (out_h, out_w) = self.out_shape();
                let mut d = DMatrix::zeros(out_h * out_w, self.in_pixels());
                for oy in 0..out_h {
                    for ox in 0..out_w {
                        let col = (oy / scale) * in_shape.1 + ox / scale;
                        d[(oy * out_w + ox, col)] = 1.0;
                    }
                }
                d
            }
            SpatialOperator::BilinearUp { scale, in_shape } => {
                let (out_h, out_w) = self.out_shape();
                let mut d = DMatrix::zeros(out_h * out_w, self.in_pixels());
                for oy in 0..out_h {
                    for ox in 0..out_w {
                        let row = oy * out_w + ox;
                        for (col, weight) in bilinear_taps(*scale, *in_shape, oy, ox) {
                            d[(row, col)] += weight;
                        }
                    }
                }
                d
            }
            SpatialOperator::DseWrapped {
                inner, z, z_pinv, ..
            } => z * (z_pinv * inner.materialize_with_cap(cap)?),
            SpatialOperator::Explicit { matrix, .. } => matrix.clone(),
        })
    }
}

/// Re-projects the output of a down-sampler onto the column space of `z`.
///
/// The wrapped operator computes `z · (z_pinv · bhat(x))`, so the response it
/// realizes and the spectral estimate `z_pinv · bhat(y)` agree by
/// construction. Prefers the normal-equations pseudoinverse of `z` and falls
/// back to the SVD route when `z` is rank deficient.
pub fn dse_wrap(bhat: SpatialOperator, z: &DMatrix<f64>) -> Result<SpatialOperator> {
    let (z_pinv, z_full_rank) = linalg::pinv_auto(z)?;
    dse_wrap_with_pinv(bhat, z.clone(), z_pinv, z_full_rank)
}

/// Like [`dse_wrap`], with a caller-supplied pseudoinverse of `z`.
///
/// Sharing one pseudoinverse between the response estimate and the wrapped
/// operator keeps the consistency residual at exactly zero.
pub fn dse_wrap_with_pinv(
    bhat: SpatialOperator,
    z: DMatrix<f64>,
    z_pinv: DMatrix<f64>,
    z_full_rank: bool,
) -> Result<SpatialOperator> {
    if bhat.out_pixels() != z.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "down-sampler yields {} pixels but z has {} rows",
            bhat.out_pixels(),
            z.nrows()
        )));
    }
    if z_pinv.shape() != (z.ncols(), z.nrows()) {
        return Err(Error::ShapeMismatch(format!(
            "z_pinv is {}x{}, expected {}x{}",
            z_pinv.nrows(),
            z_pinv.ncols(),
            z.ncols(),
            z.nrows()
        )));
    }
    Ok(SpatialOperator::DseWrapped {
        inner: Box::new(bhat),
        z,
        z_pinv,
        z_full_rank,
    })
}

fn check_scale(scale: usize, in_shape: (usize, usize)) -> Result<()> {
    if scale == 0 {
        return Err(Error::InvalidDimensions("scale must be positive".into()));
    }
    if in_shape.0 == 0 || in_shape.1 == 0 {
        return Err(Error::InvalidDimensions(
            "operator grid must be non-empty".into(),
        ));
    }
    Ok(())
}

fn check_divisible(scale: usize, in_shape: (usize, usize)) -> Result<()> {
    check_scale(scale, in_shape)?;
    if !in_shape.0.is_multiple_of(scale) || !in_shape.1.is_multiple_of(scale) {
        return Err(Error::InvalidDimensions(format!(
            "grid {}x{} is not divisible by scale {scale}; pad-free operation requires exact tiling",
            in_shape.0, in_shape.1
        )));
    }
    Ok(())
}

fn block_mean(scale: usize, in_shape: (usize, usize), image: &DMatrix<f64>) -> DMatrix<f64> {
    let (in_h, in_w) = in_shape;
    let (out_h, out_w) = (in_h / scale, in_w / scale);
    let norm = 1.0 / (scale * scale) as f64;
    let mut out = DMatrix::zeros(out_h * out_w, image.ncols());
    for band in 0..image.ncols() {
        let col = image.column(band);
        for oy in 0..out_h {
            for ox in 0..out_w {
                // fixed row-major accumulation order within the block
                let mut sum = 0.0;
                for dy in 0..scale {
                    for dx in 0..scale {
                        sum += col[(oy * scale + dy) * in_w + ox * scale + dx];
                    }
                }
                out[(oy * out_w + ox, band)] = sum * norm;
            }
        }
    }
    out
}

fn replicate(scale: usize, in_shape: (usize, usize), image: &DMatrix<f64>) -> DMatrix<f64> {
    let (in_h, in_w) = in_shape;
    let (out_h, out_w) = (in_h * scale, in_w * scale);
    let mut out = DMatrix::zeros(out_h * out_w, image.ncols());
    for band in 0..image.ncols() {
        let col = image.column(band);
        for oy in 0..out_h {
            for ox in 0..out_w {
                out[(oy * out_w + ox, band)] = col[(oy / scale) * in_w + ox / scale];
            }
        }
    }
    out
}

fn bilinear(scale: usize, in_shape: (usize, usize), image: &DMatrix<f64>) -> DMatrix<f64> {
    let (out_h, out_w) = (in_shape.0 * scale, in_shape.1 * scale);
    let mut out = DMatrix::zeros(out_h * out_w, image.ncols());
    for band in 0..image.ncols() {
        let col = image.column(band);
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut v = 0.0;
                for (idx, weight) in bilinear_taps(scale, in_shape, oy, ox) {
                    v += weight * col[idx];
                }
                out[(oy * out_w + ox, band)] = v;
            }
        }
    }
    out
}

/// Up to four (source index, weight) taps for one fine pixel, half-pixel
/// aligned and clamped at the borders. Weights sum to one.
fn bilinear_taps(
    scale: usize,
    in_shape: (usize, usize),
    oy: usize,
    ox: usize,
) -> impl Iterator<Item = (usize, f64)> {
    let (in_h, in_w) = in_shape;
    let map = |o: usize, n: usize| -> (usize, usize, f64) {
        let s = (o as f64 + 0.5) / scale as f64 - 0.5;
        let s = s.clamp(0.0, (n - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        (lo, hi, s - lo as f64)
    };
    let (y0, y1, fy) = map(oy, in_h);
    let (x0, x1, fx) = map(ox, in_w);
    [
        (y0 * in_w + x0, (1.0 - fy) * (1.0 - fx)),
        (y0 * in_w + x1, (1.0 - fy) * fx),
        (y1 * in_w + x0, fy * (1.0 - fx)),
        (y1 * in_w + x1, fy * fx),
    ]
    .into_iter()
    .filter(|(_, w)| *w != 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, DVector};

    #[test]
    fn block_mean_of_quad() {
        let op = SpatialOperator::block_mean_down(2, (2, 2)).unwrap();
        let img = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let out = op.apply(&img).unwrap();
        assert_eq!(out.shape(), (1, 1));
        assert_eq!(out[(0, 0)], 2.5);
    }

    #[test]
    fn replicate_single_pixel() {
        let op = SpatialOperator::replicate_up(2, (1, 1)).unwrap();
        let img = DMatrix::from_column_slice(1, 1, &[7.0]);
        let out = op.apply(&img).unwrap();
        assert_eq!(out.shape(), (4, 1));
        assert!(out.iter().all(|&v| v == 7.0));
    }

    #[test]
    fn down_after_up_is_identity() {
        let up = SpatialOperator::replicate_up(2, (3, 3)).unwrap();
        let down = SpatialOperator::block_mean_down(2, (6, 6)).unwrap();
        let img = DMatrix::from_fn(9, 2, |r, c| ((r * 7 + c * 13) % 11) as f64 - 3.0);
        let round = down.apply(&up.apply(&img).unwrap()).unwrap();
        assert!((&round - &img).amax() <= 1e-12);
    }

    #[test]
    fn materialized_down_up_product_is_identity() {
        for (scale, shape) in [(2usize, (2usize, 3usize)), (3, (2, 2)), (4, (1, 2))] {
            let up = SpatialOperator::replicate_up(scale, shape).unwrap();
            let hi = (shape.0 * scale, shape.1 * scale);
            let down = SpatialOperator::block_mean_down(scale, hi).unwrap();
            let product = down.materialize().unwrap() * up.materialize().unwrap();
            let eye = DMatrix::<f64>::identity(shape.0 * shape.1, shape.0 * shape.1);
            assert!((product - eye).amax() <= 1e-12, "scale {scale}");
        }
    }

    #[test]
    fn materialize_matches_spec_examples() {
        let up = SpatialOperator::replicate_up(2, (1, 1)).unwrap();
        assert_eq!(
            up.materialize().unwrap(),
            DMatrix::from_column_slice(4, 1, &[1.0; 4])
        );
        let down = SpatialOperator::block_mean_down(2, (2, 2)).unwrap();
        assert_eq!(
            down.materialize().unwrap(),
            DMatrix::from_row_slice(1, 4, &[0.25; 4])
        );
    }

    #[test]
    fn materialize_agrees_with_apply_on_probes() {
        let ops = [
            SpatialOperator::block_mean_down(2, (4, 6)).unwrap(),
            SpatialOperator::replicate_up(3, (2, 2)).unwrap(),
            SpatialOperator::bilinear_up(2, (3, 3)).unwrap(),
        ];
        for op in &ops {
            let d = op.materialize().unwrap();
            for k in 0..3u32 {
                let probe = DVector::from_fn(op.in_pixels(), |i, _| {
                    ((i as f64 + 1.3) * (k as f64 + 0.7)).sin()
                });
                let probe_m = DMatrix::from_column_slice(op.in_pixels(), 1, probe.as_slice());
                let via_apply = op.apply(&probe_m).unwrap();
                let via_dense = &d * &probe_m;
                assert!((via_apply - via_dense).amax() <= 1e-10);
            }
        }
    }

    #[test]
    fn apply_is_linear() {
        let op = SpatialOperator::bilinear_up(2, (3, 4)).unwrap();
        let x = DMatrix::from_fn(12, 1, |r, _| (r as f64 * 0.37).cos());
        let y = DMatrix::from_fn(12, 1, |r, _| (r as f64 * 1.11).sin());
        let (alpha, beta) = (2.5, -0.75);
        let combined = op.apply(&(alpha * &x + beta * &y)).unwrap();
        let separate = alpha * op.apply(&x).unwrap() + beta * op.apply(&y).unwrap();
        assert!((combined - separate).amax() <= 1e-10);
    }

    #[test]
    fn dse_wrap_with_identity_z_matches_inner() {
        let bhat = SpatialOperator::block_mean_down(2, (4, 4)).unwrap();
        let z = DMatrix::<f64>::identity(4, 4);
        let wrapped = dse_wrap(bhat.clone(), &z).unwrap();
        let img = DMatrix::from_fn(16, 1, |r, _| (r as f64).sqrt());
        let a = wrapped.apply(&img).unwrap();
        let b = bhat.apply(&img).unwrap();
        assert!((a - b).amax() <= 1e-12);
    }

    #[test]
    fn dse_wrap_projects_onto_column_space() {
        // Orthonormal-column z: wrapped apply must equal q qᵀ bhat(x).
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let z = dmatrix![
            inv_sqrt2, 0.0;
            inv_sqrt2, 0.0;
            0.0, 1.0;
            0.0, 0.0
        ];
        let bhat = SpatialOperator::block_mean_down(2, (4, 4)).unwrap();
        let wrapped = dse_wrap(bhat.clone(), &z).unwrap();
        let img = DMatrix::from_fn(16, 2, |r, c| ((r + 2 * c) as f64 * 0.21).cos());
        let got = wrapped.apply(&img).unwrap();
        let projected = &z * (z.transpose() * bhat.apply(&img).unwrap());
        assert!((got - projected).amax() <= 1e-10);
    }

    #[test]
    fn dse_wrap_materialization_matches_dense_product() {
        let bhat = SpatialOperator::block_mean_down(2, (4, 4)).unwrap();
        let z = DMatrix::from_fn(4, 2, |r, c| ((r * 3 + c) as f64 * 0.61).sin() + 1.5);
        let wrapped = dse_wrap(bhat.clone(), &z).unwrap();
        let z_pinv = linalg::moore_penrose(&z, linalg::DEFAULT_SVD_RTOL).unwrap();
        let dense = &z * z_pinv * bhat.materialize().unwrap();
        assert!((wrapped.materialize().unwrap() - dense).amax() <= 1e-10);
    }

    #[test]
    fn bilinear_after_block_mean_is_not_identity() {
        // Known mismatch: the bilinear up-sampler is not a right inverse of
        // the block mean, so round-tripping moves non-constant images.
        let down = SpatialOperator::block_mean_down(2, (4, 4)).unwrap();
        let up = SpatialOperator::bilinear_up(2, (2, 2)).unwrap();
        let img = DMatrix::from_fn(16, 1, |r, _| (r * r) as f64);
        let round = down
            .apply(&up.apply(&down.apply(&img).unwrap()).unwrap())
            .unwrap();
        let direct = down.apply(&img).unwrap();
        assert!((round - direct).amax() > 1e-6);
    }

    #[test]
    fn cap_and_shape_errors() {
        let op = SpatialOperator::block_mean_down(2, (64, 64)).unwrap();
        assert!(matches!(
            op.materialize_with_cap(1000),
            Err(Error::CapExceeded { .. })
        ));
        let img = DMatrix::<f64>::zeros(5, 1);
        assert!(matches!(op.apply(&img), Err(Error::ShapeMismatch(_))));
        assert!(matches!(
            SpatialOperator::block_mean_down(2, (3, 4)),
            Err(Error::InvalidDimensions(_))
        ));
    }
}
