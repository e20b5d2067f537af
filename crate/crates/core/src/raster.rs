//! Multiband raster storage and its pixel-matrix view.
//!
//! A [`RasterCube`] stores samples in planar layout: band 0 for every pixel,
//! then band 1, and so on, pixels in row-major order within each plane. That
//! layout is exactly the column-major storage of the `(height*width) x bands`
//! pixel matrix, so the matrix view is a zero-copy reinterpretation.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};

use crate::error::{Error, Result};

/// Planar multiband image with a `(pixels x bands)` matrix view.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterCube {
    height: usize,
    width: usize,
    bands: usize,
    data: Vec<f64>,
}

impl RasterCube {
    /// Builds a cube from planar samples (band-contiguous, row-major pixels).
    ///
    /// Rejects empty dimensions, length mismatches, and non-finite samples.
    pub fn from_planar(height: usize, width: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::InvalidDimensions(format!(
                "cube dimensions must be positive, got {height}x{width}x{bands}"
            )));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|p| p.checked_mul(bands))
            .ok_or_else(|| Error::InvalidDimensions("cube size overflows usize".into()))?;
        if data.len() != expected {
            return Err(Error::InvalidDimensions(format!(
                "data length {} does not match {height}x{width}x{bands} = {expected}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "sample at planar offset {pos} is {}",
                data[pos]
            )));
        }
        Ok(Self {
            height,
            width,
            bands,
            data,
        })
    }

    /// Cube filled with a constant value.
    pub fn constant(height: usize, width: usize, bands: usize, value: f64) -> Result<Self> {
        Self::from_planar(height, width, bands, vec![value; height * width * bands])
    }

    /// Rebuilds a cube from its `(pixels x bands)` matrix view.
    pub fn from_matrix(height: usize, width: usize, m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "matrix has {} rows, expected {height}x{width} = {}",
                m.nrows(),
                height * width
            )));
        }
        Self::from_planar(height, width, m.ncols(), m.as_slice().to_vec())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Pixel count `height * width`.
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Planar samples, band-contiguous.
    pub fn as_planar(&self) -> &[f64] {
        &self.data
    }

    /// Zero-copy `(pixels x bands)` view; element `(p, b)` is band `b` of
    /// pixel `p` in row-major pixel order.
    pub fn as_matrix(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.pixels(), self.bands)
    }

    /// Mutable matrix view; writes land directly in the planar buffer.
    pub fn as_matrix_mut(&mut self) -> DMatrixViewMut<'_, f64> {
        let pixels = self.pixels();
        DMatrixViewMut::from_slice(&mut self.data, pixels, self.bands)
    }

    /// Owned copy of the matrix view.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.pixels(), self.bands, &self.data)
    }

    /// Sample of `band` at pixel `(row, col)`.
    pub fn get(&self, row: usize, col: usize, band: usize) -> f64 {
        debug_assert!(row < self.height && col < self.width && band < self.bands);
        self.data[band * self.pixels() + row * self.width + col]
    }

    /// Selects (and reorders) bands; `indices` may repeat.
    pub fn band_select(&self, indices: &[usize]) -> Result<RasterCube> {
        let pixels = self.pixels();
        let mut data = Vec::with_capacity(pixels * indices.len());
        for &b in indices {
            if b >= self.bands {
                return Err(Error::BandOutOfRange {
                    index: b,
                    bands: self.bands,
                });
            }
            data.extend_from_slice(&self.data[b * pixels..(b + 1) * pixels]);
        }
        RasterCube::from_planar(self.height, self.width, indices.len(), data)
    }
}

/// A panchromatic/multispectral pair sharing the same scene at scale ratio `r`.
#[derive(Debug, Clone)]
pub struct CubePair {
    pub pan: RasterCube,
    pub ms: RasterCube,
    pub scale: usize,
}

impl CubePair {
    /// Validates that the pan grid is exactly `scale` times the ms grid.
    pub fn new(pan: RasterCube, ms: RasterCube, scale: usize) -> Result<Self> {
        if scale < 2 {
            return Err(Error::InvalidDimensions(format!(
                "scale ratio must be at least 2, got {scale}"
            )));
        }
        if pan.height() != scale * ms.height() || pan.width() != scale * ms.width() {
            return Err(Error::ShapeMismatch(format!(
                "pan {}x{} is not {scale}x the ms grid {}x{}",
                pan.height(),
                pan.width(),
                ms.height(),
                ms.width()
            )));
        }
        Ok(Self { pan, ms, scale })
    }

    /// Infers the scale ratio from the grids.
    pub fn infer(pan: RasterCube, ms: RasterCube) -> Result<Self> {
        if ms.height() == 0 || !pan.height().is_multiple_of(ms.height()) {
            return Err(Error::ShapeMismatch(format!(
                "pan height {} is not a multiple of ms height {}",
                pan.height(),
                ms.height()
            )));
        }
        let scale = pan.height() / ms.height();
        Self::new(pan, ms, scale)
    }
}
