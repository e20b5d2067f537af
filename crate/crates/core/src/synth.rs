//! Synthetic degradation protocol and the fusion-method ablation grid.
//!
//! A reference cube is degraded into a (pan, ms) pair (weighted band sum
//! for the pan, block-mean down-sampling for the ms) so the reference
//! doubles as ground truth. The ablation runs every fusion method with and
//! without the down-sampling enhancement and reports the full metric set
//! per row.

use std::path::Path;

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimation::{self, ResponseSource, SpectralResponse};
use crate::fusion::{self, FusionMethod, FusionResult};
use crate::linalg;
use crate::metrics::{self, MetricReport};
use crate::prior::{self, PriorBox};
use crate::raster::{CubePair, RasterCube};
use crate::sampling::{self, SpatialOperator};

/// How the pan image is synthesized from the reference bands.
#[derive(Debug, Clone)]
pub enum PanWeights {
    Equal,
    Explicit(Vec<f64>),
}

/// Parameters of the degradation protocol.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub scale: usize,
    pub weights: PanWeights,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            scale: 2,
            weights: PanWeights::Equal,
            seed: 0,
        }
    }
}

/// Which up-sampler realizes the right inverse of the down-sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsamplerKind {
    /// Exact right inverse of the block mean.
    Replicate,
    /// Deliberately mismatched; produces nonzero spectral residual.
    Bilinear,
}

impl UpsamplerKind {
    pub fn build(self, scale: usize, coarse_shape: (usize, usize)) -> Result<SpatialOperator> {
        match self {
            UpsamplerKind::Replicate => SpatialOperator::replicate_up(scale, coarse_shape),
            UpsamplerKind::Bilinear => SpatialOperator::bilinear_up(scale, coarse_shape),
        }
    }
}

/// One row of the ablation grid.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub method: FusionMethod,
    pub dse: bool,
    pub metrics: MetricReport,
}

/// Options for [`run_ablation`].
#[derive(Debug, Clone)]
pub struct AblationConfig {
    pub prior: PriorBox,
    pub upsampler: UpsamplerKind,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            prior: PriorBox::default(),
            upsampler: UpsamplerKind::Replicate,
        }
    }
}

/// Degrades a reference cube into `(pan, ms, true_response)`.
///
/// The pan is the weighted band sum (`Equal` gives every band `1/S`); the ms
/// is the block mean at the requested scale.
pub fn generate_pair(
    x: &RasterCube,
    spec: &SynthSpec,
) -> Result<(RasterCube, RasterCube, DVector<f64>)> {
    if spec.scale < 2 {
        return Err(Error::InvalidDimensions(format!(
            "degradation scale must be at least 2, got {}",
            spec.scale
        )));
    }
    let bands = x.bands();
    let a_true = match &spec.weights {
        PanWeights::Equal => DVector::from_element(bands, 1.0 / bands as f64),
        PanWeights::Explicit(w) => {
            if w.len() != bands {
                return Err(Error::ShapeMismatch(format!(
                    "{} weights for a {bands}-band cube",
                    w.len()
                )));
            }
            DVector::from_column_slice(w)
        }
    };
    let xm = x.to_matrix();
    let y = &xm * &a_true;
    let pan = RasterCube::from_planar(x.height(), x.width(), 1, y.as_slice().to_vec())?;
    let down = SpatialOperator::block_mean_down(spec.scale, (x.height(), x.width()))?;
    let z = down.apply(&xm)?;
    let ms = RasterCube::from_matrix(x.height() / spec.scale, x.width() / spec.scale, &z)?;
    Ok((pan, ms, a_true))
}

/// Seeded reference cube: per-band sums of low-frequency sinusoids plus a
/// little noise, so covariances stay well conditioned.
pub fn synthetic_cube(height: usize, width: usize, bands: usize, seed: u64) -> Result<RasterCube> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = height * width;
    let mut data = Vec::with_capacity(pixels * bands);
    for _ in 0..bands {
        let offset: f64 = rng.gen_range(80.0..160.0);
        let waves: Vec<(f64, f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    rng.gen_range(0.5..4.0),
                    rng.gen_range(0.5..4.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(5.0..25.0),
                )
            })
            .collect();
        let noise_amp: f64 = rng.gen_range(0.5..2.0);
        for row in 0..height {
            for col in 0..width {
                let (u, v) = (col as f64 / width as f64, row as f64 / height as f64);
                let mut s = offset;
                for &(fu, fv, phase, amp) in &waves {
                    s += amp * (std::f64::consts::TAU * (fu * u + fv * v) + phase).sin();
                }
                s += noise_amp * (rng.gen::<f64>() - 0.5);
                data.push(s);
            }
        }
    }
    // synthetic_cube fills plane by plane, matching the planar layout
    RasterCube::from_planar(height, width, bands, data)
}

struct FusionContext {
    y: DMatrix<f64>,
    z: DMatrix<f64>,
    b: SpatialOperator,
    v: SpatialOperator,
    response: SpectralResponse,
    consistent: f64,
    prior: PriorBox,
}

impl FusionContext {
    fn fuse(&self, method: FusionMethod) -> Result<FusionResult> {
        match method {
            FusionMethod::MtfGlpCbd => {
                fusion::fuse_mtf_glp_cbd(&self.y, &self.z, &self.b, &self.v, &self.response)
            }
            FusionMethod::Gsa => fusion::fuse_gsa(&self.y, &self.z, &self.v, &self.response),
            FusionMethod::Pcs => {
                let m = self.prior_row()?;
                fusion::fuse_pcs(&self.y, &self.z, &self.v, &self.response, &m)
            }
            FusionMethod::Pmra => {
                let m = self.prior_row()?;
                fusion::fuse_pmra(&self.y, &self.z, &self.b, &self.v, &self.response, &m)
            }
        }
    }

    fn prior_row(&self) -> Result<RowDVector<f64>> {
        let a_col = DVector::from_column_slice(self.response.a.as_slice());
        Ok(prior::solve_prior_inverse(&a_col, &self.prior)?.m)
    }
}

/// Runs `{cbd, gsa, pcs, pmra} x {plain, dse}` and collects metrics, ordered
/// by `(method, dse)`.
///
/// The response estimate is shared within each configuration, and the
/// consistency metric, which depends only on the configuration and not
/// the method, is computed once and copied into each row.
pub fn run_ablation(
    pair: &CubePair,
    cfg: &AblationConfig,
    truth: Option<&RasterCube>,
) -> Result<Vec<AblationRow>> {
    let scale = pair.scale;
    let fine_shape = (pair.pan.height(), pair.pan.width());
    let coarse_shape = (pair.ms.height(), pair.ms.width());
    let y = pair.pan.to_matrix();
    let z = pair.ms.to_matrix();
    let truth_m = truth.map(|t| t.to_matrix());
    let v = cfg.upsampler.build(scale, coarse_shape)?;
    let bhat = SpatialOperator::block_mean_down(scale, fine_shape)?;

    let (z_pinv, z_full_rank) = linalg::pinv_auto(&z)?;
    let a = estimation::estimate_a_with_pinv(&y, &z_pinv, &bhat)?;

    let mut contexts = Vec::with_capacity(2);
    for dse in [false, true] {
        let (b, source) = if dse {
            (
                sampling::dse_wrap_with_pinv(bhat.clone(), z.clone(), z_pinv.clone(), z_full_rank)?,
                ResponseSource::EstimatedDse,
            )
        } else {
            (bhat.clone(), ResponseSource::EstimatedLsq)
        };
        let response = SpectralResponse {
            a: a.clone(),
            source,
        };
        let consistent = metrics::consistent_rmse(&z, &response.a, &b, &y)?;
        contexts.push((
            dse,
            FusionContext {
                y: y.clone(),
                z: z.clone(),
                b,
                v: v.clone(),
                response,
                consistent,
                prior: cfg.prior,
            },
        ));
    }

    let methods = [
        FusionMethod::MtfGlpCbd,
        FusionMethod::Gsa,
        FusionMethod::Pcs,
        FusionMethod::Pmra,
    ];
    let mut rows = Vec::with_capacity(methods.len() * 2);
    for method in methods {
        for (dse, ctx) in &contexts {
            let mut result = ctx.fuse(method)?;
            result.dse = *dse;
            let x_rec = result.matrix();
            let a_inv_m =
                DMatrix::from_row_slice(1, result.a_inv_used.len(), result.a_inv_used.as_slice());
            let report = MetricReport {
                consistent_rmse: ctx.consistent,
                spatial_rmse: metrics::spatial_rmse(&x_rec, &ctx.response.a, &ctx.y)?,
                spectral_rmse: metrics::spectral_rmse(&ctx.b, &x_rec, &ctx.z)?,
                inverse_ability: metrics::inverse_ability(&a_inv_m, &ctx.response.a)?,
                rmse: match &truth_m {
                    Some(t) => Some(metrics::rmse(t, &x_rec)?),
                    None => None,
                },
            };
            rows.push(AblationRow {
                method,
                dse: *dse,
                metrics: report,
            });
        }
    }
    Ok(rows)
}

/// Writes an 8-bit RGB preview of three bands with a 2nd-98th percentile
/// stretch per band. Constant bands render mid-gray.
pub fn render_composite(x: &RasterCube, band_indices: [usize; 3], out_path: &Path) -> Result<()> {
    let selected = x.band_select(&band_indices)?;
    let pixels = selected.pixels();
    let mut channels = Vec::with_capacity(3);
    for b in 0..3 {
        let plane = &selected.as_planar()[b * pixels..(b + 1) * pixels];
        let (lo, hi) = percentile_window(plane, 2.0, 98.0);
        let stretched: Vec<u8> = plane
            .iter()
            .map(|&v| {
                if hi > lo {
                    (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8
                } else {
                    128
                }
            })
            .collect();
        channels.push(stretched);
    }
    let mut buf = Vec::with_capacity(pixels * 3);
    for p in 0..pixels {
        for chan in &channels {
            buf.push(chan[p]);
        }
    }
    let img = image::RgbImage::from_raw(x.width() as u32, x.height() as u32, buf)
        .expect("buffer sized from cube dimensions");
    img.save(out_path)
        .map_err(|e| Error::ImageEncode(e.to_string()))
}

/// Linear-interpolation percentiles of a sample, as a `(low, high)` window.
pub fn percentile_window(values: &[f64], low_pct: f64, high_pct: f64) -> (f64, f64) {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let pick = |pct: f64| -> f64 {
        if sorted.len() == 1 {
            return sorted[0];
        }
        let pos = pct / 100.0 * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    (pick(low_pct), pick(high_pct))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_cube_degrades_to_constants() {
        let x = RasterCube::constant(4, 4, 3, 7.5).unwrap();
        let (pan, ms, a) = generate_pair(&x, &SynthSpec::default()).unwrap();
        assert!(pan.as_planar().iter().all(|&v| (v - 7.5).abs() <= 1e-12));
        assert!(ms.as_planar().iter().all(|&v| (v - 7.5).abs() <= 1e-12));
        assert!((a.sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn hand_worked_two_band_example() {
        // bands [[1,2],[3,4]] and [[5,6],[7,8]]
        let x =
            RasterCube::from_planar(2, 2, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let (pan, ms, _) = generate_pair(&x, &SynthSpec::default()).unwrap();
        assert_eq!(pan.as_planar(), &[3.0, 4.0, 5.0, 6.0]);
        assert_eq!(ms.height(), 1);
        assert_eq!(ms.as_planar(), &[2.5, 6.5]);
    }

    #[test]
    fn equal_weights_commute_with_block_mean() {
        let x = synthetic_cube(16, 16, 5, 42).unwrap();
        let (pan, ms, a_true) = generate_pair(&x, &SynthSpec::default()).unwrap();
        let b = SpatialOperator::block_mean_down(2, (16, 16)).unwrap();
        let by = b.apply(&pan.to_matrix()).unwrap();
        let za = ms.to_matrix() * &a_true;
        // mean of band means equals band mean of means, up to rounding
        assert!((by - za).amax() <= 1e-10);
    }

    #[test]
    fn estimation_recovers_true_weights() {
        let x = synthetic_cube(16, 16, 4, 9).unwrap();
        let (pan, ms, a_true) = generate_pair(&x, &SynthSpec::default()).unwrap();
        let bhat = SpatialOperator::block_mean_down(2, (16, 16)).unwrap();
        let est = estimation::estimate_a_dse(&pan.to_matrix(), &ms.to_matrix(), &bhat).unwrap();
        assert!((est.a - DMatrix::from_column_slice(4, 1, a_true.as_slice())).amax() <= 1e-8);
    }

    #[test]
    fn ablation_dse_rows_are_exactly_consistent() {
        let x = synthetic_cube(16, 16, 4, 5).unwrap();
        let (pan, ms, _) = generate_pair(&x, &SynthSpec::default()).unwrap();
        let pair = CubePair::infer(pan, ms).unwrap();
        let rows = run_ablation(&pair, &AblationConfig::default(), Some(&x)).unwrap();
        assert_eq!(rows.len(), 8);
        for row in rows.iter().filter(|r| r.dse) {
            assert_eq!(row.metrics.consistent_rmse, 0.0, "{:?}", row.method);
        }
        // rmse present because truth was supplied
        assert!(rows.iter().all(|r| r.metrics.rmse.is_some()));
    }

    #[test]
    fn ablation_plain_rows_share_consistency() {
        let x = synthetic_cube(16, 16, 3, 11).unwrap();
        let (pan, ms, _) = generate_pair(&x, &SynthSpec::default()).unwrap();
        let pair = CubePair::infer(pan, ms).unwrap();
        let rows = run_ablation(&pair, &AblationConfig::default(), None).unwrap();
        let plain: Vec<_> = rows.iter().filter(|r| !r.dse).collect();
        assert_eq!(plain.len(), 4);
        for r in &plain {
            assert_eq!(r.metrics.consistent_rmse, plain[0].metrics.consistent_rmse);
            assert!(r.metrics.rmse.is_none());
        }
    }

    #[test]
    fn ablation_dse_pcs_equals_pmra() {
        let x = synthetic_cube(16, 16, 4, 21).unwrap();
        let (pan, ms, _) = generate_pair(&x, &SynthSpec::default()).unwrap();
        let pair = CubePair::infer(pan, ms).unwrap();
        let rows = run_ablation(&pair, &AblationConfig::default(), Some(&x)).unwrap();
        let pick = |m: FusionMethod, dse: bool| {
            rows.iter()
                .find(|r| r.method == m && r.dse == dse)
                .unwrap()
                .metrics
                .clone()
        };
        let pcs = pick(FusionMethod::Pcs, true);
        let pmra = pick(FusionMethod::Pmra, true);
        assert!((pcs.rmse.unwrap() - pmra.rmse.unwrap()).abs() <= 1e-10);
        assert!((pcs.spatial_rmse - pmra.spatial_rmse).abs() <= 1e-10);
    }

    #[test]
    fn percentile_window_on_linear_ramp() {
        let values: Vec<f64> = (0..256).map(|v| v as f64).collect();
        let (lo, hi) = percentile_window(&values, 2.0, 98.0);
        assert!((lo - 5.1).abs() <= 1e-9);
        assert!((hi - 249.9).abs() <= 1e-9);
    }

    #[test]
    fn render_constant_cube_is_uniform_gray() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.png");
        let x = RasterCube::constant(4, 4, 3, 55.0).unwrap();
        render_composite(&x, [0, 1, 2], &path).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), (4, 4));
        assert!(img.pixels().all(|p| p.0 == [128, 128, 128]));
    }

    #[test]
    fn render_picks_requested_bands() {
        let x = synthetic_cube(8, 6, 10, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bands.png");
        render_composite(&x, [9, 4, 0], &path).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), (6, 8));
    }
}
