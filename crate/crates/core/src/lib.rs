//! Pan-sharpening through the algebra of generalized inverses.
//!
//! The coupled model is `y = x·a` (single-band pan from the unknown
//! high-resolution cube via the spectral response `a`) and `z = b(x)`
//! (low-resolution ms via the spatial response `b`). Fusion methods are
//! choices of generalized inverses for `a` and `b`:
//!
//! * [`fusion::fuse_pcs`] / [`fusion::fuse_gsa`]: component substitution,
//!   detail = pan minus synthetic pan;
//! * [`fusion::fuse_pmra`] / [`fusion::fuse_mtf_glp_cbd`]: multiresolution
//!   analysis, detail = pan minus low-passed pan.
//!
//! The down-sampling enhancement ([`sampling::dse_wrap`]) re-projects the
//! down-sampler onto the ms column space, which makes the model exactly
//! consistent and the CS/MRA routes identical. [`prior`] constrains the
//! spectral inverse to a physically plausible box, [`metrics`] scores runs,
//! and [`synth`] generates degradation experiments and the method-by-method
//! ablation grid.
//!
//! ```
//! use pansharp::raster::CubePair;
//! use pansharp::synth::{self, AblationConfig, SynthSpec};
//!
//! // degrade a seeded reference cube, then fuse it back every way
//! let truth = synth::synthetic_cube(16, 16, 4, 7)?;
//! let (pan, ms, _weights) = synth::generate_pair(&truth, &SynthSpec::default())?;
//! let pair = CubePair::infer(pan, ms)?;
//! let rows = synth::run_ablation(&pair, &AblationConfig::default(), Some(&truth))?;
//! for row in rows.iter().filter(|r| r.dse) {
//!     // the enhancement makes the model exactly consistent
//!     assert_eq!(row.metrics.consistent_rmse, 0.0);
//! }
//! # Ok::<(), pansharp::Error>(())
//! ```

pub mod error;
pub mod estimation;
pub mod fusion;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod prior;
pub mod raster;
pub mod sampling;
pub mod synth;

pub use error::{Error, Result};
pub use estimation::{ExistenceReport, ResponseSource, SpectralResponse};
pub use fusion::{FusionMethod, FusionResult};
pub use metrics::MetricReport;
pub use prior::{PriorBox, PriorInverse};
pub use raster::{CubePair, RasterCube};
pub use sampling::SpatialOperator;
pub use synth::{AblationConfig, AblationRow, PanWeights, SynthSpec, UpsamplerKind};
