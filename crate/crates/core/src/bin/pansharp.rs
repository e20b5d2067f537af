//! Command-line surface for the fusion pipeline.
//!
//! Every subcommand is a thin composition of library operations; no numerics
//! live here. Exit codes: 0 success, 1 usage, 2 data error, 3 numerical
//! degeneracy. Failures print one machine-readable line on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector, RowDVector};

use pansharp::error::Error;
use pansharp::estimation::{self, ResponseSource, SpectralResponse};
use pansharp::fusion::{self, FusionMethod, FusionResult};
use pansharp::io::{self, Dtype};
use pansharp::linalg;
use pansharp::metrics::{self, MetricReport};
use pansharp::prior::{self, PriorBox};
use pansharp::raster::CubePair;
use pansharp::sampling::{self, SpatialOperator};
use pansharp::synth::{self, AblationConfig, PanWeights, SynthSpec, UpsamplerKind};

#[derive(Parser)]
#[command(
    name = "pansharp",
    about = "Generalized-inverse pan-sharpening: estimation, fusion, metrics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Degrade a reference cube into a (pan, ms) pair
    Synth(SynthArgs),
    /// Estimate the spectral response and report solvability residuals
    Estimate(EstimateArgs),
    /// Fuse a (pan, ms) pair into a high-resolution cube
    Fuse(FuseArgs),
    /// Score a fused cube against its inputs (and optional ground truth)
    Metrics(MetricsArgs),
    /// Run every method with and without the down-sampling enhancement
    Ablate(AblateArgs),
    /// Write an 8-bit RGB preview of three bands
    Render(RenderArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Reference cube (sidecar raster)
    #[arg(long)]
    input: PathBuf,
    /// Down-sampling ratio
    #[arg(long, default_value_t = 2)]
    scale: usize,
    /// `equal` or comma-separated band weights
    #[arg(long, default_value = "equal")]
    weights: String,
    #[arg(long = "out-pan")]
    out_pan: PathBuf,
    #[arg(long = "out-ms")]
    out_ms: PathBuf,
    #[arg(long, value_enum, default_value_t = DtypeArg::F64)]
    dtype: DtypeArg,
    /// Saturate instead of failing when samples leave an integer dtype range
    #[arg(long)]
    clamp: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    pan: PathBuf,
    #[arg(long)]
    ms: PathBuf,
    /// Re-project the down-sampler onto the ms column space
    #[arg(long)]
    dse: bool,
    #[arg(long, value_enum, default_value_t = UpsamplerArg::Replicate)]
    upsampler: UpsamplerArg,
    /// Prior box `lower,upper` for the response inverse
    #[arg(long = "box", value_parser = parse_box, default_value = "0.9,1.4")]
    prior_box: PriorBox,
    /// Write the estimated response, one entry per line, full precision
    #[arg(long = "out-A")]
    out_a: Option<PathBuf>,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    pan: PathBuf,
    #[arg(long)]
    ms: PathBuf,
    #[arg(long)]
    dse: bool,
    #[arg(long = "box", value_parser = parse_box, default_value = "0.9,1.4")]
    prior_box: PriorBox,
    #[arg(long, value_enum, default_value_t = UpsamplerArg::Replicate)]
    upsampler: UpsamplerArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = DtypeArg::F64)]
    dtype: DtypeArg,
    #[arg(long)]
    clamp: bool,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    pan: PathBuf,
    #[arg(long)]
    ms: PathBuf,
    #[arg(long)]
    fused: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    dse: bool,
    #[arg(long, value_enum, default_value_t = UpsamplerArg::Replicate)]
    upsampler: UpsamplerArg,
    #[arg(long = "box", value_parser = parse_box, default_value = "0.9,1.4")]
    prior_box: PriorBox,
    /// Append one full-precision CSV row (with header when the file is new)
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    pan: PathBuf,
    #[arg(long)]
    ms: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = UpsamplerArg::Replicate)]
    upsampler: UpsamplerArg,
    #[arg(long = "box", value_parser = parse_box, default_value = "0.9,1.4")]
    prior_box: PriorBox,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    cube: PathBuf,
    /// Three 1-based band numbers, e.g. 60,40,21
    #[arg(long, value_parser = parse_bands)]
    bands: BandTriple,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Pcs,
    Pmra,
    Gsa,
    Cbd,
}

impl From<MethodArg> for FusionMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Pcs => FusionMethod::Pcs,
            MethodArg::Pmra => FusionMethod::Pmra,
            MethodArg::Gsa => FusionMethod::Gsa,
            MethodArg::Cbd => FusionMethod::MtfGlpCbd,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum UpsamplerArg {
    Replicate,
    Bilinear,
}

impl From<UpsamplerArg> for UpsamplerKind {
    fn from(u: UpsamplerArg) -> Self {
        match u {
            UpsamplerArg::Replicate => UpsamplerKind::Replicate,
            UpsamplerArg::Bilinear => UpsamplerKind::Bilinear,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
    U8,
    U16,
}

impl From<DtypeArg> for Dtype {
    fn from(d: DtypeArg) -> Self {
        match d {
            DtypeArg::F32 => Dtype::F32,
            DtypeArg::F64 => Dtype::F64,
            DtypeArg::U8 => Dtype::U8,
            DtypeArg::U16 => Dtype::U16,
        }
    }
}

#[derive(Clone, Copy)]
struct BandTriple([usize; 3]);

fn parse_box(s: &str) -> Result<PriorBox, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected `lower,upper`, got `{s}`"));
    }
    let lower: f64 = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
    let upper: f64 = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
    PriorBox::new(lower, upper).map_err(|e| e.to_string())
}

fn parse_bands(s: &str) -> Result<BandTriple, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three band numbers, got `{s}`"));
    }
    let mut out = [0usize; 3];
    for (slot, p) in out.iter_mut().zip(&parts) {
        let one_based: usize = p.trim().parse().map_err(|e| format!("{e}"))?;
        if one_based == 0 {
            return Err("band numbers are 1-based".to_string());
        }
        *slot = one_based - 1;
    }
    Ok(BandTriple(out))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not failures
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Fuse(args) => cmd_fuse(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Render(args) => cmd_render(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "pansharp: error kind={} code={}: {e}",
                e.kind(),
                e.exit_code()
            );
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Everything a fusion/metric run needs, with one pseudoinverse of the ms
/// matrix shared between the response estimate and the wrapped operator.
struct Pipeline {
    y: DMatrix<f64>,
    z: DMatrix<f64>,
    b: SpatialOperator,
    v: SpatialOperator,
    response: SpectralResponse,
}

fn build_pipeline(pair: &CubePair, dse: bool, upsampler: UpsamplerKind) -> Result<Pipeline, Error> {
    let fine = (pair.pan.height(), pair.pan.width());
    let coarse = (pair.ms.height(), pair.ms.width());
    let y = pair.pan.to_matrix();
    let z = pair.ms.to_matrix();
    let bhat = SpatialOperator::block_mean_down(pair.scale, fine)?;
    let v = upsampler.build(pair.scale, coarse)?;
    let (z_pinv, z_full_rank) = linalg::pinv_auto(&z)?;
    let a = estimation::estimate_a_with_pinv(&y, &z_pinv, &bhat)?;
    let (b, source) = if dse {
        (
            sampling::dse_wrap_with_pinv(bhat, z.clone(), z_pinv, z_full_rank)?,
            ResponseSource::EstimatedDse,
        )
    } else {
        (bhat, ResponseSource::EstimatedLsq)
    };
    Ok(Pipeline {
        y,
        z,
        b,
        v,
        response: SpectralResponse { a, source },
    })
}

fn load_pair(pan: &Path, ms: &Path) -> Result<CubePair, Error> {
    CubePair::infer(io::read_raster(pan)?, io::read_raster(ms)?)
}

fn response_column(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let cube = io::read_raster(&args.input)?;
    let weights = if args.weights.trim() == "equal" {
        PanWeights::Equal
    } else {
        let parsed: Result<Vec<f64>, _> = args
            .weights
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect();
        PanWeights::Explicit(parsed.map_err(|e| {
            Error::InvalidDimensions(format!("bad --weights `{}`: {e}", args.weights))
        })?)
    };
    let spec = SynthSpec {
        scale: args.scale,
        weights,
        seed: 0,
    };
    let (pan, ms, a_true) = synth::generate_pair(&cube, &spec)?;
    io::write_raster(&pan, &args.out_pan, args.dtype.into(), args.clamp)?;
    io::write_raster(&ms, &args.out_ms, args.dtype.into(), args.clamp)?;
    println!(
        "synth: {}x{}x{} -> pan {}x{} + ms {}x{}x{} (scale {})",
        cube.height(),
        cube.width(),
        cube.bands(),
        pan.height(),
        pan.width(),
        ms.height(),
        ms.width(),
        ms.bands(),
        args.scale
    );
    println!(
        "true response: [{}]",
        a_true
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), Error> {
    let pair = load_pair(&args.pan, &args.ms)?;
    let p = build_pipeline(&pair, args.dse, args.upsampler.into())?;
    let a_col = response_column(&p.response.a);
    let inverse = prior::solve_prior_inverse(&a_col, &args.prior_box)?;
    let a_inv = DMatrix::from_row_slice(1, inverse.m.len(), inverse.m.as_slice());
    let report = estimation::existence_check(
        &p.y,
        &p.z,
        &p.response.a,
        &p.b,
        &p.v,
        &a_inv,
        estimation::DEFAULT_EXISTENCE_TOL,
    )?;
    println!("estimated response (dse={}):", args.dse);
    for (k, v) in a_col.iter().enumerate() {
        println!("  band {:>3}: {v}", k + 1);
    }
    println!("prior inverse feasible: {}", inverse.feasible);
    println!("consistency residual:   {:.2}", report.consistency_residual);
    println!(
        "pan recoverability:     {:.2}",
        report.y_recoverable_residual
    );
    println!(
        "ms recoverability:      {:.2}",
        report.z_recoverable_residual
    );
    println!("solvable:               {}", report.solvable);
    if let Some(path) = &args.out_a {
        let text: String = a_col.iter().map(|v| format!("{v}\n")).collect();
        std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    Ok(())
}

/// Runs one method; the boolean reports whether the prior stayed inside its
/// box (always true for the weight-deriving methods).
fn run_method(
    p: &Pipeline,
    method: FusionMethod,
    prior_box: &PriorBox,
    dse: bool,
) -> Result<(FusionResult, bool), Error> {
    let mut prior_feasible = true;
    let mut result = match method {
        FusionMethod::Pcs | FusionMethod::Pmra => {
            let a_col = response_column(&p.response.a);
            let inverse = prior::solve_prior_inverse(&a_col, prior_box)?;
            prior_feasible = inverse.feasible;
            if method == FusionMethod::Pcs {
                fusion::fuse_pcs(&p.y, &p.z, &p.v, &p.response, &inverse.m)?
            } else {
                fusion::fuse_pmra(&p.y, &p.z, &p.b, &p.v, &p.response, &inverse.m)?
            }
        }
        FusionMethod::Gsa => fusion::fuse_gsa(&p.y, &p.z, &p.v, &p.response)?,
        FusionMethod::MtfGlpCbd => fusion::fuse_mtf_glp_cbd(&p.y, &p.z, &p.b, &p.v, &p.response)?,
    };
    result.dse = dse;
    Ok((result, prior_feasible))
}

fn score(
    p: &Pipeline,
    x_rec: &DMatrix<f64>,
    a_inv: &RowDVector<f64>,
    truth: Option<&DMatrix<f64>>,
) -> Result<MetricReport, Error> {
    let a_inv_m = DMatrix::from_row_slice(1, a_inv.len(), a_inv.as_slice());
    Ok(MetricReport {
        consistent_rmse: metrics::consistent_rmse(&p.z, &p.response.a, &p.b, &p.y)?,
        spatial_rmse: metrics::spatial_rmse(x_rec, &p.response.a, &p.y)?,
        spectral_rmse: metrics::spectral_rmse(&p.b, x_rec, &p.z)?,
        inverse_ability: metrics::inverse_ability(&a_inv_m, &p.response.a)?,
        rmse: truth.map(|t| metrics::rmse(t, x_rec)).transpose()?,
    })
}

fn print_report(report: &MetricReport) {
    println!("consistent rmse:  {:.2}", report.consistent_rmse);
    println!("spatial rmse:     {:.2}", report.spatial_rmse);
    println!("spectral rmse:    {:.2}", report.spectral_rmse);
    println!("inverse ability:  {:.2}", report.inverse_ability);
    if let Some(r) = report.rmse {
        println!("rmse:             {r:.2}");
    }
}

fn csv_row(method: FusionMethod, dse: bool, m: &MetricReport) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        method.name(),
        dse,
        m.consistent_rmse,
        m.spatial_rmse,
        m.spectral_rmse,
        m.inverse_ability,
        m.rmse.map(|v| v.to_string()).unwrap_or_default()
    )
}

const CSV_HEADER: &str =
    "method,dse,consistent_rmse,spatial_rmse,spectral_rmse,inverse_ability,rmse";

fn write_csv(path: &Path, rows: &[String]) -> Result<(), Error> {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_fuse(args: FuseArgs) -> Result<(), Error> {
    let pair = load_pair(&args.pan, &args.ms)?;
    let p = build_pipeline(&pair, args.dse, args.upsampler.into())?;
    let method: FusionMethod = args.method.into();
    let (result, prior_feasible) = run_method(&p, method, &args.prior_box, args.dse)?;
    if !prior_feasible {
        eprintln!(
            "pansharp: warning: prior box admits no inverse; proceeding with the equality-only solution"
        );
    }
    if result.a_inv_warning {
        eprintln!("pansharp: warning: response inverse deviates from a true generalized inverse");
    }
    io::write_raster(&result.cube, &args.out, args.dtype.into(), args.clamp)?;
    let report = score(&p, &result.matrix(), &result.a_inv_used, None)?;
    println!("method: {} (dse={})", method.name(), args.dse);
    print_report(&report);
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<(), Error> {
    let pair = load_pair(&args.pan, &args.ms)?;
    let fused = io::read_raster(&args.fused)?;
    if fused.height() != pair.pan.height()
        || fused.width() != pair.pan.width()
        || fused.bands() != pair.ms.bands()
    {
        return Err(Error::ShapeMismatch(format!(
            "fused cube is {}x{}x{}, expected {}x{}x{}",
            fused.height(),
            fused.width(),
            fused.bands(),
            pair.pan.height(),
            pair.pan.width(),
            pair.ms.bands()
        )));
    }
    let truth = args.truth.as_deref().map(io::read_raster).transpose()?;
    let p = build_pipeline(&pair, args.dse, args.upsampler.into())?;
    // inverse ability is reported for the prior inverse of the estimated
    // response; the fused cube itself carries no inverse
    let a_col = response_column(&p.response.a);
    let inverse = prior::solve_prior_inverse(&a_col, &args.prior_box)?;
    let truth_m = truth.as_ref().map(|t| t.to_matrix());
    let report = score(&p, &fused.to_matrix(), &inverse.m, truth_m.as_ref())?;
    print_report(&report);
    if let Some(path) = &args.csv {
        write_csv(
            path,
            &[format!(
                "{},{},{},{},{}",
                report.consistent_rmse,
                report.spatial_rmse,
                report.spectral_rmse,
                report.inverse_ability,
                report.rmse.map(|v| v.to_string()).unwrap_or_default()
            )],
        )?;
    }
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<(), Error> {
    let pair = load_pair(&args.pan, &args.ms)?;
    let truth = args.truth.as_deref().map(io::read_raster).transpose()?;
    let cfg = AblationConfig {
        prior: args.prior_box,
        upsampler: args.upsampler.into(),
    };
    let rows = synth::run_ablation(&pair, &cfg, truth.as_ref())?;
    println!(
        "{:<12} {:>4} {:>12} {:>10} {:>10} {:>6} {:>10}",
        "method", "dse", "consistent", "spatial", "spectral", "invab", "rmse"
    );
    for row in &rows {
        let m = &row.metrics;
        println!(
            "{:<12} {:>4} {:>12.2} {:>10.2} {:>10.2} {:>6.2} {:>10}",
            row.method.name(),
            if row.dse { "yes" } else { "no" },
            m.consistent_rmse,
            m.spatial_rmse,
            m.spectral_rmse,
            m.inverse_ability,
            m.rmse.map(|v| format!("{v:.2}")).unwrap_or_default()
        );
    }
    if let Some(path) = &args.csv {
        let lines: Vec<String> = rows
            .iter()
            .map(|r| csv_row(r.method, r.dse, &r.metrics))
            .collect();
        write_csv(path, &lines)?;
    }
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<(), Error> {
    let cube = io::read_raster(&args.cube)?;
    let out = if args.out.extension().is_none() {
        args.out.with_extension("png")
    } else {
        args.out.clone()
    };
    synth::render_composite(&cube, args.bands.0, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
