//! Raster file format: a text sidecar header next to a raw planar payload.
//!
//! The payload at `<path>` is the planar sample array in little-endian byte
//! order; `<path>.hdr` records the dimensions and element type. The format is
//! deliberately dependency-free and bit-exact: an `f64` cube round-trips to
//! the same bytes. Conversion recipes for geodata live in the README.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::raster::RasterCube;

/// Element type of the stored payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
    U8,
    U16,
}

impl Dtype {
    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
            Dtype::U8 => "u8",
            Dtype::U16 => "u16",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn parse(s: &str, path: &Path) -> Result<Self> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            "u8" => Ok(Dtype::U8),
            "u16" => Ok(Dtype::U16),
            other => Err(Error::UnknownDtype {
                path: path.to_path_buf(),
                dtype: other.to_string(),
            }),
        }
    }
}

const MAGIC: &str = "pansharp raster v1";

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".hdr");
    PathBuf::from(name)
}

struct Header {
    height: usize,
    width: usize,
    bands: usize,
    dtype: Dtype,
}

fn read_header(path: &Path) -> Result<Header> {
    let hdr_path = sidecar_path(path);
    let text = match fs::read_to_string(&hdr_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingSidecar(hdr_path))
        }
        Err(e) => {
            return Err(Error::Io {
                path: hdr_path,
                source: e,
            })
        }
    };
    let bad = |detail: &str| Error::HeaderParse {
        path: hdr_path.clone(),
        detail: detail.to_string(),
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(MAGIC) {
        return Err(bad(&format!("first line must be `{MAGIC}`")));
    }
    let mut height = None;
    let mut width = None;
    let mut bands = None;
    let mut dtype = None;
    for line in lines {
        let mut parts = line.split_whitespace();
        let key = parts.next().ok_or_else(|| bad("empty record"))?;
        let value = parts
            .next()
            .ok_or_else(|| bad(&format!("`{key}` has no value")))?;
        match key {
            "height" | "width" | "bands" => {
                let n: usize = value
                    .parse()
                    .map_err(|_| bad(&format!("`{key}` is not a count: {value}")))?;
                match key {
                    "height" => height = Some(n),
                    "width" => width = Some(n),
                    _ => bands = Some(n),
                }
            }
            "dtype" => dtype = Some(Dtype::parse(value, path)?),
            "layout" => {
                if value != "planar" {
                    return Err(bad(&format!("unsupported layout `{value}`")));
                }
            }
            "byte_order" => {
                if value != "little_endian" {
                    return Err(bad(&format!("unsupported byte order `{value}`")));
                }
            }
            other => return Err(bad(&format!("unknown key `{other}`"))),
        }
    }
    Ok(Header {
        height: height.ok_or_else(|| bad("missing `height`"))?,
        width: width.ok_or_else(|| bad("missing `width`"))?,
        bands: bands.ok_or_else(|| bad("missing `bands`"))?,
        dtype: dtype.ok_or_else(|| bad("missing `dtype`"))?,
    })
}

/// Reads a raster into double precision; integer payloads widen exactly.
pub fn read_raster(path: &Path) -> Result<RasterCube> {
    let header = read_header(path)?;
    let payload = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let count = header.height * header.width * header.bands;
    let expected = (count * header.dtype.size()) as u64;
    if payload.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual: payload.len() as u64,
        });
    }
    let mut data = Vec::with_capacity(count);
    match header.dtype {
        Dtype::F64 => {
            for chunk in payload.chunks_exact(8) {
                data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
        Dtype::F32 => {
            for chunk in payload.chunks_exact(4) {
                data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
        Dtype::U16 => {
            for chunk in payload.chunks_exact(2) {
                data.push(u16::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
        Dtype::U8 => data.extend(payload.iter().map(|&b| b as f64)),
    }
    RasterCube::from_planar(header.height, header.width, header.bands, data)
}

/// Writes a raster atomically (temp file, then rename), payload first.
///
/// Integer targets round half-to-even; out-of-range samples are an error
/// unless `clamp` saturates them at the type bounds.
pub fn write_raster(cube: &RasterCube, path: &Path, dtype: Dtype, clamp: bool) -> Result<()> {
    let samples = cube.as_planar();
    let mut payload = Vec::with_capacity(samples.len() * dtype.size());
    match dtype {
        Dtype::F64 => {
            for &v in samples {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        Dtype::F32 => {
            for &v in samples {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::U16 => {
            for &v in samples {
                payload.extend_from_slice(&quantize(v, 0.0, 65535.0, clamp, "u16")?.to_le_bytes());
            }
        }
        Dtype::U8 => {
            for &v in samples {
                payload.push(quantize(v, 0.0, 255.0, clamp, "u8")? as u8);
            }
        }
    }
    let header = format!(
        "{MAGIC}\nheight {}\nwidth {}\nbands {}\ndtype {}\nlayout planar\nbyte_order little_endian\n",
        cube.height(),
        cube.width(),
        cube.bands(),
        dtype.name()
    );
    atomic_write(path, &payload)?;
    atomic_write(&sidecar_path(path), header.as_bytes())?;
    Ok(())
}

/// Rounds half-to-even and range-checks for an integer target.
fn quantize(v: f64, min: f64, max: f64, clamp: bool, dtype: &'static str) -> Result<u16> {
    let rounded = v.round_ties_even();
    if rounded < min || rounded > max {
        if clamp {
            return Ok(rounded.clamp(min, max) as u16);
        }
        return Err(Error::RangeViolation { value: v, dtype });
    }
    Ok(rounded as u16)
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(bytes).map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
    }
    fs::rename(&tmp, path).map_err(io_err)
}
