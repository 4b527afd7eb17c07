//! Volume and mask files: NIfTI (`.nii`, `.nii.gz`), NRRD (`.nrrd`, attached
//! raw or gzip data) and headerless `.raw` with a `.json` sidecar.
//!
//! Arrays are indexed `[x, y, z]` in every format.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use ndarray::{Array3, ShapeBuilder};
use nifti::writer::WriterOptions;
use nifti::{IntoNdArray, NiftiHeader, NiftiObject, ReaderOptions};
use serde::{Deserialize, Serialize};

use super::volume::{LabelMask, Volume};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Nifti,
    Nrrd,
    Raw,
}

impl Format {
    pub fn detect(path: &Path) -> Result<Format> {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        if name.ends_with(".nii") || name.ends_with(".nii.gz") {
            Ok(Format::Nifti)
        } else if name.ends_with(".nrrd") {
            Ok(Format::Nrrd)
        } else if name.ends_with(".raw") {
            Ok(Format::Raw)
        } else {
            Err(Error::ingest(path, "unrecognized extension (expected .nii, .nii.gz, .nrrd or .raw)"))
        }
    }
}

/// A grid of `f64` samples read from disk, before conversion.
struct Grid {
    shape: [usize; 3],
    spacing: [f64; 3],
    /// x-fastest (Fortran) order.
    values: Vec<f64>,
}

impl Grid {
    fn into_array<T: Clone>(self, f: impl Fn(f64) -> T) -> Array3<T> {
        let values = self.values.into_iter().map(f).collect();
        let a = Array3::from_shape_vec(self.shape.f(), values).expect("length checked at read");
        a.as_standard_layout().into_owned()
    }
}

fn fortran_values<T: Copy>(a: &Array3<T>) -> Vec<T> {
    a.t().iter().copied().collect()
}

fn read_grid(path: &Path) -> Result<Grid> {
    if !path.exists() {
        return Err(Error::ingest(path, "file does not exist"));
    }
    match Format::detect(path)? {
        Format::Nifti => read_nifti(path),
        Format::Nrrd => read_nrrd(path),
        Format::Raw => read_raw(path),
    }
}

pub fn load_volume(path: &Path, id: impl Into<String>) -> Result<Volume> {
    let grid = read_grid(path)?;
    let spacing = grid.spacing;
    Volume::new(id, grid.into_array(|v| v as f32), spacing)
        .map_err(|e| Error::ingest(path, e.to_string()))
}

/// Loads a mask; any nonzero voxel is foreground.
pub fn load_mask(path: &Path) -> Result<LabelMask> {
    let grid = read_grid(path)?;
    if grid.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::ingest(path, "mask contains non-finite values"));
    }
    LabelMask::new(grid.into_array(|v| u8::from(v != 0.0)))
}

pub fn save_volume(path: &Path, volume: &Volume) -> Result<()> {
    let values: Vec<f64> = fortran_values(volume.data()).into_iter().map(f64::from).collect();
    match Format::detect(path)? {
        Format::Nifti => write_nifti(path, volume.data(), volume.spacing()),
        Format::Nrrd => write_nrrd(path, volume.shape(), volume.spacing(), "float", &f32_bytes(&values)),
        Format::Raw => write_raw(path, volume.shape(), volume.spacing(), RawType::F32, &f32_bytes(&values)),
    }
}

pub fn save_mask(path: &Path, mask: &LabelMask, spacing: [f64; 3]) -> Result<()> {
    let values = fortran_values(mask.data());
    match Format::detect(path)? {
        Format::Nifti => write_nifti(path, mask.data(), spacing),
        Format::Nrrd => write_nrrd(path, mask.shape(), spacing, "uchar", &values),
        Format::Raw => write_raw(path, mask.shape(), spacing, RawType::U8, &values),
    }
}

fn f32_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

fn read_nifti(path: &Path) -> Result<Grid> {
    let obj = ReaderOptions::new()
        .read_file(path)
        .map_err(|e| Error::ingest(path, e.to_string()))?;
    let header = obj.header().clone();
    let arr = obj
        .into_volume()
        .into_ndarray::<f64>()
        .map_err(|e| Error::ingest(path, e.to_string()))?;
    if arr.ndim() != 3 {
        return Err(Error::ingest(path, format!("expected a 3D image, found {} dimensions", arr.ndim())));
    }
    let shape = [arr.shape()[0], arr.shape()[1], arr.shape()[2]];
    let mut spacing = [1.0; 3];
    for (s, &p) in spacing.iter_mut().zip(&header.pixdim[1..4]) {
        if p.is_finite() && p > 0.0 {
            *s = p as f64;
        }
    }
    let values = arr.t().iter().copied().collect();
    Ok(Grid { shape, spacing, values })
}

fn write_nifti<A>(path: &Path, data: &Array3<A>, spacing: [f64; 3]) -> Result<()>
where
    A: nifti::DataElement + bytemuck::Pod,
{
    let mut header = NiftiHeader::default();
    header.pixdim = [1.0; 8];
    for (p, s) in header.pixdim[1..4].iter_mut().zip(spacing) {
        *p = s as f32;
    }
    // Millimetres.
    header.xyzt_units = 2;
    WriterOptions::new(path)
        .reference_header(&header)
        .write_nifti(data)
        .map_err(|e| Error::ingest(path, e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum NrrdType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl NrrdType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "signed char" | "int8" | "int8_t" => NrrdType::I8,
            "uchar" | "unsigned char" | "uint8" | "uint8_t" => NrrdType::U8,
            "short" | "short int" | "signed short" | "signed short int" | "int16" | "int16_t" => NrrdType::I16,
            "ushort" | "unsigned short" | "unsigned short int" | "uint16" | "uint16_t" => NrrdType::U16,
            "int" | "signed int" | "int32" | "int32_t" => NrrdType::I32,
            "uint" | "unsigned int" | "uint32" | "uint32_t" => NrrdType::U32,
            "float" => NrrdType::F32,
            "double" => NrrdType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            NrrdType::I8 | NrrdType::U8 => 1,
            NrrdType::I16 | NrrdType::U16 => 2,
            NrrdType::I32 | NrrdType::U32 | NrrdType::F32 => 4,
            NrrdType::F64 => 8,
        }
    }

    fn decode(self, b: &[u8], big: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:literal) => {{
                let a: [u8; $n] = b.try_into().unwrap();
                (if big { <$t>::from_be_bytes(a) } else { <$t>::from_le_bytes(a) }) as f64
            }};
        }
        match self {
            NrrdType::I8 => b[0] as i8 as f64,
            NrrdType::U8 => b[0] as f64,
            NrrdType::I16 => num!(i16, 2),
            NrrdType::U16 => num!(u16, 2),
            NrrdType::I32 => num!(i32, 4),
            NrrdType::U32 => num!(u32, 4),
            NrrdType::F32 => num!(f32, 4),
            NrrdType::F64 => num!(f64, 8),
        }
    }
}

fn parse_vector(s: &str) -> Option<Vec<f64>> {
    let inner = s.trim().strip_prefix('(')?.strip_suffix(')')?;
    inner.split(',').map(|v| v.trim().parse().ok()).collect()
}

fn read_nrrd(path: &Path) -> Result<Grid> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if !bytes.starts_with(b"NRRD") {
        return Err(Error::ingest(path, "missing NRRD magic"));
    }
    // Header ends at the first empty line.
    let mut pos = 0;
    let mut lines = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| pos + i)
            .ok_or_else(|| Error::ingest(path, "unterminated NRRD header"))?;
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| Error::ingest(path, "NRRD header is not UTF-8"))?
            .trim_end_matches('\r')
            .to_string();
        pos = end + 1;
        if line.is_empty() {
            break;
        }
        lines.push(line);
    }

    let mut kind = None;
    let mut sizes = None;
    let mut spacing = [1.0; 3];
    let mut encoding = String::from("raw");
    let mut big_endian = false;
    let mut data_file = None;
    let mut byte_skip = 0usize;
    for line in lines.iter().skip(1) {
        if line.starts_with('#') {
            continue;
        }
        // `key:=value` lines are key/value pairs, not fields.
        if line.contains(":=") {
            continue;
        }
        let Some((key, value)) = line.split_once(": ") else {
            return Err(Error::ingest(path, format!("malformed NRRD header line {line:?}")));
        };
        let value = value.trim();
        match key.trim().to_ascii_lowercase().as_str() {
            "type" => {
                kind = Some(
                    NrrdType::parse(value)
                        .ok_or_else(|| Error::ingest(path, format!("unsupported NRRD type {value:?}")))?,
                )
            }
            "dimension" => {
                if value != "3" {
                    return Err(Error::ingest(path, format!("expected dimension 3, got {value}")));
                }
            }
            "sizes" => {
                let s: Vec<usize> = value
                    .split_whitespace()
                    .map(|v| v.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::ingest(path, format!("bad sizes {value:?}")))?;
                if s.len() != 3 {
                    return Err(Error::ingest(path, format!("expected 3 sizes, got {}", s.len())));
                }
                sizes = Some([s[0], s[1], s[2]]);
            }
            "spacings" => {
                for (sp, v) in spacing.iter_mut().zip(value.split_whitespace()) {
                    if let Ok(x) = v.parse::<f64>() {
                        if x.is_finite() && x > 0.0 {
                            *sp = x;
                        }
                    }
                }
            }
            "space directions" => {
                let dirs: Vec<&str> = value.split_whitespace().collect();
                let dirs: Vec<&str> = if dirs.len() == 3 {
                    dirs
                } else {
                    // Vectors may contain spaces after commas.
                    value.split(") (").collect()
                };
                for (sp, d) in spacing.iter_mut().zip(dirs) {
                    let d = d.trim();
                    let d = if d.starts_with('(') { d.to_string() } else { format!("({d}") };
                    let d = if d.ends_with(')') { d } else { format!("{d})") };
                    if let Some(v) = parse_vector(&d) {
                        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                        if n.is_finite() && n > 0.0 {
                            *sp = n;
                        }
                    }
                }
            }
            "encoding" => encoding = value.to_ascii_lowercase(),
            "endian" => big_endian = value.eq_ignore_ascii_case("big"),
            "data file" | "datafile" => data_file = Some(value.to_string()),
            "byte skip" | "byteskip" => {
                byte_skip = value
                    .parse()
                    .map_err(|_| Error::ingest(path, format!("unsupported byte skip {value:?}")))?
            }
            _ => {}
        }
    }
    let kind = kind.ok_or_else(|| Error::ingest(path, "NRRD header has no type"))?;
    let shape = sizes.ok_or_else(|| Error::ingest(path, "NRRD header has no sizes"))?;

    let payload: Vec<u8> = match data_file {
        Some(f) => {
            let detached: PathBuf = path.parent().unwrap_or(Path::new(".")).join(f);
            fs::read(&detached).map_err(|e| Error::io(&detached, e))?
        }
        None => bytes[pos..].to_vec(),
    };
    let payload = match encoding.as_str() {
        "raw" => payload,
        "gzip" | "gz" => {
            let mut out = Vec::new();
            GzDecoder::new(payload.as_slice())
                .read_to_end(&mut out)
                .map_err(|e| Error::ingest(path, format!("gzip payload: {e}")))?;
            out
        }
        other => return Err(Error::ingest(path, format!("unsupported NRRD encoding {other:?}"))),
    };
    let payload = payload.get(byte_skip..).unwrap_or_default();
    let n = shape.iter().product::<usize>();
    let size = kind.size();
    if payload.len() < n * size {
        return Err(Error::ingest(
            path,
            format!("NRRD payload has {} bytes, expected {}", payload.len(), n * size),
        ));
    }
    let values = payload[..n * size]
        .chunks_exact(size)
        .map(|b| kind.decode(b, big_endian))
        .collect();
    Ok(Grid { shape, spacing, values })
}

fn write_nrrd(path: &Path, shape: [usize; 3], spacing: [f64; 3], kind: &str, payload: &[u8]) -> Result<()> {
    let gzip = payload.len() > 1 << 16;
    let mut out = format!(
        "NRRD0004\ntype: {kind}\ndimension: 3\nsizes: {} {} {}\nspacings: {} {} {}\nencoding: {}\nendian: little\n\n",
        shape[0],
        shape[1],
        shape[2],
        spacing[0],
        spacing[1],
        spacing[2],
        if gzip { "gzip" } else { "raw" }
    )
    .into_bytes();
    if gzip {
        let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
        enc.write_all(payload).map_err(|e| Error::io(path, e))?;
        out.extend(enc.finish().map_err(|e| Error::io(path, e))?);
    } else {
        out.extend_from_slice(payload);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawType {
    U8,
    I16,
    F32,
    F64,
}

/// Sidecar describing a `.raw` file: little-endian, x fastest.
#[derive(Debug, Serialize, Deserialize)]
struct RawSidecar {
    shape: [usize; 3],
    spacing: [f64; 3],
    dtype: RawType,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn read_raw(path: &Path) -> Result<Grid> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: RawSidecar =
        serde_json::from_str(&text).map_err(|e| Error::ingest(&side, format!("bad sidecar: {e}")))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let kind = match meta.dtype {
        RawType::U8 => NrrdType::U8,
        RawType::I16 => NrrdType::I16,
        RawType::F32 => NrrdType::F32,
        RawType::F64 => NrrdType::F64,
    };
    let n = meta.shape.iter().product::<usize>();
    if bytes.len() != n * kind.size() {
        return Err(Error::ingest(
            path,
            format!("raw file has {} bytes, sidecar implies {}", bytes.len(), n * kind.size()),
        ));
    }
    let values = bytes.chunks_exact(kind.size()).map(|b| kind.decode(b, false)).collect();
    Ok(Grid {
        shape: meta.shape,
        spacing: meta.spacing,
        values,
    })
}

fn write_raw(path: &Path, shape: [usize; 3], spacing: [f64; 3], dtype: RawType, payload: &[u8]) -> Result<()> {
    let side = sidecar_path(path);
    let meta = serde_json::to_string_pretty(&RawSidecar { shape, spacing, dtype }).expect("serializable");
    fs::write(&side, meta).map_err(|e| Error::io(&side, e))?;
    fs::write(path, payload).map_err(|e| Error::io(path, e))
}
