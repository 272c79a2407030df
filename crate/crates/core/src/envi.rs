//! ENVI header parsing and raw interleaved cube decoding.
//!
//! A cube has two files: a text header (`.hdr`) starting with the `ENVI`
//! magic token followed by `key = value` lines, and a raw binary file holding
//! the samples in one of three interleave orders (BSQ, BIL, BIP). Decoding is
//! byte-exact: the same logical cube stored under any interleave and byte
//! order decodes to an identical [`HyperCube`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};

use crate::cube::HyperCube;
use crate::error::{Error, Result};
use crate::kv;

/// Storage order of the raw file: band-sequential, band-interleaved-by-line,
/// or band-interleaved-by-pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interleave {
    Bsq,
    Bil,
    Bip,
}

impl Interleave {
    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bsq" => Some(Interleave::Bsq),
            "bil" => Some(Interleave::Bil),
            "bip" => Some(Interleave::Bip),
            _ => None,
        }
    }

    pub const ALL: [Interleave; 3] = [Interleave::Bsq, Interleave::Bil, Interleave::Bip];
}

impl fmt::Display for Interleave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interleave::Bsq => "bsq",
            Interleave::Bil => "bil",
            Interleave::Bip => "bip",
        })
    }
}

/// Element type of the raw file, identified by its ENVI type code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    /// Code 12: unsigned 16-bit integer.
    U16,
    /// Code 4: IEEE 754 single precision.
    F32,
    /// Code 5: IEEE 754 double precision.
    F64,
}

impl DataType {
    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            12 => Ok(DataType::U16),
            4 => Ok(DataType::F32),
            5 => Ok(DataType::F64),
            other => Err(Error::UnsupportedDataType(other)),
        }
    }

    pub fn code(self) -> u32 {
        match self {
            DataType::U16 => 12,
            DataType::F32 => 4,
            DataType::F64 => 5,
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            DataType::U16 => 2,
            DataType::F32 => 4,
            DataType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

impl ByteOrder {
    pub fn code(self) -> u32 {
        match self {
            ByteOrder::Little => 0,
            ByteOrder::Big => 1,
        }
    }
}

/// Parsed ENVI header. Unknown keys are preserved verbatim in `extra`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnviHeader {
    pub samples: usize,
    pub lines: usize,
    pub bands: usize,
    pub interleave: Interleave,
    pub data_type: DataType,
    pub byte_order: ByteOrder,
    pub header_offset: u64,
    pub wavelengths: Option<Vec<f64>>,
    pub reflectance_scale: Option<f64>,
    pub extra: BTreeMap<String, String>,
}

impl EnviHeader {
    /// Expected length of the raw file in bytes, embedded offset included.
    pub fn expected_raw_len(&self) -> u64 {
        self.header_offset
            + (self.samples * self.lines * self.bands * self.data_type.bytes()) as u64
    }

    pub fn n_elements(&self) -> usize {
        self.samples * self.lines * self.bands
    }
}

fn parse_positive(key: &'static str, value: &str) -> Result<usize> {
    let invalid = || Error::InvalidHeaderValue {
        key: key.to_string(),
        value: value.to_string(),
    };
    let n: usize = value.trim().parse().map_err(|_| invalid())?;
    if n == 0 {
        return Err(invalid());
    }
    Ok(n)
}

/// Parse the text of an ENVI header file.
///
/// The file must open with the `ENVI` magic token. Required keys are
/// `samples`, `lines`, `bands`, `interleave` and `data type`; `byte order`
/// defaults to little-endian and `header offset` to zero when absent.
/// Wavelength lists are validated against the band count.
pub fn parse_envi_header(text: &str) -> Result<EnviHeader> {
    let mut rest = text;
    let mut saw_magic = false;
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.eq_ignore_ascii_case("envi") {
            saw_magic = true;
            let consumed = line.as_ptr() as usize - text.as_ptr() as usize + line.len();
            rest = &text[consumed..];
        }
        break;
    }
    if !saw_magic {
        return Err(Error::MissingMagic);
    }

    let entries = kv::parse_entries(rest)?;
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for (k, v) in entries {
        map.insert(k, v);
    }

    let mut take = |key: &'static str| -> Result<String> {
        map.remove(key).ok_or(Error::MissingRequiredKey(key))
    };

    let samples = parse_positive("samples", &take("samples")?)?;
    let lines = parse_positive("lines", &take("lines")?)?;
    let bands = parse_positive("bands", &take("bands")?)?;

    let interleave_raw = take("interleave")?;
    let interleave =
        Interleave::parse(&interleave_raw).ok_or_else(|| Error::InvalidHeaderValue {
            key: "interleave".to_string(),
            value: interleave_raw.clone(),
        })?;

    let dt_raw = take("data type")?;
    let dt_code: u32 = dt_raw.trim().parse().map_err(|_| Error::InvalidHeaderValue {
        key: "data type".to_string(),
        value: dt_raw.clone(),
    })?;
    let data_type = DataType::from_code(dt_code)?;

    let byte_order = match map.remove("byte order") {
        None => ByteOrder::Little,
        Some(v) => match v.trim() {
            "0" => ByteOrder::Little,
            "1" => ByteOrder::Big,
            _ => {
                return Err(Error::InvalidHeaderValue {
                    key: "byte order".to_string(),
                    value: v,
                })
            }
        },
    };

    let header_offset = match map.remove("header offset") {
        None => 0,
        Some(v) => v.trim().parse().map_err(|_| Error::InvalidHeaderValue {
            key: "header offset".to_string(),
            value: v.clone(),
        })?,
    };

    let wavelengths = match map.remove("wavelength") {
        None => None,
        Some(body) => {
            let items = kv::split_list(&body);
            if items.len() != bands {
                return Err(Error::LengthMismatch {
                    key: "wavelength".to_string(),
                    expected: bands,
                    got: items.len(),
                });
            }
            let mut values = Vec::with_capacity(items.len());
            for item in items {
                values.push(item.parse::<f64>().map_err(|_| Error::InvalidHeaderValue {
                    key: "wavelength".to_string(),
                    value: item.to_string(),
                })?);
            }
            crate::spectrum::validate_axis(&values)?;
            Some(values)
        }
    };

    let reflectance_scale = match map.remove("reflectance scale factor") {
        None => None,
        Some(v) => {
            let scale: f64 = v.trim().parse().map_err(|_| Error::InvalidHeaderValue {
                key: "reflectance scale factor".to_string(),
                value: v.clone(),
            })?;
            if !(scale > 0.0) {
                return Err(Error::InvalidHeaderValue {
                    key: "reflectance scale factor".to_string(),
                    value: v,
                });
            }
            Some(scale)
        }
    };

    Ok(EnviHeader {
        samples,
        lines,
        bands,
        interleave,
        data_type,
        byte_order,
        header_offset,
        wavelengths,
        reflectance_scale,
        extra: map,
    })
}

/// Render a header back to text. `parse_envi_header` of the output yields an
/// equal header.
pub fn serialize_envi_header(h: &EnviHeader) -> String {
    let mut out = String::from("ENVI\n");
    out.push_str(&format!("samples = {}\n", h.samples));
    out.push_str(&format!("lines = {}\n", h.lines));
    out.push_str(&format!("bands = {}\n", h.bands));
    out.push_str(&format!("header offset = {}\n", h.header_offset));
    out.push_str(&format!("data type = {}\n", h.data_type.code()));
    out.push_str(&format!("interleave = {}\n", h.interleave));
    out.push_str(&format!("byte order = {}\n", h.byte_order.code()));
    if let Some(scale) = h.reflectance_scale {
        out.push_str(&format!("reflectance scale factor = {scale}\n"));
    }
    if let Some(ws) = &h.wavelengths {
        let items: Vec<String> = ws.iter().map(|w| format!("{w}")).collect();
        out.push_str(&format!("wavelength = {{{}}}\n", items.join(", ")));
    }
    for (k, v) in &h.extra {
        if v.contains(',') || v.contains('\n') {
            out.push_str(&format!("{k} = {{{v}}}\n"));
        } else {
            out.push_str(&format!("{k} = {v}\n"));
        }
    }
    out
}

/// File-order index -> (line, sample, band) for each interleave.
fn file_index_to_lsb(interleave: Interleave, idx: usize, lines: usize, samples: usize, bands: usize) -> (usize, usize, usize) {
    match interleave {
        Interleave::Bsq => {
            let plane = lines * samples;
            let b = idx / plane;
            let r = idx % plane;
            (r / samples, r % samples, b)
        }
        Interleave::Bil => {
            let row = bands * samples;
            let l = idx / row;
            let r = idx % row;
            (l, r % samples, r / samples)
        }
        Interleave::Bip => {
            let row = samples * bands;
            let l = idx / row;
            let r = idx % row;
            (l, r / bands, r % bands)
        }
    }
}

/// Decode a raw interleaved byte stream into a cube.
///
/// `raw` must contain exactly `header_offset` prefix bytes followed by
/// `samples * lines * bands` elements. Unsigned 16-bit values are divided by
/// the reflectance scale factor when the header carries one; floating point
/// values are taken as stored. When the header has no wavelength list the
/// cube axis defaults to band indices.
pub fn read_cube(header: &EnviHeader, raw: &[u8]) -> Result<HyperCube> {
    let expected = header.expected_raw_len();
    if raw.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            expected,
            got: raw.len() as u64,
        });
    }
    let data = &raw[header.header_offset as usize..];
    let (lines, samples, bands) = (header.lines, header.samples, header.bands);
    let n = header.n_elements();
    let width = header.data_type.bytes();
    let scale = header.reflectance_scale;

    let mut out = vec![0f64; n];
    for idx in 0..n {
        let chunk = &data[idx * width..(idx + 1) * width];
        let value = match (header.data_type, header.byte_order) {
            (DataType::U16, ByteOrder::Little) => {
                let v = u16::from_le_bytes([chunk[0], chunk[1]]) as f64;
                match scale {
                    Some(s) => v / s,
                    None => v,
                }
            }
            (DataType::U16, ByteOrder::Big) => {
                let v = u16::from_be_bytes([chunk[0], chunk[1]]) as f64;
                match scale {
                    Some(s) => v / s,
                    None => v,
                }
            }
            (DataType::F32, ByteOrder::Little) => {
                f32::from_le_bytes(chunk.try_into().unwrap()) as f64
            }
            (DataType::F32, ByteOrder::Big) => {
                f32::from_be_bytes(chunk.try_into().unwrap()) as f64
            }
            (DataType::F64, ByteOrder::Little) => f64::from_le_bytes(chunk.try_into().unwrap()),
            (DataType::F64, ByteOrder::Big) => f64::from_be_bytes(chunk.try_into().unwrap()),
        };
        let (l, s, b) = file_index_to_lsb(header.interleave, idx, lines, samples, bands);
        out[(l * samples + s) * bands + b] = value;
    }

    let wavelengths = header
        .wavelengths
        .clone()
        .unwrap_or_else(|| (0..bands).map(|b| b as f64).collect());
    let array = Array3::from_shape_vec((lines, samples, bands), out)
        .expect("element count matches shape");
    HyperCube::new(array, wavelengths)
}

/// Encode a cube to raw bytes plus the matching header.
///
/// With `DataType::U16` values are multiplied by `reflectance_scale` (1.0 when
/// absent), rounded to nearest and clamped to the 16-bit range.
pub fn write_cube(
    cube: &HyperCube,
    interleave: Interleave,
    data_type: DataType,
    byte_order: ByteOrder,
    reflectance_scale: Option<f64>,
) -> (EnviHeader, Vec<u8>) {
    let (lines, samples, bands) = (cube.lines(), cube.samples(), cube.bands());
    let n = lines * samples * bands;
    let flat = cube.flat();
    let mut raw = Vec::with_capacity(n * data_type.bytes());
    for idx in 0..n {
        let (l, s, b) = file_index_to_lsb(interleave, idx, lines, samples, bands);
        let value = flat[(l * samples + s) * bands + b];
        match (data_type, byte_order) {
            (DataType::U16, order) => {
                let scaled = (value * reflectance_scale.unwrap_or(1.0)).round();
                let v = scaled.clamp(0.0, u16::MAX as f64) as u16;
                raw.extend_from_slice(&match order {
                    ByteOrder::Little => v.to_le_bytes(),
                    ByteOrder::Big => v.to_be_bytes(),
                });
            }
            (DataType::F32, ByteOrder::Little) => raw.extend_from_slice(&(value as f32).to_le_bytes()),
            (DataType::F32, ByteOrder::Big) => raw.extend_from_slice(&(value as f32).to_be_bytes()),
            (DataType::F64, ByteOrder::Little) => raw.extend_from_slice(&value.to_le_bytes()),
            (DataType::F64, ByteOrder::Big) => raw.extend_from_slice(&value.to_be_bytes()),
        }
    }
    let header = EnviHeader {
        samples,
        lines,
        bands,
        interleave,
        data_type,
        byte_order,
        header_offset: 0,
        wavelengths: Some(cube.wavelengths().to_vec()),
        reflectance_scale,
        extra: BTreeMap::new(),
    };
    (header, raw)
}

/// Candidate extensions for the data file that accompanies a `.hdr`.
const DATA_EXTENSIONS: [&str; 7] = ["", "raw", "dat", "img", "float", "bin", "bsq"];

fn locate_data_file(header_path: &Path) -> Result<PathBuf> {
    let stem = header_path.with_extension("");
    for ext in DATA_EXTENSIONS {
        let candidate = if ext.is_empty() {
            stem.clone()
        } else {
            stem.with_extension(ext)
        };
        if candidate != header_path && candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(Error::io(
        stem,
        std::io::Error::new(std::io::ErrorKind::NotFound, "no data file next to header"),
    ))
}

/// Read a cube from a header path, locating the raw data file next to it
/// (same stem, one of the usual extensions).
pub fn read_cube_file(header_path: impl AsRef<Path>) -> Result<HyperCube> {
    let header_path = header_path.as_ref();
    let text =
        std::fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header = parse_envi_header(&text)?;
    let data_path = locate_data_file(header_path)?;
    let raw = std::fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    read_cube(&header, &raw)
}

/// Read just the header from a `.hdr` path.
pub fn read_header_file(header_path: impl AsRef<Path>) -> Result<EnviHeader> {
    let header_path = header_path.as_ref();
    let text =
        std::fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    parse_envi_header(&text)
}

/// Write `<base>.hdr` and `<base>.raw`. Returns the header path.
pub fn write_cube_file(
    base: impl AsRef<Path>,
    cube: &HyperCube,
    interleave: Interleave,
    data_type: DataType,
    byte_order: ByteOrder,
    reflectance_scale: Option<f64>,
) -> Result<PathBuf> {
    let base = base.as_ref();
    let (header, raw) = write_cube(cube, interleave, data_type, byte_order, reflectance_scale);
    let hdr_path = base.with_extension("hdr");
    let raw_path = base.with_extension("raw");
    std::fs::write(&hdr_path, serialize_envi_header(&header))
        .map_err(|e| Error::io(&hdr_path, e))?;
    std::fs::write(&raw_path, raw).map_err(|e| Error::io(&raw_path, e))?;
    Ok(hdr_path)
}

/// Persist a 2-D score grid as a one-band float32 cube (`<base>.hdr` +
/// `<base>.raw`) so downstream commands can re-ingest it.
pub fn write_score_grid(base: impl AsRef<Path>, grid: &Array2<f64>) -> Result<PathBuf> {
    let (lines, samples) = grid.dim();
    let data = Array3::from_shape_vec(
        (lines, samples, 1),
        grid.iter().copied().collect(),
    )
    .expect("element count matches shape");
    let cube = HyperCube::new(data, vec![0.0])?;
    let base = base.as_ref();
    let (mut header, raw) = write_cube(
        &cube,
        Interleave::Bip,
        DataType::F32,
        ByteOrder::Little,
        None,
    );
    header.wavelengths = None;
    let hdr_path = base.with_extension("hdr");
    let raw_path = base.with_extension("raw");
    std::fs::write(&hdr_path, serialize_envi_header(&header))
        .map_err(|e| Error::io(&hdr_path, e))?;
    std::fs::write(&raw_path, raw).map_err(|e| Error::io(&raw_path, e))?;
    Ok(hdr_path)
}

/// Read back a grid written by [`write_score_grid`].
pub fn read_score_grid(header_path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let cube = read_cube_file(header_path)?;
    let (lines, samples) = (cube.lines(), cube.samples());
    let flat: Vec<f64> = cube.flat().to_vec();
    Ok(Array2::from_shape_vec((lines, samples), flat).expect("one band"))
}
