//! Single-file NIfTI-1 (`.nii`, `.nii.gz`) restricted to 3-D scalar images.
//!
//! Headers are read in either byte order. Files are always written
//! little-endian with `vox_offset = 352`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::image::{voxel_count, LabelMap, Shape, Spacing, Volume, ORIENTATION_BYTES};

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;
pub const MAGIC: [u8; 4] = *b"n+1\0";

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];
const NIFTI_UNITS_MM: u8 = 2;

// header field offsets
const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_XYZT_UNITS: usize = 123;
const OFF_QFORM_CODE: usize = 252;
const OFF_INTENT_NAME: usize = 328;
const OFF_MAGIC: usize = 344;

/// On-disk voxel types supported by this subset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    U8,
    I16,
    F32,
}

impl Dtype {
    pub fn code(self) -> i16 {
        match self {
            Dtype::U8 => 2,
            Dtype::I16 => 4,
            Dtype::F32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Dtype::U8),
            4 => Ok(Dtype::I16),
            16 => Ok(Dtype::F32),
            other => Err(Error::UnsupportedDatatype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::I16 => 2,
            Dtype::F32 => 4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Dtype::U8 => "uint8",
            Dtype::I16 => "int16",
            Dtype::F32 => "float32",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    U8(Vec<u8>),
    I16(Vec<i16>),
    F32(Vec<f32>),
}

/// A decoded file before conversion to [`Volume`] or [`LabelMap`].
#[derive(Clone, Debug)]
pub struct NiftiImage {
    pub shape: Shape,
    pub spacing: Spacing,
    pub payload: Payload,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub orientation: [u8; ORIENTATION_BYTES],
}

impl NiftiImage {
    pub fn dtype(&self) -> Dtype {
        match self.payload {
            Payload::U8(_) => Dtype::U8,
            Payload::I16(_) => Dtype::I16,
            Payload::F32(_) => Dtype::F32,
        }
    }

    fn scaling(&self) -> Option<(f64, f64)> {
        let (s, i) = (self.scl_slope as f64, self.scl_inter as f64);
        if s == 0.0 || !s.is_finite() || !i.is_finite() || (s == 1.0 && i == 0.0) {
            None
        } else {
            Some((s, i))
        }
    }

    pub fn into_volume(self) -> Result<Volume> {
        let scaling = self.scaling();
        let scale = |v: f64| match scaling {
            Some((s, i)) => (v * s + i) as f32,
            None => v as f32,
        };
        let data: Vec<f32> = match &self.payload {
            Payload::U8(d) => d.iter().map(|&v| scale(v as f64)).collect(),
            Payload::I16(d) => d.iter().map(|&v| scale(v as f64)).collect(),
            Payload::F32(d) if scaling.is_none() => d.clone(),
            Payload::F32(d) => d.iter().map(|&v| scale(v as f64)).collect(),
        };
        let mut vol = Volume::from_vec(self.shape, self.spacing, data)?;
        vol.set_orientation(Some(self.orientation));
        Ok(vol)
    }

    /// Any dtype is accepted as long as every (scaled) value is an integer
    /// in `0..=255`.
    pub fn into_label_map(self) -> Result<LabelMap> {
        let scaling = self.scaling();
        let data = match (&self.payload, scaling) {
            (Payload::U8(d), None) => d.clone(),
            (payload, _) => {
                let values: Vec<f64> = match payload {
                    Payload::U8(d) => d.iter().map(|&v| v as f64).collect(),
                    Payload::I16(d) => d.iter().map(|&v| v as f64).collect(),
                    Payload::F32(d) => d.iter().map(|&v| v as f64).collect(),
                };
                values
                    .into_iter()
                    .enumerate()
                    .map(|(index, v)| {
                        let v = match scaling {
                            Some((s, i)) => v * s + i,
                            None => v,
                        };
                        if v.fract() == 0.0 && (0.0..=255.0).contains(&v) {
                            Ok(v as u8)
                        } else {
                            Err(Error::NotALabel { index, value: v })
                        }
                    })
                    .collect::<Result<Vec<u8>>>()?
            }
        };
        let mut lm = LabelMap::from_vec(self.shape, self.spacing, data)?;
        lm.set_orientation(Some(self.orientation));
        Ok(lm)
    }
}

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

struct Reader<'a> {
    buf: &'a [u8],
    endian: Endian,
}

impl Reader<'_> {
    fn bytes<const N: usize>(&self, off: usize) -> [u8; N] {
        let mut b = [0u8; N];
        b.copy_from_slice(&self.buf[off..off + N]);
        if let Endian::Big = self.endian {
            b.reverse();
        }
        b
    }

    fn i16(&self, off: usize) -> i16 {
        i16::from_le_bytes(self.bytes(off))
    }

    fn i32(&self, off: usize) -> i32 {
        i32::from_le_bytes(self.bytes(off))
    }

    fn f32(&self, off: usize) -> f32 {
        f32::from_le_bytes(self.bytes(off))
    }
}

fn maybe_gunzip(raw: Vec<u8>) -> std::io::Result<Vec<u8>> {
    if raw.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::with_capacity(raw.len() * 4);
        MultiGzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Decodes an in-memory file; gzip wrapping is detected from the leading
/// `1F 8B` bytes.
pub fn decode(raw: Vec<u8>) -> Result<NiftiImage> {
    let buf = maybe_gunzip(raw).map_err(|e| Error::io("<gzip stream>", e))?;
    decode_plain(&buf)
}

fn decode_plain(buf: &[u8]) -> Result<NiftiImage> {
    if buf.len() < HEADER_SIZE {
        return Err(Error::TruncatedHeader(buf.len()));
    }
    let le = Reader {
        buf,
        endian: Endian::Little,
    };
    let dim0 = le.i16(OFF_DIM);
    let r = if (1..=7).contains(&dim0) {
        le
    } else {
        Reader {
            buf,
            endian: Endian::Big,
        }
    };

    let sizeof_hdr = r.i32(0);
    if sizeof_hdr != HEADER_SIZE as i32 {
        return Err(Error::BadHeaderSize(sizeof_hdr));
    }
    let magic: [u8; 4] = buf[OFF_MAGIC..OFF_MAGIC + 4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }

    let dim: Vec<i16> = (0..8).map(|k| r.i16(OFF_DIM + 2 * k)).collect();
    let ndim = dim[0];
    if !(1..=7).contains(&ndim) {
        return Err(Error::DimCount(ndim.max(0) as usize));
    }
    let ndim = ndim as usize;
    if ndim < 3 {
        return Err(Error::DimCount(ndim));
    }
    // trailing singleton axes (e.g. a 4-D header with one timepoint) are 3-D
    if let Some(k) = (4..=ndim).rev().find(|&k| dim[k] != 1) {
        return Err(Error::DimCount(k));
    }
    let mut shape = [0usize; 3];
    for (k, s) in shape.iter_mut().enumerate() {
        let d = dim[k + 1];
        if d <= 0 {
            return Err(Error::Geometry(format!("dim[{}] = {d} is not positive", k + 1)));
        }
        *s = d as usize;
    }

    let dtype = Dtype::from_code(r.i16(OFF_DATATYPE))?;
    let bitpix = r.i16(OFF_BITPIX);
    if bitpix as usize != dtype.size() * 8 {
        return Err(Error::Geometry(format!(
            "bitpix {bitpix} disagrees with datatype {}",
            dtype.name()
        )));
    }

    let mut spacing = [0f64; 3];
    for (k, s) in spacing.iter_mut().enumerate() {
        *s = r.f32(OFF_PIXDIM + 4 * (k + 1)) as f64;
    }

    let vox_offset = r.f32(OFF_VOX_OFFSET);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(Error::Geometry(format!("vox_offset {vox_offset} is invalid")));
    }
    let offset = vox_offset as usize;
    let n = voxel_count(shape);
    let expected = n * dtype.size();
    let found = buf.len().saturating_sub(offset);
    if found < expected {
        return Err(Error::TruncatedPayload {
            offset,
            expected,
            found,
        });
    }
    let body = &buf[offset..offset + expected];
    let payload = match (dtype, r.endian) {
        (Dtype::U8, _) => Payload::U8(body.to_vec()),
        (Dtype::I16, Endian::Little) => {
            Payload::I16(body.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect())
        }
        (Dtype::I16, Endian::Big) => {
            Payload::I16(body.chunks_exact(2).map(|c| i16::from_be_bytes([c[0], c[1]])).collect())
        }
        (Dtype::F32, Endian::Little) => Payload::F32(
            body.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
        (Dtype::F32, Endian::Big) => Payload::F32(
            body.chunks_exact(4)
                .map(|c| f32::from_be_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
    };

    let mut orientation = [0u8; ORIENTATION_BYTES];
    orientation[..4].copy_from_slice(&r.bytes::<4>(OFF_PIXDIM));
    // qform_code, sform_code (i16), then 18 f32
    orientation[4..6].copy_from_slice(&r.bytes::<2>(OFF_QFORM_CODE));
    orientation[6..8].copy_from_slice(&r.bytes::<2>(OFF_QFORM_CODE + 2));
    for k in 0..18 {
        let src = OFF_QFORM_CODE + 4 + 4 * k;
        orientation[8 + 4 * k..12 + 4 * k].copy_from_slice(&r.bytes::<4>(src));
    }
    debug_assert_eq!(OFF_QFORM_CODE + 4 + 4 * 18, OFF_INTENT_NAME);

    Ok(NiftiImage {
        shape,
        spacing,
        payload,
        scl_slope: r.f32(OFF_SCL_SLOPE),
        scl_inter: r.f32(OFF_SCL_INTER),
        orientation,
    })
}

fn default_orientation() -> [u8; ORIENTATION_BYTES] {
    let mut o = [0u8; ORIENTATION_BYTES];
    o[..4].copy_from_slice(&1f32.to_le_bytes());
    o
}

fn header(shape: Shape, spacing: Spacing, dtype: Dtype, orientation: Option<&[u8; ORIENTATION_BYTES]>) -> Vec<u8> {
    let mut h = vec![0u8; VOX_OFFSET];
    let put = |h: &mut Vec<u8>, off: usize, bytes: &[u8]| h[off..off + bytes.len()].copy_from_slice(bytes);

    put(&mut h, 0, &(HEADER_SIZE as i32).to_le_bytes());
    let dims = [3i16, shape[0] as i16, shape[1] as i16, shape[2] as i16, 1, 1, 1, 1];
    for (k, d) in dims.iter().enumerate() {
        put(&mut h, OFF_DIM + 2 * k, &d.to_le_bytes());
    }
    put(&mut h, OFF_DATATYPE, &dtype.code().to_le_bytes());
    put(&mut h, OFF_BITPIX, &((dtype.size() * 8) as i16).to_le_bytes());

    let orientation = orientation.copied().unwrap_or_else(default_orientation);
    put(&mut h, OFF_PIXDIM, &orientation[..4]);
    for k in 0..3 {
        put(&mut h, OFF_PIXDIM + 4 * (k + 1), &(spacing[k] as f32).to_le_bytes());
    }
    for k in 4..8 {
        put(&mut h, OFF_PIXDIM + 4 * k, &1f32.to_le_bytes());
    }
    put(&mut h, OFF_VOX_OFFSET, &(VOX_OFFSET as f32).to_le_bytes());
    put(&mut h, OFF_SCL_SLOPE, &1f32.to_le_bytes());
    put(&mut h, OFF_SCL_INTER, &0f32.to_le_bytes());
    h[OFF_XYZT_UNITS] = NIFTI_UNITS_MM;
    put(&mut h, OFF_QFORM_CODE, &orientation[4..]);
    put(&mut h, OFF_MAGIC, &MAGIC);
    h
}

fn check_dims(shape: Shape) -> Result<()> {
    match shape.iter().find(|&&n| n > i16::MAX as usize) {
        Some(n) => Err(Error::Geometry(format!("axis length {n} exceeds the NIfTI-1 limit"))),
        None => Ok(()),
    }
}

/// Encodes a volume with the requested on-disk type. Values must be exactly
/// representable in that type.
pub fn encode_volume(v: &Volume, dtype: Dtype) -> Result<Vec<u8>> {
    check_dims(v.shape())?;
    let mut out = header(v.shape(), v.spacing(), dtype, v.orientation());
    out.reserve(v.len() * dtype.size());
    let not_repr = |index: usize, value: f32| Error::NotRepresentable {
        index,
        value,
        dtype: dtype.name(),
    };
    match dtype {
        Dtype::F32 => {
            for &x in v.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Dtype::I16 => {
            for (i, &x) in v.data().iter().enumerate() {
                let q = x as i16;
                if q as f32 != x {
                    return Err(not_repr(i, x));
                }
                out.extend_from_slice(&q.to_le_bytes());
            }
        }
        Dtype::U8 => {
            for (i, &x) in v.data().iter().enumerate() {
                let q = x as u8;
                if q as f32 != x {
                    return Err(not_repr(i, x));
                }
                out.push(q);
            }
        }
    }
    Ok(out)
}

pub fn encode_label_map(m: &LabelMap) -> Result<Vec<u8>> {
    check_dims(m.shape())?;
    let mut out = header(m.shape(), m.spacing(), Dtype::U8, m.orientation());
    out.extend_from_slice(m.data());
    Ok(out)
}

fn gzip(bytes: &[u8]) -> std::io::Result<Vec<u8>> {
    // GzEncoder writes mtime 0, so output bytes are reproducible
    let mut enc = GzEncoder::new(Vec::with_capacity(bytes.len() / 2), Compression::default());
    enc.write_all(bytes)?;
    enc.finish()
}

fn write_bytes(path: &Path, bytes: Vec<u8>, compress: bool) -> Result<()> {
    let bytes = if compress {
        gzip(&bytes).map_err(|e| Error::io(path, e))?
    } else {
        bytes
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<NiftiImage> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let buf = maybe_gunzip(raw).map_err(|e| Error::io(path, e))?;
    decode_plain(&buf)
}

/// Reads any supported dtype as float32, honouring `scl_slope`/`scl_inter`.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    read_nifti(path)?.into_volume()
}

pub fn read_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    read_nifti(path)?.into_label_map()
}

/// Writes a float32 volume.
pub fn write_volume(v: &Volume, path: impl AsRef<Path>, compress: bool) -> Result<()> {
    write_volume_as(v, path, Dtype::F32, compress)
}

pub fn write_volume_as(v: &Volume, path: impl AsRef<Path>, dtype: Dtype, compress: bool) -> Result<()> {
    write_bytes(path.as_ref(), encode_volume(v, dtype)?, compress)
}

/// Writes a uint8 label map.
pub fn write_label_map(m: &LabelMap, path: impl AsRef<Path>, compress: bool) -> Result<()> {
    write_bytes(path.as_ref(), encode_label_map(m)?, compress)
}

/// `true` when the file name ends in `.gz`.
pub fn wants_gzip(path: impl AsRef<Path>) -> bool {
    path.as_ref()
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}
