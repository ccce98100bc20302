//! NIfTI-1 single-file reader/writer (uncompressed `.nii` subset).
//!
//! Supported datatypes: uint8, int16, int32, float32, float64. Headers in
//! either byte order are accepted (detected from `sizeof_hdr`); files are
//! always written little-endian with float32 voxels, `scl_slope = 1`,
//! `vox_offset = 352`, and the orientation/spacing encoded in the sform.
//! Extensions, compression, NIfTI-2, and time series are out of scope.

use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};

use super::types::{standard_label_map, Orientation, VoxelKind, Volume};
use super::{Mask, VolioError};

const HEADER_SIZE: usize = 348;
const WRITE_VOX_OFFSET: usize = 352;

mod offset {
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const DESCRIP: usize = 148;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const SROW_Y: usize = 296;
    pub const SROW_Z: usize = 312;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DataType {
    UInt8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl DataType {
    fn from_code(code: i16) -> Result<Self, VolioError> {
        match code {
            2 => Ok(DataType::UInt8),
            4 => Ok(DataType::Int16),
            8 => Ok(DataType::Int32),
            16 => Ok(DataType::Float32),
            64 => Ok(DataType::Float64),
            other => Err(VolioError::UnsupportedDatatype(other)),
        }
    }

    fn byte_size(self) -> usize {
        match self {
            DataType::UInt8 => 1,
            DataType::Int16 => 2,
            DataType::Int32 | DataType::Float32 => 4,
            DataType::Float64 => 8,
        }
    }
}

/// Reads a single-file uncompressed NIfTI-1 volume.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume, VolioError> {
    let bytes = std::fs::read(path)?;
    read_nifti_bytes(&bytes)
}

/// Parses a NIfTI-1 byte buffer. Total: every input yields a `Volume` or a
/// typed error, never a panic (fuzzed).
pub fn read_nifti_bytes(bytes: &[u8]) -> Result<Volume, VolioError> {
    if bytes.len() < HEADER_SIZE {
        return Err(VolioError::TruncatedFile {
            expected: HEADER_SIZE,
            actual: bytes.len(),
        });
    }
    let magic = &bytes[offset::MAGIC..offset::MAGIC + 4];
    if magic != b"n+1\0" && magic != b"ni1\0" {
        return Err(VolioError::BadMagic([magic[0], magic[1], magic[2], magic[3]]));
    }
    // sizeof_hdr doubles as the endianness marker.
    if LittleEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        parse::<LittleEndian>(bytes)
    } else if BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        parse::<BigEndian>(bytes)
    } else {
        Err(VolioError::BadHeader(format!(
            "sizeof_hdr {} is not 348 in either byte order",
            LittleEndian::read_i32(&bytes[0..4])
        )))
    }
}

fn parse<E: ByteOrder>(bytes: &[u8]) -> Result<Volume, VolioError> {
    let ndim = E::read_i16(&bytes[offset::DIM..offset::DIM + 2]);
    let mut dim = [0i64; 7];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = E::read_i16(&bytes[offset::DIM + 2 + 2 * i..offset::DIM + 4 + 2 * i]) as i64;
    }
    let spatial_ok = ndim == 3 || (ndim == 4 && dim[3] == 1);
    if !spatial_ok {
        return Err(VolioError::BadHeader(format!(
            "dim[0] = {ndim} (need 3, or 4 with a trailing singleton)"
        )));
    }
    let mut dims = [0usize; 3];
    for a in 0..3 {
        if dim[a] <= 0 {
            return Err(VolioError::BadHeader(format!("dim[{}] = {}", a + 1, dim[a])));
        }
        dims[a] = dim[a] as usize;
    }

    let datatype = DataType::from_code(E::read_i16(&bytes[offset::DATATYPE..offset::DATATYPE + 2]))?;
    let bitpix = E::read_i16(&bytes[offset::BITPIX..offset::BITPIX + 2]);
    if bitpix != 0 && bitpix as usize != datatype.byte_size() * 8 {
        return Err(VolioError::BadHeader(format!(
            "bitpix {bitpix} does not match datatype"
        )));
    }

    let mut pixdim = [0.0f32; 8];
    for (i, p) in pixdim.iter_mut().enumerate() {
        *p = E::read_f32(&bytes[offset::PIXDIM + 4 * i..offset::PIXDIM + 4 * i + 4]);
    }
    let mut spacing = [0.0f32; 3];
    for a in 0..3 {
        let s = pixdim[a + 1];
        if !s.is_finite() || s <= 0.0 {
            return Err(VolioError::BadHeader(format!("pixdim[{}] = {s}", a + 1)));
        }
        spacing[a] = s;
    }

    let vox_offset_f = E::read_f32(&bytes[offset::VOX_OFFSET..offset::VOX_OFFSET + 4]);
    if !vox_offset_f.is_finite() || vox_offset_f.fract() != 0.0 || vox_offset_f < HEADER_SIZE as f32
    {
        return Err(VolioError::BadHeader(format!("vox_offset {vox_offset_f}")));
    }
    let vox_offset = vox_offset_f as usize;

    let scl_slope = E::read_f32(&bytes[offset::SCL_SLOPE..offset::SCL_SLOPE + 4]);
    let scl_inter = E::read_f32(&bytes[offset::SCL_INTER..offset::SCL_INTER + 4]);

    let nvox = dims[0]
        .checked_mul(dims[1])
        .and_then(|p| p.checked_mul(dims[2]))
        .ok_or_else(|| VolioError::BadHeader("dimension product overflow".into()))?;
    let data_bytes = nvox
        .checked_mul(datatype.byte_size())
        .ok_or_else(|| VolioError::BadHeader("data size overflow".into()))?;
    let expected = vox_offset
        .checked_add(data_bytes)
        .ok_or_else(|| VolioError::BadHeader("data extent overflow".into()))?;
    if bytes.len() < expected {
        return Err(VolioError::TruncatedFile {
            expected,
            actual: bytes.len(),
        });
    }

    // Rescale in f64, cast to f32. scl_slope == 0 means "no scaling".
    let (slope, inter) = if scl_slope != 0.0 && scl_slope.is_finite() && scl_inter.is_finite() {
        (scl_slope as f64, scl_inter as f64)
    } else {
        (1.0, 0.0)
    };
    let raw = &bytes[vox_offset..expected];
    let mut data = Vec::with_capacity(nvox);
    for i in 0..nvox {
        let v = match datatype {
            DataType::UInt8 => raw[i] as f64,
            DataType::Int16 => E::read_i16(&raw[2 * i..2 * i + 2]) as f64,
            DataType::Int32 => E::read_i32(&raw[4 * i..4 * i + 4]) as f64,
            DataType::Float32 => E::read_f32(&raw[4 * i..4 * i + 4]) as f64,
            DataType::Float64 => E::read_f64(&raw[8 * i..8 * i + 8]),
        };
        let scaled = (slope * v + inter) as f32;
        if !scaled.is_finite() {
            return Err(VolioError::NonFinite { index: i });
        }
        data.push(scaled);
    }

    let sform_code = E::read_i16(&bytes[offset::SFORM_CODE..offset::SFORM_CODE + 2]);
    let qform_code = E::read_i16(&bytes[offset::QFORM_CODE..offset::QFORM_CODE + 2]);
    let orientation = if sform_code > 0 {
        let mut cols = [[0.0f64; 3]; 3];
        for (r, base) in [offset::SROW_X, offset::SROW_Y, offset::SROW_Z].iter().enumerate() {
            for c in 0..3 {
                cols[c][r] = E::read_f32(&bytes[base + 4 * c..base + 4 * c + 4]) as f64;
            }
        }
        decode_direction_columns(cols)?
    } else if qform_code > 0 {
        let b = E::read_f32(&bytes[offset::QUATERN_B..offset::QUATERN_B + 4]) as f64;
        let c = E::read_f32(&bytes[offset::QUATERN_B + 4..offset::QUATERN_B + 8]) as f64;
        let d = E::read_f32(&bytes[offset::QUATERN_B + 8..offset::QUATERN_B + 12]) as f64;
        let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        decode_direction_columns(quaternion_columns(b, c, d, qfac)?)?
    } else {
        Orientation::identity()
    };

    let kind = kind_from_descrip(&bytes[offset::DESCRIP..offset::DESCRIP + 80]);
    Volume::new(dims, spacing, orientation, kind, data)
}

/// Maps each direction column to its dominant anatomical axis and sign.
fn decode_direction_columns(cols: [[f64; 3]; 3]) -> Result<Orientation, VolioError> {
    let mut perm = [0usize; 3];
    let mut flip = [false; 3];
    let mut taken = [false; 3];
    for (j, col) in cols.iter().enumerate() {
        let mut best = 0usize;
        for r in 1..3 {
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] == 0.0 || !col[best].is_finite() {
            return Err(VolioError::BadHeader(format!(
                "orientation column {j} is degenerate"
            )));
        }
        if taken[best] {
            return Err(VolioError::BadHeader(
                "orientation columns share a dominant axis".into(),
            ));
        }
        taken[best] = true;
        perm[j] = best;
        flip[j] = col[best] < 0.0;
    }
    Ok(Orientation { perm, flip })
}

fn quaternion_columns(b: f64, c: f64, d: f64, qfac: f64) -> Result<[[f64; 3]; 3], VolioError> {
    let qq = b * b + c * c + d * d;
    if !qq.is_finite() {
        return Err(VolioError::BadHeader("non-finite quaternion".into()));
    }
    let a = (1.0 - qq).max(0.0).sqrt();
    let m = [
        [
            a * a + b * b - c * c - d * d,
            2.0 * (b * c - a * d),
            2.0 * (b * d + a * c),
        ],
        [
            2.0 * (b * c + a * d),
            a * a - b * b + c * c - d * d,
            2.0 * (c * d - a * b),
        ],
        [
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            a * a - b * b - c * c + d * d,
        ],
    ];
    Ok([
        [m[0][0], m[1][0], m[2][0]],
        [m[0][1], m[1][1], m[2][1]],
        [m[0][2] * qfac, m[1][2] * qfac, m[2][2] * qfac],
    ])
}

fn kind_from_descrip(descrip: &[u8]) -> VoxelKind {
    let text = descrip
        .split(|&b| b == 0)
        .next()
        .map(|s| String::from_utf8_lossy(s).into_owned())
        .unwrap_or_default();
    match text.trim() {
        "kind=normalized" => VoxelKind::Normalized,
        "kind=probability" => VoxelKind::Probability,
        _ => VoxelKind::Hu,
    }
}

fn kind_descrip(kind: VoxelKind) -> &'static [u8] {
    match kind {
        VoxelKind::Hu => b"kind=hu",
        VoxelKind::Normalized => b"kind=normalized",
        VoxelKind::Probability => b"kind=probability",
    }
}

/// Serializes a volume as float32 NIfTI-1 bytes.
pub fn write_nifti_bytes(volume: &Volume) -> Vec<u8> {
    encode(
        volume.dims(),
        volume.spacing(),
        volume.orientation(),
        kind_descrip(volume.kind()),
        DataType::Float32,
        |buf| {
            for &v in volume.data() {
                let mut le = [0u8; 4];
                LittleEndian::write_f32(&mut le, v);
                buf.extend_from_slice(&le);
            }
        },
    )
}

/// Writes a volume to disk; `read_nifti` of the result reproduces dims and
/// voxel data bit-exactly and spacing/orientation to 1e-6.
pub fn write_nifti(volume: &Volume, path: impl AsRef<Path>) -> Result<(), VolioError> {
    std::fs::write(path, write_nifti_bytes(volume))?;
    Ok(())
}

/// Serializes a mask's label grid as uint8 NIfTI-1 bytes.
pub fn write_mask_nifti_bytes(mask: &Mask) -> Vec<u8> {
    encode(
        mask.dims(),
        mask.spacing(),
        mask.orientation(),
        b"kind=labels",
        DataType::UInt8,
        |buf| buf.extend_from_slice(mask.labels()),
    )
}

/// Writes a label mask as a uint8 NIfTI-1 file.
pub fn write_mask_nifti(mask: &Mask, path: impl AsRef<Path>) -> Result<(), VolioError> {
    std::fs::write(path, write_mask_nifti_bytes(mask))?;
    Ok(())
}

/// Reads a label mask written by [`write_mask_nifti`] (or any NIfTI whose
/// values are exactly 0/1/2 = background/liver/tumor).
pub fn read_mask_nifti(path: impl AsRef<Path>) -> Result<Mask, VolioError> {
    let v = read_nifti(path)?;
    let mut labels = Vec::with_capacity(v.num_voxels());
    for (i, &x) in v.data().iter().enumerate() {
        let rounded = x.round();
        if (x - rounded).abs() > 1e-3 || !(0.0..=2.0).contains(&rounded) {
            return Err(VolioError::InvalidGrid(format!(
                "voxel {i} = {x} is not a 0/1/2 label"
            )));
        }
        labels.push(rounded as u8);
    }
    Mask::new(
        v.dims(),
        v.spacing(),
        *v.orientation(),
        labels,
        standard_label_map(),
    )
}

fn encode(
    dims: [usize; 3],
    spacing: [f32; 3],
    orientation: &Orientation,
    descrip: &[u8],
    datatype: DataType,
    write_data: impl FnOnce(&mut Vec<u8>),
) -> Vec<u8> {
    let code = match datatype {
        DataType::UInt8 => 2i16,
        DataType::Int16 => 4,
        DataType::Int32 => 8,
        DataType::Float32 => 16,
        DataType::Float64 => 64,
    };
    let mut buf = vec![0u8; WRITE_VOX_OFFSET];
    LittleEndian::write_i32(&mut buf[0..4], HEADER_SIZE as i32);
    LittleEndian::write_i16(&mut buf[offset::DIM..offset::DIM + 2], 3);
    for a in 0..3 {
        LittleEndian::write_i16(
            &mut buf[offset::DIM + 2 + 2 * a..offset::DIM + 4 + 2 * a],
            dims[a] as i16,
        );
    }
    for a in 3..7 {
        LittleEndian::write_i16(&mut buf[offset::DIM + 2 + 2 * a..offset::DIM + 4 + 2 * a], 1);
    }
    LittleEndian::write_i16(&mut buf[offset::DATATYPE..offset::DATATYPE + 2], code);
    LittleEndian::write_i16(
        &mut buf[offset::BITPIX..offset::BITPIX + 2],
        (datatype.byte_size() * 8) as i16,
    );
    LittleEndian::write_f32(&mut buf[offset::PIXDIM..offset::PIXDIM + 4], 1.0);
    for a in 0..3 {
        LittleEndian::write_f32(
            &mut buf[offset::PIXDIM + 4 * (a + 1)..offset::PIXDIM + 4 * (a + 2)],
            spacing[a],
        );
    }
    LittleEndian::write_f32(
        &mut buf[offset::VOX_OFFSET..offset::VOX_OFFSET + 4],
        WRITE_VOX_OFFSET as f32,
    );
    LittleEndian::write_f32(&mut buf[offset::SCL_SLOPE..offset::SCL_SLOPE + 4], 1.0);
    LittleEndian::write_f32(&mut buf[offset::SCL_INTER..offset::SCL_INTER + 4], 0.0);
    let n = descrip.len().min(79);
    buf[offset::DESCRIP..offset::DESCRIP + n].copy_from_slice(&descrip[..n]);
    LittleEndian::write_i16(&mut buf[offset::QFORM_CODE..offset::QFORM_CODE + 2], 0);
    LittleEndian::write_i16(&mut buf[offset::SFORM_CODE..offset::SFORM_CODE + 2], 1);
    for o in [offset::QUATERN_B, offset::QUATERN_B + 4, offset::QUATERN_B + 8] {
        LittleEndian::write_f32(&mut buf[o..o + 4], 0.0);
    }
    for o in [offset::QOFFSET_X, offset::QOFFSET_X + 4, offset::QOFFSET_X + 8] {
        LittleEndian::write_f32(&mut buf[o..o + 4], 0.0);
    }
    // srow rows: anatomical axis perm[j] advances by ±spacing[j] per step
    // along storage axis j.
    let rows = [offset::SROW_X, offset::SROW_Y, offset::SROW_Z];
    for j in 0..3 {
        let row = rows[orientation.perm[j]];
        let sign = if orientation.flip[j] { -1.0 } else { 1.0 };
        LittleEndian::write_f32(&mut buf[row + 4 * j..row + 4 * j + 4], sign * spacing[j]);
    }
    buf[offset::MAGIC..offset::MAGIC + 4].copy_from_slice(b"n+1\0");
    write_data(&mut buf);
    buf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volio::types::VoxelKind;

    fn sample_volume() -> Volume {
        Volume::new(
            [2, 2, 2],
            [0.7, 0.7, 2.5],
            Orientation {
                perm: [1, 0, 2],
                flip: [false, true, false],
            },
            VoxelKind::Hu,
            vec![-1000.0, -150.0, 0.0, 40.0, 77.5, 250.0, 1000.0, 3000.0],
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_preserves_everything() {
        let v = sample_volume();
        let back = read_nifti_bytes(&write_nifti_bytes(&v)).unwrap();
        assert_eq!(back.dims(), v.dims());
        assert_eq!(back.kind(), v.kind());
        assert_eq!(back.orientation(), v.orientation());
        for a in 0..3 {
            assert!((back.spacing()[a] - v.spacing()[a]).abs() < 1e-6);
        }
        for (x, y) in back.data().iter().zip(v.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    /// Hand-built header: int16 payload with slope 2, intercept -1000.
    #[test]
    fn slope_intercept_rescaling() {
        let mut bytes = minimal_int16_header([2, 2, 2]);
        LittleEndian::write_f32(&mut bytes[offset::SCL_SLOPE..offset::SCL_SLOPE + 4], 2.0);
        LittleEndian::write_f32(&mut bytes[offset::SCL_INTER..offset::SCL_INTER + 4], -1000.0);
        let raw: [i16; 8] = [0, 1, 2, 3, -4, 500, 1024, -32768];
        for v in raw {
            let mut le = [0u8; 2];
            LittleEndian::write_i16(&mut le, v);
            bytes.extend_from_slice(&le);
        }
        let vol = read_nifti_bytes(&bytes).unwrap();
        // Oracle: affine applied by hand to the 8-voxel fixture.
        let expected: Vec<f32> = raw.iter().map(|&v| 2.0 * v as f32 - 1000.0).collect();
        assert_eq!(vol.data(), &expected[..]);
    }

    #[test]
    fn identity_slope_casts_exactly() {
        let mut bytes = minimal_int16_header([2, 2, 2]);
        LittleEndian::write_f32(&mut bytes[offset::SCL_SLOPE..offset::SCL_SLOPE + 4], 1.0);
        for v in [-7i16, 0, 1, 2, 3, 4, 5, 32767] {
            let mut le = [0u8; 2];
            LittleEndian::write_i16(&mut le, v);
            bytes.extend_from_slice(&le);
        }
        let vol = read_nifti_bytes(&bytes).unwrap();
        assert_eq!(vol.data()[0], -7.0);
        assert_eq!(vol.data()[7], 32767.0);
    }

    #[test]
    fn byte_swapped_file_parses_identically() {
        let v = sample_volume();
        let native = write_nifti_bytes(&v);
        let swapped = byte_swap_nifti(&native);
        assert_eq!(
            LittleEndian::read_i32(&swapped[0..4]),
            1_543_569_408,
            "sizeof_hdr must read as byte-swapped 348"
        );
        let a = read_nifti_bytes(&native).unwrap();
        let b = read_nifti_bytes(&swapped).unwrap();
        assert_eq!(a.dims(), b.dims());
        assert_eq!(a.orientation(), b.orientation());
        assert_eq!(a.spacing(), b.spacing());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn typed_errors_for_bad_inputs() {
        // Too short for a header.
        assert!(matches!(
            read_nifti_bytes(&[0u8; 100]),
            Err(VolioError::TruncatedFile { .. })
        ));
        // Valid size, wrong magic.
        let mut bytes = vec![0u8; 352];
        LittleEndian::write_i32(&mut bytes[0..4], 348);
        assert!(matches!(
            read_nifti_bytes(&bytes),
            Err(VolioError::BadMagic(_))
        ));
        // Unsupported datatype.
        let mut bytes = minimal_int16_header([1, 1, 1]);
        LittleEndian::write_i16(&mut bytes[offset::DATATYPE..offset::DATATYPE + 2], 128);
        LittleEndian::write_i16(&mut bytes[offset::BITPIX..offset::BITPIX + 2], 0);
        assert!(matches!(
            read_nifti_bytes(&bytes),
            Err(VolioError::UnsupportedDatatype(128))
        ));
        // Data shorter than dims demand.
        let bytes = minimal_int16_header([4, 4, 4]);
        assert!(matches!(
            read_nifti_bytes(&bytes),
            Err(VolioError::TruncatedFile { .. })
        ));
        // NaN voxel.
        let mut bytes = minimal_header_with_datatype([1, 1, 1], 16, 32);
        let mut le = [0u8; 4];
        LittleEndian::write_f32(&mut le, f32::NAN);
        bytes.extend_from_slice(&le);
        assert!(matches!(
            read_nifti_bytes(&bytes),
            Err(VolioError::NonFinite { index: 0 })
        ));
    }

    #[test]
    fn mask_roundtrip() {
        let mask = Mask::new(
            [3, 2, 1],
            [1.0, 1.5, 2.0],
            Orientation::identity(),
            vec![0, 1, 2, 2, 1, 0],
            standard_label_map(),
        )
        .unwrap();
        let bytes = write_mask_nifti_bytes(&mask);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.nii");
        std::fs::write(&path, bytes).unwrap();
        let back = read_mask_nifti(&path).unwrap();
        assert_eq!(back.labels(), mask.labels());
        assert_eq!(back.dims(), mask.dims());
    }

    pub(super) fn minimal_int16_header(dims: [usize; 3]) -> Vec<u8> {
        minimal_header_with_datatype(dims, 4, 16)
    }

    pub(super) fn minimal_header_with_datatype(
        dims: [usize; 3],
        datatype: i16,
        bitpix: i16,
    ) -> Vec<u8> {
        let mut bytes = vec![0u8; HEADER_SIZE];
        LittleEndian::write_i32(&mut bytes[0..4], HEADER_SIZE as i32);
        LittleEndian::write_i16(&mut bytes[offset::DIM..offset::DIM + 2], 3);
        for a in 0..3 {
            LittleEndian::write_i16(
                &mut bytes[offset::DIM + 2 + 2 * a..offset::DIM + 4 + 2 * a],
                dims[a] as i16,
            );
        }
        LittleEndian::write_i16(&mut bytes[offset::DATATYPE..offset::DATATYPE + 2], datatype);
        LittleEndian::write_i16(&mut bytes[offset::BITPIX..offset::BITPIX + 2], bitpix);
        for a in 1..=3 {
            LittleEndian::write_f32(
                &mut bytes[offset::PIXDIM + 4 * a..offset::PIXDIM + 4 * a + 4],
                1.0,
            );
        }
        LittleEndian::write_f32(
            &mut bytes[offset::VOX_OFFSET..offset::VOX_OFFSET + 4],
            HEADER_SIZE as f32,
        );
        bytes[offset::MAGIC..offset::MAGIC + 4].copy_from_slice(b"n+1\0");
        bytes
    }

    /// Independent byte-swapper: rewrites every multi-byte header field and
    /// the int-or-float payload in the opposite byte order.
    pub(super) fn byte_swap_nifti(native: &[u8]) -> Vec<u8> {
        let mut out = native.to_vec();
        let swap32 = |buf: &mut [u8], at: usize| buf[at..at + 4].reverse();
        let swap16 = |buf: &mut [u8], at: usize| buf[at..at + 2].reverse();
        swap32(&mut out, 0); // sizeof_hdr
        for i in 0..8 {
            swap16(&mut out, offset::DIM + 2 * i);
        }
        swap16(&mut out, offset::DATATYPE);
        swap16(&mut out, offset::BITPIX);
        for i in 0..8 {
            swap32(&mut out, offset::PIXDIM + 4 * i);
        }
        swap32(&mut out, offset::VOX_OFFSET);
        swap32(&mut out, offset::SCL_SLOPE);
        swap32(&mut out, offset::SCL_INTER);
        swap16(&mut out, offset::QFORM_CODE);
        swap16(&mut out, offset::SFORM_CODE);
        for i in 0..3 {
            swap32(&mut out, offset::QUATERN_B + 4 * i);
            swap32(&mut out, offset::QOFFSET_X + 4 * i);
        }
        for row in [offset::SROW_X, offset::SROW_Y, offset::SROW_Z] {
            for c in 0..4 {
                swap32(&mut out, row + 4 * c);
            }
        }
        // float32 payload written by this crate: 4-byte elements.
        let mut at = WRITE_VOX_OFFSET;
        while at + 4 <= out.len() {
            out[at..at + 4].reverse();
            at += 4;
        }
        out
    }
}
