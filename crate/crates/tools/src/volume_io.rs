//! Flat binary volume (`LPV1`) and mask (`LPM1`) files: a four-byte magic,
//! three little-endian `u32` dimensions, then voxels with x varying fastest.

use std::fs;
use std::io::Write;
use std::path::Path;

use lesion_core::volume::{Dims, Mask, Volume};

use crate::error::{Error, Result};

pub const VOLUME_MAGIC: &[u8; 4] = b"LPV1";
pub const MASK_MAGIC: &[u8; 4] = b"LPM1";
const HEADER_LEN: usize = 16;

fn header(magic: &[u8; 4], dims: Dims) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(magic);
    for d in [dims.nx, dims.ny, dims.nz] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out
}

fn parse_header(path: &Path, bytes: &[u8], magic: &[u8; 4], voxel_size: usize) -> Result<Dims> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "file shorter than header"));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(
            path,
            format!("expected magic {:?}", String::from_utf8_lossy(magic)),
        ));
    }
    let dim = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes")) as usize;
    let dims = Dims::new(dim(0), dim(1), dim(2));
    let expected = HEADER_LEN + dims.len() * voxel_size;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!("grid {dims} needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    Ok(dims)
}

pub fn encode_volume(volume: &Volume) -> Vec<u8> {
    let mut out = header(VOLUME_MAGIC, volume.dims());
    out.reserve(volume.data().len() * 4);
    for v in volume.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_volume(path: &Path, bytes: &[u8]) -> Result<Volume> {
    let dims = parse_header(path, bytes, VOLUME_MAGIC, 4)?;
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Volume::new(dims, data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    let mut out = header(MASK_MAGIC, mask.dims());
    out.extend(mask.as_slice().iter().map(|&b| u8::from(b)));
    out
}

pub fn decode_mask(path: &Path, bytes: &[u8]) -> Result<Mask> {
    let dims = parse_header(path, bytes, MASK_MAGIC, 1)?;
    let data = bytes[HEADER_LEN..]
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::format(path, format!("mask value {other} is not 0 or 1"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    Mask::from_bools(dims, data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode_volume(path, &bytes)
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode_mask(path, &bytes)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(Error::io(path))?;
    f.write_all(bytes).map_err(Error::io(path))
}

pub fn write_volume(path: &Path, volume: &Volume) -> Result<()> {
    write_bytes(path, &encode_volume(volume))
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    write_bytes(path, &encode_mask(mask))
}
