//! Binary cube and mask files.
//!
//! Both formats are little-endian: a 4-byte magic, `u32` version (1), `u32`
//! `nx`, `ny`, `nb`, then the payload in linear index order. Cubes carry one
//! `f64` per voxel (`THZC`); masks carry one `u8` (0/1) per voxel (`THZM`).

use std::fs;
use std::path::Path;

use super::{checked_volume, Datacube, Mask};
use crate::error::{Error, Result};

const CUBE_MAGIC: &[u8; 4] = b"THZC";
const MASK_MAGIC: &[u8; 4] = b"THZM";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

pub fn write_cube(cube: &Datacube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = header(CUBE_MAGIC, cube.dims(), cube.len() * 8);
    for v in cube.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<Datacube> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ((nx, ny, nb), payload) = parse_header(path, &bytes, CUBE_MAGIC, 8)?;
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Datacube::new(nx, ny, nb, values).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn write_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = header(MASK_MAGIC, mask.dims(), mask.observed().len());
    buf.extend(mask.observed().iter().map(|&o| o as u8));
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ((nx, ny, nb), payload) = parse_header(path, &bytes, MASK_MAGIC, 1)?;
    let observed = payload
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!("mask byte {other} is not 0 or 1"),
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    Mask::new(nx, ny, nb, observed)
}

fn header(magic: &[u8; 4], (nx, ny, nb): (usize, usize, usize), payload: usize) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + payload);
    buf.extend_from_slice(magic);
    for v in [VERSION, nx as u32, ny as u32, nb as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

fn parse_header<'a>(
    path: &Path,
    bytes: &'a [u8],
    magic: &[u8; 4],
    value_size: usize,
) -> Result<((usize, usize, usize), &'a [u8])> {
    let format_err = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < HEADER_LEN {
        return Err(format_err(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    if &bytes[..4] != magic {
        return Err(format_err(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let (nx, ny, nb) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let count = checked_volume(nx, ny, nb)
        .ok()
        .filter(|n| n.checked_mul(value_size).is_some())
        .ok_or_else(|| format_err(format!("invalid dimensions {nx}x{ny}x{nb}")))?;
    let payload = &bytes[HEADER_LEN..];
    let found = payload.len() / value_size;
    if payload.len() != count * value_size {
        if payload.len() < count * value_size {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: count,
                found,
            });
        }
        return Err(format_err(format!(
            "{} trailing bytes after {count} values",
            payload.len() - count * value_size
        )));
    }
    Ok(((nx, ny, nb), payload))
}
