//! 2D exports for visual inspection: CSV (rows are `y`, columns are `x`) and
//! binary 8-bit PGM with min-max normalization.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::Datacube;
use crate::error::{Error, Result};

pub fn write_slice_csv(cube: &Datacube, t: usize, path: impl AsRef<Path>) -> Result<()> {
    check_band(cube, t)?;
    write_map_csv(cube.nx(), cube.ny(), cube.frame(t), path)
}

pub fn write_slice_pgm(cube: &Datacube, t: usize, path: impl AsRef<Path>) -> Result<()> {
    check_band(cube, t)?;
    write_map_pgm(cube.nx(), cube.ny(), cube.frame(t), path)
}

fn check_band(cube: &Datacube, t: usize) -> Result<()> {
    if t >= cube.nb() {
        return Err(Error::InvalidArgument(format!(
            "band {t} out of range for {} bands",
            cube.nb()
        )));
    }
    Ok(())
}

/// Writes a row-major `ny x nx` map as CSV.
pub fn write_map_csv(nx: usize, ny: usize, values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    check_map(nx, ny, values)?;
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for row in values.chunks(nx) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes a row-major `ny x nx` map as a binary PGM (P5). Non-finite entries
/// render black.
pub fn write_map_pgm(nx: usize, ny: usize, values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    check_map(nx, ny, values)?;
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut buf = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    buf.extend(values.iter().map(|&v| {
        if v.is_finite() {
            (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn check_map(nx: usize, ny: usize, values: &[f64]) -> Result<()> {
    if nx == 0 || values.len() != nx * ny {
        return Err(Error::DimensionMismatch(format!(
            "map of {} values is not {nx}x{ny}",
            values.len()
        )));
    }
    Ok(())
}
