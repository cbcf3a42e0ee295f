//! Binary grid files and CSV helpers.
//!
//! Grid file layout (little-endian):
//! magic `ATGR` (4 bytes), version `u32`, samples-per-axis `u32`,
//! half-width `f64`, domain tag `u8` (0 = aperture plane, 1 = layer plane),
//! layer index `u32` (`0xFFFF_FFFF` for aperture fields), then the
//! row-major `n*n` payload as `f64`. Round trips are bit-exact.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::field::{DomainTag, Field2D};
use crate::geometry::GridSpec;

const GRID_MAGIC: &[u8; 4] = b"ATGR";
const GRID_VERSION: u32 = 1;
const NO_LAYER: u32 = u32::MAX;

/// Writes a field to the binary grid format.
pub fn write_grid(path: &Path, field: &Field2D) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(GRID_MAGIC)?;
    w.write_u32::<LittleEndian>(GRID_VERSION)?;
    w.write_u32::<LittleEndian>(field.grid.n as u32)?;
    w.write_f64::<LittleEndian>(field.grid.half_width)?;
    match field.domain {
        DomainTag::Aperture => {
            w.write_u8(0)?;
            w.write_u32::<LittleEndian>(NO_LAYER)?;
        }
        DomainTag::Layer(l) => {
            w.write_u8(1)?;
            w.write_u32::<LittleEndian>(l as u32)?;
        }
    }
    for v in &field.values {
        w.write_f64::<LittleEndian>(*v)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a field back, validating magic, version and payload length.
pub fn read_grid(path: &Path) -> Result<Field2D> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != GRID_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}",
            path.display(),
            magic
        )));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != GRID_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported grid version {version}",
            path.display()
        )));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let half_width = r.read_f64::<LittleEndian>()?;
    let tag = r.read_u8()?;
    let layer = r.read_u32::<LittleEndian>()?;
    let domain = match (tag, layer) {
        (0, NO_LAYER) => DomainTag::Aperture,
        (1, l) if l != NO_LAYER => DomainTag::Layer(l as usize),
        _ => {
            return Err(Error::Format(format!(
                "{}: inconsistent domain tag {tag}/{layer}",
                path.display()
            )))
        }
    };
    let grid = GridSpec::new(n, half_width)?;
    let mut values = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        values.push(r.read_f64::<LittleEndian>()?);
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(Error::Format(format!(
            "{}: trailing bytes after payload",
            path.display()
        )));
    }
    Ok(Field2D {
        grid,
        domain,
        values,
    })
}

/// Writes rows of numeric CSV with a header line.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
