//! Grayscale portable-graymap (P5) dumps for visual inspection.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Field;

/// Write one image, min/max normalized to 0..255.
pub fn write_gray(path: &Path, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    if values.len() != rows * cols {
        return Err(Error::invalid("pixel count does not match image extents"));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(w, "P5\n{cols} {rows}\n255\n")?;
    let bytes: Vec<u8> = values
        .iter()
        .map(|&v| (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8)
        .collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Dump a field: 2-D fields directly, 3-D fields as the given z slice
/// (default: the top layer).
pub fn dump_field(field: &Field, z: Option<usize>, path: &Path) -> Result<()> {
    match field.dims() {
        2 => write_gray(path, field.extents[0], field.extents[1], &field.values),
        3 => {
            let (nx, ny, nz) = (field.extents[0], field.extents[1], field.extents[2]);
            let z = z.unwrap_or(nz - 1);
            if z >= nz {
                return Err(Error::invalid(format!("z slice {z} out of range 0..{nz}")));
            }
            let slice: Vec<f64> = (0..nx * ny)
                .map(|p| field.values[p * nz + z])
                .collect();
            write_gray(path, nx, ny, &slice)
        }
        d => Err(Error::invalid(format!("cannot dump a {d}-D field"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_a_valid_p5_header_and_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pgm");
        let f = Field::new("u", vec![4, 6], (0..24).map(|i| i as f64).collect());
        dump_field(&f, None, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n6 4\n255\n"));
        assert_eq!(bytes.len(), "P5\n6 4\n255\n".len() + 24);
        assert_eq!(*bytes.last().unwrap(), 255);
    }

    #[test]
    fn three_d_fields_dump_one_slice() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let f = Field::new("t", vec![4, 4, 2], (0..32).map(|i| i as f64).collect());
        dump_field(&f, Some(0), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n4 4\n255\n"));
        assert!(dump_field(&f, Some(5), &path).is_err());
    }
}
