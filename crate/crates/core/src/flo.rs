//! Middlebury `.flo` flow-field format.
//!
//! Layout: 4-byte magic `PIEH`, little-endian `i32` width and height, then
//! `width * height` interleaved `(u, v)` little-endian `f32` pairs in
//! row-major order. Components with magnitude above [`UNKNOWN_THRESHOLD`]
//! follow the format's "unknown flow" convention and are replaced by `(0, 0)`
//! on read.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::FlowField;

pub const MAGIC: [u8; 4] = *b"PIEH";

/// Magnitude beyond which a component is treated as the "unknown" sentinel.
pub const UNKNOWN_THRESHOLD: f32 = 1e9;

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);

    let mut magic = [0u8; 4];
    reader
        .read_exact(&mut magic)
        .map_err(|e| Error::io(path, e))?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}, expected \"PIEH\"",
            path.display(),
            magic
        )));
    }

    let width = read_i32(&mut reader, path)?;
    let height = read_i32(&mut reader, path)?;
    if width <= 0 || height <= 0 {
        return Err(Error::Format(format!(
            "{}: non-positive dimensions {width}x{height}",
            path.display()
        )));
    }

    let count = width as usize * height as usize;
    let mut payload = vec![0u8; count * 8];
    reader.read_exact(&mut payload).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format(format!(
                "{}: truncated payload, expected {} bytes of flow data",
                path.display(),
                count * 8
            ))
        } else {
            Error::io(path, e)
        }
    })?;

    let mut vectors = Vec::with_capacity(count);
    for i in 0..count {
        let u = f32::from_le_bytes(payload[i * 8..i * 8 + 4].try_into().unwrap());
        let v = f32::from_le_bytes(payload[i * 8 + 4..i * 8 + 8].try_into().unwrap());
        if !u.is_finite() || !v.is_finite() {
            return Err(Error::Format(format!(
                "{}: non-finite flow component at pixel {i}",
                path.display()
            )));
        }
        if u.abs() > UNKNOWN_THRESHOLD || v.abs() > UNKNOWN_THRESHOLD {
            vectors.push([0.0, 0.0]);
        } else {
            vectors.push([u, v]);
        }
    }

    FlowField::new(width as u32, height as u32, vectors)
}

pub fn write_flo(field: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);

    writer.write_all(&MAGIC).map_err(|e| Error::io(path, e))?;
    writer
        .write_all(&(field.width() as i32).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    writer
        .write_all(&(field.height() as i32).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    for v in field.vectors() {
        writer
            .write_all(&v[0].to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
        writer
            .write_all(&v[1].to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn read_i32(reader: &mut impl Read, path: &Path) -> Result<i32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(i32::from_le_bytes(buf))
}
