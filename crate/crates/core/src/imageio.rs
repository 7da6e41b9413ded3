//! Image input/output: binary masks, overlay sources and debug field dumps.
//!
//! Masks and overlay images are PGM/PPM (binary P5/P6) or PNG, dispatched by
//! content/extension through the `image` crate. FTLE debug dumps are 16-bit
//! PGM with the min-max normalization recorded in a text sidecar so raw
//! values stay recoverable.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader, Luma, RgbImage};

use crate::error::{Error, Result};
use crate::field::{BinaryMask, ScalarField};

fn open_image(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    reader
        .decode()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Loads a mask: any pixel with non-zero intensity is set.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let gray = open_image(path)?.into_luma8();
    let (w, h) = gray.dimensions();
    let bits = gray.pixels().map(|p| p[0] > 0).collect();
    BinaryMask::new(w, h, bits)
}

/// Writes a mask as 0/255 grayscale; format chosen by extension (.pgm/.png).
pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut img = GrayImage::new(mask.width(), mask.height());
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            img.put_pixel(x, y, Luma([if mask.get(x, y) { 255 } else { 0 }]));
        }
    }
    img.save(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Loads an overlay source image as RGB.
pub fn read_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    Ok(open_image(path.as_ref())?.into_rgb8())
}

/// Dumps a scalar field as 16-bit PGM, min-max normalized, and writes the
/// normalization bounds to `<path>.minmax.txt`.
pub fn write_scalar_pgm16(field: &ScalarField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (min, max) = field.min_max();
    let span = if max > min { max - min } else { 1.0 };
    let mut img = image::ImageBuffer::<Luma<u16>, Vec<u16>>::new(field.width(), field.height());
    for y in 0..field.height() {
        for x in 0..field.width() {
            let norm = (field.get(x, y) - min) / span;
            img.put_pixel(x, y, Luma([(norm * 65535.0).round() as u16]));
        }
    }
    img.save(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;

    let sidecar = path.with_extension("minmax.txt");
    std::fs::write(&sidecar, format!("value_min {min}\nvalue_max {max}\n"))
        .map_err(|e| Error::io(&sidecar, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_round_trip_pgm_and_png() {
        let dir = tempfile::tempdir().unwrap();
        let mut mask = BinaryMask::empty(7, 5).unwrap();
        mask.set(0, 0, true);
        mask.set(3, 2, true);
        mask.set(6, 4, true);
        for name in ["m.pgm", "m.png"] {
            let path = dir.path().join(name);
            write_mask(&mask, &path).unwrap();
            assert_eq!(read_mask(&path).unwrap(), mask);
        }
    }

    #[test]
    fn scalar_dump_writes_sidecar_with_bounds() {
        let dir = tempfile::tempdir().unwrap();
        let field = ScalarField::new(2, 2, vec![-1.5, 0.0, 0.5, 2.5]).unwrap();
        let path = dir.path().join("f.pgm");
        write_scalar_pgm16(&field, &path).unwrap();
        let sidecar = std::fs::read_to_string(dir.path().join("f.minmax.txt")).unwrap();
        assert!(sidecar.contains("value_min -1.5"));
        assert!(sidecar.contains("value_max 2.5"));
        // extremes map to 0 and 65535
        let img = image::open(&path).unwrap().into_luma16();
        assert_eq!(img.get_pixel(0, 0)[0], 0);
        assert_eq!(img.get_pixel(1, 1)[0], 65535);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_mask("/nonexistent/mask.pgm").unwrap_err();
        assert_eq!(err.category(), "io");
    }
}
