//! Overlay rendering (contours, hulls, defects, detections over source
//! frames) and accuracy-curve extraction from report files.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::pipeline::{run, FrameOutput, PipelineConfig};

const CONTOUR: Rgb<u8> = Rgb([60, 220, 60]);
const HULL: Rgb<u8> = Rgb([80, 180, 255]);
const DEFECT: Rgb<u8> = Rgb([255, 80, 80]);
const CANDIDATE: Rgb<u8> = Rgb([250, 220, 60]);
const CONFIRMED: Rgb<u8> = Rgb([255, 60, 255]);

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn draw_line(img: &mut RgbImage, a: Point, b: Point, color: Rgb<u8>) {
    let (mut x0, mut y0) = (a.x.round() as i64, a.y.round() as i64);
    let (x1, y1) = (b.x.round() as i64, b.y.round() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn draw_cross(img: &mut RgbImage, p: Point, arm: i64, color: Rgb<u8>) {
    let (x, y) = (p.x.round() as i64, p.y.round() as i64);
    for d in -arm..=arm {
        put(img, x + d, y, color);
        put(img, x, y + d, color);
    }
}

fn draw_circle(img: &mut RgbImage, center: Point, radius: f64, color: Rgb<u8>) {
    let steps = (radius.max(2.0) * 8.0) as usize;
    for i in 0..steps {
        let t = i as f64 / steps as f64 * std::f64::consts::TAU;
        put(
            img,
            (center.x + radius * t.cos()).round() as i64,
            (center.y + radius * t.sin()).round() as i64,
            color,
        );
    }
}

/// Grayscale rendering of the forward filtered field as a fallback backdrop.
fn field_backdrop(frame: &FrameOutput) -> RgbImage {
    let base = frame.bar_forward.base();
    let (min, max) = base.min_max();
    let span = if max > min { max - min } else { 1.0 };
    let mut img = RgbImage::new(base.width(), base.height());
    for y in 0..base.height() {
        for x in 0..base.width() {
            let g = (((base.get(x, y) - min) / span) * 255.0).round() as u8;
            img.put_pixel(x, y, Rgb([g, g, g]));
        }
    }
    img
}

fn source_image(images_dir: &Path, frame: usize) -> Option<RgbImage> {
    for ext in ["png", "ppm", "pgm"] {
        let path = images_dir.join(format!("frame_{frame:06}.{ext}"));
        if path.exists() {
            if let Ok(img) = crate::imageio::read_rgb(&path) {
                return Some(img);
            }
        }
    }
    None
}

fn draw_frame(img: &mut RgbImage, frame: &FrameOutput, sigma_r: f64) {
    for contour in frame.contours {
        for p in contour.points() {
            put(img, p.x.round() as i64, p.y.round() as i64, CONTOUR);
        }
        for i in 0..contour.hull.len() {
            let a = contour.points()[contour.hull[i]];
            let b = contour.points()[contour.hull[(i + 1) % contour.hull.len()]];
            draw_line(img, a, b, HULL);
        }
        for d in &contour.defects {
            draw_cross(img, contour.points()[d.farthest_index], 1, DEFECT);
        }
    }
    for det in frame.detections {
        draw_cross(img, det.center, 2, CANDIDATE);
    }
    for det in frame.confirmed {
        draw_cross(img, det.center, 3, CONFIRMED);
        draw_circle(img, det.center, sigma_r / 2.0, CONFIRMED);
    }
}

/// Runs the pipeline and writes `overlay_%06d.png` per emitted reference
/// frame. Source frames named `frame_%06d.{png,ppm,pgm}` are used as
/// backdrops when `images_dir` holds them; the forward filtered field is
/// rendered otherwise.
pub fn render_overlays(
    config: &PipelineConfig,
    images_dir: Option<&Path>,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    run(config, |frame| {
        let mut img = images_dir
            .and_then(|d| source_image(d, frame.reference_frame))
            .unwrap_or_else(|| field_backdrop(frame));
        draw_frame(&mut img, frame, config.detector.sigma_r);
        let path = out_dir.join(format!("overlay_{:06}.png", frame.reference_frame));
        img.save(&path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        written.push(path);
        Ok(())
    })?;
    Ok(written)
}

/// Extracts the `epsilon,accuracy` columns of a report CSV into a standalone
/// curve file.
pub fn extract_accuracy_curve(
    report_path: impl AsRef<Path>,
    out_path: impl AsRef<Path>,
) -> Result<()> {
    let report_path = report_path.as_ref();
    let text = std::fs::read_to_string(report_path).map_err(|e| Error::io(report_path, e))?;
    let mut out = String::from("epsilon,accuracy\n");
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line != "epsilon,tp,fp,tn,fn,accuracy" {
                return Err(Error::Format(format!(
                    "{}: not a report file (unexpected header)",
                    report_path.display()
                )));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Format(format!(
                "{}:{}: expected 6 columns",
                report_path.display(),
                lineno + 1
            )));
        }
        out.push_str(&format!("{},{}\n", fields[0], fields[5]));
    }
    let out_path = out_path.as_ref();
    std::fs::write(out_path, out).map_err(|e| Error::io(out_path, e))
}
