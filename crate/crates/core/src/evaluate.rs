//! Frame-wise detection evaluation: localization error, confusion counts and
//! accuracy sweeps.
//!
//! The localization error is an isometric score relative to the annotated
//! mask geometry: 0 at the annotated center `A`, 1 on the mask contour and
//! greater than 1 outside. For a detection `B`, `C` is the mask-contour point
//! nearest to `B`; inside the mask the score is `|AB| / (|AB| + |BC|)`,
//! outside it is `|BC| / |AC| + 1`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::contour::trace_contours;
use crate::error::{Error, Result};
use crate::field::BinaryMask;
use crate::geom::Point;
use crate::imageio::read_mask;

/// Annotated ground truth for one sequence: a single-component mask, its
/// center point and the frame intervals during which the bottleneck exists.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    mask: BinaryMask,
    center_a: Point,
    active_intervals: Vec<(usize, usize)>,
    contour: Vec<Point>,
}

impl GroundTruth {
    pub fn new(
        mask: BinaryMask,
        center_a: Point,
        active_intervals: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if mask.count_ones() == 0 {
            return Err(Error::Format("ground-truth mask is empty".into()));
        }
        let components = crate::contour::connected_components(&mask).count();
        if components != 1 {
            return Err(Error::Format(format!(
                "ground-truth mask has {components} components; one bottleneck mask per sequence"
            )));
        }
        let cx = center_a.x.round();
        let cy = center_a.y.round();
        let inside = cx >= 0.0
            && cy >= 0.0
            && cx < mask.width() as f64
            && cy < mask.height() as f64
            && mask.get(cx as u32, cy as u32);
        if !inside {
            return Err(Error::Format(format!(
                "ground-truth center ({}, {}) lies outside the mask",
                center_a.x, center_a.y
            )));
        }
        let mut last_end: Option<usize> = None;
        for &(t0, t1) in &active_intervals {
            if t1 < t0 {
                return Err(Error::Format(format!(
                    "active interval {t0}-{t1} is reversed"
                )));
            }
            if let Some(prev) = last_end {
                if t0 <= prev {
                    return Err(Error::Format(
                        "active intervals must be sorted and non-overlapping".into(),
                    ));
                }
            }
            last_end = Some(t1);
        }
        let contours = trace_contours(&mask, 0.0);
        let contour = contours
            .into_iter()
            .next()
            .map(|c| c.points().to_vec())
            .unwrap_or_default();
        Ok(GroundTruth {
            mask,
            center_a,
            active_intervals,
            contour,
        })
    }

    /// Parses the ground-truth document format:
    ///
    /// ```text
    /// mask = masks/scene.pgm
    /// center = 96,59.5
    /// active = 24-299,310-350
    /// ```
    ///
    /// The mask path is resolved relative to the document. Unknown keys are
    /// rejected.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;

        let mut mask_path: Option<PathBuf> = None;
        let mut center: Option<Point> = None;
        let mut active: Option<Vec<(usize, usize)>> = None;

        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!(
                    "{}:{}: expected `key = value`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "mask" => {
                    if mask_path.is_some() {
                        return Err(Error::Format(format!(
                            "{}: duplicate key `mask`",
                            path.display()
                        )));
                    }
                    let p = PathBuf::from(value);
                    mask_path = Some(if p.is_absolute() {
                        p
                    } else {
                        path.parent().unwrap_or(Path::new(".")).join(p)
                    });
                }
                "center" => {
                    if center.is_some() {
                        return Err(Error::Format(format!(
                            "{}: duplicate key `center`",
                            path.display()
                        )));
                    }
                    let (x, y) = value.split_once(',').ok_or_else(|| {
                        Error::Format(format!("{}: center must be `<x>,<y>`", path.display()))
                    })?;
                    let parse = |s: &str| {
                        s.trim().parse::<f64>().map_err(|_| {
                            Error::Format(format!(
                                "{}: bad center coordinate `{s}`",
                                path.display()
                            ))
                        })
                    };
                    center = Some(Point::new(parse(x)?, parse(y)?));
                }
                "active" => {
                    if active.is_some() {
                        return Err(Error::Format(format!(
                            "{}: duplicate key `active`",
                            path.display()
                        )));
                    }
                    let mut intervals = Vec::new();
                    for span in value.split(',') {
                        let (a, b) = span.trim().split_once('-').ok_or_else(|| {
                            Error::Format(format!(
                                "{}: active interval must be `<t0>-<t1>`",
                                path.display()
                            ))
                        })?;
                        let parse = |s: &str| {
                            s.trim().parse::<usize>().map_err(|_| {
                                Error::Format(format!("{}: bad frame `{s}`", path.display()))
                            })
                        };
                        intervals.push((parse(a)?, parse(b)?));
                    }
                    active = Some(intervals);
                }
                other => {
                    return Err(Error::Format(format!(
                        "{}: unknown key `{other}`",
                        path.display()
                    )));
                }
            }
        }

        let mask_path =
            mask_path.ok_or_else(|| Error::Format(format!("{}: missing `mask`", path.display())))?;
        let center =
            center.ok_or_else(|| Error::Format(format!("{}: missing `center`", path.display())))?;
        let active =
            active.ok_or_else(|| Error::Format(format!("{}: missing `active`", path.display())))?;

        GroundTruth::new(read_mask(mask_path)?, center, active)
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn center(&self) -> Point {
        self.center_a
    }

    pub fn active_intervals(&self) -> &[(usize, usize)] {
        &self.active_intervals
    }

    pub fn contour(&self) -> &[Point] {
        &self.contour
    }

    pub fn is_active(&self, frame: usize) -> bool {
        self.active_intervals
            .iter()
            .any(|&(t0, t1)| frame >= t0 && frame <= t1)
    }

    fn contains(&self, p: Point) -> bool {
        let x = p.x.round();
        let y = p.y.round();
        x >= 0.0
            && y >= 0.0
            && x < self.mask.width() as f64
            && y < self.mask.height() as f64
            && self.mask.get(x as u32, y as u32)
    }
}

/// Localization error of a detection center against the ground truth.
///
/// Contour pixels belong to the mask, so a detection exactly on the contour
/// evaluates through the inside branch with `|BC| = 0`, giving exactly 1. A
/// degenerate single-pixel mask where `C == A` makes the outside branch
/// divide by zero; positive infinity is returned, consistent with "outside"
/// scores living in `(1, inf]`.
pub fn localization_error(detection_center: Point, gt: &GroundTruth) -> f64 {
    let b = detection_center;
    let a = gt.center();
    let c = gt
        .contour()
        .iter()
        .copied()
        .min_by(|p, q| p.distance(b).total_cmp(&q.distance(b)))
        .expect("ground-truth contour is non-empty");

    let ab = a.distance(b);
    let bc = b.distance(c);
    if gt.contains(b) {
        if ab == 0.0 {
            0.0
        } else {
            ab / (ab + bc)
        }
    } else {
        let ac = a.distance(c);
        if ac == 0.0 {
            f64::INFINITY
        } else {
            bc / ac + 1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

/// Frame-wise binary classification: an active frame counts TP when any
/// detection scores within the threshold (else FN); an inactive frame counts
/// FP when any detection exists at all (else TN). Each frame contributes
/// exactly one count.
pub fn confusion_at_threshold(
    detections_per_frame: &BTreeMap<usize, Vec<f64>>,
    gt: &GroundTruth,
    epsilon_threshold: f64,
    frames: &[usize],
) -> Confusion {
    let mut c = Confusion::default();
    for &frame in frames {
        let dets = detections_per_frame.get(&frame).map(Vec::as_slice).unwrap_or(&[]);
        if gt.is_active(frame) {
            if dets.iter().any(|&e| e <= epsilon_threshold) {
                c.tp += 1;
            } else {
                c.fn_ += 1;
            }
        } else if !dets.is_empty() {
            c.fp += 1;
        } else {
            c.tn += 1;
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRow {
    pub epsilon: f64,
    pub confusion: Confusion,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRow {
    pub frame: usize,
    pub center: Point,
    pub epsilon_d: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<ThresholdRow>,
    pub detections: Vec<DetectionRow>,
}

impl MetricReport {
    /// CSV with header `epsilon,tp,fp,tn,fn,accuracy`.
    pub fn report_csv(&self) -> String {
        let mut out = String::from("epsilon,tp,fp,tn,fn,accuracy\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6}\n",
                row.epsilon,
                row.confusion.tp,
                row.confusion.fp,
                row.confusion.tn,
                row.confusion.fn_,
                row.accuracy
            ));
        }
        out
    }

    /// CSV with header `frame,cx,cy,epsilon_d`.
    pub fn per_detection_csv(&self) -> String {
        let mut out = String::from("frame,cx,cy,epsilon_d\n");
        for d in &self.detections {
            out.push_str(&format!(
                "{},{:.2},{:.2},{:.6}\n",
                d.frame, d.center.x, d.center.y, d.epsilon_d
            ));
        }
        out
    }
}

/// Scores every detection, then counts one confusion row per threshold.
pub fn accuracy_sweep(
    detections: &BTreeMap<usize, Vec<Point>>,
    gt: &GroundTruth,
    thresholds: &[f64],
    frames: &[usize],
) -> MetricReport {
    let mut per_frame_eps: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut detection_rows = Vec::new();
    for (&frame, centers) in detections {
        let eps: Vec<f64> = centers
            .iter()
            .map(|&c| localization_error(c, gt))
            .collect();
        for (&center, &epsilon_d) in centers.iter().zip(&eps) {
            detection_rows.push(DetectionRow {
                frame,
                center,
                epsilon_d,
            });
        }
        per_frame_eps.insert(frame, eps);
    }

    let rows = thresholds
        .iter()
        .map(|&epsilon| {
            let confusion = confusion_at_threshold(&per_frame_eps, gt, epsilon, frames);
            ThresholdRow {
                epsilon,
                accuracy: confusion.accuracy(),
                confusion,
            }
        })
        .collect();

    MetricReport {
        rows,
        detections: detection_rows,
    }
}
