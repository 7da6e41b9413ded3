//! Crowd-flow contour segmentation: ridge maps, connected components,
//! boundary tracing and convexity defects.
//!
//! The low-threshold ridge maps of both FTLE directions are dilated and
//! OR-combined into the segmentation map whose component outlines are the
//! crowd-flow contours; the high-threshold maps are dilated and AND-combined
//! into the validation map holding only the most stable ridges.

use crate::error::{Error, Result};
use crate::field::BinaryMask;
use crate::ftle::FtleField;
use crate::geom::{cross, line_distance, Point};

/// Binarized ridge maps of one reference frame.
///
/// `m_low_*` / `m_high_*` are the raw thresholded maps; `m_seg` and `m_val`
/// are built from their dilated versions (OR of lows, AND of highs).
#[derive(Debug, Clone)]
pub struct RidgeMaps {
    pub m_low_fwd: BinaryMask,
    pub m_low_bwd: BinaryMask,
    pub m_high_fwd: BinaryMask,
    pub m_high_bwd: BinaryMask,
    pub m_seg: BinaryMask,
    pub m_val: BinaryMask,
    pub reference_frame: usize,
}

/// Thresholds already resolved to absolute values for one frame.
#[derive(Debug, Clone, Copy)]
pub struct RidgeThresholds {
    pub low_fwd: f64,
    pub high_fwd: f64,
    pub low_bwd: f64,
    pub high_bwd: f64,
}

/// Bit set iff the field value is strictly greater than the threshold.
pub fn binarize(field: &FtleField, threshold: f64) -> BinaryMask {
    debug_assert!(field.filtered(), "ridge maps are cut from filtered fields");
    let bits = field
        .base()
        .values()
        .iter()
        .map(|&v| v > threshold)
        .collect();
    BinaryMask::new(field.width(), field.height(), bits).expect("field dimensions are valid")
}

/// Morphological dilation with a square (2r+1) x (2r+1) structuring element.
///
/// Radius 0 is the identity. Implemented as two separable 1D passes.
pub fn dilate(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let r = radius as usize;
    let bits = mask.bits();

    // horizontal pass
    let mut horiz = vec![false; w * h];
    for y in 0..h {
        let row = &bits[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            horiz[y * w + x] = row[lo..=hi].iter().any(|&b| b);
        }
    }
    // vertical pass
    let mut out = vec![false; w * h];
    for x in 0..w {
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r).min(h - 1);
            out[y * w + x] = (lo..=hi).any(|yy| horiz[yy * w + x]);
        }
    }
    BinaryMask::new(mask.width(), mask.height(), out).expect("dimensions preserved")
}

/// Pixelwise OR of the dilated low maps and AND of the dilated high maps.
pub fn combine(
    low_fwd: &BinaryMask,
    low_bwd: &BinaryMask,
    high_fwd: &BinaryMask,
    high_bwd: &BinaryMask,
) -> Result<(BinaryMask, BinaryMask)> {
    let dims = (low_fwd.width(), low_fwd.height());
    for m in [low_bwd, high_fwd, high_bwd] {
        if (m.width(), m.height()) != dims {
            return Err(Error::Dimension(format!(
                "combine expects {}x{} masks, got {}x{}",
                dims.0,
                dims.1,
                m.width(),
                m.height()
            )));
        }
    }
    let seg: Vec<bool> = low_fwd
        .bits()
        .iter()
        .zip(low_bwd.bits())
        .map(|(&a, &b)| a | b)
        .collect();
    let val: Vec<bool> = high_fwd
        .bits()
        .iter()
        .zip(high_bwd.bits())
        .map(|(&a, &b)| a & b)
        .collect();
    Ok((
        BinaryMask::new(dims.0, dims.1, seg)?,
        BinaryMask::new(dims.0, dims.1, val)?,
    ))
}

/// Binarizes both filtered fields at both thresholds, dilates the four maps
/// and combines them into segmentation and validation maps.
pub fn build_ridge_maps(
    bar_fwd: &FtleField,
    bar_bwd: &FtleField,
    thresholds: RidgeThresholds,
    dilation_radius: u32,
) -> Result<RidgeMaps> {
    if (bar_fwd.width(), bar_fwd.height()) != (bar_bwd.width(), bar_bwd.height()) {
        return Err(Error::Dimension(
            "forward/backward filtered fields differ in size".into(),
        ));
    }
    let m_low_fwd = binarize(bar_fwd, thresholds.low_fwd);
    let m_high_fwd = binarize(bar_fwd, thresholds.high_fwd);
    let m_low_bwd = binarize(bar_bwd, thresholds.low_bwd);
    let m_high_bwd = binarize(bar_bwd, thresholds.high_bwd);
    let (m_seg, m_val) = combine(
        &dilate(&m_low_fwd, dilation_radius),
        &dilate(&m_low_bwd, dilation_radius),
        &dilate(&m_high_fwd, dilation_radius),
        &dilate(&m_high_bwd, dilation_radius),
    )?;
    Ok(RidgeMaps {
        m_low_fwd,
        m_low_bwd,
        m_high_fwd,
        m_high_bwd,
        m_seg,
        m_val,
        reference_frame: bar_fwd.reference_frame(),
    })
}

/// 8-connected component labels; 0 is background, components are numbered
/// from 1 in order of first raster occurrence.
#[derive(Debug, Clone)]
pub struct Labels {
    width: u32,
    height: u32,
    labels: Vec<u32>,
    count: u32,
    first_pixels: Vec<(u32, u32)>,
}

impl Labels {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    /// Topmost-leftmost pixel of each component, indexed by label - 1.
    pub fn first_pixels(&self) -> &[(u32, u32)] {
        &self.first_pixels
    }
}

const NEIGHBORS_8: [(i32, i32); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// 8-connected labeling by breadth-first fill seeded in raster order.
pub fn connected_components(mask: &BinaryMask) -> Labels {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w as usize * h as usize];
    let mut first_pixels = Vec::new();
    let mut next = 1u32;
    let mut queue = std::collections::VecDeque::new();

    for y in 0..h {
        for x in 0..w {
            let idx = y as usize * w as usize + x as usize;
            if !mask.bits()[idx] || labels[idx] != 0 {
                continue;
            }
            labels[idx] = next;
            first_pixels.push((x, y));
            queue.push_back((x, y));
            while let Some((cx, cy)) = queue.pop_front() {
                for (dx, dy) in NEIGHBORS_8 {
                    let nx = cx as i32 + dx;
                    let ny = cy as i32 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i32 || ny >= h as i32 {
                        continue;
                    }
                    let nidx = ny as usize * w as usize + nx as usize;
                    if mask.bits()[nidx] && labels[nidx] == 0 {
                        labels[nidx] = next;
                        queue.push_back((nx as u32, ny as u32));
                    }
                }
            }
            next += 1;
        }
    }

    Labels {
        width: w,
        height: h,
        labels,
        count: next - 1,
        first_pixels,
    }
}

/// A convexity defect: the contour vertex between two hull vertices with the
/// maximum perpendicular distance to the hull edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defect {
    pub start_index: usize,
    pub end_index: usize,
    pub farthest_index: usize,
    pub depth: f64,
}

/// Closed boundary polygon of one mask component.
#[derive(Debug, Clone)]
pub struct TracedContour {
    points: Vec<Point>,
    cumulative: Vec<f64>,
    arc_length: f64,
    pub hull: Vec<usize>,
    pub defects: Vec<Defect>,
}

impl TracedContour {
    /// Wraps an arbitrary closed polygon; consecutive points (including the
    /// closing pair) contribute their Euclidean distance to the arc length.
    pub fn from_polygon(points: Vec<Point>) -> Self {
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        for i in 0..points.len() {
            cumulative.push(acc);
            if i + 1 < points.len() {
                acc += points[i].distance(points[i + 1]);
            }
        }
        let closing = if points.len() > 1 {
            points[points.len() - 1].distance(points[0])
        } else {
            0.0
        };
        TracedContour {
            arc_length: acc + closing,
            points,
            cumulative,
            hull: Vec::new(),
            defects: Vec::new(),
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn arc_length(&self) -> f64 {
        self.arc_length
    }

    /// Arc position of point `i` measured from point 0 along the walk.
    pub fn arc_position(&self, i: usize) -> f64 {
        self.cumulative[i]
    }

    /// Minimum arc distance between two contour points along the closed walk.
    pub fn arc_between(&self, i: usize, j: usize) -> f64 {
        let d = (self.cumulative[i] - self.cumulative[j]).abs();
        d.min(self.arc_length - d)
    }
}

/// Index of the direction from `from` to `to` in the clockwise Moore ring,
/// starting west: W, NW, N, NE, E, SE, S, SW.
const MOORE_RING: [(i32, i32); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

fn ring_dir(delta: (i32, i32)) -> usize {
    MOORE_RING
        .iter()
        .position(|&d| d == delta)
        .expect("delta is an 8-neighbor offset")
}

/// Moore boundary following, clockwise, from the component's topmost-
/// leftmost pixel.
///
/// The walk stops when its `(pixel, backtrack)` state repeats. This subsumes
/// Jacob's stopping criterion and also terminates walks that keep re-entering
/// the start pixel from changing directions (one-pixel-wide spurs), where the
/// plain criterion cycles forever.
fn moore_trace(
    label_of: impl Fn(i32, i32) -> bool,
    start: (u32, u32),
    pixel_budget: usize,
) -> Vec<Point> {
    let start = (start.0 as i32, start.1 as i32);
    let mut points = vec![Point::new(start.0 as f64, start.1 as f64)];

    // entered scanning from the west; the west neighbor of the topmost-
    // leftmost pixel is always background
    let initial_state = (start, 0usize); // backtrack W
    let mut seen = std::collections::HashSet::new();
    seen.insert(initial_state);
    let (mut p, mut backtrack) = initial_state;
    // at most 8 distinct (pixel, backtrack) states per pixel, so the state
    // set forces a break well within this bound
    let budget = 8 * (pixel_budget + 2);

    for _ in 0..budget {
        let mut found = None;
        for step in 1..=8 {
            let dir = (backtrack + step) % 8;
            let q = (p.0 + MOORE_RING[dir].0, p.1 + MOORE_RING[dir].1);
            if label_of(q.0, q.1) {
                found = Some((q, dir));
                break;
            }
        }
        let Some((q, dir)) = found else {
            return points; // isolated pixel
        };
        // backtrack of the new pixel: the cell scanned just before it
        let prev_dir = (dir + 7) % 8;
        let prev = (p.0 + MOORE_RING[prev_dir].0, p.1 + MOORE_RING[prev_dir].1);
        let new_backtrack = ring_dir((prev.0 - q.0, prev.1 - q.1));

        if !seen.insert((q, new_backtrack)) {
            break; // walk state repeats: the boundary cycle is complete
        }
        points.push(Point::new(q.0 as f64, q.1 as f64));
        p = q;
        backtrack = new_backtrack;
    }
    // a walk cut at a state repeat may end back on the start pixel
    if points.len() > 1 && points.last() == points.first() {
        points.pop();
    }
    points
}

/// Traces the outer border of every 8-connected component as a closed
/// clockwise polygon, discarding contours with arc length below `min_length`
/// (diagonal steps weigh sqrt(2)).
pub fn trace_contours(mask: &BinaryMask, min_length: f64) -> Vec<TracedContour> {
    let labels = connected_components(mask);
    trace_labeled_contours(mask, &labels, min_length)
}

/// Same as [`trace_contours`] for an existing labeling.
pub fn trace_labeled_contours(
    mask: &BinaryMask,
    labels: &Labels,
    min_length: f64,
) -> Vec<TracedContour> {
    let (w, h) = (mask.width() as i32, mask.height() as i32);
    let mut contours = Vec::new();
    for (i, &start) in labels.first_pixels().iter().enumerate() {
        let label = i as u32 + 1;
        let in_component = |x: i32, y: i32| {
            x >= 0 && y >= 0 && x < w && y < h && labels.get(x as u32, y as u32) == label
        };
        let budget = mask.count_ones();
        let points = moore_trace(in_component, start, budget);
        let contour = TracedContour::from_polygon(points);
        if contour.arc_length() >= min_length {
            contours.push(contour);
        }
    }
    contours
}

/// Convex hull of a point set as indices into `points`, in increasing index
/// order. Collinear points interior to a hull edge are not vertices.
pub fn convex_hull(points: &[Point]) -> Vec<usize> {
    // dedupe exact duplicates, keeping the first index of each location
    let mut order: Vec<usize> = Vec::new();
    {
        let mut seen = std::collections::HashSet::new();
        for (i, p) in points.iter().enumerate() {
            if seen.insert((p.x.to_bits(), p.y.to_bits())) {
                order.push(i);
            }
        }
    }
    if order.len() <= 2 {
        return order;
    }
    order.sort_by(|&a, &b| {
        points[a]
            .x
            .total_cmp(&points[b].x)
            .then(points[a].y.total_cmp(&points[b].y))
    });

    // monotone chain with strict turns
    let mut lower: Vec<usize> = Vec::new();
    for &i in &order {
        while lower.len() >= 2
            && cross(
                points[lower[lower.len() - 2]],
                points[lower[lower.len() - 1]],
                points[i],
            ) <= 0.0
        {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in order.iter().rev() {
        while upper.len() >= 2
            && cross(
                points[upper[upper.len() - 2]],
                points[upper[upper.len() - 1]],
                points[i],
            ) <= 0.0
        {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower.sort_unstable();
    lower
}

/// For each hull edge (consecutive hull indices along the contour, cyclic),
/// finds the contour vertex strictly between the endpoints with maximum
/// perpendicular distance to the edge; keeps it when the depth reaches
/// `sigma_depth`.
pub fn convexity_defects(points: &[Point], hull: &[usize], sigma_depth: f64) -> Vec<Defect> {
    let n = points.len();
    if hull.len() < 2 || n < 3 {
        return Vec::new();
    }
    let mut defects = Vec::new();
    for e in 0..hull.len() {
        let start = hull[e];
        let end = hull[(e + 1) % hull.len()];
        let a = points[start];
        let b = points[end];

        let mut best: Option<(usize, f64)> = None;
        let mut k = (start + 1) % n;
        while k != end {
            let depth = line_distance(points[k], a, b);
            if best.map_or(true, |(_, d)| depth > d) {
                best = Some((k, depth));
            }
            k = (k + 1) % n;
        }
        if let Some((farthest, depth)) = best {
            if depth >= sigma_depth {
                defects.push(Defect {
                    start_index: start,
                    end_index: end,
                    farthest_index: farthest,
                    depth,
                });
            }
        }
    }
    defects
}

/// Populates `hull` and `defects` of a traced contour.
pub fn convex_hull_and_defects(contour: &mut TracedContour, sigma_depth: f64) {
    contour.hull = convex_hull(contour.points());
    contour.defects = convexity_defects(contour.points(), &contour.hull, sigma_depth);
}
