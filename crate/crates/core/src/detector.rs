//! Bottleneck candidate generation, filtering, validation and temporal
//! confirmation.
//!
//! Candidates are pairs of convexity-defect points on one crowd-flow contour.
//! A pair survives when its chord is short relative to the contour
//! (`d_c / l_s < sigma_s`), its endpoints face each other across the shape
//! (`arc > 2 d_c`), and the validation map shows at least two distinct ridges
//! near the pair midpoint. Surviving midpoints are tracked over consecutive
//! reference frames and confirmed after `sigma_o` hits within radius
//! `sigma_r`.

use crate::contour::{Labels, TracedContour};
use crate::error::{Error, Result};
use crate::field::BinaryMask;
use crate::geom::Point;

/// Candidate bottleneck point pair on one contour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidatePair {
    pub p0: Point,
    pub p1: Point,
    /// Euclidean distance between the endpoints, > 0.
    pub d_c: f64,
    /// Minimum arc length between the endpoints along the closed contour.
    pub arc_between: f64,
    /// Index of the source contour in the per-frame contour list.
    pub contour_ref: usize,
    /// Arc length of the source contour.
    pub l_s: f64,
}

/// A validated candidate midpoint at one reference frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub center: Point,
    pub pair: CandidatePair,
    pub reference_frame: usize,
    pub confirmed: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct DetectorParams {
    /// Chord-to-contour-length ratio threshold, in (0, 1).
    pub sigma_s: f64,
    /// Validation window size and track matching radius, pixels.
    pub sigma_r: f64,
    /// Consecutive reference frames required for confirmation.
    pub sigma_o: u32,
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_s > 0.0 && self.sigma_s < 1.0) {
            return Err(Error::Config(format!(
                "sigma_s must be in (0, 1), got {}",
                self.sigma_s
            )));
        }
        if self.sigma_r <= 0.0 {
            return Err(Error::Config(format!(
                "sigma_r must be positive, got {}",
                self.sigma_r
            )));
        }
        if self.sigma_o == 0 {
            return Err(Error::Config("sigma_o must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            sigma_s: 0.1,
            sigma_r: 30.0,
            sigma_o: 3,
        }
    }
}

/// All unordered pairs of distinct defect farthest-points on the same
/// contour. Pairs never span two contours; coincident defect points are
/// skipped so `d_c > 0` always holds.
pub fn enumerate_candidates(contours: &[TracedContour]) -> Vec<CandidatePair> {
    let mut pairs = Vec::new();
    for (ci, contour) in contours.iter().enumerate() {
        let defect_points: Vec<usize> = contour.defects.iter().map(|d| d.farthest_index).collect();
        for i in 0..defect_points.len() {
            for j in (i + 1)..defect_points.len() {
                let a = defect_points[i];
                let b = defect_points[j];
                let pa = contour.points()[a];
                let pb = contour.points()[b];
                let d_c = pa.distance(pb);
                if d_c == 0.0 {
                    continue;
                }
                pairs.push(CandidatePair {
                    p0: pa,
                    p1: pb,
                    d_c,
                    arc_between: contour.arc_between(a, b),
                    contour_ref: ci,
                    l_s: contour.arc_length(),
                });
            }
        }
    }
    pairs
}

/// Keeps a pair iff `d_c / l_s < sigma_s` and `arc_between > 2 d_c`.
pub fn geometric_filter(pairs: &[CandidatePair], params: &DetectorParams) -> Vec<CandidatePair> {
    pairs
        .iter()
        .filter(|p| p.d_c / p.l_s < params.sigma_s && p.arc_between > 2.0 * p.d_c)
        .copied()
        .collect()
}

/// True iff the axis-aligned `sigma_r x sigma_r` window centered on the pair
/// midpoint intersects at least two distinct components of the validation
/// map.
pub fn validate(pair: &CandidatePair, m_val_labels: &Labels, sigma_r: f64) -> bool {
    let center = pair.p0.midpoint(pair.p1);
    let half = sigma_r / 2.0;
    let x_lo = ((center.x - half).ceil().max(0.0)) as i64;
    let x_hi = ((center.x + half).floor()).min(m_val_labels.width() as f64 - 1.0) as i64;
    let y_lo = ((center.y - half).ceil().max(0.0)) as i64;
    let y_hi = ((center.y + half).floor()).min(m_val_labels.height() as f64 - 1.0) as i64;
    if x_lo > x_hi || y_lo > y_hi {
        return false;
    }

    let mut seen = std::collections::HashSet::new();
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let label = m_val_labels.get(x as u32, y as u32);
            if label != 0 {
                seen.insert(label);
                if seen.len() >= 2 {
                    return true;
                }
            }
        }
    }
    false
}

/// Runs enumerate -> filter -> validate for one frame and wraps surviving
/// midpoints as unconfirmed detections, sorted by (y, x) so that downstream
/// greedy matching is deterministic.
pub fn detect_frame(
    contours: &[TracedContour],
    m_val: &BinaryMask,
    m_val_labels: &Labels,
    params: &DetectorParams,
    reference_frame: usize,
) -> Vec<Detection> {
    debug_assert_eq!(m_val.width(), m_val_labels.width());
    debug_assert_eq!(m_val.height(), m_val_labels.height());
    let candidates = enumerate_candidates(contours);
    let kept = geometric_filter(&candidates, params);
    let mut detections: Vec<Detection> = kept
        .into_iter()
        .filter(|p| validate(p, m_val_labels, params.sigma_r))
        .map(|pair| Detection {
            center: pair.p0.midpoint(pair.p1),
            pair,
            reference_frame,
            confirmed: false,
        })
        .collect();
    detections.sort_by(|a, b| {
        a.center
            .y
            .total_cmp(&b.center.y)
            .then(a.center.x.total_cmp(&b.center.x))
    });
    detections
}

#[derive(Debug, Clone)]
struct Track {
    sum_x: f64,
    sum_y: f64,
    hits: u32,
    last_seen_frame: usize,
}

impl Track {
    fn center(&self) -> Point {
        Point::new(self.sum_x / self.hits as f64, self.sum_y / self.hits as f64)
    }
}

/// Tracks of detections over consecutive reference frames.
#[derive(Debug, Clone, Default)]
pub struct TrackState {
    tracks: Vec<Track>,
}

impl TrackState {
    pub fn new() -> Self {
        TrackState::default()
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    /// Matches this frame's detections to tracks and returns the confirmed
    /// ones.
    ///
    /// Detections are processed in their given order (ascending `(y, x)` from
    /// [`detect_frame`]); each takes the nearest still-unmatched track within
    /// `sigma_r`. Matched tracks accumulate the running mean of their member
    /// centers; unmatched detections open new tracks; tracks missing a frame
    /// are dropped (strict consecutiveness). A detection is emitted confirmed
    /// once its track has at least `sigma_o` consecutive hits.
    pub fn update(
        &mut self,
        detections: &[Detection],
        params: &DetectorParams,
        frame: usize,
    ) -> Vec<Detection> {
        debug_assert!(
            self.tracks.iter().all(|t| t.last_seen_frame < frame),
            "track updates must advance strictly in frame order"
        );
        let mut matched_track: Vec<Option<usize>> = vec![None; detections.len()];
        let mut taken = vec![false; self.tracks.len()];

        for (di, det) in detections.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for (ti, track) in self.tracks.iter().enumerate() {
                if taken[ti] {
                    continue;
                }
                let dist = track.center().distance(det.center);
                if dist <= params.sigma_r && best.map_or(true, |(_, d)| dist < d) {
                    best = Some((ti, dist));
                }
            }
            if let Some((ti, _)) = best {
                taken[ti] = true;
                matched_track[di] = Some(ti);
            }
        }

        let mut confirmed = Vec::new();
        let mut next_tracks = Vec::new();
        for (di, det) in detections.iter().enumerate() {
            let track = match matched_track[di] {
                Some(ti) => {
                    let t = &self.tracks[ti];
                    Track {
                        sum_x: t.sum_x + det.center.x,
                        sum_y: t.sum_y + det.center.y,
                        hits: t.hits + 1,
                        last_seen_frame: frame,
                    }
                }
                None => Track {
                    sum_x: det.center.x,
                    sum_y: det.center.y,
                    hits: 1,
                    last_seen_frame: frame,
                },
            };
            if track.hits >= params.sigma_o {
                confirmed.push(Detection {
                    confirmed: true,
                    ..*det
                });
            }
            next_tracks.push(track);
        }

        // tracks unmatched this frame die; matched/new ones survive
        self.tracks = next_tracks;
        confirmed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{connected_components, convex_hull_and_defects};
    use crate::field::BinaryMask;

    fn params() -> DetectorParams {
        DetectorParams::default()
    }

    fn contour_with_defects(points: Vec<Point>, sigma_depth: f64) -> TracedContour {
        let mut c = TracedContour::from_polygon(points);
        convex_hull_and_defects(&mut c, sigma_depth);
        c
    }

    fn pair(d_c: f64, arc: f64, l_s: f64) -> CandidatePair {
        CandidatePair {
            p0: Point::new(0.0, 0.0),
            p1: Point::new(d_c, 0.0),
            d_c,
            arc_between: arc,
            contour_ref: 0,
            l_s,
        }
    }

    fn detection(x: f64, y: f64, frame: usize) -> Detection {
        let pair = CandidatePair {
            p0: Point::new(x - 1.0, y),
            p1: Point::new(x + 1.0, y),
            d_c: 2.0,
            arc_between: 10.0,
            contour_ref: 0,
            l_s: 100.0,
        };
        Detection {
            center: Point::new(x, y),
            pair,
            reference_frame: frame,
            confirmed: false,
        }
    }

    #[test]
    fn too_few_defects_yield_no_pairs() {
        let square = contour_with_defects(
            vec![
                Point::new(0.0, 0.0),
                Point::new(10.0, 0.0),
                Point::new(10.0, 10.0),
                Point::new(0.0, 10.0),
            ],
            1.0,
        );
        assert!(square.defects.is_empty());
        assert!(enumerate_candidates(&[square]).is_empty());
    }

    #[test]
    fn three_defects_give_three_pairs() {
        // square with three notched sides
        let c = contour_with_defects(
            vec![
                Point::new(0.0, 0.0),
                Point::new(10.0, 3.0),
                Point::new(20.0, 0.0),
                Point::new(17.0, 10.0),
                Point::new(20.0, 20.0),
                Point::new(10.0, 17.0),
                Point::new(0.0, 20.0),
            ],
            1.0,
        );
        assert_eq!(c.defects.len(), 3);
        // C(3,2) = 3 pairs
        assert_eq!(enumerate_candidates(&[c]).len(), 3);
    }

    #[test]
    fn single_defect_yields_no_pairs() {
        let c = contour_with_defects(
            vec![
                Point::new(0.0, 0.0),
                Point::new(5.0, 4.0),
                Point::new(10.0, 0.0),
                Point::new(10.0, 10.0),
                Point::new(0.0, 10.0),
            ],
            1.0,
        );
        assert_eq!(c.defects.len(), 1);
        assert!(enumerate_candidates(&[c]).is_empty());
    }

    #[test]
    fn no_cross_contour_pairs() {
        // middle peak at y = -0.5 is a hull vertex, splitting the top edge
        let notched = |ox: f64| {
            contour_with_defects(
                vec![
                    Point::new(ox, 0.0),
                    Point::new(ox + 4.0, 5.0),
                    Point::new(ox + 5.0, -0.5),
                    Point::new(ox + 6.0, 5.0),
                    Point::new(ox + 10.0, 0.0),
                    Point::new(ox + 10.0, 10.0),
                    Point::new(ox, 10.0),
                ],
                1.0,
            )
        };
        let a = notched(0.0);
        let b = notched(100.0);
        assert_eq!(a.defects.len(), 2);
        let pairs = enumerate_candidates(&[a, b]);
        assert_eq!(pairs.len(), 2);
        assert!(pairs.iter().any(|p| p.contour_ref == 0));
        assert!(pairs.iter().any(|p| p.contour_ref == 1));
    }

    #[test]
    fn filter_boundary_is_strict() {
        let p = params(); // sigma_s = 0.1
        let exactly_at = pair(10.0, 30.0, 100.0); // d_c / l_s == 0.1
        assert!(geometric_filter(&[exactly_at], &p).is_empty());
        let below = pair(9.99, 30.0, 100.0);
        assert_eq!(geometric_filter(&[below], &p).len(), 1);
    }

    #[test]
    fn filter_rejects_straightish_pairs() {
        let p = params();
        let straight = pair(10.0, 15.0, 400.0); // arc = 1.5 d_c
        assert!(geometric_filter(&[straight], &p).is_empty());
        let exactly_double = pair(10.0, 20.0, 400.0); // arc == 2 d_c, strict
        assert!(geometric_filter(&[exactly_double], &p).is_empty());
    }

    #[test]
    fn filter_keeps_funnel_mouth() {
        let p = params();
        let funnel = pair(20.0, 180.0, 400.0);
        assert_eq!(geometric_filter(&[funnel], &p).len(), 1);
    }

    #[test]
    fn filter_order_independent() {
        let p = params();
        let pairs = vec![
            pair(10.0, 15.0, 400.0),
            pair(20.0, 180.0, 400.0),
            pair(50.0, 300.0, 400.0),
            pair(5.0, 80.0, 30.0),
        ];
        // ratio-only then arc-only must equal arc-only then ratio-only
        let ratio = |ps: &[CandidatePair]| -> Vec<CandidatePair> {
            ps.iter().filter(|q| q.d_c / q.l_s < p.sigma_s).copied().collect()
        };
        let arc = |ps: &[CandidatePair]| -> Vec<CandidatePair> {
            ps.iter().filter(|q| q.arc_between > 2.0 * q.d_c).copied().collect()
        };
        assert_eq!(arc(&ratio(&pairs)), ratio(&arc(&pairs)));
        assert_eq!(arc(&ratio(&pairs)), geometric_filter(&pairs, &p));
    }

    fn two_bar_labels(w: u32, h: u32, gap: u32) -> (BinaryMask, Labels) {
        let mut mask = BinaryMask::empty(w, h).unwrap();
        let mid = h / 2;
        for x in 0..w {
            mask.set(x, mid - gap / 2 - 1, true);
            mask.set(x, mid + gap / 2 + 1, true);
        }
        let labels = connected_components(&mask);
        (mask, labels)
    }

    #[test]
    fn validate_empty_map_is_false() {
        let empty = BinaryMask::empty(64, 64).unwrap();
        let labels = connected_components(&empty);
        assert!(!validate(&pair(10.0, 50.0, 200.0), &labels, 30.0));
    }

    #[test]
    fn validate_sees_two_parallel_ridges() {
        let (_, labels) = two_bar_labels(64, 64, 10);
        assert_eq!(labels.count(), 2);
        let p = CandidatePair {
            p0: Point::new(32.0, 26.0),
            p1: Point::new(32.0, 38.0),
            d_c: 12.0,
            arc_between: 100.0,
            contour_ref: 0,
            l_s: 300.0,
        };
        assert!(validate(&p, &labels, 30.0));
    }

    #[test]
    fn validate_single_l_shaped_component_is_false() {
        let mut mask = BinaryMask::empty(64, 64).unwrap();
        for i in 0..20 {
            mask.set(20 + i, 30, true); // horizontal bar
            mask.set(20, 30 + i.min(15), true); // vertical hook
        }
        let labels = connected_components(&mask);
        assert_eq!(labels.count(), 1);
        let p = CandidatePair {
            p0: Point::new(28.0, 33.0),
            p1: Point::new(32.0, 37.0),
            d_c: 5.66,
            arc_between: 40.0,
            contour_ref: 0,
            l_s: 200.0,
        };
        assert!(!validate(&p, &labels, 30.0));
    }

    #[test]
    fn validate_monotone_in_sigma_r() {
        let (_, labels) = two_bar_labels(64, 64, 20);
        let p = CandidatePair {
            p0: Point::new(32.0, 20.0),
            p1: Point::new(32.0, 44.0),
            d_c: 24.0,
            arc_between: 100.0,
            contour_ref: 0,
            l_s: 300.0,
        };
        // window must span the 22-pixel bar separation
        assert!(!validate(&p, &labels, 10.0));
        assert!(validate(&p, &labels, 26.0));
        assert!(validate(&p, &labels, 40.0)); // stays true as the window grows
    }

    #[test]
    fn track_confirms_after_sigma_o_consecutive_frames() {
        let p = params(); // sigma_o = 3
        let mut state = TrackState::new();
        let confirmed1 = state.update(&[detection(50.0, 50.0, 0)], &p, 0);
        assert!(confirmed1.is_empty());
        let confirmed2 = state.update(&[detection(50.5, 50.0, 4)], &p, 4);
        assert!(confirmed2.is_empty());
        let confirmed3 = state.update(&[detection(50.2, 49.8, 8)], &p, 8);
        assert_eq!(confirmed3.len(), 1);
        assert!(confirmed3[0].confirmed);
        assert_eq!(confirmed3[0].reference_frame, 8);
    }

    #[test]
    fn missing_frame_resets_the_counter() {
        let p = params();
        let mut state = TrackState::new();
        state.update(&[detection(50.0, 50.0, 0)], &p, 0);
        state.update(&[detection(50.0, 50.0, 4)], &p, 4);
        // nothing at frame 8: track dies
        state.update(&[], &p, 8);
        assert!(state.is_empty());
        state.update(&[detection(50.0, 50.0, 12)], &p, 12);
        state.update(&[detection(50.0, 50.0, 16)], &p, 16);
        let confirmed = state.update(&[detection(50.0, 50.0, 20)], &p, 20);
        assert_eq!(confirmed.len(), 1);
    }

    #[test]
    fn two_distant_detections_form_independent_tracks() {
        let p = params();
        let mut state = TrackState::new();
        for (i, frame) in [0usize, 4, 8].into_iter().enumerate() {
            let dets = vec![
                detection(30.0, 30.0, frame),
                detection(30.0 + 5.0 * p.sigma_r, 30.0, frame),
            ];
            let confirmed = state.update(&dets, &p, frame);
            if i < 2 {
                assert!(confirmed.is_empty());
            } else {
                assert_eq!(confirmed.len(), 2);
            }
        }
        assert_eq!(state.len(), 2);
    }

    #[test]
    fn far_detection_opens_new_track() {
        let p = params();
        let mut state = TrackState::new();
        state.update(&[detection(10.0, 10.0, 0)], &p, 0);
        state.update(&[detection(200.0, 200.0, 4)], &p, 4);
        // old track died (unmatched), new one has a single hit
        assert_eq!(state.len(), 1);
        let confirmed = state.update(&[detection(200.0, 200.0, 8)], &p, 8);
        assert!(confirmed.is_empty()); // 2 hits < sigma_o
    }

    #[test]
    fn running_center_is_mean_of_member_centers() {
        let p = DetectorParams {
            sigma_o: 2,
            ..params()
        };
        let mut state = TrackState::new();
        state.update(&[detection(10.0, 10.0, 0)], &p, 0);
        // detection at distance 20 < sigma_r matches; running center becomes 20
        let confirmed = state.update(&[detection(30.0, 10.0, 1)], &p, 1);
        assert_eq!(confirmed.len(), 1);
        assert_eq!(state.tracks[0].center(), Point::new(20.0, 10.0));
        // a detection 29 px from the mean still matches (<= 30)
        let confirmed = state.update(&[detection(49.0, 10.0, 2)], &p, 2);
        assert_eq!(confirmed.len(), 1);
    }

    #[test]
    fn greedy_matching_is_nearest_first_in_yx_order() {
        let p = DetectorParams {
            sigma_o: 2,
            ..params()
        };
        let mut state = TrackState::new();
        state.update(&[detection(50.0, 50.0, 0)], &p, 0);
        // two detections both within sigma_r; the one earlier in (y, x) order
        // takes the track, the other opens a fresh one
        let dets = vec![detection(52.0, 49.0, 1), detection(51.0, 51.0, 1)];
        let confirmed = state.update(&dets, &p, 1);
        assert_eq!(confirmed.len(), 1);
        assert_eq!(confirmed[0].center, Point::new(52.0, 49.0));
        assert_eq!(state.len(), 2);
    }
}
