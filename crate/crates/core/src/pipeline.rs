//! Batch pipeline driver: sequences -> advection -> FTLE -> median ->
//! ridge maps -> contours -> candidates -> tracks -> detection records.
//!
//! The driver is sequential over reference frames (the median ring buffers
//! and the track state require ordering); per-frame field work fans out via
//! rayon inside the stages. Identical inputs and configuration produce
//! byte-identical output files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::advection::advect;
use crate::contour::{
    build_ridge_maps, connected_components, convex_hull_and_defects, trace_contours, Labels,
    RidgeMaps, RidgeThresholds, TracedContour,
};
use crate::detector::{detect_frame, Detection, DetectorParams, TrackState};
use crate::error::{Error, Result};
use crate::evaluate::{accuracy_sweep, GroundTruth, MetricReport};
use crate::ftle::{ftle_from_map, median_filter, FtleField, FtleRingBuffer};
use crate::geom::Point;
use crate::sequence::build_sequences;

/// Ridge threshold: a fixed value or a per-frame percentile of the strictly
/// positive filtered-FTLE values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdSpec {
    Absolute(f64),
    Percentile(f64),
}

impl ThresholdSpec {
    /// Parses `"p70"` as a percentile and a plain number as absolute.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(p) = s.strip_prefix(['p', 'P']) {
            let p: f64 = p
                .parse()
                .map_err(|_| Error::Config(format!("bad percentile spec `{s}`")))?;
            return Ok(ThresholdSpec::Percentile(p));
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::Config(format!("bad threshold spec `{s}`")))?;
        Ok(ThresholdSpec::Absolute(v))
    }

    fn validate(&self) -> Result<()> {
        match self {
            ThresholdSpec::Absolute(v) if v.is_finite() => Ok(()),
            ThresholdSpec::Absolute(v) => Err(Error::Config(format!(
                "absolute threshold must be finite, got {v}"
            ))),
            ThresholdSpec::Percentile(p) if *p > 0.0 && *p < 100.0 => Ok(()),
            ThresholdSpec::Percentile(p) => Err(Error::Config(format!(
                "percentile must be in (0, 100), got {p}"
            ))),
        }
    }

    /// Resolves against a field: nearest-rank percentile over strictly
    /// positive values; an all-non-positive field yields +inf (empty masks).
    pub fn resolve(&self, field: &FtleField) -> f64 {
        match *self {
            ThresholdSpec::Absolute(v) => v,
            ThresholdSpec::Percentile(p) => {
                let mut positive: Vec<f64> = field
                    .base()
                    .values()
                    .iter()
                    .copied()
                    .filter(|&v| v > 0.0)
                    .collect();
                if positive.is_empty() {
                    return f64::INFINITY;
                }
                positive.sort_unstable_by(f64::total_cmp);
                let n = positive.len();
                let rank = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n);
                positive[rank - 1]
            }
        }
    }

    pub fn echo(&self) -> String {
        match self {
            ThresholdSpec::Absolute(v) => format!("{v}"),
            ThresholdSpec::Percentile(p) => format!("\"p{p}\""),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub flow_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Frame-skip factor of the flow pairings.
    pub delta_t: u32,
    /// Integration steps per flow map.
    pub tau: u32,
    /// Median ring-buffer size.
    pub tau_s: usize,
    pub sigma_low: ThresholdSpec,
    pub sigma_high: ThresholdSpec,
    pub dilation_radius: u32,
    /// Minimum contour arc length; `None` resolves to 0.1 * (width + height).
    pub min_contour_length: Option<f64>,
    /// Minimum convexity-defect depth, pixels.
    pub sigma_depth: f64,
    pub detector: DetectorParams,
    /// Dump filtered FTLE fields as 16-bit PGM with sidecars.
    pub write_debug_fields: bool,
}

impl PipelineConfig {
    pub fn new(flow_dir: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            flow_dir: flow_dir.into(),
            out_dir: out_dir.into(),
            delta_t: 4,
            tau: 15,
            tau_s: 5,
            sigma_low: ThresholdSpec::Percentile(70.0),
            sigma_high: ThresholdSpec::Percentile(90.0),
            dilation_radius: 2,
            min_contour_length: None,
            sigma_depth: 5.0,
            detector: DetectorParams::default(),
            write_debug_fields: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_t == 0 {
            return Err(Error::Config("delta_t must be >= 1".into()));
        }
        if self.tau == 0 {
            return Err(Error::Config("tau must be >= 1".into()));
        }
        if self.tau_s == 0 {
            return Err(Error::Config("tau_s must be >= 1".into()));
        }
        self.sigma_low.validate()?;
        self.sigma_high.validate()?;
        if let Some(l) = self.min_contour_length {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Config(format!(
                    "min contour length must be >= 0, got {l}"
                )));
            }
        }
        if !(self.sigma_depth >= 0.0 && self.sigma_depth.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_depth must be >= 0, got {}",
                self.sigma_depth
            )));
        }
        self.detector.validate()
    }

    /// Warm-up margin in frames between flow onset and confirmable output:
    /// median fill plus track confirmation.
    pub fn warmup_margin_frames(&self) -> usize {
        (self.tau_s - 1 + self.detector.sigma_o as usize - 1) * self.delta_t as usize
    }

    fn resolved_min_contour_length(&self, width: u32, height: u32) -> f64 {
        self.min_contour_length
            .unwrap_or(0.1 * (width + height) as f64)
    }
}

/// Everything the pipeline produced for one emitted reference frame.
pub struct FrameOutput<'a> {
    pub slot: usize,
    pub reference_frame: usize,
    pub bar_forward: &'a FtleField,
    pub bar_backward: &'a FtleField,
    pub thresholds: RidgeThresholds,
    pub ridge_maps: &'a RidgeMaps,
    pub m_val_labels: &'a Labels,
    pub contours: &'a [TracedContour],
    /// Validated but not yet confirmed detections of this frame.
    pub detections: &'a [Detection],
    /// Confirmed detections emitted at this frame.
    pub confirmed: &'a [Detection],
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub width: u32,
    pub height: u32,
    /// Reference frames with both advections available.
    pub processed_frames: Vec<usize>,
    /// Subset of processed frames where detection ran (ring buffers full).
    pub emitted_frames: Vec<usize>,
    pub confirmed_count: usize,
    pub min_contour_length: f64,
}

/// Runs the full pipeline, invoking `on_frame` for every reference frame
/// where detection ran, in ascending frame order.
pub fn run<F>(config: &PipelineConfig, mut on_frame: F) -> Result<RunSummary>
where
    F: FnMut(&FrameOutput) -> Result<()>,
{
    config.validate()?;
    let (fwd, bwd) = build_sequences(&config.flow_dir, config.delta_t)?;
    let (width, height) = fwd
        .dims()
        .ok_or_else(|| Error::MissingInput("no flow pairings loaded".into()))?;
    let n = fwd.len();
    let tau = config.tau as usize;
    if n < 2 * tau - 1 {
        return Err(Error::Range(format!(
            "{n} flow pairings cannot support tau = {tau}; need at least {}",
            2 * tau - 1
        )));
    }

    let min_len = config.resolved_min_contour_length(width, height);
    let mut ring_fwd = FtleRingBuffer::new(config.tau_s, config.delta_t)?;
    let mut ring_bwd = FtleRingBuffer::new(config.tau_s, config.delta_t)?;
    let mut tracks = TrackState::new();
    let mut summary = RunSummary {
        width,
        height,
        min_contour_length: min_len,
        ..Default::default()
    };

    // reference slots with enough history for backward and enough future for
    // forward advection
    for slot in (tau - 1)..=(n - tau) {
        let frame = fwd.frame_of_slot(slot);
        summary.processed_frames.push(frame);

        let fwd_map = advect(&fwd, slot, config.tau)?;
        let bwd_map = advect(&bwd, slot, config.tau)?;
        ring_fwd.push(ftle_from_map(&fwd_map)?)?;
        ring_bwd.push(ftle_from_map(&bwd_map)?)?;

        let (Some(bar_fwd), Some(bar_bwd)) =
            (median_filter(&ring_fwd)?, median_filter(&ring_bwd)?)
        else {
            continue; // warm-up
        };

        let thresholds = RidgeThresholds {
            low_fwd: config.sigma_low.resolve(&bar_fwd),
            high_fwd: config.sigma_high.resolve(&bar_fwd),
            low_bwd: config.sigma_low.resolve(&bar_bwd),
            high_bwd: config.sigma_high.resolve(&bar_bwd),
        };
        let ridge_maps = build_ridge_maps(&bar_fwd, &bar_bwd, thresholds, config.dilation_radius)?;
        let m_val_labels = connected_components(&ridge_maps.m_val);

        let mut contours = trace_contours(&ridge_maps.m_seg, min_len);
        for contour in &mut contours {
            convex_hull_and_defects(contour, config.sigma_depth);
        }

        let detections = detect_frame(
            &contours,
            &ridge_maps.m_val,
            &m_val_labels,
            &config.detector,
            frame,
        );
        let confirmed = tracks.update(&detections, &config.detector, frame);

        summary.emitted_frames.push(frame);
        summary.confirmed_count += confirmed.len();

        on_frame(&FrameOutput {
            slot,
            reference_frame: frame,
            bar_forward: &bar_fwd,
            bar_backward: &bar_bwd,
            thresholds,
            ridge_maps: &ridge_maps,
            m_val_labels: &m_val_labels,
            contours: &contours,
            detections: &detections,
            confirmed: &confirmed,
        })?;
    }

    Ok(summary)
}

/// Output paths of a detection run.
#[derive(Debug, Clone)]
pub struct DetectRun {
    pub summary: RunSummary,
    pub detections_path: PathBuf,
    pub thresholds_path: PathBuf,
    pub config_path: PathBuf,
}

/// One confirmed detection per line: `frame,x0,y0,x1,y1,cx,cy` with fixed
/// two-decimal pixel coordinates.
pub fn detection_record(det: &Detection) -> String {
    format!(
        "{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2}",
        det.reference_frame,
        det.pair.p0.x,
        det.pair.p0.y,
        det.pair.p1.x,
        det.pair.p1.y,
        det.center.x,
        det.center.y
    )
}

/// Parses a detection record stream back into per-frame centers.
pub fn parse_detections(path: impl AsRef<Path>) -> Result<BTreeMap<usize, Vec<Point>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: BTreeMap<usize, Vec<Point>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Format(format!(
                "{}:{}: expected 7 comma-separated fields",
                path.display(),
                lineno + 1
            )));
        }
        let frame: usize = fields[0].parse().map_err(|_| {
            Error::Format(format!("{}:{}: bad frame number", path.display(), lineno + 1))
        })?;
        let cx: f64 = fields[5].parse().map_err(|_| {
            Error::Format(format!("{}:{}: bad cx", path.display(), lineno + 1))
        })?;
        let cy: f64 = fields[6].parse().map_err(|_| {
            Error::Format(format!("{}:{}: bad cy", path.display(), lineno + 1))
        })?;
        out.entry(frame).or_default().push(Point::new(cx, cy));
    }
    Ok(out)
}

fn config_echo(config: &PipelineConfig, summary: &RunSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "flow_dir = {:?}", config.flow_dir.display().to_string());
    let _ = writeln!(s, "out_dir = {:?}", config.out_dir.display().to_string());
    let _ = writeln!(s, "delta_t = {}", config.delta_t);
    let _ = writeln!(s, "tau = {}", config.tau);
    let _ = writeln!(s, "tau_s = {}", config.tau_s);
    let _ = writeln!(s, "sigma_low = {}", config.sigma_low.echo());
    let _ = writeln!(s, "sigma_high = {}", config.sigma_high.echo());
    let _ = writeln!(s, "dilation_radius = {}", config.dilation_radius);
    let _ = writeln!(s, "min_contour_length = {}", summary.min_contour_length);
    let _ = writeln!(s, "sigma_depth = {}", config.sigma_depth);
    let _ = writeln!(s, "sigma_s = {}", config.detector.sigma_s);
    let _ = writeln!(s, "sigma_r = {}", config.detector.sigma_r);
    let _ = writeln!(s, "sigma_o = {}", config.detector.sigma_o);
    let _ = writeln!(s, "write_debug_fields = {}", config.write_debug_fields);
    s
}

/// Runs detection and writes `detections.csv`, `thresholds.csv` and
/// `resolved_config.toml` (plus debug field dumps when enabled) under the
/// configured output directory.
pub fn run_detect(config: &PipelineConfig) -> Result<DetectRun> {
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let detections_path = config.out_dir.join("detections.csv");
    let thresholds_path = config.out_dir.join("thresholds.csv");
    let config_path = config.out_dir.join("resolved_config.toml");

    let mut det_file = std::io::BufWriter::new(
        std::fs::File::create(&detections_path).map_err(|e| Error::io(&detections_path, e))?,
    );
    let mut thr_file = std::io::BufWriter::new(
        std::fs::File::create(&thresholds_path).map_err(|e| Error::io(&thresholds_path, e))?,
    );
    writeln!(
        thr_file,
        "frame,sigma_low_fwd,sigma_high_fwd,sigma_low_bwd,sigma_high_bwd"
    )
    .map_err(|e| Error::io(&thresholds_path, e))?;

    let debug_dir = config.out_dir.join("debug");
    if config.write_debug_fields {
        std::fs::create_dir_all(&debug_dir).map_err(|e| Error::io(&debug_dir, e))?;
    }

    let summary = run(config, |frame| {
        writeln!(
            thr_file,
            "{},{},{},{},{}",
            frame.reference_frame,
            frame.thresholds.low_fwd,
            frame.thresholds.high_fwd,
            frame.thresholds.low_bwd,
            frame.thresholds.high_bwd
        )
        .map_err(|e| Error::io(&thresholds_path, e))?;
        for det in frame.confirmed {
            writeln!(det_file, "{}", detection_record(det))
                .map_err(|e| Error::io(&detections_path, e))?;
        }
        if config.write_debug_fields {
            let fwd_path = debug_dir.join(format!("ftle_bar_fwd_{:06}.pgm", frame.reference_frame));
            crate::imageio::write_scalar_pgm16(frame.bar_forward.base(), fwd_path)?;
            let bwd_path = debug_dir.join(format!("ftle_bar_bwd_{:06}.pgm", frame.reference_frame));
            crate::imageio::write_scalar_pgm16(frame.bar_backward.base(), bwd_path)?;
        }
        Ok(())
    })?;

    det_file.flush().map_err(|e| Error::io(&detections_path, e))?;
    thr_file.flush().map_err(|e| Error::io(&thresholds_path, e))?;
    std::fs::write(&config_path, config_echo(config, &summary))
        .map_err(|e| Error::io(&config_path, e))?;

    Ok(DetectRun {
        summary,
        detections_path,
        thresholds_path,
        config_path,
    })
}

/// Output paths of an evaluation run.
#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: MetricReport,
    pub report_path: PathBuf,
    pub per_detection_path: PathBuf,
}

/// Scores a detection record stream against ground truth over an explicit
/// frame range and writes `report.csv` / `per_detection.csv`.
pub fn run_eval(
    detections_path: impl AsRef<Path>,
    gt: &GroundTruth,
    thresholds: &[f64],
    frames: &[usize],
    out_dir: impl AsRef<Path>,
) -> Result<EvalRun> {
    if thresholds.is_empty() {
        return Err(Error::Config("eval needs at least one threshold".into()));
    }
    if frames.is_empty() {
        return Err(Error::Config("eval needs a non-empty frame range".into()));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let detections = parse_detections(detections_path)?;
    let report = accuracy_sweep(&detections, gt, thresholds, frames);

    let report_path = out_dir.join("report.csv");
    std::fs::write(&report_path, report.report_csv()).map_err(|e| Error::io(&report_path, e))?;
    let per_detection_path = out_dir.join("per_detection.csv");
    std::fs::write(&per_detection_path, report.per_detection_csv())
        .map_err(|e| Error::io(&per_detection_path, e))?;

    Ok(EvalRun {
        report,
        report_path,
        per_detection_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;
    use crate::sequence::Direction;
    use crate::synth::{build, generate, ScenarioConfig};

    fn filtered(values: Vec<f64>, w: u32, h: u32) -> FtleField {
        FtleField::new(
            ScalarField::new(w, h, values).unwrap(),
            Direction::Forward,
            0,
            15,
            true,
        )
    }

    #[test]
    fn threshold_spec_parses_both_forms() {
        assert_eq!(
            ThresholdSpec::parse("p70").unwrap(),
            ThresholdSpec::Percentile(70.0)
        );
        assert_eq!(
            ThresholdSpec::parse("0.25").unwrap(),
            ThresholdSpec::Absolute(0.25)
        );
        assert!(ThresholdSpec::parse("x9").is_err());
        assert!(ThresholdSpec::Percentile(100.0).validate().is_err());
    }

    #[test]
    fn percentile_uses_nearest_rank_over_positive_values() {
        // positives sorted: [1, 2, 3, 4, 5]; p40 -> ceil(2.0) = rank 2 -> 2
        let f = filtered(vec![-1.0, 0.0, 5.0, 1.0, 3.0, 2.0, 4.0, -2.0], 8, 1);
        assert_eq!(ThresholdSpec::Percentile(40.0).resolve(&f), 2.0);
        assert_eq!(ThresholdSpec::Percentile(90.0).resolve(&f), 5.0);
        assert_eq!(ThresholdSpec::Percentile(10.0).resolve(&f), 1.0);
        assert_eq!(ThresholdSpec::Absolute(0.5).resolve(&f), 0.5);
    }

    #[test]
    fn percentile_of_non_positive_field_is_infinite() {
        let f = filtered(vec![0.0, -0.5, -1.0, 0.0], 4, 1);
        assert_eq!(ThresholdSpec::Percentile(70.0).resolve(&f), f64::INFINITY);
    }

    #[test]
    fn zero_scenario_pipeline_emits_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let flow = dir.path().join("flow");
        let out = dir.path().join("out");
        let config = ScenarioConfig {
            width: 48,
            height: 36,
            frames: 40,
            ..Default::default()
        };
        let scenario = build("zero", &config).unwrap();
        generate(scenario.as_ref(), &flow, 0).unwrap();

        let pipeline = PipelineConfig {
            delta_t: 1,
            tau: 5,
            tau_s: 3,
            ..PipelineConfig::new(&flow, &out)
        };
        let detect = run_detect(&pipeline).unwrap();
        assert_eq!(detect.summary.confirmed_count, 0);
        let body = std::fs::read_to_string(&detect.detections_path).unwrap();
        assert!(body.is_empty());
        // processed slots: tau-1 .. n-tau = 4..=35
        assert_eq!(detect.summary.processed_frames.len(), 32);
        // warm-up: first tau_s - 1 processed frames emit nothing
        assert_eq!(detect.summary.emitted_frames.len(), 30);
        assert!(std::fs::read_to_string(&detect.config_path)
            .unwrap()
            .contains("delta_t = 1"));
    }

    #[test]
    fn short_sequences_are_rejected_with_range_error() {
        let dir = tempfile::tempdir().unwrap();
        let flow = dir.path().join("flow");
        let config = ScenarioConfig {
            width: 16,
            height: 12,
            frames: 10,
            ..Default::default()
        };
        let scenario = build("zero", &config).unwrap();
        generate(scenario.as_ref(), &flow, 0).unwrap();
        let pipeline = PipelineConfig {
            delta_t: 1,
            tau: 15,
            ..PipelineConfig::new(&flow, dir.path().join("out"))
        };
        let err = run_detect(&pipeline).unwrap_err();
        assert_eq!(err.category(), "range");
    }

    #[test]
    fn config_validation_runs_before_io() {
        let pipeline = PipelineConfig {
            delta_t: 0,
            ..PipelineConfig::new("/nonexistent", "/also/nonexistent")
        };
        let err = run(&pipeline, |_| Ok(())).unwrap_err();
        assert_eq!(err.category(), "config");
    }

    #[test]
    fn detection_record_format_is_fixed_width() {
        use crate::detector::CandidatePair;
        let det = Detection {
            center: Point::new(12.345, 67.891),
            pair: CandidatePair {
                p0: Point::new(10.0, 60.0),
                p1: Point::new(14.69, 75.782),
                d_c: 1.0,
                arc_between: 5.0,
                contour_ref: 0,
                l_s: 100.0,
            },
            reference_frame: 123,
            confirmed: true,
        };
        assert_eq!(
            detection_record(&det),
            "123,10.00,60.00,14.69,75.78,12.35,67.89"
        );
    }

    #[test]
    fn detections_round_trip_through_the_record_stream() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("detections.csv");
        std::fs::write(&path, "8,1.00,2.00,3.00,4.00,2.00,3.00\n8,5.00,6.00,7.00,8.00,6.00,7.00\n12,0.00,0.00,2.00,0.00,1.00,0.00\n").unwrap();
        let parsed = parse_detections(&path).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[&8].len(), 2);
        assert_eq!(parsed[&8][0], Point::new(2.0, 3.0));
        assert_eq!(parsed[&12], vec![Point::new(1.0, 0.0)]);
    }

    #[test]
    fn malformed_detection_lines_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("detections.csv");
        std::fs::write(&path, "8,1.0,2.0\n").unwrap();
        assert_eq!(parse_detections(&path).unwrap_err().category(), "format");
    }
}
