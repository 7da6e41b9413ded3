//! Analytic flow scenarios with known ground truth.
//!
//! Each scenario kind implements [`Scenario`] and is registered by name in
//! [`REGISTRY`]; the CLI selects one at runtime. `generate` writes the same
//! `fwd_%06d.flo` / `bwd_%06d.flo` layout the pipeline consumes, with the
//! backward file holding the exact negation of the forward field, plus a
//! ground-truth document for scenarios that stage a bottleneck.

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{BinaryMask, FlowField};
use crate::flo::write_flo;
use crate::geom::Point;
use crate::imageio::write_mask;
use crate::sequence::{backward_file_name, forward_file_name};

/// Parameter bag shared by all scenario builders; each builder reads the
/// fields it needs and validates them.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    /// uniform: constant velocity components.
    pub uniform_u: f32,
    pub uniform_v: f32,
    /// saddle: expansion rate along x, contraction along y.
    pub saddle_strength: f32,
    /// funnel: gap midline y (defaults to the vertical domain center).
    pub gap_center: Option<f64>,
    /// funnel: gap opening in pixels.
    pub gap_width: f64,
    /// funnel: wall x position (defaults to 0.6 * width).
    pub wall_x: Option<f64>,
    /// funnel: upstream inflow speed, pixels per step.
    pub speed: f64,
    /// funnel: first frame with non-zero flow.
    pub onset_frame: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            width: 160,
            height: 120,
            frames: 300,
            uniform_u: 1.0,
            uniform_v: 0.5,
            saddle_strength: 0.1,
            gap_center: None,
            gap_width: 16.0,
            wall_x: None,
            speed: 0.4,
            onset_frame: 0,
        }
    }
}

impl ScenarioConfig {
    fn validate_dims(&self) -> Result<()> {
        if self.width < 3 || self.height < 3 {
            return Err(Error::Config(format!(
                "scenario needs at least a 3x3 domain, got {}x{}",
                self.width, self.height
            )));
        }
        if self.frames == 0 {
            return Err(Error::Config("scenario needs at least one frame".into()));
        }
        Ok(())
    }
}

/// Ground truth emitted by a scenario: disc mask, center and active range.
#[derive(Debug, Clone)]
pub struct GroundTruthSpec {
    pub mask: BinaryMask,
    pub center: Point,
    pub active: (usize, usize),
}

/// One analytic flow model. `velocity` returns the forward displacement in
/// pixels per step at a pixel position and frame.
pub trait Scenario: Send + Sync {
    fn name(&self) -> &'static str;
    fn dims(&self) -> (u32, u32);
    fn frames(&self) -> usize;
    fn velocity(&self, x: f64, y: f64, frame: usize) -> [f32; 2];

    /// Ground truth, if the scenario stages a bottleneck. `margin_frames` is
    /// the pipeline warm-up to skip after onset before activity starts.
    fn ground_truth(&self, margin_frames: usize) -> Option<GroundTruthSpec> {
        let _ = margin_frames;
        None
    }
}

struct ZeroScenario {
    width: u32,
    height: u32,
    frames: usize,
}

impl Scenario for ZeroScenario {
    fn name(&self) -> &'static str {
        "zero"
    }

    fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    fn frames(&self) -> usize {
        self.frames
    }

    fn velocity(&self, _x: f64, _y: f64, _frame: usize) -> [f32; 2] {
        [0.0, 0.0]
    }
}

struct UniformScenario {
    width: u32,
    height: u32,
    frames: usize,
    u: f32,
    v: f32,
}

impl Scenario for UniformScenario {
    fn name(&self) -> &'static str {
        "uniform"
    }

    fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    fn frames(&self) -> usize {
        self.frames
    }

    fn velocity(&self, _x: f64, _y: f64, _frame: usize) -> [f32; 2] {
        [self.u, self.v]
    }
}

struct SaddleScenario {
    width: u32,
    height: u32,
    frames: usize,
    strength: f32,
    center: (f64, f64),
}

impl Scenario for SaddleScenario {
    fn name(&self) -> &'static str {
        "saddle"
    }

    fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    fn frames(&self) -> usize {
        self.frames
    }

    fn velocity(&self, x: f64, y: f64, _frame: usize) -> [f32; 2] {
        let a = self.strength as f64;
        [
            (a * (x - self.center.0)) as f32,
            (-a * (y - self.center.1)) as f32,
        ]
    }
}

/// Converging channel toward a wall gap: an incompressible nozzle whose
/// half-width tapers linearly from the full half-height at x = 0 to the gap
/// half-width at the wall, then a diverging fan behind it where the crowd
/// disperses again. Flow is zero before the onset frame and outside the
/// nozzle/fan (stagnant areas pressed against the wall).
struct FunnelScenario {
    width: u32,
    height: u32,
    frames: usize,
    gap_center: f64,
    gap_width: f64,
    wall_x: f64,
    speed: f64,
    onset_frame: usize,
}

impl FunnelScenario {
    /// Channel half-width: tapers to the gap at the wall, widens again
    /// behind it.
    fn half_width_at(&self, x: f64) -> (f64, f64) {
        let full = self.height as f64 / 2.0;
        let gap = self.gap_width / 2.0;
        if x <= self.wall_x {
            let slope = -(full - gap) / self.wall_x;
            (gap + (full - gap) * (self.wall_x - x) / self.wall_x, slope)
        } else {
            let run = (self.width as f64 - 1.0 - self.wall_x).max(1.0);
            let slope = (full - gap) / run;
            (gap + (full - gap) * (x - self.wall_x) / run, slope)
        }
    }
}

impl Scenario for FunnelScenario {
    fn name(&self) -> &'static str {
        "funnel"
    }

    fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    fn frames(&self) -> usize {
        self.frames
    }

    fn velocity(&self, x: f64, y: f64, frame: usize) -> [f32; 2] {
        if frame < self.onset_frame {
            return [0.0, 0.0];
        }
        let full = self.height as f64 / 2.0;
        let dy = y - self.gap_center;
        let (w, w_prime) = self.half_width_at(x);
        if dy.abs() > w {
            return [0.0, 0.0]; // stagnant outside the channel
        }
        // stream function psi = speed * full * dy / w(x) keeps the field
        // divergence-free: u = d(psi)/dy, v = -d(psi)/dx
        let u = self.speed * full / w;
        let v = self.speed * full * dy * w_prime / (w * w);
        [u as f32, v as f32]
    }

    fn ground_truth(&self, margin_frames: usize) -> Option<GroundTruthSpec> {
        let radius = self.gap_width / 2.0;
        let center = Point::new(self.wall_x, self.gap_center);
        let mut bits = Vec::with_capacity((self.width * self.height) as usize);
        for y in 0..self.height {
            for x in 0..self.width {
                bits.push(Point::new(x as f64, y as f64).distance(center) <= radius);
            }
        }
        let mask = BinaryMask::new(self.width, self.height, bits).ok()?;
        let start = (self.onset_frame + margin_frames).min(self.frames.saturating_sub(1));
        Some(GroundTruthSpec {
            mask,
            center,
            active: (start, self.frames.saturating_sub(1)),
        })
    }
}

type BuildFn = fn(&ScenarioConfig) -> Result<Box<dyn Scenario>>;

/// Scenario registry: name -> builder. Extend by adding a row.
pub const REGISTRY: &[(&str, BuildFn)] = &[
    ("zero", build_zero),
    ("uniform", build_uniform),
    ("saddle", build_saddle),
    ("funnel", build_funnel),
];

pub fn scenario_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|(n, _)| *n).collect()
}

/// Looks a scenario up by name and builds it from the config.
pub fn build(name: &str, config: &ScenarioConfig) -> Result<Box<dyn Scenario>> {
    match REGISTRY.iter().find(|(n, _)| *n == name) {
        Some((_, build)) => build(config),
        None => Err(Error::Config(format!(
            "unknown scenario `{name}`; known: {}",
            scenario_names().join(", ")
        ))),
    }
}

fn build_zero(config: &ScenarioConfig) -> Result<Box<dyn Scenario>> {
    config.validate_dims()?;
    Ok(Box::new(ZeroScenario {
        width: config.width,
        height: config.height,
        frames: config.frames,
    }))
}

fn build_uniform(config: &ScenarioConfig) -> Result<Box<dyn Scenario>> {
    config.validate_dims()?;
    if !config.uniform_u.is_finite() || !config.uniform_v.is_finite() {
        return Err(Error::Config("uniform velocity must be finite".into()));
    }
    Ok(Box::new(UniformScenario {
        width: config.width,
        height: config.height,
        frames: config.frames,
        u: config.uniform_u,
        v: config.uniform_v,
    }))
}

fn build_saddle(config: &ScenarioConfig) -> Result<Box<dyn Scenario>> {
    config.validate_dims()?;
    if !(config.saddle_strength.is_finite() && config.saddle_strength > 0.0) {
        return Err(Error::Config(format!(
            "saddle strength must be positive, got {}",
            config.saddle_strength
        )));
    }
    Ok(Box::new(SaddleScenario {
        width: config.width,
        height: config.height,
        frames: config.frames,
        strength: config.saddle_strength,
        center: (
            (config.width - 1) as f64 / 2.0,
            (config.height - 1) as f64 / 2.0,
        ),
    }))
}

fn build_funnel(config: &ScenarioConfig) -> Result<Box<dyn Scenario>> {
    config.validate_dims()?;
    let gap_center = config
        .gap_center
        .unwrap_or((config.height - 1) as f64 / 2.0);
    let wall_x = config.wall_x.unwrap_or(config.width as f64 * 0.6);
    if !(config.gap_width > 0.0 && config.gap_width < config.height as f64) {
        return Err(Error::Config(format!(
            "gap width must be in (0, height), got {}",
            config.gap_width
        )));
    }
    if !(wall_x > 0.0 && wall_x < config.width as f64) {
        return Err(Error::Config(format!(
            "wall x must be in (0, width), got {wall_x}"
        )));
    }
    if config.onset_frame >= config.frames {
        return Err(Error::Config(format!(
            "onset frame {} is past the last frame {}",
            config.onset_frame,
            config.frames - 1
        )));
    }
    if !(config.speed > 0.0 && config.speed.is_finite()) {
        return Err(Error::Config(format!(
            "funnel speed must be positive, got {}",
            config.speed
        )));
    }
    Ok(Box::new(FunnelScenario {
        width: config.width,
        height: config.height,
        frames: config.frames,
        gap_center,
        gap_width: config.gap_width,
        wall_x,
        speed: config.speed,
        onset_frame: config.onset_frame,
    }))
}

/// Renders one forward flow field of a scenario.
pub fn render_field(scenario: &dyn Scenario, frame: usize) -> Result<FlowField> {
    let (w, h) = scenario.dims();
    let mut vectors = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            vectors.push(scenario.velocity(x as f64, y as f64, frame));
        }
    }
    FlowField::new(w, h, vectors)
}

/// Files written by [`generate`].
#[derive(Debug, Clone)]
pub struct GeneratedScenario {
    pub flow_dir: std::path::PathBuf,
    pub ground_truth: Option<std::path::PathBuf>,
}

/// Writes per-frame `.flo` pairs (backward = negated forward) and, when the
/// scenario stages a bottleneck, `gt_mask.pgm` plus `ground_truth.txt` in the
/// output directory.
pub fn generate(
    scenario: &dyn Scenario,
    out_dir: impl AsRef<Path>,
    gt_margin_frames: usize,
) -> Result<GeneratedScenario> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    for frame in 0..scenario.frames() {
        let field = render_field(scenario, frame)?;
        write_flo(&field, out_dir.join(forward_file_name(frame)))?;
        let negated: Vec<[f32; 2]> = field.vectors().iter().map(|v| [-v[0], -v[1]]).collect();
        let backward = FlowField::new(field.width(), field.height(), negated)?;
        write_flo(&backward, out_dir.join(backward_file_name(frame)))?;
    }

    let ground_truth = match scenario.ground_truth(gt_margin_frames) {
        Some(spec) => {
            let mask_path = out_dir.join("gt_mask.pgm");
            write_mask(&spec.mask, &mask_path)?;
            let doc_path = out_dir.join("ground_truth.txt");
            let doc = format!(
                "mask = gt_mask.pgm\ncenter = {},{}\nactive = {}-{}\n",
                spec.center.x, spec.center.y, spec.active.0, spec.active.1
            );
            std::fs::write(&doc_path, doc).map_err(|e| Error::io(&doc_path, e))?;
            Some(doc_path)
        }
        None => None,
    };

    Ok(GeneratedScenario {
        flow_dir: out_dir.to_path_buf(),
        ground_truth,
    })
}
