//! Lagrangian analysis of dense crowd motion.
//!
//! The library turns a directory of per-frame optical-flow fields into
//! spatio-temporal bottleneck detections:
//!
//! 1. particles are advected through the flow to build flow maps
//!    ([`advection`]),
//! 2. the flow-map gradients yield finite-time Lyapunov exponent fields,
//!    median-filtered over a ring buffer of reference frames ([`ftle`]),
//! 3. thresholded ridge maps are segmented into crowd-flow contours whose
//!    convexity defects mark bottleneck candidates ([`contour`]),
//! 4. candidates are filtered geometrically, validated against the high-ridge
//!    map and confirmed over time ([`detector`]),
//! 5. confirmed detections are scored frame-wise against annotated ground
//!    truth ([`evaluate`]).
//!
//! [`synth`] generates analytic flow scenarios with known ground truth and
//! [`pipeline`] wires the stages into the deterministic batch driver used by
//! the `crowdflow` binary.

pub mod advection;
pub mod contour;
pub mod detector;
pub mod error;
pub mod evaluate;
pub mod field;
pub mod flo;
pub mod ftle;
pub mod geom;
pub mod imageio;
pub mod pipeline;
pub mod render;
pub mod sequence;
pub mod synth;

pub use error::{Error, Result};
pub use field::{BinaryMask, FlowField, ScalarField};
pub use geom::Point;
pub use sequence::{Direction, FlowSequence};
