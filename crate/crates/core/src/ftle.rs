//! Finite-time Lyapunov exponent fields and the long-term temporal median.
//!
//! Per pixel the flow-map Jacobian `G` yields the symmetric matrix
//! `C = G^T G`; with eigenvalues `lambda_1 >= lambda_2 >= 0` the exponent is
//! `ln(sqrt(lambda_1)) / tau`. High ridges of the forward field mark
//! repelling structures, high ridges of the backward field attracting ones.
//! A ring buffer of the most recent raw fields feeds a per-pixel temporal
//! median that suppresses structures caused by individual motion.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::advection::{flow_map_gradient, FlowMap};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::sequence::Direction;

/// Floor applied to degenerate (numerically non-positive) eigenvalues before
/// the logarithm; only fully clamped border pixels reach it.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FtleField {
    base: ScalarField,
    direction: Direction,
    reference_frame: usize,
    tau: u32,
    filtered: bool,
}

impl FtleField {
    pub fn new(
        base: ScalarField,
        direction: Direction,
        reference_frame: usize,
        tau: u32,
        filtered: bool,
    ) -> Self {
        FtleField {
            base,
            direction,
            reference_frame,
            tau,
            filtered,
        }
    }

    pub fn base(&self) -> &ScalarField {
        &self.base
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn reference_frame(&self) -> usize {
        self.reference_frame
    }

    pub fn tau(&self) -> u32 {
        self.tau
    }

    pub fn filtered(&self) -> bool {
        self.filtered
    }

    pub fn width(&self) -> u32 {
        self.base.width()
    }

    pub fn height(&self) -> u32 {
        self.base.height()
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.base.get(x, y)
    }
}

/// Largest eigenvalue of the symmetric matrix `[[a, b], [b, c]]`.
fn symmetric_eigen_max(a: f64, b: f64, c: f64) -> f64 {
    let mean = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    mean + disc
}

/// Computes the raw FTLE field of a flow map.
pub fn ftle_from_map(map: &FlowMap) -> Result<FtleField> {
    let grad = flow_map_gradient(map)?;
    let tau = map.tau() as f64;

    let values: Vec<f64> = grad
        .matrices
        .par_iter()
        .map(|g| {
            // C = G^T G
            let a = g[0][0] * g[0][0] + g[1][0] * g[1][0];
            let b = g[0][0] * g[0][1] + g[1][0] * g[1][1];
            let c = g[0][1] * g[0][1] + g[1][1] * g[1][1];
            let lambda_max = symmetric_eigen_max(a, b, c).max(EIGENVALUE_FLOOR);
            lambda_max.sqrt().ln() / tau
        })
        .collect();

    let base = ScalarField::new(map.width(), map.height(), values)?;
    Ok(FtleField::new(
        base,
        map.direction(),
        map.reference_frame(),
        map.tau(),
        false,
    ))
}

/// Fixed-capacity buffer of the most recent raw FTLE fields of one direction.
///
/// Entries must agree in direction, integration time and dimensions, and
/// their reference frames must advance by exactly `delta_t`.
#[derive(Debug)]
pub struct FtleRingBuffer {
    capacity: usize,
    delta_t: u32,
    entries: VecDeque<FtleField>,
}

impl FtleRingBuffer {
    pub fn new(capacity: usize, delta_t: u32) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("ring buffer capacity must be >= 1".into()));
        }
        if delta_t == 0 {
            return Err(Error::Config("delta_t must be >= 1".into()));
        }
        Ok(FtleRingBuffer {
            capacity,
            delta_t,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    /// Appends the newest field, evicting the oldest once full.
    pub fn push(&mut self, field: FtleField) -> Result<()> {
        if field.filtered() {
            return Err(Error::Config(
                "ring buffer holds raw FTLE fields, got a filtered one".into(),
            ));
        }
        if let Some(last) = self.entries.back() {
            if last.direction() != field.direction() {
                return Err(Error::Config(format!(
                    "ring buffer direction is {}, got {}",
                    last.direction().as_str(),
                    field.direction().as_str()
                )));
            }
            if last.tau() != field.tau() {
                return Err(Error::Config(format!(
                    "ring buffer tau is {}, got {}",
                    last.tau(),
                    field.tau()
                )));
            }
            if (last.width(), last.height()) != (field.width(), field.height()) {
                return Err(Error::Dimension(format!(
                    "ring buffer fields are {}x{}, got {}x{}",
                    last.width(),
                    last.height(),
                    field.width(),
                    field.height()
                )));
            }
            let expected = last.reference_frame() + self.delta_t as usize;
            if field.reference_frame() != expected {
                return Err(Error::Range(format!(
                    "ring buffer expects reference frame {expected}, got {}",
                    field.reference_frame()
                )));
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(field);
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = &FtleField> {
        self.entries.iter()
    }
}

/// Per-pixel temporal median over a full ring buffer.
///
/// Returns `None` while the buffer is still warming up. For an even window
/// the lower of the two middle values is taken, so every output value occurs
/// in some input frame. The result carries the newest entry's reference frame
/// and is tagged filtered.
pub fn median_filter(buffer: &FtleRingBuffer) -> Result<Option<FtleField>> {
    if !buffer.is_full() {
        return Ok(None);
    }
    let fields: Vec<&FtleField> = buffer.entries().collect();
    let newest = fields[fields.len() - 1];
    let n = fields.len();
    let mid = (n - 1) / 2; // lower middle for even n
    let len = newest.base().values().len();

    let values: Vec<f64> = (0..len)
        .into_par_iter()
        .map(|i| {
            let mut window: Vec<f64> = fields.iter().map(|f| f.base().values()[i]).collect();
            window.sort_unstable_by(f64::total_cmp);
            window[mid]
        })
        .collect();

    let base = ScalarField::new(newest.width(), newest.height(), values)?;
    Ok(Some(FtleField::new(
        base,
        newest.direction(),
        newest.reference_frame(),
        newest.tau(),
        true,
    )))
}
