//! Ordered flow-field sequences with frame subsampling.
//!
//! A run works on every `delta_t`-th flow pairing: forward field `k` carries
//! frame `base + k*delta_t` to `base + (k+1)*delta_t`, backward field `k`
//! carries `base + (k+1)*delta_t` back to `base + k*delta_t`. Files follow
//! the `fwd_%06d.flo` / `bwd_%06d.flo` convention indexed by the earlier
//! frame of the pairing.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::FlowField;
use crate::flo::read_flo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowSequence {
    fields: Vec<FlowField>,
    direction: Direction,
    delta_t: u32,
    base_index: usize,
}

impl FlowSequence {
    /// All fields must share dimensions; `delta_t >= 1`.
    pub fn new(
        fields: Vec<FlowField>,
        direction: Direction,
        delta_t: u32,
        base_index: usize,
    ) -> Result<Self> {
        if delta_t == 0 {
            return Err(Error::Config("delta_t must be >= 1".into()));
        }
        if let Some(first) = fields.first() {
            let (w, h) = (first.width(), first.height());
            for (k, f) in fields.iter().enumerate() {
                if f.width() != w || f.height() != h {
                    return Err(Error::Dimension(format!(
                        "{} field {k} is {}x{}, expected {w}x{h}",
                        direction.as_str(),
                        f.width(),
                        f.height()
                    )));
                }
            }
        }
        Ok(FlowSequence {
            fields,
            direction,
            delta_t,
            base_index,
        })
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn field(&self, slot: usize) -> &FlowField {
        &self.fields[slot]
    }

    pub fn fields(&self) -> &[FlowField] {
        &self.fields
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn delta_t(&self) -> u32 {
        self.delta_t
    }

    pub fn base_index(&self) -> usize {
        self.base_index
    }

    /// Source frame number of the reference slot.
    pub fn frame_of_slot(&self, slot: usize) -> usize {
        self.base_index + slot * self.delta_t as usize
    }

    pub fn dims(&self) -> Option<(u32, u32)> {
        self.fields.first().map(|f| (f.width(), f.height()))
    }
}

pub fn forward_file_name(frame: usize) -> String {
    format!("fwd_{frame:06}.flo")
}

pub fn backward_file_name(frame: usize) -> String {
    format!("bwd_{frame:06}.flo")
}

/// Discovers `fwd_%06d.flo` / `bwd_%06d.flo` pairs under `dir` and loads the
/// aligned forward/backward sequences, keeping only every `delta_t`-th
/// pairing counted from the smallest forward index present.
///
/// A hole inside the used range is an error naming the missing frame, as is
/// any dimension mismatch between loaded fields.
pub fn build_sequences(dir: impl AsRef<Path>, delta_t: u32) -> Result<(FlowSequence, FlowSequence)> {
    let dir = dir.as_ref();
    if delta_t == 0 {
        return Err(Error::Config("delta_t must be >= 1".into()));
    }

    let forward_frames = scan_indices(dir, "fwd_")?;
    if forward_frames.is_empty() {
        return Err(Error::MissingInput(format!(
            "no fwd_*.flo files found in {}",
            dir.display()
        )));
    }

    let base = *forward_frames.iter().next().unwrap();
    let last_aligned = forward_frames
        .iter()
        .rev()
        .find(|&&f| (f - base) % delta_t as usize == 0)
        .copied()
        .unwrap();

    let mut forward = Vec::new();
    let mut backward = Vec::new();
    let mut frame = base;
    while frame <= last_aligned {
        let fwd_path = dir.join(forward_file_name(frame));
        if !fwd_path.exists() {
            return Err(Error::MissingInput(format!(
                "forward flow for frame {frame} missing: {}",
                fwd_path.display()
            )));
        }
        let bwd_path = dir.join(backward_file_name(frame));
        if !bwd_path.exists() {
            return Err(Error::MissingInput(format!(
                "backward flow for frame {frame} missing: {}",
                bwd_path.display()
            )));
        }
        forward.push(read_flo(&fwd_path)?);
        backward.push(read_flo(&bwd_path)?);
        frame += delta_t as usize;
    }

    let fwd = FlowSequence::new(forward, Direction::Forward, delta_t, base)?;
    let bwd = FlowSequence::new(backward, Direction::Backward, delta_t, base)?;
    if fwd.dims() != bwd.dims() {
        return Err(Error::Dimension(format!(
            "forward fields are {:?}, backward fields are {:?}",
            fwd.dims(),
            bwd.dims()
        )));
    }
    Ok((fwd, bwd))
}

fn scan_indices(dir: &Path, prefix: &str) -> Result<BTreeSet<usize>> {
    let mut frames = BTreeSet::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(stem) = name.strip_prefix(prefix).and_then(|s| s.strip_suffix(".flo")) {
            if let Ok(idx) = stem.parse::<usize>() {
                frames.insert(idx);
            }
        }
    }
    Ok(frames)
}

/// Paths the loader would use for one frame pairing; exposed so generators
/// and error messages agree on the convention.
pub fn pair_paths(dir: &Path, frame: usize) -> (PathBuf, PathBuf) {
    (
        dir.join(forward_file_name(frame)),
        dir.join(backward_file_name(frame)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flo::write_flo;

    fn write_pairs(dir: &Path, frames: &[usize]) {
        for &f in frames {
            let field = FlowField::new(3, 2, vec![[f as f32, 0.0]; 6]).unwrap();
            write_flo(&field, dir.join(forward_file_name(f))).unwrap();
            let back = FlowField::new(3, 2, vec![[-(f as f32), 0.0]; 6]).unwrap();
            write_flo(&back, dir.join(backward_file_name(f))).unwrap();
        }
    }

    #[test]
    fn counts_fields_at_unit_step() {
        let dir = tempfile::tempdir().unwrap();
        write_pairs(dir.path(), &(0..10).collect::<Vec<_>>());
        let (fwd, bwd) = build_sequences(dir.path(), 1).unwrap();
        assert_eq!(fwd.len(), 10);
        assert_eq!(bwd.len(), 10);
        assert_eq!(fwd.base_index(), 0);
    }

    #[test]
    fn skips_frames_with_delta_t() {
        let dir = tempfile::tempdir().unwrap();
        write_pairs(dir.path(), &(0..20).collect::<Vec<_>>());
        let (fwd, _) = build_sequences(dir.path(), 2).unwrap();
        assert_eq!(fwd.len(), 10); // 0,2,...,18
        assert_eq!(fwd.frame_of_slot(0), 0);
        assert_eq!(fwd.frame_of_slot(1), 2);
        assert_eq!(fwd.field(3).get(0, 0), [6.0, 0.0]);
    }

    #[test]
    fn backward_slot_zero_is_reversed_base_pairing() {
        let dir = tempfile::tempdir().unwrap();
        write_pairs(dir.path(), &[0, 4, 8]);
        let (_, bwd) = build_sequences(dir.path(), 4).unwrap();
        assert_eq!(bwd.field(0).get(0, 0), [0.0, 0.0]); // bwd_000000.flo
        assert_eq!(bwd.field(1).get(0, 0), [-4.0, 0.0]);
    }

    #[test]
    fn gap_in_range_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write_pairs(dir.path(), &[0, 2, 6]); // 4 missing for delta_t=2
        let err = build_sequences(dir.path(), 2).unwrap_err();
        assert_eq!(err.category(), "missing-input");
        assert!(err.to_string().contains("frame 4"));
    }

    #[test]
    fn missing_backward_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write_pairs(dir.path(), &[0, 1]);
        std::fs::remove_file(dir.path().join(backward_file_name(1))).unwrap();
        let err = build_sequences(dir.path(), 1).unwrap_err();
        assert!(err.to_string().contains("backward flow for frame 1"));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_pairs(dir.path(), &[0]);
        let odd = FlowField::new(4, 4, vec![[0.0, 0.0]; 16]).unwrap();
        write_flo(&odd, dir.path().join(forward_file_name(1))).unwrap();
        write_flo(&odd, dir.path().join(backward_file_name(1))).unwrap();
        let err = build_sequences(dir.path(), 1).unwrap_err();
        assert_eq!(err.category(), "dimension");
    }

    #[test]
    fn forward_and_backward_lengths_match() {
        let dir = tempfile::tempdir().unwrap();
        write_pairs(dir.path(), &[3, 5, 7, 9, 11]);
        let (fwd, bwd) = build_sequences(dir.path(), 2).unwrap();
        assert_eq!(fwd.len(), bwd.len());
        assert_eq!(fwd.base_index(), 3);
    }
}
