//! Motion-intensity network: DT energy is the local motion left over after
//! removing a person's own global speed from the optical-flow magnitude in
//! the patches being crossed.

use std::collections::BTreeMap;

use crate::error::{NtbError, Result};
use crate::grid::{PatchIndex, PatchRoute, Trajectory};

/// Mean optical-flow magnitude (pixels/frame) per `(frame, patch)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MotionField {
    entries: BTreeMap<(i64, PatchIndex), f64>,
}

impl MotionField {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores a magnitude. Negative or non-finite magnitudes are rejected.
    pub fn insert(&mut self, frame: i64, patch: PatchIndex, magnitude: f64) -> Result<()> {
        if !magnitude.is_finite() || magnitude < 0.0 {
            return Err(NtbError::InvalidArgument(format!(
                "flow magnitude {magnitude} at frame {frame}, patch {patch}"
            )));
        }
        self.entries.insert((frame, patch), magnitude);
        Ok(())
    }

    pub fn get(&self, frame: i64, patch: PatchIndex) -> Option<f64> {
        self.entries.get(&(frame, patch)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, PatchIndex, f64)> + '_ {
        self.entries.iter().map(|(&(f, p), &m)| (f, p, m))
    }
}

/// EMI of one route plus the number of field lookups that were missing
/// (and counted as zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionEnergy {
    pub energy: f64,
    pub missing_entries: usize,
}

/// `s(i, j, t) = |v_flow(i, j, t) - v(i, j, t)|` where `v_flow` is the mean of
/// the two patches' magnitudes and `v` the object's one-frame backward speed.
pub fn transition_intensity(
    field: &MotionField,
    from: PatchIndex,
    to: PatchIndex,
    frame: i64,
    traj: &Trajectory,
    missing: &mut usize,
) -> f64 {
    let mut lookup = |p| {
        field.get(frame, p).unwrap_or_else(|| {
            *missing += 1;
            0.0
        })
    };
    let v_flow = 0.5 * (lookup(from) + lookup(to));
    let v = match (traj.position_at(frame), traj.position_at(frame - 1)) {
        (Some(a), Some(b)) => (a.0 - b.0).hypot(a.1 - b.1),
        _ => 0.0,
    };
    (v_flow - v).abs()
}

/// Total energy of a route in the motion-intensity network.
pub fn motion_intensity_energy(
    route: &PatchRoute,
    transition_frames: &[i64],
    field: &MotionField,
    traj: &Trajectory,
) -> Result<MotionEnergy> {
    let edges = route.len() - 1;
    if transition_frames.len() != edges {
        return Err(NtbError::DimensionMismatch {
            expected: edges,
            got: transition_frames.len(),
        });
    }
    let mut missing = 0;
    let energy = route
        .transitions()
        .zip(transition_frames)
        .map(|((i, j), &t)| transition_intensity(field, i, j, t, traj, &mut missing))
        .sum();
    if missing > 0 {
        log::warn!(
            "track {}: {missing} motion-field entries missing, treated as 0",
            traj.track_id
        );
    }
    Ok(MotionEnergy {
        energy,
        missing_entries: missing,
    })
}
