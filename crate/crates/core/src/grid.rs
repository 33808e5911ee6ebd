//! Scene geometry: the patch grid, trajectories and the patch routes derived
//! from them.
//!
//! A scene of `image_width × image_height` pixels is cut into square patches
//! of `patch_size` pixels. Patches are numbered row-major, so the patch in
//! row `r` and column `c` has index `r * columns + c`. Samples outside the
//! image are clamped to the border before lookup.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{NtbError, Result};

/// Index of a patch (network node) in row-major order.
pub type PatchIndex = usize;

/// Scene layout. Serialized as JSON with exactly these keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub image_width: u32,
    pub image_height: u32,
    pub patch_size: u32,
    #[serde(default)]
    pub entrance_patches: BTreeSet<PatchIndex>,
    /// Groups of patches that image the same physical region (overlapping
    /// camera views). Moving inside a group costs nothing.
    #[serde(default)]
    pub equivalence_sets: Vec<BTreeSet<PatchIndex>>,
}

impl SceneConfig {
    pub fn new(image_width: u32, image_height: u32, patch_size: u32) -> Self {
        Self {
            image_width,
            image_height,
            patch_size,
            entrance_patches: BTreeSet::new(),
            equivalence_sets: Vec::new(),
        }
    }

    pub fn with_entrances(mut self, entrances: impl IntoIterator<Item = PatchIndex>) -> Self {
        self.entrance_patches = entrances.into_iter().collect();
        self
    }

    pub fn columns(&self) -> usize {
        (self.image_width as usize).div_ceil(self.patch_size.max(1) as usize)
    }

    pub fn rows(&self) -> usize {
        (self.image_height as usize).div_ceil(self.patch_size.max(1) as usize)
    }

    pub fn node_count(&self) -> usize {
        self.rows() * self.columns()
    }

    /// (row, column) of a patch index.
    pub fn row_col(&self, patch: PatchIndex) -> (usize, usize) {
        let cols = self.columns();
        (patch / cols, patch % cols)
    }

    pub fn index_of(&self, row: usize, col: usize) -> PatchIndex {
        row * self.columns() + col
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(NtbError::InvalidScene("patch_size must be positive".into()));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(NtbError::InvalidScene(
                "image dimensions must be positive".into(),
            ));
        }
        let n = self.node_count();
        if let Some(&bad) = self.entrance_patches.iter().find(|&&p| p >= n) {
            return Err(NtbError::InvalidScene(format!(
                "entrance patch {bad} outside the {n}-patch grid"
            )));
        }
        let mut seen = BTreeSet::new();
        for set in &self.equivalence_sets {
            for &p in set {
                if p >= n {
                    return Err(NtbError::InvalidScene(format!(
                        "equivalence patch {p} outside the {n}-patch grid"
                    )));
                }
                if !seen.insert(p) {
                    return Err(NtbError::InvalidScene(format!(
                        "patch {p} appears in more than one equivalence set"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Patch containing `(x, y)`; out-of-image points are clamped to the border.
    pub fn locate_patch(&self, x: f64, y: f64) -> PatchIndex {
        let ps = self.patch_size as f64;
        let col = clamp_cell(x, ps, self.columns());
        let row = clamp_cell(y, ps, self.rows());
        row * self.columns() + col
    }

    /// Center of a patch in pixel coordinates.
    pub fn patch_center(&self, patch: PatchIndex) -> (f64, f64) {
        let (r, c) = self.row_col(patch);
        let ps = self.patch_size as f64;
        ((c as f64 + 0.5) * ps, (r as f64 + 0.5) * ps)
    }
}

fn clamp_cell(v: f64, size: f64, count: usize) -> usize {
    if v.is_nan() || v <= 0.0 {
        // negative and NaN both land in the first cell
        return 0;
    }
    ((v / size).floor() as usize).min(count - 1)
}

/// Free-function form of [`SceneConfig::locate_patch`].
pub fn locate_patch(point: (f64, f64), scene: &SceneConfig) -> PatchIndex {
    scene.locate_patch(point.0, point.1)
}

/// One tracked position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub frame: i64,
    pub x: f64,
    pub y: f64,
}

/// A person (or other package) track in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub track_id: u64,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn new(track_id: u64, samples: Vec<Sample>) -> Result<Self> {
        let t = Self { track_id, samples };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.samples.windows(2) {
            if w[1].frame <= w[0].frame {
                return Err(NtbError::InvalidTrajectory(
                    self.track_id,
                    format!("frame {} does not follow frame {}", w[1].frame, w[0].frame),
                ));
            }
        }
        if let Some(s) = self
            .samples
            .iter()
            .find(|s| !s.x.is_finite() || !s.y.is_finite())
        {
            return Err(NtbError::InvalidTrajectory(
                self.track_id,
                format!("non-finite position at frame {}", s.frame),
            ));
        }
        Ok(())
    }

    pub fn first_frame(&self) -> Option<i64> {
        self.samples.first().map(|s| s.frame)
    }

    pub fn last_frame(&self) -> Option<i64> {
        self.samples.last().map(|s| s.frame)
    }

    /// Linearly interpolated position at `frame`, `None` outside the track.
    pub fn position_at(&self, frame: i64) -> Option<(f64, f64)> {
        let idx = self.samples.partition_point(|s| s.frame < frame);
        let hi = self.samples.get(idx)?;
        if hi.frame == frame {
            return Some((hi.x, hi.y));
        }
        if idx == 0 {
            return None;
        }
        let lo = &self.samples[idx - 1];
        let t = (frame - lo.frame) as f64 / (hi.frame - lo.frame) as f64;
        Some((lo.x + t * (hi.x - lo.x), lo.y + t * (hi.y - lo.y)))
    }

    /// Speed in pixels/frame from the backward difference ending at sample `i`.
    pub fn speed_at_sample(&self, i: usize) -> f64 {
        if i == 0 || i >= self.samples.len() {
            return 0.0;
        }
        let (a, b) = (&self.samples[i - 1], &self.samples[i]);
        let dt = (b.frame - a.frame) as f64;
        (b.x - a.x).hypot(b.y - a.y) / dt
    }
}

/// Ordered patch sequence of one activity. Consecutive entries always
/// differ; revisits are kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRoute {
    patches: Vec<PatchIndex>,
}

impl PatchRoute {
    /// Builds a route, merging consecutive duplicates.
    pub fn new(patches: impl IntoIterator<Item = PatchIndex>) -> Result<Self> {
        let mut out: Vec<PatchIndex> = Vec::new();
        for p in patches {
            if out.last() != Some(&p) {
                out.push(p);
            }
        }
        if out.is_empty() {
            return Err(NtbError::EmptyInput("patch route"));
        }
        Ok(Self { patches: out })
    }

    pub fn patches(&self) -> &[PatchIndex] {
        &self.patches
    }

    /// Starting patch `u`.
    pub fn start(&self) -> PatchIndex {
        self.patches[0]
    }

    /// Current (last) patch `q`.
    pub fn end(&self) -> PatchIndex {
        *self.patches.last().expect("routes are non-empty")
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Consecutive `(i, j)` transitions.
    pub fn transitions(&self) -> impl Iterator<Item = (PatchIndex, PatchIndex)> + '_ {
        self.patches.windows(2).map(|w| (w[0], w[1]))
    }

    /// The route truncated to its first `len` patches.
    pub fn prefix(&self, len: usize) -> PatchRoute {
        Self {
            patches: self.patches[..len.clamp(1, self.patches.len())].to_vec(),
        }
    }

    pub fn reversed(&self) -> PatchRoute {
        Self {
            patches: self.patches.iter().rev().copied().collect(),
        }
    }

    /// Appends `other`, merging a shared boundary patch.
    pub fn concat(&self, other: &PatchRoute) -> PatchRoute {
        PatchRoute::new(self.patches.iter().chain(other.patches.iter()).copied())
            .expect("concatenation of non-empty routes")
    }
}

/// A patch route together with the frame at which each transition happened.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedRoute {
    pub route: PatchRoute,
    /// `transition_frames[k]` is the frame at which `route.patches()[k + 1]`
    /// was entered.
    pub transition_frames: Vec<i64>,
    /// Sample index matching each transition frame.
    pub transition_samples: Vec<usize>,
}

/// Maps a trajectory to its patch route.
pub fn route_from_trajectory(traj: &Trajectory, scene: &SceneConfig) -> Result<PatchRoute> {
    Ok(timed_route_from_trajectory(traj, scene)?.route)
}

/// Like [`route_from_trajectory`] but also records when each patch change
/// occurred.
pub fn timed_route_from_trajectory(traj: &Trajectory, scene: &SceneConfig) -> Result<TimedRoute> {
    if traj.samples.is_empty() {
        return Err(NtbError::EmptyInput("trajectory"));
    }
    let mut patches = Vec::new();
    let mut frames = Vec::new();
    let mut idx = Vec::new();
    for (i, s) in traj.samples.iter().enumerate() {
        let p = scene.locate_patch(s.x, s.y);
        if patches.last() != Some(&p) {
            if !patches.is_empty() {
                frames.push(s.frame);
                idx.push(i);
            }
            patches.push(p);
        }
    }
    Ok(TimedRoute {
        route: PatchRoute { patches },
        transition_frames: frames,
        transition_samples: idx,
    })
}

/// Relative offset of one person with respect to a reference person, in
/// cells of the relative network.
pub type Cell = (i32, i32);

/// Chebyshev ring of a relative cell, clamped at `r_max`.
pub fn ring_of(cell: Cell, r_max: u32) -> u32 {
    cell.0.unsigned_abs().max(cell.1.unsigned_abs()).min(r_max)
}

/// Route of one person through the relative network centred on another.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelativeCellRoute {
    pub cells: Vec<Cell>,
    pub r_max: u32,
}

impl RelativeCellRoute {
    pub fn rings(&self) -> Vec<u32> {
        self.cells.iter().map(|&c| ring_of(c, self.r_max)).collect()
    }

    /// The cell-wise negation (the same pair seen from the other person).
    pub fn negated(&self) -> RelativeCellRoute {
        RelativeCellRoute {
            cells: self.cells.iter().map(|&(x, y)| (-x, -y)).collect(),
            r_max: self.r_max,
        }
    }

    pub fn reversed(&self) -> RelativeCellRoute {
        RelativeCellRoute {
            cells: self.cells.iter().rev().copied().collect(),
            r_max: self.r_max,
        }
    }
}

/// Relative route of `other` in the network centred on `reference`.
///
/// Frames of `reference` inside `other`'s frame span are used; `other` is
/// linearly interpolated onto them. Offsets are rounded to the nearest cell.
pub fn relative_route(
    reference: &Trajectory,
    other: &Trajectory,
    cell_size: f64,
    r_max: u32,
) -> Result<RelativeCellRoute> {
    if cell_size <= 0.0 {
        return Err(NtbError::InvalidArgument(
            "cell_size must be positive".into(),
        ));
    }
    let mut cells: Vec<Cell> = Vec::new();
    for s in &reference.samples {
        let Some((ox, oy)) = other.position_at(s.frame) else {
            continue;
        };
        let cell = (
            ((ox - s.x) / cell_size).round() as i32,
            ((oy - s.y) / cell_size).round() as i32,
        );
        if cells.last() != Some(&cell) {
            cells.push(cell);
        }
    }
    if cells.is_empty() {
        return Err(NtbError::DisjointTracks(reference.track_id, other.track_id));
    }
    Ok(RelativeCellRoute { cells, r_max })
}
