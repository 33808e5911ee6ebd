//! Crowd-escape detection from optical-flow vectors.
//!
//! Each flow vector is a package moving from the cell under its tail to the
//! cell under its head, in a normal relative network pinned at the image
//! centre. Coherent outward motion crosses rings outward and drives the
//! window energy negative.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{NtbError, Result};
use crate::grid::Cell;
use crate::network::relative::RelativeNetworkSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowVector {
    pub frame: i64,
    pub x: f64,
    pub y: f64,
    pub dx: f64,
    pub dy: f64,
}

fn cell_of(x: f64, y: f64, center: (f64, f64), cell_size: f64) -> Cell {
    (
        ((x - center.0) / cell_size).round() as i32,
        ((y - center.1) / cell_size).round() as i32,
    )
}

/// Sum of ENR energies of every flow vector.
pub fn crowd_window_energy<'a>(
    flows: impl IntoIterator<Item = &'a FlowVector>,
    center: (f64, f64),
    cell_size: f64,
    spec: &RelativeNetworkSpec,
) -> f64 {
    flows
        .into_iter()
        .map(|f| {
            let from = cell_of(f.x, f.y, center, cell_size);
            let to = cell_of(f.x + f.dx, f.y + f.dy, center, cell_size);
            spec.enr_energy(from, to)
        })
        .sum()
}

/// Flow vectors grouped by frame.
pub fn flows_by_frame(flows: &[FlowVector]) -> BTreeMap<i64, Vec<FlowVector>> {
    let mut out: BTreeMap<i64, Vec<FlowVector>> = BTreeMap::new();
    for f in flows {
        out.entry(f.frame).or_default().push(*f);
    }
    out
}

/// One sliding window, frames `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub start: i64,
    pub end: i64,
    pub energy: f64,
    pub abnormal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrowdReport {
    pub theta: f64,
    pub windows: Vec<WindowResult>,
    /// Per frame: the lowest energy of any window covering it.
    pub frame_energy: BTreeMap<i64, f64>,
    /// Per frame: whether any covering window is abnormal.
    pub frame_abnormal: BTreeMap<i64, bool>,
}

/// Window energies over `frames` (inclusive) with the given size and stride.
/// The last window is cut short at the end of the range.
pub fn window_energies(
    by_frame: &BTreeMap<i64, Vec<FlowVector>>,
    frames: (i64, i64),
    window_size: usize,
    stride: usize,
    center: (f64, f64),
    cell_size: f64,
    spec: &RelativeNetworkSpec,
) -> Result<Vec<(i64, i64, f64)>> {
    if window_size == 0 || stride == 0 {
        return Err(NtbError::InvalidArgument(
            "window size and stride must be at least 1".into(),
        ));
    }
    let (first, last) = frames;
    let mut out = Vec::new();
    let mut start = first;
    while start <= last {
        let end = (start + window_size as i64 - 1).min(last);
        let energy = crowd_window_energy(
            by_frame.range(start..=end).flat_map(|(_, v)| v.iter()),
            center,
            cell_size,
            spec,
        );
        out.push((start, end, energy));
        if end == last {
            break;
        }
        start += stride as i64;
    }
    Ok(out)
}

/// Labels windows abnormal when their energy is below `-theta`.
#[allow(clippy::too_many_arguments)]
pub fn crowd_detect(
    by_frame: &BTreeMap<i64, Vec<FlowVector>>,
    frames: (i64, i64),
    window_size: usize,
    stride: usize,
    theta: f64,
    center: (f64, f64),
    cell_size: f64,
    spec: &RelativeNetworkSpec,
) -> Result<CrowdReport> {
    let raw = window_energies(
        by_frame,
        frames,
        window_size,
        stride,
        center,
        cell_size,
        spec,
    )?;
    let windows: Vec<WindowResult> = raw
        .into_iter()
        .map(|(start, end, energy)| WindowResult {
            start,
            end,
            energy,
            abnormal: energy < -theta,
        })
        .collect();
    let mut frame_energy = BTreeMap::new();
    let mut frame_abnormal = BTreeMap::new();
    for w in &windows {
        for f in w.start..=w.end {
            let e = frame_energy.entry(f).or_insert(f64::INFINITY);
            *e = f64::min(*e, w.energy);
            *frame_abnormal.entry(f).or_insert(false) |= w.abnormal;
        }
    }
    Ok(CrowdReport {
        theta,
        windows,
        frame_energy,
        frame_abnormal,
    })
}

/// `k` population standard deviations of the given window energies.
pub fn calibrate_threshold(window_energies: &[f64], k: f64) -> Result<f64> {
    if window_energies.is_empty() {
        return Err(NtbError::EmptyInput("calibration windows"));
    }
    let n = window_energies.len() as f64;
    let mean = window_energies.iter().sum::<f64>() / n;
    let var = window_energies
        .iter()
        .map(|e| (e - mean).powi(2))
        .sum::<f64>()
        / n;
    Ok(k * var.sqrt())
}
