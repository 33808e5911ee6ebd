//! Two-person activity features and their classifier.
//!
//! A pair is described by the energy each person spends crossing the scene
//! group network (`E1`, `E2`), the energies of the second person's route
//! through the relative networks centred on the first (`ENR`, `EWR`) and,
//! when a motion field is available, each person's motion-intensity energy
//! (`EMI1`, `EMI2`).

pub mod crowd;

use serde::{Deserialize, Serialize};

use crate::classifier::{GradientConfig, LinearOvr};
use crate::error::{NtbError, Result};
use crate::grid::{
    relative_route, timed_route_from_trajectory, PatchRoute, SceneConfig, Trajectory,
};
use crate::network::motion::{motion_intensity_energy, MotionField};
use crate::network::relative::RelativeNetworkSpec;

pub use crowd::{
    calibrate_threshold, crowd_detect, crowd_window_energy, flows_by_frame, window_energies,
    CrowdReport, FlowVector, WindowResult,
};

/// `[E1, E2, ENR, EWR]` or `[E1, E2, ENR, EWR, EMI1, EMI2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupFeatureVector {
    pub e1: f64,
    pub e2: f64,
    pub enr: f64,
    pub ewr: f64,
    /// `(EMI1, EMI2)`.
    pub emi: Option<(f64, f64)>,
}

impl GroupFeatureVector {
    pub const NAMES: [&'static str; 6] = ["E1", "E2", "ENR", "EWR", "EMI1", "EMI2"];

    pub fn dim(&self) -> usize {
        if self.emi.is_some() {
            6
        } else {
            4
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.e1, self.e2, self.enr, self.ewr];
        if let Some((a, b)) = self.emi {
            v.extend([a, b]);
        }
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let emi = match v.len() {
            4 => None,
            6 => Some((v[4], v[5])),
            got => return Err(NtbError::DimensionMismatch { expected: 4, got }),
        };
        Ok(Self {
            e1: v[0],
            e2: v[1],
            enr: v[2],
            ewr: v[3],
            emi,
        })
    }

    /// The same pair with the two people listed the other way round.
    pub fn swapped(&self) -> Self {
        Self {
            e1: self.e2,
            e2: self.e1,
            enr: self.enr,
            ewr: self.ewr,
            emi: self.emi.map(|(a, b)| (b, a)),
        }
    }
}

/// Energy of a route on the scene group network: every unit move between
/// 8-neighbours costs 1, so a jump costs its Chebyshev length.
pub fn scene_group_energy(route: &PatchRoute, scene: &SceneConfig) -> f64 {
    route
        .transitions()
        .map(|(a, b)| {
            let (ra, ca) = scene.row_col(a);
            let (rb, cb) = scene.row_col(b);
            ra.abs_diff(rb).max(ca.abs_diff(cb)) as f64
        })
        .sum()
}

/// Features of the pair `(traj1, traj2)`. The relative networks are centred
/// on the track with the smaller id and use cells of one patch.
pub fn extract_pair_features(
    traj1: &Trajectory,
    traj2: &Trajectory,
    scene: &SceneConfig,
    spec: &RelativeNetworkSpec,
    field: Option<&MotionField>,
) -> Result<GroupFeatureVector> {
    let (reference, other) = if traj1.track_id <= traj2.track_id {
        (traj1, traj2)
    } else {
        (traj2, traj1)
    };
    let rel = relative_route(reference, other, f64::from(scene.patch_size), spec.r_max)?;
    let t1 = timed_route_from_trajectory(traj1, scene)?;
    let t2 = timed_route_from_trajectory(traj2, scene)?;
    let emi = match field {
        Some(f) => Some((
            motion_intensity_energy(&t1.route, &t1.transition_frames, f, traj1)?.energy,
            motion_intensity_energy(&t2.route, &t2.transition_frames, f, traj2)?.energy,
        )),
        None => None,
    };
    Ok(GroupFeatureVector {
        e1: scene_group_energy(&t1.route, scene),
        e2: scene_group_energy(&t2.route, scene),
        enr: spec.enr_total(&rel),
        ewr: spec.ewr_total(&rel),
        emi,
    })
}

/// One-vs-rest linear classifier over group features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupClassifierModel {
    pub feature_names: Vec<String>,
    pub model: LinearOvr,
}

impl GroupClassifierModel {
    pub fn classes(&self) -> &[String] {
        &self.model.classes
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }
}

pub fn train_group_classifier(
    features: &[GroupFeatureVector],
    labels: &[String],
    cfg: &GradientConfig,
) -> Result<GroupClassifierModel> {
    let dim = features
        .first()
        .ok_or(NtbError::EmptyInput("group features"))?
        .dim();
    if let Some(bad) = features.iter().find(|f| f.dim() != dim) {
        return Err(NtbError::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    let rows: Vec<Vec<f64>> = features.iter().map(GroupFeatureVector::to_vec).collect();
    Ok(GroupClassifierModel {
        feature_names: GroupFeatureVector::NAMES[..dim]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        model: LinearOvr::fit(&rows, labels, cfg)?,
    })
}

/// Predicted class and per-class scores (in `model.classes()` order).
pub fn classify_pair(
    features: &GroupFeatureVector,
    model: &GroupClassifierModel,
) -> Result<(String, Vec<f64>)> {
    model.model.predict(&features.to_vec())
}
