//! Online abnormality detection on a trained scene network.
//!
//! At every route step `q` the cumulative energy `E(u, q)` is compared with a
//! global threshold `T1` and with the adaptive threshold
//! `T2(u, q) = alpha * E_min(u, q)`. The first step exceeding either one flags
//! the route, and the flag is kept for every later step.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{PatchIndex, PatchRoute};
use crate::network::TransmissionNetwork;
use crate::routemap::{sbip, RouteMap};
use crate::training::{AbnormalityType, TrainedAbnormalityModel};

/// Why a step was flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagReason {
    /// `E > T1`.
    AboveT1,
    /// `E > alpha * E_min`.
    AboveT2,
    /// The current patch has no finite minimum-energy route.
    UnreachablePatch,
}

/// Which detection criteria are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criteria {
    #[default]
    Both,
    T1Only,
    T2Only,
}

/// Thresholds plus the active criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRules {
    pub t1: f64,
    pub alpha: f64,
    pub criteria: Criteria,
}

impl DetectionRules {
    pub fn new(t1: f64, alpha: f64) -> Self {
        Self {
            t1,
            alpha,
            criteria: Criteria::Both,
        }
    }

    pub fn with_criteria(mut self, criteria: Criteria) -> Self {
        self.criteria = criteria;
        self
    }

    /// Reason the step `(energy, e_min)` is abnormal, if any. Criterion 1 is
    /// checked first.
    pub fn check(&self, energy: f64, e_min: f64, reachable: bool) -> Option<FlagReason> {
        if !reachable {
            return Some(FlagReason::UnreachablePatch);
        }
        if self.criteria != Criteria::T2Only && energy > self.t1 {
            return Some(FlagReason::AboveT1);
        }
        if self.criteria != Criteria::T1Only && energy > self.alpha * e_min {
            return Some(FlagReason::AboveT2);
        }
        None
    }
}

/// Per-step detection record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub patch: PatchIndex,
    pub energy: f64,
    pub e_min: f64,
    pub t2: f64,
    pub flagged: bool,
}

/// Final decision for a route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Normal,
    Abnormal {
        kind: AbnormalityType,
        first_flag_step: usize,
        reason: FlagReason,
    },
}

impl Verdict {
    pub fn is_abnormal(&self) -> bool {
        matches!(self, Verdict::Abnormal { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionVerdict {
    pub steps: Vec<StepRecord>,
    pub verdict: Verdict,
    pub final_energy: f64,
    pub final_e_min: f64,
    pub t1: f64,
    pub t2_final: f64,
    /// The start patch was not an entrance, so its route map was built on demand.
    pub on_demand_map: bool,
}

/// Abnormality type from the final energy and thresholds:
/// I above both, II above `T2` only, III above `T1` only.
pub fn classify_type(energy: f64, t1: f64, t2: f64) -> Option<AbnormalityType> {
    match (energy > t1, energy > t2) {
        (true, true) => Some(AbnormalityType::I),
        (false, true) => Some(AbnormalityType::II),
        (true, false) => Some(AbnormalityType::III),
        (false, false) => None,
    }
}

/// Runs the detection rules along `route` against a network and the route
/// map of the route's start patch.
pub fn detect_with(
    route: &PatchRoute,
    net: &TransmissionNetwork,
    map: &RouteMap,
    rules: &DetectionRules,
) -> Result<DetectionVerdict> {
    let cumulative = net.cumulative_energy(route)?;
    let mut steps = Vec::with_capacity(route.len());
    let mut first: Option<(usize, FlagReason)> = None;
    for (step, (&patch, &energy)) in route.patches().iter().zip(&cumulative).enumerate() {
        let e_min = map.e_min(patch);
        let reason = rules.check(energy, e_min, map.is_reachable(patch));
        if first.is_none() {
            first = reason.map(|r| (step, r));
        }
        steps.push(StepRecord {
            step,
            patch,
            energy,
            e_min,
            t2: rules.alpha * e_min,
            flagged: first.is_some(),
        });
    }
    let last = *steps.last().expect("routes are non-empty");
    let verdict = match first {
        None => Verdict::Normal,
        Some((first_flag_step, reason)) => {
            let kind = classify_type(last.energy, rules.t1, last.t2).unwrap_or(
                // flagged by T2 at an earlier step but back under both at the end
                AbnormalityType::II,
            );
            Verdict::Abnormal {
                kind,
                first_flag_step,
                reason,
            }
        }
    };
    Ok(DetectionVerdict {
        steps,
        verdict,
        final_energy: last.energy,
        final_e_min: last.e_min,
        t1: rules.t1,
        t2_final: last.t2,
        on_demand_map: false,
    })
}

/// Detects with the model's thresholds and both criteria.
pub fn detect(route: &PatchRoute, model: &TrainedAbnormalityModel) -> Result<DetectionVerdict> {
    detect_with_rules(route, model, &model.rules())
}

/// Detects with the model's network but caller-chosen rules.
pub fn detect_with_rules(
    route: &PatchRoute,
    model: &TrainedAbnormalityModel,
    rules: &DetectionRules,
) -> Result<DetectionVerdict> {
    match model.route_maps.get(route.start()) {
        Some(map) => detect_with(route, &model.network, map, rules),
        None => {
            log::warn!(
                "route starts at non-entrance patch {}; computing its route map on demand",
                route.start()
            );
            let map = sbip(&model.network, route.start())?;
            let mut v = detect_with(route, &model.network, &map, rules)?;
            v.on_demand_map = true;
            Ok(v)
        }
    }
}

/// Detection re-armed every `window` steps: each window is judged as its own
/// route starting at the window's first patch.
pub fn detect_rearming(
    route: &PatchRoute,
    model: &TrainedAbnormalityModel,
    window: usize,
) -> Result<Vec<DetectionVerdict>> {
    let window = window.max(1);
    route
        .patches()
        .chunks(window)
        .enumerate()
        .map(|(k, chunk)| {
            // overlap one patch so the transition into the window is counted
            let start = (k * window).saturating_sub(1);
            let end = k * window + chunk.len();
            let sub = PatchRoute::new(route.patches()[start..end].iter().copied())?;
            detect(&sub, model)
        })
        .collect()
}

/// One row of a detection trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub patch: PatchIndex,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "T1")]
    pub t1: f64,
    #[serde(rename = "T2")]
    pub t2: f64,
    pub flag: bool,
}

/// Energy curve of a route with both thresholds, one row per step.
pub fn energy_trace(route: &PatchRoute, model: &TrainedAbnormalityModel) -> Result<Vec<TraceRow>> {
    Ok(trace_rows(&detect(route, model)?))
}

pub fn trace_rows(v: &DetectionVerdict) -> Vec<TraceRow> {
    v.steps
        .iter()
        .map(|s| TraceRow {
            step: s.step,
            patch: s.patch,
            energy: s.energy,
            t1: v.t1,
            t2: s.t2,
            flag: s.flagged,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::DEFAULT_LARGE_VALUE;

    #[test]
    fn criterion_examples() {
        let rules = DetectionRules::new(8.0, 3.0);
        assert_eq!(rules.check(12.0, 10.0, true), Some(FlagReason::AboveT1));
        assert_eq!(rules.check(5.0, 1.0, true), Some(FlagReason::AboveT2));
        assert_eq!(rules.check(2.0, 1.0, true), None);
        assert_eq!(
            rules.check(0.0, 0.0, false),
            Some(FlagReason::UnreachablePatch)
        );
    }

    #[test]
    fn criteria_can_be_disabled() {
        let t1_only = DetectionRules::new(8.0, 3.0).with_criteria(Criteria::T1Only);
        assert_eq!(t1_only.check(5.0, 1.0, true), None);
        let t2_only = DetectionRules::new(8.0, 3.0).with_criteria(Criteria::T2Only);
        assert_eq!(t2_only.check(12.0, 10.0, true), None);
    }

    #[test]
    fn type_examples() {
        assert_eq!(classify_type(20.0, 8.0, 10.0), Some(AbnormalityType::I));
        assert_eq!(classify_type(5.0, 8.0, 3.0), Some(AbnormalityType::II));
        assert_eq!(classify_type(9.0, 8.0, 12.0), Some(AbnormalityType::III));
        assert_eq!(classify_type(2.0, 8.0, 3.0), None);
    }

    fn line_net() -> TransmissionNetwork {
        // 0 - 1 - 2 chain with cheap edges, everything else expensive
        let mut net = TransmissionNetwork::filled(3, false, 10.0, DEFAULT_LARGE_VALUE);
        net.set_energy(0, 1, 1.0);
        net.set_energy(1, 2, 1.0);
        net
    }

    #[test]
    fn flags_are_sticky() {
        let net = line_net();
        let map = sbip(&net, 0).unwrap();
        let rules = DetectionRules::new(100.0, 2.0);
        // 0 1 0 1 2: at step 2 back at source, E=2 > 2*0
        let route = PatchRoute::new([0, 1, 0, 1, 2]).unwrap();
        let v = detect_with(&route, &net, &map, &rules).unwrap();
        let flags: Vec<bool> = v.steps.iter().map(|s| s.flagged).collect();
        assert_eq!(flags, vec![false, false, true, true, true]);
        assert!(matches!(
            v.verdict,
            Verdict::Abnormal {
                kind: AbnormalityType::II,
                first_flag_step: 2,
                reason: FlagReason::AboveT2
            }
        ));
    }

    #[test]
    fn normal_route_passes() {
        let net = line_net();
        let map = sbip(&net, 0).unwrap();
        let route = PatchRoute::new([0, 1, 2]).unwrap();
        let v = detect_with(&route, &net, &map, &DetectionRules::new(5.0, 1.5)).unwrap();
        assert_eq!(v.verdict, Verdict::Normal);
        assert_eq!(v.final_energy, 2.0);
    }

    #[test]
    fn unreachable_patch_is_flagged() {
        let mut net = line_net();
        net.set_energy(0, 2, DEFAULT_LARGE_VALUE);
        net.set_energy(1, 2, DEFAULT_LARGE_VALUE);
        let map = sbip(&net, 0).unwrap();
        let route = PatchRoute::new([0, 1, 2]).unwrap();
        let v = detect_with(&route, &net, &map, &DetectionRules::new(5.0, 1.5)).unwrap();
        assert!(matches!(
            v.verdict,
            Verdict::Abnormal {
                reason: FlagReason::UnreachablePatch,
                first_flag_step: 2,
                ..
            }
        ));
    }

    #[test]
    fn back_and_forth_trace_grows_while_e_min_stalls() {
        let net = line_net();
        let map = sbip(&net, 0).unwrap();
        let route = PatchRoute::new([0, 1, 0, 1, 0, 1]).unwrap();
        let v = detect_with(&route, &net, &map, &DetectionRules::new(100.0, 100.0)).unwrap();
        let rows = trace_rows(&v);
        assert_eq!(rows.len(), 6);
        for w in rows.windows(2) {
            assert!(w[1].energy > w[0].energy);
        }
        let e_mins: Vec<f64> = v.steps.iter().map(|s| s.e_min).collect();
        assert_eq!(e_mins, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }
}
