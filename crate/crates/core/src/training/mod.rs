//! Iterative training of scene-network DT energies and detection thresholds.
//!
//! Every training route `k` owns a correlation impact weight `tw_k(i, j)` for
//! each transition it makes. The activity correlation of an edge is the sum
//! of the weights on it and the DT energy is its reciprocal, capped at the
//! large value `L`. Training alternates three steps until nothing moves:
//!
//! 1. rebuild the route maps from the current energies,
//! 2. pick `(T1, alpha)` minimising `err_FA² + err_miss²` on the training set,
//! 3. rescale the weights of every misclassified route: false alarms get
//!    heavier weights (cheaper edges), misses lighter ones.
//!
//! [`train_with_classifier`] swaps step 2 for re-fitting a
//! [`ProbabilityClassifier`] and scales weights by its confidence instead.

mod probability;
mod thresholds;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use probability::{LogisticProbabilityClassifier, ProbabilityClassifier};
pub use thresholds::{alpha_grid, update_thresholds, ThresholdChoice};

use crate::detect::{DetectionRules, FlagReason};
use crate::error::{NtbError, Result};
use crate::grid::{PatchIndex, PatchRoute, SceneConfig};
use crate::network::{TransmissionNetwork, DEFAULT_LARGE_VALUE};
use crate::routemap::{route_maps_for_entrances, sbip, RouteMaps};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AbnormalityType {
    I,
    II,
    III,
}

/// Ground-truth or predicted label of one route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Abnormal(AbnormalityType),
}

impl Label {
    pub fn is_abnormal(self) -> bool {
        matches!(self, Label::Abnormal(_))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Normal => "normal",
            Label::Abnormal(AbnormalityType::I) => "I",
            Label::Abnormal(AbnormalityType::II) => "II",
            Label::Abnormal(AbnormalityType::III) => "III",
        })
    }
}

impl FromStr for Label {
    type Err = NtbError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "normal" => Ok(Label::Normal),
            "I" => Ok(Label::Abnormal(AbnormalityType::I)),
            "II" => Ok(Label::Abnormal(AbnormalityType::II)),
            "III" => Ok(Label::Abnormal(AbnormalityType::III)),
            other => Err(NtbError::UnknownLabel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub track_id: u64,
    pub route: PatchRoute,
    pub label: Label,
}

/// Training knobs. Serialized as the training config JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub max_iters: usize,
    /// Stop once the largest relative change of any `e(i, j)` is below this
    /// and the thresholds repeat.
    pub tol: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_step: f64,
    /// Floor for impact weights.
    pub epsilon: f64,
    pub large_value: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-4,
            alpha_min: 1.0,
            alpha_max: 10.0,
            alpha_step: 0.1,
            epsilon: 1e-9,
            large_value: DEFAULT_LARGE_VALUE,
        }
    }
}

/// An undirected edge with `i < j`.
pub type Edge = (PatchIndex, PatchIndex);

fn edge(i: PatchIndex, j: PatchIndex) -> Edge {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Impact weights `tw_k(i, j)` of every training route, keyed by edge.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImpactWeights {
    pub per_sample: Vec<BTreeMap<Edge, f64>>,
}

impl ImpactWeights {
    /// `tw_k(i, j) = 1` for every edge route `k` crosses, counted once per
    /// route however often it is crossed.
    pub fn initial(samples: &[TrainingSample]) -> Self {
        Self {
            per_sample: samples
                .iter()
                .map(|s| {
                    s.route
                        .transitions()
                        .map(|(i, j)| (edge(i, j), 1.0))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn min_weight(&self) -> Option<f64> {
        self.per_sample
            .iter()
            .flat_map(|m| m.values().copied())
            .reduce(f64::min)
    }

    /// Activity correlation `AC(i, j) = Σ_k tw_k(i, j)` over the edges in use.
    pub fn activity_correlation(&self) -> BTreeMap<Edge, f64> {
        let mut ac = BTreeMap::new();
        for m in &self.per_sample {
            for (&e, &w) in m {
                *ac.entry(e).or_insert(0.0) += w;
            }
        }
        ac
    }

    /// Scene network with `e = 1/AC`, `L` where the correlation is below
    /// `epsilon` or its reciprocal exceeds `L`, and 0 inside equivalence sets.
    pub fn to_network(&self, scene: &SceneConfig, cfg: &TrainingConfig) -> TransmissionNetwork {
        let n = scene.node_count();
        let large = cfg.large_value;
        let mut net = TransmissionNetwork::filled(n, false, large, large);
        for ((i, j), ac) in self.activity_correlation() {
            if i != j && i < n && j < n {
                net.set_energy(i, j, energy_from_correlation(ac, cfg));
            }
        }
        net.apply_equivalences(scene);
        net
    }
}

pub fn energy_from_correlation(ac: f64, cfg: &TrainingConfig) -> f64 {
    if ac >= cfg.epsilon {
        (1.0 / ac).min(cfg.large_value)
    } else {
        cfg.large_value
    }
}

/// Initial weights and the network they induce.
pub fn init_weights(
    samples: &[TrainingSample],
    scene: &SceneConfig,
    cfg: &TrainingConfig,
) -> (ImpactWeights, TransmissionNetwork) {
    let tw = ImpactWeights::initial(samples);
    let net = tw.to_network(scene, cfg);
    (tw, net)
}

/// Energies of one route at every step, against a network and route map.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteEnergies {
    /// `(E(u, q_p), E_min(u, q_p), reachable)` for each prefix end `q_p`.
    pub steps: Vec<(f64, f64, bool)>,
}

impl RouteEnergies {
    pub fn compute(
        route: &PatchRoute,
        net: &TransmissionNetwork,
        maps: &RouteMaps,
    ) -> Result<Self> {
        let map = maps.get(route.start()).ok_or_else(|| {
            NtbError::InvalidArgument(format!("no route map for start patch {}", route.start()))
        })?;
        let cum = net.cumulative_energy(route)?;
        Ok(Self {
            steps: route
                .patches()
                .iter()
                .zip(cum)
                .map(|(&q, e)| (e, map.e_min(q), map.is_reachable(q)))
                .collect(),
        })
    }

    pub fn total(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.0)
    }

    pub fn final_e_min(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.1)
    }

    /// First step flagged under `rules`.
    pub fn first_flag(&self, rules: &DetectionRules) -> Option<(usize, FlagReason)> {
        self.steps
            .iter()
            .enumerate()
            .find_map(|(p, &(e, m, r))| rules.check(e, m, r).map(|why| (p, why)))
    }

    pub fn is_flagged(&self, rules: &DetectionRules) -> bool {
        self.first_flag(rules).is_some()
    }
}

/// How one training sample fared under the current rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Correct,
    /// Normal route flagged; `(E, T)` of the threshold that fired.
    FalseAlarm {
        energy: f64,
        threshold: f64,
    },
    /// Abnormal route passed; `(E, T)` of the threshold it came closest to.
    Miss {
        energy: f64,
        threshold: f64,
    },
}

impl Outcome {
    /// Multiplier applied to this sample's weights.
    pub fn multiplier(&self) -> f64 {
        match *self {
            Outcome::Correct => 1.0,
            Outcome::FalseAlarm { energy, threshold } => {
                assert!(energy > 0.0, "a false alarm needs positive energy");
                (1.0 + (energy - threshold) / energy).max(1.0)
            }
            Outcome::Miss { energy, threshold } => {
                if threshold > 0.0 {
                    (1.0 - (threshold - energy) / (2.0 * threshold)).min(1.0)
                } else {
                    1.0
                }
            }
        }
    }
}

/// Outcome of a sample under `rules`, with the threshold choice used by the
/// weight update.
pub fn outcome(label: Label, energies: &RouteEnergies, rules: &DetectionRules) -> Outcome {
    let flag = energies.first_flag(rules);
    let total = energies.total();
    match (label.is_abnormal(), flag) {
        (false, None) | (true, Some(_)) => Outcome::Correct,
        (false, Some((step, why))) => {
            // criterion 1 is preferred whenever it fired
            if total > rules.t1 {
                return Outcome::FalseAlarm {
                    energy: total,
                    threshold: rules.t1,
                };
            }
            let (e, m, _) = energies.steps[step];
            let threshold = match why {
                FlagReason::UnreachablePatch => m,
                _ => rules.alpha * m,
            };
            Outcome::FalseAlarm {
                energy: e,
                threshold,
            }
        }
        (true, None) => {
            // the threshold the route came relatively closest to
            let mut best = (total / rules.t1, total, rules.t1);
            for &(e, m, _) in &energies.steps {
                let t2 = rules.alpha * m;
                if t2 > 0.0 && e / t2 > best.0 {
                    best = (e / t2, e, t2);
                }
            }
            Outcome::Miss {
                energy: best.1,
                threshold: best.2,
            }
        }
    }
}

/// Route maps for every start patch used by `samples`; non-entrance starts
/// get on-demand maps.
pub fn route_maps_for_samples(
    net: &TransmissionNetwork,
    scene: &SceneConfig,
    samples: &[TrainingSample],
) -> Result<RouteMaps> {
    let mut maps = route_maps_for_entrances(net, scene)?;
    let starts: BTreeSet<PatchIndex> = samples.iter().map(|s| s.route.start()).collect();
    for u in starts {
        if maps.get(u).is_none() {
            maps.insert(sbip(net, u)?);
        }
    }
    Ok(maps)
}

fn evaluate_all(
    samples: &[TrainingSample],
    net: &TransmissionNetwork,
    maps: &RouteMaps,
) -> Result<Vec<RouteEnergies>> {
    samples
        .iter()
        .map(|s| RouteEnergies::compute(&s.route, net, maps))
        .collect()
}

/// Applies one multiplier per sample to its weights, flooring at `epsilon`.
pub fn apply_multipliers(
    tw: &ImpactWeights,
    multipliers: &[f64],
    cfg: &TrainingConfig,
) -> ImpactWeights {
    ImpactWeights {
        per_sample: tw
            .per_sample
            .iter()
            .zip(multipliers)
            .map(|(m, &f)| {
                m.iter()
                    .map(|(&e, &w)| {
                        (
                            e,
                            if f == 1.0 {
                                w
                            } else {
                                (w * f).max(cfg.epsilon)
                            },
                        )
                    })
                    .collect()
            })
            .collect(),
    }
}

/// One weight update. Returns the new weights, the new network and the
/// per-sample outcomes that drove it.
pub fn update_weights(
    samples: &[TrainingSample],
    tw: &ImpactWeights,
    energies: &[RouteEnergies],
    rules: &DetectionRules,
    scene: &SceneConfig,
    cfg: &TrainingConfig,
) -> (ImpactWeights, TransmissionNetwork, Vec<Outcome>) {
    let outcomes: Vec<Outcome> = samples
        .iter()
        .zip(energies)
        .map(|(s, e)| outcome(s.label, e, rules))
        .collect();
    let multipliers: Vec<f64> = outcomes.iter().map(Outcome::multiplier).collect();
    let next = apply_multipliers(tw, &multipliers, cfg);
    let net = next.to_network(scene, cfg);
    (next, net, outcomes)
}

/// Largest `|new - old| / old` over all edges.
pub fn max_relative_change(old: &TransmissionNetwork, new: &TransmissionNetwork) -> f64 {
    old.row_major()
        .iter()
        .zip(new.row_major())
        .map(|(&a, &b)| {
            if a == b {
                0.0
            } else if a == 0.0 {
                f64::INFINITY
            } else {
                ((b - a) / a).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    #[serde(rename = "T1")]
    pub t1: f64,
    pub alpha: f64,
    pub err_fa: f64,
    pub err_miss: f64,
}

/// Learned scene network and thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedAbnormalityModel {
    pub scene: SceneConfig,
    pub network: TransmissionNetwork,
    pub weights: ImpactWeights,
    pub t1: f64,
    pub alpha: f64,
    pub log: Vec<IterationRecord>,
    pub converged: bool,
    /// Route maps of the entrance patches on `network`.
    pub route_maps: RouteMaps,
}

impl TrainedAbnormalityModel {
    /// Assembles a model from stored parts, rebuilding the entrance maps.
    pub fn from_parts(
        scene: SceneConfig,
        network: TransmissionNetwork,
        t1: f64,
        alpha: f64,
        log: Vec<IterationRecord>,
        converged: bool,
    ) -> Result<Self> {
        scene.validate()?;
        if network.node_count() != scene.node_count() {
            return Err(NtbError::DimensionMismatch {
                expected: scene.node_count(),
                got: network.node_count(),
            });
        }
        let route_maps = route_maps_for_entrances(&network, &scene)?;
        Ok(Self {
            scene,
            network,
            weights: ImpactWeights::default(),
            t1,
            alpha,
            log,
            converged,
            route_maps,
        })
    }

    pub fn rules(&self) -> DetectionRules {
        DetectionRules::new(self.t1, self.alpha)
    }

    pub fn large_value(&self) -> f64 {
        self.network.large_value()
    }

    pub fn iterations(&self) -> usize {
        self.log.len()
    }
}

fn warn_on_inputs(samples: &[TrainingSample], scene: &SceneConfig) {
    let abnormal = samples.iter().filter(|s| s.label.is_abnormal()).count();
    if abnormal == 0 || abnormal == samples.len() {
        log::warn!(
            "training set has {abnormal} abnormal and {} normal routes; thresholds will be one-sided",
            samples.len() - abnormal
        );
    }
    let off: BTreeSet<PatchIndex> = samples
        .iter()
        .map(|s| s.route.start())
        .filter(|u| !scene.entrance_patches.contains(u))
        .collect();
    if !off.is_empty() {
        log::warn!(
            "{} training start patch(es) are not entrances; their route maps are computed on demand",
            off.len()
        );
    }
}

fn validate_inputs(samples: &[TrainingSample], scene: &SceneConfig) -> Result<()> {
    scene.validate()?;
    if samples.is_empty() {
        return Err(NtbError::EmptyInput("training samples"));
    }
    let n = scene.node_count();
    for s in samples {
        if let Some(&p) = s.route.patches().iter().find(|&&p| p >= n) {
            return Err(NtbError::IndexOutOfRange {
                index: p,
                node_count: n,
            });
        }
    }
    Ok(())
}

fn finish(
    scene: &SceneConfig,
    net: TransmissionNetwork,
    weights: ImpactWeights,
    choice: ThresholdChoice,
    log: Vec<IterationRecord>,
    converged: bool,
) -> Result<TrainedAbnormalityModel> {
    let route_maps = route_maps_for_entrances(&net, scene)?;
    Ok(TrainedAbnormalityModel {
        scene: scene.clone(),
        network: net,
        weights,
        t1: choice.t1,
        alpha: choice.alpha,
        log,
        converged,
        route_maps,
    })
}

/// Runs the threshold/weight feedback loop to a fixpoint or `max_iters`.
pub fn train(
    samples: &[TrainingSample],
    scene: &SceneConfig,
    cfg: &TrainingConfig,
) -> Result<TrainedAbnormalityModel> {
    validate_inputs(samples, scene)?;
    warn_on_inputs(samples, scene);
    let (mut tw, mut net) = init_weights(samples, scene, cfg);
    let mut log = Vec::new();
    let mut prev: Option<ThresholdChoice> = None;
    for iter in 1..=cfg.max_iters.max(1) {
        let maps = route_maps_for_samples(&net, scene, samples)?;
        let energies = evaluate_all(samples, &net, &maps)?;
        let choice = update_thresholds(samples, &energies, prev.map(|c| c.t1), cfg);
        log.push(IterationRecord {
            iter,
            t1: choice.t1,
            alpha: choice.alpha,
            err_fa: choice.err_fa,
            err_miss: choice.err_miss,
        });
        let rules = DetectionRules::new(choice.t1, choice.alpha);
        let (next_tw, next_net, _) = update_weights(samples, &tw, &energies, &rules, scene, cfg);
        let change = max_relative_change(&net, &next_net);
        let repeated = prev.is_some_and(|p| p.t1 == choice.t1 && p.alpha == choice.alpha);
        if change == 0.0 || (change < cfg.tol && repeated) {
            return finish(scene, net, tw, choice, log, true);
        }
        if iter == cfg.max_iters.max(1) {
            return finish(scene, net, tw, choice, log, false);
        }
        prev = Some(choice);
        tw = next_tw;
        net = next_net;
    }
    unreachable!("loop returns on its last iteration")
}

/// `[E(u, q), E(u, q) / E_min(u, q)]` for the classifier-in-the-loop variant.
pub fn energy_features(energies: &RouteEnergies, large_value: f64) -> [f64; 2] {
    let e = energies.total();
    let m = energies.final_e_min();
    let ratio = if m > 0.0 {
        e / m
    } else if e > 0.0 {
        large_value
    } else {
        1.0
    };
    [e, ratio]
}

/// Training where a probability classifier on the energy features replaces
/// the threshold rules. Weights of false alarms grow by `1 + P`, weights of
/// misses shrink by `1 - P`, `P` being the classifier's confidence.
///
/// The returned model also carries `(T1, alpha)` thresholds fitted to the final
/// energies, so it can be used with [`crate::detect::detect`] as well.
pub fn train_with_classifier<C: ProbabilityClassifier>(
    samples: &[TrainingSample],
    scene: &SceneConfig,
    classifier: &mut C,
    cfg: &TrainingConfig,
) -> Result<TrainedAbnormalityModel> {
    validate_inputs(samples, scene)?;
    warn_on_inputs(samples, scene);
    let (mut tw, mut net) = init_weights(samples, scene, cfg);
    let mut log = Vec::new();
    let mut prev_pred: Option<Vec<bool>> = None;
    let truth: Vec<bool> = samples.iter().map(|s| s.label.is_abnormal()).collect();
    let n_abn = truth.iter().filter(|&&t| t).count();
    let n_norm = truth.len() - n_abn;
    for iter in 1..=cfg.max_iters.max(1) {
        let maps = route_maps_for_samples(&net, scene, samples)?;
        let energies = evaluate_all(samples, &net, &maps)?;
        let features: Vec<[f64; 2]> = energies
            .iter()
            .map(|e| energy_features(e, cfg.large_value))
            .collect();
        classifier.fit(&features, &truth)?;
        let predictions: Vec<(bool, f64)> =
            features.iter().map(|f| classifier.predict(f)).collect();
        let mut fa = 0;
        let mut miss = 0;
        let multipliers: Vec<f64> = predictions
            .iter()
            .zip(&truth)
            .map(|(&(pred, p), &t)| match (t, pred) {
                (false, true) => {
                    fa += 1;
                    1.0 + p.clamp(0.0, 1.0)
                }
                (true, false) => {
                    miss += 1;
                    1.0 - p.clamp(0.0, 1.0 - cfg.epsilon)
                }
                _ => 1.0,
            })
            .collect();
        let err_fa = if n_norm > 0 {
            fa as f64 / n_norm as f64
        } else {
            0.0
        };
        let err_miss = if n_abn > 0 {
            miss as f64 / n_abn as f64
        } else {
            0.0
        };
        let choice = update_thresholds(samples, &energies, None, cfg);
        log.push(IterationRecord {
            iter,
            t1: choice.t1,
            alpha: choice.alpha,
            err_fa,
            err_miss,
        });
        let next_tw = apply_multipliers(&tw, &multipliers, cfg);
        let next_net = next_tw.to_network(scene, cfg);
        let change = max_relative_change(&net, &next_net);
        let pred: Vec<bool> = predictions.iter().map(|p| p.0).collect();
        let repeated = prev_pred.as_ref() == Some(&pred);
        if change == 0.0 || (change < cfg.tol && repeated) {
            return finish(scene, net, tw, choice, log, true);
        }
        if iter == cfg.max_iters.max(1) {
            return finish(scene, net, tw, choice, log, false);
        }
        prev_pred = Some(pred);
        tw = next_tw;
        net = next_net;
    }
    unreachable!("loop returns on its last iteration")
}

#[cfg(test)]
mod tests;
