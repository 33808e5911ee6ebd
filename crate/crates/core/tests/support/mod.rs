//! Strategies, oracles and property checks shared by the property suite and
//! the acceptance target.
#![allow(dead_code)]

use std::collections::BTreeMap;

use ntb::eval::abnormality_metrics;
use ntb::grid::{Cell, PatchRoute, RelativeCellRoute, SceneConfig};
use ntb::io::{ModelFile, MODEL_FORMAT_VERSION};
use ntb::network::relative::{EwrScheme, RelativeNetworkSpec};
use ntb::network::TransmissionNetwork;
use ntb::routemap::RouteMap;
use ntb::training::{
    energy_from_correlation, init_weights, route_maps_for_samples, update_thresholds,
    update_weights, AbnormalityType, IterationRecord, Label, RouteEnergies, TrainingConfig,
    TrainingSample,
};
use ntb::DetectionRules;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const L: f64 = 1e6;

// ---------- random networks ----------

/// Directed network whose energies are multiples of 1/64, so every path sum
/// is exact and ties between different routes really happen. Some edges
/// cost `L` (no correlation) and a few cost 0.
pub fn random_network(n: usize, rng: &mut ChaCha8Rng) -> TransmissionNetwork {
    let mut e = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let r: f64 = rng.random();
            e[i * n + j] = if r < 0.25 {
                L
            } else if r < 0.3 {
                0.0
            } else {
                f64::from(rng.random_range(1..=640u32)) / 64.0
            };
        }
    }
    TransmissionNetwork::from_row_major(n, true, L, e).expect("square matrix")
}

pub fn network_strategy(max_n: usize) -> impl Strategy<Value = TransmissionNetwork> {
    (1..=max_n, any::<u64>())
        .prop_map(|(n, seed)| random_network(n, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Settled-set relaxation: repeatedly settle the unsettled node with the
/// smallest tentative energy and relax its out-edges. Energies at or above
/// `L` count as unreachable.
pub fn settled_set_oracle(net: &TransmissionNetwork, u: usize) -> Vec<f64> {
    let n = net.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut settled = vec![false; n];
    dist[u] = 0.0;
    loop {
        let next = (0..n)
            .filter(|&k| !settled[k] && dist[k] < L)
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]));
        let Some(k) = next else { break };
        settled[k] = true;
        for j in 0..n {
            let cand = dist[k] + net.energy(k, j);
            if !settled[j] && cand < dist[j] {
                dist[j] = cand;
            }
        }
    }
    dist.into_iter()
        .map(|d| if d < L { d } else { L })
        .collect()
}

/// Minimum over every simple path from `u`, by depth-first enumeration.
pub fn exhaustive_oracle(net: &TransmissionNetwork, u: usize) -> Vec<f64> {
    fn walk(
        net: &TransmissionNetwork,
        at: usize,
        sum: f64,
        seen: &mut Vec<bool>,
        best: &mut Vec<f64>,
    ) {
        if sum < best[at] {
            best[at] = sum;
        }
        for j in 0..net.node_count() {
            if !seen[j] {
                seen[j] = true;
                walk(net, j, sum + net.energy(at, j), seen, best);
                seen[j] = false;
            }
        }
    }
    let n = net.node_count();
    let mut best = vec![f64::INFINITY; n];
    let mut seen = vec![false; n];
    seen[u] = true;
    walk(net, u, 0.0, &mut seen, &mut best);
    best.into_iter()
        .map(|d| if d < L { d } else { L })
        .collect()
}

/// `E_min` equals the oracle and the reachability flags agree with it.
pub fn check_map_against(map: &RouteMap, oracle: &[f64]) -> Result<(), String> {
    for (k, (&got, &want)) in map.e_min.iter().zip(oracle).enumerate() {
        if got != want {
            return Err(format!("node {k}: E_min {got} vs oracle {want}"));
        }
        if map.reachable[k] != (want < L) {
            return Err(format!(
                "node {k}: reachable flag {} but oracle {want}",
                map.reachable[k]
            ));
        }
    }
    Ok(())
}

/// Energy of `R_min(u, n)` re-summed edge by edge matches `E_min(u, n)`.
pub fn check_route_consistency(
    map: &RouteMap,
    net: &TransmissionNetwork,
    tol: f64,
) -> Result<(), String> {
    for n in 0..map.node_count() {
        match map.route_to(n) {
            Some(r) => {
                if r.first() != Some(&map.source) || r.last() != Some(&n) {
                    return Err(format!("route to {n} has wrong ends: {r:?}"));
                }
                let total: f64 = r.windows(2).map(|w| net.energy(w[0], w[1])).sum();
                if (total - map.e_min(n)).abs() > tol {
                    return Err(format!(
                        "node {n}: route energy {total} vs E_min {}",
                        map.e_min(n)
                    ));
                }
            }
            None if map.is_reachable(n) => {
                return Err(format!("node {n} reachable without a route"))
            }
            None => {}
        }
    }
    Ok(())
}

// ---------- relative routes ----------

pub fn cell_route_strategy(max_len: usize) -> impl Strategy<Value = Vec<Cell>> {
    prop::collection::vec((-20i32..=20, -20i32..=20), 1..=max_len).prop_map(|mut v| {
        v.dedup();
        v
    })
}

pub fn rel(cells: Vec<Cell>, r_max: u32) -> RelativeCellRoute {
    RelativeCellRoute { cells, r_max }
}

pub fn check_enr_closed_loop(cells: Vec<Cell>, r_max: u32) -> Result<(), TestCaseError> {
    let mut cells = cells;
    let start = cells[0];
    if cells.last() != Some(&start) {
        cells.push(start);
    }
    let spec = RelativeNetworkSpec::new(r_max, EwrScheme::Head);
    prop_assert_eq!(spec.enr_total(&rel(cells, r_max)), 0.0);
    Ok(())
}

pub fn check_enr_telescoping(cells: Vec<Cell>, r_max: u32) -> Result<(), TestCaseError> {
    let ring = |c: Cell| f64::from(c.0.unsigned_abs().max(c.1.unsigned_abs()).min(r_max));
    let expected = ring(cells[0]) - ring(*cells.last().unwrap());
    let spec = RelativeNetworkSpec::new(r_max, EwrScheme::Tail);
    prop_assert_eq!(spec.enr_total(&rel(cells, r_max)), expected);
    Ok(())
}

// ---------- additivity ----------

pub fn additivity_strategy() -> impl Strategy<Value = (TransmissionNetwork, Vec<usize>, Vec<usize>)>
{
    network_strategy(10).prop_flat_map(|net| {
        let n = net.node_count();
        (
            Just(net),
            prop::collection::vec(0..n, 1..12),
            prop::collection::vec(0..n, 0..12),
        )
    })
}

pub fn check_additivity(
    net: TransmissionNetwork,
    a: Vec<usize>,
    b_tail: Vec<usize>,
) -> Result<(), TestCaseError> {
    let ra = PatchRoute::new(a.iter().copied()).unwrap();
    let rb = PatchRoute::new(std::iter::once(ra.end()).chain(b_tail)).unwrap();
    let joined = ra.concat(&rb);
    let whole = net.total_energy(&joined).unwrap();
    let parts = net.total_energy(&ra).unwrap() + net.total_energy(&rb).unwrap();
    prop_assert_eq!(whole, parts);
    Ok(())
}

// ---------- training bounds ----------

/// A 4×3 scene with a couple of entrances and random labelled routes.
pub fn training_case_strategy() -> impl Strategy<Value = Vec<TrainingSample>> {
    let route = prop::collection::vec(0usize..12, 1..10);
    let label = prop_oneof![
        3 => Just(Label::Normal),
        1 => Just(Label::Abnormal(AbnormalityType::I)),
        1 => Just(Label::Abnormal(AbnormalityType::II)),
        1 => Just(Label::Abnormal(AbnormalityType::III)),
    ];
    prop::collection::vec((route, label), 1..8).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(k, (r, label))| TrainingSample {
                track_id: k as u64,
                route: PatchRoute::new(r).unwrap(),
                label,
            })
            .collect()
    })
}

pub fn small_scene() -> SceneConfig {
    let mut scene = SceneConfig::new(40, 30, 10).with_entrances([0, 11]);
    scene.equivalence_sets = vec![[5, 6].into_iter().collect()];
    scene
}

/// Runs the training loop step by step and checks, after every iteration:
/// every stored `tw >= epsilon`, every `AC >= epsilon`, every off-diagonal
/// `e` in `(0, L]` and equal to `min(1/AC, L)` on correlated edges or `L`
/// elsewhere, 0 inside an equivalence set, and `T1 > 0`, `alpha >= 1`.
pub fn check_training_bounds(
    samples: Vec<TrainingSample>,
    iterations: usize,
) -> Result<(), TestCaseError> {
    let scene = small_scene();
    let cfg = TrainingConfig::default();
    let (mut tw, mut net) = init_weights(&samples, &scene, &cfg);
    let mut prev_t1 = None;
    for _ in 0..iterations {
        let maps = route_maps_for_samples(&net, &scene, &samples).unwrap();
        let energies: Vec<RouteEnergies> = samples
            .iter()
            .map(|s| RouteEnergies::compute(&s.route, &net, &maps).unwrap())
            .collect();
        let choice = update_thresholds(&samples, &energies, prev_t1, &cfg);
        prop_assert!(choice.t1 > 0.0, "T1 {}", choice.t1);
        prop_assert!(choice.alpha >= 1.0);
        prev_t1 = Some(choice.t1);
        let rules = DetectionRules::new(choice.t1, choice.alpha);
        let (next_tw, next_net, _) = update_weights(&samples, &tw, &energies, &rules, &scene, &cfg);
        tw = next_tw;
        net = next_net;

        for m in &tw.per_sample {
            for &w in m.values() {
                prop_assert!(w >= cfg.epsilon && w.is_finite(), "tw {w}");
            }
        }
        let ac = tw.activity_correlation();
        for &a in ac.values() {
            prop_assert!(a >= cfg.epsilon);
        }
        let n = scene.node_count();
        for i in 0..n {
            for j in 0..n {
                let e = net.energy(i, j);
                if i == j {
                    prop_assert_eq!(e, 0.0);
                    continue;
                }
                if scene
                    .equivalence_sets
                    .iter()
                    .any(|s| s.contains(&i) && s.contains(&j))
                {
                    prop_assert_eq!(e, 0.0);
                    continue;
                }
                prop_assert!(e > 0.0 && e <= L, "e({i},{j}) = {e}");
                let key = (i.min(j), i.max(j));
                let expected = ac
                    .get(&key)
                    .map_or(L, |&a| energy_from_correlation(a, &cfg));
                prop_assert_eq!(e, expected);
            }
        }
    }
    Ok(())
}

// ---------- model files ----------

pub fn model_file_strategy() -> impl Strategy<Value = ModelFile> {
    let scene = (1u32..60, 1u32..60, 5u32..25).prop_map(|(w, h, ps)| SceneConfig::new(w, h, ps));
    scene
        .prop_flat_map(|scene| {
            let n = scene.node_count();
            let energies = prop::collection::vec(
                prop_oneof![
                    Just(0.0),
                    Just(L),
                    0.0f64..1e6,
                    1e-300f64..1e-200,
                    any::<u32>().prop_map(f64::from)
                ],
                n * n,
            );
            let entrances = prop::collection::btree_set(0..n, 0..3);
            let log = prop::collection::vec(
                (0.0f64..1e6, 1.0f64..10.0, 0.0f64..=1.0, 0.0f64..=1.0),
                0..5,
            );
            (
                Just(scene),
                energies,
                entrances,
                1e-9f64..1e7,
                1.0f64..10.0,
                log,
                any::<bool>(),
            )
        })
        .prop_map(
            |(mut scene, energies, entrances, t1, alpha, log, directed)| {
                scene.entrance_patches = entrances;
                ModelFile {
                    format_version: MODEL_FORMAT_VERSION,
                    node_count: scene.node_count(),
                    entrance_patches: scene.entrance_patches.iter().copied().collect(),
                    scene,
                    directed,
                    energies,
                    large_value: L,
                    t1,
                    alpha,
                    converged: directed,
                    log: log
                        .into_iter()
                        .enumerate()
                        .map(|(k, (t1, alpha, err_fa, err_miss))| IterationRecord {
                            iter: k + 1,
                            t1,
                            alpha,
                            err_fa,
                            err_miss,
                        })
                        .collect(),
                    log_file: None,
                    metadata: BTreeMap::from([("seed".to_string(), "7".to_string())]),
                }
            },
        )
}

pub fn check_model_round_trip(file: ModelFile, dir: &std::path::Path) -> Result<(), TestCaseError> {
    let path = dir.join("model.json");
    file.save(&path).unwrap();
    let back = ModelFile::load(&path).unwrap();
    prop_assert_eq!(back.energies.len(), file.energies.len());
    for (a, b) in back.energies.iter().zip(&file.energies) {
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }
    prop_assert_eq!(back.t1.to_bits(), file.t1.to_bits());
    prop_assert_eq!(back.alpha.to_bits(), file.alpha.to_bits());
    prop_assert_eq!(&back, &file);
    // a rebuilt model carries the same matrix
    let model = back.to_model().unwrap();
    prop_assert_eq!(model.network.row_major(), &file.energies[..]);
    Ok(())
}

// ---------- metrics ----------

fn label_strategy() -> impl Strategy<Value = Label> {
    prop_oneof![
        Just(Label::Normal),
        Just(Label::Abnormal(AbnormalityType::I)),
        Just(Label::Abnormal(AbnormalityType::II)),
        Just(Label::Abnormal(AbnormalityType::III)),
    ]
}

pub fn prediction_strategy() -> impl Strategy<Value = (Vec<(Label, Label)>, u64)> {
    (
        prop::collection::vec((label_strategy(), label_strategy()), 1..60),
        any::<u64>(),
    )
}

/// TER = (FP + FN) / total counted by hand, and the report does not depend
/// on which ids the tracks carry.
pub fn check_metric_identities(pairs: Vec<(Label, Label)>, seed: u64) -> Result<(), TestCaseError> {
    let truth: BTreeMap<u64, Label> = pairs
        .iter()
        .enumerate()
        .map(|(k, p)| (k as u64, p.0))
        .collect();
    let pred: BTreeMap<u64, Label> = pairs
        .iter()
        .enumerate()
        .map(|(k, p)| (k as u64, p.1))
        .collect();
    let r = abnormality_metrics(&pred, &truth).unwrap();
    let fp = pairs
        .iter()
        .filter(|(t, p)| !t.is_abnormal() && p.is_abnormal())
        .count();
    let fn_ = pairs
        .iter()
        .filter(|(t, p)| t.is_abnormal() && !p.is_abnormal())
        .count();
    prop_assert_eq!(r.total, pairs.len());
    prop_assert_eq!(r.wrong, fp + fn_);
    prop_assert_eq!(r.ter, Some((fp + fn_) as f64 / pairs.len() as f64));
    let neg = pairs.iter().filter(|(t, _)| !t.is_abnormal()).count();
    let overall = r.overall.clone().unwrap();
    prop_assert_eq!(overall.fa, (neg > 0).then(|| fp as f64 / neg as f64));
    prop_assert_eq!(
        overall.miss,
        (neg < pairs.len()).then(|| fn_ as f64 / (pairs.len() - neg) as f64)
    );
    let confusion_total: usize = r.confusion.iter().flatten().sum();
    prop_assert_eq!(confusion_total, pairs.len());

    // relabel ids with a random injective map
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u64> = (0..pairs.len() as u64)
        .map(|k| k * 7 + rng.random_range(0..7))
        .collect();
    rand::seq::SliceRandom::shuffle(&mut ids[..], &mut rng);
    let truth2: BTreeMap<u64, Label> = ids.iter().zip(&pairs).map(|(&id, p)| (id, p.0)).collect();
    let pred2: BTreeMap<u64, Label> = ids.iter().zip(&pairs).map(|(&id, p)| (id, p.1)).collect();
    prop_assert_eq!(abnormality_metrics(&pred2, &truth2).unwrap(), r);
    Ok(())
}
