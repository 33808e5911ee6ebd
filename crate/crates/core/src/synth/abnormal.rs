use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{chain, to_trajectory, uniform, Point, Polyline};
use crate::grid::{route_from_trajectory, PatchIndex, SceneConfig, Trajectory};
use crate::training::{AbnormalityType, Label};

/// Single-person corridor scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub image_width: u32,
    pub image_height: u32,
    /// Patch size used for the off-path checks of abnormal samples.
    pub patch_size: u32,
    /// Waypoint paths followed by normal traffic, in either direction.
    pub paths: Vec<Vec<Point>>,
    pub n_normal: usize,
    pub n_type_i: usize,
    pub n_type_ii: usize,
    pub n_type_iii: usize,
    /// Per-sample Gaussian noise (pixels).
    pub noise_sigma: f64,
    /// Each waypoint is shifted by up to this much per trajectory (pixels).
    pub waypoint_jitter: f64,
    /// Walking speed range (pixels/frame).
    pub speed_range: (f64, f64),
    /// Distance walked back in one back-and-forth (pixels).
    pub back_and_forth_range: (f64, f64),
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            image_width: 640,
            image_height: 480,
            patch_size: 48,
            paths: vec![
                vec![(16.0, 208.0), (592.0, 208.0)],
                vec![(304.0, 16.0), (304.0, 464.0)],
                vec![(16.0, 400.0), (176.0, 400.0), (176.0, 80.0), (592.0, 80.0)],
                vec![(464.0, 464.0), (464.0, 304.0), (592.0, 304.0)],
            ],
            n_normal: 200,
            n_type_i: 30,
            n_type_ii: 30,
            n_type_iii: 30,
            noise_sigma: 0.5,
            waypoint_jitter: 3.0,
            speed_range: (3.0, 5.0),
            back_and_forth_range: (150.0, 250.0),
        }
    }
}

impl ScenarioConfig {
    /// Scene at `patch_size` whose entrances are the patches holding path ends.
    pub fn scene(&self, patch_size: u32) -> SceneConfig {
        let base = SceneConfig::new(self.image_width, self.image_height, patch_size);
        let ends: Vec<PatchIndex> = self
            .paths
            .iter()
            .filter(|p| !p.is_empty())
            .flat_map(|p| [p[0], *p.last().unwrap()])
            .map(|(x, y)| base.locate_patch(x, y))
            .collect();
        base.with_entrances(ends)
    }

    fn corners(&self) -> [Point; 4] {
        let (w, h) = (f64::from(self.image_width), f64::from(self.image_height));
        [
            (40.0, 40.0),
            (w - 24.0, 40.0),
            (40.0, h - 40.0),
            (w - 24.0, h - 40.0),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbnormalityCorpus {
    pub trajectories: Vec<Trajectory>,
    /// `(track_id, label)` in track order.
    pub labels: Vec<(u64, Label)>,
}

impl AbnormalityCorpus {
    pub fn label_of(&self, track_id: u64) -> Option<Label> {
        self.labels
            .iter()
            .find(|(id, _)| *id == track_id)
            .map(|(_, l)| *l)
    }
}

struct Gen<'a> {
    cfg: &'a ScenarioConfig,
    rng: ChaCha8Rng,
}

impl Gen<'_> {
    // A path with jittered waypoints, in a random direction.
    fn pick_path(&mut self) -> Polyline {
        let path = self
            .cfg
            .paths
            .choose(&mut self.rng)
            .expect("at least one path")
            .clone();
        self.jittered(path)
    }

    fn jittered(&mut self, mut path: Vec<Point>) -> Polyline {
        if self.rng.random_bool(0.5) {
            path.reverse();
        }
        let j = self.cfg.waypoint_jitter;
        for p in &mut path {
            p.0 += uniform(&mut self.rng, (-j, j));
            p.1 += uniform(&mut self.rng, (-j, j));
        }
        Polyline::new(path)
    }

    fn emit(&mut self, id: u64, waypoints: Vec<Point>, linger: usize) -> Trajectory {
        let speed = uniform(&mut self.rng, self.cfg.speed_range);
        let mut pos = Polyline::new(waypoints).walk(speed);
        let last = *pos.last().unwrap();
        pos.extend(std::iter::repeat_n(last, linger));
        let bounds = (
            f64::from(self.cfg.image_width),
            f64::from(self.cfg.image_height),
        );
        to_trajectory(id, &pos, 0, self.cfg.noise_sigma, bounds, &mut self.rng)
    }

    fn normal(&mut self, id: u64) -> Trajectory {
        let p = self.pick_path();
        self.emit(id, p.between(0.0, p.length()), 0)
    }

    // Walks part of a path, then cuts straight across to another path.
    fn type_i(&mut self, id: u64) -> Trajectory {
        let n = self.cfg.paths.len();
        let i = self.rng.random_range(0..n);
        let j = if n > 1 {
            (i + self.rng.random_range(1..n)) % n
        } else {
            i
        };
        let p = self.jittered(self.cfg.paths[i].clone());
        let q = self.jittered(self.cfg.paths[j].clone());
        let a = p.length() * uniform(&mut self.rng, (0.25, 0.6));
        let b = q.length() * uniform(&mut self.rng, (0.3, 0.7));
        let w = chain(&[p.between(0.0, a), q.between(b, q.length())]);
        self.emit(id, w, 0)
    }

    // Walks back and forth along a normal path one or two times.
    fn type_ii(&mut self, id: u64) -> Trajectory {
        let p = self.pick_path();
        let len = p.length();
        let a = len * uniform(&mut self.rng, (0.35, 0.75));
        let amp = uniform(&mut self.rng, self.cfg.back_and_forth_range)
            .min(a - 20.0)
            .max(0.0);
        let reps = self.rng.random_range(1..=2);
        let mut parts = vec![p.between(0.0, a)];
        for _ in 0..reps {
            parts.push(p.between(a, a - amp));
            parts.push(p.between(a - amp, a));
        }
        parts.push(p.between(a, len));
        self.emit(id, chain(&parts), 0)
    }

    // Leaves a path for a corner of the scene and stays there.
    fn type_iii(&mut self, id: u64) -> Trajectory {
        let p = self.pick_path();
        let a = p.length() * uniform(&mut self.rng, (0.3, 0.7));
        let corner = *self.cfg.corners().choose(&mut self.rng).unwrap();
        let linger = self.rng.random_range(5..15);
        self.emit(id, chain(&[p.between(0.0, a), vec![corner]]), linger)
    }
}

fn patches_of(t: &Trajectory, scene: &SceneConfig) -> Vec<PatchIndex> {
    route_from_trajectory(t, scene)
        .map(|r| r.patches().to_vec())
        .unwrap_or_default()
}

const MAX_ATTEMPTS: usize = 100;

/// Normal corridor walks plus type I (shortcut across unused patches),
/// type II (back and forth) and type III (detour ending in a corner) samples.
///
/// Type I and III samples are redrawn until their route reaches a patch that
/// no normal sample visits.
pub fn gen_abnormality_corpus(cfg: &ScenarioConfig) -> AbnormalityCorpus {
    assert!(
        !cfg.paths.is_empty(),
        "scenario needs at least one waypoint path"
    );
    let mut g = Gen {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let scene = cfg.scene(cfg.patch_size);
    let mut trajectories = Vec::new();
    let mut labels = Vec::new();
    let mut id = 1;
    for _ in 0..cfg.n_normal {
        trajectories.push(g.normal(id));
        labels.push((id, Label::Normal));
        id += 1;
    }
    let normal_patches: BTreeSet<PatchIndex> = trajectories
        .iter()
        .flat_map(|t| patches_of(t, &scene))
        .collect();
    let off_path = |t: &Trajectory| {
        patches_of(t, &scene)
            .iter()
            .any(|p| !normal_patches.contains(p))
    };

    for (kind, count) in [
        (AbnormalityType::I, cfg.n_type_i),
        (AbnormalityType::II, cfg.n_type_ii),
        (AbnormalityType::III, cfg.n_type_iii),
    ] {
        for _ in 0..count {
            let mut t = Trajectory {
                track_id: id,
                samples: Vec::new(),
            };
            for attempt in 0..MAX_ATTEMPTS {
                t = match kind {
                    AbnormalityType::I => g.type_i(id),
                    AbnormalityType::II => g.type_ii(id),
                    AbnormalityType::III => g.type_iii(id),
                };
                if kind == AbnormalityType::II || off_path(&t) {
                    break;
                }
                if attempt + 1 == MAX_ATTEMPTS {
                    log::warn!("track {id}: no off-path patch after {MAX_ATTEMPTS} draws");
                }
            }
            trajectories.push(t);
            labels.push((id, Label::Abnormal(kind)));
            id += 1;
        }
    }
    AbnormalityCorpus {
        trajectories,
        labels,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            n_normal: 40,
            n_type_i: 5,
            n_type_ii: 5,
            n_type_iii: 5,
            seed: 11,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(
            gen_abnormality_corpus(&small()),
            gen_abnormality_corpus(&small())
        );
        let other = ScenarioConfig {
            seed: 12,
            ..small()
        };
        assert_ne!(
            gen_abnormality_corpus(&small()),
            gen_abnormality_corpus(&other)
        );
    }

    #[test]
    fn counts_match_request() {
        let c = gen_abnormality_corpus(&small());
        let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
        for (_, l) in &c.labels {
            *counts.entry(*l).or_default() += 1;
        }
        assert_eq!(counts[&Label::Normal], 40);
        assert_eq!(counts[&Label::Abnormal(AbnormalityType::II)], 5);
        assert_eq!(c.trajectories.len(), 55);
    }

    #[test]
    fn type_ii_revisits_a_patch() {
        let cfg = small();
        let c = gen_abnormality_corpus(&cfg);
        let scene = cfg.scene(cfg.patch_size);
        for (t, (_, l)) in c.trajectories.iter().zip(&c.labels) {
            if *l == Label::Abnormal(AbnormalityType::II) {
                let r = route_from_trajectory(t, &scene).unwrap();
                let mut seen = BTreeMap::new();
                for p in r.patches() {
                    *seen.entry(*p).or_insert(0) += 1;
                }
                assert!(seen.values().any(|&n| n >= 2));
            }
        }
    }

    #[test]
    fn type_i_leaves_normal_patches() {
        let cfg = small();
        let c = gen_abnormality_corpus(&cfg);
        let scene = cfg.scene(cfg.patch_size);
        let normal: BTreeSet<_> = c
            .trajectories
            .iter()
            .zip(&c.labels)
            .filter(|(_, (_, l))| *l == Label::Normal)
            .flat_map(|(t, _)| patches_of(t, &scene))
            .collect();
        for (t, (_, l)) in c.trajectories.iter().zip(&c.labels) {
            if *l == Label::Abnormal(AbnormalityType::I) {
                assert!(patches_of(t, &scene).iter().any(|p| !normal.contains(p)));
            }
        }
    }

    #[test]
    fn normal_routes_start_at_entrances() {
        let cfg = small();
        let c = gen_abnormality_corpus(&cfg);
        for ps in [24, 32, 48] {
            let scene = cfg.scene(ps);
            for t in &c.trajectories {
                let r = route_from_trajectory(t, &scene).unwrap();
                assert!(scene.entrance_patches.contains(&r.start()));
            }
        }
    }

    #[test]
    fn normal_routes_do_not_flicker() {
        // one route per path and direction at every patch size
        let cfg = ScenarioConfig {
            n_normal: 200,
            ..small()
        };
        let c = gen_abnormality_corpus(&cfg);
        for ps in [24, 32, 48] {
            let scene = cfg.scene(ps);
            let routes: BTreeSet<Vec<PatchIndex>> = c
                .trajectories
                .iter()
                .zip(&c.labels)
                .filter(|(_, (_, l))| *l == Label::Normal)
                .map(|(t, _)| patches_of(t, &scene))
                .collect();
            assert_eq!(routes.len(), 2 * cfg.paths.len(), "patch size {ps}");
        }
    }
}
