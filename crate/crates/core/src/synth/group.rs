use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{to_trajectory, uniform, Point};
use crate::grid::{SceneConfig, Trajectory};
use crate::network::motion::MotionField;

/// Two-person interaction classes of the 8-class corpus.
pub const GROUP_CLASSES: [&str; 8] = [
    "meet", "follow", "approach", "separate", "leave", "together", "exchange", "return",
];

/// Interaction classes of the 7-class corpus with motion fields.
pub const CASIA_CLASSES: [&str; 7] = [
    "follow",
    "followgather",
    "meetapart",
    "meetgather",
    "overtake",
    "rob",
    "fight",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupScenarioConfig {
    pub seed: u64,
    pub image_width: u32,
    pub image_height: u32,
    /// Patch and relative-cell size (pixels).
    pub cell_size: u32,
    pub pairs_per_class: usize,
    pub noise_sigma: f64,
    pub speed_range: (f64, f64),
    /// Extra local motion added to the field during bursts (pixels/frame).
    pub burst_range: (f64, f64),
}

impl Default for GroupScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            image_width: 640,
            image_height: 480,
            cell_size: 48,
            pairs_per_class: 50,
            noise_sigma: 0.5,
            speed_range: (2.5, 4.0),
            burst_range: (4.0, 8.0),
        }
    }
}

impl GroupScenarioConfig {
    pub fn scene(&self) -> SceneConfig {
        SceneConfig::new(self.image_width, self.image_height, self.cell_size)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPair {
    pub pair_id: String,
    pub track_id_1: u64,
    pub track_id_2: u64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCorpus {
    pub scene: SceneConfig,
    pub trajectories: Vec<Trajectory>,
    pub pairs: Vec<GroupPair>,
    pub field: Option<MotionField>,
}

impl GroupCorpus {
    pub fn track(&self, id: u64) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.track_id == id)
    }
}

/// Frame-aligned positions of both people, plus which frames carry a
/// local-motion burst.
#[derive(Debug, Clone, Default)]
struct Script {
    p1: Vec<Point>,
    p2: Vec<Point>,
    burst: Vec<bool>,
}

impl Script {
    fn start(a1: Point, a2: Point) -> Self {
        Self {
            p1: vec![a1],
            p2: vec![a2],
            burst: vec![false],
        }
    }

    // Both move in straight lines and arrive together; the longer leg sets the pace.
    fn go(&mut self, b1: Point, b2: Point, speed: f64, burst: bool) {
        let a1 = *self.p1.last().unwrap();
        let a2 = *self.p2.last().unwrap();
        let d = (b1.0 - a1.0)
            .hypot(b1.1 - a1.1)
            .max((b2.0 - a2.0).hypot(b2.1 - a2.1));
        let n = (d / speed).ceil().max(1.0) as usize;
        for k in 1..=n {
            let t = k as f64 / n as f64;
            self.p1
                .push((a1.0 + t * (b1.0 - a1.0), a1.1 + t * (b1.1 - a1.1)));
            self.p2
                .push((a2.0 + t * (b2.0 - a2.0), a2.1 + t * (b2.1 - a2.1)));
            self.burst.push(burst);
        }
    }

    fn rest(&mut self, frames: usize, burst: bool) {
        let (a1, a2) = (*self.p1.last().unwrap(), *self.p2.last().unwrap());
        for _ in 0..frames {
            self.p1.push(a1);
            self.p2.push(a2);
            self.burst.push(burst);
        }
    }

    fn reversed(mut self) -> Self {
        self.p1.reverse();
        self.p2.reverse();
        self.burst.reverse();
        self
    }

    fn mirrored(mut self, axis: f64) -> Self {
        for p in self.p1.iter_mut().chain(self.p2.iter_mut()) {
            p.0 = axis - p.0;
        }
        self
    }
}

struct Gen<'a> {
    cfg: &'a GroupScenarioConfig,
    rng: ChaCha8Rng,
}

impl Gen<'_> {
    fn c(&self) -> f64 {
        f64::from(self.cfg.cell_size)
    }

    // Patch-centre coordinates, so people at rest never sit on a border.
    fn x(&self, k: i64) -> f64 {
        (k as f64 + 0.5) * self.c()
    }

    fn full_cols(&self) -> i64 {
        i64::from(self.cfg.image_width / self.cfg.cell_size)
    }

    fn full_rows(&self) -> i64 {
        i64::from(self.cfg.image_height / self.cfg.cell_size)
    }

    fn lane(&mut self, spare_below: i64) -> f64 {
        let m = self
            .rng
            .random_range(2..=(self.full_rows() - 3 - spare_below).max(2));
        (m as f64 + 0.5) * self.c()
    }

    fn speed(&mut self) -> f64 {
        uniform(&mut self.rng, self.cfg.speed_range)
    }

    fn k_for(&mut self, span: i64) -> i64 {
        self.rng
            .random_range(0..=(self.full_cols() - 1 - span).max(0))
    }

    fn range(&mut self, lo: i64, hi: i64) -> i64 {
        self.rng.random_range(lo..=hi)
    }

    fn script(&mut self, class: &str) -> Script {
        let y = self.lane(1);
        let v = self.speed();
        let c = self.c();
        let s = match class {
            // one person stands, the other walks up to them
            "approach" | "leave" => {
                let r = self.range(7, 10);
                let k = self.k_for(r);
                let mut s = Script::start((self.x(k), y), (self.x(k + r), y));
                s.go((self.x(k), y), (self.x(k + 1), y), v, false);
                s.rest(10, false);
                if class == "leave" {
                    s.reversed()
                } else {
                    s
                }
            }
            "meet" | "separate" => {
                let r = self.range(8, 12);
                let k = self.k_for(r);
                let m = (r - 1) / 2;
                let mut s = Script::start((self.x(k), y), (self.x(k + r), y));
                s.go((self.x(k + m), y), (self.x(k + m + 1), y), v, false);
                s.rest(10, false);
                if class == "separate" {
                    s.reversed()
                } else {
                    s
                }
            }
            // the second person closes in from behind
            "follow" => {
                let (g0, g1, d) = (self.range(5, 6), self.range(2, 3), self.range(4, 6));
                let k = self.k_for(g0 + d);
                let mut s = Script::start((self.x(k + g0), y), (self.x(k), y));
                s.go(
                    (self.x(k + g0 + d), y),
                    (self.x(k + g0 + d - g1), y),
                    v,
                    false,
                );
                s
            }
            "together" => {
                let d = self.range(6, 10);
                let k = self.k_for(d);
                let mut s = Script::start((self.x(k), y), (self.x(k), y + c));
                s.go((self.x(k + d), y), (self.x(k + d), y + c), v, false);
                s
            }
            // far apart, pass through each other, far apart again
            "exchange" => {
                let r = self.range(9, 11);
                let k = self.k_for(r);
                let mut s = Script::start((self.x(k), y), (self.x(k + r), y));
                s.go((self.x(k + r), y), (self.x(k), y), v, false);
                s
            }
            // together, a few cells apart, together again
            "return" => {
                let m = self.range(3, 5);
                let a = m / 2;
                let k = a + self.k_for(m);
                let mut s = Script::start((self.x(k), y), (self.x(k), y));
                s.go((self.x(k - a), y), (self.x(k + m - a), y), v, false);
                s.rest(5, false);
                s.go((self.x(k), y), (self.x(k), y), v, false);
                s
            }
            _ => self.casia_script(class, y, v),
        };
        if self.rng.random_bool(0.5) {
            s.mirrored(self.full_cols() as f64 * c)
        } else {
            s
        }
    }

    fn casia_script(&mut self, class: &str, y: f64, v: f64) -> Script {
        match class {
            "follow" => {
                let (g, d) = (self.range(3, 4), self.range(6, 8));
                let k = self.k_for(g + d);
                let mut s = Script::start((self.x(k + g), y), (self.x(k), y));
                s.go((self.x(k + g + d), y), (self.x(k + d), y), v, false);
                s
            }
            "followgather" => {
                let (g, d1, d2) = (self.range(5, 6), self.range(2, 3), self.range(2, 3));
                let k = self.k_for(g + d1 + d2);
                let mut s = Script::start((self.x(k + g), y), (self.x(k), y));
                s.go(
                    (self.x(k + g + d1), y),
                    (self.x(k + g + d1 - 1), y),
                    v,
                    false,
                );
                s.go(
                    (self.x(k + g + d1 + d2), y),
                    (self.x(k + g + d1 + d2 - 1), y),
                    v,
                    false,
                );
                s
            }
            "meetapart" => {
                let r = self.range(6, 8);
                let k = self.k_for(r);
                let mut s = Script::start((self.x(k), y), (self.x(k + r), y));
                s.go((self.x(k + r), y), (self.x(k), y), v, false);
                s
            }
            "meetgather" | "fight" => {
                let r = self.range(6, 8);
                let d = self.range(2, 3);
                let k = self.k_for(r + d);
                let m = (r - 1) / 2;
                let mut s = Script::start((self.x(k), y), (self.x(k + r), y));
                s.go((self.x(k + m), y), (self.x(k + m + 1), y), v, false);
                if class == "meetgather" {
                    s.go((self.x(k + m + d), y), (self.x(k + m + d + 1), y), v, false);
                } else {
                    // shoving back and forth on the spot
                    for _ in 0..self.range(1, 2) {
                        s.go((self.x(k + m + 1), y), (self.x(k + m + 2), y), v, true);
                        s.go((self.x(k + m), y), (self.x(k + m + 1), y), v, true);
                    }
                }
                s
            }
            "overtake" => {
                let (g, d) = (self.range(3, 4), self.range(3, 4));
                let k = self.k_for(2 * g + d);
                let mut s = Script::start((self.x(k + g), y), (self.x(k), y));
                s.go((self.x(k + g + d), y), (self.x(k + 2 * g + d), y), v, false);
                s
            }
            // walk up, grab, run back the way they came
            "rob" => {
                let (r, r2) = (self.range(5, 7), self.range(4, 6));
                let k = self.k_for(r.max(r2 + 1) + 2);
                let m = 1;
                let mut s = Script::start((self.x(k), y), (self.x(k + r), y));
                s.go((self.x(k + m), y), (self.x(k + m + 1), y), v, false);
                s.rest(6, true);
                let far = (k + m + 1 + r2).min(self.full_cols() - 1);
                s.go((self.x(k + m), y), (self.x(far), y), 2.0 * v, true);
                s
            }
            other => panic!("unknown interaction class {other:?}"),
        }
    }
}

// Room in the frame numbering for each pair, so pairs never share frames.
const FRAMES_PER_PAIR: i64 = 1000;

fn generate(cfg: &GroupScenarioConfig, classes: &[&str], with_field: bool) -> GroupCorpus {
    let mut g = Gen {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let scene = cfg.scene();
    let bounds = (f64::from(cfg.image_width), f64::from(cfg.image_height));
    let mut field = with_field.then(MotionField::new);
    let mut trajectories = Vec::new();
    let mut pairs = Vec::new();
    let mut n = 0i64;
    for class in classes {
        for _ in 0..cfg.pairs_per_class {
            let s = g.script(class);
            assert!((s.p1.len() as i64) < FRAMES_PER_PAIR, "script too long");
            let base = n * FRAMES_PER_PAIR;
            let (id1, id2) = (2 * n as u64 + 1, 2 * n as u64 + 2);
            let t1 = to_trajectory(id1, &s.p1, base, cfg.noise_sigma, bounds, &mut g.rng);
            let t2 = to_trajectory(id2, &s.p2, base, cfg.noise_sigma, bounds, &mut g.rng);
            if let Some(f) = field.as_mut() {
                let burst: Vec<f64> = s
                    .burst
                    .iter()
                    .map(|&b| {
                        if b {
                            uniform(&mut g.rng, cfg.burst_range)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                for t in [&t1, &t2] {
                    paint_field(f, t, &burst, &scene);
                }
            }
            pairs.push(GroupPair {
                pair_id: format!("pair{:04}", n + 1),
                track_id_1: id1,
                track_id_2: id2,
                label: class.to_string(),
            });
            trajectories.push(t1);
            trajectories.push(t2);
            n += 1;
        }
    }
    GroupCorpus {
        scene,
        trajectories,
        pairs,
        field,
    }
}

// The person's own speed plus any burst, on the patches under them at t and t-1.
fn paint_field(field: &mut MotionField, t: &Trajectory, burst: &[f64], scene: &SceneConfig) {
    for (w, extra) in t.samples.windows(2).zip(&burst[1..]) {
        let (a, b) = (&w[0], &w[1]);
        let m = (b.x - a.x).hypot(b.y - a.y) + extra;
        for p in [scene.locate_patch(a.x, a.y), scene.locate_patch(b.x, b.y)] {
            let cur = field.get(b.frame, p).unwrap_or(0.0);
            field
                .insert(b.frame, p, cur.max(m))
                .expect("magnitudes are non-negative");
        }
    }
}

/// The 8 two-person classes of [`GROUP_CLASSES`], `pairs_per_class` each.
pub fn gen_group_corpus(cfg: &GroupScenarioConfig) -> GroupCorpus {
    generate(cfg, &GROUP_CLASSES, false)
}

/// The 7 classes of [`CASIA_CLASSES`] with a motion field; fights and
/// robberies carry local-motion bursts.
pub fn gen_casia_corpus(cfg: &GroupScenarioConfig) -> GroupCorpus {
    generate(cfg, &CASIA_CLASSES, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::relative_route;

    fn small() -> GroupScenarioConfig {
        GroupScenarioConfig {
            pairs_per_class: 6,
            seed: 3,
            ..GroupScenarioConfig::default()
        }
    }

    fn rings(c: &GroupCorpus, p: &GroupPair) -> Vec<u32> {
        let t1 = c.track(p.track_id_1).unwrap();
        let t2 = c.track(p.track_id_2).unwrap();
        relative_route(t1, t2, f64::from(c.scene.patch_size), 15)
            .unwrap()
            .rings()
    }

    #[test]
    fn deterministic() {
        assert_eq!(gen_group_corpus(&small()), gen_group_corpus(&small()));
    }

    #[test]
    fn every_class_has_its_count() {
        let c = gen_group_corpus(&small());
        for class in GROUP_CLASSES {
            assert_eq!(c.pairs.iter().filter(|p| p.label == class).count(), 6);
        }
        assert_eq!(c.trajectories.len(), 2 * 6 * 8);
    }

    #[test]
    fn together_stays_within_ring_one() {
        let c = gen_group_corpus(&small());
        for p in c.pairs.iter().filter(|p| p.label == "together") {
            assert!(rings(&c, p).iter().all(|&r| r <= 1));
        }
    }

    #[test]
    fn approach_has_a_stationary_person() {
        let c = gen_group_corpus(&small());
        for p in c
            .pairs
            .iter()
            .filter(|p| p.label == "approach" || p.label == "leave")
        {
            let t1 = c.track(p.track_id_1).unwrap();
            let r = crate::grid::route_from_trajectory(t1, &c.scene).unwrap();
            assert_eq!(r.len(), 1);
        }
    }

    #[test]
    fn exchange_goes_high_low_high() {
        let c = gen_group_corpus(&small());
        for p in c.pairs.iter().filter(|p| p.label == "exchange") {
            let r = rings(&c, p);
            let lo = *r.iter().min().unwrap();
            let k = r.iter().position(|&x| x == lo).unwrap();
            assert!(r[0] >= 9 && lo == 0 && *r.last().unwrap() >= 9 && k > 0);
        }
    }

    #[test]
    fn casia_field_covers_transitions() {
        let cfg = small();
        let c = gen_casia_corpus(&cfg);
        let f = c.field.as_ref().unwrap();
        for t in &c.trajectories {
            let tr = crate::grid::timed_route_from_trajectory(t, &c.scene).unwrap();
            let e = crate::network::motion::motion_intensity_energy(
                &tr.route,
                &tr.transition_frames,
                f,
                t,
            )
            .unwrap();
            assert_eq!(e.missing_entries, 0);
        }
    }
}
