use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::uniform;
use crate::group::FlowVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrowdMode {
    Normal,
    Escape,
    /// `normal_frames` of wandering followed by `escape_frames` of escape.
    NormalThenEscape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrowdScenarioConfig {
    pub seed: u64,
    pub image_width: u32,
    pub image_height: u32,
    pub people: usize,
    pub normal_frames: usize,
    pub escape_frames: usize,
    /// Wandering step length range (pixels/frame).
    pub normal_speed: (f64, f64),
    /// Running speed range during the escape (pixels/frame).
    pub escape_speed: (f64, f64),
    /// Largest deviation of an escape step from the radial direction (radians).
    pub angular_jitter: f64,
}

impl Default for CrowdScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            image_width: 640,
            image_height: 480,
            people: 120,
            normal_frames: 150,
            escape_frames: 30,
            normal_speed: (0.5, 3.0),
            escape_speed: (3.0, 6.0),
            angular_jitter: 0.3,
        }
    }
}

impl CrowdScenarioConfig {
    pub fn center(&self) -> (f64, f64) {
        (
            f64::from(self.image_width) / 2.0,
            f64::from(self.image_height) / 2.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrowdSequence {
    pub flows: Vec<FlowVector>,
    /// First and last frame, inclusive.
    pub frames: (i64, i64),
    /// Ground truth per frame: `true` once the escape has started.
    pub abnormal: BTreeMap<i64, bool>,
}

impl CrowdSequence {
    pub fn onset(&self) -> Option<i64> {
        self.abnormal.iter().find(|(_, &a)| a).map(|(&f, _)| f)
    }
}

// Reflects a coordinate back into [0, hi).
fn reflect(v: f64, hi: f64) -> f64 {
    let mut v = v;
    if v < 0.0 {
        v = -v;
    }
    if v >= hi {
        v = 2.0 * hi - v - 1e-6;
    }
    v.clamp(0.0, hi - 1e-6)
}

/// Flow vectors of a crowd. Wandering people take isotropic random steps
/// and stay uniformly spread (steps are reflected at the image border).
/// Escaping people run radially away from the centre and leave the sequence
/// once they step out of the image.
pub fn gen_crowd_flows(cfg: &CrowdScenarioConfig, mode: CrowdMode) -> CrowdSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w, h) = (f64::from(cfg.image_width), f64::from(cfg.image_height));
    let c = cfg.center();
    let (n_normal, n_escape) = match mode {
        CrowdMode::Normal => (cfg.normal_frames, 0),
        CrowdMode::Escape => (0, cfg.escape_frames),
        CrowdMode::NormalThenEscape => (cfg.normal_frames, cfg.escape_frames),
    };
    let mut people: Vec<Option<(f64, f64)>> = (0..cfg.people)
        .map(|_| Some((rng.random_range(0.0..w), rng.random_range(0.0..h))))
        .collect();
    let mut flows = Vec::new();
    let mut abnormal = BTreeMap::new();
    for frame in 0..(n_normal + n_escape) as i64 {
        let escaping = frame >= n_normal as i64;
        abnormal.insert(frame, escaping);
        for slot in people.iter_mut() {
            let Some((x, y)) = *slot else { continue };
            let (dx, dy) = if escaping {
                let base = (y - c.1).atan2(x - c.0);
                let a = base + uniform(&mut rng, (-cfg.angular_jitter, cfg.angular_jitter));
                let s = uniform(&mut rng, cfg.escape_speed);
                (s * a.cos(), s * a.sin())
            } else {
                let a = rng.random_range(0.0..TAU);
                let s = uniform(&mut rng, cfg.normal_speed);
                (s * a.cos(), s * a.sin())
            };
            flows.push(FlowVector {
                frame,
                x,
                y,
                dx,
                dy,
            });
            let (nx, ny) = (x + dx, y + dy);
            *slot = if escaping {
                (nx >= 0.0 && nx < w && ny >= 0.0 && ny < h).then_some((nx, ny))
            } else {
                Some((reflect(nx, w), reflect(ny, h)))
            };
        }
    }
    let last = (n_normal + n_escape) as i64 - 1;
    CrowdSequence {
        flows,
        frames: (0, last.max(0)),
        abnormal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::crowd_window_energy;
    use crate::network::relative::RelativeNetworkSpec;

    #[test]
    fn deterministic() {
        let cfg = CrowdScenarioConfig::default();
        assert_eq!(
            gen_crowd_flows(&cfg, CrowdMode::NormalThenEscape),
            gen_crowd_flows(&cfg, CrowdMode::NormalThenEscape)
        );
    }

    #[test]
    fn escape_vectors_point_outward() {
        let cfg = CrowdScenarioConfig::default();
        let s = gen_crowd_flows(&cfg, CrowdMode::Escape);
        let c = cfg.center();
        let outward = s
            .flows
            .iter()
            .filter(|f| {
                let before = (f.x - c.0).hypot(f.y - c.1);
                let after = (f.x + f.dx - c.0).hypot(f.y + f.dy - c.1);
                after > before
            })
            .count();
        assert!(outward as f64 >= 0.9 * s.flows.len() as f64);
    }

    #[test]
    fn normal_window_energy_is_centred() {
        // mean over many seeds within 3 sigma / sqrt(trials) of zero
        let spec = RelativeNetworkSpec::default();
        let trials = 40;
        let energies: Vec<f64> = (0..trials)
            .map(|seed| {
                let cfg = CrowdScenarioConfig {
                    seed,
                    normal_frames: 10,
                    ..CrowdScenarioConfig::default()
                };
                let s = gen_crowd_flows(&cfg, CrowdMode::Normal);
                crowd_window_energy(&s.flows, cfg.center(), 48.0, &spec)
            })
            .collect();
        let n = trials as f64;
        let mean = energies.iter().sum::<f64>() / n;
        let sd = (energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() <= 3.0 * sd / n.sqrt(), "mean {mean}, sd {sd}");
    }

    #[test]
    fn ground_truth_marks_the_onset() {
        let cfg = CrowdScenarioConfig::default();
        let s = gen_crowd_flows(&cfg, CrowdMode::NormalThenEscape);
        assert_eq!(s.onset(), Some(150));
        assert_eq!(s.frames, (0, 179));
    }
}
