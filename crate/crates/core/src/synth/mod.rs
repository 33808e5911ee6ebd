//! Seeded synthetic scenarios: labelled single-person trajectories, labelled
//! person pairs (with optional motion fields) and crowd flow sequences.
//!
//! Every generator draws from one ChaCha8 stream seeded from its config, so a
//! config always produces the same corpus.
//!
//! The default corridor layout keeps every straight stretch of a normal path
//! on a coordinate that is 16 or 80 modulo 96. Those lines sit at least 8 px
//! from any patch border for patch sizes 24, 32 and 48, so jitter below that
//! margin cannot make a normal route flicker between patches.

mod abnormal;
mod crowd;
mod group;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::grid::{Sample, Trajectory};

pub use abnormal::{gen_abnormality_corpus, AbnormalityCorpus, ScenarioConfig};
pub use crowd::{gen_crowd_flows, CrowdMode, CrowdScenarioConfig, CrowdSequence};
pub use group::{
    gen_casia_corpus, gen_group_corpus, GroupCorpus, GroupPair, GroupScenarioConfig, CASIA_CLASSES,
    GROUP_CLASSES,
};

type Point = (f64, f64);

/// Piecewise-linear path with cumulative arc lengths.
#[derive(Debug, Clone)]
pub(crate) struct Polyline {
    pts: Vec<Point>,
    cum: Vec<f64>,
}

impl Polyline {
    pub(crate) fn new(pts: Vec<Point>) -> Self {
        assert!(!pts.is_empty(), "polyline needs a point");
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            let d = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
            cum.push(cum.last().unwrap() + d);
        }
        Self { pts, cum }
    }

    pub(crate) fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub(crate) fn point_at(&self, s: f64) -> Point {
        let s = s.clamp(0.0, self.length());
        let k = self
            .cum
            .partition_point(|&c| c < s)
            .max(1)
            .min(self.pts.len() - 1);
        if self.pts.len() == 1 {
            return self.pts[0];
        }
        let (a, b) = (self.pts[k - 1], self.pts[k]);
        let seg = self.cum[k] - self.cum[k - 1];
        let t = if seg > 0.0 {
            (s - self.cum[k - 1]) / seg
        } else {
            0.0
        };
        (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
    }

    /// The sub-path between arc lengths `from` and `to` (either order).
    pub(crate) fn between(&self, from: f64, to: f64) -> Vec<Point> {
        let (lo, hi) = (from.min(to), from.max(to));
        let mut out = vec![self.point_at(lo)];
        for (p, &c) in self.pts.iter().zip(&self.cum) {
            if c > lo && c < hi {
                out.push(*p);
            }
        }
        out.push(self.point_at(hi));
        if from > to {
            out.reverse();
        }
        out
    }

    /// Positions at constant `speed`, one per frame, ending exactly on the
    /// last point.
    pub(crate) fn walk(&self, speed: f64) -> Vec<Point> {
        let len = self.length();
        let mut out = Vec::new();
        let mut s = 0.0;
        while s < len {
            out.push(self.point_at(s));
            s += speed;
        }
        out.push(self.point_at(len));
        out
    }
}

/// Joins waypoint lists, dropping repeated junction points.
pub(crate) fn chain(parts: &[Vec<Point>]) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::new();
    for part in parts {
        for &p in part {
            if out.last() != Some(&p) {
                out.push(p);
            }
        }
    }
    out
}

/// Adds Gaussian noise, clamps into the image and numbers frames from `first_frame`.
pub(crate) fn to_trajectory(
    track_id: u64,
    positions: &[Point],
    first_frame: i64,
    sigma: f64,
    bounds: (f64, f64),
    rng: &mut ChaCha8Rng,
) -> Trajectory {
    let noise = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    let samples = positions
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| Sample {
            frame: first_frame + k as i64,
            x: (x + noise.sample(rng)).clamp(0.0, bounds.0 - 1e-6),
            y: (y + noise.sample(rng)).clamp(0.0, bounds.1 - 1e-6),
        })
        .collect();
    Trajectory { track_id, samples }
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}
