//! Transmission networks and total transmission energy.
//!
//! A network assigns a direct-transmission (DT) energy `e(i, j)` to every
//! ordered node pair. Scene networks are stored densely; the relative
//! networks used for person pairs have a closed-form energy that depends
//! only on rings, see [`relative`].

pub mod motion;
pub mod relative;

use serde::{Deserialize, Serialize};

use crate::error::{NtbError, Result};
use crate::grid::{PatchIndex, PatchRoute, SceneConfig};

/// Marker energy for edges with no activity correlation.
pub const DEFAULT_LARGE_VALUE: f64 = 1e6;

/// Dense transmission network over `node_count` patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionNetwork {
    node_count: usize,
    directed: bool,
    large_value: f64,
    /// Row-major `node_count × node_count` DT energies.
    energy: Vec<f64>,
}

impl TransmissionNetwork {
    /// Network with every off-diagonal edge set to `fill`.
    pub fn filled(node_count: usize, directed: bool, fill: f64, large_value: f64) -> Self {
        let mut energy = vec![fill; node_count * node_count];
        for i in 0..node_count {
            energy[i * node_count + i] = 0.0;
        }
        Self {
            node_count,
            directed,
            large_value,
            energy,
        }
    }

    /// Builds a network from a row-major matrix.
    pub fn from_row_major(
        node_count: usize,
        directed: bool,
        large_value: f64,
        energy: Vec<f64>,
    ) -> Result<Self> {
        if energy.len() != node_count * node_count {
            return Err(NtbError::DimensionMismatch {
                expected: node_count * node_count,
                got: energy.len(),
            });
        }
        Ok(Self {
            node_count,
            directed,
            large_value,
            energy,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn large_value(&self) -> f64 {
        self.large_value
    }

    pub fn row_major(&self) -> &[f64] {
        &self.energy
    }

    #[inline]
    pub fn energy(&self, i: PatchIndex, j: PatchIndex) -> f64 {
        self.energy[i * self.node_count + j]
    }

    /// Sets `e(i, j)`, and `e(j, i)` too when the network is undirected.
    pub fn set_energy(&mut self, i: PatchIndex, j: PatchIndex, value: f64) {
        let n = self.node_count;
        self.energy[i * n + j] = value;
        if !self.directed {
            self.energy[j * n + i] = value;
        }
    }

    fn check_index(&self, i: PatchIndex) -> Result<()> {
        if i >= self.node_count {
            return Err(NtbError::IndexOutOfRange {
                index: i,
                node_count: self.node_count,
            });
        }
        Ok(())
    }

    /// Sets the energy between every pair inside each equivalence set to zero.
    pub fn apply_equivalences(&mut self, scene: &SceneConfig) {
        for set in &scene.equivalence_sets {
            for &i in set {
                for &j in set {
                    if i != j && i < self.node_count && j < self.node_count {
                        self.set_energy(i, j, 0.0);
                    }
                }
            }
        }
    }

    /// Total transmission energy of a route: the sum of `e(i, j)` over its
    /// consecutive transitions.
    pub fn total_energy(&self, route: &PatchRoute) -> Result<f64> {
        for &p in route.patches() {
            self.check_index(p)?;
        }
        Ok(route.transitions().map(|(i, j)| self.energy(i, j)).sum())
    }

    /// Cumulative energy after each route step; the first entry is 0.
    pub fn cumulative_energy(&self, route: &PatchRoute) -> Result<Vec<f64>> {
        for &p in route.patches() {
            self.check_index(p)?;
        }
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(route.len());
        out.push(0.0);
        for (i, j) in route.transitions() {
            acc += self.energy(i, j);
            out.push(acc);
        }
        Ok(out)
    }
}

/// Free-function form of [`TransmissionNetwork::total_energy`].
pub fn total_energy(route: &PatchRoute, net: &TransmissionNetwork) -> Result<f64> {
    net.total_energy(route)
}

/// Scene-related network for group activities: unit energy between
/// 8-neighbours and, between non-adjacent patches, the minimum number of
/// unit moves needed (Chebyshev distance).
pub fn build_scene_group_network(rows: usize, cols: usize) -> TransmissionNetwork {
    let n = rows * cols;
    let mut energy = vec![0.0; n * n];
    for a in 0..n {
        let (ra, ca) = ((a / cols) as i64, (a % cols) as i64);
        for b in 0..n {
            let (rb, cb) = ((b / cols) as i64, (b % cols) as i64);
            energy[a * n + b] = (ra - rb).abs().max((ca - cb).abs()) as f64;
        }
    }
    TransmissionNetwork {
        node_count: n,
        directed: false,
        large_value: DEFAULT_LARGE_VALUE,
        energy,
    }
}
