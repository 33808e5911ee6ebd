//! Normal (ENR) and weighted (EWR) relative networks.
//!
//! One person sits at the centre cell; the other moves through cells whose
//! ring is their Chebyshev distance from the centre. Moving one ring inward
//! costs energy, moving outward releases it, moving along a ring is free.
//! Jumps over several rings are telescoped through every intermediate ring.

use serde::{Deserialize, Serialize};

use crate::grid::{ring_of, Cell, RelativeCellRoute};

/// Which end of a ring crossing supplies the EWR weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EwrScheme {
    /// Weight of the ring being entered.
    #[default]
    Head,
    /// Weight of the ring being left.
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeNetworkSpec {
    pub r_max: u32,
    #[serde(default)]
    pub ewr_scheme: EwrScheme,
}

impl Default for RelativeNetworkSpec {
    fn default() -> Self {
        Self {
            r_max: 15,
            ewr_scheme: EwrScheme::Head,
        }
    }
}

impl RelativeNetworkSpec {
    pub fn new(r_max: u32, ewr_scheme: EwrScheme) -> Self {
        Self { r_max, ewr_scheme }
    }

    /// `w(r) = 1 / (r + 1)`: positive and strictly decreasing outward.
    pub fn ring_weight(&self, ring: u32) -> f64 {
        1.0 / (ring as f64 + 1.0)
    }

    pub fn ring(&self, cell: Cell) -> u32 {
        ring_of(cell, self.r_max)
    }

    /// ENR edge energy: `ring(from) - ring(to)`.
    pub fn enr_energy(&self, from: Cell, to: Cell) -> f64 {
        self.enr_between_rings(self.ring(from), self.ring(to))
    }

    pub fn enr_between_rings(&self, from: u32, to: u32) -> f64 {
        from as f64 - to as f64
    }

    /// EWR edge energy, summed over every unit ring crossing.
    pub fn ewr_energy(&self, from: Cell, to: Cell) -> f64 {
        self.ewr_between_rings(self.ring(from), self.ring(to))
    }

    pub fn ewr_between_rings(&self, from: u32, to: u32) -> f64 {
        use std::cmp::Ordering::*;
        match to.cmp(&from) {
            Equal => 0.0,
            // inward crossings r+1 -> r for r in to..from
            Less => (to..from)
                .map(|r| match self.ewr_scheme {
                    EwrScheme::Head => self.ring_weight(r),
                    EwrScheme::Tail => self.ring_weight(r + 1),
                })
                .sum(),
            // outward crossings r -> r+1 for r in from..to
            Greater => -(from..to)
                .map(|r| match self.ewr_scheme {
                    EwrScheme::Head => self.ring_weight(r + 1),
                    EwrScheme::Tail => self.ring_weight(r),
                })
                .sum::<f64>(),
        }
    }

    /// Total ENR along a relative route.
    pub fn enr_total(&self, route: &RelativeCellRoute) -> f64 {
        let rings = self.rings(route);
        rings
            .windows(2)
            .map(|w| self.enr_between_rings(w[0], w[1]))
            .sum()
    }

    /// Total EWR along a relative route.
    pub fn ewr_total(&self, route: &RelativeCellRoute) -> f64 {
        let rings = self.rings(route);
        rings
            .windows(2)
            .map(|w| self.ewr_between_rings(w[0], w[1]))
            .sum()
    }

    fn rings(&self, route: &RelativeCellRoute) -> Vec<u32> {
        route.cells.iter().map(|&c| self.ring(c)).collect()
    }
}
