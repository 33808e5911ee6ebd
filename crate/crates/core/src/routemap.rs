//! Minimum-energy route maps built with the simplified broadcast
//! incremental power (SBIP) procedure.
//!
//! Starting from a source patch `u`, nodes are added to the route tree one
//! at a time. Each round picks, over every tree node `i` and every non-tree
//! node `j`, the pair with the smallest `E_min(u, i) + e(i, j)`; `j` joins the
//! tree with that energy and `i` as its parent. Ties go to the smallest `i`,
//! then the smallest `j`, which is the order a plain double loop over
//! `i` then `j` would visit them in. A pair is only accepted when its energy
//! is strictly below the large value `L`, so nodes that can only be reached
//! over `L` edges stay unreachable with `E_min = L`.
//!
//! The implementation keeps, for every non-tree node, its best candidate
//! parent, which turns the naive `O(n³)` scan into `O(n²)` while selecting
//! exactly the same pair in every round.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{NtbError, Result};
use crate::grid::{PatchIndex, SceneConfig};
use crate::network::TransmissionNetwork;

/// Minimum energies and routes from one source patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteMap {
    pub source: PatchIndex,
    pub e_min: Vec<f64>,
    pub parent: Vec<Option<PatchIndex>>,
    pub reachable: Vec<bool>,
    /// Nodes in the order they joined the tree.
    pub order: Vec<PatchIndex>,
    pub large_value: f64,
}

/// One tree edge `(i, j, e(i, j))`.
pub type EdgeList = Vec<(PatchIndex, PatchIndex, f64)>;

impl RouteMap {
    pub fn node_count(&self) -> usize {
        self.e_min.len()
    }

    pub fn e_min(&self, n: PatchIndex) -> f64 {
        self.e_min[n]
    }

    pub fn is_reachable(&self, n: PatchIndex) -> bool {
        self.reachable[n]
    }

    /// `R_min(u, n)`, or `None` when `n` is unreachable.
    pub fn route_to(&self, n: PatchIndex) -> Option<Vec<PatchIndex>> {
        if !self.reachable.get(n).copied().unwrap_or(false) {
            return None;
        }
        let mut route = vec![n];
        let mut cur = n;
        while let Some(p) = self.parent[cur] {
            route.push(p);
            cur = p;
        }
        route.reverse();
        Some(route)
    }

    /// Edges of the route tree in insertion order.
    pub fn tree_edges(&self, net: &TransmissionNetwork) -> EdgeList {
        self.order
            .iter()
            .filter_map(|&j| self.parent[j].map(|i| (i, j, net.energy(i, j))))
            .collect()
    }

    /// `patch,E_min` table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("patch,E_min\n");
        for (p, e) in self.e_min.iter().enumerate() {
            let _ = writeln!(out, "{p},{e}");
        }
        out
    }
}

/// Builds the route map of `net` from source `u`.
pub fn sbip(net: &TransmissionNetwork, u: PatchIndex) -> Result<RouteMap> {
    let n = net.node_count();
    if u >= n {
        return Err(NtbError::IndexOutOfRange {
            index: u,
            node_count: n,
        });
    }
    for i in 0..n {
        for j in 0..n {
            let e = net.energy(i, j);
            if e.is_nan() || e < 0.0 {
                return Err(NtbError::NegativeEnergy(i, j, e));
            }
        }
    }
    let large = net.large_value();
    let mut e_min = vec![large; n];
    let mut parent = vec![None; n];
    let mut in_tree = vec![false; n];
    let mut order = Vec::with_capacity(n);
    e_min[u] = 0.0;
    in_tree[u] = true;
    order.push(u);

    // Best (energy, parent) per non-tree node; parents are added in
    // arbitrary order, so ties keep the smaller parent index.
    let mut best: Vec<(f64, usize)> = (0..n).map(|j| (net.energy(u, j), u)).collect();

    while order.len() < n {
        let mut pick: Option<(f64, usize, usize)> = None;
        for (j, &(cand, i)) in best.iter().enumerate() {
            if in_tree[j] || cand.is_nan() || cand >= large {
                continue;
            }
            let better = match pick {
                None => true,
                Some((pe, pi, _)) => cand < pe || (cand == pe && i < pi),
            };
            if better {
                pick = Some((cand, i, j));
            }
        }
        let Some((energy, i, j)) = pick else {
            break;
        };
        e_min[j] = energy;
        parent[j] = Some(i);
        in_tree[j] = true;
        order.push(j);
        for k in 0..n {
            if in_tree[k] {
                continue;
            }
            let cand = energy + net.energy(j, k);
            let (cur, ci) = best[k];
            if cand < cur || (cand == cur && j < ci) {
                best[k] = (cand, j);
            }
        }
    }
    Ok(RouteMap {
        source: u,
        e_min,
        parent,
        reachable: in_tree,
        order,
        large_value: large,
    })
}

/// Route maps keyed by source patch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RouteMaps {
    maps: BTreeMap<PatchIndex, RouteMap>,
}

impl RouteMaps {
    pub fn get(&self, source: PatchIndex) -> Option<&RouteMap> {
        self.maps.get(&source)
    }

    pub fn sources(&self) -> impl Iterator<Item = PatchIndex> + '_ {
        self.maps.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Map for `source`, computing it when `source` is not an entrance.
    /// The flag is `true` when the map had to be computed on demand.
    pub fn get_or_compute(
        &mut self,
        net: &TransmissionNetwork,
        source: PatchIndex,
    ) -> Result<(&RouteMap, bool)> {
        let on_demand = !self.maps.contains_key(&source);
        if on_demand {
            log::warn!(
                "route starts at non-entrance patch {source}; computing its route map on demand"
            );
            self.maps.insert(source, sbip(net, source)?);
        }
        Ok((&self.maps[&source], on_demand))
    }

    pub fn insert(&mut self, map: RouteMap) {
        self.maps.insert(map.source, map);
    }
}

/// One route map per entrance patch of the scene.
pub fn route_maps_for_entrances(
    net: &TransmissionNetwork,
    scene: &SceneConfig,
) -> Result<RouteMaps> {
    let mut maps = RouteMaps::default();
    for &u in &scene.entrance_patches {
        maps.insert(sbip(net, u)?);
    }
    Ok(maps)
}

/// Tree edges of `map` with `e(i, j) <= threshold`.
pub fn prune_route_map(
    map: &RouteMap,
    net: &TransmissionNetwork,
    threshold: f64,
) -> Result<EdgeList> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(NtbError::InvalidArgument(format!(
            "prune threshold must be positive, got {threshold}"
        )));
    }
    Ok(map
        .tree_edges(net)
        .into_iter()
        .filter(|&(_, _, e)| e <= threshold)
        .collect())
}

/// Graphviz rendering of a route tree, edges labelled with their energy.
pub fn to_dot(map: &RouteMap, edges: &EdgeList) -> String {
    let mut out = String::from("digraph route_map {\n");
    let _ = writeln!(out, "  n{} [shape=doublecircle];", map.source);
    for &(i, j, e) in edges {
        let _ = writeln!(out, "  n{i} -> n{j} [label=\"{e}\"];");
    }
    out.push_str("}\n");
    out
}
