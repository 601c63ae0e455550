//! Self-describing JSON snapshot of a fitted system.
//!
//! Cells are written in a fixed order (hash-owned by key, then bound by node)
//! and floats in shortest round-trip form, so equal systems give equal bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binding::{DynamicsCell, DynamicsMap, MapParams};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::scene_graph::{LayeredGraph, NavNode, NodeId};
use crate::spatial_hash::CellKey;
use crate::swgmm::FitMethod;
use crate::system::DynamicsSystem;

pub const SNAPSHOT_FORMAT: &str = "flowdyn-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub position: String,
    pub theta: String,
    pub rho: String,
    pub time: String,
    pub resolution: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            position: "m".into(),
            theta: "rad".into(),
            rho: "m/s".into(),
            time: "s".into(),
            resolution: "m".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSnapshot {
    pub nodes: Vec<NavNode>,
    pub edges: Vec<(NodeId, NodeId)>,
    /// Navigational parents of dynamics-layer nodes.
    pub dynamics: Vec<NodeId>,
}

impl GraphSnapshot {
    pub fn capture(g: &LayeredGraph) -> Self {
        Self {
            nodes: g.all_nodes().copied().collect(),
            edges: g.nav_edges().copied().collect(),
            dynamics: g.dynamics_parents().copied().collect(),
        }
    }

    pub fn restore(&self) -> Result<LayeredGraph> {
        LayeredGraph::from_parts(self.nodes.clone(), self.edges.clone(), self.dynamics.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSnapshot {
    pub params: MapParams,
    pub last_update: Option<f64>,
    /// Sum of `total_seen` over all cells.
    pub total_seen: u64,
    pub cells: Vec<DynamicsCell>,
    pub key_index: Vec<(CellKey, NodeId)>,
}

impl MapSnapshot {
    pub fn capture(map: &DynamicsMap) -> Self {
        Self {
            params: *map.params(),
            last_update: map.last_update(),
            total_seen: map.total_seen(),
            cells: map.cells().cloned().collect(),
            key_index: map.key_index(),
        }
    }

    pub fn restore(&self) -> Result<DynamicsMap> {
        let map = DynamicsMap::from_parts(
            self.params,
            self.cells.clone(),
            self.key_index.clone(),
            self.last_update,
        )?;
        if map.total_seen() != self.total_seen {
            return Err(Error::invalid(format!(
                "cells hold {} observations but the snapshot records {}",
                map.total_seen(),
                self.total_seen
            )));
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub units: Units,
    pub config: RunConfig,
    pub method: FitMethod,
    pub resolution: f64,
    /// Time of the last replayed input.
    pub end_time: f64,
    pub graph: GraphSnapshot,
    pub map: MapSnapshot,
}

impl Snapshot {
    pub fn capture(sys: &DynamicsSystem, config: &RunConfig, end_time: f64) -> Self {
        Self {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            units: Units::default(),
            config: config.clone(),
            method: sys.config().method,
            resolution: sys.map.resolution(),
            end_time,
            graph: GraphSnapshot::capture(&sys.graph),
            map: MapSnapshot::capture(&sys.map),
        }
    }

    /// Graph and map, checked for consistency.
    pub fn restore(&self) -> Result<(LayeredGraph, DynamicsMap)> {
        let graph = self.graph.restore()?;
        let map = self.map.restore()?;
        if map.resolution() != self.resolution {
            return Err(Error::invalid("map resolution differs from snapshot resolution"));
        }
        for (_, node) in map.key_index() {
            if map.bound_cell(node).is_none() || !graph.dynamics_parents().any(|p| *p == node) {
                return Err(Error::invalid(format!(
                    "bound node {node} has no dynamics node in the graph"
                )));
            }
        }
        Ok((graph, map))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: Self = serde_json::from_str(s)?;
        if snap.format != SNAPSHOT_FORMAT {
            return Err(Error::invalid(format!("not a snapshot: format {:?}", snap.format)));
        }
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported snapshot version {} (expected {SNAPSHOT_VERSION})",
                snap.version
            )));
        }
        Ok(snap)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_graph::Bounds2;
    use crate::system::Observation;
    use crate::types::{CylindricalSample, Position3};

    fn fitted_system() -> DynamicsSystem {
        let bounds = Bounds2::new(0.0, 0.0, 2.0, 1.0).unwrap();
        let graph = LayeredGraph::build_nav_layer(&bounds, 1.0).unwrap();
        let mut cfg = RunConfig::default().system_config();
        cfg.map.resolution = 1.0;
        cfg.parallel = false;
        let mut sys = DynamicsSystem::new(graph, cfg, 3).unwrap();
        for i in 0..60 {
            let x = if i % 3 == 0 { 1.5 } else { 0.5 };
            let theta = if i % 2 == 0 { 0.1 } else { 3.0 };
            sys.observe(&Observation {
                position: Position3 { x, y: 0.5, z: 0.0 },
                sample: CylindricalSample::new(theta + 0.01 * (i % 7) as f64, 1.0 + 0.02 * (i % 5) as f64, i as f64)
                    .unwrap(),
            })
            .unwrap();
        }
        sys.observe(&Observation {
            position: Position3 { x: 7.5, y: 7.5, z: 0.0 },
            sample: CylindricalSample::new(0.0, 1.0, 60.0).unwrap(),
        })
        .unwrap();
        sys.flush(60.0).unwrap();
        sys
    }

    #[test]
    fn round_trip_is_exact() {
        let sys = fitted_system();
        let snap = Snapshot::capture(&sys, &RunConfig::default(), 60.0);
        let json = snap.to_json().unwrap();
        let back = Snapshot::from_json(&json).unwrap();
        assert_eq!(back, snap);
        assert_eq!(back.to_json().unwrap(), json);
        let (graph, map) = back.restore().unwrap();
        assert_eq!(map.total_seen(), 61);
        // the far observation binds to the nearest node too
        assert_eq!(map.bound_cell_count(), 2);
        assert_eq!(map.hash_cell_count(), 0);
        assert_eq!(map.key_index().len(), 3);
        assert_eq!(graph.alive_count(), 2);
        assert!(map.cells().any(|c| c.model.is_some()));
    }

    #[test]
    fn tampered_counts_rejected() {
        let sys = fitted_system();
        let mut snap = Snapshot::capture(&sys, &RunConfig::default(), 60.0);
        snap.map.total_seen += 1;
        assert!(snap.restore().is_err());

        let mut snap = Snapshot::capture(&sys, &RunConfig::default(), 60.0);
        let json = snap
            .to_json()
            .unwrap()
            .replace("\"total_seen\": 21,", "\"total_seen\": 22,");
        snap = Snapshot::from_json(&json).unwrap();
        assert!(snap.restore().is_err());
    }

    #[test]
    fn wrong_format_rejected() {
        let sys = fitted_system();
        let mut snap = Snapshot::capture(&sys, &RunConfig::default(), 60.0);
        snap.version = 99;
        assert!(Snapshot::from_json(&snap.to_json().unwrap()).is_err());
        assert!(Snapshot::from_json("{}").is_err());
    }
}
