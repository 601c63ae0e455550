//! Minimal layered scene graph: a navigational layer plus a dynamics layer
//! whose nodes hang off navigational parents.
//!
//! Pose corrections arrive as a scripted [`PoseEvent`] stream.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Position3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer {
    Navigational,
    Dynamics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavNode {
    pub id: NodeId,
    pub position: Position3,
    pub alive: bool,
}

/// Axis-aligned planar rectangle, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds2 {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds2 {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        let b = Self {
            min_x,
            min_y,
            max_x,
            max_y,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.min_x, self.min_y, self.max_x, self.max_y]
            .iter()
            .all(|v| v.is_finite())
            && self.max_x > self.min_x
            && self.max_y > self.min_y;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("degenerate bounds {self:?}")))
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PoseEventKind {
    AddNode(NodeId, Position3),
    MoveNode(NodeId, Position3),
    RemoveNode(NodeId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEvent {
    pub time: f64,
    pub kind: PoseEventKind,
}

/// Emitted by [`LayeredGraph::apply_event`] for the binding coordinator.
#[derive(Debug, Clone, PartialEq)]
pub enum BindingNotification {
    NodeAdded(NodeId, Position3),
    NodeMoved { id: NodeId, old: Position3, new: Position3 },
    NodeRemoved { id: NodeId, last_position: Position3 },
}

#[derive(Debug, Clone, Default)]
pub struct LayeredGraph {
    nav: BTreeMap<NodeId, NavNode>,
    nav_edges: BTreeSet<(NodeId, NodeId)>,
    /// Dynamics-layer nodes, keyed by their navigational parent.
    dynamics: BTreeSet<NodeId>,
}

impl LayeredGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Navigational nodes at the centers of a regular grid over `bounds`.
    ///
    /// Ids are assigned row-major from 0; 4-neighbours are connected.
    pub fn build_nav_layer(bounds: &Bounds2, spacing: f64) -> Result<Self> {
        bounds.validate()?;
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::invalid(format!("spacing must be > 0, got {spacing}")));
        }
        // tolerate float noise such as 18 / 0.3 = 60.000000000000007
        let count = |extent: f64| ((extent / spacing) - 1e-9).ceil().max(1.0) as u64;
        let nx = count(bounds.width());
        let ny = count(bounds.height());
        let mut g = Self::new();
        for iy in 0..ny {
            for ix in 0..nx {
                let id = NodeId(iy * nx + ix);
                let position = Position3 {
                    x: bounds.min_x + (ix as f64 + 0.5) * spacing,
                    y: bounds.min_y + (iy as f64 + 0.5) * spacing,
                    z: 0.0,
                };
                g.nav.insert(
                    id,
                    NavNode {
                        id,
                        position,
                        alive: true,
                    },
                );
                if ix > 0 {
                    g.nav_edges.insert((NodeId(id.0 - 1), id));
                }
                if iy > 0 {
                    g.nav_edges.insert((NodeId(id.0 - nx), id));
                }
            }
        }
        Ok(g)
    }

    pub fn node(&self, id: NodeId) -> Option<&NavNode> {
        self.nav.get(&id)
    }

    pub fn alive_nodes(&self) -> impl Iterator<Item = &NavNode> {
        self.nav.values().filter(|n| n.alive)
    }

    pub fn alive_count(&self) -> usize {
        self.alive_nodes().count()
    }

    pub fn all_nodes(&self) -> impl Iterator<Item = &NavNode> {
        self.nav.values()
    }

    pub fn nav_edges(&self) -> impl Iterator<Item = &(NodeId, NodeId)> {
        self.nav_edges.iter()
    }

    pub fn layer_of(&self, id: NodeId, layer: Layer) -> bool {
        match layer {
            Layer::Navigational => self.nav.get(&id).is_some_and(|n| n.alive),
            Layer::Dynamics => self.dynamics.contains(&id),
        }
    }

    /// Nearest alive navigational node by Euclidean distance; ties go to the smaller id.
    pub fn nearest_alive(&self, p: &Position3) -> Option<NodeId> {
        let mut best: Option<(f64, NodeId)> = None;
        for n in self.alive_nodes() {
            let d = n.position.distance2(p);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, n.id));
            }
        }
        best.map(|(_, id)| id)
    }

    pub fn dynamics_parents(&self) -> impl Iterator<Item = &NodeId> {
        self.dynamics.iter()
    }

    pub fn attach_dynamics(&mut self, parent: NodeId) -> Result<()> {
        if !self.layer_of(parent, Layer::Navigational) {
            return Err(Error::invalid(format!("node {parent} is not an alive nav node")));
        }
        self.dynamics.insert(parent);
        Ok(())
    }

    pub fn detach_dynamics(&mut self, parent: NodeId) -> bool {
        self.dynamics.remove(&parent)
    }

    pub fn apply_event(&mut self, ev: &PoseEvent) -> Result<Vec<BindingNotification>> {
        match &ev.kind {
            PoseEventKind::AddNode(id, position) => {
                position.validate()?;
                if self.nav.contains_key(id) {
                    return Err(Error::invalid(format!("node {id} already exists")));
                }
                self.nav.insert(
                    *id,
                    NavNode {
                        id: *id,
                        position: *position,
                        alive: true,
                    },
                );
                Ok(vec![BindingNotification::NodeAdded(*id, *position)])
            }
            PoseEventKind::MoveNode(id, position) => {
                position.validate()?;
                let node = self
                    .nav
                    .get_mut(id)
                    .filter(|n| n.alive)
                    .ok_or_else(|| Error::invalid(format!("unknown node {id}")))?;
                let old = node.position;
                node.position = *position;
                Ok(vec![BindingNotification::NodeMoved {
                    id: *id,
                    old,
                    new: *position,
                }])
            }
            PoseEventKind::RemoveNode(id) => {
                let node = self
                    .nav
                    .get_mut(id)
                    .filter(|n| n.alive)
                    .ok_or_else(|| Error::invalid(format!("unknown node {id}")))?;
                node.alive = false;
                let last_position = node.position;
                self.nav_edges.retain(|(a, b)| a != id && b != id);
                self.dynamics.remove(id);
                Ok(vec![BindingNotification::NodeRemoved { id: *id, last_position }])
            }
        }
    }

    /// Rebuilds a graph from stored nodes, edges and dynamics parents.
    pub fn from_parts(nodes: Vec<NavNode>, edges: Vec<(NodeId, NodeId)>, dynamics: Vec<NodeId>) -> Result<Self> {
        let mut g = Self::new();
        for n in nodes {
            n.position.validate()?;
            if g.nav.insert(n.id, n).is_some() {
                return Err(Error::invalid(format!("duplicate node {}", n.id)));
            }
        }
        for (a, b) in edges {
            if !g.layer_of(a, Layer::Navigational) || !g.layer_of(b, Layer::Navigational) {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) touches a missing or removed node"
                )));
            }
            g.nav_edges.insert((a, b));
        }
        g.dynamics.extend(dynamics);
        g.check_invariants()?;
        Ok(g)
    }

    /// Layer partition and dynamics-parent invariants.
    pub fn check_invariants(&self) -> Result<()> {
        for parent in &self.dynamics {
            if !self.layer_of(*parent, Layer::Navigational) {
                return Err(Error::invalid(format!(
                    "dynamics node orphaned: parent {parent} is not alive"
                )));
            }
        }
        Ok(())
    }
}

/// Parses one line of the pose-event stream.
pub fn parse_pose_event(line: &str) -> std::result::Result<PoseEvent, String> {
    let mut it = line.split_whitespace();
    let t = it.next().ok_or("empty line")?;
    let time: f64 = t
        .strip_prefix("t=")
        .ok_or_else(|| format!("expected t=<sec>, got {t:?}"))?
        .parse()
        .map_err(|e| format!("bad time: {e}"))?;
    let verb = it.next().ok_or("missing event kind")?;
    let id = NodeId(
        it.next()
            .ok_or("missing node id")?
            .parse()
            .map_err(|e| format!("bad node id: {e}"))?,
    );
    let mut pos = || -> std::result::Result<Position3, String> {
        let mut v = [0.0; 3];
        for slot in &mut v {
            *slot = it
                .next()
                .ok_or("missing coordinate")?
                .parse()
                .map_err(|e| format!("bad coordinate: {e}"))?;
        }
        let p = Position3 {
            x: v[0],
            y: v[1],
            z: v[2],
        };
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    };
    let kind = match verb {
        "ADD" => PoseEventKind::AddNode(id, pos()?),
        "MOVE" => PoseEventKind::MoveNode(id, pos()?),
        "REMOVE" => PoseEventKind::RemoveNode(id),
        other => return Err(format!("unknown event kind {other:?}")),
    };
    if it.next().is_some() {
        return Err("trailing fields".into());
    }
    if !time.is_finite() {
        return Err("non-finite time".into());
    }
    Ok(PoseEvent { time, kind })
}

/// Reads a pose-event file; blank lines and `#` comments are skipped.
/// Events must be time-ordered.
pub fn read_pose_events(path: &Path) -> Result<Vec<PoseEvent>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<PoseEvent> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ev = parse_pose_event(line).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        })?;
        if out.last().is_some_and(|prev| ev.time < prev.time) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "events are not time-ordered".into(),
            });
        }
        out.push(ev);
    }
    Ok(out)
}

pub fn format_pose_event(ev: &PoseEvent) -> String {
    match &ev.kind {
        PoseEventKind::AddNode(id, p) => format!("t={} ADD {id} {} {} {}", ev.time, p.x, p.y, p.z),
        PoseEventKind::MoveNode(id, p) => {
            format!("t={} MOVE {id} {} {} {}", ev.time, p.x, p.y, p.z)
        }
        PoseEventKind::RemoveNode(id) => format!("t={} REMOVE {id}", ev.time),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pos(x: f64, y: f64) -> Position3 {
        Position3 { x, y, z: 0.0 }
    }

    #[test]
    fn nav_layer_counts() {
        let g = LayeredGraph::build_nav_layer(&Bounds2::new(0.0, 0.0, 18.0, 10.0).unwrap(), 1.0).unwrap();
        assert_eq!(g.alive_count(), 180);
        let one = LayeredGraph::build_nav_layer(&Bounds2::new(0.0, 0.0, 1.0, 1.0).unwrap(), 1.0).unwrap();
        assert_eq!(one.alive_count(), 1);
        let b = Bounds2::new(0.0, 0.0, 6.0, 4.0).unwrap();
        let coarse = LayeredGraph::build_nav_layer(&b, 1.0).unwrap().alive_count();
        let fine = LayeredGraph::build_nav_layer(&b, 0.5).unwrap().alive_count();
        assert_eq!(fine, 4 * coarse);
        assert!(Bounds2::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(LayeredGraph::build_nav_layer(&b, 0.0).is_err());
    }

    #[test]
    fn float_noise_in_spacing() {
        let g = LayeredGraph::build_nav_layer(&Bounds2::new(0.0, 0.0, 18.0, 10.0).unwrap(), 0.3).unwrap();
        assert_eq!(g.alive_count(), 60 * 34);
    }

    #[test]
    fn add_remove_move() {
        let mut g = LayeredGraph::new();
        let add = PoseEvent {
            time: 0.0,
            kind: PoseEventKind::AddNode(NodeId(7), pos(1.0, 1.0)),
        };
        g.apply_event(&add).unwrap();
        assert!(g.apply_event(&add).is_err());
        let mv = PoseEvent {
            time: 1.0,
            kind: PoseEventKind::MoveNode(NodeId(7), pos(3.0, 1.0)),
        };
        let n = g.apply_event(&mv).unwrap();
        assert_eq!(
            n,
            vec![BindingNotification::NodeMoved {
                id: NodeId(7),
                old: pos(1.0, 1.0),
                new: pos(3.0, 1.0)
            }]
        );
        assert_eq!(g.node(NodeId(7)).unwrap().position, pos(3.0, 1.0));
        g.attach_dynamics(NodeId(7)).unwrap();
        let rm = PoseEvent {
            time: 2.0,
            kind: PoseEventKind::RemoveNode(NodeId(7)),
        };
        assert_eq!(g.apply_event(&rm).unwrap().len(), 1);
        assert_eq!(g.alive_count(), 0);
        assert!(g.apply_event(&rm).is_err());
        // ids are never reused
        assert!(g.apply_event(&add).is_err());
        g.check_invariants().unwrap();
        assert_eq!(g.dynamics_parents().count(), 0);
    }

    #[test]
    fn unknown_ids_rejected() {
        let mut g = LayeredGraph::new();
        let mv = PoseEvent {
            time: 0.0,
            kind: PoseEventKind::MoveNode(NodeId(1), pos(0.0, 0.0)),
        };
        assert!(g.apply_event(&mv).is_err());
    }

    #[test]
    fn nearest_with_ties() {
        let mut g = LayeredGraph::new();
        for (i, x) in [(2u64, 1.0), (1, -1.0)] {
            g.apply_event(&PoseEvent {
                time: 0.0,
                kind: PoseEventKind::AddNode(NodeId(i), pos(x, 0.0)),
            })
            .unwrap();
        }
        assert_eq!(g.nearest_alive(&pos(0.0, 0.0)), Some(NodeId(1)));
        assert_eq!(g.nearest_alive(&pos(0.9, 0.0)), Some(NodeId(2)));
    }

    #[test]
    fn event_lines() {
        let ev = parse_pose_event("t=1.5 ADD 3 1 2 0").unwrap();
        assert_eq!(ev.time, 1.5);
        assert_eq!(
            ev.kind,
            PoseEventKind::AddNode(NodeId(3), Position3 { x: 1.0, y: 2.0, z: 0.0 })
        );
        assert_eq!(parse_pose_event(&format_pose_event(&ev)).unwrap(), ev);
        assert_eq!(
            parse_pose_event("t=2 REMOVE 3").unwrap().kind,
            PoseEventKind::RemoveNode(NodeId(3))
        );
        assert!(parse_pose_event("t=2 JUMP 3").is_err());
        assert!(parse_pose_event("2 REMOVE 3").is_err());
        assert!(parse_pose_event("t=2 MOVE 3 1 2").is_err());
        assert!(parse_pose_event("t=2 REMOVE 3 4").is_err());
    }
}
