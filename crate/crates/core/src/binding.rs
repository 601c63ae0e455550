//! Dynamics ownership: hash-space accumulation, binding to the nearest
//! navigational node once the pose graph is stable, move-with-node, and
//! reversion to hash space when the owning node is removed.
//!
//! Observations are never duplicated or dropped by ownership changes: the sum
//! of `total_seen` over all cells is conserved by every transfer.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::DirHistogram;
use crate::reservoir::ReservoirBuffer;
use crate::scene_graph::{BindingNotification, LayeredGraph, NodeId};
use crate::spatial_hash::{key_of, CellKey, ObservationSink, SparseCellMap};
use crate::swgmm::{FitConfig, FitMethod, SwGmm};
use crate::types::{CylindricalSample, Position3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Owner {
    HashOwned(CellKey),
    NodeBound(NodeId),
}

/// Per-cell dynamics state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsCell {
    pub buffer: ReservoirBuffer,
    /// Discrete baseline accumulated over the same observations.
    pub histogram: DirHistogram,
    pub model: Option<SwGmm>,
    pub owner: Owner,
    pub last_fit_time: Option<f64>,
    /// Buffer changed since the last fit.
    pub dirty: bool,
}

impl DynamicsCell {
    pub fn new(owner: Owner, capacity: usize, bins: usize) -> Result<Self> {
        Ok(Self {
            buffer: ReservoirBuffer::new(capacity)?,
            histogram: DirHistogram::new(bins)?,
            model: None,
            owner,
            last_fit_time: None,
            dirty: false,
        })
    }

    /// Consistency of a stored cell with the map parameters.
    pub fn validate(&self, params: &MapParams) -> Result<()> {
        self.buffer.validate()?;
        if self.buffer.capacity() != params.reservoir_capacity {
            return Err(Error::invalid(format!(
                "cell capacity {} differs from map capacity {}",
                self.buffer.capacity(),
                params.reservoir_capacity
            )));
        }
        if self.histogram.bins() != params.bins {
            return Err(Error::invalid("cell histogram bin count differs from map"));
        }
        if self.histogram.total() != self.buffer.total_seen() {
            return Err(Error::invalid(format!(
                "histogram total {} differs from buffer T {}",
                self.histogram.total(),
                self.buffer.total_seen()
            )));
        }
        if let Some(m) = &self.model {
            m.validate(m.k().max(1))?;
        }
        Ok(())
    }

    /// Folds `other` into `self`; the model is dropped since it no longer
    /// describes the merged buffer.
    fn absorb<R: Rng + ?Sized>(&mut self, other: DynamicsCell, rng: &mut R) -> Result<()> {
        if other.buffer.total_seen() == 0 {
            return Ok(());
        }
        self.buffer = ReservoirBuffer::merge(&self.buffer, &other.buffer, rng)?;
        self.histogram.merge(&other.histogram)?;
        self.model = None;
        self.last_fit_time = None;
        self.dirty = true;
        Ok(())
    }
}

impl ObservationSink for DynamicsCell {
    fn push_sample<R: Rng + ?Sized>(&mut self, z: CylindricalSample, rng: &mut R) {
        self.buffer.push(z, rng);
        self.histogram.observe(z.theta);
        self.dirty = true;
    }
}

/// Gate on pose-graph stability: binding waits until no significant pose
/// update has occurred for `window` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityTracker {
    pub window: f64,
    pub significance_threshold: f64,
    pub last_significant_update: f64,
}

impl StabilityTracker {
    pub const DEFAULT_WINDOW: f64 = 10.0;
    pub const DEFAULT_THRESHOLD: f64 = 0.05;

    pub fn new(window: f64, significance_threshold: f64) -> Result<Self> {
        if !(window > 0.0) || !window.is_finite() {
            return Err(Error::invalid(format!(
                "stabilization window must be > 0, got {window}"
            )));
        }
        if !(significance_threshold >= 0.0) {
            return Err(Error::invalid("significance threshold must be >= 0"));
        }
        Ok(Self {
            window,
            significance_threshold,
            last_significant_update: f64::NEG_INFINITY,
        })
    }

    pub fn is_stable(&self, now: f64) -> bool {
        now - self.last_significant_update >= self.window
    }

    /// Additions and removals always count; moves count above the threshold.
    pub fn note(&mut self, n: &BindingNotification, now: f64) {
        let significant = match n {
            BindingNotification::NodeAdded(..) | BindingNotification::NodeRemoved { .. } => true,
            BindingNotification::NodeMoved { old, new, .. } => old.distance(new) > self.significance_threshold,
        };
        if significant {
            self.last_significant_update = self.last_significant_update.max(now);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapParams {
    pub resolution: f64,
    pub reservoir_capacity: usize,
    pub bins: usize,
}

impl Default for MapParams {
    fn default() -> Self {
        Self {
            resolution: 0.5,
            reservoir_capacity: crate::reservoir::DEFAULT_CAPACITY,
            bins: crate::histogram::DEFAULT_BINS,
        }
    }
}

/// Outcome of one [`DynamicsMap::update_models`] call.
#[derive(Debug, Clone, Default)]
pub struct UpdateStats {
    pub refits: usize,
    pub failures: usize,
    /// Wall time of each successful fit, seconds. Informational only.
    pub fit_seconds: Vec<f64>,
}

/// Hash-owned and node-bound dynamics cells.
#[derive(Debug, Clone)]
pub struct DynamicsMap {
    params: MapParams,
    hash: SparseCellMap<DynamicsCell>,
    bound: BTreeMap<NodeId, DynamicsCell>,
    /// Which node owns the dynamics of each transferred key.
    key_index: HashMap<CellKey, NodeId>,
    last_update: Option<f64>,
}

impl DynamicsMap {
    pub fn new(params: MapParams) -> Result<Self> {
        // fail early on bad capacity / bins
        DynamicsCell::new(
            Owner::HashOwned(CellKey::new(0, 0, 0)),
            params.reservoir_capacity,
            params.bins,
        )?;
        Ok(Self {
            params,
            hash: SparseCellMap::new(params.resolution)?,
            bound: BTreeMap::new(),
            key_index: HashMap::new(),
            last_update: None,
        })
    }

    pub fn params(&self) -> &MapParams {
        &self.params
    }

    pub fn resolution(&self) -> f64 {
        self.params.resolution
    }

    /// Adds one observation. Keys already transferred feed their owning node's
    /// cell; otherwise the hash cell is created on demand.
    pub fn observe<R: Rng + ?Sized>(&mut self, p: &Position3, z: CylindricalSample, rng: &mut R) -> Result<CellKey> {
        let key = key_of(p, self.params.resolution)?;
        if let Some(node) = self.key_index.get(&key) {
            if let Some(cell) = self.bound.get_mut(node) {
                cell.push_sample(z, rng);
                return Ok(key);
            }
        }
        let MapParams {
            reservoir_capacity,
            bins,
            ..
        } = self.params;
        self.hash.observe_with(p, z, rng, |k| {
            DynamicsCell::new(Owner::HashOwned(k), reservoir_capacity, bins)
                .expect("parameters validated at construction")
        })
    }

    /// Transfers every hash-owned cell to its nearest alive navigational node
    /// once the graph is stable. Returns the number of transfers.
    pub fn try_bind<R: Rng + ?Sized>(
        &mut self,
        graph: &mut LayeredGraph,
        tracker: &StabilityTracker,
        now: f64,
        rng: &mut R,
    ) -> Result<usize> {
        if !tracker.is_stable(now) || self.hash.is_empty() || graph.alive_count() == 0 {
            return Ok(0);
        }
        let delta = self.params.resolution;
        let mut transfers = 0;
        for key in self.hash.sorted_keys() {
            let Some(node) = graph.nearest_alive(&key.center(delta)) else {
                break;
            };
            let mut cell = self.hash.remove(&key).expect("key listed above");
            match self.bound.get_mut(&node) {
                Some(existing) => existing.absorb(cell, rng)?,
                None => {
                    cell.owner = Owner::NodeBound(node);
                    self.bound.insert(node, cell);
                    graph.attach_dynamics(node)?;
                }
            }
            self.key_index.insert(key, node);
            transfers += 1;
        }
        Ok(transfers)
    }

    /// Ownership follows the node id, so a move changes nothing here.
    pub fn on_node_moved(&mut self, _node: NodeId, _new_position: &Position3) {}

    /// Reverts a removed node's dynamics to the hash cell under its last position.
    pub fn on_node_removed<R: Rng + ?Sized>(
        &mut self,
        node: NodeId,
        last_position: &Position3,
        rng: &mut R,
    ) -> Result<()> {
        let Some(mut cell) = self.bound.remove(&node) else {
            return Ok(());
        };
        self.key_index.retain(|_, owner| *owner != node);
        let key = key_of(last_position, self.params.resolution)?;
        match self.hash.get_mut(&key) {
            Some(existing) => existing.absorb(cell, rng)?,
            None => {
                cell.owner = Owner::HashOwned(key);
                self.hash.insert(key, cell);
            }
        }
        Ok(())
    }

    /// Refits every dirty cell holding at least `min_samples` buffered samples
    /// (and never fewer than one fit's worth), possibly in parallel.
    ///
    /// Nothing happens until `interval` seconds have passed since the previous
    /// update. Each cell's fit seed is derived from `cfg.rng_seed` and the
    /// cell's owner, so results do not depend on scheduling.
    pub fn update_models(
        &mut self,
        method: FitMethod,
        cfg: &FitConfig,
        min_samples: usize,
        interval: f64,
        now: f64,
        parallel: bool,
    ) -> Result<UpdateStats> {
        cfg.validate()?;
        if let Some(last) = self.last_update {
            if now - last < interval {
                return Ok(UpdateStats::default());
            }
        }
        self.last_update = Some(now);
        let min = min_samples.max(cfg.min_samples_per_component);
        let mut jobs: Vec<&mut DynamicsCell> = self
            .hash
            .values_mut()
            .chain(self.bound.values_mut())
            .filter(|c| c.dirty && c.buffer.len() >= min)
            .collect();

        let refit = |cell: &mut &mut DynamicsCell| -> Option<f64> {
            let samples = cell.buffer.snapshot();
            let seed = cell_seed(cfg.rng_seed, &cell.owner);
            let start = Instant::now();
            let result = method.fit(&samples, &cfg.with_seed(seed));
            let elapsed = start.elapsed().as_secs_f64();
            cell.dirty = false;
            match result {
                Ok((model, _)) => {
                    cell.model = Some(model);
                    cell.last_fit_time = Some(now);
                    Some(elapsed)
                }
                Err(e) => {
                    log::warn!("fit failed for {:?}: {e}", cell.owner);
                    None
                }
            }
        };
        let results: Vec<Option<f64>> = if parallel {
            jobs.par_iter_mut().map(refit).collect()
        } else {
            jobs.iter_mut().map(refit).collect()
        };

        let mut stats = UpdateStats::default();
        for r in results {
            match r {
                Some(t) => {
                    stats.refits += 1;
                    stats.fit_seconds.push(t);
                }
                None => stats.failures += 1,
            }
        }
        Ok(stats)
    }

    /// Bound cell covering `p`, if its key has been transferred to a node.
    pub fn bound_cell_at(&self, p: &Position3) -> Option<&DynamicsCell> {
        let key = key_of(p, self.params.resolution).ok()?;
        self.key_index.get(&key).and_then(|n| self.bound.get(n))
    }

    pub fn bound_cell(&self, node: NodeId) -> Option<&DynamicsCell> {
        self.bound.get(&node)
    }

    pub fn hash_cell(&self, key: &CellKey) -> Option<&DynamicsCell> {
        self.hash.get(key)
    }

    pub fn owner_of_key(&self, key: &CellKey) -> Option<NodeId> {
        self.key_index.get(key).copied()
    }

    pub fn hash_cell_count(&self) -> usize {
        self.hash.len()
    }

    pub fn bound_cell_count(&self) -> usize {
        self.bound.len()
    }

    pub fn cell_count(&self) -> usize {
        self.hash.len() + self.bound.len()
    }

    /// Sum of `total_seen` over every cell.
    pub fn total_seen(&self) -> u64 {
        self.cells().map(|c| c.buffer.total_seen()).sum()
    }

    /// All cells: hash-owned first in key order, then bound in node order.
    pub fn cells(&self) -> impl Iterator<Item = &DynamicsCell> {
        let hash: Vec<&DynamicsCell> = self
            .hash
            .sorted_keys()
            .into_iter()
            .filter_map(|k| self.hash.get(&k))
            .collect();
        hash.into_iter().chain(self.bound.values())
    }

    /// Transferred keys in ascending order with their owning node.
    pub fn key_index(&self) -> Vec<(CellKey, NodeId)> {
        let mut v: Vec<(CellKey, NodeId)> = self.key_index.iter().map(|(k, n)| (*k, *n)).collect();
        v.sort_unstable();
        v
    }

    pub fn last_update(&self) -> Option<f64> {
        self.last_update
    }

    /// Rebuilds a map from stored cells. Fails on duplicate owners or dangling keys.
    pub fn from_parts(
        params: MapParams,
        cells: Vec<DynamicsCell>,
        key_index: Vec<(CellKey, NodeId)>,
        last_update: Option<f64>,
    ) -> Result<Self> {
        let mut map = Self::new(params)?;
        for cell in cells {
            cell.validate(&params)?;
            let dup = match cell.owner {
                Owner::HashOwned(k) => map.hash.insert(k, cell).is_some(),
                Owner::NodeBound(n) => map.bound.insert(n, cell).is_some(),
            };
            if dup {
                return Err(Error::invalid("two cells share one owner"));
            }
        }
        for (k, n) in key_index {
            if !map.bound.contains_key(&n) {
                return Err(Error::invalid(format!("key {k:?} points at unbound node {n}")));
            }
            map.key_index.insert(k, n);
        }
        map.last_update = last_update;
        Ok(map)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic per-cell fit seed.
pub fn cell_seed(base: u64, owner: &Owner) -> u64 {
    match owner {
        Owner::HashOwned(k) => {
            let mut h = splitmix64(base ^ 0x4841_5348);
            for v in [k.ix, k.iy, k.iz] {
                h = splitmix64(h ^ v as u64);
            }
            h
        }
        Owner::NodeBound(n) => splitmix64(splitmix64(base ^ 0x4E4F_4445) ^ n.0),
    }
}
