//! Single-threaded coordinator owning the scene graph, the dynamics map and
//! the stabilization gate. Replays time-ordered detections and pose events.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binding::{DynamicsMap, MapParams, StabilityTracker, UpdateStats};
use crate::error::{Error, Result};
use crate::scene_graph::{BindingNotification, LayeredGraph, PoseEvent};
use crate::spatial_hash::CellKey;
use crate::swgmm::{FitConfig, FitMethod};
use crate::types::{CylindricalSample, Position3};

pub const DEFAULT_MIN_FIT_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub map: MapParams,
    pub stabilization_window: f64,
    pub significance_threshold: f64,
    /// Seconds between scheduled model updates.
    pub update_interval: f64,
    /// Buffered samples a cell needs before it gets a model.
    pub min_fit_samples: usize,
    pub method: FitMethod,
    pub fit: FitConfig,
    pub parallel: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            map: MapParams::default(),
            stabilization_window: StabilityTracker::DEFAULT_WINDOW,
            significance_threshold: StabilityTracker::DEFAULT_THRESHOLD,
            update_interval: 10.0,
            min_fit_samples: DEFAULT_MIN_FIT_SAMPLES,
            method: FitMethod::Bic,
            fit: FitConfig::default(),
            parallel: true,
        }
    }
}

/// One observation at a position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub position: Position3,
    pub sample: CylindricalSample,
}

#[derive(Debug, Clone, Default)]
pub struct TickStats {
    pub transfers: usize,
    pub update: UpdateStats,
}

#[derive(Debug, Clone)]
pub struct DynamicsSystem {
    pub graph: LayeredGraph,
    pub map: DynamicsMap,
    pub tracker: StabilityTracker,
    cfg: SystemConfig,
    rng: ChaCha8Rng,
}

impl DynamicsSystem {
    /// `seed` drives reservoir replacement and merge draws.
    pub fn new(graph: LayeredGraph, cfg: SystemConfig, seed: u64) -> Result<Self> {
        cfg.fit.validate()?;
        if !(cfg.update_interval >= 0.0) {
            return Err(Error::invalid("update_interval must be >= 0"));
        }
        Ok(Self {
            graph,
            map: DynamicsMap::new(cfg.map)?,
            tracker: StabilityTracker::new(cfg.stabilization_window, cfg.significance_threshold)?,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    /// Order selection used by later ticks. Existing models are kept.
    pub fn set_method(&mut self, method: FitMethod) {
        self.cfg.method = method;
    }

    pub fn apply_event(&mut self, ev: &PoseEvent) -> Result<()> {
        for n in self.graph.apply_event(ev)? {
            self.tracker.note(&n, ev.time);
            match n {
                BindingNotification::NodeAdded(..) => {}
                BindingNotification::NodeMoved { id, new, .. } => self.map.on_node_moved(id, &new),
                BindingNotification::NodeRemoved { id, last_position } => {
                    self.map.on_node_removed(id, &last_position, &mut self.rng)?
                }
            }
        }
        Ok(())
    }

    pub fn observe(&mut self, obs: &Observation) -> Result<CellKey> {
        self.map.observe(&obs.position, obs.sample, &mut self.rng)
    }

    /// Binding attempt followed by a scheduled model update.
    pub fn tick(&mut self, now: f64) -> Result<TickStats> {
        let transfers = self.map.try_bind(&mut self.graph, &self.tracker, now, &mut self.rng)?;
        let update = self.map.update_models(
            self.cfg.method,
            &self.cfg.fit,
            self.cfg.min_fit_samples,
            self.cfg.update_interval,
            now,
            self.cfg.parallel,
        )?;
        Ok(TickStats { transfers, update })
    }

    /// Binding attempt only.
    pub fn bind(&mut self, now: f64) -> Result<usize> {
        self.map.try_bind(&mut self.graph, &self.tracker, now, &mut self.rng)
    }

    /// Refits every dirty cell with `method`, ignoring the schedule.
    pub fn fit_all(&mut self, method: FitMethod, now: f64) -> Result<UpdateStats> {
        self.map.update_models(
            method,
            &self.cfg.fit,
            self.cfg.min_fit_samples,
            0.0,
            now,
            self.cfg.parallel,
        )
    }

    /// Binds if the graph is stable and refits every dirty cell regardless of
    /// the update schedule.
    pub fn flush(&mut self, now: f64) -> Result<TickStats> {
        let transfers = self.map.try_bind(&mut self.graph, &self.tracker, now, &mut self.rng)?;
        let update = self.map.update_models(
            self.cfg.method,
            &self.cfg.fit,
            self.cfg.min_fit_samples,
            0.0,
            now,
            self.cfg.parallel,
        )?;
        Ok(TickStats { transfers, update })
    }

    /// Replays both streams in time order, ticking at every multiple of the
    /// update interval, then flushes at the end time.
    ///
    /// At equal timestamps pose events are applied before observations.
    pub fn replay(&mut self, observations: &[(f64, Observation)], events: &[PoseEvent]) -> Result<ReplayStats> {
        check_sorted(observations.iter().map(|(t, _)| *t), "observations")?;
        check_sorted(events.iter().map(|e| e.time), "pose events")?;
        let interval = self.cfg.update_interval;
        let mut stats = ReplayStats::default();
        let mut next_tick = if interval > 0.0 { interval } else { f64::INFINITY };
        let (mut i, mut j) = (0, 0);
        let mut now = 0.0f64;
        while i < observations.len() || j < events.len() {
            let te = events.get(j).map_or(f64::INFINITY, |e| e.time);
            let to = observations.get(i).map_or(f64::INFINITY, |o| o.0);
            let t = te.min(to);
            while next_tick <= t {
                stats.absorb(self.tick(next_tick)?);
                next_tick += interval;
            }
            now = t;
            if te <= to {
                self.apply_event(&events[j])?;
                j += 1;
            } else {
                self.observe(&observations[i].1)?;
                i += 1;
            }
        }
        stats.absorb(self.flush(now)?);
        stats.end_time = now;
        Ok(stats)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReplayStats {
    pub ticks: usize,
    pub transfers: usize,
    pub refits: usize,
    pub failures: usize,
    pub fit_seconds: Vec<f64>,
    pub end_time: f64,
}

impl ReplayStats {
    fn absorb(&mut self, t: TickStats) {
        self.ticks += 1;
        self.transfers += t.transfers;
        self.refits += t.update.refits;
        self.failures += t.update.failures;
        self.fit_seconds.extend(t.update.fit_seconds);
    }
}

fn check_sorted(times: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for (i, t) in times.enumerate() {
        if !t.is_finite() || t < prev {
            return Err(Error::invalid(format!("{what} not time-ordered at index {i}")));
        }
        prev = t;
    }
    Ok(())
}
