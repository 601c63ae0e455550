//! Discrete directional histogram baseline.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 8;
pub const MAX_BINS: usize = 360;
/// Density assigned to zero-count bins.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Bin of `theta ∈ [-π, π)` among `bins` equal bins, bin 0 starting at `-π`.
#[inline]
pub fn bin_of(theta: f64, bins: usize) -> usize {
    let b = ((theta + PI) * bins as f64 / TAU).floor();
    if b < 0.0 {
        0
    } else {
        (b as usize).min(bins - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl Default for DirHistogram {
    fn default() -> Self {
        Self::new(DEFAULT_BINS).expect("default bin count is valid")
    }
}

impl DirHistogram {
    pub fn new(bins: usize) -> Result<Self> {
        if bins == 0 || bins > MAX_BINS {
            return Err(Error::invalid(format!("bins must be in 1..={MAX_BINS}, got {bins}")));
        }
        Ok(Self {
            counts: vec![0; bins],
            total: 0,
        })
    }

    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let mut h = Self::new(counts.len())?;
        h.total = counts.iter().sum();
        h.counts = counts;
        Ok(h)
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn observe(&mut self, theta: f64) {
        let b = bin_of(theta, self.counts.len());
        self.counts[b] += 1;
        self.total += 1;
    }

    /// Normalized probability of bin `b`; uniform when empty.
    pub fn bin_prob(&self, b: usize) -> f64 {
        if self.total == 0 {
            return 1.0 / self.counts.len() as f64;
        }
        self.counts.get(b).map_or(0.0, |&c| c as f64 / self.total as f64)
    }

    /// Piecewise-constant density `P_b / Δθ`, floored at [`DENSITY_FLOOR`].
    pub fn density(&self, theta: f64) -> f64 {
        let bins = self.counts.len();
        let p = self.bin_prob(bin_of(theta, bins));
        (p * bins as f64 / TAU).max(DENSITY_FLOOR)
    }

    pub fn merge(&mut self, other: &DirHistogram) -> Result<()> {
        if other.counts.len() != self.counts.len() {
            return Err(Error::invalid("cannot merge histograms with different bin counts"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }
}
