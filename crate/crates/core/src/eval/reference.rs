//! Fine-grid histogram map built from the full training stream.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::histogram::DirHistogram;
use crate::simulator::Detection;
use crate::spatial_hash::{key_of, CellKey};
use crate::types::Position3;

use super::metrics::{histogram_bin_mass, DirectionalPredictor};

pub const REFERENCE_RESOLUTION: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct ReferenceMoD {
    pub resolution: f64,
    pub bins: usize,
    pub grid: HashMap<CellKey, DirHistogram>,
}

impl ReferenceMoD {
    /// Empty cells predict `1/B`.
    pub fn bin_prob(&self, p: &Position3, b: usize) -> f64 {
        match key_of(p, self.resolution).ok().and_then(|k| self.grid.get(&k)) {
            Some(h) => h.bin_prob(b),
            None => 1.0 / self.bins as f64,
        }
    }

    fn cell(&self, p: &Position3) -> Option<&DirHistogram> {
        key_of(p, self.resolution).ok().and_then(|k| self.grid.get(&k))
    }
}

pub fn build_reference(train: &[Detection], bins: usize) -> Result<ReferenceMoD> {
    if train.is_empty() {
        return Err(Error::invalid("reference map needs a non-empty training stream"));
    }
    DirHistogram::new(bins)?;
    let mut grid: HashMap<CellKey, DirHistogram> = HashMap::new();
    for d in train {
        let k = key_of(&d.position, REFERENCE_RESOLUTION)?;
        grid.entry(k)
            .or_insert_with(|| DirHistogram::new(bins).expect("bins checked"))
            .observe(d.theta);
    }
    Ok(ReferenceMoD {
        resolution: REFERENCE_RESOLUTION,
        bins,
        grid,
    })
}

impl DirectionalPredictor for ReferenceMoD {
    fn density(&self, p: &Position3, theta: f64) -> Option<f64> {
        self.cell(p).map(|h| h.density(theta))
    }

    fn bin_mass(&self, p: &Position3, bin: usize, bins: usize) -> Option<f64> {
        self.cell(p).and_then(|h| histogram_bin_mass(h, bin, bins))
    }
}
