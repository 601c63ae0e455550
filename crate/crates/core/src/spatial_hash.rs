//! Sparse map from 3D positions to dynamics cells.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CylindricalSample, Position3};

/// Floor-quantized integer coordinates of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub ix: i64,
    pub iy: i64,
    pub iz: i64,
}

impl CellKey {
    pub const fn new(ix: i64, iy: i64, iz: i64) -> Self {
        Self { ix, iy, iz }
    }

    /// Center of the cell's box at resolution `delta`.
    pub fn center(&self, delta: f64) -> Position3 {
        Position3 {
            x: (self.ix as f64 + 0.5) * delta,
            y: (self.iy as f64 + 0.5) * delta,
            z: (self.iz as f64 + 0.5) * delta,
        }
    }
}

/// `(⌊x/δ⌋, ⌊y/δ⌋, ⌊z/δ⌋)`.
pub fn key_of(p: &Position3, delta: f64) -> Result<CellKey> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!("resolution must be > 0, got {delta}")));
    }
    p.validate()?;
    let q = |v: f64| -> Result<i64> {
        let f = (v / delta).floor();
        if f.abs() > 9.0e15 {
            return Err(Error::invalid(format!("coordinate {v} out of range at δ={delta}")));
        }
        Ok(f as i64)
    };
    Ok(CellKey::new(q(p.x)?, q(p.y)?, q(p.z)?))
}

/// Anything with a reservoir that the hash map can feed.
pub trait ObservationSink {
    fn push_sample<R: Rng + ?Sized>(&mut self, z: CylindricalSample, rng: &mut R);
}

/// Cells allocated lazily, on first observation.
#[derive(Debug, Clone)]
pub struct SparseCellMap<C> {
    resolution: f64,
    cells: HashMap<CellKey, C>,
}

impl<C: ObservationSink> SparseCellMap<C> {
    pub fn new(resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::invalid(format!("resolution must be > 0, got {resolution}")));
        }
        Ok(Self {
            resolution,
            cells: HashMap::new(),
        })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn key_of(&self, p: &Position3) -> Result<CellKey> {
        key_of(p, self.resolution)
    }

    /// Routes `z` to the cell at `p`, creating it with `make` if absent.
    pub fn observe_with<R: Rng + ?Sized>(
        &mut self,
        p: &Position3,
        z: CylindricalSample,
        rng: &mut R,
        make: impl FnOnce(CellKey) -> C,
    ) -> Result<CellKey> {
        let key = self.key_of(p)?;
        self.cells.entry(key).or_insert_with(|| make(key)).push_sample(z, rng);
        Ok(key)
    }

    pub fn get(&self, key: &CellKey) -> Option<&C> {
        self.cells.get(key)
    }

    pub fn get_mut(&mut self, key: &CellKey) -> Option<&mut C> {
        self.cells.get_mut(key)
    }

    pub fn insert(&mut self, key: CellKey, cell: C) -> Option<C> {
        self.cells.insert(key, cell)
    }

    pub fn remove(&mut self, key: &CellKey) -> Option<C> {
        self.cells.remove(key)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Keys in ascending order.
    pub fn sorted_keys(&self) -> Vec<CellKey> {
        let mut keys: Vec<CellKey> = self.cells.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellKey, &C)> {
        self.cells.iter()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut C> {
        self.cells.values_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::ReservoirBuffer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    impl ObservationSink for ReservoirBuffer {
        fn push_sample<R: Rng + ?Sized>(&mut self, z: CylindricalSample, rng: &mut R) {
            self.push(z, rng);
        }
    }

    fn p(x: f64, y: f64, z: f64) -> Position3 {
        Position3 { x, y, z }
    }

    #[test]
    fn key_examples() {
        assert_eq!(key_of(&p(0.0, 0.0, 0.0), 0.5).unwrap(), CellKey::new(0, 0, 0));
        assert_eq!(key_of(&p(0.49, 0.5, -0.01), 0.5).unwrap(), CellKey::new(0, 1, -1));
        assert!(key_of(&p(f64::NAN, 0.0, 0.0), 0.5).is_err());
        assert!(key_of(&p(0.0, 0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn center_round_trips() {
        let k = CellKey::new(-3, 7, 0);
        assert_eq!(key_of(&k.center(0.3), 0.3).unwrap(), k);
    }

    #[test]
    fn allocation_on_first_observation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut map: SparseCellMap<ReservoirBuffer> = SparseCellMap::new(0.5).unwrap();
        let z = CylindricalSample::at(0.0, 1.0).unwrap();
        let make = |_| ReservoirBuffer::new(10).unwrap();
        map.observe_with(&p(0.1, 0.1, 0.0), z, &mut rng, make).unwrap();
        assert_eq!(map.len(), 1);
        let key = map.observe_with(&p(0.2, 0.4, 0.0), z, &mut rng, make).unwrap();
        assert_eq!(map.len(), 1);
        assert_eq!(map.get(&key).unwrap().total_seen(), 2);
    }

    #[test]
    fn seven_boxes_seven_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut map: SparseCellMap<ReservoirBuffer> = SparseCellMap::new(1.0).unwrap();
        let boxes = [(0, 0), (1, 0), (2, 0), (0, 1), (5, 5), (-1, -1), (-3, 2)];
        let z = CylindricalSample::at(0.0, 1.0).unwrap();
        let mut keys = std::collections::BTreeSet::new();
        for i in 0..1000 {
            let (bx, by) = boxes[i % boxes.len()];
            let q = p(
                bx as f64 + rng.random_range(0.0..1.0),
                by as f64 + rng.random_range(0.0..1.0),
                0.25,
            );
            keys.insert(key_of(&q, 1.0).unwrap());
            map.observe_with(&q, z, &mut rng, |_| ReservoirBuffer::new(5).unwrap())
                .unwrap();
        }
        assert_eq!(keys.len(), 7);
        assert_eq!(map.len(), 7);
    }

    proptest::proptest! {
        #[test]
        fn nearby_points_share_a_key(
            bx in -50i64..50, by in -50i64..50,
            fx in 0.0f64..0.999, fy in 0.0f64..0.999,
            gx in 0.0f64..0.999, gy in 0.0f64..0.999,
        ) {
            let d = 0.5;
            let a = p((bx as f64 + fx) * d, (by as f64 + fy) * d, 0.0);
            let b = p((bx as f64 + gx) * d, (by as f64 + gy) * d, 0.0);
            proptest::prop_assert_eq!(key_of(&a, d).unwrap(), key_of(&b, d).unwrap());
        }
    }
}
