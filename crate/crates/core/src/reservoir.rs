//! Fixed-capacity uniform subsample of an observation stream (Algorithm R).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::CylindricalSample;

pub const DEFAULT_CAPACITY: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirBuffer {
    capacity: usize,
    total_seen: u64,
    entries: Vec<CylindricalSample>,
}

impl Default for ReservoirBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY).expect("default capacity is positive")
    }
}

impl ReservoirBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("reservoir capacity must be > 0"));
        }
        Ok(Self {
            capacity,
            total_seen: 0,
            entries: Vec::with_capacity(capacity.min(1024)),
        })
    }

    /// Rebuilds a buffer from stored parts, checking `|entries| = min(T, M)`.
    pub fn from_parts(capacity: usize, total_seen: u64, entries: Vec<CylindricalSample>) -> Result<Self> {
        let mut buf = Self::new(capacity)?;
        let expect = total_seen.min(capacity as u64) as usize;
        if entries.len() != expect {
            return Err(Error::invalid(format!(
                "reservoir holds {} entries but min(T={total_seen}, M={capacity}) = {expect}",
                entries.len()
            )));
        }
        buf.total_seen = total_seen;
        buf.entries = entries;
        Ok(buf)
    }

    /// Checks `|entries| = min(T, M)` and the sample invariants, for buffers
    /// that arrived through deserialization.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::from_parts(self.capacity, self.total_seen, self.entries.clone())?;
        for z in &rebuilt.entries {
            if CylindricalSample::new(z.theta, z.rho, z.timestamp)? != *z {
                return Err(Error::invalid(format!("stored angle {} is not wrapped", z.theta)));
            }
        }
        Ok(())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_seen(&self) -> u64 {
        self.total_seen
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CylindricalSample] {
        &self.entries
    }

    /// Appends while not full; afterwards replaces a uniform slot with probability `M/T`.
    pub fn push<R: Rng + ?Sized>(&mut self, z: CylindricalSample, rng: &mut R) {
        self.total_seen += 1;
        if self.entries.len() < self.capacity {
            self.entries.push(z);
            return;
        }
        let j = rng.random_range(0..self.total_seen);
        if (j as usize) < self.capacity {
            self.entries[j as usize] = z;
        }
    }

    pub fn snapshot(&self) -> Vec<CylindricalSample> {
        self.entries.clone()
    }

    /// Weighted union of two reservoirs over the concatenated stream.
    ///
    /// Each of the `min(T_a + T_b, M)` output slots is filled from `a` with
    /// probability `T_a / (T_a + T_b)`, otherwise from `b`, drawing without
    /// replacement inside each source.
    pub fn merge<R: Rng + ?Sized>(a: &ReservoirBuffer, b: &ReservoirBuffer, rng: &mut R) -> Result<ReservoirBuffer> {
        if a.capacity != b.capacity {
            return Err(Error::invalid(format!(
                "cannot merge reservoirs of capacity {} and {}",
                a.capacity, b.capacity
            )));
        }
        if b.total_seen == 0 {
            return Ok(a.clone());
        }
        if a.total_seen == 0 {
            return Ok(b.clone());
        }
        let total = a.total_seen + b.total_seen;
        let target = total.min(a.capacity as u64) as usize;
        let mut out = ReservoirBuffer::new(a.capacity)?;
        out.total_seen = total;
        if a.entries.len() + b.entries.len() <= target {
            out.entries.extend_from_slice(&a.entries);
            out.entries.extend_from_slice(&b.entries);
            return Ok(out);
        }

        let p_a = a.total_seen as f64 / total as f64;
        let mut pool_a = a.entries.clone();
        let mut pool_b = b.entries.clone();
        while out.entries.len() < target {
            let from_a = if pool_a.is_empty() {
                false
            } else if pool_b.is_empty() {
                true
            } else {
                rng.random::<f64>() < p_a
            };
            let pool = if from_a { &mut pool_a } else { &mut pool_b };
            let i = rng.random_range(0..pool.len());
            out.entries.push(pool.swap_remove(i));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tagged(i: usize) -> CylindricalSample {
        CylindricalSample {
            theta: 0.0,
            rho: 0.0,
            timestamp: i as f64,
        }
    }

    #[test]
    fn fills_in_order_until_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut buf = ReservoirBuffer::new(5).unwrap();
        for i in 0..5 {
            buf.push(tagged(i), &mut rng);
        }
        let ts: Vec<f64> = buf.entries().iter().map(|z| z.timestamp).collect();
        assert_eq!(ts, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(buf.total_seen(), 5);
    }

    #[test]
    fn replacement_probability_after_full() {
        // at T = M the next push replaces with probability M / (M + 1)
        let m = 4;
        let trials = 20_000;
        let mut replaced = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..trials {
            let mut buf = ReservoirBuffer::new(m).unwrap();
            for i in 0..m {
                buf.push(tagged(i), &mut rng);
            }
            buf.push(tagged(99), &mut rng);
            if buf.entries().iter().any(|z| z.timestamp == 99.0) {
                replaced += 1;
            }
        }
        let p = m as f64 / (m as f64 + 1.0);
        let sd = (p * (1.0 - p) / trials as f64).sqrt();
        let got = replaced as f64 / trials as f64;
        assert!((got - p).abs() < 4.0 * sd, "{got} vs {p}");
    }

    #[test]
    fn len_is_min_of_seen_and_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut buf = ReservoirBuffer::new(7).unwrap();
        for i in 0..30 {
            buf.push(tagged(i), &mut rng);
            assert_eq!(buf.len() as u64, buf.total_seen().min(7));
        }
    }

    #[test]
    fn snapshot_is_a_copy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut buf = ReservoirBuffer::new(3).unwrap();
        assert!(buf.snapshot().is_empty());
        buf.push(tagged(0), &mut rng);
        buf.push(tagged(1), &mut rng);
        let snap = buf.snapshot();
        assert_eq!(snap.len(), 2);
        buf.push(tagged(2), &mut rng);
        assert_eq!(snap.len(), 2);
    }

    #[test]
    fn merge_identity_and_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut a = ReservoirBuffer::new(10).unwrap();
        for i in 0..4 {
            a.push(tagged(i), &mut rng);
        }
        let empty = ReservoirBuffer::new(10).unwrap();
        assert_eq!(ReservoirBuffer::merge(&a, &empty, &mut rng).unwrap(), a);
        assert_eq!(ReservoirBuffer::merge(&empty, &a, &mut rng).unwrap(), a);
        let both = ReservoirBuffer::merge(&a, &a, &mut rng).unwrap();
        assert_eq!(both.len(), 8);
        assert_eq!(both.total_seen(), 8);
        let other = ReservoirBuffer::new(11).unwrap();
        assert!(ReservoirBuffer::merge(&a, &other, &mut rng).is_err());
    }

    #[test]
    fn merge_balanced_sources() {
        let m = 20;
        let trials = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut a = ReservoirBuffer::new(m).unwrap();
        let mut b = ReservoirBuffer::new(m).unwrap();
        for i in 0..50 {
            a.push(tagged(i), &mut rng);
            b.push(tagged(1000 + i), &mut rng);
        }
        let mut from_a = 0u64;
        for _ in 0..trials {
            let c = ReservoirBuffer::merge(&a, &b, &mut rng).unwrap();
            assert_eq!(c.total_seen(), 100);
            assert_eq!(c.len(), m);
            from_a += c.entries().iter().filter(|z| z.timestamp < 1000.0).count() as u64;
        }
        let n = (trials * m) as f64;
        let sd = (n * 0.25).sqrt();
        assert!((from_a as f64 - n / 2.0).abs() < 3.0 * sd);
    }

    #[test]
    fn from_parts_checks_length() {
        assert!(ReservoirBuffer::from_parts(3, 5, vec![tagged(0); 2]).is_err());
        assert!(ReservoirBuffer::from_parts(3, 5, vec![tagged(0); 3]).is_ok());
        assert!(ReservoirBuffer::new(0).is_err());
    }
}
