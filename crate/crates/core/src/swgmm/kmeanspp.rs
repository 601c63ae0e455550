use rand::Rng;

use crate::error::{Error, Result};
use crate::types::{circular_linear_dist2, CylindricalSample};

/// K-means++ seeding result: chosen center indices and per-sample labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeding {
    pub centers: Vec<usize>,
    pub labels: Vec<usize>,
}

/// D²-weighted seeding on the cylinder, then nearest-center labelling.
///
/// The first center is uniform over samples; each further center is drawn with
/// probability proportional to the squared circular-linear distance to its
/// nearest existing center. If every remaining sample coincides with a center
/// the next center is drawn uniformly among unchosen samples.
pub fn kmeanspp_init<R: Rng + ?Sized>(samples: &[CylindricalSample], k: usize, rng: &mut R) -> Result<Seeding> {
    let n = samples.len();
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds sample count {n}")));
    }

    let mut centers = Vec::with_capacity(k);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    centers.push(first);
    chosen[first] = true;

    let mut nearest: Vec<f64> = samples
        .iter()
        .map(|z| circular_linear_dist2(z, &samples[first]))
        .collect();

    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 && total.is_finite() {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, d) in nearest.iter().enumerate() {
                if *d <= 0.0 {
                    continue;
                }
                acc += d;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        centers.push(next);
        chosen[next] = true;
        for (d, z) in nearest.iter_mut().zip(samples) {
            let dn = circular_linear_dist2(z, &samples[next]);
            if dn < *d {
                *d = dn;
            }
        }
    }

    let labels = samples
        .iter()
        .enumerate()
        .map(|(i, z)| {
            // a chosen center always labels itself, even among duplicates
            if let Some(pos) = centers.iter().position(|&c| c == i) {
                return pos;
            }
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (ci, &c) in centers.iter().enumerate() {
                let d = circular_linear_dist2(z, &samples[c]);
                if d < best_d {
                    best_d = d;
                    best = ci;
                }
            }
            best
        })
        .collect();

    Ok(Seeding { centers, labels })
}
