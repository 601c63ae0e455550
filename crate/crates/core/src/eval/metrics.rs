//! Mean log predictive density and mean predictive probability.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{bin_of, DirHistogram};
use crate::simulator::Detection;
use crate::swgmm::{direction_bin_mass, marginal_direction_density, SwGmm};
use crate::types::Position3;

/// Floor applied to continuous densities before taking logs.
pub const CONTINUOUS_DENSITY_FLOOR: f64 = 1e-300;

/// Directional prediction at a location. `None` means the location is uncovered.
pub trait DirectionalPredictor: Sync {
    fn density(&self, p: &Position3, theta: f64) -> Option<f64>;
    fn bin_mass(&self, p: &Position3, bin: usize, bins: usize) -> Option<f64>;
}

/// The same density everywhere: `1/(2π)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPredictor;

impl DirectionalPredictor for UniformPredictor {
    fn density(&self, _: &Position3, _: f64) -> Option<f64> {
        Some(1.0 / TAU)
    }

    fn bin_mass(&self, _: &Position3, _: usize, bins: usize) -> Option<f64> {
        Some(1.0 / bins as f64)
    }
}

/// Mass of the truncated replica sum that falls on `[-π, π)`. Equals 1 to
/// ~1e-9 for `σ_θθ ≤ 1` at `W = 1`, and drops slightly for wider components.
pub fn circle_mass(model: &SwGmm) -> f64 {
    direction_bin_mass(0, 1, model)
}

/// Marginal direction density renormalized to the circle, then floored.
pub fn swgmm_density(model: &SwGmm, theta: f64) -> f64 {
    (marginal_direction_density(theta, model) / circle_mass(model)).max(CONTINUOUS_DENSITY_FLOOR)
}

/// Bin mass renormalized so the bins of one model sum to 1.
pub fn swgmm_bin_mass(model: &SwGmm, bin: usize, bins: usize) -> f64 {
    direction_bin_mass(bin, bins, model) / circle_mass(model)
}

/// Bin mass under a histogram evaluated with `bins` bins. Only defined when
/// the histogram itself has `bins` bins.
pub fn histogram_bin_mass(h: &DirHistogram, bin: usize, bins: usize) -> Option<f64> {
    (h.bins() == bins).then(|| h.bin_prob(bin))
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Overall and covered-only MLPD/MPP over one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub n_test: usize,
    pub covered_points: usize,
    pub coverage_fraction: f64,
    pub mlpd_overall: f64,
    /// `None` when no test point is covered.
    pub mlpd_covered: Option<f64>,
    pub mpp_overall: f64,
    pub mpp_covered: Option<f64>,
}

/// Scores every test point once. Uncovered points get `1/(2π)` and `1/B` in
/// the overall variants and are skipped in the covered-only variants.
pub fn score<P: DirectionalPredictor + ?Sized>(test: &[Detection], predictor: &P, bins: usize) -> Result<Scores> {
    if test.is_empty() {
        return Err(Error::UndefinedMetric("empty test set".into()));
    }
    if bins == 0 {
        return Err(Error::invalid("bins must be >= 1"));
    }
    let uniform_log = -(TAU.ln());
    let uniform_mass = 1.0 / bins as f64;
    let mut log_all = KahanSum::default();
    let mut log_cov = KahanSum::default();
    let mut mass_cov = KahanSum::default();
    let mut covered = 0usize;
    for d in test {
        let b = bin_of(d.theta, bins);
        match (
            predictor.density(&d.position, d.theta),
            predictor.bin_mass(&d.position, b, bins),
        ) {
            (Some(dens), Some(mass)) => {
                let l = dens.ln();
                log_all.add(l);
                log_cov.add(l);
                mass_cov.add(mass);
                covered += 1;
            }
            _ => log_all.add(uniform_log),
        }
    }
    let n = test.len() as f64;
    let frac = covered as f64 / n;
    let (mlpd_covered, mpp_covered) = if covered > 0 {
        (
            Some(log_cov.value() / covered as f64),
            Some(mass_cov.value() / covered as f64),
        )
    } else {
        (None, None)
    };
    // overall MPP is assembled from the covered mean so the convex
    // combination identity holds by construction
    let mpp_overall = match mpp_covered {
        Some(m) => frac * m + (1.0 - frac) * uniform_mass,
        None => uniform_mass,
    };
    Ok(Scores {
        n_test: test.len(),
        covered_points: covered,
        coverage_fraction: frac,
        mlpd_overall: if covered == test.len() {
            mlpd_covered.expect("all covered")
        } else {
            log_all.value() / n
        },
        mlpd_covered,
        mpp_overall: if covered == test.len() {
            mpp_covered.expect("all covered")
        } else {
            mpp_overall
        },
        mpp_covered,
    })
}

/// Mean log predictive density. With `uniform_fallback` uncovered points score
/// `-ln 2π`; without it they are excluded.
pub fn mlpd<P: DirectionalPredictor + ?Sized>(
    test: &[Detection],
    predictor: &P,
    uniform_fallback: bool,
) -> Result<f64> {
    let s = score(test, predictor, 1)?;
    if uniform_fallback {
        Ok(s.mlpd_overall)
    } else {
        s.mlpd_covered
            .ok_or_else(|| Error::UndefinedMetric("no test point is covered".into()))
    }
}

/// Mean predictive probability over `bins` bins. With `uniform_fallback`
/// uncovered points score `1/B`; without it they are excluded.
pub fn mpp<P: DirectionalPredictor + ?Sized>(
    test: &[Detection],
    predictor: &P,
    bins: usize,
    uniform_fallback: bool,
) -> Result<f64> {
    let s = score(test, predictor, bins)?;
    if uniform_fallback {
        Ok(s.mpp_overall)
    } else {
        s.mpp_covered
            .ok_or_else(|| Error::UndefinedMetric("no test point is covered".into()))
    }
}
