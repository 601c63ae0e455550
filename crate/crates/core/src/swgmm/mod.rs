//! Semi-wrapped Gaussian mixtures on the orientation-speed cylinder.
//!
//! A semi-wrapped Gaussian is a bivariate Gaussian over `(θ, ρ)` whose angular
//! coordinate is wrapped by summing replicas shifted by `2πw` for
//! `w ∈ [-W, W]`. Speed is linear and never wrapped.
//!
//! Fitting runs a BIC sweep over `K = 1..=k_max`, each candidate seeded with
//! K-means++ on the cylinder and refined by EM. A mean-shift initializer is
//! kept for ablation.

mod bic;
mod cov;
mod density;
mod em;
mod kmeanspp;
mod meanshift;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bic::{bic_sweep_fit, bic_value, param_count};
pub use cov::Cov2;
pub use density::{direction_bin_mass, marginal_direction_density, mixture_density, normal_cdf, sw_gaussian_density};
pub use em::{em_fit, EmFit};
pub use kmeanspp::{kmeanspp_init, Seeding};
pub use meanshift::{meanshift_fit, meanshift_modes, silverman_bandwidths, MeanShiftModes};

pub(crate) use cov::PreparedGaussian;

/// Total weight tolerance for a valid mixture.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// One mixture component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwComponent {
    pub weight: f64,
    pub mu_theta: f64,
    pub mu_rho: f64,
    pub sigma: Cov2,
}

impl SwComponent {
    pub(crate) fn prepare(&self) -> Result<PreparedGaussian> {
        PreparedGaussian::new(self.mu_theta, self.mu_rho, &self.sigma)
    }
}

/// A fitted semi-wrapped Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwGmm {
    pub components: Vec<SwComponent>,
    pub winding: u32,
    pub sample_count_at_fit: usize,
}

impl SwGmm {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Checks weights, covariances and component count.
    pub fn validate(&self, k_max: usize) -> Result<()> {
        if self.components.is_empty() || self.components.len() > k_max {
            return Err(Error::invalid(format!(
                "mixture must have 1..={k_max} components, has {}",
                self.components.len()
            )));
        }
        let sum: f64 = self.components.iter().map(|c| c.weight).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("weights sum to {sum}")));
        }
        for c in &self.components {
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::invalid(format!("weight {} out of (0,1]", c.weight)));
            }
            if !c.sigma.is_positive_definite() {
                return Err(Error::NumericalDegeneracy(format!(
                    "component covariance not PD: {:?}",
                    c.sigma
                )));
            }
        }
        Ok(())
    }

    /// Probability mass of each of `bins` equal angular bins, bin 0 starting at `-π`.
    pub fn bin_masses(&self, bins: usize) -> Vec<f64> {
        (0..bins).map(|b| direction_bin_mass(b, bins, self)).collect()
    }
}

/// How the number of components was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitMethod {
    BicKmeanspp,
    MeanShift,
}

/// Fitting parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub k_max: usize,
    pub winding: u32,
    pub em_max_iters: usize,
    /// Absolute change in total log-likelihood that stops EM.
    pub em_loglik_tol: f64,
    pub min_samples_per_component: usize,
    pub cov_floor: f64,
    pub cs_epsilon: f64,
    pub rng_seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k_max: 5,
            winding: 1,
            em_max_iters: 100,
            em_loglik_tol: 1e-4,
            min_samples_per_component: 3,
            cov_floor: 1e-4,
            cs_epsilon: 1e-3,
            rng_seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max < 1 {
            return Err(Error::invalid("k_max must be >= 1"));
        }
        if self.em_max_iters < 1 {
            return Err(Error::invalid("em_max_iters must be >= 1"));
        }
        if self.min_samples_per_component < 1 {
            return Err(Error::invalid("min_samples_per_component must be >= 1"));
        }
        for (name, v) in [
            ("em_loglik_tol", self.em_loglik_tol),
            ("cov_floor", self.cov_floor),
            ("cs_epsilon", self.cs_epsilon),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.cs_epsilon >= 1.0 {
            return Err(Error::invalid("cs_epsilon must be < 1"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            rng_seed: seed,
            ..self.clone()
        }
    }
}

/// Mean-shift bookkeeping kept for ablation reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanShiftInfo {
    pub h_theta: f64,
    pub h_rho: f64,
    pub merge_radius: f64,
    /// Modes found before small modes were folded into their neighbours.
    pub raw_modes: usize,
    pub iterations: usize,
}

/// What happened during a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub selected_k: usize,
    pub bic_per_k: Vec<(usize, f64)>,
    pub final_loglik: f64,
    pub em_iters_per_k: Vec<usize>,
    /// EM steps per candidate where covariance regularization was active.
    pub em_clamped_per_k: Vec<usize>,
    pub init_method: InitMethod,
    pub meanshift: Option<MeanShiftInfo>,
}

/// Pluggable per-cell fitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    #[default]
    Bic,
    MeanShift,
}

impl FitMethod {
    pub fn fit(self, samples: &[crate::types::CylindricalSample], cfg: &FitConfig) -> Result<(SwGmm, FitDiagnostics)> {
        match self {
            FitMethod::Bic => bic_sweep_fit(samples, cfg),
            FitMethod::MeanShift => meanshift_fit(samples, cfg),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FitMethod::Bic => "bic",
            FitMethod::MeanShift => "meanshift",
        }
    }
}

impl std::str::FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bic" => Ok(FitMethod::Bic),
            "meanshift" | "mean-shift" => Ok(FitMethod::MeanShift),
            other => Err(Error::invalid(format!("unknown fit method {other:?}"))),
        }
    }
}
