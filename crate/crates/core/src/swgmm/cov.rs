use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric 2×2 covariance over `(θ, ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    /// σ_θθ, rad²
    pub tt: f64,
    /// σ_θρ, rad·m/s
    pub tr: f64,
    /// σ_ρρ, (m/s)²
    pub rr: f64,
}

impl Cov2 {
    pub const fn new(tt: f64, tr: f64, rr: f64) -> Self {
        Self { tt, tr, rr }
    }

    pub const fn diag(tt: f64, rr: f64) -> Self {
        Self { tt, tr: 0.0, rr }
    }

    pub fn identity() -> Self {
        Self::diag(1.0, 1.0)
    }

    pub fn det(&self) -> f64 {
        self.tt * self.rr - self.tr * self.tr
    }

    /// Cholesky factorization succeeds iff the matrix is positive-definite.
    pub fn cholesky(&self) -> Option<(f64, f64, f64)> {
        if !(self.tt > 0.0) || !self.tt.is_finite() {
            return None;
        }
        let l00 = self.tt.sqrt();
        let l10 = self.tr / l00;
        let rem = self.rr - l10 * l10;
        if !(rem > 0.0) || !rem.is_finite() {
            return None;
        }
        Some((l00, l10, rem.sqrt()))
    }

    pub fn is_positive_definite(&self) -> bool {
        self.cholesky().is_some()
    }

    /// Clamps the diagonal to `floor` and bounds the off-diagonal by
    /// `(1 - eps) * sqrt(σ_θθ σ_ρρ)`. Returns true if anything changed.
    pub fn regularize(&mut self, floor: f64, eps: f64) -> bool {
        let mut changed = false;
        if !(self.tt >= floor) {
            self.tt = floor;
            changed = true;
        }
        if !(self.rr >= floor) {
            self.rr = floor;
            changed = true;
        }
        let bound = (1.0 - eps) * (self.tt * self.rr).sqrt();
        if !self.tr.is_finite() {
            self.tr = 0.0;
            changed = true;
        } else if self.tr.abs() > bound {
            self.tr = bound.copysign(self.tr);
            changed = true;
        }
        changed
    }
}

/// A bivariate Gaussian with its inverse covariance and log normalizer cached.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PreparedGaussian {
    pub mu_t: f64,
    pub mu_r: f64,
    inv_tt: f64,
    inv_tr: f64,
    inv_rr: f64,
    /// `-ln(2π) - ½ ln|Σ|`
    pub log_norm: f64,
}

impl PreparedGaussian {
    pub fn new(mu_t: f64, mu_r: f64, cov: &Cov2) -> Result<Self> {
        let det = cov.det();
        if !cov.is_positive_definite() || !(det > 0.0) {
            return Err(Error::NumericalDegeneracy(format!(
                "covariance is not positive-definite: {cov:?}"
            )));
        }
        Ok(Self {
            mu_t,
            mu_r,
            inv_tt: cov.rr / det,
            inv_tr: -cov.tr / det,
            inv_rr: cov.tt / det,
            log_norm: -(TAU.ln()) - 0.5 * det.ln(),
        })
    }

    /// Log density of the (unwrapped) Gaussian at `(t, r)`.
    #[inline]
    pub fn log_pdf(&self, t: f64, r: f64) -> f64 {
        let dt = t - self.mu_t;
        let dr = r - self.mu_r;
        let q = self.inv_tt * dt * dt + 2.0 * self.inv_tr * dt * dr + self.inv_rr * dr * dr;
        self.log_norm - 0.5 * q
    }
}
