use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::types::{angular_diff_unchecked, wrap_unchecked, CylindricalSample};

use super::{bic_value, em_fit, FitConfig, FitDiagnostics, InitMethod, MeanShiftInfo, SwGmm};

const MAX_SHIFT_ITERS: usize = 500;
/// Convergence threshold as a fraction of the smaller bandwidth.
const SHIFT_TOL: f64 = 1e-5;
/// Modes closer than this fraction of the smaller bandwidth are merged.
pub const MERGE_FRACTION: f64 = 0.5;

/// Converged modes of a mean-shift pass.
#[derive(Debug, Clone)]
pub struct MeanShiftModes {
    /// `(θ, ρ)` of each mode.
    pub modes: Vec<(f64, f64)>,
    pub labels: Vec<usize>,
    pub h_theta: f64,
    pub h_rho: f64,
    pub merge_radius: f64,
    /// Largest per-point iteration count.
    pub iterations: usize,
}

/// Per-dimension Silverman bandwidths `(n^{-1/6} σ̂_θ, n^{-1/6} σ̂_ρ)` for `d = 2`.
///
/// `σ̂_θ` is the circular standard deviation `sqrt(-2 ln R̄)`; `σ̂_ρ` the sample
/// standard deviation. Zero spreads are replaced by `floor`.
pub fn silverman_bandwidths(samples: &[CylindricalSample], floor: f64) -> (f64, f64) {
    let n = samples.len().max(1) as f64;
    let (s, c) = samples
        .iter()
        .fold((0.0, 0.0), |(s, c), z| (s + z.theta.sin(), c + z.theta.cos()));
    let r_bar = (s.hypot(c) / n).clamp(1e-12, 1.0);
    let sd_theta = (-2.0 * r_bar.ln()).max(0.0).sqrt();
    let mean_rho = samples.iter().map(|z| z.rho).sum::<f64>() / n;
    let var_rho = if samples.len() > 1 {
        samples.iter().map(|z| (z.rho - mean_rho).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let sd_rho = var_rho.sqrt();
    // (4 / ((d + 2) n))^(1 / (d + 4)) with d = 2
    let factor = (4.0 / (4.0 * n)).powf(1.0 / 6.0);
    let pick = |sd: f64| {
        let h = factor * sd;
        if h > floor {
            h
        } else {
            floor
        }
    };
    (pick(sd_theta), pick(sd_rho))
}

/// Gaussian-kernel mean shift on the cylinder. `O(n² I)`.
///
/// The angular part of the kernel is wrapped over `±winding` replicas so the
/// kernel density stays smooth at the antipode even for wide bandwidths.
pub fn meanshift_modes(samples: &[CylindricalSample], bandwidth_floor: f64, winding: u32) -> MeanShiftModes {
    let w = winding as i64;
    let (h_theta, h_rho) = silverman_bandwidths(samples, bandwidth_floor);
    let merge_radius = MERGE_FRACTION * h_theta.min(h_rho);
    let tol = SHIFT_TOL * h_theta.min(h_rho);
    let inv_t = 1.0 / (h_theta * h_theta);
    let inv_r = 1.0 / (h_rho * h_rho);

    let mut modes: Vec<(f64, f64)> = Vec::new();
    let mut labels = Vec::with_capacity(samples.len());
    let mut max_iters = 0;

    for start in samples {
        let (mut xt, mut xr) = (start.theta, start.rho);
        let mut it = 0;
        while it < MAX_SHIFT_ITERS {
            it += 1;
            let mut sw = 0.0;
            let mut st = 0.0;
            let mut sr = 0.0;
            for z in samples {
                let d0 = angular_diff_unchecked(z.theta, xt);
                let dr = z.rho - xr;
                let wr = (-0.5 * dr * dr * inv_r).exp();
                for r in -w..=w {
                    let dt = d0 + TAU * r as f64;
                    let k = wr * (-0.5 * dt * dt * inv_t).exp();
                    sw += k;
                    st += k * dt;
                    sr += k * z.rho;
                }
            }
            if sw <= 0.0 {
                break;
            }
            let step_t = st / sw;
            let new_r = sr / sw;
            let step = step_t.hypot(new_r - xr);
            xt = wrap_unchecked(xt + step_t);
            xr = new_r;
            if step < tol {
                break;
            }
        }
        max_iters = max_iters.max(it);
        let found = modes
            .iter()
            .position(|&(mt, mr)| angular_diff_unchecked(mt, xt).hypot(mr - xr) <= merge_radius);
        let label = match found {
            Some(i) => i,
            None => {
                modes.push((xt, xr));
                modes.len() - 1
            }
        };
        labels.push(label);
    }

    MeanShiftModes {
        modes,
        labels,
        h_theta,
        h_rho,
        merge_radius,
        iterations: max_iters,
    }
}

/// Folds modes with too few members (or beyond `k_max`) into the nearest kept
/// mode. Returns the number of kept modes and relabelled assignments.
fn fold_small_modes(ms: &MeanShiftModes, min_members: usize, k_max: usize) -> (usize, Vec<usize>) {
    let mut counts = vec![0usize; ms.modes.len()];
    for &l in &ms.labels {
        counts[l] += 1;
    }
    let mut order: Vec<usize> = (0..ms.modes.len()).collect();
    // largest first, ties by discovery order
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&m| counts[m] >= min_members)
        .take(k_max)
        .collect();
    if kept.is_empty() {
        return (1, vec![0; ms.labels.len()]);
    }
    let remap: Vec<usize> = (0..ms.modes.len())
        .map(|m| {
            if let Some(pos) = kept.iter().position(|&k| k == m) {
                return pos;
            }
            let (mt, mr) = ms.modes[m];
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (pos, &k) in kept.iter().enumerate() {
                let (kt, kr) = ms.modes[k];
                let d = angular_diff_unchecked(kt, mt).hypot(kr - mr);
                if d < best_d {
                    best_d = d;
                    best = pos;
                }
            }
            best
        })
        .collect();
    (kept.len(), ms.labels.iter().map(|&l| remap[l]).collect())
}

/// Mean-shift model-order selection followed by EM refinement.
pub fn meanshift_fit(samples: &[CylindricalSample], cfg: &FitConfig) -> Result<(SwGmm, FitDiagnostics)> {
    cfg.validate()?;
    let n = samples.len();
    if n == 0 || n < cfg.min_samples_per_component {
        return Err(Error::FitFailure(format!("{n} samples is too few for a fit")));
    }
    let ms = meanshift_modes(samples, cfg.cov_floor.sqrt(), cfg.winding);
    let (k, labels) = fold_small_modes(&ms, cfg.min_samples_per_component, cfg.k_max);
    let fit = em_fit(samples, k, &labels, cfg)?;
    let bic = bic_value(fit.model.k(), n, fit.loglik);
    Ok((
        fit.model,
        FitDiagnostics {
            selected_k: k,
            bic_per_k: vec![(k, bic)],
            final_loglik: fit.loglik,
            em_iters_per_k: vec![fit.iters],
            em_clamped_per_k: vec![fit.clamped_iters],
            init_method: InitMethod::MeanShift,
            meanshift: Some(MeanShiftInfo {
                h_theta: ms.h_theta,
                h_rho: ms.h_rho,
                merge_radius: ms.merge_radius,
                raw_modes: ms.modes.len(),
                iterations: ms.iterations,
            }),
        },
    ))
}
