use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::CylindricalSample;

use super::{em_fit, kmeanspp_init, FitConfig, FitDiagnostics, InitMethod, SwGmm};

/// Free parameters of a `k`-component mixture on the cylinder: two means, three
/// covariance entries and one weight per component, less the weight constraint.
pub const fn param_count(k: usize) -> usize {
    6 * k - 1
}

/// `BIC = k_p ln n − 2 L`.
pub fn bic_value(k: usize, n: usize, loglik: f64) -> f64 {
    param_count(k) as f64 * (n as f64).ln() - 2.0 * loglik
}

/// Fits every feasible `K = 1..=k_max` and keeps the BIC minimizer (smaller `K` on ties).
///
/// A candidate is feasible when `n >= K * min_samples_per_component`. All
/// candidates draw from one generator seeded with `cfg.rng_seed`, in order of `K`.
pub fn bic_sweep_fit(samples: &[CylindricalSample], cfg: &FitConfig) -> Result<(SwGmm, FitDiagnostics)> {
    cfg.validate()?;
    let n = samples.len();
    if n < cfg.min_samples_per_component {
        return Err(Error::FitFailure(format!(
            "{n} samples is below the minimum of {}",
            cfg.min_samples_per_component
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let mut best: Option<(f64, usize, SwGmm, f64)> = None;
    let mut bic_per_k = Vec::new();
    let mut em_iters_per_k = Vec::new();
    let mut em_clamped_per_k = Vec::new();

    for k in 1..=cfg.k_max {
        if n < k * cfg.min_samples_per_component {
            break;
        }
        let seeding = kmeanspp_init(samples, k, &mut rng)?;
        let fit = match em_fit(samples, k, &seeding.labels, cfg) {
            Ok(f) => f,
            Err(e) => {
                log::debug!("BIC candidate K={k} failed: {e}");
                continue;
            }
        };
        let bic = bic_value(fit.model.k(), n, fit.loglik);
        bic_per_k.push((k, bic));
        em_iters_per_k.push(fit.iters);
        em_clamped_per_k.push(fit.clamped_iters);
        let better = match &best {
            None => true,
            Some((b, ..)) => bic < *b,
        };
        if better {
            best = Some((bic, k, fit.model, fit.loglik));
        }
    }

    let (_, selected_k, model, final_loglik) =
        best.ok_or_else(|| Error::FitFailure("no feasible candidate K".into()))?;
    Ok((
        model,
        FitDiagnostics {
            selected_k,
            bic_per_k,
            final_loglik,
            em_iters_per_k,
            em_clamped_per_k,
            init_method: InitMethod::BicKmeanspp,
            meanshift: None,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swgmm::testutil::blob;
    use crate::types::angular_diff;
    use std::f64::consts::PI;

    #[test]
    fn parameter_counts() {
        assert_eq!(param_count(1), 5);
        assert_eq!(param_count(2), 11);
        assert_eq!(param_count(3), 17);
    }

    #[test]
    fn unimodal_selects_one() {
        let s = blob(200, 0.5, 1.2, 0.1, 0.1, 7);
        let (m, d) = bic_sweep_fit(&s, &FitConfig::default()).unwrap();
        assert_eq!(d.selected_k, 1);
        assert_eq!(m.k(), 1);
        let b1 = d.bic_per_k[0].1;
        assert!(d.bic_per_k[1..].iter().all(|(_, b)| *b > b1));
    }

    #[test]
    fn bimodal_selects_two() {
        let mut s = blob(100, -PI / 2.0, 1.0, 0.1, 0.1, 8);
        s.extend(blob(100, PI / 2.0, 1.0, 0.1, 0.1, 9));
        let (m, d) = bic_sweep_fit(&s, &FitConfig::default()).unwrap();
        assert_eq!(d.selected_k, 2);
        assert_eq!(m.k(), 2);
    }

    #[test]
    fn selected_is_argmin() {
        let mut s = blob(80, 0.0, 1.0, 0.3, 0.2, 1);
        s.extend(blob(40, 2.0, 0.6, 0.2, 0.2, 2));
        let (_, d) = bic_sweep_fit(&s, &FitConfig::default()).unwrap();
        let (k_min, _) = d
            .bic_per_k
            .iter()
            .copied()
            .fold((0, f64::INFINITY), |acc, (k, b)| if b < acc.1 { (k, b) } else { acc });
        assert_eq!(d.selected_k, k_min);
    }

    #[test]
    fn candidate_feasibility_limits_the_sweep() {
        let s = blob(7, 0.0, 1.0, 0.3, 0.2, 3);
        let (_, d) = bic_sweep_fit(&s, &FitConfig::default()).unwrap();
        assert_eq!(d.bic_per_k.len(), 2);
        assert!(bic_sweep_fit(&s[..2], &FitConfig::default()).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let mut s = blob(90, 1.0, 1.0, 0.2, 0.2, 5);
        s.extend(blob(90, -1.5, 0.7, 0.2, 0.2, 6));
        let cfg = FitConfig {
            rng_seed: 99,
            ..FitConfig::default()
        };
        let a = bic_sweep_fit(&s, &cfg).unwrap();
        let b = bic_sweep_fit(&s, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rotation_equivariance() {
        let mut s = blob(100, 0.4, 1.0, 0.08, 0.1, 11);
        s.extend(blob(100, 2.6, 0.6, 0.08, 0.1, 12));
        let cfg = FitConfig::default();
        let (m0, d0) = bic_sweep_fit(&s, &cfg).unwrap();
        let shift = 1.3;
        let rotated: Vec<_> = s
            .iter()
            .map(|z| CylindricalSample::at(z.theta + shift, z.rho).unwrap())
            .collect();
        let (m1, d1) = bic_sweep_fit(&rotated, &cfg).unwrap();
        assert_eq!(d0.selected_k, d1.selected_k);
        for ((_, a), (_, b)) in d0.bic_per_k.iter().zip(&d1.bic_per_k) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        for (a, b) in m0.components.iter().zip(&m1.components) {
            assert!(angular_diff(b.mu_theta, a.mu_theta + shift).unwrap().abs() < 1e-6);
            assert!((a.mu_rho - b.mu_rho).abs() < 1e-6);
        }
    }
}
