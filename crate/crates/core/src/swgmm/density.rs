use std::f64::consts::{PI, TAU};

use crate::error::Result;
use crate::types::CylindricalSample;

use super::{SwComponent, SwGmm};

const LN_SQRT_TAU: f64 = 0.918_938_533_204_672_8;

/// Semi-wrapped Gaussian density: the sum of `2W + 1` shifted bivariate Gaussians.
pub fn sw_gaussian_density(z: &CylindricalSample, comp: &SwComponent, winding: u32) -> Result<f64> {
    let g = comp.prepare()?;
    let w = winding as i64;
    Ok((-w..=w).map(|k| g.log_pdf(z.theta + TAU * k as f64, z.rho).exp()).sum())
}

/// Full mixture density `Σ α_k N_sw(z | μ_k, Σ_k)`.
pub fn mixture_density(z: &CylindricalSample, model: &SwGmm) -> f64 {
    model
        .components
        .iter()
        .map(|c| {
            // components of a validated model are PD
            c.weight * sw_gaussian_density(z, c, model.winding).unwrap_or(0.0)
        })
        .sum()
}

/// Univariate normal density.
#[inline]
fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / var - LN_SQRT_TAU - 0.5 * var.ln()).exp()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Mass of N(mean, var) on `[lo, hi]`, using the upper tail when both ends are positive
/// so the difference does not cancel.
fn interval_mass(lo: f64, hi: f64, mean: f64, var: f64) -> f64 {
    let sd = var.sqrt();
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    if a > 0.0 {
        normal_cdf(-a) - normal_cdf(-b)
    } else {
        normal_cdf(b) - normal_cdf(a)
    }
}

/// Direction marginal: speed integrated out of each component analytically.
pub fn marginal_direction_density(theta: f64, model: &SwGmm) -> f64 {
    let w = model.winding as i64;
    model
        .components
        .iter()
        .map(|c| {
            c.weight
                * (-w..=w)
                    .map(|k| normal_pdf(theta + TAU * k as f64, c.mu_theta, c.sigma.tt))
                    .sum::<f64>()
        })
        .sum()
}

/// Mass of angular bin `bin` out of `bins` equal bins partitioning `[-π, π)`.
pub fn direction_bin_mass(bin: usize, bins: usize, model: &SwGmm) -> f64 {
    if bins == 0 || bin >= bins {
        return 0.0;
    }
    let width = TAU / bins as f64;
    let lo = -PI + width * bin as f64;
    let hi = if bin + 1 == bins { PI } else { lo + width };
    let w = model.winding as i64;
    model
        .components
        .iter()
        .map(|c| {
            c.weight
                * (-w..=w)
                    .map(|k| {
                        let shift = TAU * k as f64;
                        interval_mass(lo + shift, hi + shift, c.mu_theta, c.sigma.tt)
                    })
                    .sum::<f64>()
        })
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swgmm::Cov2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn comp(w: f64, t: f64, r: f64, sigma: Cov2) -> SwComponent {
        SwComponent {
            weight: w,
            mu_theta: t,
            mu_rho: r,
            sigma,
        }
    }

    fn single(t: f64, r: f64, sigma: Cov2, winding: u32) -> SwGmm {
        SwGmm {
            components: vec![comp(1.0, t, r, sigma)],
            winding,
            sample_count_at_fit: 0,
        }
    }

    /// Independent oracle: direct bivariate normal formula, no caching.
    fn bvn(t: f64, r: f64, mt: f64, mr: f64, s: &Cov2) -> f64 {
        let det = s.tt * s.rr - s.tr * s.tr;
        let dt = t - mt;
        let dr = r - mr;
        let q = (s.rr * dt * dt - 2.0 * s.tr * dt * dr + s.tt * dr * dr) / det;
        (-0.5 * q).exp() / (TAU * det.sqrt())
    }

    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = 0.5 * (f(a) + f(b));
        for i in 1..n {
            s += f(a + h * i as f64);
        }
        s * h
    }

    #[test]
    fn peak_of_standard_gaussian() {
        let c = comp(1.0, 0.0, 1.0, Cov2::identity());
        let z = CylindricalSample::at(0.0, 1.0).unwrap();
        let d = sw_gaussian_density(&z, &c, 0).unwrap();
        assert!((d - 1.0 / TAU).abs() < 1e-12);
        assert!((d - 0.1592).abs() < 1e-4);
    }

    #[test]
    fn winding_carries_mass_across_the_boundary() {
        let sigma = Cov2::diag(0.01, 0.04);
        let c = comp(1.0, PI - 0.05, 1.0, sigma);
        let z = CylindricalSample::at(-PI + 0.05, 1.0).unwrap();
        let w0 = sw_gaussian_density(&z, &c, 0).unwrap();
        let w1 = sw_gaussian_density(&z, &c, 1).unwrap();
        // oracle: sum of the three replicas evaluated directly
        let oracle: f64 = (-1..=1)
            .map(|k| bvn(z.theta + TAU * k as f64, 1.0, c.mu_theta, 1.0, &sigma))
            .sum();
        assert!((w1 - oracle).abs() < 1e-12 * oracle.max(1.0));
        assert!(w1 > 1e6 * w0, "w1={w1} w0={w0}");
    }

    #[test]
    fn even_in_theta_with_diagonal_sigma() {
        let c = comp(1.0, 0.0, 1.0, Cov2::diag(0.2, 0.1));
        let a = sw_gaussian_density(&CylindricalSample::at(0.3, 1.2).unwrap(), &c, 1).unwrap();
        let b = sw_gaussian_density(&CylindricalSample::at(-0.3, 1.2).unwrap(), &c, 1).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn mixture_matches_components() {
        let s = Cov2::new(0.1, 0.01, 0.05);
        let one = single(0.5, 1.0, s, 1);
        let z = CylindricalSample::at(0.4, 0.9).unwrap();
        assert_eq!(
            mixture_density(&z, &one),
            sw_gaussian_density(&z, &one.components[0], 1).unwrap()
        );
        let a = comp(0.5, 0.5, 1.0, s);
        let b = comp(0.5, -2.0, 0.4, s);
        let two = SwGmm {
            components: vec![a, b],
            winding: 1,
            sample_count_at_fit: 0,
        };
        let da = sw_gaussian_density(&z, &a, 1).unwrap();
        let db = sw_gaussian_density(&z, &b, 1).unwrap();
        assert!((mixture_density(&z, &two) - 0.5 * (da + db)).abs() < 1e-15);
    }

    #[test]
    fn mixture_integrates_to_one_2d_quadrature() {
        let m = SwGmm {
            components: vec![
                comp(0.3, 3.0, 1.2, Cov2::new(0.2, 0.02, 0.04)),
                comp(0.7, -1.0, 0.8, Cov2::new(0.5, -0.05, 0.02)),
            ],
            winding: 1,
            sample_count_at_fit: 0,
        };
        let n = 400;
        let integral = trapezoid(
            |t| {
                trapezoid(
                    |r| {
                        mixture_density(
                            &CylindricalSample {
                                theta: t,
                                rho: r,
                                timestamp: 0.0,
                            },
                            &m,
                        )
                    },
                    0.0,
                    3.0,
                    n,
                )
            },
            -PI,
            PI,
            n,
        );
        assert!((integral - 1.0).abs() < 1e-2, "integral {integral}");
    }

    #[test]
    fn marginal_peak_closed_form() {
        let m = single(0.0, 1.0, Cov2::diag(0.04, 0.1), 1);
        let v = marginal_direction_density(0.0, &m);
        let expect = 1.0 / (TAU * 0.04).sqrt();
        assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
        assert!((v - 1.9947).abs() < 1e-4);
    }

    #[test]
    fn marginal_is_periodic() {
        let m = single(2.5, 1.0, Cov2::diag(0.3, 0.1), 1);
        let a = marginal_direction_density(-2.9, &m);
        let b = marginal_direction_density(crate::types::wrap_angle(-2.9 + TAU).unwrap(), &m);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn marginal_matches_quadrature_of_joint() {
        // ∫ N_sw dρ over a wide range equals the analytic marginal
        let m = single(1.0, 1.5, Cov2::new(0.3, 0.05, 0.09), 1);
        for &t in &[-3.0, -1.0, 0.5, 1.0, 3.1] {
            let joint = trapezoid(
                |r| {
                    mixture_density(
                        &CylindricalSample {
                            theta: t,
                            rho: r,
                            timestamp: 0.0,
                        },
                        &m,
                    )
                },
                -4.0,
                7.0,
                4000,
            );
            assert!((joint - marginal_direction_density(t, &m)).abs() < 1e-8);
        }
    }

    #[test]
    fn tight_component_fills_its_bin() {
        let bins = 8;
        let width = TAU / bins as f64;
        let mid3 = -PI + 3.5 * width;
        let m = single(mid3, 1.0, Cov2::diag(1e-6, 0.1), 1);
        for b in 0..bins {
            let mass = direction_bin_mass(b, bins, &m);
            if b == 3 {
                assert!((mass - 1.0).abs() < 1e-12);
            } else {
                assert!(mass < 1e-12);
            }
        }
        assert!((direction_bin_mass(0, 1, &m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bin_masses_match_quadrature_and_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let k = rng.random_range(1..=5);
            let mut ws: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = ws.iter().sum();
            ws.iter_mut().for_each(|w| *w /= s);
            let m = SwGmm {
                components: ws
                    .iter()
                    .map(|&w| {
                        comp(
                            w,
                            rng.random_range(-PI..PI),
                            1.0,
                            Cov2::diag(rng.random_range(0.001..1.0), 0.1),
                        )
                    })
                    .collect(),
                winding: 1,
                sample_count_at_fit: 0,
            };
            let bins = 8;
            let masses = m.bin_masses(bins);
            assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            let width = TAU / bins as f64;
            for (b, mass) in masses.iter().enumerate() {
                let lo = -PI + width * b as f64;
                let q = trapezoid(|t| marginal_direction_density(t, &m), lo, lo + width, 4000);
                assert!((q - mass).abs() < 1e-5, "bin {b}: {q} vs {mass}");
            }
        }
    }
}
