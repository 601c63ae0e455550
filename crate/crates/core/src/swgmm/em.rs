use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::types::{angular_diff_unchecked, wrap_unchecked, CylindricalSample};

use super::{Cov2, FitConfig, PreparedGaussian, SwComponent, SwGmm};

/// Components whose total responsibility falls below this are dropped.
const COLLAPSE_MASS: f64 = 1e-12;

/// Result of one EM run.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: SwGmm,
    /// Total semi-wrapped log-likelihood of `model` on the samples.
    pub loglik: f64,
    /// Number of M-steps performed.
    pub iters: usize,
    /// M-steps where covariance regularization changed a matrix.
    pub clamped_iters: usize,
    /// Log-likelihood before each M-step, then the final value.
    pub loglik_trace: Vec<f64>,
}

/// Refines a `k`-component semi-wrapped mixture from hard initial labels.
///
/// Responsibilities are normalized jointly over `(component, winding replica)`.
/// The angular mean is the responsibility-weighted mean of the shifted samples
/// `θ + 2πw`, wrapped after the update; the scatter is taken around the
/// unwrapped mean so the replica that explains each sample is used
/// consistently.
pub fn em_fit(samples: &[CylindricalSample], k: usize, init_labels: &[usize], cfg: &FitConfig) -> Result<EmFit> {
    cfg.validate()?;
    let n = samples.len();
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if n < k * cfg.min_samples_per_component {
        return Err(Error::invalid(format!(
            "{n} samples cannot support {k} components (min {} each)",
            cfg.min_samples_per_component
        )));
    }
    if init_labels.len() != n || init_labels.iter().any(|&l| l >= k) {
        return Err(Error::invalid("init_labels must assign each sample to 0..k"));
    }

    let mut comps = init_from_labels(samples, k, init_labels, cfg);
    if comps.is_empty() {
        return Err(Error::FitFailure("every initial cluster was empty".into()));
    }

    let winding = cfg.winding as i64;
    let replicas = (2 * winding + 1) as usize;
    let mut resp = Vec::new();
    let mut trace = Vec::new();
    let mut iters = 0;
    let mut clamped_iters = 0;

    let mut ll = e_step(samples, &comps, winding, &mut resp)?;
    trace.push(ll);
    loop {
        if iters >= cfg.em_max_iters {
            break;
        }
        let clamped = m_step(samples, &mut comps, replicas, winding, &resp, cfg)?;
        iters += 1;
        if clamped {
            clamped_iters += 1;
        }
        let next = e_step(samples, &comps, winding, &mut resp)?;
        trace.push(next);
        let delta = (next - ll).abs();
        ll = next;
        if delta < cfg.em_loglik_tol {
            break;
        }
    }

    let model = SwGmm {
        components: comps,
        winding: cfg.winding,
        sample_count_at_fit: n,
    };
    Ok(EmFit {
        model,
        loglik: ll,
        iters,
        clamped_iters,
        loglik_trace: trace,
    })
}

/// Hard-assignment M-step: each cluster is unwrapped around its circular mean.
fn init_from_labels(samples: &[CylindricalSample], k: usize, labels: &[usize], cfg: &FitConfig) -> Vec<SwComponent> {
    let n = samples.len() as f64;
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let members: Vec<&CylindricalSample> = samples
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == c)
            .map(|(z, _)| z)
            .collect();
        if members.is_empty() {
            continue;
        }
        let (s, co) = members
            .iter()
            .fold((0.0, 0.0), |(s, c), z| (s + z.theta.sin(), c + z.theta.cos()));
        let reference = if s.hypot(co) > 1e-12 {
            s.atan2(co)
        } else {
            members[0].theta
        };
        let m = members.len() as f64;
        let unwrapped: Vec<(f64, f64)> = members
            .iter()
            .map(|z| (reference + angular_diff_unchecked(z.theta, reference), z.rho))
            .collect();
        let mt = unwrapped.iter().map(|u| u.0).sum::<f64>() / m;
        let mr = unwrapped.iter().map(|u| u.1).sum::<f64>() / m;
        let mut cov = Cov2::new(0.0, 0.0, 0.0);
        for (t, r) in &unwrapped {
            let dt = t - mt;
            let dr = r - mr;
            cov.tt += dt * dt;
            cov.tr += dt * dr;
            cov.rr += dr * dr;
        }
        cov.tt /= m;
        cov.tr /= m;
        cov.rr /= m;
        cov.regularize(cfg.cov_floor, cfg.cs_epsilon);
        out.push(SwComponent {
            weight: m / n,
            mu_theta: wrap_unchecked(mt),
            mu_rho: mr,
            sigma: cov,
        });
    }
    out
}

/// Fills `resp` with joint responsibilities and returns the total log-likelihood.
fn e_step(samples: &[CylindricalSample], comps: &[SwComponent], winding: i64, resp: &mut Vec<f64>) -> Result<f64> {
    let replicas = (2 * winding + 1) as usize;
    let stride = comps.len() * replicas;
    resp.clear();
    resp.resize(samples.len() * stride, 0.0);

    // inverse and normalizer computed once, reused for all n·(2W+1) evaluations
    let prepared = comps
        .iter()
        .map(|c| Ok((c.weight.ln(), c.prepare()?)))
        .collect::<Result<Vec<(f64, PreparedGaussian)>>>()?;

    let mut total = 0.0;
    for (j, z) in samples.iter().enumerate() {
        let row = &mut resp[j * stride..(j + 1) * stride];
        let mut max = f64::NEG_INFINITY;
        for (ki, (ln_w, g)) in prepared.iter().enumerate() {
            for wi in 0..replicas {
                let shift = TAU * (wi as i64 - winding) as f64;
                let l = ln_w + g.log_pdf(z.theta + shift, z.rho);
                row[ki * replicas + wi] = l;
                if l > max {
                    max = l;
                }
            }
        }
        if !max.is_finite() {
            return Err(Error::NumericalDegeneracy(
                "sample has zero likelihood under every component".into(),
            ));
        }
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
        total += max + sum.ln();
    }
    Ok(total)
}

/// Weighted update of every component; drops collapsed ones. Returns true if any
/// covariance needed regularization.
fn m_step(
    samples: &[CylindricalSample],
    comps: &mut Vec<SwComponent>,
    replicas: usize,
    winding: i64,
    resp: &[f64],
    cfg: &FitConfig,
) -> Result<bool> {
    let k = comps.len();
    let stride = k * replicas;
    let mut clamped = false;
    let mut next = Vec::with_capacity(k);
    let mut masses = Vec::with_capacity(k);

    for ki in 0..k {
        let mut nk = 0.0;
        let mut st = 0.0;
        let mut sr = 0.0;
        for (j, z) in samples.iter().enumerate() {
            let row = &resp[j * stride + ki * replicas..j * stride + (ki + 1) * replicas];
            for (wi, r) in row.iter().enumerate() {
                let shift = TAU * (wi as i64 - winding) as f64;
                nk += r;
                st += r * (z.theta + shift);
                sr += r * z.rho;
            }
        }
        if nk < COLLAPSE_MASS {
            continue;
        }
        let mt = st / nk;
        let mr = sr / nk;
        let mut cov = Cov2::new(0.0, 0.0, 0.0);
        for (j, z) in samples.iter().enumerate() {
            let row = &resp[j * stride + ki * replicas..j * stride + (ki + 1) * replicas];
            for (wi, r) in row.iter().enumerate() {
                let shift = TAU * (wi as i64 - winding) as f64;
                let dt = z.theta + shift - mt;
                let dr = z.rho - mr;
                cov.tt += r * dt * dt;
                cov.tr += r * dt * dr;
                cov.rr += r * dr * dr;
            }
        }
        cov.tt /= nk;
        cov.tr /= nk;
        cov.rr /= nk;
        clamped |= cov.regularize(cfg.cov_floor, cfg.cs_epsilon);
        masses.push(nk);
        next.push(SwComponent {
            weight: 0.0,
            mu_theta: wrap_unchecked(mt),
            mu_rho: mr,
            sigma: cov,
        });
    }
    if next.is_empty() {
        return Err(Error::FitFailure("all components collapsed".into()));
    }
    let total: f64 = masses.iter().sum();
    for (c, m) in next.iter_mut().zip(&masses) {
        c.weight = m / total;
    }
    *comps = next;
    Ok(clamped)
}
