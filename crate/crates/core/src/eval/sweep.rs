//! Resolution sweep and mean-shift ablation over seeded train/test streams.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binding::{DynamicsCell, DynamicsMap};
use crate::error::{Error, Result};
use crate::scene_graph::{Bounds2, LayeredGraph};
use crate::simulator::Detection;
use crate::swgmm::FitMethod;
use crate::system::{DynamicsSystem, Observation, SystemConfig};
use crate::types::Position3;

use super::metrics::{
    histogram_bin_mass, score, swgmm_bin_mass, swgmm_density, DirectionalPredictor, Scores, UniformPredictor,
};
use super::reference::{build_reference, ReferenceMoD};

/// Which per-cell representation answers a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellView {
    /// The fitted mixture; cells without one are uncovered.
    Mixture,
    /// The cell's histogram; empty histograms are uncovered.
    Histogram,
}

/// Looks test positions up through the map's key-to-node ownership.
/// Hash-owned cells count as uncovered.
pub struct MapPredictor<'a> {
    pub map: &'a DynamicsMap,
    pub view: CellView,
}

impl MapPredictor<'_> {
    fn cell(&self, p: &Position3) -> Option<&DynamicsCell> {
        let c = self.map.bound_cell_at(p)?;
        match self.view {
            CellView::Mixture => c.model.as_ref().map(|_| c),
            CellView::Histogram => (c.histogram.total() > 0).then_some(c),
        }
    }
}

impl DirectionalPredictor for MapPredictor<'_> {
    fn density(&self, p: &Position3, theta: f64) -> Option<f64> {
        let c = self.cell(p)?;
        match self.view {
            CellView::Mixture => c.model.as_ref().map(|m| swgmm_density(m, theta)),
            CellView::Histogram => Some(c.histogram.density(theta)),
        }
    }

    fn bin_mass(&self, p: &Position3, bin: usize, bins: usize) -> Option<f64> {
        let c = self.cell(p)?;
        match self.view {
            CellView::Mixture => c.model.as_ref().map(|m| swgmm_bin_mass(m, bin, bins)),
            CellView::Histogram => histogram_bin_mass(&c.histogram, bin, bins),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Mixture fitted by the BIC sweep.
    Swgmm,
    Histogram,
    /// Mixture whose order comes from mean-shift.
    Meanshift,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Swgmm => "swgmm",
            Method::Histogram => "histogram",
            Method::Meanshift => "meanshift",
        }
    }

    fn fitter(self) -> Option<FitMethod> {
        match self {
            Method::Swgmm => Some(FitMethod::Bic),
            Method::Meanshift => Some(FitMethod::MeanShift),
            Method::Histogram => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swgmm" | "bic" => Ok(Method::Swgmm),
            "histogram" => Ok(Method::Histogram),
            "meanshift" | "mean-shift" => Ok(Method::Meanshift),
            other => Err(Error::invalid(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub method: Method,
    pub scores: Scores,
    /// Bound cells that answer queries under this method.
    pub covered_cells: usize,
    /// Mean component count over covered cells; mixtures only.
    pub mean_k: Option<f64>,
    /// `k_counts[k - 1]` covered cells with `k` components; mixtures only.
    pub k_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub resolution: f64,
    pub bins: usize,
    pub uniform: Scores,
    /// Reference map scored on its own training data; absent without training data.
    pub reference: Option<Scores>,
    pub methods: Vec<MethodScores>,
}

impl EvalReport {
    pub fn method(&self, m: Method) -> Option<&MethodScores> {
        self.methods.iter().find(|s| s.method == m)
    }
}

/// Scores one already-fitted map: its mixtures under the label of the fitter
/// that produced them, and its histograms. The reference map is scored on
/// `train` when given.
pub fn evaluate_map(
    map: &DynamicsMap,
    test: &[Detection],
    bins: usize,
    fitted_by: FitMethod,
    k_max: usize,
    train: Option<&[Detection]>,
) -> Result<EvalReport> {
    let label = match fitted_by {
        FitMethod::Bic => Method::Swgmm,
        FitMethod::MeanShift => Method::Meanshift,
    };
    let reference = match train {
        Some(t) if !t.is_empty() => Some(score(t, &build_reference(t, bins)?, bins)?),
        _ => None,
    };
    Ok(EvalReport {
        resolution: map.resolution(),
        bins,
        uniform: score(test, &UniformPredictor, bins)?,
        reference,
        methods: vec![
            method_scores(map, test, bins, label, CellView::Mixture, k_max)?,
            method_scores(map, test, bins, Method::Histogram, CellView::Histogram, k_max)?,
        ],
    })
}

fn method_scores(
    map: &DynamicsMap,
    test: &[Detection],
    bins: usize,
    method: Method,
    view: CellView,
    k_max: usize,
) -> Result<MethodScores> {
    let pred = MapPredictor { map, view };
    let scores = score(test, &pred, bins)?;
    let bound: Vec<&DynamicsCell> = map
        .cells()
        .filter(|c| matches!(c.owner, crate::binding::Owner::NodeBound(_)))
        .collect();
    let (covered_cells, mean_k, k_counts) = match view {
        CellView::Histogram => (bound.iter().filter(|c| c.histogram.total() > 0).count(), None, vec![]),
        CellView::Mixture => {
            let ks: Vec<usize> = bound.iter().filter_map(|c| c.model.as_ref().map(|m| m.k())).collect();
            let mut counts = vec![0usize; k_max.max(ks.iter().copied().max().unwrap_or(0))];
            for &k in &ks {
                counts[k - 1] += 1;
            }
            let mean = (!ks.is_empty()).then(|| ks.iter().sum::<usize>() as f64 / ks.len() as f64);
            (ks.len(), mean, counts)
        }
    };
    Ok(MethodScores {
        method,
        scores,
        covered_cells,
        mean_k,
        k_counts,
    })
}

/// Settings shared by sweeps and ablations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub bounds: Bounds2,
    pub system: SystemConfig,
    /// Seed for reservoir and merge draws during ingestion.
    pub ingest_seed: u64,
    /// Bins used for MPP.
    pub bins: usize,
}

/// Ingests `train` into a fresh system at `resolution` and binds every cell.
/// Nothing is fitted yet.
pub fn prepare(train: &[Detection], resolution: f64, cfg: &ExperimentConfig) -> Result<DynamicsSystem> {
    let graph = LayeredGraph::build_nav_layer(&cfg.bounds, resolution)?;
    let mut sys_cfg = cfg.system.clone();
    sys_cfg.map.resolution = resolution;
    let mut sys = DynamicsSystem::new(graph, sys_cfg, cfg.ingest_seed)?;
    let mut end = 0.0f64;
    for d in train {
        sys.observe(&Observation {
            position: d.position,
            sample: d.sample(),
        })?;
        end = end.max(d.time);
    }
    sys.bind(end)?;
    Ok(sys)
}

/// Clones the prepared system and fits it with `method`.
fn fitted(base: &DynamicsSystem, method: FitMethod) -> Result<(DynamicsSystem, Vec<f64>)> {
    let mut sys = base.clone();
    let now = sys.map.last_update().unwrap_or(0.0);
    let stats = sys.fit_all(method, now)?;
    if stats.failures > 0 {
        log::warn!("{} cell fits failed with {}", stats.failures, method.name());
    }
    Ok((sys, stats.fit_seconds))
}

fn evaluate_resolution(
    train: &[Detection],
    test: &[Detection],
    resolution: f64,
    methods: &[Method],
    cfg: &ExperimentConfig,
    reference: Option<Scores>,
) -> Result<EvalReport> {
    let base = prepare(train, resolution, cfg)?;
    let k_max = cfg.system.fit.k_max;
    let mut out = Vec::new();
    for &m in methods {
        let s = match m.fitter() {
            Some(f) => {
                let (sys, _) = fitted(&base, f)?;
                method_scores(&sys.map, test, cfg.bins, m, CellView::Mixture, k_max)?
            }
            None => method_scores(&base.map, test, cfg.bins, m, CellView::Histogram, k_max)?,
        };
        out.push(s);
    }
    Ok(EvalReport {
        resolution,
        bins: cfg.bins,
        uniform: score(test, &UniformPredictor, cfg.bins)?,
        reference,
        methods: out,
    })
}

/// One report per resolution, in the order given. Resolutions run in parallel.
pub fn resolution_sweep(
    train: &[Detection],
    test: &[Detection],
    resolutions: &[f64],
    methods: &[Method],
    cfg: &ExperimentConfig,
) -> Result<Vec<EvalReport>> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("sweep needs non-empty train and test streams"));
    }
    let reference: ReferenceMoD = build_reference(train, cfg.bins)?;
    let ref_scores = score(train, &reference, cfg.bins)?;
    resolutions
        .par_iter()
        .map(|&r| evaluate_resolution(train, test, r, methods, cfg, Some(ref_scores.clone())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub resolution: f64,
    pub bic: MethodScores,
    pub meanshift: MethodScores,
    /// Per-cell fit wall times, seconds. Not deterministic.
    #[serde(skip)]
    pub bic_fit_seconds: Vec<f64>,
    #[serde(skip)]
    pub meanshift_fit_seconds: Vec<f64>,
}

/// BIC sweep against mean-shift order selection on identical buffers and seeds.
pub fn ablation(
    train: &[Detection],
    test: &[Detection],
    resolution: f64,
    cfg: &ExperimentConfig,
) -> Result<AblationReport> {
    let base = prepare(train, resolution, cfg)?;
    let k_max = cfg.system.fit.k_max;
    let (bic_sys, bic_t) = fitted(&base, FitMethod::Bic)?;
    let (ms_sys, ms_t) = fitted(&base, FitMethod::MeanShift)?;
    Ok(AblationReport {
        resolution,
        bic: method_scores(&bic_sys.map, test, cfg.bins, Method::Swgmm, CellView::Mixture, k_max)?,
        meanshift: method_scores(&ms_sys.map, test, cfg.bins, Method::Meanshift, CellView::Mixture, k_max)?,
        bic_fit_seconds: bic_t,
        meanshift_fit_seconds: ms_t,
    })
}

/// Fraction of covered cells with exactly one component.
pub fn fraction_k1(s: &MethodScores) -> Option<f64> {
    let total: usize = s.k_counts.iter().sum();
    (total > 0).then(|| s.k_counts[0] as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binding::MapParams;
    use crate::simulator::{generate, FlowScenario};

    fn cfg(bounds: Bounds2) -> ExperimentConfig {
        ExperimentConfig {
            bounds,
            system: SystemConfig {
                map: MapParams::default(),
                ..SystemConfig::default()
            },
            ingest_seed: 3,
            bins: 8,
        }
    }

    #[test]
    fn small_sweep_is_consistent() {
        let mut sc = FlowScenario::multimodal();
        sc.duration = 200.0;
        let train = generate(&sc).unwrap();
        let test = generate(&sc.with_seed(1)).unwrap();
        let c = cfg(sc.bounds);
        let reports = resolution_sweep(&train, &test, &[0.5, 1.0], &[Method::Swgmm, Method::Histogram], &c).unwrap();
        assert_eq!(reports.len(), 2);
        for r in &reports {
            assert_eq!(r.uniform.mpp_overall, 0.125);
            for m in &r.methods {
                let s = &m.scores;
                let cov = s.mpp_covered.unwrap();
                let expect = s.coverage_fraction * cov + (1.0 - s.coverage_fraction) * 0.125;
                assert!((s.mpp_overall - expect).abs() < 1e-15);
                assert!((0.0..=1.0).contains(&s.mpp_overall));
            }
        }
        let again = resolution_sweep(&train, &test, &[0.5, 1.0], &[Method::Swgmm, Method::Histogram], &c).unwrap();
        assert_eq!(reports, again);
    }

    #[test]
    fn evaluated_bin_masses_sum_to_one() {
        // fitted cells may have σ_θθ > 1, where the raw truncated sum loses mass
        let mut sc = FlowScenario::multimodal();
        sc.duration = 120.0;
        let train = generate(&sc).unwrap();
        let c = cfg(sc.bounds);
        let (sys, _) = fitted(&prepare(&train, 0.5, &c).unwrap(), FitMethod::Bic).unwrap();
        let mut n = 0;
        for cell in sys.map.cells() {
            if let Some(m) = &cell.model {
                let s: f64 = (0..8).map(|b| swgmm_bin_mass(m, b, 8)).sum();
                assert!((s - 1.0).abs() < 1e-6);
                n += 1;
            }
        }
        assert!(n > 0);
    }
}
