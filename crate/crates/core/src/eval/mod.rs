//! Scoring fitted maps against held-out detections.

pub mod metrics;
pub mod reference;
pub mod report;
pub mod svg;
pub mod sweep;

pub use metrics::{mlpd, mpp, score, DirectionalPredictor, Scores, UniformPredictor};
pub use reference::{build_reference, ReferenceMoD, REFERENCE_RESOLUTION};
pub use report::{format_ablation, format_reports, write_report_files};
pub use svg::{export_svg, render_svg, SvgOptions};
pub use sweep::{
    ablation, evaluate_map, fraction_k1, prepare, resolution_sweep, AblationReport, CellView, EvalReport,
    ExperimentConfig, MapPredictor, Method, MethodScores,
};
