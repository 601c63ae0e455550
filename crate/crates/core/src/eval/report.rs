//! Fixed-precision text reports and CSV mirrors.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::metrics::Scores;
use super::sweep::{fraction_k1, AblationReport, EvalReport, MethodScores};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
}

fn scores_block(out: &mut String, s: &Scores) {
    let _ = writeln!(out, "  n_test             {}", s.n_test);
    let _ = writeln!(out, "  covered_points     {}", s.covered_points);
    let _ = writeln!(out, "  coverage_fraction  {:.6}", s.coverage_fraction);
    let _ = writeln!(out, "  mlpd_overall       {:.6}", s.mlpd_overall);
    let _ = writeln!(out, "  mlpd_covered       {}", opt(s.mlpd_covered));
    let _ = writeln!(out, "  mpp_overall        {:.6}", s.mpp_overall);
    let _ = writeln!(out, "  mpp_covered        {}", opt(s.mpp_covered));
}

fn method_block(out: &mut String, m: &MethodScores) {
    scores_block(out, &m.scores);
    let _ = writeln!(out, "  covered_cells      {}", m.covered_cells);
    if let Some(k) = m.mean_k {
        let _ = writeln!(out, "  mean_k             {k:.6}");
        let counts: Vec<String> = m.k_counts.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "  k_counts           {}", counts.join(","));
    }
}

/// One section per resolution and method, fixed field order.
pub fn format_reports(reports: &[EvalReport]) -> String {
    let mut out = String::from("# flowdyn evaluation report v1\n");
    for r in reports {
        let _ = writeln!(out, "\n[resolution {:.3} m, bins {}]", r.resolution, r.bins);
        let _ = writeln!(out, "uniform");
        scores_block(&mut out, &r.uniform);
        if let Some(reference) = &r.reference {
            let _ = writeln!(out, "reference (0.1 m grid, own training data)");
            scores_block(&mut out, reference);
        }
        for m in &r.methods {
            let _ = writeln!(out, "{}", m.method.name());
            method_block(&mut out, m);
        }
    }
    out
}

pub fn format_ablation(a: &AblationReport) -> String {
    let mut out = format!("# flowdyn ablation report v1\n\n[resolution {:.3} m]\n", a.resolution);
    for m in [&a.bic, &a.meanshift] {
        let _ = writeln!(out, "{}", m.method.name());
        method_block(&mut out, m);
        let _ = writeln!(out, "  fraction_k1        {}", opt(fraction_k1(m)));
    }
    out
}

fn csv_table(reports: &[EvalReport], pick: impl Fn(&Scores) -> (String, String)) -> String {
    let mut out = String::from("resolution,method,overall,covered\n");
    for r in reports {
        let rows = std::iter::once(("uniform", &r.uniform))
            .chain(r.reference.as_ref().map(|s| ("reference", s)))
            .chain(r.methods.iter().map(|m| (m.method.name(), &m.scores)));
        for (name, s) in rows {
            let (a, b) = pick(s);
            let _ = writeln!(out, "{:.3},{name},{a},{b}", r.resolution);
        }
    }
    out
}

pub fn mlpd_csv(reports: &[EvalReport]) -> String {
    csv_table(reports, |s| (format!("{:.6}", s.mlpd_overall), opt(s.mlpd_covered)))
}

pub fn mpp_csv(reports: &[EvalReport]) -> String {
    csv_table(reports, |s| (format!("{:.6}", s.mpp_overall), opt(s.mpp_covered)))
}

pub fn coverage_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("resolution,method,covered_points,n_test,coverage_fraction,covered_cells,mean_k\n");
    for r in reports {
        for m in &r.methods {
            let _ = writeln!(
                out,
                "{:.3},{},{},{},{:.6},{},{}",
                r.resolution,
                m.method.name(),
                m.scores.covered_points,
                m.scores.n_test,
                m.scores.coverage_fraction,
                m.covered_cells,
                opt(m.mean_k)
            );
        }
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `report.txt`, `mlpd.csv`, `mpp.csv` and `coverage.csv` into `dir`.
pub fn write_report_files(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("report.txt"), &format_reports(reports))?;
    write(&dir.join("mlpd.csv"), &mlpd_csv(reports))?;
    write(&dir.join("mpp.csv"), &mpp_csv(reports))?;
    write(&dir.join("coverage.csv"), &coverage_csv(reports))
}
