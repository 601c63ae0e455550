//! Flow-arrow maps: one arrow per mixture component per bound node.

use std::fmt::Write as _;
use std::path::Path;

use crate::binding::{DynamicsMap, Owner};
use crate::error::{Error, Result};
use crate::scene_graph::LayeredGraph;

/// Colors by component count, K = 1..=5.
pub const K_COLORS: [&str; 5] = ["#d62728", "#2ca02c", "#e6c700", "#9467bd", "#404040"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvgOptions {
    pub pixels_per_meter: f64,
    /// Arrow length per m/s of mean speed, as a fraction of the cell size.
    pub length_per_speed: f64,
    /// Stroke width at weight 1, as a fraction of the cell size.
    pub max_width: f64,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self {
            pixels_per_meter: 40.0,
            length_per_speed: 0.6,
            max_width: 0.12,
        }
    }
}

fn color(k: usize) -> &'static str {
    K_COLORS[k.clamp(1, K_COLORS.len()) - 1]
}

/// Renders every bound node with a fitted model. Fails when there is none.
pub fn render_svg(map: &DynamicsMap, graph: &LayeredGraph, opts: &SvgOptions) -> Result<String> {
    let delta = map.resolution();
    let mut arrows = Vec::new();
    for cell in map.cells() {
        let (Owner::NodeBound(id), Some(model)) = (cell.owner, cell.model.as_ref()) else {
            continue;
        };
        let Some(node) = graph.node(id) else { continue };
        arrows.push((node.position, model));
    }
    if arrows.is_empty() {
        return Err(Error::invalid("no fitted node-bound cells to export"));
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (p, _) in &arrows {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let margin = 2.0 * delta;
    let s = opts.pixels_per_meter;
    let w = (x1 - x0 + 2.0 * margin) * s;
    let h = (y1 - y0 + 2.0 * margin) * s;
    let legend_h = 20.0 * K_COLORS.len() as f64 + 10.0;
    let px = |x: f64| (x - x0 + margin) * s;
    // SVG y grows downward
    let py = |y: f64| (y1 + margin - y) * s;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.1}" height="{:.1}" viewBox="0 0 {:.1} {:.1}">"#,
        w,
        h + legend_h,
        w,
        h + legend_h
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for (p, model) in &arrows {
        let k = model.k();
        for c in &model.components {
            let len = opts.length_per_speed * delta * c.mu_rho * s;
            let (dx, dy) = (c.mu_theta.cos(), -c.mu_theta.sin());
            let (ax, ay) = (px(p.x), py(p.y));
            let (bx, by) = (ax + dx * len, ay + dy * len);
            let width = (opts.max_width * delta * s * c.weight).max(0.5);
            let head = 3.0 * width;
            let (hx, hy) = (bx - dx * head, by - dy * head);
            let (nx, ny) = (-dy * head * 0.5, dx * head * 0.5);
            let opacity = 0.25 + 0.75 * c.weight;
            let _ = writeln!(
                out,
                r#"<g class="arrow" data-k="{k}" stroke="{col}" fill="{col}" opacity="{opacity:.3}"><line x1="{ax:.2}" y1="{ay:.2}" x2="{hx:.2}" y2="{hy:.2}" stroke-width="{width:.3}"/><polygon points="{bx:.2},{by:.2} {:.2},{:.2} {:.2},{:.2}" stroke="none"/></g>"#,
                hx + nx,
                hy + ny,
                hx - nx,
                hy - ny,
                col = color(k),
            );
        }
    }
    for (i, col) in K_COLORS.iter().enumerate() {
        let y = h + 15.0 + 20.0 * i as f64;
        let label = if i + 1 == K_COLORS.len() {
            format!("K={} (and above)", i + 1)
        } else {
            format!("K={}", i + 1)
        };
        let _ = writeln!(
            out,
            r#"<g class="legend"><rect x="10" y="{:.1}" width="14" height="14" fill="{col}"/><text x="30" y="{:.1}" font-size="12" font-family="sans-serif">{label}</text></g>"#,
            y - 11.0,
            y
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn export_svg(map: &DynamicsMap, graph: &LayeredGraph, path: &Path, opts: &SvgOptions) -> Result<()> {
    let text = render_svg(map, graph, opts)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
