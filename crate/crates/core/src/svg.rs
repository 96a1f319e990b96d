//! Plain SVG rendering of planar experiments: body outline, the boundary
//! trace as a colored strip, boundary minima, and interior minimizers.

use std::fmt::Write;

use crate::functions::BoundaryTrace;
use crate::geometry::{sample_boundary, ConvexBody, GeometryError};
use crate::Point;

const SIZE: f64 = 480.0;
const PAD: f64 = 0.12;
const OUTLINE_SAMPLES: usize = 256;

#[derive(Clone, Debug, Default)]
pub struct PlotLayers {
    /// Boundary points marked as minima of the tilted trace.
    pub minima: Vec<Vec<f64>>,
    /// Interior minimizers, one per family member.
    pub interior: Vec<Vec<f64>>,
    /// Minimizer path, e.g. along a λ-sweep.
    pub path: Vec<Vec<f64>>,
    pub title: String,
}

struct Frame {
    lo: [f64; 2],
    scale: f64,
}

impl Frame {
    fn map(&self, x: &[f64]) -> (f64, f64) {
        let u = (x[0] - self.lo[0]) * self.scale;
        let v = SIZE - (x[1] - self.lo[1]) * self.scale;
        (u, v)
    }
}

/// Blue (low) to red (high).
fn heat(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * t).round() as u8;
    let b = (255.0 * (1.0 - t)).round() as u8;
    let g = (255.0 * (1.0 - (2.0 * t - 1.0).abs()) * 0.6).round() as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Renders a bounded planar body with its trace and markers.
pub fn render(body: &ConvexBody, trace: Option<&BoundaryTrace>, layers: &PlotLayers) -> Result<String, GeometryError> {
    if body.dim() != 2 || !body.is_bounded() {
        return Err(GeometryError::Unsupported("plots are drawn for bounded planar bodies".into()));
    }
    let (lo, hi) = body.bounding_box().expect("bounded").clone();
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]) * (1.0 + 2.0 * PAD);
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let frame = Frame { lo: [mid[0] - span / 2.0, mid[1] - span / 2.0], scale: SIZE / span };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if !layers.title.is_empty() {
        let _ = writeln!(out, r#"<title>{}</title>"#, escape(&layers.title));
    }
    let outline = sample_boundary(body, OUTLINE_SAMPLES)?;
    let pts: Vec<String> = outline
        .points()
        .map(|p| {
            let (u, v) = frame.map(p.as_slice());
            format!("{u:.3},{v:.3}")
        })
        .collect();
    let _ = writeln!(out, r##"<polygon points="{}" fill="#f4f4f4" stroke="#333" stroke-width="1"/>"##, pts.join(" "));
    if let Some(t) = trace {
        let (min, max) = t.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let range = if max > min { max - min } else { 1.0 };
        let samples = &t.atlas.samples;
        let _ = writeln!(out, r#"<g stroke-width="6" stroke-linecap="round">"#);
        for k in 0..samples.len() {
            let next = (k + 1) % samples.len();
            if samples[next].chart != samples[k].chart {
                continue;
            }
            let (a, b) = (frame.map(samples[k].x.as_slice()), frame.map(samples[next].x.as_slice()));
            let c = heat((t.values[k] - min) / range);
            let _ = writeln!(
                out,
                r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="{c}"/>"#,
                a.0, a.1, b.0, b.1
            );
        }
        let _ = writeln!(out, "</g>");
    }
    if layers.path.len() >= 2 {
        let pts: Vec<String> = layers
            .path
            .iter()
            .map(|p| {
                let (u, v) = frame.map(p);
                format!("{u:.3},{v:.3}")
            })
            .collect();
        let _ =
            writeln!(out, r##"<polyline points="{}" fill="none" stroke="#2a7" stroke-width="1.5"/>"##, pts.join(" "));
    }
    for p in &layers.interior {
        let (u, v) = frame.map(p);
        let _ = writeln!(out, r##"<circle cx="{u:.3}" cy="{v:.3}" r="2.5" fill="#2a7"/>"##);
    }
    for p in &layers.minima {
        let (u, v) = frame.map(p);
        let _ =
            writeln!(out, r##"<circle cx="{u:.3}" cy="{v:.3}" r="6" fill="none" stroke="black" stroke-width="2"/>"##);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Layer points from solver output.
pub fn point_list(points: &[Point]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.as_slice().to_vec()).collect()
}
